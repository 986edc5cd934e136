//! Node identities, positions and the default two-RAT deployment.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{self, PathLossModel, RadioParams};

/// Positions closer than this are clamped for path-loss purposes.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rat {
    Lte,
    Wlan,
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rat::Lte => f.write_str("lte"),
            Rat::Wlan => f.write_str("wlan"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    LteDbs,
    WlanDbs,
    Gateway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u16,
}

impl NodeId {
    pub const fn lte(index: u16) -> Self {
        Self {
            kind: NodeKind::LteDbs,
            index,
        }
    }

    pub const fn wlan(index: u16) -> Self {
        Self {
            kind: NodeKind::WlanDbs,
            index,
        }
    }

    pub const fn gateway(index: u16) -> Self {
        Self {
            kind: NodeKind::Gateway,
            index,
        }
    }

    /// RAT served by this node, `None` for gateways.
    pub fn rat(self) -> Option<Rat> {
        match self.kind {
            NodeKind::LteDbs => Some(Rat::Lte),
            NodeKind::WlanDbs => Some(Rat::Wlan),
            NodeKind::Gateway => None,
        }
    }

    pub fn is_dbs(self) -> bool {
        self.rat().is_some()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            NodeKind::LteDbs => "lte",
            NodeKind::WlanDbs => "wlan",
            NodeKind::Gateway => "gw",
        };
        write!(f, "{prefix}{}", self.index)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_m(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Distance in km, clamped to [`MIN_DISTANCE_M`].
    pub fn path_distance_km(&self, other: &Point) -> f64 {
        self.distance_m(other).max(MIN_DISTANCE_M) / 1000.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("topology has no gateway")]
    NoGateway,
    #[error("dBS {0} needs a positive coverage range")]
    BadRange(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDescriptor {
    pub id: NodeId,
    pub position: Point,
    /// Coverage radius in meters (dBS only).
    pub range_m: f64,
    pub tx_power_dbm: f64,
    /// Mbps the node can carry; the basis for slice shares.
    pub capacity_mbps: f64,
}

impl NodeDescriptor {
    pub fn covers(&self, p: &Point) -> bool {
        self.id.is_dbs() && self.position.distance_m(p) <= self.range_m
    }

    pub fn rx_power_dbm(&self, model: &PathLossModel, p: &Point) -> f64 {
        model
            .rx_power_dbm(self.tx_power_dbm, self.position.path_distance_km(p))
            .expect("clamped distance is positive")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeId, NodeDescriptor>,
    pub path_loss: PathLossModel,
}

impl Topology {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeDescriptor>,
        path_loss: PathLossModel,
    ) -> Result<Self, TopologyError> {
        let mut map = BTreeMap::new();
        for n in nodes {
            if n.id.is_dbs() && !(n.range_m > 0.0) {
                return Err(TopologyError::BadRange(n.id));
            }
            if map.insert(n.id, n.clone()).is_some() {
                return Err(TopologyError::DuplicateNode(n.id));
            }
        }
        if !map.keys().any(|id| id.kind == NodeKind::Gateway) {
            return Err(TopologyError::NoGateway);
        }
        Ok(Self {
            nodes: map,
            path_loss,
        })
    }

    /// One LTE dBS at the origin (1.5 km range), one WLAN dBS 200 m away
    /// (100 m range) and one gateway.
    pub fn two_rat(radio: &RadioParams) -> Self {
        Self::two_rat_with(radio, Point::new(200.0, 0.0), 1500.0, 100.0)
    }

    pub fn two_rat_with(radio: &RadioParams, wlan_at: Point, lte_range_m: f64, wlan_range_m: f64) -> Self {
        let nodes = [
            NodeDescriptor {
                id: NodeId::lte(0),
                position: Point::new(0.0, 0.0),
                range_m: lte_range_m,
                tx_power_dbm: radio.lte_tx_power,
                capacity_mbps: radio.lte_cell_capacity,
            },
            NodeDescriptor {
                id: NodeId::wlan(0),
                position: wlan_at,
                range_m: wlan_range_m,
                tx_power_dbm: radio.wlan_tx_power,
                capacity_mbps: radio::wlan_effective_capacity(radio),
            },
            NodeDescriptor {
                id: NodeId::gateway(0),
                position: Point::new(0.0, 0.0),
                range_m: 0.0,
                tx_power_dbm: 0.0,
                capacity_mbps: f64::INFINITY,
            },
        ];
        Self::new(nodes, PathLossModel::default()).expect("static topology is valid")
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeDescriptor, TopologyError> {
        self.nodes.get(&id).ok_or(TopologyError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values()
    }

    pub fn dbs_nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values().filter(|n| n.id.is_dbs())
    }

    /// First gateway by id.
    pub fn gateway(&self) -> NodeId {
        *self
            .nodes
            .keys()
            .find(|id| id.kind == NodeKind::Gateway)
            .expect("validated at construction")
    }

    /// dBSs covering `p`, in id order.
    pub fn covering(&self, p: &Point) -> Vec<NodeId> {
        self.dbs_nodes().filter(|n| n.covers(p)).map(|n| n.id).collect()
    }

    pub fn first_of(&self, rat: Rat) -> Option<NodeId> {
        self.dbs_nodes().map(|n| n.id).find(|id| id.rat() == Some(rat))
    }

    /// Received power at `p` from every dBS covering it.
    pub fn signals_at(&self, p: &Point) -> Vec<(NodeId, f64)> {
        self.dbs_nodes()
            .filter(|n| n.covers(p))
            .map(|n| (n.id, n.rx_power_dbm(&self.path_loss, p)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_topology() {
        let t = Topology::two_rat(&RadioParams::default());
        assert_eq!(t.gateway(), NodeId::gateway(0));
        let inside_wlan = Point::new(210.0, 10.0);
        assert_eq!(t.covering(&inside_wlan), vec![NodeId::lte(0), NodeId::wlan(0)]);
        assert_eq!(t.covering(&Point::new(1000.0, 0.0)), vec![NodeId::lte(0)]);
        assert!(t.covering(&Point::new(3000.0, 0.0)).is_empty());
        assert!((t.node(NodeId::wlan(0)).unwrap().capacity_mbps - 29.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_topologies() {
        let radio = RadioParams::default();
        let t = Topology::two_rat(&radio);
        let lte = t.node(NodeId::lte(0)).unwrap().clone();
        assert_eq!(
            Topology::new([lte.clone()], PathLossModel::default()).unwrap_err(),
            TopologyError::NoGateway
        );
        let gw = t.node(NodeId::gateway(0)).unwrap().clone();
        assert_eq!(
            Topology::new([lte.clone(), lte.clone(), gw], PathLossModel::default()).unwrap_err(),
            TopologyError::DuplicateNode(NodeId::lte(0))
        );
    }

    #[test]
    fn signal_at_one_km() {
        let t = Topology::two_rat(&RadioParams::default());
        let p = Point::new(1000.0, 0.0);
        let s = t.signals_at(&p);
        assert_eq!(s.len(), 1);
        assert!((s[0].1 - -82.1).abs() < 1e-9);
    }
}
