//! Control-message trace: one record per message, written as tab-separated
//! `time kind src dst ue` lines.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use super::messages::{ControllerFn, Endpoint, MessageKind};
use crate::sim::SimTime;
use crate::topology::{NodeId, NodeKind, Rat};
use crate::types::{MsgId, UeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    Message(MessageKind),
    /// The abstract authentication step; not a message on the wire.
    AuthTransition,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceKind::Message(k) => write!(f, "{k}"),
            TraceKind::AuthTransition => f.write_str("AuthTransition"),
        }
    }
}

impl FromStr for TraceKind {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "AuthTransition" {
            return Ok(TraceKind::AuthTransition);
        }
        MessageKind::from_name(s)
            .map(TraceKind::Message)
            .ok_or_else(|| TraceError::Field(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: TraceKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub ue: Option<UeId>,
    /// Message id; kept in memory only, not part of the file format.
    pub id: Option<MsgId>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}\t{}\t{}\t{}\t", self.time, self.kind, self.src, self.dst)?;
        match self.ue {
            Some(ue) => write!(f, "{ue}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("line {line}: expected 5 tab-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("unrecognised field {0:?}")]
    Field(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<TraceError>,
    },
}

fn parse_index(s: &str, prefix: &str) -> Option<u32> {
    s.strip_prefix(prefix)?.parse().ok()
}

fn parse_node(s: &str) -> Option<NodeId> {
    for (prefix, kind) in [
        ("lte", NodeKind::LteDbs),
        ("wlan", NodeKind::WlanDbs),
        ("gw", NodeKind::Gateway),
    ] {
        if let Some(i) = parse_index(s, prefix) {
            return Some(NodeId {
                kind,
                index: u16::try_from(i).ok()?,
            });
        }
    }
    None
}

pub fn parse_endpoint(s: &str) -> Result<Endpoint, TraceError> {
    let bad = || TraceError::Field(s.to_owned());
    if let Some(f) = s.strip_prefix("ctrl:") {
        let func = match f {
            "dcif" => ControllerFn::Dcif,
            "fcf" => ControllerFn::Fcf,
            "acpf" => ControllerFn::Acpf,
            "raf-lte" => ControllerFn::Raf(Rat::Lte),
            "raf-wlan" => ControllerFn::Raf(Rat::Wlan),
            _ => return Err(bad()),
        };
        return Ok(Endpoint::Controller(func));
    }
    if let Some(i) = parse_index(s, "ue") {
        return Ok(Endpoint::Ue(UeId(i)));
    }
    parse_node(s).map(Endpoint::Node).ok_or_else(bad)
}

pub fn write_tsv<W: Write>(records: &[TraceRecord], mut w: W) -> io::Result<()> {
    for r in records {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

pub fn to_tsv(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_tsv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("trace is ASCII")
}

pub fn parse_tsv(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let line_no = i + 1;
        let wrap = |e: TraceError| TraceError::Line {
            line: line_no,
            source: Box::new(e),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(TraceError::FieldCount {
                line: line_no,
                got: fields.len(),
            });
        }
        let time = fields[0]
            .parse::<f64>()
            .map_err(|_| wrap(TraceError::Field(fields[0].to_owned())))?;
        let ue = match fields[4] {
            "-" => None,
            s => Some(UeId(
                parse_index(s, "ue").ok_or_else(|| wrap(TraceError::Field(s.to_owned())))?,
            )),
        };
        out.push(TraceRecord {
            time,
            kind: fields[1].parse().map_err(wrap)?,
            src: parse_endpoint(fields[2]).map_err(wrap)?,
            dst: parse_endpoint(fields[3]).map_err(wrap)?,
            ue,
            id: None,
        });
    }
    Ok(out)
}

/// Expected association sequence for a fresh UE on `rat`.
pub fn association_sequence(rat: Rat) -> [TraceKind; 9] {
    use MessageKind as K;
    let (request, setup) = match rat {
        Rat::Lte => (K::RrcConnectionRequest, K::RrcConnectionSetup),
        Rat::Wlan => (K::WlanAssocRequest, K::WlanAssocResponse),
    };
    [
        TraceKind::Message(request),
        TraceKind::Message(K::AdmissionRequest),
        TraceKind::Message(K::AdmissionResponse),
        TraceKind::Message(setup),
        TraceKind::Message(K::BearerSetup),
        TraceKind::Message(K::AttachRequest),
        TraceKind::AuthTransition,
        TraceKind::Message(K::AttachAccept),
        TraceKind::Message(K::BearerSetup),
    ]
}

/// Records concerning `ue`, in trace order.
pub fn records_for(records: &[TraceRecord], ue: UeId) -> Vec<&TraceRecord> {
    records.iter().filter(|r| r.ue == Some(ue)).collect()
}

/// The UE's association phase: its records before the first data-path
/// (packet-in or flow-mod) or mobility record.
pub fn association_phase(records: &[TraceRecord], ue: UeId) -> Vec<TraceKind> {
    records_for(records, ue)
        .into_iter()
        .map(|r| r.kind)
        .take_while(|k| {
            !matches!(
                k,
                TraceKind::Message(
                    MessageKind::PacketIn | MessageKind::FlowMod | MessageKind::MeasurementReport
                )
            )
        })
        .collect()
}
