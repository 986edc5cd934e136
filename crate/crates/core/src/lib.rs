//! Flow-level simulator of a sliced LTE + WLAN access network run by a
//! centralized SDN controller.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dataplane;
pub mod metrics;
pub mod radio;
pub mod sim;
pub mod simulation;
pub mod slicing;
pub mod topology;
pub mod types;
pub mod workload;
