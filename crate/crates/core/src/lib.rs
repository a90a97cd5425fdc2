//! Modelling toolkit for mesh-capable TWDM-PON fronthaul serving Cloud-RAN
//! over edge (MEC) nodes.
//!
//! The crate is split along the lines of the workflow it supports:
//!
//! * [`topology`] generates macro/small-cell layouts and the two-stage ODN.
//! * [`traffic`] maps functional split and cell load to fronthaul bit rate.
//! * [`powerbudget`] computes reflective EAST-WEST path losses.
//! * [`des`] is a discrete-event simulator of the upstream of a vPON slice.
//! * [`latmodel`] is the closed-form latency surrogate used by the optimizer.
//! * [`oracle`] puts both latency sources behind one trait and a name registry.
//! * [`maio`] finds the minimum set of MEC nodes and the slice assignment that
//!   meet a latency threshold, using an ILP tightened by no-good cuts.

pub mod des;
pub mod latmodel;
pub mod maio;
pub mod oracle;
pub mod powerbudget;
pub mod slice;
pub mod topology;
pub mod traffic;

pub use des::{simulate_slice, SimConfig, SimReport};
pub use latmodel::{analytic_latency_us, max_members_feasible, AnalyticalParams};
pub use maio::{evaluate_solution, maio_optimize, MaioError, MaioParams, MaioProblem, MaioSolution, SolveStatus};
pub use oracle::{LatencyOracle, OracleRegistry};
pub use slice::{LatencyError, LatencyEstimate, LatencySource, OltSite, SliceMember, VPonSlice};
pub use topology::{generate_layout, LayoutParams, NetworkLayout};
pub use traffic::{fronthaul_rate, Split, SplitRateModel};
