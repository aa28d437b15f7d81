//! DC power-flow emissions planning.
//!
//! Three linear programs over a PTDF-linearized network:
//! cost-minimizing base dispatch, emissions-minimizing EV re-dispatch and
//! charging, and minimum MW·mile transmission upgrades, together with the
//! fleet-electrification and renewable-scaling scenario pipeline.

pub mod dispatch;
pub mod factor;
pub mod fleet;
pub mod grid;
pub mod io;
pub mod lp;
pub mod ptdf;
pub mod scenario;
