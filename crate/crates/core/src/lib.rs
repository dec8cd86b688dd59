//! Co-simulation toolkit for software-defined virtual synchronous condensers
//! in a wind farm: controller discretization, the per-turbine controller
//! stack, an averaged dq-frame farm model, an emulated SDN communication
//! plane and a scenario runner.

pub mod dsp;
pub mod netsim;
pub mod par;
pub mod plant;
pub mod runner;
pub mod visc;
