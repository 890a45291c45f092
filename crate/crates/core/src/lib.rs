//! Delay-minimal power, energy-transfer and flow allocation for wireless
//! networks whose nodes harvest energy and can share it over lossy links.

// `!(x > y)` is deliberate: it rejects NaN along with the failing case.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod joint;
pub mod multi_slot;
pub mod oracle;
pub mod power_math;
pub mod single_slot;
pub mod topology;

pub use error::{Error, Result};
pub use power_math::{LinkParams, WaterLevel};
pub use single_slot::{solve_single_slot, SingleSlotOptions, SingleSlotSolution};
pub use topology::{build_network, FlowVector, HarvestProfile, Network, NetworkDescription};
