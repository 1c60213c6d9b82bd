//! Selective state space recurrence and omni-directional 2-D scanning.

mod discretize;
mod ode;
mod orders;
mod scan;
mod vonss;

pub use discretize::{zoh_discretize, SERIES_THRESHOLD};
pub use ode::{ode_reference, FrozenSsm};
pub use orders::{build_scan_orders, ScanKind, ScanOrder};
pub use scan::{selective_scan, SsmParams};
pub use vonss::{VonssBlock, Vonssm};
