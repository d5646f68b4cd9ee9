//! Shared fixtures for the criterion benches.

use swarmsync_core::sim::SimState;
use swarmsync_core::{scenario, SimConfig};

/// The five-follower scenario cut to `horizon` seconds.
pub fn reference(horizon: f64) -> SimConfig {
    let mut c = scenario::reference_config();
    c.horizon = horizon;
    c
}

pub fn initial_state(config: &SimConfig) -> SimState {
    SimState::initial(config)
}
