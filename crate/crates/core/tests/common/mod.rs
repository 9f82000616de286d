#![allow(dead_code)]

use std::sync::OnceLock;

use segbump_core::corrections::{build_corrections, CorrectionFamily, SystemKind};
use segbump_core::interaction::{measure_constants, InteractionConstants};
use segbump_core::radial::{solve_ground_state, GroundState, RadialGrid};

pub fn base() -> &'static GroundState {
    static GS: OnceLock<GroundState> = OnceLock::new();
    GS.get_or_init(|| solve_ground_state(&RadialGrid::new(25.0, 5001).unwrap(), 1e-10).unwrap())
}

pub fn family(system: SystemKind, epsilon: f64) -> CorrectionFamily {
    build_corrections(system, base(), epsilon).unwrap()
}

pub fn constants() -> &'static InteractionConstants {
    static K: OnceLock<InteractionConstants> = OnceLock::new();
    K.get_or_init(|| measure_constants(base(), &family(SystemKind::Two, 0.05)).unwrap())
}
