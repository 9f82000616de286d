//! Cached pipeline stages shared by every mode.

use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use segbump_core::corrections::{build_corrections, CorrectionFamily, SystemKind};
use segbump_core::interaction::{measure_constants, InteractionConstants};
use segbump_core::io::Cache;
use segbump_core::landscape::{epsilon_ladder, fit_radius, locate_maximum, Maximizer, RadiusFit};
use segbump_core::radial::{solve_ground_state, GroundState, RadialGrid};
use segbump_core::Result;

use crate::config::Parameters;

#[derive(Debug, Clone, Copy, Serialize)]
struct GroundKey {
    r_max: f64,
    n_points: usize,
    shoot_tol: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct FamilyKey {
    ground: GroundKey,
    system: SystemKind,
    epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEvent {
    pub kind: String,
    pub hit: bool,
}

pub struct Context {
    pub params: Parameters,
    cache: Cache,
    ground: OnceLock<GroundState>,
    constants: OnceLock<InteractionConstants>,
    events: Mutex<Vec<CacheEvent>>,
}

impl Context {
    pub fn new(params: Parameters, cache: Cache) -> Self {
        Self {
            params,
            cache,
            ground: OnceLock::new(),
            constants: OnceLock::new(),
            events: Mutex::new(Vec::new()),
        }
    }

    fn ground_key(&self) -> GroundKey {
        GroundKey {
            r_max: self.params.r_max,
            n_points: self.params.n_points,
            shoot_tol: self.params.shoot_tol,
        }
    }

    fn record(&self, kind: &str, hit: bool) {
        if let Ok(mut ev) = self.events.lock() {
            ev.push(CacheEvent {
                kind: kind.into(),
                hit,
            });
        }
    }

    pub fn events(&self) -> Vec<CacheEvent> {
        self.events.lock().map(|e| e.clone()).unwrap_or_default()
    }

    pub fn ground(&self) -> Result<&GroundState> {
        if let Some(gs) = self.ground.get() {
            return Ok(gs);
        }
        let key = self.ground_key();
        let (gs, hit) = self.cache.load_or_build("ground-state", &key, || {
            let grid = RadialGrid::new(key.r_max, key.n_points)?;
            solve_ground_state(&grid, key.shoot_tol)
        })?;
        self.record("ground-state", hit);
        Ok(self.ground.get_or_init(|| gs))
    }

    pub fn family(&self, system: SystemKind, epsilon: f64) -> Result<CorrectionFamily> {
        let base = self.ground()?;
        let key = FamilyKey {
            ground: self.ground_key(),
            system,
            epsilon,
        };
        let (fam, hit) = self.cache.load_or_build("corrections", &key, || {
            build_corrections(system, base, epsilon)
        })?;
        self.record("corrections", hit);
        Ok(fam)
    }

    /// Constants measured from the two-component family at `constants_epsilon`.
    pub fn constants(&self) -> Result<&InteractionConstants> {
        if let Some(k) = self.constants.get() {
            return Ok(k);
        }
        let base = self.ground()?;
        let key = FamilyKey {
            ground: self.ground_key(),
            system: SystemKind::Two,
            epsilon: self.params.constants_epsilon,
        };
        let (k, hit) = self.cache.load_or_build("constants", &key, || {
            let fam = self.family(SystemKind::Two, self.params.constants_epsilon)?;
            measure_constants(base, &fam)
        })?;
        self.record("constants", hit);
        Ok(self.constants.get_or_init(|| k))
    }

    pub fn ladder(&self) -> Vec<f64> {
        epsilon_ladder(self.params.ladder_from, self.params.ladder_to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderFit {
    pub system: SystemKind,
    pub ell: usize,
    pub mu: f64,
    pub fit: RadiusFit,
    pub maximizers: Vec<(f64, Maximizer)>,
    pub all_interior: bool,
}

/// Maximizers over `ladder`, computed concurrently, and the three-parameter
/// radius fit through them.
pub fn ladder_fit(
    constants: &InteractionConstants,
    system: SystemKind,
    ell: usize,
    mu: f64,
    ladder: &[f64],
) -> Result<LadderFit> {
    let maximizers = ladder
        .par_iter()
        .map(|&e| locate_maximum(system, constants, ell, e, mu).map(|m| (e, m)))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = maximizers.iter().map(|(e, m)| (*e, m.r)).collect();
    let fit = fit_radius(&points)?;
    let all_interior = maximizers.iter().all(|(_, m)| m.interior);
    Ok(LadderFit {
        system,
        ell,
        mu,
        fit,
        maximizers,
        all_interior,
    })
}
