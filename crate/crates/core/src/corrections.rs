//! Power-series corrections in the coupling `ε` and the modified radial pair.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::radial::{
    decay_bound, default_window, fit_far_field, l2_radial, solve_radial_linear, GroundState,
    RadialOperator, RadialProfile,
};

/// Largest admissible coupling for series assembly.
pub const EPSILON_MAX: f64 = 0.3;

/// Highest correction order kept.
pub const TRUNCATION_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Two,
    Three,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Two => "two",
            SystemKind::Three => "three",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" | "2" => Ok(SystemKind::Two),
            "three" | "3" => Ok(SystemKind::Three),
            other => Err(SolverError::InvalidParameter(format!(
                "unknown system '{other}'"
            ))),
        }
    }
}

/// How the `ε²c` part of `v₁` enters the higher orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPolicy {
    /// The whole recursion is solved again for every `ε`.
    ResolvePerEpsilon,
}

/// One row of the decay table kept with every family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub name: String,
    pub sup_norm: f64,
    pub constant: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub passes: bool,
}

/// Radial corrections `u_k`, `v_k` (and `ω_k`) for `k = 1..4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFamily {
    pub system: SystemKind,
    pub epsilon: f64,
    pub base: GroundState,
    pub tilde_v1: RadialProfile,
    pub c_profile: RadialProfile,
    /// `u₁..u₄`.
    pub u: Vec<RadialProfile>,
    /// `v₁..v₄`.
    pub v: Vec<RadialProfile>,
    /// `ω₁..ω₄`, empty for the two-component system.
    pub w_like: Vec<RadialProfile>,
    pub epsilon_policy: EpsilonPolicy,
    pub decay: Vec<DecayRow>,
}

impl CorrectionFamily {
    /// `u_k` for `k = 1..=4`.
    pub fn u_k(&self, k: usize) -> &RadialProfile {
        &self.u[k - 1]
    }

    pub fn v_k(&self, k: usize) -> &RadialProfile {
        &self.v[k - 1]
    }

    pub fn w_k(&self, k: usize) -> Option<&RadialProfile> {
        self.w_like.get(k - 1)
    }

    /// Largest decay constant over the table.
    pub fn decay_constant(&self) -> f64 {
        self.decay.iter().map(|r| r.constant).fold(0.0, f64::max)
    }

    /// Every named profile in storage order.
    pub fn named_profiles(&self) -> Vec<(String, &RadialProfile)> {
        let mut out = vec![
            ("U".to_string(), &self.base.profile),
            ("tilde_v1".to_string(), &self.tilde_v1),
            ("c".to_string(), &self.c_profile),
        ];
        for (k, p) in self.u.iter().enumerate() {
            out.push((format!("u{}", k + 1), p));
        }
        for (k, p) in self.v.iter().enumerate() {
            out.push((format!("v{}", k + 1), p));
        }
        for (k, p) in self.w_like.iter().enumerate() {
            out.push((format!("w{}", k + 1), p));
        }
        out
    }
}

fn check_epsilon(epsilon: f64, allow_zero: bool) -> Result<()> {
    let ok = epsilon.is_finite()
        && epsilon < EPSILON_MAX
        && (epsilon > 0.0 || (allow_zero && epsilon == 0.0));
    if ok {
        Ok(())
    } else {
        Err(SolverError::OutOfRange(format!(
            "epsilon = {epsilon} outside (0, {EPSILON_MAX})"
        )))
    }
}

/// Solves the correction recursion for one value of `ε`.
pub fn build_corrections(
    system: SystemKind,
    base: &GroundState,
    epsilon: f64,
) -> Result<CorrectionFamily> {
    check_epsilon(epsilon, false)?;
    let grid = *base.profile.grid();
    let zero = RadialProfile::zeros(grid);
    let linearized = base.profile.map(|u| 3.0 * u * u);
    let free = |rhs: &RadialProfile| solve_radial_linear(&zero, rhs, &grid);
    let lin = |rhs: &RadialProfile| solve_radial_linear(&linearized, rhs, &grid);
    let sum = |a: &RadialProfile, b: &RadialProfile, k: usize| {
        RadialProfile::combine(grid, &[(-(k as f64), a), (-(k as f64), b)])
    };
    let e2 = epsilon * epsilon;

    let tilde_v1 = free(&base.profile.scaled(-1.0))?;
    let c_profile = free(&tilde_v1.cube())?;
    let v1 = RadialProfile::combine(grid, &[(1.0, &tilde_v1), (e2, &c_profile)])?;
    let u1 = lin(&zero)?;

    let mut u = vec![u1];
    let mut v = vec![v1.clone()];
    let mut w = Vec::new();
    match system {
        SystemKind::Two => {
            for k in 2..=TRUNCATION_ORDER {
                let uk = lin(&v[k - 2].scaled(-(k as f64)))?;
                let vk = free(&u[k - 2].scaled(-(k as f64)))?;
                u.push(uk);
                v.push(vk);
            }
        }
        SystemKind::Three => {
            w.push(v1);
            for k in 2..=TRUNCATION_ORDER {
                let (up, vp, wp) = (&u[k - 2], &v[k - 2], &w[k - 2]);
                let uk = lin(&sum(vp, wp, k)?)?;
                let vk = free(&sum(up, wp, k)?)?;
                let wk = free(&sum(up, vp, k)?)?;
                u.push(uk);
                v.push(vk);
                w.push(wk);
            }
        }
    }

    let mut family = CorrectionFamily {
        system,
        epsilon,
        base: base.clone(),
        tilde_v1,
        c_profile,
        u,
        v,
        w_like: w,
        epsilon_policy: EpsilonPolicy::ResolvePerEpsilon,
        decay: Vec::new(),
    };
    family.decay = decay_table(&family);
    let window = default_window(&grid);
    family.tilde_v1 = family.tilde_v1.clone().fitted(window);
    family.c_profile = family.c_profile.clone().fitted(window);
    Ok(family)
}

fn decay_table(family: &CorrectionFamily) -> Vec<DecayRow> {
    family
        .named_profiles()
        .into_iter()
        .skip(1)
        .map(|(name, p)| {
            let bound = decay_bound(p);
            let fit = fit_far_field(p, default_window(p.grid())).ok();
            DecayRow {
                name,
                sup_norm: p.sup_norm(),
                constant: bound.constant,
                alpha: fit.map(|f| f.alpha),
                beta: fit.map(|f| f.beta),
                passes: bound.passes,
            }
        })
        .collect()
}

/// The truncated series `(U_ε, v_ε[, ω_ε])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedPair {
    pub system: SystemKind,
    pub epsilon: f64,
    pub u_eps: RadialProfile,
    pub v_eps: RadialProfile,
    pub w_eps: Option<RadialProfile>,
    pub truncation_order: usize,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// `U_ε = U + Σ_{i=2}^4 εⁱ/i!·u_i`, `v_ε = Σ_{i=1}^4 εⁱ/i!·v_i` and the same for `ω_ε`.
pub fn assemble_modified(family: &CorrectionFamily, epsilon: f64) -> Result<ModifiedPair> {
    check_epsilon(epsilon, true)?;
    if epsilon != 0.0 && epsilon != family.epsilon {
        return Err(SolverError::InvalidParameter(format!(
            "family was built for epsilon = {}, not {epsilon}",
            family.epsilon
        )));
    }
    let grid = *family.base.profile.grid();
    let coef = |i: usize| epsilon.powi(i as i32) / factorial(i);
    let mut u_terms = vec![(1.0, &family.base.profile)];
    for i in 2..=TRUNCATION_ORDER {
        u_terms.push((coef(i), family.u_k(i)));
    }
    let series = |profiles: &[RadialProfile]| {
        let terms: Vec<(f64, &RadialProfile)> = profiles
            .iter()
            .enumerate()
            .map(|(k, p)| (coef(k + 1), p))
            .collect();
        RadialProfile::combine(grid, &terms)
    };
    let window = default_window(&grid);
    let u_eps = RadialProfile::combine(grid, &u_terms)?;
    let u_eps = if epsilon == 0.0 {
        family.base.profile.clone()
    } else {
        u_eps.fitted(window)
    };
    let v_eps = series(&family.v)?.fitted(window);
    let w_eps = match family.system {
        SystemKind::Two => None,
        SystemKind::Three => Some(series(&family.w_like)?.fitted(window)),
    };
    Ok(ModifiedPair {
        system: family.system,
        epsilon,
        u_eps,
        v_eps,
        w_eps,
        truncation_order: TRUNCATION_ORDER,
    })
}

/// `L²(ℝ³)` residuals of the truncated pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairResiduals {
    pub res_u: f64,
    pub res_v: f64,
    pub res_w: Option<f64>,
}

impl PairResiduals {
    /// `‖R_u‖ + ‖R_v‖ (+ ‖R_w‖)`.
    pub fn total(&self) -> f64 {
        self.res_u + self.res_v + self.res_w.unwrap_or(0.0)
    }
}

/// Pointwise `-Δu + u - u³ + ε·(coupled partners)` per component, in the order
/// `u, v[, ω]`. The far-field closure row is set to zero.
pub fn residual_values(pair: &ModifiedPair) -> Vec<Vec<f64>> {
    let grid = *pair.u_eps.grid();
    let op = RadialOperator::free(grid);
    let eps = pair.epsilon;
    let component = |own: &RadialProfile, partners: &[&RadialProfile]| {
        let mut r = op.apply(own.values());
        for (i, ri) in r.iter_mut().enumerate() {
            let x = own.values()[i];
            let coupling: f64 = partners.iter().map(|p| p.values()[i]).sum();
            *ri += -x * x * x + eps * coupling;
        }
        if let Some(last) = r.last_mut() {
            *last = 0.0;
        }
        r
    };
    match &pair.w_eps {
        None => vec![
            component(&pair.u_eps, &[&pair.v_eps]),
            component(&pair.v_eps, &[&pair.u_eps]),
        ],
        Some(w) => vec![
            component(&pair.u_eps, &[&pair.v_eps, w]),
            component(&pair.v_eps, &[&pair.u_eps, w]),
            component(w, &[&pair.u_eps, &pair.v_eps]),
        ],
    }
}

/// Residual norms of the truncated pair over every row except the far-field
/// closure row.
pub fn residual_modified(pair: &ModifiedPair) -> PairResiduals {
    let grid = *pair.u_eps.grid();
    let n = grid.n_points();
    let norms: Vec<f64> = residual_values(pair)
        .iter()
        .map(|r| l2_radial(&grid, r, n - 1))
        .collect();
    PairResiduals {
        res_u: norms[0],
        res_v: norms[1],
        res_w: norms.get(2).copied(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{solve_ground_state, RadialGrid};
    use std::sync::OnceLock;

    fn base() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| solve_ground_state(&RadialGrid::new(25.0, 5001).unwrap(), 1e-10).unwrap())
    }

    #[test]
    fn two_system_identities() {
        let fam = build_corrections(SystemKind::Two, base(), 0.1).unwrap();
        assert_eq!(fam.u_k(1).sup_norm(), 0.0);
        assert!(fam.v_k(2).sup_norm() <= 1e-8);
        assert!(fam.tilde_v1.values().iter().all(|&v| v < 0.0));
        assert!(fam.decay.iter().all(|r| r.passes), "{:?}", fam.decay);
    }

    #[test]
    fn three_system_slots_agree() {
        let fam = build_corrections(SystemKind::Three, base(), 0.05).unwrap();
        for k in 1..=4 {
            let w = fam.w_k(k).unwrap();
            for (a, b) in fam.v_k(k).values().iter().zip(w.values()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
        let pair = assemble_modified(&fam, 0.05).unwrap();
        let res = residual_modified(&pair);
        let rw = res.res_w.unwrap();
        assert!((res.res_v - rw).abs() <= 1e-9 * rw);
    }

    #[test]
    fn zero_epsilon_recovers_ground_state() {
        let fam = build_corrections(SystemKind::Two, base(), 0.1).unwrap();
        let pair = assemble_modified(&fam, 0.0).unwrap();
        assert_eq!(pair.u_eps.values(), base().profile.values());
        assert_eq!(pair.v_eps.sup_norm(), 0.0);
        let res = residual_modified(&pair);
        assert!(res.res_u <= 10.0 * 1e-10 * 50.0, "{}", res.res_u);
        assert_eq!(res.res_v, 0.0);
    }

    #[test]
    fn series_leading_terms() {
        let eps = 0.1;
        let fam = build_corrections(SystemKind::Two, base(), eps).unwrap();
        let pair = assemble_modified(&fam, eps).unwrap();
        let grid = *fam.tilde_v1.grid();
        let lead = fam.tilde_v1.scaled(eps);
        let dv = RadialProfile::combine(grid, &[(1.0, &pair.v_eps), (-1.0, &lead)]).unwrap();
        let rel = dv.sup_norm() / lead.sup_norm();
        assert!(rel < 5.0 * eps * eps && rel > 0.05 * eps * eps, "rel {rel}");
        let du = RadialProfile::combine(grid, &[(1.0, &pair.u_eps), (-1.0, &base().profile)])
            .unwrap()
            .sup_norm();
        assert!(du < 5.0 * eps * eps && du > 0.05 * eps * eps, "du {du}");
    }

    #[test]
    fn incompatible_epsilon_rejected() {
        let fam = build_corrections(SystemKind::Two, base(), 0.1).unwrap();
        assert!(assemble_modified(&fam, 0.05).is_err());
        assert!(build_corrections(SystemKind::Two, base(), 0.3).is_err());
        assert!(build_corrections(SystemKind::Two, base(), 0.0).is_err());
    }
}
