//! Interaction integrals between translated radial profiles.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::CorrectionFamily;
use crate::error::{Result, SolverError};
use crate::quad::{simpson, tail_odd};
use crate::radial::{fit_log_law, GroundState, RadialGrid, RadialProfile};

/// Ambient dimension used by the classifier unless told otherwise.
pub const AMBIENT_DIM: usize = 3;

/// Constant-extraction window.
pub const FIT_WINDOW: (f64, f64) = (8.0, 14.0);

/// Samples taken across the extraction window.
pub const FIT_SAMPLES: usize = 13;

/// Largest relative RMS a constant fit may have.
pub const FIT_LIMIT: f64 = 0.05;

const EQUAL_RATE_TOL: f64 = 1e-9;
const UNDERFLOW_HEADROOM: f64 = 1e-300;

/// Value of `∫ f(|x|) g(|x−y|) dx` together with an underflow warning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convolution {
    pub value: f64,
    pub underflow: bool,
}

/// Tail integral `H(t) = ∫_t^∞ τ g(τ) dτ`, even in `t`.
struct Tail {
    profile: RadialProfile,
    end: f64,
}

impl Tail {
    fn new(g: &RadialProfile) -> Result<Self> {
        let grid = *g.grid();
        let r_max = grid.r_max();
        let tg: Vec<f64> = (0..grid.n_points())
            .map(|i| grid.r(i) * g.values()[i])
            .collect();
        let beyond = match g.far_field() {
            Some(law) if law.beta > 0.0 => r_max * law.eval(r_max) / law.beta,
            _ => tg[tg.len() - 1],
        };
        let tail = tail_odd(&tg, grid.spacing(), beyond);
        Ok(Self {
            profile: RadialProfile::new(grid, tail)?,
            end: beyond,
        })
    }

    fn at(&self, t: f64) -> f64 {
        let r_max = self.profile.grid().r_max();
        let t = t.abs();
        if t >= r_max {
            self.end * (-(t - r_max)).exp()
        } else {
            self.profile.value_at(t)
        }
    }
}

/// `∫_{ℝ³} f(|x|) g(|x−y|) dx` at separation `|y| = d`.
///
/// Uses the bipolar reduction
/// `(2π/d) ∫ s f(s) [H(|s−d|) − H(s+d)] ds` with `H(t) = ∫_t^∞ τ g`, for
/// `d > h`, and the
/// overlap integral `4π ∫ f g s² ds` otherwise.
pub fn radial_convolution(f: &RadialProfile, g: &RadialProfile, d: f64) -> Result<Convolution> {
    if f.grid() != g.grid() {
        return Err(SolverError::GridMismatch);
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(SolverError::InvalidParameter(format!(
            "separation {d} must be nonnegative"
        )));
    }
    let grid = *f.grid();
    let h = grid.spacing();
    let n = grid.n_points();
    if d <= h {
        let integrand: Vec<f64> = (0..n)
            .map(|i| grid.r(i).powi(2) * f.values()[i] * g.values()[i])
            .collect();
        let value = 4.0 * PI * simpson(&integrand, h);
        return Ok(Convolution {
            value,
            underflow: peak(&integrand) < UNDERFLOW_HEADROOM,
        });
    }
    let tail = Tail::new(g)?;
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let s = grid.r(i);
            s * f.values()[i] * (tail.at(s - d) - tail.at(s + d))
        })
        .collect();
    let value = 2.0 * PI / d * simpson(&integrand, h);
    Ok(Convolution {
        value,
        underflow: peak(&integrand) < UNDERFLOW_HEADROOM,
    })
}

fn peak(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticCase {
    BetaLtEta,
    BetaEqEtaGammaHigh,
    BetaEqEtaGammaCrit,
    BetaEqEtaGammaLow,
}

/// Predicted large-separation law `|y|^exponent e^{-rate |y|}` (times `log|y|`
/// in the critical case).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticClass {
    pub case: AsymptoticCase,
    pub predicted_exponent: f64,
    pub predicted_rate: f64,
    pub logarithmic: bool,
}

/// Classifies `∫ u(·−y) v` for `u ~ r^α e^{-βr}` and `v ~ r^γ e^{-ηr}` in dimension `dim`.
pub fn classify_asymptotics_in(
    f_fit: (f64, f64),
    g_fit: (f64, f64),
    dim: usize,
) -> Result<AsymptoticClass> {
    let (mut alpha, beta) = f_fit;
    let (mut gamma, eta) = g_fit;
    if !(beta > 0.0 && eta > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "decay rates must be positive, got {beta} and {eta}"
        )));
    }
    if (beta - eta).abs() <= EQUAL_RATE_TOL {
        if alpha < gamma {
            std::mem::swap(&mut alpha, &mut gamma);
        }
        let half = (1.0 + dim as f64) / 2.0;
        let critical = -half;
        let (case, exponent, logarithmic) = if (gamma - critical).abs() <= EQUAL_RATE_TOL {
            (AsymptoticCase::BetaEqEtaGammaCrit, alpha, true)
        } else if gamma > critical {
            (
                AsymptoticCase::BetaEqEtaGammaHigh,
                alpha + gamma + half,
                false,
            )
        } else {
            (AsymptoticCase::BetaEqEtaGammaLow, alpha, false)
        };
        return Ok(AsymptoticClass {
            case,
            predicted_exponent: exponent,
            predicted_rate: beta,
            logarithmic,
        });
    }
    if beta > eta {
        return Err(SolverError::Unsupported(format!(
            "slower-decaying profile must come first (beta = {beta} > eta = {eta})"
        )));
    }
    Ok(AsymptoticClass {
        case: AsymptoticCase::BetaLtEta,
        predicted_exponent: alpha,
        predicted_rate: beta,
        logarithmic: false,
    })
}

pub fn classify_asymptotics(f_fit: (f64, f64), g_fit: (f64, f64)) -> Result<AsymptoticClass> {
    classify_asymptotics_in(f_fit, g_fit, AMBIENT_DIM)
}

/// Result of fitting `I(d)·d^{-exponent}·e^{rate·d}` to a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub constant: f64,
    pub rms: f64,
    pub window: (f64, f64),
    pub samples: Vec<(f64, f64)>,
}

pub fn sample_separations(range: (f64, f64), n_samples: usize) -> Vec<f64> {
    if n_samples == 1 {
        return vec![range.0];
    }
    (0..n_samples)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / (n_samples - 1) as f64)
        .collect()
}

/// Convolution values at `n_samples` equispaced separations, evaluated in parallel.
pub fn convolution_samples(
    f: &RadialProfile,
    g: &RadialProfile,
    range: (f64, f64),
    n_samples: usize,
) -> Result<Vec<(f64, f64)>> {
    sample_separations(range, n_samples)
        .into_par_iter()
        .map(|d| radial_convolution(f, g, d).map(|c| (d, c.value)))
        .collect()
}

/// Least-squares constant in front of the predicted law over `d_range`.
pub fn extract_constant(
    f: &RadialProfile,
    g: &RadialProfile,
    class: &AsymptoticClass,
    d_range: (f64, f64),
    n_samples: usize,
) -> Result<ConstantFit> {
    if class.logarithmic {
        return Err(SolverError::Unsupported(
            "logarithmic law has no constant to extract".into(),
        ));
    }
    if !(d_range.0 > 0.0 && d_range.1 > d_range.0 && n_samples >= 2) {
        return Err(SolverError::InvalidParameter(format!(
            "bad extraction window {d_range:?} with {n_samples} samples"
        )));
    }
    let samples = convolution_samples(f, g, d_range, n_samples)?;
    let scaled: Vec<f64> = samples
        .iter()
        .map(|&(d, v)| v * d.powf(-class.predicted_exponent) * (class.predicted_rate * d).exp())
        .collect();
    let constant = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let rms = (scaled
        .iter()
        .map(|s| (s / constant - 1.0).powi(2))
        .sum::<f64>()
        / scaled.len() as f64)
        .sqrt();
    if !(rms <= FIT_LIMIT) {
        return Err(SolverError::PoorFit {
            rms,
            limit: FIT_LIMIT,
        });
    }
    Ok(ConstantFit {
        constant,
        rms,
        window: d_range,
        samples,
    })
}

/// Free fit of `log I = p log d − q d + c` to sampled convolution values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayLaw {
    pub exponent: f64,
    pub rate: f64,
    pub amplitude: f64,
    pub rms: f64,
}

pub fn fit_decay_law(samples: &[(f64, f64)]) -> Result<DecayLaw> {
    let ds: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let vs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    if vs.iter().any(|v| !(v.abs() > 0.0)) {
        return Err(SolverError::DegenerateWindow {
            lo: ds.first().copied().unwrap_or(0.0),
            hi: ds.last().copied().unwrap_or(0.0),
            reason: "convolution vanishes on the window".into(),
        });
    }
    let (exponent, rate, c, rms) = fit_log_law(&ds, &vs).ok_or_else(|| {
        SolverError::InvalidParameter("decay-law fit needs at least three samples".into())
    })?;
    Ok(DecayLaw {
        exponent,
        rate,
        amplitude: c.exp(),
        rms,
    })
}

/// Measured constants of the reduced energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionConstants {
    #[serde(rename = "A")]
    pub a: f64,
    pub c_attr: f64,
    pub c_cross: f64,
    pub c_origin: f64,
    pub fit_windows: BTreeMap<String, (f64, f64)>,
    pub fit_residuals: BTreeMap<String, f64>,
    /// Cross-check of `C_cross` on a shifted window, as a relative difference.
    pub cross_window_drift: f64,
    pub grid: RadialGrid,
}

impl InteractionConstants {
    /// Constants with all three couplings scaled by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c_attr: self.c_attr * k,
            c_cross: self.c_cross * k,
            c_origin: self.c_origin * k,
            ..self.clone()
        }
    }

    /// Constants supplied directly, without any fit.
    pub fn from_values(a: f64, c_attr: f64, c_cross: f64, c_origin: f64, grid: RadialGrid) -> Self {
        Self {
            a,
            c_attr,
            c_cross,
            c_origin,
            fit_windows: BTreeMap::new(),
            fit_residuals: BTreeMap::new(),
            cross_window_drift: 0.0,
            grid,
        }
    }
}

/// Secondary window used for the stability check of `C_cross`.
pub const CROSS_CHECK_WINDOW: (f64, f64) = (10.0, 16.0);

/// Extracts `C` from `(U³, U)`, `C̄` from `(U, U)` and `C̃` from `(−ṽ₁, U³)`.
pub fn measure_constants(
    base: &GroundState,
    family: &CorrectionFamily,
) -> Result<InteractionConstants> {
    let u = &base.profile;
    let u3 = u.cube();
    let minus_v1 = family.tilde_v1.scaled(-1.0);

    let attr_class = classify_asymptotics((-1.0, 1.0), (-3.0, 3.0))?;
    let cross_class = classify_asymptotics((-1.0, 1.0), (-1.0, 1.0))?;
    let origin_class = classify_asymptotics((0.0, 1.0), (-3.0, 3.0))?;

    let attr = extract_constant(&u3, u, &attr_class, FIT_WINDOW, FIT_SAMPLES)?;
    let cross = extract_constant(u, u, &cross_class, FIT_WINDOW, FIT_SAMPLES)?;
    let origin = extract_constant(&minus_v1, &u3, &origin_class, FIT_WINDOW, FIT_SAMPLES)?;
    let cross_alt = extract_constant(u, u, &cross_class, CROSS_CHECK_WINDOW, FIT_SAMPLES)?;

    let mut fit_windows = BTreeMap::new();
    let mut fit_residuals = BTreeMap::new();
    for (name, fit) in [
        ("c_attr", &attr),
        ("c_cross", &cross),
        ("c_origin", &origin),
    ] {
        fit_windows.insert(name.to_string(), fit.window);
        fit_residuals.insert(name.to_string(), fit.rms);
    }
    let constants = InteractionConstants {
        a: base.decay_amplitude,
        c_attr: attr.constant,
        c_cross: cross.constant,
        c_origin: origin.constant,
        fit_windows,
        fit_residuals,
        cross_window_drift: (cross_alt.constant / cross.constant - 1.0).abs(),
        grid: *u.grid(),
    };
    if [
        constants.a,
        constants.c_attr,
        constants.c_cross,
        constants.c_origin,
    ]
    .iter()
    .any(|c| !(*c > 0.0))
    {
        return Err(SolverError::OutOfRange(format!(
            "nonpositive interaction constant in {constants:?}"
        )));
    }
    Ok(constants)
}
