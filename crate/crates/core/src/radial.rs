//! Radial grids, sampled profiles, the ground state and linear radial solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// Decay rate used in every correction decay-bound check.
pub const DECAY_TAU: f64 = 0.1;

/// Largest RMS (in log space) a far-field fit may have and still be attached.
pub const FAR_FIELD_TOLERANCE: f64 = 0.05;

const SHOOT_LO: f64 = 1.0;
const SHOOT_HI: f64 = 10.0;

/// Uniform grid `r_i = i·h` on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_max: f64,
    n_points: usize,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_points: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max >= 20.0) {
            return Err(SolverError::InvalidGrid(format!(
                "r_max = {r_max} must be at least 20"
            )));
        }
        if n_points < 2000 {
            return Err(SolverError::InvalidGrid(format!(
                "n_points = {n_points} must be at least 2000"
            )));
        }
        Ok(Self { r_max, n_points })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / (self.n_points - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.r_max
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.r(i)).collect()
    }

    /// Index range of nodes with `lo ≤ r ≤ hi`.
    pub fn index_window(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let h = self.spacing();
        let a = (lo / h).ceil().max(0.0) as usize;
        let b = ((hi / h).floor() as usize).min(self.n_points - 1);
        a..=b
    }
}

/// Fitted law `amplitude · r^alpha · e^{-beta r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub alpha: f64,
    pub beta: f64,
    pub amplitude: f64,
    pub fit_residual: f64,
    pub window: (f64, f64),
    pub tolerance: f64,
}

impl FarField {
    pub fn eval(&self, r: f64) -> f64 {
        self.amplitude * r.powf(self.alpha) * (-self.beta * r).exp()
    }
}

/// A real function of the radius sampled on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    grid: RadialGrid,
    values: Vec<f64>,
    far_field: Option<FarField>,
}

impl RadialProfile {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(SolverError::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::InvalidParameter(format!(
                "profile value at node {i} is not finite"
            )));
        }
        Ok(Self {
            grid,
            values,
            far_field: None,
        })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
            far_field: None,
        }
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn far_field(&self) -> Option<&FarField> {
        self.far_field.as_ref()
    }

    /// Attaches a far-field law if its fit residual is within tolerance.
    pub fn with_far_field(mut self, law: FarField) -> Result<Self> {
        if !(law.fit_residual <= law.tolerance) {
            return Err(SolverError::PoorFit {
                rms: law.fit_residual,
                limit: law.tolerance,
            });
        }
        self.far_field = Some(law);
        Ok(self)
    }

    /// Fits the far field on `window` and attaches it when the fit is clean.
    pub fn fitted(self, window: (f64, f64)) -> Self {
        match fit_far_field(&self, window) {
            Ok(law) if law.fit_residual <= law.tolerance => Self {
                far_field: Some(law),
                ..self
            },
            _ => self,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            far_field: None,
        }
    }

    pub fn cube(&self) -> Self {
        self.map(|v| v * v * v)
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `Σ coef_k · profile_k` over profiles on one grid.
    pub fn combine(grid: RadialGrid, terms: &[(f64, &RadialProfile)]) -> Result<Self> {
        let mut values = vec![0.0; grid.n_points()];
        for (coef, p) in terms {
            if p.grid != grid {
                return Err(SolverError::GridMismatch);
            }
            for (acc, v) in values.iter_mut().zip(&p.values) {
                *acc += coef * v;
            }
        }
        Ok(Self {
            grid,
            values,
            far_field: None,
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L²(ℝ³)` norm of the radial function, trapezoid in `r` with weight `4πr²`.
    pub fn l2_norm(&self) -> f64 {
        l2_radial(&self.grid, &self.values, self.values.len())
    }

    /// Value at radius `r` and whether it came from extrapolation past `r_max`.
    ///
    /// Inside the grid this is four-point Lagrange interpolation, with the
    /// profile continued evenly through the origin.
    pub fn eval(&self, r: f64) -> (f64, bool) {
        let r = r.abs();
        let n = self.grid.n_points();
        let r_max = self.grid.r_max();
        if r > r_max {
            let tail = match &self.far_field {
                Some(law) => law.eval(r),
                None => self.values[n - 1] * (r_max / r) * (-(r - r_max)).exp(),
            };
            return (tail, true);
        }
        let t = r / self.grid.spacing();
        let i = (t.floor() as isize).min(n as isize - 2);
        let base = (i - 1).clamp(-1, n as isize - 4);
        let x = t - (base + 1) as f64;
        let w = [
            -x * (x - 1.0) * (x - 2.0) / 6.0,
            (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
            -(x + 1.0) * x * (x - 2.0) / 2.0,
            (x + 1.0) * x * (x - 1.0) / 6.0,
        ];
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let idx = (base + k as isize).unsigned_abs();
            acc += wk * self.values[idx];
        }
        (acc, false)
    }

    pub fn value_at(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

pub(crate) fn l2_radial(grid: &RadialGrid, values: &[f64], rows: usize) -> f64 {
    let h = grid.spacing();
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate().take(rows) {
        let r = grid.r(i);
        let w = if i == 0 || i + 1 == rows { 0.5 } else { 1.0 };
        acc += w * v * v * r * r;
    }
    (4.0 * std::f64::consts::PI * h * acc).sqrt()
}

/// The discrete operator `φ ↦ -φ'' - (2/r)φ' + φ - V·φ` with `φ'(0) = 0`
/// and the Robin closure `φ'(r_max) = -β·φ(r_max)`.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    grid: RadialGrid,
    potential: Vec<f64>,
    closure_rate: f64,
}

impl RadialOperator {
    pub fn new(grid: RadialGrid, potential: Vec<f64>, closure_rate: f64) -> Result<Self> {
        if potential.len() != grid.n_points() {
            return Err(SolverError::GridMismatch);
        }
        Ok(Self {
            grid,
            potential,
            closure_rate,
        })
    }

    pub fn free(grid: RadialGrid) -> Self {
        Self {
            grid,
            potential: vec![0.0; grid.n_points()],
            closure_rate: 1.0,
        }
    }

    /// Tridiagonal coefficients `(sub, diag, super)` of row `i`.
    fn row(&self, i: usize) -> (f64, f64, f64) {
        let n = self.grid.n_points();
        let h = self.grid.spacing();
        let ih2 = 1.0 / (h * h);
        let v = self.potential[i];
        if i == 0 {
            return (0.0, 6.0 * ih2 + 1.0 - v, -6.0 * ih2);
        }
        let fi = i as f64;
        let up = ih2 * (1.0 + 1.0 / fi);
        let down = ih2 * (1.0 - 1.0 / fi);
        if i + 1 == n {
            (
                -2.0 * ih2,
                2.0 * ih2 + 1.0 - v + up * 2.0 * h * self.closure_rate,
                0.0,
            )
        } else {
            (-down, 2.0 * ih2 + 1.0 - v, -up)
        }
    }

    /// Applies the operator, forming second differences before scaling to
    /// keep cancellation error near the level of the profile's increments.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let n = self.grid.n_points();
        let h = self.grid.spacing();
        let ih2 = 1.0 / (h * h);
        let mut out = vec![0.0; n];
        out[0] = -6.0 * (phi[1] - phi[0]) * ih2 + (1.0 - self.potential[0]) * phi[0];
        for i in 1..n {
            let fi = i as f64;
            let fwd = if i + 1 == n {
                phi[i - 1] - phi[i] - 2.0 * h * self.closure_rate * phi[i]
            } else {
                phi[i + 1] - phi[i]
            };
            let back = phi[i] - phi[i - 1];
            out[i] = -((1.0 + 1.0 / fi) * fwd - (1.0 - 1.0 / fi) * back) * ih2
                + (1.0 - self.potential[i]) * phi[i];
        }
        out
    }

    /// Thomas elimination for `A φ = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n_points();
        if rhs.len() != n {
            return Err(SolverError::GridMismatch);
        }
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let (_, b0, c0) = self.row(0);
        let scale = b0.abs();
        check_pivot(0, b0, scale)?;
        cp[0] = c0 / b0;
        dp[0] = rhs[0] / b0;
        for i in 1..n {
            let (a, b, c) = self.row(i);
            let pivot = b - a * cp[i - 1];
            check_pivot(i, pivot, scale)?;
            cp[i] = c / pivot;
            dp[i] = (rhs[i] - a * dp[i - 1]) / pivot;
        }
        let mut x = dp;
        for i in (0..n - 1).rev() {
            x[i] -= cp[i] * x[i + 1];
        }
        Ok(x)
    }
}

fn check_pivot(row: usize, pivot: f64, scale: f64) -> Result<()> {
    if !pivot.is_finite() || pivot.abs() <= 1e-13 * scale {
        return Err(SolverError::SingularOperator { row, pivot });
    }
    Ok(())
}

/// Solves `-φ'' - (2/r)φ' + φ - potential·φ = rhs` with `φ'(0) = 0` and the
/// Robin closure `φ' = -φ` at `r_max`.
pub fn solve_radial_linear(
    potential: &RadialProfile,
    rhs: &RadialProfile,
    grid: &RadialGrid,
) -> Result<RadialProfile> {
    if potential.grid() != grid || rhs.grid() != grid {
        return Err(SolverError::GridMismatch);
    }
    let op = RadialOperator::new(*grid, potential.values().to_vec(), 1.0)?;
    let phi = op.solve(rhs.values())?;
    RadialProfile::new(*grid, phi)
}

/// Sup norm of `A φ - rhs` over all rows.
pub fn linear_residual(
    potential: &RadialProfile,
    rhs: &RadialProfile,
    solution: &RadialProfile,
) -> Result<f64> {
    let grid = *solution.grid();
    let op = RadialOperator::new(grid, potential.values().to_vec(), 1.0)?;
    let applied = op.apply(solution.values());
    Ok(applied
        .iter()
        .zip(rhs.values())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Least-squares fit of `log|f| = α log r − β r + log|amplitude|` on `window`.
pub fn fit_far_field(profile: &RadialProfile, window: (f64, f64)) -> Result<FarField> {
    let (lo, hi) = window;
    let grid = profile.grid();
    let degenerate = |reason: &str| SolverError::DegenerateWindow {
        lo,
        hi,
        reason: reason.to_string(),
    };
    if !(lo > 0.0 && hi > lo && hi < grid.r_max()) {
        return Err(degenerate("window must lie strictly inside (0, r_max)"));
    }
    let idx: Vec<usize> = grid.index_window(lo, hi).collect();
    if idx.len() < 3 {
        return Err(degenerate("fewer than three nodes in window"));
    }
    let vals: Vec<f64> = idx.iter().map(|&i| profile.values()[i]).collect();
    let sign = vals[0].signum();
    if vals.iter().any(|v| v.abs() < 1e-300 || !v.is_normal()) {
        return Err(degenerate("profile underflows on the window"));
    }
    if vals.iter().any(|v| v.signum() != sign) {
        return Err(degenerate("profile changes sign on the window"));
    }
    let rs: Vec<f64> = idx.iter().map(|&i| grid.r(i)).collect();
    let (alpha, beta, log_amp, rms) =
        fit_log_law(&rs, &vals).ok_or_else(|| degenerate("least squares failed"))?;
    Ok(FarField {
        alpha,
        beta,
        amplitude: sign * log_amp.exp(),
        fit_residual: rms,
        window,
        tolerance: FAR_FIELD_TOLERANCE,
    })
}

/// Least squares of `log|y| = α log x − β x + c`, returning `(α, β, c, rms)`.
pub fn fit_log_law(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let rows = xs.len();
    if rows < 3 || ys.len() != rows {
        return None;
    }
    let design = DMatrix::from_fn(rows, 3, |k, j| match j {
        0 => xs[k].ln(),
        1 => -xs[k],
        _ => 1.0,
    });
    let target = DVector::from_iterator(rows, ys.iter().map(|v| v.abs().ln()));
    let coef = design.clone().svd(true, true).solve(&target, 1e-14).ok()?;
    let fitted = &design * &coef;
    let rms = ((&target - fitted).norm_squared() / rows as f64).sqrt();
    Some((coef[0], coef[1], coef[2], rms))
}

/// Default fit window `[0.4·r_max, 0.7·r_max]`.
pub fn default_window(grid: &RadialGrid) -> (f64, f64) {
    (0.4 * grid.r_max(), 0.7 * grid.r_max())
}

/// Exponential decay diagnostics `|f(r)| ≤ C e^{-(1-τ) r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    /// Smallest `C` valid on `[5, 0.7·r_max]`.
    pub constant: f64,
    /// Decay rate of the far-field fit, if the profile admits one.
    pub fitted_rate: Option<f64>,
    pub passes: bool,
}

pub fn decay_bound(profile: &RadialProfile) -> DecayBound {
    let grid = profile.grid();
    let rate = 1.0 - DECAY_TAU;
    let constant = grid
        .index_window(5.0, 0.7 * grid.r_max())
        .map(|i| profile.values()[i].abs() * (rate * grid.r(i)).exp())
        .fold(0.0, f64::max);
    let fitted_rate = fit_far_field(profile, default_window(grid))
        .ok()
        .map(|f| f.beta);
    let passes = constant.is_finite() && fitted_rate.is_none_or(|b| b >= rate);
    DecayBound {
        constant,
        fitted_rate,
        passes,
    }
}

/// The positive radial solution of `-ΔU + U = U³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub profile: RadialProfile,
    pub peak_value: f64,
    pub decay_amplitude: f64,
    /// Sup-norm residual of the discrete equation over the interior rows.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    TooSmall,
    TooLarge,
}

/// Marches the discrete equation outward from `U(0) = u0`.
fn march(grid: &RadialGrid, u0: f64) -> (Shot, Vec<f64>) {
    let n = grid.n_points();
    let h = grid.spacing();
    let ih2 = 1.0 / (h * h);
    let mut phi = Vec::with_capacity(n);
    phi.push(u0);
    phi.push(u0 + h * h * (u0 - u0 * u0 * u0) / 6.0);
    if phi[1] < 0.0 {
        return (Shot::TooLarge, phi);
    }
    if phi[1] > phi[0] {
        return (Shot::TooSmall, phi);
    }
    for i in 1..n - 1 {
        let fi = i as f64;
        let a = -ih2 * (1.0 - 1.0 / fi);
        let c = -ih2 * (1.0 + 1.0 / fi);
        let u = phi[i];
        let next = (u * u * u - a * phi[i - 1] - (2.0 * ih2 + 1.0) * u) / c;
        if next < 0.0 {
            phi.push(next);
            return (Shot::TooLarge, phi);
        }
        if next > u {
            phi.push(next);
            return (Shot::TooSmall, phi);
        }
        phi.push(next);
    }
    (Shot::TooSmall, phi)
}

fn ground_operator(grid: &RadialGrid, potential: Vec<f64>) -> RadialOperator {
    RadialOperator {
        grid: *grid,
        potential,
        closure_rate: 1.0 + 1.0 / grid.r_max(),
    }
}

/// Residual of `-U'' - (2/r)U' + U - U³` at every row.
pub fn ground_residual(grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
    let op = ground_operator(grid, vec![0.0; grid.n_points()]);
    let mut res = op.apply(u);
    for (r, v) in res.iter_mut().zip(u) {
        *r -= v * v * v;
    }
    res
}

fn interior_sup(res: &[f64]) -> f64 {
    res[..res.len() - 1].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Shooting on `U(0)` followed by Newton polishing of the discrete problem.
pub fn solve_ground_state(grid: &RadialGrid, shoot_tol: f64) -> Result<GroundState> {
    if !(shoot_tol > 0.0 && shoot_tol.is_finite()) {
        return Err(SolverError::InvalidParameter(format!(
            "shoot_tol = {shoot_tol} must be positive"
        )));
    }
    let (lo_kind, _) = march(grid, SHOOT_LO);
    let (hi_kind, _) = march(grid, SHOOT_HI);
    if lo_kind != Shot::TooSmall || hi_kind != Shot::TooLarge {
        return Err(SolverError::NoBracket {
            lo: SHOOT_LO,
            hi: SHOOT_HI,
        });
    }
    let (mut lo, mut hi) = (SHOOT_LO, SHOOT_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match march(grid, mid).0 {
            Shot::TooSmall => lo = mid,
            Shot::TooLarge => hi = mid,
        }
    }
    let (_, below) = march(grid, lo);
    let (_, above) = march(grid, hi);

    // Trust the bracketing trajectories until they separate, then close
    // with the free decay law.
    let common = below.len().min(above.len()) - 1;
    let mut cut = common;
    for k in 1..common {
        let scale = below[k].abs().max(1e-300);
        if (below[k] - above[k]).abs() > 1e-3 * scale {
            cut = k;
            break;
        }
    }
    cut = cut.max(2);
    let n = grid.n_points();
    let rk = grid.r(cut);
    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            if i <= cut {
                below[i]
            } else {
                let r = grid.r(i);
                below[cut] * (rk / r) * (-(r - rk)).exp()
            }
        })
        .collect();

    let mut best = u.clone();
    let mut best_norm = ground_residual(grid, &u)
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    for _ in 0..60 {
        let res = ground_residual(grid, &u);
        let jac = ground_operator(grid, u.iter().map(|v| 3.0 * v * v).collect());
        let delta = jac.solve(&res)?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= di;
        }
        let norm = ground_residual(grid, &u)
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        if norm < best_norm {
            best_norm = norm;
            best.clone_from(&u);
        } else {
            break;
        }
        let step = delta.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if step <= 1e-15 * best[0] {
            break;
        }
    }
    let u = best;
    let residual = interior_sup(&ground_residual(grid, &u));
    if residual > 10.0 * shoot_tol {
        return Err(SolverError::GridTooCoarse {
            target: 10.0 * shoot_tol,
            achieved: residual,
        });
    }
    if u.iter().any(|&v| v <= 0.0) || u.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SolverError::OutOfRange(
            "ground state is not positive and strictly decreasing".into(),
        ));
    }
    let window = default_window(grid);
    let profile = RadialProfile::new(*grid, u)?;
    let law = fit_far_field(&profile, window)?;
    let profile = profile.with_far_field(law)?;
    let decay_amplitude = decay_amplitude(&profile, window);
    let peak_value = profile.values()[0];
    Ok(GroundState {
        profile,
        peak_value,
        decay_amplitude,
        residual,
    })
}

/// Mean of `r·e^r·U(r)` over the window.
pub fn decay_amplitude(profile: &RadialProfile, window: (f64, f64)) -> f64 {
    let grid = profile.grid();
    let samples: Vec<f64> = grid
        .index_window(window.0, window.1)
        .map(|i| {
            let r = grid.r(i);
            r * r.exp() * profile.values()[i]
        })
        .collect();
    samples.iter().sum::<f64>() / samples.len() as f64
}
