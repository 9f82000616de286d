//! Bump geometry, admissible radius windows and the reduced energy.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::SystemKind;
use crate::error::{Result, SolverError};
use crate::interaction::InteractionConstants;

/// Samples per axis of the initial landscape grid.
pub const GRID_SAMPLES: usize = 200;

/// Bracket width at which the golden-section sweeps stop.
pub const GOLDEN_TOL: f64 = 1e-10;

/// Geometric constants `m = 2 sin(π/ℓ)` and `n = √(2(1 − cos(π/ℓ)))`.
pub fn geometry_constants(ell: usize) -> (f64, f64) {
    let t = PI / ell as f64;
    (2.0 * t.sin(), (2.0 * (1.0 - t.cos())).sqrt())
}

/// Two rings of `ℓ` points in the `x₃ = 0` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpConfiguration {
    pub ell: usize,
    pub r: f64,
    pub rho: f64,
    pub x_points: Vec<[f64; 3]>,
    pub y_points: Vec<[f64; 3]>,
    pub m: f64,
    pub n: f64,
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn norm(a: &[f64; 3]) -> f64 {
    distance(a, &[0.0; 3])
}

impl BumpConfiguration {
    /// Distance between adjacent points of one ring, `m·r`.
    pub fn same_family_distance(&self) -> f64 {
        self.m * self.r
    }

    /// `√(r² + ρ² − 2rρ cos(π/ℓ))`.
    pub fn nearest_cross_distance(&self) -> f64 {
        cross_distance(self.ell, self.r, self.rho)
    }

    /// Smallest `|x^i − y^j|` over all pairs.
    pub fn min_cross_distance(&self) -> f64 {
        self.x_points
            .iter()
            .flat_map(|x| self.y_points.iter().map(move |y| distance(x, y)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn cross_distance(ell: usize, r: f64, rho: f64) -> f64 {
    let c = (PI / ell as f64).cos();
    (r * r + rho * rho - 2.0 * r * rho * c).max(0.0).sqrt()
}

/// `x^j` at angles `2(j−1)π/ℓ` on radius `r`, `y^j` at `(2j−1)π/ℓ` on radius `ρ`.
pub fn bump_positions(ell: usize, r: f64, rho: f64) -> Result<BumpConfiguration> {
    if ell < 2 {
        return Err(SolverError::InvalidParameter(format!(
            "ell = {ell} must be at least 2"
        )));
    }
    if !(r > 0.0 && rho > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "radii ({r}, {rho}) must be positive"
        )));
    }
    let l = ell as f64;
    let x_points = (0..ell)
        .map(|j| {
            let a = 2.0 * j as f64 * PI / l;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    let y_points = (0..ell)
        .map(|j| {
            let a = (2 * j + 1) as f64 * PI / l;
            [rho * a.cos(), rho * a.sin(), 0.0]
        })
        .collect();
    let (m, n) = geometry_constants(ell);
    Ok(BumpConfiguration {
        ell,
        r,
        rho,
        x_points,
        y_points,
        m,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowVariant {
    TwoSystem,
    ThreeSystemEll2,
}

/// Admissible radius interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainWindow {
    pub epsilon: f64,
    pub mu: f64,
    pub lo: f64,
    pub hi: f64,
    pub variant: WindowVariant,
}

impl DomainWindow {
    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }
}

fn log_scale(epsilon: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon < (-1.0f64).exp()) {
        return Err(SolverError::OutOfRange(format!(
            "epsilon = {epsilon} outside (0, 1/e)"
        )));
    }
    let l = -epsilon.ln();
    Ok((l, l.ln()))
}

pub fn domain_window(
    epsilon: f64,
    ell: usize,
    mu: f64,
    variant: WindowVariant,
) -> Result<DomainWindow> {
    let (l, ll) = log_scale(epsilon)?;
    let (m, n) = geometry_constants(ell);
    let base = match variant {
        WindowVariant::TwoSystem => m - n,
        WindowVariant::ThreeSystemEll2 => 1.0,
    };
    if !(mu > base) {
        return Err(SolverError::BadMu {
            mu,
            threshold: base,
        });
    }
    Ok(DomainWindow {
        epsilon,
        mu,
        lo: l / (base + mu * ll / l),
        hi: l / base,
        variant,
    })
}

/// Window used by a system at a given `ℓ`.
pub fn variant_for(system: SystemKind, ell: usize) -> WindowVariant {
    match (system, ell) {
        (SystemKind::Three, 2) => WindowVariant::ThreeSystemEll2,
        _ => WindowVariant::TwoSystem,
    }
}

/// `ρ_θ = |ln ε| / (m − n + θ·μ·ln|ln ε|/|ln ε|)`, sweeping the window from `hi` (θ = 0) to `lo` (θ = 1).
pub fn rho_theta(epsilon: f64, ell: usize, mu: f64, theta: f64) -> Result<f64> {
    let (l, ll) = log_scale(epsilon)?;
    let (m, n) = geometry_constants(ell);
    Ok(l / (m - n + theta * mu * ll / l))
}

/// Reduced energy `G` (two components) or `Ḡ` (three components).
///
/// For three components with `ℓ = 2` the cross term is dominated and dropped,
/// so the landscape separates into a function of `r` plus the same function of `ρ`.
pub fn reduced_g(
    system: SystemKind,
    constants: &InteractionConstants,
    ell: usize,
    epsilon: f64,
    r: f64,
    rho: f64,
) -> f64 {
    Landscape1::new(system, constants, ell, epsilon).value(r, rho)
}

/// Closed-form reduced energy with derivatives.
#[derive(Debug, Clone, Copy)]
struct Landscape1 {
    c: f64,
    c_bar: f64,
    c_tilde: f64,
    eps: f64,
    m: f64,
    cos: f64,
    cross: bool,
    origin: bool,
}

impl Landscape1 {
    fn new(system: SystemKind, k: &InteractionConstants, ell: usize, eps: f64) -> Self {
        let (m, _) = geometry_constants(ell);
        let three = system == SystemKind::Three;
        Self {
            c: k.c_attr,
            c_bar: k.c_cross,
            c_tilde: k.c_origin,
            eps,
            m,
            cos: (PI / ell as f64).cos(),
            cross: !(three && ell == 2),
            origin: three,
        }
    }

    /// Single-radius part and its first two derivatives.
    fn single(&self, z: f64) -> (f64, f64, f64) {
        let m = self.m;
        let e = (self.c / m) * (-m * z).exp();
        let mut v = -e / z;
        let mut d1 = e * (m / z + 1.0 / (z * z));
        let mut d2 = -e * (m * m / z + 2.0 * m / (z * z) + 2.0 / (z * z * z));
        if self.origin {
            let k = self.c_tilde * self.eps * (-z).exp();
            v += k;
            d1 -= k;
            d2 += k;
        }
        (v, d1, d2)
    }

    fn value(&self, r: f64, rho: f64) -> f64 {
        let mut g = self.single(r).0 + self.single(rho).0;
        if self.cross {
            let d = (r * r + rho * rho - 2.0 * r * rho * self.cos)
                .max(0.0)
                .sqrt();
            g += self.c_bar * self.eps * (-d).exp();
        }
        g
    }

    /// Gradient and Hessian.
    fn derivatives(&self, r: f64, rho: f64) -> ([f64; 2], [[f64; 3]; 1]) {
        let (_, hr1, hr2) = self.single(r);
        let (_, hp1, hp2) = self.single(rho);
        let mut grad = [hr1, hp1];
        let (mut hrr, mut hpp, mut hrp) = (hr2, hp2, 0.0);
        if self.cross {
            let d = (r * r + rho * rho - 2.0 * r * rho * self.cos)
                .max(1e-300)
                .sqrt();
            let w = self.c_bar * self.eps * (-d).exp();
            let dr = (r - rho * self.cos) / d;
            let dp = (rho - r * self.cos) / d;
            let drr = (1.0 - dr * dr) / d;
            let dpp = (1.0 - dp * dp) / d;
            let drp = (-self.cos - dr * dp) / d;
            grad[0] -= w * dr;
            grad[1] -= w * dp;
            hrr += w * (dr * dr - drr);
            hpp += w * (dp * dp - dpp);
            hrp += w * (dr * dp - drp);
        }
        (grad, [[hrr, hrp, hpp]])
    }
}

/// `θ̄ = (m − n)² / (μ (m − n/2))`, the root of
/// `f(θ) = μθm/(m−n)² − 1 − μθn/(2(m−n)²)`.
pub fn theta_bar(ell: usize, mu: f64) -> Result<f64> {
    let (m, n) = geometry_constants(ell);
    if !(mu > 0.0) {
        return Err(SolverError::OutOfRange(format!(
            "mu = {mu} must be positive"
        )));
    }
    let q = (m - n) * (m - n);
    let f = |t: f64| mu * t * m / q - 1.0 - mu * t * n / (2.0 * q);
    let theta = q / (mu * (m - 0.5 * n));
    if !(f(0.0) < 0.0 && f(1.0) > 0.0 && theta > 0.0 && theta < 1.0) {
        return Err(SolverError::OutOfRange(format!(
            "theta_bar = {theta} not in (0, 1) for mu = {mu}"
        )));
    }
    Ok(theta)
}

/// Residual of the defining equation of `θ̄`.
pub fn theta_equation(ell: usize, mu: f64, theta: f64) -> f64 {
    let (m, n) = geometry_constants(ell);
    let q = (m - n) * (m - n);
    mu * theta * m / q - 1.0 - mu * theta * n / (2.0 * q)
}

/// Leading-order ring radius `a·|ln ε|` with the closed-form coefficient.
pub fn predicted_radius(ell: usize, epsilon: f64, system: SystemKind) -> f64 {
    predicted_coefficient(ell, system) * epsilon.ln().abs()
}

/// `m/(m−n)`, or 1 for three components at `ℓ = 2`.
pub fn predicted_coefficient(ell: usize, system: SystemKind) -> f64 {
    let (m, n) = geometry_constants(ell);
    match variant_for(system, ell) {
        WindowVariant::ThreeSystemEll2 => 1.0,
        WindowVariant::TwoSystem => m / (m - n),
    }
}

/// Leading coefficient of the window's upper edge, `1/(m−n)` (or 1).
pub fn window_coefficient(ell: usize, system: SystemKind) -> f64 {
    let (m, n) = geometry_constants(ell);
    match variant_for(system, ell) {
        WindowVariant::ThreeSystemEll2 => 1.0,
        WindowVariant::TwoSystem => 1.0 / (m - n),
    }
}

/// Located maximum of the reduced energy on the window square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub r: f64,
    pub rho: f64,
    pub value: f64,
    pub interior: bool,
    pub window: DomainWindow,
    pub grid_cell: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid search, coordinate golden-section sweeps, then Newton on the gradient.
pub fn locate_maximum(
    system: SystemKind,
    constants: &InteractionConstants,
    ell: usize,
    epsilon: f64,
    mu: f64,
) -> Result<Maximizer> {
    let window = domain_window(epsilon, ell, mu, variant_for(system, ell))?;
    let land = Landscape1::new(system, constants, ell, epsilon);
    let axis = linspace(window.lo, window.hi, GRID_SAMPLES);
    let cell = axis[1] - axis[0];
    let values: Vec<f64> = (0..GRID_SAMPLES * GRID_SAMPLES)
        .into_par_iter()
        .map(|k| land.value(axis[k / GRID_SAMPLES], axis[k % GRID_SAMPLES]))
        .collect();
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    let (i0, j0) = (best / GRID_SAMPLES, best % GRID_SAMPLES);
    let bracket = |i: usize| {
        (
            axis[i.saturating_sub(1)],
            axis[(i + 1).min(GRID_SAMPLES - 1)],
        )
    };
    let (br, bp) = (bracket(i0), bracket(j0));
    let (mut r, mut rho) = (axis[i0], axis[j0]);
    for _ in 0..50 {
        let (r_old, rho_old) = (r, rho);
        r = golden_max(|x| land.value(x, rho), br.0, br.1, GOLDEN_TOL);
        rho = golden_max(|y| land.value(r, y), bp.0, bp.1, GOLDEN_TOL);
        if (r - r_old).abs() <= GOLDEN_TOL && (rho - rho_old).abs() <= GOLDEN_TOL {
            break;
        }
    }
    // Newton on ∇G = 0 resolves the maximizer below the value-comparison floor.
    for _ in 0..30 {
        let (g, [[hrr, hrp, hpp]]) = land.derivatives(r, rho);
        let det = hrr * hpp - hrp * hrp;
        if !(hrr < 0.0 && det > 0.0) {
            break;
        }
        let dr = (hpp * g[0] - hrp * g[1]) / det;
        let dp = (hrr * g[1] - hrp * g[0]) / det;
        let (nr, np) = (r - dr, rho - dp);
        if !(nr >= br.0 && nr <= br.1 && np >= bp.0 && np <= bp.1) {
            break;
        }
        r = nr;
        rho = np;
        if dr.abs().max(dp.abs()) <= 1e-15 * r.max(rho) {
            break;
        }
    }
    let inside = |z: f64| z - window.lo >= cell && window.hi - z >= cell;
    Ok(Maximizer {
        r,
        rho,
        value: land.value(r, rho),
        interior: inside(r) && inside(rho),
        window,
        grid_cell: cell,
    })
}

/// Like [`locate_maximum`] but fails with `BoundaryMaximum` when the maximum is not interior.
pub fn maximize_landscape(
    system: SystemKind,
    constants: &InteractionConstants,
    ell: usize,
    epsilon: f64,
    mu: f64,
) -> Result<Maximizer> {
    let found = locate_maximum(system, constants, ell, epsilon, mu)?;
    if !found.interior {
        return Err(SolverError::BoundaryMaximum {
            r: found.r,
            rho: found.rho,
            value: found.value,
        });
    }
    Ok(found)
}

/// Sampled landscape on the window square, rows ordered by `r` then `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub system: SystemKind,
    pub constants: InteractionConstants,
    pub epsilon: f64,
    pub ell: usize,
    pub window: DomainWindow,
    pub samples: Vec<(f64, f64, f64)>,
}

pub fn scan_landscape(
    system: SystemKind,
    constants: &InteractionConstants,
    ell: usize,
    epsilon: f64,
    mu: f64,
    per_axis: usize,
) -> Result<Landscape> {
    if per_axis < 2 {
        return Err(SolverError::InvalidParameter(
            "landscape needs at least 2 samples per axis".into(),
        ));
    }
    let window = domain_window(epsilon, ell, mu, variant_for(system, ell))?;
    let land = Landscape1::new(system, constants, ell, epsilon);
    let axis = linspace(window.lo, window.hi, per_axis);
    let samples = (0..per_axis * per_axis)
        .into_par_iter()
        .map(|k| {
            let (r, rho) = (axis[k / per_axis], axis[k % per_axis]);
            (r, rho, land.value(r, rho))
        })
        .collect();
    Ok(Landscape {
        system,
        constants: constants.clone(),
        epsilon,
        ell,
        window,
        samples,
    })
}

/// Largest value of `G` along the edge `r = edge` (or `ρ = edge`) of the window.
pub fn edge_maximum(
    system: SystemKind,
    constants: &InteractionConstants,
    ell: usize,
    epsilon: f64,
    window: &DomainWindow,
    edge: f64,
    samples: usize,
) -> f64 {
    let land = Landscape1::new(system, constants, ell, epsilon);
    linspace(window.lo, window.hi, samples)
        .into_iter()
        .map(|y| land.value(edge, y).max(land.value(y, edge)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares fit `r* = a·|ln ε| + b·ln|ln ε| + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rms: f64,
}

pub fn fit_radius(points: &[(f64, f64)]) -> Result<RadiusFit> {
    if points.len() < 3 {
        return Err(SolverError::InvalidParameter(
            "radius fit needs at least three points".into(),
        ));
    }
    let rows = points.len();
    let design = DMatrix::from_fn(rows, 3, |k, j| {
        let l = -points[k].0.ln();
        match j {
            0 => l,
            1 => l.ln(),
            _ => 1.0,
        }
    });
    let target = DVector::from_iterator(rows, points.iter().map(|p| p.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-14)
        .map_err(|e| SolverError::InvalidParameter(format!("radius fit failed: {e}")))?;
    let rms = ((&target - &design * &coef).norm_squared() / rows as f64).sqrt();
    Ok(RadiusFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        rms,
    })
}

/// Geometric ladder `10^{-from}, …, 10^{-to}`.
pub fn epsilon_ladder(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 10f64.powi(-k)).collect()
}

/// Itemized interaction energy of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub self_energy: String,
    pub bump_count: usize,
    /// `−Σ_{i<j} C e^{−d}/d` over all same-family pairs of both rings.
    pub attraction_all: f64,
    pub attraction_nearest: f64,
    pub nearest_same_pairs: usize,
    /// `ε Σ_{i,j} C̄ e^{−|x^i − y^j|}`.
    pub repulsion_all: f64,
    pub repulsion_nearest: f64,
    pub nearest_cross_pairs: usize,
    pub cross_terms: Vec<f64>,
    /// `ε C̃ Σ_j (e^{−|x^j|} + e^{−|y^j|})`, three components only.
    pub origin_terms: Vec<f64>,
    pub interaction_all: f64,
    pub interaction_nearest: f64,
    pub ell_times_g: f64,
    pub error_order: String,
}

pub fn energy_expansion(
    config: &BumpConfiguration,
    constants: &InteractionConstants,
    epsilon: f64,
    system: SystemKind,
) -> ExpansionReport {
    let rel_tol = 1e-9;
    let yukawa = |d: f64| constants.c_attr * (-d).exp() / d;
    let mut attraction_all = 0.0;
    let mut nearest_d = f64::INFINITY;
    let mut same = Vec::new();
    for ring in [&config.x_points, &config.y_points] {
        for i in 0..ring.len() {
            for j in i + 1..ring.len() {
                let d = distance(&ring[i], &ring[j]);
                same.push(d);
                attraction_all -= yukawa(d);
            }
        }
    }
    for ring_min in [config.m * config.r, config.m * config.rho] {
        nearest_d = nearest_d.min(ring_min);
    }
    let ring_nearest = |ring: &Vec<[f64; 3]>, radius: f64| -> (f64, usize) {
        let dmin = config.m * radius;
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..ring.len() {
            for j in i + 1..ring.len() {
                let d = distance(&ring[i], &ring[j]);
                if (d - dmin).abs() <= rel_tol * dmin {
                    sum -= yukawa(d);
                    count += 1;
                }
            }
        }
        (sum, count)
    };
    let (ax, cx) = ring_nearest(&config.x_points, config.r);
    let (ay, cy) = ring_nearest(&config.y_points, config.rho);

    let cross_terms: Vec<f64> = config
        .x_points
        .iter()
        .flat_map(|x| config.y_points.iter().map(move |y| distance(x, y)))
        .map(|d| epsilon * constants.c_cross * (-d).exp())
        .collect();
    let repulsion_all = cross_terms.iter().sum();
    let dmin = config.min_cross_distance();
    let mut repulsion_nearest = 0.0;
    let mut nearest_cross_pairs = 0;
    for x in &config.x_points {
        for y in &config.y_points {
            let d = distance(x, y);
            if (d - dmin).abs() <= rel_tol * dmin {
                repulsion_nearest += epsilon * constants.c_cross * (-d).exp();
                nearest_cross_pairs += 1;
            }
        }
    }
    let origin_terms: Vec<f64> = if system == SystemKind::Three {
        config
            .x_points
            .iter()
            .chain(&config.y_points)
            .map(|p| epsilon * constants.c_origin * (-norm(p)).exp())
            .collect()
    } else {
        Vec::new()
    };
    let origin_sum: f64 = origin_terms.iter().sum();
    let (m, n) = (config.m, config.n);
    let bump_count = 2 * config.ell + usize::from(system == SystemKind::Three);
    ExpansionReport {
        self_energy: match system {
            SystemKind::Two => format!("{}·I(U_eps, v_eps)", config.ell),
            SystemKind::Three => format!("{}·I(U_eps, v_eps, w_eps) + I(w_eps)", config.ell),
        },
        bump_count,
        attraction_all,
        attraction_nearest: ax + ay,
        nearest_same_pairs: cx + cy,
        repulsion_all,
        repulsion_nearest,
        nearest_cross_pairs,
        cross_terms,
        origin_terms,
        interaction_all: attraction_all + repulsion_all + origin_sum,
        interaction_nearest: ax + ay + repulsion_nearest + origin_sum,
        ell_times_g: config.ell as f64
            * reduced_g(system, constants, config.ell, epsilon, config.r, config.rho),
        error_order: format!("O(eps^({:.5} + sigma))", m / (m - n)),
    }
}
