//! The multi-bump ansatz on a 3D box, its energy, residuals and symmetry metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::{residual_values, ModifiedPair, SystemKind};
use crate::krylov::{self, minres};
use crate::landscape::BumpConfiguration;
use crate::radial::{RadialProfile, DECAY_TAU};
use crate::{Result, SolverError};

/// Minimum distance, in decay lengths, between any bump centre and the box wall.
pub const BOX_MARGIN: f64 = 8.0;

/// Largest grid `newton_refine` accepts.
pub const NEWTON_MAX_NODES: usize = 96 * 96 * 96;

/// Newton stops once the residual has dropped by this factor.
pub const NEWTON_REDUCTION: f64 = 1e-3;

/// Residuals below this are treated as already converged.
pub const NEWTON_ATOL: f64 = 1e-9;

/// Target node spacing for energy checks; keeps a single bump within 1% of
/// its radial energy.
pub const DEFAULT_SPACING: f64 = 0.1;

const MINRES_RTOL: f64 = 1e-7;
const MINRES_MAX_ITER: usize = 4000;
const DAMPING_STEPS: u32 = 7;

/// Tensor grid on `[-L₁, L₁] × [-L₂, L₂] × [-L₃, L₃]`.
///
/// Every axis has an even node count, so the coordinate planes `x_a = 0`
/// fall halfway between nodes and reflections map nodes onto nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    half_width: [f64; 3],
    n_per_axis: [usize; 3],
}

impl BoxGrid {
    pub fn new(half_width: [f64; 3], n_per_axis: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            let (l, n) = (half_width[a], n_per_axis[a]);
            if !(l.is_finite() && l > 0.0) {
                return Err(SolverError::InvalidGrid(format!(
                    "half width {l} on axis {a} must be positive"
                )));
            }
            if n < 4 || n % 2 != 0 {
                return Err(SolverError::InvalidGrid(format!(
                    "axis {a} needs an even node count of at least 4, got {n}"
                )));
            }
        }
        Ok(Self {
            half_width,
            n_per_axis,
        })
    }

    /// Even node counts giving a spacing of at most `h` on every axis.
    pub fn with_spacing(half_width: [f64; 3], h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(SolverError::InvalidGrid(format!(
                "spacing {h} must be positive"
            )));
        }
        let n = half_width.map(|l| {
            let n = (2.0 * l / h).ceil() as usize + 1;
            (n + n % 2).max(4)
        });
        Self::new(half_width, n)
    }

    /// Smallest box holding `config` with `BOX_MARGIN` to spare. Axes 1 and 2 share
    /// their extent and node count so that rotations about `x₃` stay square.
    pub fn enclosing(
        config: &BumpConfiguration,
        n_plane: usize,
        n_vertical: usize,
    ) -> Result<Self> {
        let reach = config
            .x_points
            .iter()
            .chain(&config.y_points)
            .flat_map(|p| [p[0].abs(), p[1].abs()])
            .fold(0.0, f64::max);
        let l = reach + BOX_MARGIN;
        Self::new([l, l, BOX_MARGIN], [n_plane, n_plane, n_vertical])
    }

    pub fn half_width(&self) -> [f64; 3] {
        self.half_width
    }

    pub fn n_per_axis(&self) -> [usize; 3] {
        self.n_per_axis
    }

    pub fn spacing(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 2.0 * self.half_width[a] / (self.n_per_axis[a] - 1) as f64)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -self.half_width[axis] + i as f64 * self.spacing()[axis]
    }

    pub fn len(&self) -> usize {
        self.n_per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_per_axis[1] + j) * self.n_per_axis[2] + k
    }

    fn slab(&self) -> usize {
        self.n_per_axis[1] * self.n_per_axis[2]
    }

    /// Whether every bump centre keeps `margin` from each face.
    pub fn contains(&self, config: &BumpConfiguration, margin: f64) -> bool {
        config
            .x_points
            .iter()
            .chain(&config.y_points)
            .all(|p| (0..3).all(|a| p[a].abs() + margin <= self.half_width[a] + 1e-12))
    }

    fn trapezoid(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing()[axis];
        if i == 0 || i + 1 == self.n_per_axis[axis] {
            0.5 * h
        } else {
            h
        }
    }
}

/// Real values at the nodes of a `BoxGrid`, row-major in `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3D {
    grid: BoxGrid,
    values: Vec<f64>,
}

impl Field3D {
    pub fn new(grid: BoxGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SolverError::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: BoxGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal `L²` norm over the box.
    pub fn l2_norm(&self) -> f64 {
        weighted_sum(&self.grid, |idx| self.values[idx] * self.values[idx]).sqrt()
    }

    /// Tricubic Lagrange interpolation; `None` outside the box.
    pub fn sample(&self, p: [f64; 3]) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut weights = [[0.0; 4]; 3];
        for a in 0..3 {
            let l = self.grid.half_width[a];
            if !(p[a] >= -l && p[a] <= l) {
                return None;
            }
            let n = self.grid.n_per_axis[a];
            let t = (p[a] + l) / self.grid.spacing()[a];
            let b = ((t.floor() as isize) - 1).clamp(0, n as isize - 4) as usize;
            let x = t - (b + 1) as f64;
            weights[a] = [
                -x * (x - 1.0) * (x - 2.0) / 6.0,
                (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
                -(x + 1.0) * x * (x - 2.0) / 2.0,
                (x + 1.0) * x * (x - 1.0) / 6.0,
            ];
            base[a] = b;
        }
        let mut acc = 0.0;
        for (di, wi) in weights[0].iter().enumerate() {
            for (dj, wj) in weights[1].iter().enumerate() {
                for (dk, wk) in weights[2].iter().enumerate() {
                    acc += wi * wj * wk * self.get(base[0] + di, base[1] + dj, base[2] + dk);
                }
            }
        }
        Some(acc)
    }

    /// `sup |f(x) − f(R_a x)|` for the reflection `x_a ↦ −x_a`.
    pub fn reflection_defect(&self, axis: usize) -> f64 {
        let g = self.grid;
        let [nx, ny, nz] = g.n_per_axis;
        (0..nx)
            .into_par_iter()
            .map(|i| {
                let mut m: f64 = 0.0;
                for j in 0..ny {
                    for k in 0..nz {
                        let mut t = [i, j, k];
                        t[axis] = g.n_per_axis[axis] - 1 - t[axis];
                        m = m.max((self.get(i, j, k) - self.get(t[0], t[1], t[2])).abs());
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Sum of `w(node)·f(node)` with trapezoidal weights, reduced slab by slab
/// in index order so the result does not depend on the thread count.
fn weighted_sum(grid: &BoxGrid, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let [nx, ny, nz] = grid.n_per_axis;
    let partial: Vec<f64> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let wi = grid.trapezoid(0, i);
            let mut s = 0.0;
            for j in 0..ny {
                let wij = wi * grid.trapezoid(1, j);
                let row = grid.index(i, j, 0);
                for k in 0..nz {
                    s += wij * grid.trapezoid(2, k) * f(row + k);
                }
            }
            s
        })
        .collect();
    partial.iter().sum()
}

fn common_grid(fields: &[&Field3D]) -> Result<BoxGrid> {
    let first = fields
        .first()
        .ok_or_else(|| SolverError::InvalidParameter("no fields given".into()))?;
    if fields.iter().any(|f| f.grid != first.grid) {
        return Err(SolverError::GridMismatch);
    }
    Ok(first.grid)
}

/// 7-point Laplacian with zero values outside the box.
fn laplacian(grid: &BoxGrid, values: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = grid.n_per_axis;
    let [hx, hy, hz] = grid.spacing();
    let (cx, cy, cz) = (1.0 / (hx * hx), 1.0 / (hy * hy), 1.0 / (hz * hz));
    let slab = grid.slab();
    out.par_chunks_mut(slab).enumerate().for_each(|(i, chunk)| {
        let at = |i: isize, j: isize, k: isize| -> f64 {
            if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
                0.0
            } else {
                values[grid.index(i as usize, j as usize, k as usize)]
            }
        };
        let i = i as isize;
        for j in 0..ny as isize {
            for k in 0..nz as isize {
                let c = at(i, j, k);
                chunk[j as usize * nz + k as usize] = cx
                    * (at(i - 1, j, k) + at(i + 1, j, k) - 2.0 * c)
                    + cy * (at(i, j - 1, k) + at(i, j + 1, k) - 2.0 * c)
                    + cz * (at(i, j, k - 1) + at(i, j, k + 1) - 2.0 * c);
            }
        }
    });
}

/// `∫|∇f|²` from forward differences on every grid edge, including the
/// edges to the zero ghost layer. This equals `⟨-Δ_h f, f⟩` for the 7-point
/// Laplacian, so the discrete energy and the discrete residual agree.
fn dirichlet_sq(grid: &BoxGrid, values: &[f64]) -> f64 {
    let [nx, ny, nz] = grid.n_per_axis;
    let h = grid.spacing();
    let inv = [
        1.0 / (h[0] * h[0]),
        1.0 / (h[1] * h[1]),
        1.0 / (h[2] * h[2]),
    ];
    let at = |i: usize, j: usize, k: usize| -> f64 {
        if i >= nx || j >= ny || k >= nz {
            0.0
        } else {
            values[grid.index(i, j, k)]
        }
    };
    let partial: Vec<f64> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..ny {
                for k in 0..nz {
                    let c = at(i, j, k);
                    s += inv[0] * (at(i + 1, j, k) - c).powi(2)
                        + inv[1] * (at(i, j + 1, k) - c).powi(2)
                        + inv[2] * (at(i, j, k + 1) - c).powi(2);
                    // Edges from the lower ghost layers.
                    if i == 0 {
                        s += inv[0] * c * c;
                    }
                    if j == 0 {
                        s += inv[1] * c * c;
                    }
                    if k == 0 {
                        s += inv[2] * c * c;
                    }
                }
            }
            s
        })
        .collect();
    partial.iter().sum::<f64>() * h[0] * h[1] * h[2]
}

/// Discrete `H¹` norm.
pub fn h1_norm(field: &Field3D) -> f64 {
    (dirichlet_sq(&field.grid, &field.values) + field.l2_norm().powi(2)).sqrt()
}

/// `∫ a·b` by the trapezoidal rule.
pub fn coupling_integral(a: &Field3D, b: &Field3D) -> Result<f64> {
    let grid = common_grid(&[a, b])?;
    Ok(weighted_sum(&grid, |idx| a.values[idx] * b.values[idx]))
}

/// `½Σ∫(|∇f|² + f²) − ¼Σ∫f⁴ + ε·Σ_{a<b}∫f_a f_b` over two or three components.
pub fn energy_i(fields: &[&Field3D], epsilon: f64) -> Result<f64> {
    let grid = common_grid(fields)?;
    let mut total = 0.0;
    for f in fields {
        let quad = weighted_sum(&grid, |idx| {
            let x = f.values[idx];
            0.5 * x * x - 0.25 * x * x * x * x
        });
        total += 0.5 * dirichlet_sq(&grid, &f.values) + quad;
    }
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            total += epsilon * coupling_integral(fields[a], fields[b])?;
        }
    }
    Ok(total)
}

/// Pointwise `-Δf_a + f_a − f_a³ + ε·Σ_{b≠a} f_b` for every component.
fn system_residual(grid: &BoxGrid, comps: &[&[f64]], epsilon: f64) -> Vec<Vec<f64>> {
    comps
        .iter()
        .enumerate()
        .map(|(a, f)| {
            let mut out = vec![0.0; grid.len()];
            laplacian(grid, f, &mut out);
            out.par_iter_mut().enumerate().for_each(|(idx, r)| {
                let x = f[idx];
                let others: f64 = comps
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| *b != a)
                    .map(|(_, g)| g[idx])
                    .sum();
                *r = -*r + x - x * x * x + epsilon * others;
            });
            out
        })
        .collect()
}

/// Trapezoidal `L²` norms of the discrete system residual, one per component.
pub fn residual_norms(fields: &[&Field3D], epsilon: f64) -> Result<Vec<f64>> {
    let grid = common_grid(fields)?;
    let comps: Vec<&[f64]> = fields.iter().map(|f| f.values.as_slice()).collect();
    Ok(system_residual(&grid, &comps, epsilon)
        .iter()
        .map(|r| weighted_sum(&grid, |idx| r[idx] * r[idx]).sqrt())
        .collect())
}

/// Assembled ansatz, one field per component.
#[derive(Debug, Clone)]
pub struct AssembledFields {
    pub system: SystemKind,
    pub epsilon: f64,
    pub config: BumpConfiguration,
    pub fields: Vec<Field3D>,
    /// Some node sat beyond a profile's `r_max` and used its far-field law.
    pub extrapolated: bool,
    /// `L²` norms of `Σ_j b_j³ − (Σ_j b_j)³` per component: the part of the
    /// residual produced by bumps seeing each other.
    pub interaction_residual: Vec<f64>,
    /// Pointwise residual of the ansatz for the continuous system: translated
    /// radial residuals of the truncated pair plus the cubic cross terms.
    pub continuum_residual: Vec<Field3D>,
}

impl AssembledFields {
    pub fn u(&self) -> &Field3D {
        &self.fields[0]
    }

    pub fn v(&self) -> &Field3D {
        &self.fields[1]
    }

    pub fn w(&self) -> Option<&Field3D> {
        self.fields.get(2)
    }

    pub fn refs(&self) -> Vec<&Field3D> {
        self.fields.iter().collect()
    }
}

/// A translated radial profile together with its radial residual.
type Term<'a> = ([f64; 3], &'a RadialProfile, &'a RadialProfile);

fn component_terms<'a>(
    pair: &'a ModifiedPair,
    residuals: &'a [RadialProfile],
    config: &BumpConfiguration,
) -> Result<Vec<Vec<Term<'a>>>> {
    let omega = match pair.system {
        SystemKind::Two => None,
        SystemKind::Three => Some(pair.w_eps.as_ref().ok_or_else(|| {
            SolverError::InvalidParameter("three-system pair without an omega profile".into())
        })?),
    };
    // Slot 0 is U_ε, slot 1 is v_ε, slot 2 is ω_ε.
    let slot = |s: usize| -> (&'a RadialProfile, &'a RadialProfile) {
        match s {
            0 => (&pair.u_eps, &residuals[0]),
            1 => (&pair.v_eps, &residuals[1]),
            _ => (
                omega.unwrap_or(&pair.v_eps),
                &residuals[residuals.len() - 1],
            ),
        }
    };
    let family = |pts: &[[f64; 3]], s: usize| {
        let (p, r) = slot(s);
        pts.iter().map(move |c| (*c, p, r)).collect::<Vec<_>>()
    };
    let (xs, ys) = (&config.x_points, &config.y_points);
    let origin = [[0.0; 3]];
    Ok(match pair.system {
        SystemKind::Two => vec![
            [family(xs, 0), family(ys, 1)].concat(),
            [family(ys, 0), family(xs, 1)].concat(),
        ],
        SystemKind::Three => vec![
            [family(xs, 0), family(ys, 1), family(&origin, 2)].concat(),
            [family(xs, 2), family(ys, 0), family(&origin, 1)].concat(),
            [family(xs, 1), family(ys, 2), family(&origin, 0)].concat(),
        ],
    })
}

/// `(Σ b, Σ b³, Σ R_b, extrapolated)` over the terms of one component at `p`.
fn superpose(terms: &[Term<'_>], p: [f64; 3]) -> (f64, f64, f64, bool) {
    let (mut sum, mut cubes, mut radial, mut ext) = (0.0, 0.0, 0.0, false);
    for (c, profile, residual) in terms {
        let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
        let (val, e) = profile.eval(d);
        ext |= e;
        sum += val;
        cubes += val * val * val;
        radial += residual.value_at(d);
    }
    (sum, cubes, radial, ext)
}

/// The ansatz at an arbitrary point, one value per component.
pub fn ansatz_at(
    pair: &ModifiedPair,
    config: &BumpConfiguration,
    points: &[[f64; 3]],
) -> Result<Vec<Vec<f64>>> {
    let rgrid = *pair.u_eps.grid();
    let residuals = residual_values(pair)
        .into_iter()
        .map(|r| RadialProfile::new(rgrid, r))
        .collect::<Result<Vec<_>>>()?;
    let terms = component_terms(pair, &residuals, config)?;
    Ok(points
        .iter()
        .map(|p| terms.iter().map(|t| superpose(t, *p).0).collect())
        .collect())
}

/// Superposes translated radial profiles at every node.
///
/// Two-system: `u = Σ U_ε(x−x^j) + Σ v_ε(x−y^j)`, `v = Σ U_ε(x−y^j) + Σ v_ε(x−x^j)`.
/// Three-system adds the origin bump, cycling `(U_ε, v_ε, ω_ε)` through the slots.
pub fn assemble_fields(
    pair: &ModifiedPair,
    config: &BumpConfiguration,
    grid: &BoxGrid,
) -> Result<AssembledFields> {
    if !grid.contains(config, BOX_MARGIN) {
        return Err(SolverError::InvalidGrid(format!(
            "box {:?} does not hold the bumps with margin {BOX_MARGIN}",
            grid.half_width()
        )));
    }
    let rgrid = *pair.u_eps.grid();
    let residuals = residual_values(pair)
        .into_iter()
        .map(|r| RadialProfile::new(rgrid, r))
        .collect::<Result<Vec<_>>>()?;
    let terms = component_terms(pair, &residuals, config)?;
    let [ny, nz] = [grid.n_per_axis()[1], grid.n_per_axis()[2]];
    let mut fields = Vec::with_capacity(terms.len());
    let mut extrapolated = false;
    let mut interaction_residual = Vec::with_capacity(terms.len());
    let mut continuum_residual = Vec::with_capacity(terms.len());
    for comp in &terms {
        let mut values = vec![0.0; grid.len()];
        let mut cross = vec![0.0; grid.len()];
        let mut continuum = vec![0.0; grid.len()];
        let flags: Vec<bool> = values
            .par_chunks_mut(grid.slab())
            .zip(
                cross
                    .par_chunks_mut(grid.slab())
                    .zip(continuum.par_chunks_mut(grid.slab())),
            )
            .enumerate()
            .map(|(i, (chunk, (cross_chunk, cont_chunk)))| {
                let x = grid.coord(0, i);
                let mut flagged = false;
                for j in 0..ny {
                    let y = grid.coord(1, j);
                    for k in 0..nz {
                        let z = grid.coord(2, k);
                        let (sum, cubes, radial, ext) = superpose(comp, [x, y, z]);
                        flagged |= ext;
                        let interaction = cubes - sum * sum * sum;
                        chunk[j * nz + k] = sum;
                        cross_chunk[j * nz + k] = interaction;
                        cont_chunk[j * nz + k] = radial + interaction;
                    }
                }
                flagged
            })
            .collect();
        extrapolated |= flags.iter().any(|f| *f);
        interaction_residual.push(weighted_sum(grid, |idx| cross[idx] * cross[idx]).sqrt());
        fields.push(Field3D::new(*grid, values)?);
        continuum_residual.push(Field3D::new(*grid, continuum)?);
    }
    Ok(AssembledFields {
        system: pair.system,
        epsilon: pair.epsilon,
        config: config.clone(),
        fields,
        extrapolated,
        interaction_residual,
        continuum_residual,
    })
}

/// `e^{−m r}/(m r) + e^{−m ρ}/(m ρ) + ε·e^{−(1−τ)D} + ε⁴`, with `D` the nearest
/// cross distance.
pub fn residual_envelope(config: &BumpConfiguration, epsilon: f64) -> f64 {
    let same = |s: f64| {
        let d = config.m * s;
        (-d).exp() / d
    };
    same(config.r)
        + same(config.rho)
        + epsilon * (-(1.0 - DECAY_TAU) * config.nearest_cross_distance()).exp()
        + epsilon.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegregationReport {
    /// `sup |u(x) − v(T_ℓ x)|` over nodes whose image stays in the box.
    pub linf_shift_diff: f64,
    pub l2_shift_diff: f64,
    /// `min_{i,j} |x^i − y^j| / |ln ε|`.
    pub min_cross_distance_over_logeps: f64,
    /// `sup |u|`, for relative comparisons.
    pub peak: f64,
    /// The rotation mapped nodes onto nodes, so no resampling was needed.
    pub exact_node_map: bool,
}

/// Compares `u` with `v` rotated by `π/ℓ` about the `x₃` axis.
pub fn segregation_metrics(
    u: &Field3D,
    v: &Field3D,
    config: &BumpConfiguration,
    epsilon: f64,
) -> Result<SegregationReport> {
    let grid = common_grid(&[u, v])?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SolverError::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1)"
        )));
    }
    let [nx, ny, nz] = grid.n_per_axis();
    let square = nx == ny && grid.half_width()[0] == grid.half_width()[1];
    let exact = config.ell == 2 && square;
    let angle = std::f64::consts::PI / config.ell as f64;
    let (c, s) = (angle.cos(), angle.sin());
    let rows: Vec<(f64, f64)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let wi = grid.trapezoid(0, i);
            let (mut sup, mut sq): (f64, f64) = (0.0, 0.0);
            for j in 0..ny {
                let wij = wi * grid.trapezoid(1, j);
                for k in 0..nz {
                    let rotated = if exact {
                        // (x, y) ↦ (−y, x) is the node map (i, j) ↦ (n−1−j, i).
                        Some(v.get(nx - 1 - j, i, k))
                    } else {
                        let (x, y, z) = (grid.coord(0, i), grid.coord(1, j), grid.coord(2, k));
                        v.sample([c * x - s * y, s * x + c * y, z])
                    };
                    if let Some(vt) = rotated {
                        let d = u.get(i, j, k) - vt;
                        sup = sup.max(d.abs());
                        sq += wij * grid.trapezoid(2, k) * d * d;
                    }
                }
            }
            (sup, sq)
        })
        .collect();
    let linf = rows.iter().fold(0.0, |m: f64, r| m.max(r.0));
    let l2 = rows.iter().map(|r| r.1).sum::<f64>().sqrt();
    Ok(SegregationReport {
        linf_shift_diff: linf,
        l2_shift_diff: l2,
        min_cross_distance_over_logeps: config.min_cross_distance() / epsilon.ln().abs(),
        peak: u.sup_norm(),
        exact_node_map: exact,
    })
}

/// Averages a field over the reflections `x₂ ↦ −x₂`, `x₃ ↦ −x₃`, and also
/// `x₁ ↦ −x₁` when `with_x1` holds (rotation by π for ℓ = 2 given the others).
fn symmetrize(grid: &BoxGrid, values: &mut [f64], with_x1: bool) {
    let [nx, ny, nz] = grid.n_per_axis();
    let src = values.to_vec();
    // Mirror pairs are visited smallest index first, so every image of a node
    // adds the same numbers in the same order.
    let pair = |t: usize, n: usize| (t.min(n - 1 - t), t.max(n - 1 - t));
    values
        .par_chunks_mut(grid.slab())
        .enumerate()
        .for_each(|(i, chunk)| {
            let (i0, i1) = if with_x1 { pair(i, nx) } else { (i, i) };
            for j in 0..ny {
                let (j0, j1) = pair(j, ny);
                for k in 0..nz {
                    let (k0, k1) = pair(k, nz);
                    let at = |a, b, c| src[grid.index(a, b, c)];
                    let quad =
                        |a| (at(a, j0, k0) + at(a, j0, k1)) + (at(a, j1, k0) + at(a, j1, k1));
                    chunk[j * nz + k] = if with_x1 {
                        (quad(i0) + quad(i1)) / 8.0
                    } else {
                        quad(i0) / 4.0
                    };
                }
            }
        });
}

/// What `newton_refine` drives to zero.
#[derive(Debug, Clone, Copy)]
pub enum NewtonTarget<'a> {
    /// The discrete system `F_h(X) = 0` itself.
    Discrete,
    /// `F_h(X) − F_h(X₀) + R(X₀) = 0`, where `R` is the known residual of the
    /// starting fields for the continuous system. The update then estimates
    /// the continuous corrector instead of the grid's truncation error.
    DefectCorrected(&'a [Field3D]),
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub fields: Vec<Field3D>,
    pub accepted_steps: usize,
    pub inner_iterations: Vec<usize>,
    /// Volume-weighted Euclidean norms of the full residual vector.
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Discrete `H¹` norm of the total update.
    pub corrector_h1: f64,
    pub ansatz_h1: f64,
    pub converged: bool,
}

/// Damped Newton on the discrete system, with MINRES for the symmetric
/// Jacobian and every update projected onto the symmetric class.
pub fn newton_refine(
    fields: &[&Field3D],
    epsilon: f64,
    ell: usize,
    max_iters: usize,
    target: NewtonTarget<'_>,
) -> Result<NewtonOutcome> {
    let grid = common_grid(fields)?;
    if grid.len() > NEWTON_MAX_NODES {
        return Err(SolverError::InvalidGrid(format!(
            "{} nodes exceed the Newton limit of {NEWTON_MAX_NODES}",
            grid.len()
        )));
    }
    let nc = fields.len();
    let len = grid.len();
    let h = grid.spacing();
    let vol = h[0] * h[1] * h[2];
    let with_x1 = ell == 2;

    let mut state: Vec<f64> = fields
        .iter()
        .flat_map(|f| f.values.iter().copied())
        .collect();
    let initial = state.clone();
    let discrete = |x: &[f64]| -> Vec<f64> {
        let comps: Vec<&[f64]> = x.chunks(len).collect();
        system_residual(&grid, &comps, epsilon).concat()
    };
    let shift: Option<Vec<f64>> = match target {
        NewtonTarget::Discrete => None,
        NewtonTarget::DefectCorrected(continuum) => {
            if continuum.len() != nc || continuum.iter().any(|f| f.grid != grid) {
                return Err(SolverError::GridMismatch);
            }
            let base = discrete(&state);
            let cont = continuum.iter().flat_map(|f| f.values.iter());
            Some(base.iter().zip(cont).map(|(b, c)| b - c).collect())
        }
    };
    let residual_of = |x: &[f64]| -> Vec<f64> {
        let mut r = discrete(x);
        if let Some(s) = &shift {
            r.iter_mut().zip(s).for_each(|(ri, si)| *ri -= si);
        }
        r
    };
    let norm_of = |r: &[f64]| (vol * krylov::dot(r, r)).sqrt();

    let mut res = residual_of(&state);
    let initial_residual = norm_of(&res);
    let target = (NEWTON_REDUCTION * initial_residual).max(NEWTON_ATOL);
    let mut current = initial_residual;
    let mut accepted = 0;
    let mut inner = Vec::new();

    while current > target && accepted < max_iters {
        let diag: Vec<f64> = state.iter().map(|x| 1.0 - 3.0 * x * x).collect();
        let apply = |p: &[f64], out: &mut [f64]| {
            for (a, (pa, oa)) in p.chunks(len).zip(out.chunks_mut(len)).enumerate() {
                laplacian(&grid, pa, oa);
                let da = &diag[a * len..(a + 1) * len];
                oa.par_iter_mut().enumerate().for_each(|(idx, o)| {
                    let others: f64 = (0..nc).filter(|b| *b != a).map(|b| p[b * len + idx]).sum();
                    *o = -*o + da[idx] * pa[idx] + epsilon * others;
                });
            }
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let (mut step, outcome) = minres(apply, &rhs, MINRES_RTOL, MINRES_MAX_ITER);
        inner.push(outcome.iterations);
        for chunk in step.chunks_mut(len) {
            symmetrize(&grid, chunk, with_x1);
        }

        let mut taken = None;
        for damp in 0..DAMPING_STEPS {
            let lambda = 0.5f64.powi(damp as i32);
            let trial: Vec<f64> = state
                .iter()
                .zip(&step)
                .map(|(x, d)| x + lambda * d)
                .collect();
            let trial_res = residual_of(&trial);
            let trial_norm = norm_of(&trial_res);
            if trial_norm < current {
                taken = Some((trial, trial_res, trial_norm));
                break;
            }
        }
        match taken {
            Some((trial, trial_res, trial_norm)) => {
                state = trial;
                res = trial_res;
                current = trial_norm;
                accepted += 1;
            }
            None => {
                return Err(SolverError::DivergedNewton {
                    iteration: accepted + 1,
                    residual: current,
                })
            }
        }
    }

    let mut out = Vec::with_capacity(nc);
    let mut corrector_sq = 0.0;
    let mut ansatz_sq = 0.0;
    for a in 0..nc {
        let slice = &state[a * len..(a + 1) * len];
        let delta: Vec<f64> = slice
            .iter()
            .zip(&initial[a * len..(a + 1) * len])
            .map(|(x, y)| x - y)
            .collect();
        corrector_sq += h1_norm(&Field3D::new(grid, delta)?).powi(2);
        ansatz_sq += h1_norm(fields[a]).powi(2);
        out.push(Field3D::new(grid, slice.to_vec())?);
    }
    Ok(NewtonOutcome {
        fields: out,
        accepted_steps: accepted,
        inner_iterations: inner,
        initial_residual,
        final_residual: current,
        corrector_h1: corrector_sq.sqrt(),
        ansatz_h1: ansatz_sq.sqrt(),
        converged: current <= target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::bump_positions;

    fn gaussian_field(grid: BoxGrid, centre: [f64; 3]) -> Field3D {
        let [nx, ny, nz] = grid.n_per_axis();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let p = [grid.coord(0, i), grid.coord(1, j), grid.coord(2, k)];
                    let r2: f64 = (0..3).map(|a| (p[a] - centre[a]).powi(2)).sum();
                    values.push((-r2).exp());
                }
            }
        }
        Field3D::new(grid, values).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(BoxGrid::new([5.0; 3], [11, 12, 12]).is_err());
        assert!(BoxGrid::new([0.0, 5.0, 5.0], [12; 3]).is_err());
        let g = BoxGrid::new([5.0; 3], [12; 3]).unwrap();
        assert!((g.coord(0, 0) + 5.0).abs() < 1e-15);
        assert!((g.coord(0, 11) - 5.0).abs() < 1e-12);
        assert!((g.coord(1, 5) + g.coord(1, 6)).abs() < 1e-12);
    }

    #[test]
    fn zero_fields_have_zero_energy() {
        let g = BoxGrid::new([4.0; 3], [10; 3]).unwrap();
        let z = Field3D::zeros(g);
        assert_eq!(energy_i(&[&z, &z], 0.3).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_l2_and_gradient() {
        // ∫e^{-2r²} = (π/2)^{3/2}; ∫|∇e^{-r²}|² = 3(π/2)^{3/2}.
        let g = BoxGrid::new([5.0; 3], [80; 3]).unwrap();
        let f = gaussian_field(g, [0.0; 3]);
        let mass = (std::f64::consts::PI / 2.0).powf(1.5);
        assert!((f.l2_norm().powi(2) / mass - 1.0).abs() < 1e-6);
        let coarse = dirichlet_sq(&g, f.values()) / (3.0 * mass) - 1.0;
        let g2 = BoxGrid::new([5.0; 3], [160; 3]).unwrap();
        let fine = dirichlet_sq(&g2, gaussian_field(g2, [0.0; 3]).values()) / (3.0 * mass) - 1.0;
        assert!(coarse.abs() < 0.02, "{coarse}");
        let ratio = coarse / fine;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sampling_reproduces_cubics() {
        let g = BoxGrid::new([3.0, 2.0, 2.5], [10, 12, 8]).unwrap();
        let poly = |p: [f64; 3]| 1.0 + p[0] - 2.0 * p[1] * p[1] + p[0] * p[1] * p[2] + p[2].powi(3);
        let [nx, ny, nz] = g.n_per_axis();
        let mut values = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    values.push(poly([g.coord(0, i), g.coord(1, j), g.coord(2, k)]));
                }
            }
        }
        let f = Field3D::new(g, values).unwrap();
        for p in [[0.1, -0.3, 0.77], [2.9, 1.95, -2.4], [-3.0, 0.0, 0.0]] {
            assert!((f.sample(p).unwrap() - poly(p)).abs() < 1e-10);
        }
        assert!(f.sample([3.1, 0.0, 0.0]).is_none());
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = BoxGrid::new([2.0, 3.0, 1.5], [8, 10, 6]).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| ((i * 5 % 11) as f64).cos()).collect();
        let (mut la, mut lb) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        laplacian(&g, &a, &mut la);
        laplacian(&g, &b, &mut lb);
        let lhs = krylov::dot(&la, &b);
        let rhs = krylov::dot(&a, &lb);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn dirichlet_form_matches_laplacian() {
        let g = BoxGrid::new([2.0, 3.0, 1.5], [8, 10, 6]).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let mut la = vec![0.0; g.len()];
        laplacian(&g, &a, &mut la);
        let h = g.spacing();
        let form = -krylov::dot(&la, &a) * h[0] * h[1] * h[2];
        let direct = dirichlet_sq(&g, &a);
        assert!((form - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn spacing_constructor_rounds_to_even() {
        let g = BoxGrid::with_spacing([8.0, 8.0, 5.0], 0.1).unwrap();
        assert!(g.n_per_axis().iter().all(|n| n % 2 == 0));
        assert!(g.spacing().iter().all(|h| *h <= 0.1));
    }

    #[test]
    fn symmetrize_projects() {
        let g = BoxGrid::new([2.0; 3], [6; 3]).unwrap();
        let mut v: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        symmetrize(&g, &mut v, true);
        let f = Field3D::new(g, v.clone()).unwrap();
        for a in 0..3 {
            assert!(f.reflection_defect(a) < 1e-15);
        }
        let mut again = v.clone();
        symmetrize(&g, &mut again, true);
        assert_eq!(again, v);
    }

    #[test]
    fn rotation_metric_vanishes_for_rotated_copy() {
        // Gaussians on the ℓ = 3 rings with r = ρ: v is u rotated by π/3.
        let cfg = bump_positions(3, 1.5, 1.5).unwrap();
        let g = BoxGrid::new([4.0, 4.0, 3.0], [48, 48, 32]).unwrap();
        let sum = |pts: &[[f64; 3]]| {
            let mut acc = Field3D::zeros(g);
            for p in pts {
                let f = gaussian_field(g, *p);
                for (a, b) in acc.values.iter_mut().zip(f.values()) {
                    *a += b;
                }
            }
            acc
        };
        let (u, v) = (sum(&cfg.x_points), sum(&cfg.y_points));
        let rep = segregation_metrics(&u, &v, &cfg, 0.05).unwrap();
        assert!(!rep.exact_node_map);
        assert!(rep.linf_shift_diff < 2e-3 * rep.peak, "{rep:?}");
        let expected = cfg.min_cross_distance() / 0.05f64.ln().abs();
        assert!((rep.min_cross_distance_over_logeps - expected).abs() < 1e-15);
    }

    #[test]
    fn newton_rejects_large_grids() {
        let g = BoxGrid::new([4.0; 3], [98, 98, 98]).unwrap();
        let z = Field3D::zeros(g);
        assert!(matches!(
            newton_refine(&[&z, &z], 0.0, 2, 3, NewtonTarget::Discrete),
            Err(SolverError::InvalidGrid(_))
        ));
    }

    #[test]
    fn newton_on_zero_takes_no_steps() {
        let g = BoxGrid::new([4.0; 3], [12; 3]).unwrap();
        let z = Field3D::zeros(g);
        let out = newton_refine(&[&z, &z], 0.1, 2, 5, NewtonTarget::Discrete).unwrap();
        assert_eq!(out.accepted_steps, 0);
        assert!(out.converged);
    }

    #[test]
    fn envelope_terms() {
        let cfg = bump_positions(2, 4.0, 4.0).unwrap();
        let e = residual_envelope(&cfg, 0.0);
        let d = cfg.m * 4.0;
        assert!((e - 2.0 * (-d).exp() / d).abs() < 1e-15);
    }
}
