//! Experiment runner for the segregated multi-bump pipeline.
//!
//! Every mode writes `report.json` (deterministic) and `meta.json`
//! (timestamps, cache activity) under `output_dir/<mode>/`.

pub mod config;
pub mod pipeline;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use segbump_core::corrections::{assemble_modified, residual_modified, PairResiduals, SystemKind};
use segbump_core::field::{
    assemble_fields, coupling_integral, energy_i, newton_refine, residual_envelope, residual_norms,
    segregation_metrics, BoxGrid, NewtonTarget, SegregationReport,
};
use segbump_core::io::{
    write_family, write_field_binary, write_json, write_landscape_csv, write_plane_csv,
    write_profile, Cache,
};
use segbump_core::landscape::{
    bump_positions, locate_maximum, predicted_coefficient, predicted_radius, scan_landscape,
    window_coefficient, DomainWindow, Maximizer,
};
use segbump_core::radial::decay_bound;
use segbump_core::SolverError;

pub use config::{ConfigError, Mode, Parameters, RunConfig};
use pipeline::{ladder_fit, Context, LadderFit};

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Value,
    pub files: Vec<String>,
}

/// Runs one mode and writes its reports.
pub fn run(config: &RunConfig) -> anyhow::Result<RunOutcome> {
    config.validate()?;
    let dir = config.mode_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ctx = Context::new(config.params.clone(), Cache::new(config.cache_dir()));
    let mut files = Vec::new();
    let results = match config.mode {
        Mode::GroundState => ground_state(&ctx, &dir, &mut files)?,
        Mode::Corrections => corrections(&ctx, &dir, &mut files)?,
        Mode::Constants => serde_json::to_value(ctx.constants()?)?,
        Mode::Landscape => landscape(&ctx, &dir, &mut files)?,
        Mode::Optimize => serde_json::to_value(optimize(&ctx)?)?,
        Mode::Assemble => assemble(&ctx, &dir, &mut files)?,
        Mode::VerifyScaling => serde_json::to_value(verify_scaling(&ctx)?)?,
        Mode::ThreeSystem => serde_json::to_value(three_system(&ctx)?)?,
        Mode::ReproduceTable => serde_json::to_value(reproduce_table(&ctx)?)?,
    };
    let report = json!({
        "mode": config.mode.name(),
        "parameters": config.params,
        "results": results,
    });
    write_json(&dir.join("report.json"), &report)?;
    files.insert(0, "report.json".into());
    let meta = json!({
        "created_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "version": env!("CARGO_PKG_VERSION"),
        "output_dir": config.output_dir,
        "cache_dir": config.cache_dir(),
        "cache": ctx.events(),
        "files": files,
    });
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(RunOutcome { report, files })
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        1
    }
}

/// Stable name of the failing module error, if there is one.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<SolverError>())
        .map(SolverError::kind)
        .unwrap_or(if err.downcast_ref::<ConfigError>().is_some() {
            "ConfigError"
        } else {
            "Other"
        })
}

/// Records a failed run as `error.json` in the mode directory.
pub fn write_error_report(config: &RunConfig, err: &anyhow::Error) -> anyhow::Result<()> {
    let report = json!({
        "mode": config.mode.name(),
        "error": error_kind(err),
        "message": format!("{err:#}"),
    });
    write_json(&config.mode_dir().join("error.json"), &report)?;
    Ok(())
}

fn ground_state(ctx: &Context, dir: &Path, files: &mut Vec<String>) -> anyhow::Result<Value> {
    let gs = ctx.ground()?;
    write_profile(&dir.join("ground_state.csv"), &gs.profile)?;
    files.extend(["ground_state.csv".into(), "ground_state.json".into()]);
    Ok(json!({
        "peak_value": gs.peak_value,
        "decay_amplitude": gs.decay_amplitude,
        "residual": gs.residual,
        "grid": gs.profile.grid(),
        "far_field": gs.profile.far_field(),
        "decay_bound": decay_bound(&gs.profile),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionsRow {
    pub epsilon: f64,
    pub directory: String,
    pub residuals: PairResiduals,
    pub decay_constant: f64,
    /// `sup|u₁|` and `sup|v₂|`, which vanish for two components.
    pub u1_sup: f64,
    pub v2_sup: f64,
    /// `max_k sup|v_k − ω_k|`, three components only.
    pub v_omega_gap: Option<f64>,
}

fn corrections(ctx: &Context, dir: &Path, files: &mut Vec<String>) -> anyhow::Result<Value> {
    let system = ctx.params.system;
    ctx.ground()?;
    let rows = ctx
        .params
        .epsilon
        .par_iter()
        .map(|&eps| -> anyhow::Result<CorrectionsRow> {
            let fam = ctx.family(system, eps)?;
            let pair = assemble_modified(&fam, eps)?;
            let name = format!("family_{}_eps{eps}", system.name());
            write_family(&dir.join(&name), &fam)?;
            let v_omega_gap = match system {
                SystemKind::Two => None,
                SystemKind::Three => Some(
                    (1..=4)
                        .filter_map(|k| {
                            let w = fam.w_k(k)?;
                            Some(
                                fam.v_k(k)
                                    .values()
                                    .iter()
                                    .zip(w.values())
                                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
                            )
                        })
                        .fold(0.0, f64::max),
                ),
            };
            Ok(CorrectionsRow {
                epsilon: eps,
                directory: name,
                residuals: residual_modified(&pair),
                decay_constant: fam.decay_constant(),
                u1_sup: fam.u_k(1).sup_norm(),
                v2_sup: fam.v_k(2).sup_norm(),
                v_omega_gap,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    files.extend(
        rows.iter()
            .map(|r| format!("{}/manifest.json", r.directory)),
    );
    Ok(json!({ "system": system, "rows": rows }))
}

fn landscape(ctx: &Context, dir: &Path, files: &mut Vec<String>) -> anyhow::Result<Value> {
    let p = &ctx.params;
    let (ell, eps) = (p.require_ell()?, p.single_epsilon()?);
    let mu = p.mu_for(p.system, ell);
    let land = scan_landscape(p.system, ctx.constants()?, ell, eps, mu, p.samples)?;
    write_landscape_csv(&dir.join("landscape.csv"), &land)?;
    files.push("landscape.csv".into());
    let best =
        land.samples
            .iter()
            .copied()
            .fold((f64::NAN, f64::NAN, f64::NEG_INFINITY), |b, s| {
                if s.2 > b.2 {
                    s
                } else {
                    b
                }
            });
    Ok(json!({
        "system": p.system,
        "ell": ell,
        "epsilon": eps,
        "mu": mu,
        "window": land.window,
        "per_axis": p.samples,
        "rows": land.samples.len(),
        "best_sample": { "r": best.0, "rho": best.1, "G": best.2 },
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub system: SystemKind,
    pub epsilon: f64,
    pub ell: usize,
    pub mu: f64,
    pub r: f64,
    pub rho: f64,
    pub value: f64,
    pub interior: bool,
    pub grid_cell: f64,
    pub window: DomainWindow,
    pub predicted_radius: f64,
    /// `r* / predicted_radius`.
    pub ratio: f64,
    /// Leading coefficient of the window's upper edge.
    pub window_coefficient: f64,
    /// `r* / (window_coefficient·|ln ε|)`.
    pub window_ratio: f64,
}

impl OptimizeReport {
    fn new(system: SystemKind, epsilon: f64, ell: usize, mu: f64, m: &Maximizer) -> Self {
        let predicted = predicted_radius(ell, epsilon, system);
        let wc = window_coefficient(ell, system);
        Self {
            system,
            epsilon,
            ell,
            mu,
            r: m.r,
            rho: m.rho,
            value: m.value,
            interior: m.interior,
            grid_cell: m.grid_cell,
            window: m.window,
            predicted_radius: predicted,
            ratio: m.r / predicted,
            window_coefficient: wc,
            window_ratio: m.r / (wc * epsilon.ln().abs()),
        }
    }
}

fn optimize(ctx: &Context) -> anyhow::Result<OptimizeReport> {
    let p = &ctx.params;
    let (ell, eps) = (p.require_ell()?, p.single_epsilon()?);
    let mu = p.mu_for(p.system, ell);
    let m = locate_maximum(p.system, ctx.constants()?, ell, eps, mu)?;
    Ok(OptimizeReport::new(p.system, eps, ell, mu, &m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonSummary {
    pub accepted_steps: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub corrector_h1: f64,
    pub ansatz_h1: f64,
    pub corrector_ratio: f64,
    pub converged: bool,
}

fn assemble(ctx: &Context, dir: &Path, files: &mut Vec<String>) -> anyhow::Result<Value> {
    let p = &ctx.params;
    let (ell, eps) = (p.require_ell()?, p.single_epsilon()?);
    let mu = p.mu_for(p.system, ell);
    let k = ctx.constants()?;
    let m = locate_maximum(p.system, k, ell, eps, mu)?;
    let fam = ctx.family(p.system, eps)?;
    let pair = assemble_modified(&fam, eps)?;
    let config = bump_positions(ell, m.r, m.rho)?;
    let grid = BoxGrid::enclosing(&config, p.n_plane, p.n_vertical)?;
    let asm = assemble_fields(&pair, &config, &grid)?;
    let refs = asm.refs();

    let names = ["u", "v", "w"];
    for (name, field) in names.iter().zip(&asm.fields) {
        write_field_binary(&dir.join(format!("{name}.bin")), name, field)?;
        write_plane_csv(&dir.join(format!("{name}_plane.csv")), field)?;
        files.extend([format!("{name}.bin"), format!("{name}_plane.csv")]);
    }
    let energy = energy_i(&refs, eps)?;
    let discrete = residual_norms(&refs, eps)?;
    let continuum: Vec<f64> = asm.continuum_residual.iter().map(|f| f.l2_norm()).collect();
    let continuum_total = continuum.iter().map(|x| x * x).sum::<f64>().sqrt();
    let envelope = residual_envelope(&config, eps);
    let segregation: SegregationReport = segregation_metrics(asm.u(), asm.v(), &config, eps)?;
    let newton = if p.newton {
        let out = newton_refine(
            &refs,
            eps,
            ell,
            8,
            NewtonTarget::DefectCorrected(&asm.continuum_residual),
        )?;
        Some(NewtonSummary {
            accepted_steps: out.accepted_steps,
            initial_residual: out.initial_residual,
            final_residual: out.final_residual,
            corrector_h1: out.corrector_h1,
            ansatz_h1: out.ansatz_h1,
            corrector_ratio: out.corrector_h1 / out.ansatz_h1,
            converged: out.converged,
        })
    } else {
        None
    };
    Ok(json!({
        "system": p.system,
        "ell": ell,
        "epsilon": eps,
        "mu": mu,
        "maximizer": OptimizeReport::new(p.system, eps, ell, mu, &m),
        "configuration": config,
        "grid": grid,
        "extrapolated": asm.extrapolated,
        "energy": energy,
        "coupling_uv": coupling_integral(asm.u(), asm.v())?,
        "discrete_residual": discrete,
        "continuum_residual": continuum,
        "interaction_residual": asm.interaction_residual,
        "envelope": envelope,
        "envelope_constant": continuum_total / envelope,
        "segregation": segregation,
        "newton": newton,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub residuals: PairResiduals,
    pub total: f64,
    /// Previous row's residual over this one; absent on the first row.
    pub ratio: Option<f64>,
    pub ratio_u: Option<f64>,
    pub ratio_v: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusRow {
    pub system: SystemKind,
    pub ell: usize,
    pub mu: f64,
    pub fitted: f64,
    pub b: f64,
    pub c: f64,
    pub rms: f64,
    pub predicted: f64,
    pub relative_error: f64,
    pub window_coefficient: f64,
    pub window_relative_error: f64,
    pub all_interior: bool,
}

impl RadiusRow {
    fn from_fit(f: &LadderFit) -> Self {
        let predicted = predicted_coefficient(f.ell, f.system);
        let wc = window_coefficient(f.ell, f.system);
        Self {
            system: f.system,
            ell: f.ell,
            mu: f.mu,
            fitted: f.fit.a,
            b: f.fit.b,
            c: f.fit.c,
            rms: f.fit.rms,
            predicted,
            relative_error: (f.fit.a - predicted) / predicted,
            window_coefficient: wc,
            window_relative_error: (f.fit.a - wc) / wc,
            all_interior: f.all_interior,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub system: SystemKind,
    pub rows: Vec<ScalingRow>,
    pub radius_fits: Vec<RadiusRow>,
}

pub const DEFAULT_SCALING_EPSILONS: [f64; 3] = [0.1, 0.05, 0.025];

fn verify_scaling(ctx: &Context) -> anyhow::Result<ScalingReport> {
    let p = &ctx.params;
    let eps: Vec<f64> = if p.epsilon.is_empty() {
        DEFAULT_SCALING_EPSILONS.to_vec()
    } else {
        p.epsilon.clone()
    };
    ctx.ground()?;
    let residuals = eps
        .par_iter()
        .map(|&e| -> anyhow::Result<PairResiduals> {
            let fam = ctx.family(p.system, e)?;
            Ok(residual_modified(&assemble_modified(&fam, e)?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = eps
        .iter()
        .zip(&residuals)
        .enumerate()
        .map(|(i, (&e, r))| {
            let prev = i.checked_sub(1).map(|j| residuals[j]);
            ScalingRow {
                epsilon: e,
                residuals: *r,
                total: r.total(),
                ratio: prev.map(|q| q.total() / r.total()),
                ratio_u: prev.map(|q| q.res_u / r.res_u),
                ratio_v: prev.map(|q| q.res_v / r.res_v),
            }
        })
        .collect();
    let k = ctx.constants()?;
    let ladder = ctx.ladder();
    let radius_fits = [2usize, 3, 4, 5]
        .iter()
        .map(|&ell| {
            let fit = ladder_fit(k, p.system, ell, p.mu_for(p.system, ell), &ladder)?;
            Ok(RadiusRow::from_fit(&fit))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ScalingReport {
        system: p.system,
        rows,
        radius_fits,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub epsilon: f64,
    pub r_three: f64,
    pub r_two: f64,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThreeSystemReport {
    /// `ℓ = 2`: the origin bump pulls the ring to radius `|ln ε|`.
    pub ell2: RadiusRow,
    /// `ℓ = 3`: maximizers on the ladder.
    pub ell3: Vec<OptimizeReport>,
    /// `ℓ = 5`: three versus two components.
    pub ell5: Vec<ComparisonRow>,
}

fn three_system(ctx: &Context) -> anyhow::Result<ThreeSystemReport> {
    let k = ctx.constants()?;
    let p = &ctx.params;
    let ladder = ctx.ladder();
    let three = SystemKind::Three;
    let ell2 = RadiusRow::from_fit(&ladder_fit(k, three, 2, p.mu_for(three, 2), &ladder)?);
    let ell3 = ladder
        .par_iter()
        .map(|&e| -> anyhow::Result<OptimizeReport> {
            let mu = p.mu_for(three, 3);
            Ok(OptimizeReport::new(
                three,
                e,
                3,
                mu,
                &locate_maximum(three, k, 3, e, mu)?,
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ell5 = ladder
        .par_iter()
        .map(|&e| -> anyhow::Result<ComparisonRow> {
            let a = locate_maximum(three, k, 5, e, p.mu_for(three, 5))?;
            let b = locate_maximum(SystemKind::Two, k, 5, e, p.mu_for(SystemKind::Two, 5))?;
            Ok(ComparisonRow {
                epsilon: e,
                r_three: a.r,
                r_two: b.r,
                relative_difference: (a.r - b.r) / b.r,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ThreeSystemReport { ell2, ell3, ell5 })
}

fn reproduce_table(ctx: &Context) -> anyhow::Result<Vec<RadiusRow>> {
    let k = ctx.constants()?;
    let ladder = ctx.ladder();
    let mut rows = Vec::new();
    for ell in [2usize, 3, 4, 5] {
        for system in [SystemKind::Two, SystemKind::Three] {
            let fit = ladder_fit(k, system, ell, ctx.params.mu_for(system, ell), &ladder)?;
            rows.push(RadiusRow::from_fit(&fit));
        }
    }
    Ok(rows)
}
