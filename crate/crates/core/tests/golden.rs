//! Regression against values recorded from the default pipeline.

mod common;

use std::collections::BTreeMap;

use common::{base, constants, family};
use segbump_core::corrections::{assemble_modified, residual_modified, SystemKind};
use segbump_core::landscape::{epsilon_ladder, fit_radius, locate_maximum};
use serde::Deserialize;

#[derive(Deserialize)]
struct Series {
    epsilons: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct Golden {
    peak_value: f64,
    decay_amplitude: f64,
    c_attr: f64,
    c_cross: f64,
    c_origin: f64,
    residual_total: Series,
    radius_coefficient_two: BTreeMap<usize, f64>,
    #[serde(rename = "maximizer_ell2_eps1e-8")]
    maximizer: f64,
}

fn golden() -> Golden {
    serde_json::from_str(include_str!("data/golden.json")).unwrap()
}

fn close(label: &str, got: f64, want: f64, rel: f64) {
    assert!((got / want - 1.0).abs() <= rel, "{label}: {got} vs {want}");
}

#[test]
fn ground_state_and_constants() {
    let g = golden();
    close("peak", base().peak_value, g.peak_value, 1e-9);
    close("A", base().decay_amplitude, g.decay_amplitude, 1e-9);
    let k = constants();
    close("c_attr", k.c_attr, g.c_attr, 1e-9);
    close("c_cross", k.c_cross, g.c_cross, 1e-9);
    close("c_origin", k.c_origin, g.c_origin, 1e-9);
}

#[test]
fn residual_series() {
    let g = golden();
    for (e, want) in g
        .residual_total
        .epsilons
        .iter()
        .zip(&g.residual_total.values)
    {
        let got = residual_modified(&assemble_modified(&family(SystemKind::Two, *e), *e).unwrap())
            .total();
        close(&format!("residual at {e}"), got, *want, 1e-6);
    }
}

#[test]
fn radius_coefficients() {
    let g = golden();
    let k = constants();
    for (ell, want) in &g.radius_coefficient_two {
        let pts: Vec<(f64, f64)> = epsilon_ladder(4, 12)
            .into_iter()
            .map(|e| {
                (
                    e,
                    locate_maximum(SystemKind::Two, k, *ell, e, 1.0).unwrap().r,
                )
            })
            .collect();
        close(
            &format!("a for ell {ell}"),
            fit_radius(&pts).unwrap().a,
            *want,
            1e-7,
        );
    }
    let m = locate_maximum(SystemKind::Two, k, 2, 1e-8, 1.0).unwrap();
    close("maximizer", m.r, g.maximizer, 1e-8);
}
