//! Checks against quantities computed by independent means.

mod common;

use common::{base, constants, family};
use segbump_core::corrections::{assemble_modified, SystemKind};
use segbump_core::field::{assemble_fields, energy_i, BoxGrid, DEFAULT_SPACING};
use segbump_core::interaction::radial_convolution;
use segbump_core::landscape::BumpConfiguration;
use segbump_core::quad::simpson;
use segbump_core::radial::{solve_ground_state, RadialGrid, RadialProfile};
use std::f64::consts::PI;

/// Classical RK4 shooting for `U'' = −(2/r)U' + U − U³`, bisecting on `U(0)`.
fn rk4_peak() -> f64 {
    let h = 1e-3;
    let rhs = |r: f64, y: [f64; 2]| [y[1], -2.0 / r * y[1] + y[0] - y[0].powi(3)];
    // +1: overshoots below zero, −1: turns back up, 0: undecided.
    let shoot = |a: f64| -> i32 {
        let r0 = 1e-3;
        let c = (a - a * a * a) / 6.0;
        let mut y = [a + c * r0 * r0, 2.0 * c * r0];
        let mut r = r0;
        while r < 20.0 {
            let k1 = rhs(r, y);
            let k2 = rhs(
                r + h / 2.0,
                [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
            );
            let k3 = rhs(
                r + h / 2.0,
                [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
            );
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            r += h;
            if y[0] < 0.0 {
                return 1;
            }
            if y[1] > 0.0 {
                return -1;
            }
        }
        0
    };
    let (mut lo, mut hi) = (1.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid) {
            1 => hi = mid,
            -1 => lo = mid,
            _ => break,
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn peak_matches_independent_shooting() {
    let oracle = rk4_peak();
    let coarse = solve_ground_state(&RadialGrid::new(25.0, 4001).unwrap(), 1e-10)
        .unwrap()
        .peak_value;
    let fine = solve_ground_state(&RadialGrid::new(25.0, 8001).unwrap(), 1e-9)
        .unwrap()
        .peak_value;
    let richardson = (4.0 * fine - coarse) / 3.0;
    assert!(
        (richardson - oracle).abs() < 1e-6,
        "{richardson} vs {oracle}"
    );
    assert!((base().peak_value - oracle).abs() < 2e-3);
}

/// `∫ f(|x|) g(|x − d e₁|) dx` by the midpoint rule on a 3D tensor grid,
/// folding the two mirror planes `x₂ = 0` and `x₃ = 0`.
fn tensor_convolution(f: &RadialProfile, g: &RadialProfile, d: f64) -> f64 {
    let (l, h) = (12.0, 0.08);
    let n1 = ((2.0 * l + d) / h).round() as usize;
    let n2 = (l / h).round() as usize;
    let mut acc = 0.0;
    for i in 0..n1 {
        let x = -l + (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in 0..n2 {
            let y = (j as f64 + 0.5) * h;
            for k in 0..n2 {
                let z = (k as f64 + 0.5) * h;
                let t = y * y + z * z;
                row += f.value_at((x * x + t).sqrt()) * g.value_at(((x - d) * (x - d) + t).sqrt());
            }
        }
        acc += row;
    }
    4.0 * acc * h * h * h
}

#[test]
fn bipolar_quadrature_matches_tensor_grid() {
    let u = &base().profile;
    let u3 = u.cube();
    for d in [2.0, 4.0, 6.0, 10.0] {
        for (name, f, g) in [("U3*U", &u3, u), ("U*U", u, u)] {
            let bipolar = radial_convolution(f, g, d).unwrap().value;
            let tensor = tensor_convolution(f, g, d);
            let rel = (bipolar / tensor - 1.0).abs();
            assert!(rel < 5e-3, "{name} at d = {d}: {bipolar} vs {tensor}");
        }
    }
}

fn radial_energy() -> f64 {
    let u = &base().profile;
    let g = *u.grid();
    let h = g.spacing();
    let v = u.values();
    let n = v.len();
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let du = if i == 0 {
                0.0
            } else if i + 1 == n {
                (v[i] - v[i - 1]) / h
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            };
            let r = g.r(i);
            (0.5 * (du * du + v[i] * v[i]) - 0.25 * v[i].powi(4)) * r * r
        })
        .collect();
    4.0 * PI * simpson(&integrand, h)
}

fn single_bump() -> BumpConfiguration {
    BumpConfiguration {
        ell: 1,
        r: 0.0,
        rho: 0.0,
        x_points: vec![[0.0; 3]],
        y_points: vec![],
        m: 0.0,
        n: 0.0,
    }
}

#[test]
fn radial_energy_satisfies_nehari_identity() {
    // For a solution, ∫|∇U|² + U² = ∫U⁴, so I(U) = ¼∫U⁴.
    let u = &base().profile;
    let g = *u.grid();
    let quartic: Vec<f64> = (0..g.n_points())
        .map(|i| u.values()[i].powi(4) * g.r(i).powi(2))
        .collect();
    let nehari = PI * simpson(&quartic, g.spacing());
    assert!((radial_energy() / nehari - 1.0).abs() < 1e-4);
}

#[test]
fn single_bump_energy_matches_radial_value() {
    let pair = assemble_modified(&family(SystemKind::Two, 0.05), 0.0).unwrap();
    let grid = BoxGrid::with_spacing([8.0; 3], DEFAULT_SPACING).unwrap();
    let fields = assemble_fields(&pair, &single_bump(), &grid).unwrap();
    let e = energy_i(&[fields.u()], 0.0).unwrap();
    let exact = radial_energy();
    assert!((e / exact - 1.0).abs() < 0.01, "{e} vs {exact}");
}

#[test]
fn energy_converges_at_second_order() {
    let pair = assemble_modified(&family(SystemKind::Two, 0.05), 0.0).unwrap();
    let exact = radial_energy();
    let errors: Vec<(f64, f64)> = [0.2, 0.1]
        .iter()
        .map(|&h| {
            let grid = BoxGrid::with_spacing([8.0; 3], h).unwrap();
            let e = energy_i(
                &[assemble_fields(&pair, &single_bump(), &grid).unwrap().u()],
                0.0,
            )
            .unwrap();
            (grid.spacing()[0], exact - e)
        })
        .collect();
    let ratio = errors[0].1 / errors[1].1;
    let order = ratio.ln() / (errors[0].0 / errors[1].0).ln();
    assert!((3.0..=5.0).contains(&ratio), "{errors:?}");
    assert!((order - 2.0).abs() < 0.2, "observed order {order}");
}

#[test]
fn two_bump_interaction_energy() {
    for eps in [0.0, 0.05] {
        let pair = assemble_modified(&family(SystemKind::Two, 0.05), eps).unwrap();
        let d = 8.0;
        let two = BumpConfiguration {
            x_points: vec![[-d / 2.0, 0.0, 0.0], [d / 2.0, 0.0, 0.0]],
            ..single_bump()
        };
        let grid = BoxGrid::with_spacing([12.0, 8.0, 8.0], 0.15).unwrap();
        let e2 = energy_i(&assemble_fields(&pair, &two, &grid).unwrap().refs(), eps).unwrap();
        let e1 = energy_i(
            &assemble_fields(&pair, &single_bump(), &grid)
                .unwrap()
                .refs(),
            eps,
        )
        .unwrap();
        let predicted = -constants().c_attr * (-d).exp() / d;
        let rel = (e2 - 2.0 * e1) / predicted - 1.0;
        assert!(
            rel.abs() < 0.1,
            "eps = {eps}: {} vs {predicted}",
            e2 - 2.0 * e1
        );
    }
}
