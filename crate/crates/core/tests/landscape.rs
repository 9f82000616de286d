mod common;

use common::constants;
use segbump_core::corrections::SystemKind;
use segbump_core::landscape::{
    bump_positions, domain_window, edge_maximum, energy_expansion, geometry_constants,
    locate_maximum, maximize_landscape, reduced_g, rho_theta, theta_bar, WindowVariant,
};

const EDGE_SAMPLES: usize = 400;

#[test]
fn edges_lose_to_the_interior() {
    let k = constants();
    let eps = 1e-6;
    for ell in [2, 3, 4] {
        let best = locate_maximum(SystemKind::Two, k, ell, eps, 1.0).unwrap();
        assert!(best.interior && best.value > 0.0, "ell {ell}: {best:?}");
        assert!(
            (best.r - best.rho).abs() <= 1e-8,
            "ell {ell}: {} vs {}",
            best.r,
            best.rho
        );
        let lo = edge_maximum(
            SystemKind::Two,
            k,
            ell,
            eps,
            &best.window,
            best.window.lo,
            EDGE_SAMPLES,
        );
        assert!(lo <= 0.0, "ell {ell}: lo edge {lo}");
    }
}

#[test]
fn diagonal_value_at_theta_bar() {
    let k = constants();
    let bound_ratio = |ell: usize, eps: f64| {
        let (m, n) = geometry_constants(ell);
        let tb = theta_bar(ell, 1.0).unwrap();
        let r = rho_theta(eps, ell, 1.0, tb).unwrap();
        let l = -eps.ln();
        let diag = reduced_g(SystemKind::Two, k, ell, eps, r, r);
        assert!(diag > 0.0, "ell {ell}, eps {eps}: {diag}");
        diag / (0.5 * k.c_cross * eps.powf(m / (m - n)) * l.powf(tb * n / (m - n).powi(2)))
    };
    for eps in [1e-6, 1e-8, 1e-10] {
        assert!(bound_ratio(2, eps) >= 1.0);
    }
    // For ℓ = 3, 4 the bound is only reached asymptotically; the ratio must climb.
    for ell in [3, 4] {
        let ratios: Vec<f64> = [1e-6, 1e-8, 1e-10]
            .iter()
            .map(|&e| bound_ratio(ell, e))
            .collect();
        assert!(
            ratios.windows(2).all(|w| w[1] > w[0]),
            "ell {ell}: {ratios:?}"
        );
    }
}

#[test]
fn hi_edge_constant_is_stable() {
    let k = constants();
    for ell in [2, 3, 4] {
        let (m, n) = geometry_constants(ell);
        let tb = theta_bar(ell, 1.0).unwrap();
        let c1: Vec<f64> = [1e-8, 1e-10]
            .iter()
            .map(|&eps| {
                let w = domain_window(eps, ell, 1.0, WindowVariant::TwoSystem).unwrap();
                let hi = edge_maximum(SystemKind::Two, k, ell, eps, &w, w.hi, EDGE_SAMPLES);
                let l = -eps.ln();
                hi / (eps.powf(m / (m - n)) * l.powf(tb * n / (2.0 * (m - n).powi(2))))
            })
            .collect();
        assert!(
            c1[0] > 0.0 && (c1[1] / c1[0] - 1.0).abs() < 0.1,
            "ell {ell}: {c1:?}"
        );
    }
}

#[test]
fn three_components_reduce_to_two_for_wide_rings() {
    let k = constants();
    for eps in [1e-6, 1e-8] {
        let two = locate_maximum(SystemKind::Two, k, 5, eps, 1.0).unwrap();
        let three = locate_maximum(SystemKind::Three, k, 5, eps, 1.0).unwrap();
        assert!(
            (three.r / two.r - 1.0).abs() < 1e-3,
            "eps {eps}: {} vs {}",
            three.r,
            two.r
        );
    }
    for eps in [1e-4, 1e-8, 1e-12] {
        assert!(
            maximize_landscape(SystemKind::Three, k, 3, eps, 1.0)
                .unwrap()
                .interior
        );
    }
    let sep = maximize_landscape(SystemKind::Three, k, 2, 1e-8, 1.5).unwrap();
    assert!((sep.r - sep.rho).abs() <= 1e-8);
}

#[test]
fn nearest_neighbour_terms_dominate_the_expansion() {
    let k = constants();
    let eps = 1e-6;
    for ell in [2, 3, 4] {
        let best = locate_maximum(SystemKind::Two, k, ell, eps, 1.0).unwrap();
        let config = bump_positions(ell, best.r, best.rho).unwrap();
        let report = energy_expansion(&config, k, eps, SystemKind::Two);
        let same_pairs = if ell == 2 { 2 } else { 2 * ell };
        assert_eq!(report.nearest_same_pairs, same_pairs);
        assert_eq!(report.nearest_cross_pairs, 2 * ell);
        let attr = (report.attraction_nearest / report.attraction_all - 1.0).abs();
        let rep = (report.repulsion_nearest / report.repulsion_all - 1.0).abs();
        assert!(attr < 0.02 && rep < 0.02, "ell {ell}: {attr} {rep}");
        // Pair-counted nearest terms rebuilt from the landscape's building blocks.
        let yuk = |d: f64| k.c_attr * (-d).exp() / d;
        let per_ring = (same_pairs / 2) as f64;
        let rebuilt = -per_ring * (yuk(config.m * best.r) + yuk(config.m * best.rho))
            + (2 * ell) as f64 * eps * k.c_cross * (-config.nearest_cross_distance()).exp();
        assert!((report.interaction_nearest / rebuilt - 1.0).abs() < 1e-12);
    }
}
