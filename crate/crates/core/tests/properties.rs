mod common;

use common::{base, family};
use proptest::prelude::*;
use segbump_core::corrections::{assemble_modified, SystemKind};
use segbump_core::field::{ansatz_at, BoxGrid, Field3D};
use segbump_core::interaction::radial_convolution;
use segbump_core::io::{read_field_binary, write_field_binary};
use segbump_core::landscape::{
    bump_positions, domain_window, fit_radius, geometry_constants, theta_bar, theta_equation,
    WindowVariant,
};
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_is_symmetric(d in 0.5f64..14.0) {
        let u = &base().profile;
        let u3 = u.cube();
        let ab = radial_convolution(&u3, u, d).unwrap().value;
        let ba = radial_convolution(u, &u3, d).unwrap().value;
        prop_assert!(((ab - ba) / ab).abs() < 1e-10);
    }

    #[test]
    fn window_formula(ell in 2usize..8, exp in 3.0f64..14.0, extra in 0.01f64..2.0) {
        let eps = 10f64.powf(-exp);
        let (m, n) = geometry_constants(ell);
        let mu = (m - n) + extra;
        let w = domain_window(eps, ell, mu, WindowVariant::TwoSystem).unwrap();
        let l = -eps.ln();
        prop_assert!(w.lo < w.hi);
        prop_assert!((w.hi - l / (m - n)).abs() <= 1e-12 * w.hi);
        prop_assert!((w.lo - l / (m - n + mu * l.ln() / l)).abs() <= 1e-12 * w.lo);
    }

    #[test]
    fn theta_bar_is_a_root_in_the_unit_interval(ell in 2usize..8, extra in 0.01f64..3.0) {
        let (m, n) = geometry_constants(ell);
        let mu = (m - n) + extra;
        let t = theta_bar(ell, mu).unwrap();
        prop_assert!(t > 0.0 && t < 1.0);
        prop_assert!(theta_equation(ell, mu, t).abs() < 1e-12);
    }

    #[test]
    fn radius_fit_is_exact_on_its_model(a in 0.5f64..3.0, b in -2.0f64..2.0, c in -3.0f64..3.0) {
        let pts: Vec<(f64, f64)> = (4..=12)
            .map(|k| {
                let e = 10f64.powi(-k);
                let l = -e.ln();
                (e, a * l + b * l.ln() + c)
            })
            .collect();
        let fit = fit_radius(&pts).unwrap();
        prop_assert!((fit.a - a).abs() < 1e-8 && (fit.b - b).abs() < 1e-7 && (fit.c - c).abs() < 1e-6);
    }

    #[test]
    fn ansatz_lives_in_the_symmetry_class(
        ell in 2usize..6,
        r in 4.0f64..9.0,
        rho in 4.0f64..9.0,
        p in prop::array::uniform3(-8.0f64..8.0),
        three in any::<bool>(),
    ) {
        let system = if three { SystemKind::Three } else { SystemKind::Two };
        let pair = assemble_modified(&family(system, 0.05), 0.05).unwrap();
        let config = bump_positions(ell, r, rho).unwrap();
        let (s, c) = (2.0 * PI / ell as f64).sin_cos();
        let images = [
            p,
            [p[0], -p[1], p[2]],
            [p[0], p[1], -p[2]],
            [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]],
        ];
        let vals = ansatz_at(&pair, &config, &images).unwrap();
        for img in &vals[1..] {
            for (a, b) in vals[0].iter().zip(img) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn spacing_constructor(hw in 1.0f64..12.0, h in 0.05f64..0.8) {
        let g = BoxGrid::with_spacing([hw; 3], h).unwrap();
        for (n, s) in g.n_per_axis().iter().zip(g.spacing()) {
            prop_assert!(n % 2 == 0 && *n >= 4);
            prop_assert!(s <= h * (1.0 + 1e-12));
        }
    }

    #[test]
    fn field_files_round_trip(values in prop::collection::vec(-1e6f64..1e6, 6 * 4 * 4)) {
        let dir = tempfile::tempdir().unwrap();
        let grid = BoxGrid::new([3.0, 2.0, 2.0], [6, 4, 4]).unwrap();
        let f = Field3D::new(grid, values).unwrap();
        let path = dir.path().join("f.bin");
        write_field_binary(&path, "f", &f).unwrap();
        prop_assert_eq!(read_field_binary(&path).unwrap().1, f);
    }
}
