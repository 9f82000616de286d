mod common;

use common::base;
use segbump_core::radial::{
    decay_bound, fit_far_field, solve_ground_state, solve_radial_linear, RadialGrid, RadialProfile,
};

#[test]
fn ground_state_residual_and_shape() {
    let gs = base();
    assert!(gs.residual <= 1e-9, "residual {}", gs.residual);
    let v = gs.profile.values();
    assert!(v.iter().all(|x| *x > 0.0));
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    assert!(gs.decay_amplitude > 0.0);
}

#[test]
fn far_field_is_yukawa_like() {
    let law = fit_far_field(&base().profile, (10.0, 17.0)).unwrap();
    assert!((law.beta - 1.0).abs() < 0.01, "beta {}", law.beta);
    assert!((law.alpha + 1.0).abs() < 0.05, "alpha {}", law.alpha);
}

#[test]
fn decay_law_holds_on_the_mid_range() {
    let u = &base().profile;
    let g = u.grid();
    let scaled: Vec<f64> = g
        .index_window(10.0, 15.0)
        .map(|i| g.r(i) * g.r(i).exp() * u.values()[i])
        .collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    assert!(
        scaled.iter().all(|s| (s / mean - 1.0).abs() < 0.01),
        "mean {mean}"
    );
}

#[test]
fn peak_converges_at_second_order() {
    let peaks: Vec<f64> = [2001, 4001, 8001]
        .iter()
        .map(|&n| {
            solve_ground_state(&RadialGrid::new(25.0, n).unwrap(), 1e-9)
                .unwrap()
                .peak_value
        })
        .collect();
    let ratio = (peaks[1] - peaks[0]) / (peaks[2] - peaks[1]);
    assert!((3.0..=5.0).contains(&ratio), "{peaks:?}");
}

#[test]
fn linear_solves_from_the_ground_state() {
    let u = &base().profile;
    let g = *u.grid();
    let zero = RadialProfile::zeros(g);
    let tilde_v1 = solve_radial_linear(&zero, &u.scaled(-1.0), &g).unwrap();
    assert!(tilde_v1.values().iter().all(|x| *x < 0.0));

    let trapped = solve_radial_linear(&u.map(|x| 3.0 * x * x), &zero, &g).unwrap();
    assert!(trapped.sup_norm() <= 1e-8);

    let c = solve_radial_linear(&zero, &tilde_v1.cube(), &g).unwrap();
    let bound = decay_bound(&c);
    assert!(bound.passes && bound.constant.is_finite(), "{bound:?}");
}
