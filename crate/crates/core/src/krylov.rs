//! Matrix-free MINRES for symmetric (possibly indefinite) systems.

use rayon::prelude::*;

const CHUNK: usize = 8192;

/// Dot product with a partition-independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y ← a·x + b·y`.
fn axpby(a: f64, x: &[f64], b: f64, y: &mut [f64]) {
    y.par_iter_mut()
        .zip(x.par_iter())
        .for_each(|(yi, xi)| *yi = a * xi + b * *yi);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinresOutcome {
    pub iterations: usize,
    /// Estimated `‖b − A x‖ / ‖b‖`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` with `x₀ = 0`, where `apply(v, out)` writes `A v` into `out`.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> (Vec<f64>, MinresOutcome) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let beta1 = norm(b);
    if beta1 == 0.0 {
        return (
            x,
            MinresOutcome {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|bi| bi / beta1).collect();
    let mut av = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    let mut w_prev2 = vec![0.0; n];
    let mut w = vec![0.0; n];

    // Off-diagonal coupling between the previous and current Lanczos vectors.
    let mut beta = 0.0;
    let (mut c_prev, mut s_prev) = (1.0, 0.0);
    let (mut c_prev2, mut s_prev2) = (1.0, 0.0);
    let mut eta = beta1;
    let mut rel = 1.0;
    let mut iterations = 0;

    for k in 1..=max_iter {
        iterations = k;
        apply(&v, &mut av);
        let alpha = dot(&v, &av);
        // av ← av − α v − β v_prev
        av.par_iter_mut()
            .zip(v.par_iter().zip(v_prev.par_iter()))
            .for_each(|(a, (vi, vp))| *a -= alpha * vi + beta * vp);
        let beta_next = norm(&av);

        // Apply the two previous rotations to the new tridiagonal column.
        let eps = s_prev2 * beta;
        let delta_hat = c_prev2 * beta;
        let delta = c_prev * delta_hat + s_prev * alpha;
        let gamma_hat = -s_prev * delta_hat + c_prev * alpha;
        let gamma = gamma_hat.hypot(beta_next);
        if gamma == 0.0 {
            break;
        }
        let c = gamma_hat / gamma;
        let s = beta_next / gamma;

        // w = (v − δ w_prev − ε w_prev2) / γ
        w.par_iter_mut()
            .zip(v.par_iter().zip(w_prev.par_iter().zip(w_prev2.par_iter())))
            .for_each(|(wi, (vi, (wp, wpp)))| *wi = (vi - delta * wp - eps * wpp) / gamma);
        axpby(c * eta, &w, 1.0, &mut x);
        eta *= -s;
        rel = eta.abs() / beta1;

        std::mem::swap(&mut w_prev2, &mut w_prev);
        std::mem::swap(&mut w_prev, &mut w);
        c_prev2 = c_prev;
        s_prev2 = s_prev;
        c_prev = c;
        s_prev = s;
        beta = beta_next;
        if rel <= rtol || beta_next == 0.0 {
            return (
                x,
                MinresOutcome {
                    iterations,
                    relative_residual: rel,
                    converged: true,
                },
            );
        }
        std::mem::swap(&mut v_prev, &mut v);
        v.par_iter_mut()
            .zip(av.par_iter())
            .for_each(|(vi, a)| *vi = a / beta_next);
    }
    (
        x,
        MinresOutcome {
            iterations,
            relative_residual: rel,
            converged: rel <= rtol,
        },
    )
}
