//! One-dimensional quadrature on uniform grids.

/// Composite Simpson rule over uniformly spaced samples.
///
/// An odd number of intervals closes with a Simpson 3/8 panel; two samples
/// fall back to the trapezoid rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (even_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, false)
            } else {
                (n - 4, true)
            };
            let mut acc = values[0] + values[even_end];
            for (k, v) in values.iter().enumerate().take(even_end).skip(1) {
                acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if tail {
                let b = even_end;
                total += 3.0 * h / 8.0
                    * (values[b] + 3.0 * values[b + 1] + 3.0 * values[b + 2] + values[b + 3]);
            }
            total
        }
    }
}

/// Fourth-order integrals over each grid interval `[t_j, t_{j+1}]`.
///
/// `f` is treated as an odd function about the origin (as `t·g(t)` is for an
/// even `g`), which supplies the ghost value `f(-h) = -f(h)`.
pub fn interval_integrals_odd(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    if n < 4 {
        return (0..n - 1)
            .map(|j| 0.5 * h * (values[j] + values[j + 1]))
            .collect();
    }
    (0..n - 1)
        .map(|j| {
            if j + 2 < n {
                let before = if j == 0 { -values[1] } else { values[j - 1] };
                h / 24.0 * (-before + 13.0 * values[j] + 13.0 * values[j + 1] - values[j + 2])
            } else {
                h / 24.0
                    * (values[j - 2] - 5.0 * values[j - 1] + 19.0 * values[j] + 9.0 * values[j + 1])
            }
        })
        .collect()
}

/// Fourth-order running integral `G_j = ∫_0^{t_j} f` of an odd integrand.
pub fn cumulative_odd(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (j, piece) in interval_integrals_odd(values, h).into_iter().enumerate() {
        out[j + 1] = out[j] + piece;
    }
    out
}

/// Fourth-order tail integral `H_j = tail + ∫_{t_j}^{t_end} f`, summed from
/// the far end so that small tails keep their relative accuracy.
pub fn tail_odd(values: &[f64], h: f64, tail: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![tail; n];
    let pieces = interval_integrals_odd(values, h);
    for j in (0..pieces.len()).rev() {
        out[j] = out[j + 1] + pieces[j];
    }
    out
}

/// Trapezoid weights along one axis of `n` nodes with spacing `h`.
pub fn trapezoid_weight(index: usize, n: usize, h: f64) -> f64 {
    if index == 0 || index + 1 == n {
        0.5 * h
    } else {
        h
    }
}
