//! Small numerical helpers shared by the solvers: local cubic interpolation on
//! monotone grids and bracketed bisection.

/// Index `i` such that `xs[i] <= x <= xs[i+1]` for an ascending grid, clamped
/// to the valid interval range.
pub(crate) fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    debug_assert!(n >= 2);
    match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    }
}

/// Four-point Lagrange interpolation through the nodes surrounding `x`.
/// Exact at nodes; falls back to fewer points on grids shorter than four.
pub(crate) fn cubic_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n < 4 {
        let i = locate(xs, x);
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return ys[i] + t * (ys[i + 1] - ys[i]);
    }
    let i = locate(xs, x);
    let start = i.saturating_sub(1).min(n - 4);
    let (px, py) = (&xs[start..start + 4], &ys[start..start + 4]);
    let mut acc = 0.0;
    for j in 0..4 {
        if x == px[j] {
            return py[j];
        }
        let mut w = 1.0;
        for m in 0..4 {
            if m != j {
                w *= (x - px[m]) / (px[j] - px[m]);
            }
        }
        acc += w * py[j];
    }
    acc
}

/// Bisection on a bracket with `f(lo)` and `f(hi)` of opposite sign. Stops when
/// the bracket is narrower than `tol`; returns the midpoint.
pub(crate) fn bisect<F, E>(mut f: F, mut lo: f64, mut hi: f64, f_lo: f64, tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut s_lo = f_lo.signum();
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == s_lo {
            lo = mid;
            s_lo = fm.signum();
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Half-open linear grid of `n` points from `a` to `b` inclusive.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
