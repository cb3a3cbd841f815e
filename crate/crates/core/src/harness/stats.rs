//! Small statistics helpers shared by the summary and acceptance code.

/// Time-weighted (trapezoidal) mean of a sampled trajectory. This is the
/// time-average used for all reported means; on the nonuniform snapshot
/// grid it reproduces the continuum average where a plain sample mean
/// would overweight the densely sampled stages.
pub fn trapezoid_mean(ts: &[f64], vs: &[f64]) -> f64 {
    assert_eq!(ts.len(), vs.len());
    assert!(ts.len() >= 2);
    let span = ts[ts.len() - 1] - ts[0];
    let mut acc = 0.0;
    for i in 0..ts.len() - 1 {
        acc += 0.5 * (vs[i] + vs[i + 1]) * (ts[i + 1] - ts[i]);
    }
    acc / span
}

/// Standard error of the trapezoidal mean from independent per-sample
/// standard deviations.
pub fn trapezoid_mean_err(ts: &[f64], sigmas: &[f64]) -> f64 {
    assert_eq!(ts.len(), sigmas.len());
    let span = ts[ts.len() - 1] - ts[0];
    let n = ts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { ts[i] - ts[i - 1] };
        let right = if i == n - 1 { 0.0 } else { ts[i + 1] - ts[i] };
        let w = 0.5 * (left + right) / span;
        acc += (w * sigmas[i]).powi(2);
    }
    acc.sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trapezoid_mean_of_linear_function_is_midpoint() {
        let ts = [0.0, 0.1, 0.4, 1.0];
        let vs: Vec<f64> = ts.iter().map(|t| 2.0 * t + 1.0).collect();
        assert_abs_diff_eq!(trapezoid_mean(&ts, &vs), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_mean_ignores_sampling_density() {
        // a dense cluster near t = 0 must not drag the average
        let mut ts = vec![0.0, 0.001, 0.002, 0.003, 0.004];
        ts.extend([0.25, 0.5, 0.75, 1.0]);
        let vs: Vec<f64> = ts
            .iter()
            .map(|&t| if t < 0.01 { 0.0 } else { 1.0 })
            .collect();
        let m = trapezoid_mean(&ts, &vs);
        assert!(m > 0.8, "mean = {m}");
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.1, 0.5, 0.7, 2.0, 10.0];
        assert_abs_diff_eq!(spearman(&xs, &ys), 1.0, epsilon = 1e-12);
        let inv: Vec<f64> = ys.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(spearman(&xs, &inv), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 1.0, 2.0, 2.0];
        let r = spearman(&xs, &ys);
        assert!(r > 0.8 && r <= 1.0);
    }
}
