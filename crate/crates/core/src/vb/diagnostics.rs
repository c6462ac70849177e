use alloc::vec::Vec;

/// Trailing moving average over `window` finite values; `NaN` entries are
/// skipped. Output has the input's length.
pub fn moving_average(trace: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(trace.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, &v) in trace.iter().enumerate() {
        if v.is_finite() {
            sum += v;
            count += 1;
        }
        if t >= window {
            let old = trace[t - window];
            if old.is_finite() {
                sum -= old;
                count -= 1;
            }
        }
        out.push(if count > 0 { sum / count as f64 } else { f64::NAN });
    }
    out
}

/// Least-squares slope of `y` against its index.
pub fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        num += dx * (v - ym);
        den += dx * dx;
    }
    num / den
}

/// Per-coordinate slope of a trajectory over its final `last` rows.
pub fn tail_slopes(trajectory: &[Vec<f64>], last: usize) -> Vec<f64> {
    let start = trajectory.len().saturating_sub(last);
    let tail = &trajectory[start..];
    let d = tail.first().map_or(0, Vec::len);
    (0..d).map(|k| slope(&tail.iter().map(|r| r[k]).collect::<Vec<_>>())).collect()
}
