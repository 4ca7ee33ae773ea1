use serde::Serialize;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    /// 95% normal-approximation halfwidth; `None` with a single sample.
    pub halfwidth: Option<f64>,
}

/// Mean and `1.96 s / sqrt(r)` halfwidth over per-replication estimates.
/// Returns `None` for an empty slice.
pub fn confidence_interval(samples: &[f64]) -> Option<Interval> {
    let r = samples.len();
    if r == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / r as f64;
    let halfwidth = (r >= 2).then(|| {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        Z_95 * var.sqrt() / (r as f64).sqrt()
    });
    Some(Interval { mean, halfwidth })
}
