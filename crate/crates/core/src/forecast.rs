//! Demand trajectory, lookahead-window statistics and representative
//! future demand points.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{SigmaMode, SolverConfig};

/// Demand per period on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSeries {
    pub start: NaiveDateTime,
    pub period_minutes: f64,
    pub values: Vec<f64>,
}

impl LoadSeries {
    pub fn new(start: NaiveDateTime, period_minutes: f64, values: Vec<f64>) -> Result<Self> {
        if !(period_minutes > 0.0) {
            return Err(Error::InvalidInput("period length must be positive".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("invalid demand value {v}")));
        }
        Ok(Self {
            start,
            period_minutes,
            values,
        })
    }

    /// Series on a 5-minute grid starting at the Unix epoch; handy for synthetic data.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            start: chrono::DateTime::UNIX_EPOCH.naive_utc(),
            period_minutes: 5.0,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + chrono::Duration::seconds((t as f64 * self.period_minutes * 60.0).round() as i64)
    }

    fn window(&self, t: usize, len: usize) -> Result<&[f64]> {
        let end = t + len;
        if len == 0 || end > self.values.len() {
            return Err(Error::WindowOutOfRange {
                start: t,
                end,
                len: self.values.len(),
            });
        }
        Ok(&self.values[t..end])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Exact min, max and mean over the `window` periods starting at `t`.
pub fn window_stats(series: &LoadSeries, t: usize, window: usize) -> Result<WindowStats> {
    let w = series.window(t, window)?;
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in w {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Ok(WindowStats {
        min,
        max,
        mean: sum / w.len() as f64,
    })
}

/// Representative future demand points for a window with the given statistics.
///
/// k = 1 is the mean, k = 2 the extremes, k = 3 all three. Larger k uses
/// Clenshaw–Curtis nodes on [min, max] with the interior node nearest the mean
/// replaced by the mean. Output is ascending without duplicates.
pub fn fpm_nodes(stats: WindowStats, k: usize) -> Vec<f64> {
    let WindowStats { min, max, mean } = stats;
    let mut pts = match k {
        0 => Vec::new(),
        1 => vec![mean],
        2 => vec![min, max],
        3 => vec![mean, min, max],
        _ => {
            let mid = 0.5 * (min + max);
            let half = 0.5 * (max - min);
            let mut nodes: Vec<f64> = (0..k)
                .map(|j| mid + half * (std::f64::consts::PI * j as f64 / (k - 1) as f64).cos())
                .collect();
            // Endpoints exact so min/max survive rounding in cos().
            nodes[0] = max;
            nodes[k - 1] = min;
            let nearest = (1..k - 1)
                .min_by(|&i, &j| {
                    (nodes[i] - mean)
                        .abs()
                        .total_cmp(&(nodes[j] - mean).abs())
                        .then(i.cmp(&j))
                })
                .expect("k >= 4 has interior nodes");
            nodes[nearest] = mean;
            nodes
        }
    };
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    pts
}

pub fn fpm_points(series: &LoadSeries, t: usize, k: usize, window: usize) -> Result<Vec<f64>> {
    Ok(fpm_nodes(window_stats(series, t, window)?, k))
}

/// Demand deviation used for the contingency margins.
pub fn sigma_estimate(series: &LoadSeries, t: usize, mode: SigmaMode, window: usize) -> Result<f64> {
    match mode {
        SigmaMode::Fraction { fraction } => {
            let d = series
                .values
                .get(t)
                .ok_or(Error::WindowOutOfRange { start: t, end: t + 1, len: series.len() })?;
            Ok(fraction * d)
        }
        SigmaMode::Differences => {
            let w = series.window(t, window)?;
            if w.len() < 2 {
                return Ok(0.0);
            }
            let diffs: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
            Ok(var.sqrt())
        }
    }
}

/// Everything the relaxation needs to know about demand at one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub d_now: f64,
    pub sigma: f64,
    pub d_min72: f64,
    pub d_max72: f64,
    pub mean72: f64,
    /// Representative future demands, ascending.
    pub d_delta: Vec<f64>,
}

impl ForecastSummary {
    pub fn at(series: &LoadSeries, t: usize, config: &SolverConfig) -> Result<Self> {
        let stats = window_stats(series, t, config.lookahead_periods)?;
        Ok(Self {
            d_now: series.values[t],
            sigma: sigma_estimate(series, t, config.sigma_mode, config.lookahead_periods)?,
            d_min72: stats.min,
            d_max72: stats.max,
            mean72: stats.mean,
            d_delta: fpm_nodes(stats, config.fpm_count),
        })
    }
}

/// Linear interpolation of irregular (minutes-offset, value) samples onto a
/// uniform grid of `period_minutes`, covering the sample span.
pub fn resample_linear(samples: &[(f64, f64)], period_minutes: f64) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Ok(samples.iter().map(|s| s.1).collect());
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("timestamps must be strictly increasing".into()));
    }
    let (t0, t_end) = (samples[0].0, samples[samples.len() - 1].0);
    let n = ((t_end - t0) / period_minutes).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let t = t0 + i as f64 * period_minutes;
        while seg + 2 < samples.len() && samples[seg + 1].0 < t {
            seg += 1;
        }
        let (ta, va) = samples[seg];
        let (tb, vb) = samples[seg + 1];
        let f = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(va + f * (vb - va));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid() -> LoadSeries {
        LoadSeries::from_values(
            (0..1000)
                .map(|i| 1000.0 + 100.0 * (i as f64 * 2.0 * std::f64::consts::PI / 288.0).sin())
                .collect(),
        )
    }

    #[test]
    fn constant_series_stats() {
        let s = LoadSeries::from_values(vec![1000.0; 864]);
        let w = window_stats(&s, 0, 864).unwrap();
        assert_eq!((w.min, w.max, w.mean), (1000.0, 1000.0, 1000.0));
        assert_eq!(fpm_points(&s, 0, 1, 864).unwrap(), vec![1000.0]);
        assert_eq!(fpm_points(&s, 0, 3, 864).unwrap(), vec![1000.0]);
    }

    #[test]
    fn arithmetic_series_stats() {
        let s = LoadSeries::from_values((1..=864).map(f64::from).collect());
        let w = window_stats(&s, 0, 864).unwrap();
        assert_eq!((w.min, w.max), (1.0, 864.0));
        assert!((w.mean - 432.5).abs() < 1e-12);
    }

    #[test]
    fn sinusoid_extremes() {
        let s = sinusoid();
        let w = window_stats(&s, 0, 864).unwrap();
        // Grid of 288 points per cycle hits the crest and trough exactly.
        assert!((w.min - 900.0).abs() < 1e-9);
        assert!((w.max - 1100.0).abs() < 1e-9);
        let p = fpm_points(&s, 0, 3, 864).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p[1] - w.mean).abs() < 1e-12);
    }

    #[test]
    fn window_out_of_range() {
        let s = LoadSeries::from_values(vec![1.0; 100]);
        assert!(matches!(
            window_stats(&s, 0, 864),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn five_point_nodes() {
        let st = WindowStats { min: 900.0, max: 1100.0, mean: 1000.0 };
        let p = fpm_nodes(st, 5);
        let c = 100.0 * std::f64::consts::FRAC_1_SQRT_2;
        let want = [900.0, 1000.0 - c, 1000.0, 1000.0 + c, 1100.0];
        assert_eq!(p.len(), 5);
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{p:?}");
        }
        assert!((p[1] - 929.289).abs() < 1e-3);
    }

    #[test]
    fn zero_points_is_empty() {
        let st = WindowStats { min: 1.0, max: 2.0, mean: 1.5 };
        assert!(fpm_nodes(st, 0).is_empty());
        assert_eq!(fpm_nodes(st, 2), vec![1.0, 2.0]);
    }

    #[test]
    fn sigma_modes() {
        let s = LoadSeries::from_values(vec![1000.0; 900]);
        let f = sigma_estimate(&s, 0, SigmaMode::Fraction { fraction: 0.02 }, 864).unwrap();
        assert_eq!(f, 20.0);
        assert_eq!(sigma_estimate(&s, 0, SigmaMode::Differences, 864).unwrap(), 0.0);
        let ramp = LoadSeries::from_values((0..900).map(|i| 500.0 + 2.0 * i as f64).collect());
        assert!(sigma_estimate(&ramp, 3, SigmaMode::Differences, 864).unwrap().abs() < 1e-12);
    }

    #[test]
    fn resample_interpolates() {
        let v = resample_linear(&[(0.0, 0.0), (10.0, 10.0), (20.0, 0.0)], 5.0).unwrap();
        assert_eq!(v, vec![0.0, 5.0, 10.0, 5.0, 0.0]);
    }
}
