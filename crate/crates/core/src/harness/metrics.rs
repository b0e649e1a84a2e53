use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HarnessError, MetricsRecord, TestMode};
use crate::buckingham::presets::Strategy;
use crate::buckingham::InputArrangement;
use crate::gasp::TrendKind;

/// Test-set normalized RMSE in percent: the prediction RMSE relative to
/// the RMSE of always predicting the training-output mean `train_mean`.
pub fn n_rmse(pred: &[f64], truth: &[f64], train_mean: f64) -> Result<f64, HarnessError> {
    if pred.len() != truth.len() {
        return Err(HarnessError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let den: f64 = truth.iter().map(|t| (train_mean - t) * (train_mean - t)).sum();
    if !(den > 0.0) {
        return Err(HarnessError::DegenerateDenominator);
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Grouping key of a summary cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub strategy: Strategy,
    pub arrangement: InputArrangement,
    pub trend: TrendKind,
    pub mode: TestMode,
}

/// Statistics of the successful runs at one training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub n: usize,
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub std_dev: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub key: CellKey,
    pub sizes: Vec<SizeStats>,
    /// Least-squares slope of ln(mean) on ln(n); absent with fewer than two sizes.
    pub slope: Option<f64>,
}

impl CellSummary {
    pub fn at(&self, n: usize) -> Option<&SizeStats> {
        self.sizes.iter().find(|s| s.n == n)
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn size_stats(n: usize, values: &[f64], failures: usize) -> SizeStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let count = v.len();
    if count == 0 {
        return SizeStats { n, count, failures, mean: f64::NAN, median: f64::NAN, q1: f64::NAN, q3: f64::NAN, std_dev: f64::NAN, std_error: f64::NAN };
    }
    let mean = v.iter().sum::<f64>() / count as f64;
    let std_dev = if count > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt() } else { 0.0 };
    SizeStats {
        n,
        count,
        failures,
        mean,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        std_dev,
        std_error: std_dev / (count as f64).sqrt(),
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Per-cell statistics for every training size present; slopes where possible.
pub fn summarize(records: &[MetricsRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, BTreeMap<usize, (Vec<f64>, usize)>> = BTreeMap::new();
    for r in records {
        let key = CellKey { strategy: r.strategy, arrangement: r.arrangement, trend: r.trend, mode: r.mode };
        let slot = cells.entry(key).or_default().entry(r.n).or_default();
        match r.n_rmse {
            Some(e) if e.is_finite() => slot.0.push(e),
            _ => slot.1 += 1,
        }
    }
    cells
        .into_iter()
        .map(|(key, by_n)| {
            let sizes: Vec<SizeStats> = by_n.iter().map(|(n, (v, f))| size_stats(*n, v, *f)).collect();
            let pts: Vec<(f64, f64)> = sizes.iter().filter(|s| s.mean > 0.0).map(|s| (s.n as f64, s.mean)).collect();
            let slope = (pts.len() >= 2).then(|| log_log_slope(&pts));
            CellSummary { key, sizes, slope }
        })
        .collect()
}

/// Like [`summarize`] but every cell must span at least two training sizes.
pub fn convergence_summary(records: &[MetricsRecord]) -> Result<Vec<CellSummary>, HarnessError> {
    let cells = summarize(records);
    if let Some(c) = cells.iter().find(|c| c.slope.is_none()) {
        return Err(HarnessError::InsufficientData(format!(
            "{} / {} / {} / {} has {} training size(s) with results",
            c.key.strategy,
            c.key.arrangement,
            c.key.trend,
            c.key.mode,
            c.sizes.iter().filter(|s| s.mean > 0.0).count()
        )));
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbeds::TestbedId;

    #[test]
    fn perfect_and_trivial_predictors() {
        let truth = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(n_rmse(&truth, &truth, 3.0).unwrap(), 0.0);
        assert_eq!(n_rmse(&[3.0; 4], &truth, 3.0).unwrap(), 100.0);
        assert!(matches!(n_rmse(&[2.0; 3], &[2.0; 3], 2.0), Err(HarnessError::DegenerateDenominator)));
        assert!(matches!(n_rmse(&[1.0], &[1.0, 2.0], 0.0), Err(HarnessError::LengthMismatch { .. })));
        assert!(matches!(n_rmse(&[], &[], 0.0), Err(HarnessError::EmptyTestSet)));
    }

    #[test]
    fn constant_offset_by_hand() {
        // truth 1..=10, training mean 5, predictions off by 0.5:
        // RMSE(pred) = 0.5; Σ(5 − t)² = 16+9+4+1+0+1+4+9+16+25 = 85
        let truth: Vec<f64> = (1..=10).map(f64::from).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + 0.5).collect();
        let expected = 100.0 * 0.5 / (85.0f64 / 10.0).sqrt();
        assert!((n_rmse(&pred, &truth, 5.0).unwrap() - expected).abs() < 1e-12);
    }

    fn record(n: usize, rep: usize, e: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            testbed: TestbedId::Borehole,
            strategy: Strategy::NonDa,
            arrangement: InputArrangement::Raw,
            trend: TrendKind::Constant,
            n,
            replicate: rep,
            mode: TestMode::Interpolation,
            n_rmse: e,
            wall_time_s: 0.0,
            nugget: Some(0.0),
            seed: 0,
            failure: e.is_none().then(|| "boom".to_string()),
        }
    }

    #[test]
    fn inverse_n_gives_slope_minus_one() {
        let recs: Vec<MetricsRecord> =
            [10, 20, 40, 80].iter().flat_map(|&n| (1..=3).map(move |r| record(n, r, Some(50.0 / n as f64)))).collect();
        let s = convergence_summary(&recs).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].slope.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(s[0].sizes[0].count, 3);
    }

    #[test]
    fn single_size_is_insufficient() {
        let recs = vec![record(40, 1, Some(1.0)), record(40, 2, Some(2.0))];
        assert!(matches!(convergence_summary(&recs), Err(HarnessError::InsufficientData(_))));
        let s = summarize(&recs);
        assert_eq!(s[0].slope, None);
        assert_eq!(s[0].sizes[0].mean, 1.5);
    }

    #[test]
    fn quartiles_and_failures() {
        let recs: Vec<MetricsRecord> =
            [1.0, 2.0, 3.0, 4.0, 10.0].iter().enumerate().map(|(i, e)| record(80, i + 1, Some(*e))).chain([record(80, 6, None)]).collect();
        let s = &summarize(&recs)[0].sizes[0];
        assert_eq!((s.count, s.failures), (5, 1));
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.mean, 4.0);
        assert!((s.std_error - (s.std_dev / 5f64.sqrt())).abs() < 1e-15);
    }
}
