//! Topic activity per rating class and kernel density estimates.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmentation::{OutletTable, RatingClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("no outlets in class {0:?}")]
    UnknownClass(RatingClass),
    #[error("empty window: {from} is after {to}")]
    EmptyWindow { from: NaiveDate, to: NaiveDate },
    #[error("sample is empty")]
    EmptySample,
    #[error("bandwidth must be positive, got {0}")]
    NonpositiveBandwidth(f64),
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
}

/// `100 · topic / total`, undefined on days without postings.
pub fn daily_topic_share(topic_posts: u64, total_posts: u64) -> Option<f64> {
    (total_posts > 0).then(|| 100.0 * topic_posts as f64 / total_posts as f64)
}

/// Per-outlet, per-day posting counts for one topic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DailyCounts {
    by_outlet: BTreeMap<String, BTreeMap<NaiveDate, (u64, u64)>>,
}

impl DailyCounts {
    pub fn new() -> Self {
        DailyCounts::default()
    }

    pub fn record(&mut self, outlet: &str, date: NaiveDate, on_topic: bool) {
        let slot = self
            .by_outlet
            .entry(outlet.to_string())
            .or_default()
            .entry(date)
            .or_default();
        slot.0 += u64::from(on_topic);
        slot.1 += 1;
    }

    pub fn counts(&self, outlet: &str, date: NaiveDate) -> (u64, u64) {
        self.by_outlet
            .get(outlet)
            .and_then(|d| d.get(&date))
            .copied()
            .unwrap_or_default()
    }

    pub fn share(&self, outlet: &str, date: NaiveDate) -> Option<f64> {
        let (topic, total) = self.counts(outlet, date);
        daily_topic_share(topic, total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityPoint {
    pub date: NaiveDate,
    /// `None` marks a gap.
    pub mean_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub rating_class: RatingClass,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub points: Vec<ActivityPoint>,
}

impl ActivitySeries {
    /// Mean over the defined points, if any.
    pub fn mean(&self) -> Option<f64> {
        let vals: Vec<f64> = self.points.iter().filter_map(|p| p.mean_pct).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Per day, the unweighted mean of the defined shares of the class's outlets.
pub fn class_activity_series(
    counts: &DailyCounts,
    outlets: &OutletTable,
    class: RatingClass,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<ActivitySeries, AnalyticsError> {
    if from > to {
        return Err(AnalyticsError::EmptyWindow { from, to });
    }
    let members: Vec<&str> = outlets.in_class(class).map(|o| o.domain.as_str()).collect();
    if members.is_empty() {
        return Err(AnalyticsError::UnknownClass(class));
    }
    let points = from
        .iter_days()
        .take_while(|d| *d <= to)
        .map(|date| {
            let shares: Vec<f64> = members.iter().filter_map(|o| counts.share(o, date)).collect();
            let mean_pct = (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64);
            ActivityPoint { date, mean_pct }
        })
        .collect();
    Ok(ActivitySeries {
        rating_class: class,
        from,
        to,
        points,
    })
}

/// Centered rolling mean over `window` days (odd), ignoring gaps; a day stays
/// a gap only if its whole window is empty.
pub fn rolling_mean(series: &ActivitySeries, window: usize) -> ActivitySeries {
    let half = window / 2;
    let vals: Vec<Option<f64>> = series.points.iter().map(|p| p.mean_pct).collect();
    let points = series
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(vals.len());
            let defined: Vec<f64> = vals[lo..hi].iter().flatten().copied().collect();
            ActivityPoint {
                date: p.date,
                mean_pct: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            }
        })
        .collect();
    ActivitySeries {
        points,
        ..series.clone()
    }
}

/// Linear interpolation between order statistics at rank `(n−1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_samples(samples: &[f64]) -> Result<(), AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalyticsError::NonFiniteSample);
    }
    Ok(())
}

/// Silverman's rule `0.9 · min(σ, IQR/1.349) · n^(−1/5)`. A zero IQR with a
/// positive σ uses σ alone; a zero result falls back to
/// `max(1e-3, 1e-3·|mean|)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, AnalyticsError> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sigma = if samples.len() > 1 {
        (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.349) } else { sigma };
    let h = 0.9 * spread * n.powf(-0.2);
    Ok(if h > 0.0 { h } else { (1e-3 * mean.abs()).max(1e-3) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeMetric {
    Reactions,
    SciRefRatio,
}

impl KdeMetric {
    pub fn parse(s: &str) -> Option<KdeMetric> {
        match s {
            "reactions" => Some(KdeMetric::Reactions),
            "sci_ref_ratio" => Some(KdeMetric::SciRefRatio),
            _ => None,
        }
    }
}

/// Axis on which samples and grid live.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeScale {
    #[default]
    Linear,
    /// `log10(1 + x)`, for non-negative counts.
    Log10p1,
}

impl KdeScale {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            KdeScale::Linear => x,
            KdeScale::Log10p1 => (1.0 + x).log10(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            KdeScale::Linear => y,
            KdeScale::Log10p1 => 10f64.powf(y) - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<KdeMetric>,
    pub scale: KdeScale,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

impl DensityCurve {
    /// Grid point with the highest density; the first wins on ties.
    pub fn mode(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&x, &d) in self.grid.iter().zip(&self.density) {
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((x, d));
            }
        }
        best.map(|(x, _)| x)
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// `f̂(x) = (1/(n·h)) Σ φ((x − xᵢ)/h)` with a Gaussian φ, evaluated directly.
pub fn kde_estimate(samples: &[f64], grid: &[f64], h: f64) -> Result<DensityCurve, AnalyticsError> {
    check_samples(samples)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(AnalyticsError::NonpositiveBandwidth(h));
    }
    let norm = 1.0 / (samples.len() as f64 * h * SQRT_2PI);
    let density = grid
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for &xi in samples {
                let u = (x - xi) / h;
                acc += (-0.5 * u * u).exp();
            }
            acc * norm
        })
        .collect();
    Ok(DensityCurve {
        metric: None,
        scale: KdeScale::Linear,
        grid: grid.to_vec(),
        density,
        bandwidth: h,
        n: samples.len(),
    })
}

const MIN_GRID_POINTS: usize = 512;
const MAX_GRID_POINTS: usize = 20_000;

/// Evenly spaced grid over `[min − 5h, max + 5h]`, at most `h/4` apart where
/// the point budget allows.
pub fn default_grid(samples: &[f64], h: f64) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let wanted = ((hi - lo) / (h / 4.0)).ceil() as usize + 1;
    let points = wanted.clamp(MIN_GRID_POINTS, MAX_GRID_POINTS);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Transforms the samples onto `scale`, then estimates with Silverman's
/// bandwidth on the default grid. Grid values are on the transformed axis.
pub fn density_curve(samples: &[f64], metric: KdeMetric, scale: KdeScale) -> Result<DensityCurve, AnalyticsError> {
    check_samples(samples)?;
    let transformed: Vec<f64> = samples.iter().map(|&x| scale.forward(x)).collect();
    check_samples(&transformed)?;
    let h = silverman_bandwidth(&transformed)?;
    let grid = default_grid(&transformed, h);
    let mut curve = kde_estimate(&transformed, &grid, h)?;
    curve.metric = Some(metric);
    curve.scale = scale;
    Ok(curve)
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// `date,class,mean_pct`; gaps leave `mean_pct` empty.
pub fn activity_csv(series: &[ActivitySeries]) -> String {
    csv_string(|w| {
        w.write_record(["date", "class", "mean_pct"])?;
        for s in series {
            for p in &s.points {
                let pct = p.mean_pct.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([p.date.to_string(), s.rating_class.as_str().to_string(), pct])?;
            }
        }
        Ok(())
    })
}

/// `x,density`.
pub fn density_csv(curve: &DensityCurve) -> String {
    csv_string(|w| {
        w.write_record(["x", "density"])?;
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::Outlet;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
    }

    fn table(classes: &[(&str, RatingClass)]) -> OutletTable {
        OutletTable::new(
            classes
                .iter()
                .map(|(d, c)| Outlet {
                    domain: d.to_string(),
                    name: d.to_string(),
                    quality_score: 0.0,
                    rating_class: Some(*c),
                })
                .collect(),
        )
    }

    fn record_n(counts: &mut DailyCounts, outlet: &str, date: NaiveDate, topic: u64, total: u64) {
        for i in 0..total {
            counts.record(outlet, date, i < topic);
        }
    }

    #[test]
    fn share_examples() {
        assert_eq!(daily_topic_share(3, 10), Some(30.0));
        assert_eq!(daily_topic_share(0, 0), None);
        assert_eq!(daily_topic_share(7, 7), Some(100.0));
    }

    #[test]
    fn class_series_examples() {
        let mut counts = DailyCounts::new();
        record_n(&mut counts, "a.com", day(1), 3, 10);
        record_n(&mut counts, "b.com", day(1), 1, 2);
        record_n(&mut counts, "a.com", day(3), 1, 4);
        let t = table(&[("a.com", RatingClass::Low), ("b.com", RatingClass::Low), ("c.com", RatingClass::High)]);
        let s = class_activity_series(&counts, &t, RatingClass::Low, day(1), day(3)).unwrap();
        assert_eq!(
            s.points,
            vec![
                ActivityPoint { date: day(1), mean_pct: Some(40.0) },
                ActivityPoint { date: day(2), mean_pct: None },
                ActivityPoint { date: day(3), mean_pct: Some(25.0) },
            ]
        );
        // one-outlet class equals that outlet's share series
        let high = class_activity_series(&counts, &t, RatingClass::High, day(1), day(3)).unwrap();
        assert!(high.points.iter().all(|p| p.mean_pct.is_none()));
        assert_eq!(
            class_activity_series(&counts, &t, RatingClass::Medium, day(1), day(3)),
            Err(AnalyticsError::UnknownClass(RatingClass::Medium))
        );
        assert!(matches!(
            class_activity_series(&counts, &t, RatingClass::Low, day(3), day(1)),
            Err(AnalyticsError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn rolling_mean_centered() {
        let s = ActivitySeries {
            rating_class: RatingClass::Low,
            from: day(1),
            to: day(9),
            points: (1..=9)
                .map(|d| ActivityPoint {
                    date: day(d),
                    mean_pct: if d == 5 { None } else { Some(f64::from(d)) },
                })
                .collect(),
        };
        let r = rolling_mean(&s, 7);
        // day 1 window: days 1..=4
        assert_eq!(r.points[0].mean_pct, Some(2.5));
        // day 5 window: days 2..=8 without the gap
        assert_eq!(r.points[4].mean_pct, Some((2.0 + 3.0 + 4.0 + 6.0 + 7.0 + 8.0) / 6.0));
    }

    /// Straightforward restatement used as the bandwidth oracle.
    fn oracle_bandwidth(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            let r = p * (n - 1.0);
            let i = r as usize;
            if i + 1 < s.len() {
                s[i] * (1.0 - (r - i as f64)) + s[i + 1] * (r - i as f64)
            } else {
                s[i]
            }
        };
        let iqr = q(0.75) - q(0.25);
        0.9 * var.sqrt().min(iqr / 1.349) * n.powf(-0.2)
    }

    #[test]
    fn bandwidth_examples() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let h = silverman_bandwidth(&xs).unwrap();
        assert!((h - oracle_bandwidth(&xs)).abs() < 1e-12);
        // by hand: σ = 3.0277, IQR = 6.75 − 2.25 = 4.5, 4.5/1.349 = 3.3358
        assert!((h - 0.9 * 3.027_650_354_097_491_7 * 10f64.powf(-0.2)).abs() < 1e-12);

        assert_eq!(silverman_bandwidth(&[5.0; 4]).unwrap(), 5e-3);
        assert_eq!(silverman_bandwidth(&[0.0; 4]).unwrap(), 1e-3);
        assert_eq!(silverman_bandwidth(&[2.0]).unwrap(), 2e-3);
        assert_eq!(silverman_bandwidth(&[]), Err(AnalyticsError::EmptySample));
    }

    #[test]
    fn zero_iqr_uses_sigma() {
        let xs = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let h = silverman_bandwidth(&xs).unwrap();
        let sigma = (xs.iter().map(|x| (x - 1.0 / 7.0_f64).powi(2)).sum::<f64>() / 6.0).sqrt();
        assert!((h - 0.9 * sigma * 7f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn kde_examples() {
        let c = kde_estimate(&[2.0], &[2.0], 0.5).unwrap();
        assert!((c.density[0] - 1.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-15);
        let grid: Vec<f64> = (-20..=20).map(|i| f64::from(i) / 4.0).collect();
        let c = kde_estimate(&[-1.5, 1.5], &grid, 0.7).unwrap();
        for i in 0..grid.len() {
            assert!((c.density[i] - c.density[grid.len() - 1 - i]).abs() < 1e-15);
        }
        assert_eq!(kde_estimate(&[], &grid, 1.0), Err(AnalyticsError::EmptySample));
        assert_eq!(kde_estimate(&[1.0], &grid, 0.0), Err(AnalyticsError::NonpositiveBandwidth(0.0)));
        assert_eq!(kde_estimate(&[1.0], &grid, -1.0), Err(AnalyticsError::NonpositiveBandwidth(-1.0)));
    }

    #[test]
    fn log_scale_round_trip() {
        let reach = [0.0, 9.0, 99.0, 12_345.0];
        for x in reach {
            let back = KdeScale::Log10p1.inverse(KdeScale::Log10p1.forward(x));
            assert!((back - x).abs() < 1e-9 * x.max(1.0));
        }
        let curve = density_curve(&reach, KdeMetric::Reactions, KdeScale::Log10p1).unwrap();
        let transformed: Vec<f64> = reach.iter().map(|&x| KdeScale::Log10p1.forward(x)).collect();
        let direct = kde_estimate(&transformed, &curve.grid, curve.bandwidth).unwrap();
        assert_eq!(direct.density, curve.density);
        assert!(curve.grid[0] < 0.0 && *curve.grid.last().unwrap() > 4.0);
        assert!((curve.integral() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn csv_exports() {
        let s = ActivitySeries {
            rating_class: RatingClass::High,
            from: day(1),
            to: day(2),
            points: vec![
                ActivityPoint { date: day(1), mean_pct: Some(12.5) },
                ActivityPoint { date: day(2), mean_pct: None },
            ],
        };
        assert_eq!(activity_csv(&[s]), "date,class,mean_pct\n2020-03-01,high,12.5\n2020-03-02,high,\n");
        let c = kde_estimate(&[0.0], &[0.0, 1.0], 1.0).unwrap();
        let out = density_csv(&c);
        assert!(out.starts_with("x,density\n0,0.398942280401"));
        assert_eq!(out.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn density_nonnegative_and_scales(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..10),
            grid in proptest::collection::vec(-80.0f64..80.0, 1..20),
            h in 0.1f64..10.0,
            c in 0.1f64..10.0,
        ) {
            let base = kde_estimate(&xs, &grid, h).unwrap();
            prop_assert!(base.density.iter().all(|&d| d >= 0.0));
            let sx: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let sg: Vec<f64> = grid.iter().map(|x| x * c).collect();
            let scaled = kde_estimate(&sx, &sg, h * c).unwrap();
            // rounding in the exponent grows with z^2, so the relative bound does too
            let zmax = xs.iter().flat_map(|x| grid.iter().map(move |g| ((g - x) / h).abs())).fold(0.0, f64::max);
            let rel = 1e-13 * (1.0 + zmax * zmax);
            for (a, b) in base.density.iter().zip(&scaled.density) {
                prop_assert!((a / c - b).abs() <= rel * a / c + 1e-300);
            }
        }

        #[test]
        fn default_grid_normalizes(xs in proptest::collection::vec(-1e4f64..1e4, 1..60)) {
            let h = silverman_bandwidth(&xs).unwrap();
            let grid = default_grid(&xs, h);
            let c = kde_estimate(&xs, &grid, h).unwrap();
            prop_assert!((c.integral() - 1.0).abs() < 1e-2);
        }

        #[test]
        fn class_mean_within_outlet_range(
            cells in proptest::collection::vec((0u64..5, 1u64..6), 1..5),
        ) {
            let mut counts = DailyCounts::new();
            let mut shares = vec![];
            let mut classes = vec![];
            let names: Vec<String> = (0..cells.len()).map(|i| format!("o{i}.com")).collect();
            for (i, (topic, total)) in cells.iter().enumerate() {
                let topic = (*topic).min(*total);
                record_n(&mut counts, &names[i], day(1), topic, *total);
                shares.push(100.0 * topic as f64 / *total as f64);
                classes.push((names[i].as_str(), RatingClass::Low));
            }
            let s = class_activity_series(&counts, &table(&classes), RatingClass::Low, day(1), day(1)).unwrap();
            let m = s.points[0].mean_pct.unwrap();
            let lo = shares.iter().cloned().fold(f64::MAX, f64::min);
            let hi = shares.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }
}
