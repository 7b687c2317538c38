//! Paired t-tests with lag-window variance, false discovery rate selection
//! and Kolmogorov-Smirnov uniformity.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::tapestry::LikelihoodTable;
use crate::{Error, Result};

/// Truncation lag for the autocovariance sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LagChoice {
    /// `floor(n^(1/3))`.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub mean_diff: f64,
    pub adjusted_variance: f64,
    pub t_stat: f64,
    pub p_two_sided: f64,
    /// One-sided p for a positive mean difference.
    pub p_greater: f64,
    pub n: usize,
    pub lag: usize,
    /// The lag-window variance was negative and replaced by `gamma_0 / n`.
    pub clipped: bool,
}

pub fn auto_lag(n: usize) -> usize {
    ((n as f64).cbrt() + 1e-9).floor() as usize
}

/// Sample autocovariance at `lag`, normalized by `n - 1`.
fn autocov(d: &[f64], mean: f64, lag: usize) -> f64 {
    let s: f64 = (lag..d.len()).map(|t| (d[t] - mean) * (d[t - lag] - mean)).sum();
    s / (d.len() - 1) as f64
}

pub fn paired_autocov_ttest(a: &[f64], b: &[f64]) -> Result<TestResult> {
    paired_autocov_ttest_with(a, b, LagChoice::Auto)
}

/// Paired t-test on `a - b` whose variance of the mean uses Bartlett-weighted
/// autocovariances up to the truncation lag. Degrees of freedom are `n - 1`.
pub fn paired_autocov_ttest_with(a: &[f64], b: &[f64], lag: LagChoice) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("paired test needs 3 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("log-likelihood differences must be finite".into()));
    }
    let lag = match lag {
        LagChoice::Auto => auto_lag(n),
        LagChoice::Fixed(l) => l,
    }
    .min(n - 1);
    let mean = d.iter().sum::<f64>() / n as f64;
    let g0 = autocov(&d, mean, 0);
    let lw: f64 = (1..=lag).map(|l| (1.0 - l as f64 / (lag + 1) as f64) * autocov(&d, mean, l)).sum();
    let mut var = (g0 + 2.0 * lw) / n as f64;
    let mut clipped = false;
    if var < 0.0 {
        log::warn!("lag-window variance {var:e} is negative; clipping to gamma_0 / n");
        var = g0 / n as f64;
        clipped = true;
    }

    let (t_stat, p_two_sided, p_greater) = if var > 0.0 {
        let t = mean / var.sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 3");
        (t, (2.0 * dist.sf(t.abs())).min(1.0), dist.sf(t))
    } else if mean == 0.0 {
        (0.0, 1.0, 0.5)
    } else {
        log::warn!("differences are constant at {mean}; variance is zero");
        let t = mean.signum() * f64::INFINITY;
        (t, 0.0, if mean > 0.0 { 0.0 } else { 1.0 })
    };
    Ok(TestResult { mean_diff: mean, adjusted_variance: var, t_stat, p_two_sided, p_greater, n, lag, clipped })
}

/// Labels a p-value by origin season, horizon and stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestLabel {
    pub season: String,
    pub horizon: usize,
    pub stage: usize,
    pub comparison: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTest {
    pub label: TestLabel,
    pub result: TestResult,
}

fn season_label(t: &LikelihoodTable) -> String {
    t.origin.map_or_else(|| "all".to_string(), |s| s.to_string())
}

/// Keeps the anchors where both series have a value.
fn paired(a: &[Option<f64>], b: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).unzip()
}

/// Tests every stage `s >= 1` against stage 0 at each horizon, longest
/// horizon first.
pub fn learning_tests(table: &LikelihoodTable) -> Result<Vec<LabeledTest>> {
    let mut out = vec![];
    for h in (2..=table.k).rev() {
        for s in 1..h {
            let (a, b) = paired(table.per_anchor(s, h), table.per_anchor(0, h));
            if a.len() < 3 {
                log::warn!("skipping stage {s} horizon {h}: only {} paired anchors", a.len());
                continue;
            }
            out.push(LabeledTest {
                label: TestLabel {
                    season: season_label(table),
                    horizon: h,
                    stage: s,
                    comparison: format!("stage{s}-vs-stage0"),
                },
                result: paired_autocov_ttest(&a, &b)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: TestLabel,
    pub sum_a: f64,
    pub sum_b: f64,
    pub result: TestResult,
    /// `a`, `b`, or `tie` by summed log-likelihood.
    pub dominant: String,
}

/// Cell-by-cell comparison of two models evaluated on the same anchors.
pub fn compare_tables(a: &[LikelihoodTable], b: &[LikelihoodTable]) -> Result<Vec<Comparison>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let mut out = vec![];
    for (ta, tb) in a.iter().zip(b) {
        if ta.origin != tb.origin || ta.k != tb.k || ta.labels != tb.labels {
            return Err(Error::InvalidArgument(format!(
                "tables for {} do not cover the same anchors",
                season_label(ta)
            )));
        }
        for h in (1..=ta.k).rev() {
            for s in 0..h {
                let (xa, xb) = paired(ta.per_anchor(s, h), tb.per_anchor(s, h));
                if xa.len() < 3 {
                    continue;
                }
                let result = paired_autocov_ttest(&xa, &xb)?;
                let (sum_a, sum_b): (f64, f64) = (xa.iter().sum(), xb.iter().sum());
                let dominant = if sum_a > sum_b {
                    "a"
                } else if sum_b > sum_a {
                    "b"
                } else {
                    "tie"
                };
                out.push(Comparison {
                    label: TestLabel { season: season_label(ta), horizon: h, stage: s, comparison: "a-vs-b".into() },
                    sum_a,
                    sum_b,
                    result,
                    dominant: dominant.into(),
                });
            }
        }
    }
    Ok(out)
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("csv output: {e}"))
}

pub fn write_learning_csv<W: Write>(tests: &[LabeledTest], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "season", "horizon", "stage", "comparison", "n", "lag", "mean_diff", "adjusted_variance", "t", "p",
        "p_greater", "clipped",
    ])
    .map_err(csv_err)?;
    for t in tests {
        let r = &t.result;
        out.write_record([
            t.label.season.clone(),
            t.label.horizon.to_string(),
            t.label.stage.to_string(),
            t.label.comparison.clone(),
            r.n.to_string(),
            r.lag.to_string(),
            r.mean_diff.to_string(),
            r.adjusted_variance.to_string(),
            r.t_stat.to_string(),
            r.p_two_sided.to_string(),
            r.p_greater.to_string(),
            r.clipped.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

pub fn write_comparisons_csv<W: Write>(rows: &[Comparison], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "season", "horizon", "stage", "comparison", "n", "lag", "sum_a", "sum_b", "mean_diff", "t", "p", "dominant",
    ])
    .map_err(csv_err)?;
    for c in rows {
        let r = &c.result;
        out.write_record([
            c.label.season.clone(),
            c.label.horizon.to_string(),
            c.label.stage.to_string(),
            c.label.comparison.clone(),
            r.n.to_string(),
            r.lag.to_string(),
            c.sum_a.to_string(),
            c.sum_b.to_string(),
            r.mean_diff.to_string(),
            r.t_stat.to_string(),
            r.p_two_sided.to_string(),
            c.dominant.clone(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledP {
    pub label: TestLabel,
    pub p: f64,
}

/// Reads any CSV with a `p` column; `season`, `horizon`, `stage` and
/// `comparison` are picked up when present.
pub fn read_pvalues_csv<R: Read>(r: R, origin: &str) -> Result<Vec<LabeledP>> {
    let perr = |line: usize, msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let p_col = col("p").ok_or_else(|| perr(1, "no `p` column".into()))?;
    let (season, horizon, stage, comparison) = (col("season"), col("horizon"), col("stage"), col("comparison"));
    let mut out = vec![];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let num = |c: Option<usize>| -> Result<usize> {
            c.map_or(Ok(0), |c| rec[c].parse().map_err(|_| perr(line, format!("bad integer {:?}", &rec[c]))))
        };
        let p: f64 = rec[p_col].parse().map_err(|_| perr(line, format!("bad p-value {:?}", &rec[p_col])))?;
        out.push(LabeledP {
            label: TestLabel {
                season: season.map_or_else(String::new, |c| rec[c].to_string()),
                horizon: num(horizon)?,
                stage: num(stage)?,
                comparison: comparison.map_or_else(String::new, |c| rec[c].to_string()),
            },
            p,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrEntry {
    pub label: TestLabel,
    pub p: f64,
    /// 1-based rank among the sorted p-values.
    pub rank: usize,
    /// Step-up threshold `rank / m * q / c(m)`.
    pub threshold: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub q: f64,
    pub dependent: bool,
    pub c_m: f64,
    /// Sorted by rank.
    pub entries: Vec<FdrEntry>,
    pub n_rejected: usize,
    pub ks_d: f64,
    pub ks_p: f64,
}

/// Step-up selection: rejects the `i*` smallest p-values where `i*` is the
/// largest `i` with `p_(i) <= i / m * q / c(m)`; `c(m)` is the harmonic sum
/// when `dependent`, else 1.
pub fn fdr_select(pvalues: &[LabeledP], q: f64, dependent: bool) -> Result<FdrReport> {
    if pvalues.is_empty() {
        return Err(Error::InvalidArgument("no p-values".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {q}")));
    }
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(&p.p)) {
        return Err(Error::InvalidArgument(format!("p-value {} outside [0, 1]", bad.p)));
    }
    let m = pvalues.len();
    let c_m = if dependent { (1..=m).map(|i| 1.0 / i as f64).sum() } else { 1.0 };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].p.total_cmp(&pvalues[b].p).then(a.cmp(&b)));
    let threshold = |rank: usize| rank as f64 / m as f64 * q / c_m;
    let n_rejected = (1..=m).rev().find(|&i| pvalues[order[i - 1]].p <= threshold(i)).unwrap_or(0);
    let entries = order
        .iter()
        .enumerate()
        .map(|(i, &o)| FdrEntry {
            label: pvalues[o].label.clone(),
            p: pvalues[o].p,
            rank: i + 1,
            threshold: threshold(i + 1),
            rejected: i < n_rejected,
        })
        .collect();
    let (ks_d, ks_p) = ks_uniform(&pvalues.iter().map(|p| p.p).collect::<Vec<_>>())?;
    Ok(FdrReport { q, dependent, c_m, entries, n_rejected, ks_d, ks_p })
}

impl FdrReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["season", "horizon", "stage", "comparison", "p", "rank", "threshold", "rejected"])
            .map_err(csv_err)?;
        for e in &self.entries {
            out.write_record([
                e.label.season.clone(),
                e.label.horizon.to_string(),
                e.label.stage.to_string(),
                e.label.comparison.clone(),
                e.p.to_string(),
                e.rank.to_string(),
                e.threshold.to_string(),
                e.rejected.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    }

    /// Sorted p against rank with the threshold line, for external plotting.
    pub fn plot_json(&self) -> Result<String> {
        let m = self.entries.len();
        let points: Vec<_> = self
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "rank": e.rank,
                    "p": e.p,
                    "threshold": e.threshold,
                    "rejected": e.rejected,
                    "label": e.label,
                })
            })
            .collect();
        let v = serde_json::json!({
            "q": self.q,
            "dependent": self.dependent,
            "c_m": self.c_m,
            "m": m,
            "n_rejected": self.n_rejected,
            "threshold_line": { "slope": self.q / self.c_m / m as f64, "intercept": 0.0 },
            "ks": { "d": self.ks_d, "p": self.ks_p },
            "points": points,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Complementary Kolmogorov distribution function.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1). The p-value is
/// the asymptotic Kolmogorov tail at `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_uniform(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("KS test needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("value {v} outside [0, 1]")));
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok((d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(ps: &[f64]) -> Vec<LabeledP> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| LabeledP {
                label: TestLabel { season: "all".into(), horizon: i, stage: 0, comparison: String::new() },
                p,
            })
            .collect()
    }

    #[test]
    fn identical_series_give_p_one() {
        let a = [1.0, -2.0, 0.5, 3.0];
        let r = paired_autocov_ttest(&a, &a).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.t_stat, 0.0);
    }

    #[test]
    fn constant_nonzero_difference_gives_p_zero() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.5, 1.5, 2.5];
        let r = paired_autocov_ttest(&a, &b).unwrap();
        assert_eq!(r.p_two_sided, 0.0);
        assert!(r.t_stat > 0.0);
    }

    #[test]
    fn lag_zero_is_the_classical_paired_t() {
        let a = [2.1, 3.4, 1.9, 5.0, 4.2, 3.3, 2.8, 4.9, 3.1];
        let b = [1.8, 3.0, 2.2, 4.1, 4.0, 2.5, 2.9, 4.0, 2.7];
        let r = paired_autocov_ttest_with(&a, &b, LagChoice::Fixed(0)).unwrap();
        // textbook: t = mean(d) / (s_d / sqrt(n)), s_d with n - 1
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        let s2 = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let t = m / (s2 / n).sqrt();
        assert!((r.t_stat - t).abs() < 1e-12);
        // reference values from a standard statistics package
        assert!((r.t_stat - 2.741_411_574_957_85).abs() < 1e-10);
        assert!((r.p_two_sided - 0.025_393_761_478_279).abs() < 1e-9, "{}", r.p_two_sided);
    }

    #[test]
    fn nine_years_use_lag_two() {
        let a: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).sin()).collect();
        let b = vec![0.0; 9];
        let r = paired_autocov_ttest(&a, &b).unwrap();
        assert_eq!(r.lag, 2);
        assert_eq!(r.t_stat.signum(), r.mean_diff.signum());
        assert_eq!(auto_lag(8), 2);
        assert_eq!(auto_lag(27), 3);
        assert_eq!(auto_lag(64), 4);
    }

    #[test]
    fn alternating_differences_clip() {
        let a = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.2];
        let r = paired_autocov_ttest_with(&a, &[0.0; 9], LagChoice::Fixed(1)).unwrap();
        assert!(r.adjusted_variance > 0.0);
        let r2 = paired_autocov_ttest_with(&a, &[0.0; 9], LagChoice::Fixed(0)).unwrap();
        if r.clipped {
            assert_eq!(r.adjusted_variance, r2.adjusted_variance);
        }
    }

    #[test]
    fn step_up_hand_example() {
        let r = fdr_select(&lp(&[0.001, 0.02, 0.8]), 0.1, true).unwrap();
        assert!((r.c_m - 1.833_333_333).abs() < 1e-9);
        let th: Vec<f64> = r.entries.iter().map(|e| e.threshold).collect();
        for (t, e) in th.iter().zip([0.0182, 0.0364, 0.0545]) {
            assert!((t - e).abs() < 1e-4);
        }
        assert_eq!(r.n_rejected, 2);
        assert_eq!(r.entries.iter().filter(|e| e.rejected).count(), 2);
    }

    #[test]
    fn step_up_extremes() {
        assert_eq!(fdr_select(&lp(&[1e-9; 10]), 0.1, true).unwrap().n_rejected, 10);
        assert_eq!(fdr_select(&lp(&[1.0; 10]), 0.1, true).unwrap().n_rejected, 0);
        assert!(fdr_select(&[], 0.1, true).is_err());
        assert!(fdr_select(&lp(&[0.5]), 1.0, true).is_err());
        // step-up, not step-down: a large p at rank 1 does not block rank 2
        let r = fdr_select(&lp(&[0.04, 0.045]), 0.1, false).unwrap();
        assert_eq!(r.n_rejected, 2);
    }

    #[test]
    fn ks_known_values() {
        let (d, p) = ks_uniform(&[0.0; 12]).unwrap();
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
        let n = 50;
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let (d, p) = ks_uniform(&grid).unwrap();
        assert!(d <= 1.0 / (n + 1) as f64 + 1e-15);
        assert!(p > 0.99);
        // Kolmogorov tail: Q(1.36) ~ 0.049, Q(1.63) ~ 0.010
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_p_values_are_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ps: Vec<f64> = (0..1000)
            .map(|_| {
                let xs: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
                ks_uniform(&xs).unwrap().1
            })
            .collect();
        let (_, p) = ks_uniform(&ps).unwrap();
        assert!(p > 0.01, "KS of KS p = {p}");
    }

    #[test]
    fn csv_round_trip_of_p_values() {
        let tests = vec![LabeledTest {
            label: TestLabel { season: "Winter".into(), horizon: 4, stage: 3, comparison: "stage3-vs-stage0".into() },
            result: paired_autocov_ttest(&[1.0, 2.0, 3.5, 1.0], &[0.5, 2.1, 3.0, 0.2]).unwrap(),
        }];
        let mut buf = vec![];
        write_learning_csv(&tests, &mut buf).unwrap();
        let back = read_pvalues_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back[0].label, tests[0].label);
        assert_eq!(back[0].p, tests[0].result.p_two_sided);
    }

    fn table_from(terms: Vec<Vec<Vec<Option<f64>>>>, n: usize) -> LikelihoodTable {
        LikelihoodTable {
            k: terms.len(),
            origin: None,
            labels: (0..n).map(|i| format!("{}:Winter", 2000 + i)).collect(),
            terms,
            flags: vec![],
        }
    }

    #[test]
    fn six_learning_tests_for_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 9;
        let terms = (0..4)
            .map(|s| (1..=4).map(|h| (0..n).map(|_| (s < h).then(|| rng.random::<f64>())).collect()).collect())
            .collect();
        let t = table_from(terms, n);
        let tests = learning_tests(&t).unwrap();
        let labels: Vec<(usize, usize)> = tests.iter().map(|t| (t.label.horizon, t.label.stage)).collect();
        assert_eq!(labels, vec![(4, 1), (4, 2), (4, 3), (3, 1), (3, 2), (2, 1)]);

        let same = (0..4).map(|_| (1..=4).map(|h| (0..n).map(|y| Some((y * h) as f64)).collect()).collect()).collect();
        let tests = learning_tests(&table_from(same, n)).unwrap();
        assert!(tests.iter().all(|t| t.result.p_two_sided == 1.0));

        let cmp = compare_tables(std::slice::from_ref(&t), std::slice::from_ref(&t)).unwrap();
        assert_eq!(cmp.len(), 10);
        assert!(cmp.iter().all(|c| c.result.p_two_sided == 1.0 && c.dominant == "tie"));
    }

    proptest! {
        #[test]
        fn swapping_negates_t(a in prop::collection::vec(-5.0f64..5.0, 3..30), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
            let ab = paired_autocov_ttest(&a, &b).unwrap();
            let ba = paired_autocov_ttest(&b, &a).unwrap();
            prop_assert!((ab.t_stat + ba.t_stat).abs() <= 1e-12 * ab.t_stat.abs().max(1.0));
            prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p_two_sided));
            prop_assert!(ab.adjusted_variance >= 0.0);
        }

        #[test]
        fn dependent_rejections_nest(ps in prop::collection::vec(0.0f64..=1.0, 1..60), q in 0.01f64..0.5) {
            let labeled = lp(&ps);
            let dep = fdr_select(&labeled, q, true).unwrap();
            let ind = fdr_select(&labeled, q, false).unwrap();
            prop_assert!(dep.n_rejected <= ind.n_rejected);
            // rejected sets are prefixes of the same sorted order
            for (d, i) in dep.entries.iter().zip(&ind.entries) {
                prop_assert!(!d.rejected || i.rejected);
            }
        }
    }
}
