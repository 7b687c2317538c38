//! Intrinsic dimension, delay maps and multiview enumeration.

use std::collections::BTreeSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{ColumnCoding, SeasonStamp, SeasonalSeries};
use crate::{rng, Error, Result};

/// Levina-Bickel estimate with the per-point values kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicDimEstimate {
    pub d_hat: f64,
    pub k_range: (usize, usize),
    /// Per-point estimate averaged over `k_range`; points without enough
    /// distinct neighbors are left out.
    pub per_point: Vec<f64>,
}

/// Maximum-likelihood intrinsic dimension from nearest-neighbor distance
/// ratios, averaged over points and then over `k` in `k1..=k2`.
///
/// For a point `x` with neighbor distances `T_1 <= T_2 <= ...` the per-point
/// estimate is `(k - 2) / sum_{j<k} ln(T_k / T_j)`, the bias-corrected form of
/// the inverse mean log ratio. Zero distances (duplicate points) are dropped
/// with a warning.
pub fn levina_bickel_dim(points: &[Vec<f64>], k1: usize, k2: usize) -> Result<IntrinsicDimEstimate> {
    if k1 < 3 || k2 < k1 {
        return Err(Error::InvalidArgument(format!("need 3 <= k1 <= k2, got ({k1}, {k2})")));
    }
    if points.len() <= k2 + 1 {
        return Err(Error::InsufficientData(format!(
            "{} points for k2 = {k2}; need more than {}",
            points.len(),
            k2 + 1
        )));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
    }

    let per_point: Vec<Option<(f64, bool)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, y)| euclidean(x, y))
                .collect();
            let before = d.len();
            d.retain(|&v| v > 0.0);
            let had_dupes = d.len() < before;
            if d.len() < k2 {
                return None;
            }
            d.select_nth_unstable_by(k2 - 1, |a, b| a.total_cmp(b));
            let near = &mut d[..k2];
            near.sort_unstable_by(|a, b| a.total_cmp(b));
            let logs: Vec<f64> = near.iter().map(|t| t.ln()).collect();
            let mut acc = 0.0;
            for k in k1..=k2 {
                let s: f64 = logs[..k - 1].iter().map(|lj| logs[k - 1] - lj).sum();
                acc += (k as f64 - 2.0) / s;
            }
            Some((acc / (k2 - k1 + 1) as f64, had_dupes))
        })
        .collect();

    let dupes = per_point.iter().flatten().filter(|(_, d)| *d).count();
    if dupes > 0 {
        log::warn!("levina-bickel: dropped zero distances at {dupes} duplicated points");
    }
    let per_point: Vec<f64> = per_point.into_iter().flatten().map(|(v, _)| v).filter(|v| v.is_finite()).collect();
    if per_point.is_empty() {
        return Err(Error::Degenerate("no point has enough distinct neighbors".into()));
    }
    let d_hat = per_point.iter().sum::<f64>() / per_point.len() as f64;
    if !(d_hat.is_finite() && d_hat > 0.0) {
        return Err(Error::Degenerate(format!("intrinsic dimension estimate {d_hat}")));
    }
    Ok(IntrinsicDimEstimate { d_hat, k_range: (k1, k2), per_point })
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Delay-map size: 2.5 times the intrinsic dimension, rounded up, at least 2.
pub fn embedding_dim(d: &IntrinsicDimEstimate) -> Result<usize> {
    if !(d.d_hat > 0.0) {
        return Err(Error::InvalidArgument(format!("d_hat must be positive, got {}", d.d_hat)));
    }
    // the epsilon keeps exact products such as 2.5 * 1.2 from rounding up a notch
    Ok(((2.5 * d.d_hat - 1e-9).ceil() as usize).max(2))
}

/// One delay-coordinate set. `coords` holds `(variable, lag)` pairs with
/// 0-based variable indices, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    pub id: usize,
    pub coords: Vec<(usize, usize)>,
}

impl View {
    pub fn new(id: usize, mut coords: Vec<(usize, usize)>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("view has no coordinates".into()));
        }
        coords.sort_unstable();
        if coords.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("view repeats a coordinate".into()));
        }
        Ok(View { id, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn max_lag(&self) -> usize {
        self.coords.iter().map(|c| c.1).max().unwrap_or(0)
    }

    /// The delay vector at time `t`, if every lag reaches inside the series.
    pub fn delay_vector(&self, s: &SeasonalSeries, t: usize) -> Option<Vec<f64>> {
        if t >= s.len() || t < self.max_lag() {
            return None;
        }
        Some(self.coords.iter().map(|&(v, lag)| s.value(t - lag, v)).collect())
    }
}

/// Points of one view, one per anchor time whose lags are all available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDataset {
    pub view: View,
    pub points: Vec<Vec<f64>>,
    /// Time index (into the source series) of each point's lag-0 coordinate.
    pub anchors: Vec<usize>,
    pub start: SeasonStamp,
}

impl EmbeddedDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn anchor_stamp(&self, i: usize) -> SeasonStamp {
        self.start.offset(self.anchors[i] as i64)
    }

    /// Keeps only points whose anchor satisfies `keep`.
    pub fn filter_anchors(&self, keep: impl Fn(usize) -> bool) -> EmbeddedDataset {
        let (points, anchors) =
            self.points.iter().zip(&self.anchors).filter(|(_, &a)| keep(a)).map(|(p, &a)| (p.clone(), a)).unzip();
        EmbeddedDataset { view: self.view.clone(), points, anchors, start: self.start }
    }
}

pub fn build_delay_map(s: &SeasonalSeries, view: &View) -> Result<EmbeddedDataset> {
    if view.coords.is_empty() {
        return Err(Error::InvalidArgument("view has no coordinates".into()));
    }
    if let Some(&(v, _)) = view.coords.iter().find(|c| c.0 >= s.n_vars()) {
        return Err(Error::InvalidArgument(format!("view uses variable {v} but series has {}", s.n_vars())));
    }
    let max_lag = view.max_lag();
    if max_lag >= s.len() {
        log::warn!("view {} needs lag {max_lag} but series has {} seasons; no points", view.id, s.len());
    }
    let (points, anchors) = (max_lag..s.len()).map(|t| (view.delay_vector(s, t).expect("lag in range"), t)).unzip();
    Ok(EmbeddedDataset { view: view.clone(), points, anchors, start: s.start })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Number of distinct views of size `m` that contain `(target, 0)`.
pub fn count_views(coding: &ColumnCoding, m: usize, max_lag: usize) -> u128 {
    let total = coding.len() * (max_lag + 1);
    if m == 0 || total == 0 {
        return 0;
    }
    binomial(total - 1, m - 1)
}

/// Draws `n_views` distinct views of dimension `m` over `coding x {0..=max_lag}`.
/// Every view contains the target at lag 0. When no more than `n_views`
/// views exist, all of them are returned in lexicographic order.
pub fn enumerate_views(
    coding: &ColumnCoding,
    target: usize,
    m: usize,
    max_lag: usize,
    n_views: usize,
    seed: u64,
) -> Result<Vec<View>> {
    if n_views == 0 {
        return Err(Error::InvalidArgument("n_views must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("view dimension must be at least 1".into()));
    }
    if !coding.contains_var(target) {
        return Err(Error::InvalidArgument(format!(
            "target column {} is not in coding {}",
            target + 1,
            coding.code()
        )));
    }
    let candidates: Vec<(usize, usize)> = coding
        .var_indices()
        .into_iter()
        .flat_map(|v| (0..=max_lag).map(move |lag| (v, lag)))
        .filter(|&c| c != (target, 0))
        .collect();
    if m - 1 > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot build {m}-dimensional views from {} coordinates",
            candidates.len() + 1
        )));
    }

    let total = binomial(candidates.len(), m - 1);
    let with_target = |id: usize, picks: &[usize]| {
        let mut coords: Vec<(usize, usize)> = picks.iter().map(|&i| candidates[i]).collect();
        coords.push((target, 0));
        View::new(id, coords)
    };

    if total <= n_views as u128 {
        let mut views = Vec::with_capacity(total as usize);
        for (id, combo) in Combinations::new(candidates.len(), m - 1).enumerate() {
            views.push(with_target(id, &combo)?);
        }
        return Ok(views);
    }

    let mut rng = rng::stream(seed, 0x7669_6577, 0);
    let mut seen = BTreeSet::new();
    let mut views = Vec::with_capacity(n_views);
    while views.len() < n_views {
        let mut picks = index::sample(&mut rng, candidates.len(), m - 1).into_vec();
        picks.sort_unstable();
        if seen.insert(picks.clone()) {
            views.push(with_target(views.len(), &picks)?);
        }
    }
    Ok(views)
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Full delay-coordinate cloud over the coded variables at lags `0..=max_lag`,
/// restricted to training anchors. This is the point set the intrinsic
/// dimension is estimated on.
pub fn training_cloud(s: &SeasonalSeries, coding: &ColumnCoding, max_lag: usize) -> Result<Vec<Vec<f64>>> {
    let coords = coding.var_indices().into_iter().flat_map(|v| (0..=max_lag).map(move |l| (v, l))).collect();
    let view = View::new(usize::MAX, coords)?;
    let train = s.train_indices();
    let (lo, hi) = match (train.first(), train.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InsufficientData("series has no training seasons".into())),
    };
    let ds = build_delay_map(s, &view)?;
    Ok(ds.filter_anchors(|a| a >= lo + max_lag && a <= hi).points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{parse_subset_code, Aggregation, Season, VariableSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn est(d: f64) -> IntrinsicDimEstimate {
        IntrinsicDimEstimate { d_hat: d, k_range: (5, 10), per_point: vec![] }
    }

    #[test]
    fn embedding_dim_rule() {
        assert_eq!(embedding_dim(&est(2.0)).unwrap(), 5);
        assert_eq!(embedding_dim(&est(1.2)).unwrap(), 3);
        assert_eq!(embedding_dim(&est(0.2)).unwrap(), 2);
        assert_eq!(embedding_dim(&est(2.06)).unwrap(), 6);
        assert!(embedding_dim(&est(0.0)).is_err());
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        assert!(matches!(levina_bickel_dim(&pts, 5, 10), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn duplicates_are_tolerated() {
        let mut pts: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        pts.extend(pts.clone());
        let d = levina_bickel_dim(&pts, 5, 10).unwrap();
        assert!(d.d_hat.is_finite() && d.d_hat > 0.0);
    }

    fn uni(vals: &[f64], n_vars: usize) -> SeasonalSeries {
        let vars = (0..n_vars).map(|i| VariableSpec { name: format!("v{i}"), agg: Aggregation::Mean }).collect();
        let rows = vals.chunks(n_vars).map(|c| c.to_vec()).collect();
        SeasonalSeries::new(vars, SeasonStamp::new(2000, Season::Winter), rows).unwrap()
    }

    #[test]
    fn univariate_delay_map() {
        let s = uni(&[1.0, 2.0, 3.0, 4.0, 5.0], 1);
        let ds = build_delay_map(&s, &View::new(0, vec![(0, 0), (0, 1)]).unwrap()).unwrap();
        assert_eq!(ds.points, vec![vec![2.0, 1.0], vec![3.0, 2.0], vec![4.0, 3.0], vec![5.0, 4.0]]);
        assert_eq!(ds.anchors, vec![1, 2, 3, 4]);
    }

    #[test]
    fn lag_beyond_series_is_empty() {
        let s = uni(&[1.0, 2.0, 3.0], 1);
        let ds = build_delay_map(&s, &View::new(0, vec![(0, 0), (0, 5)]).unwrap()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn two_variable_panel_by_hand() {
        // v0 = 10, 11, 12, 13 ; v1 = 20, 21, 22, 23
        let s = uni(&[10.0, 20.0, 11.0, 21.0, 12.0, 22.0, 13.0, 23.0], 2);
        let view = View::new(0, vec![(1, 2), (0, 0), (1, 0)]).unwrap();
        assert_eq!(view.coords, vec![(0, 0), (1, 0), (1, 2)]);
        let ds = build_delay_map(&s, &view).unwrap();
        assert_eq!(ds.anchors, vec![2, 3]);
        assert_eq!(ds.points[0], vec![12.0, 22.0, 20.0]);
        assert_eq!(ds.points[1], vec![13.0, 23.0, 21.0]);
        assert_eq!(ds.anchor_stamp(1), SeasonStamp::new(2000, Season::Fall));
    }

    #[test]
    fn empty_view_rejected() {
        assert!(View::new(0, vec![]).is_err());
        assert!(View::new(0, vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn forced_univariate_view() {
        let coding = parse_subset_code("1", 9).unwrap();
        let views = enumerate_views(&coding, 0, 4, 3, 10, 1).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].coords, vec![(0, 0), (0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn sampled_views_are_distinct_and_deterministic() {
        let coding = parse_subset_code("127", 9).unwrap();
        let a = enumerate_views(&coding, 0, 4, 3, 20, 42).unwrap();
        let b = enumerate_views(&coding, 0, 4, 3, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let set: BTreeSet<_> = a.iter().map(|v| v.coords.clone()).collect();
        assert_eq!(set.len(), 20);
        for v in &a {
            assert!(v.coords.contains(&(0, 0)));
            assert_eq!(v.dim(), 4);
            assert!(v.coords.iter().all(|&(var, lag)| [0, 1, 6].contains(&var) && lag <= 3));
        }
        let c = enumerate_views(&coding, 0, 4, 3, 20, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn view_count_matches_brute_force() {
        for (code, m, max_lag) in [("12", 3, 2), ("127", 4, 1), ("1", 2, 3), ("123", 2, 0)] {
            let coding = parse_subset_code(code, 9).unwrap();
            let vars = coding.var_indices();
            let all: Vec<(usize, usize)> =
                vars.iter().flat_map(|&v| (0..=max_lag).map(move |l| (v, l))).collect();
            // every subset of all coordinates by bitmask
            let brute = (0u32..1 << all.len())
                .filter(|mask| mask.count_ones() as usize == m && mask & 1 == 1)
                .count();
            assert_eq!(count_views(&coding, m, max_lag), brute as u128, "{code}");
            let views = enumerate_views(&coding, 0, m, max_lag, 10_000, 0).unwrap();
            assert_eq!(views.len(), brute);
        }
    }

    #[test]
    fn impossible_view_requests() {
        let coding = parse_subset_code("12", 9).unwrap();
        assert!(enumerate_views(&coding, 0, 7, 2, 5, 0).is_err());
        assert!(enumerate_views(&coding, 0, 2, 2, 0, 0).is_err());
        assert!(enumerate_views(&coding, 4, 2, 2, 5, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn rotation_invariance(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), 0.3 * rng.random::<f64>()]).collect();
            let (c, s) = (angle.cos(), angle.sin());
            let rot: Vec<Vec<f64>> = pts.iter().map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect();
            let a = levina_bickel_dim(&pts, 5, 10).unwrap().d_hat;
            let b = levina_bickel_dim(&rot, 5, 10).unwrap().d_hat;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn delay_map_point_count(n in 1usize..40, lags in prop::collection::btree_set(0usize..8, 1..4)) {
            let s = uni(&(0..n).map(|i| i as f64).collect::<Vec<_>>(), 1);
            let view = View::new(0, lags.iter().map(|&l| (0, l)).collect()).unwrap();
            let ds = build_delay_map(&s, &view).unwrap();
            prop_assert_eq!(ds.len(), n.saturating_sub(view.max_lag()));
        }

        #[test]
        fn views_contain_target(seed in 0u64..500, m in 2usize..6) {
            let coding = parse_subset_code("1357", 9).unwrap();
            for v in enumerate_views(&coding, 2, m, 2, 7, seed).unwrap() {
                prop_assert!(v.coords.contains(&(2, 0)));
            }
        }
    }
}
