use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;

use super::{ReweightMode, ResidualMode, Tapestry, TapestryConfig, Thread};
use crate::dataio::{ColumnCoding, Season, SeasonStamp, SeasonalSeries};
use crate::embedding::{
    build_delay_map, embedding_dim, enumerate_views, levina_bickel_dim, training_cloud, EmbeddedDataset,
    IntrinsicDimEstimate, View,
};
use crate::neighbors::{knn_excluding, Exclusion};
use crate::regression::{fit_gap_regression, GapModel};
use crate::scenario::CategoryBounds;
use crate::tapestry::table::{likelihood_table_multi, LikelihoodTable};
use crate::{rng, Error, Result};

/// Shared state for building many tapestries over one series: the view
/// dimension, the views and their embedded training sets are computed once.
#[derive(Debug, Clone)]
pub struct TapestryBuilder<'a> {
    series: &'a SeasonalSeries,
    coding: ColumnCoding,
    target: usize,
    cfg: TapestryConfig,
    dim_estimate: Option<IntrinsicDimEstimate>,
    m: usize,
    views: Vec<View>,
    train_sets: Vec<EmbeddedDataset>,
    predicted_vars: Vec<usize>,
    bounds: Option<Vec<CategoryBounds>>,
}

impl<'a> TapestryBuilder<'a> {
    pub fn new(series: &'a SeasonalSeries, coding: &ColumnCoding, target: usize, cfg: TapestryConfig) -> Result<Self> {
        if cfg.k == 0 || cfg.j == 0 || cfg.n_views == 0 || cfg.n_draws == 0 {
            return Err(Error::InvalidArgument("k, j, n_views and n_draws must all be positive".into()));
        }
        if !(cfg.h_bw > 0.0) {
            return Err(Error::InvalidArgument(format!("h_bw must be positive, got {}", cfg.h_bw)));
        }
        if coding.columns().iter().any(|&c| c > series.n_vars()) {
            return Err(Error::InvalidArgument(format!(
                "coding {coding} exceeds the {} series variables",
                series.n_vars()
            )));
        }
        if !coding.contains_var(target) {
            return Err(Error::InvalidArgument(format!("target column {} is not in coding {coding}", target + 1)));
        }
        let train = series.train_indices();
        let (Some(&lo), Some(&hi)) = (train.first(), train.last()) else {
            return Err(Error::InsufficientData("series has no training seasons".into()));
        };

        let (dim_estimate, mut m) = match cfg.embedding_dim {
            Some(m) => (None, m),
            None => {
                let cloud = training_cloud(series, coding, cfg.max_lag)?;
                let est = levina_bickel_dim(&cloud, cfg.lb_k.0, cfg.lb_k.1)?;
                let m = embedding_dim(&est)?;
                log::info!("intrinsic dimension {:.3} -> view dimension {m}", est.d_hat);
                (Some(est), m)
            }
        };
        let available = coding.len() * (cfg.max_lag + 1);
        if m > available {
            log::warn!("view dimension {m} exceeds the {available} available coordinates; using {available}");
            m = available;
        }

        let mut views = enumerate_views(coding, target, m, cfg.max_lag, cfg.n_views, cfg.seed)?;
        let distinct = views.len();
        if distinct < cfg.n_views {
            log::info!("only {distinct} distinct views exist; repeating them to fill {} views", cfg.n_views);
            for id in distinct..cfg.n_views {
                views.push(View::new(id, views[id % distinct].coords.clone())?);
            }
        }
        let k = cfg.k;
        let train_sets = views
            .iter()
            .map(|v| Ok(build_delay_map(series, v)?.filter_anchors(|a| a >= lo && a + k <= hi)))
            .collect::<Result<Vec<_>>>()?;

        let mut predicted_vars = vec![target];
        if cfg.reweight_mode == ReweightMode::Multivariate {
            predicted_vars.extend(coding.var_indices().into_iter().filter(|&v| v != target));
        }
        let bounds = CategoryBounds::per_season(series, target).ok();

        Ok(TapestryBuilder {
            series,
            coding: coding.clone(),
            target,
            cfg,
            dim_estimate,
            m,
            views,
            train_sets,
            predicted_vars,
            bounds,
        })
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn embedding_dim(&self) -> usize {
        self.m
    }

    pub fn dim_estimate(&self) -> Option<&IntrinsicDimEstimate> {
        self.dim_estimate.as_ref()
    }

    pub fn config(&self) -> &TapestryConfig {
        &self.cfg
    }

    pub fn predicted_vars(&self) -> &[usize] {
        &self.predicted_vars
    }

    /// Builds the tapestry anchored at `anchor`: for every view, the anchor's
    /// delay vector selects `j` training neighbors, one Cp-selected model is
    /// fitted per gap `1..=k`, and `n_draws` threads are drawn by adding
    /// resampled residuals to the model predictions.
    pub fn build(&self, anchor: SeasonStamp) -> Result<Tapestry> {
        let t0 = self
            .series
            .index_of(anchor)
            .ok_or_else(|| Error::InvalidArgument(format!("anchor {anchor} is outside the series")))?;
        let cfg = &self.cfg;
        let window = cfg.exclusion.unwrap_or(cfg.k);

        let per_view: Vec<Vec<Thread>> = self
            .views
            .par_iter()
            .zip(&self.train_sets)
            .map(|(view, train)| {
                let query = view.delay_vector(self.series, t0).ok_or_else(|| {
                    Error::InsufficientData(format!("anchor {anchor} lacks history for lag {}", view.max_lag()))
                })?;
                let hood = knn_excluding(train, &query, cfg.j, Some(Exclusion { anchor: t0, window }))?;
                let models: Vec<Vec<GapModel>> = self
                    .predicted_vars
                    .iter()
                    .map(|&var| (1..=cfg.k).map(|gap| fit_gap_regression(self.series, train, &hood, var, gap)).collect())
                    .collect::<Result<_>>()?;

                let mut rng = rng::stream(cfg.seed, t0 as u64, view.id as u64);
                let mut threads = Vec::with_capacity(cfg.n_draws);
                for draw in 0..cfg.n_draws {
                    let common = rng.random_range(0..cfg.j);
                    let mut predictions = Vec::with_capacity(models.len());
                    for gaps in &models {
                        let mut row = Vec::with_capacity(cfg.k);
                        for model in gaps {
                            row.push(match cfg.residual_mode {
                                ResidualMode::PerGap => model.predict_with_residual(&query, &mut rng)?,
                                ResidualMode::CommonIndex => model.predict_with_residual_index(&query, common)?,
                            });
                        }
                        predictions.push(row);
                    }
                    threads.push(Thread { view_id: view.id, draw_id: draw, predictions, weight: 0.0 });
                }
                Ok(threads)
            })
            .collect::<Result<_>>()?;

        let mut threads: Vec<Thread> = per_view.into_iter().flatten().collect();
        let w = 1.0 / threads.len() as f64;
        threads.iter_mut().for_each(|t| t.weight = w);

        Ok(Tapestry {
            anchor,
            k: cfg.k,
            target: self.target,
            target_name: self.series.variables[self.target].name.clone(),
            predicted_vars: self.predicted_vars.clone(),
            coding: self.coding.code().to_string(),
            embedding_dim: self.m,
            views: self.views.clone(),
            threads,
            observation_log: vec![],
            config: cfg.clone(),
            category_bounds: self.bounds.clone(),
            degeneracy_events: 0,
        })
    }

    /// Observed values of the predicted variables `1..=k` seasons after
    /// `anchor`; `None` past the end of the series.
    pub fn truth(&self, anchor: SeasonStamp) -> Vec<Option<Vec<f64>>> {
        let t0 = self.series.index_of(anchor);
        (1..=self.cfg.k)
            .map(|h| {
                let t = t0? + h;
                (t < self.series.len()).then(|| self.predicted_vars.iter().map(|&v| self.series.value(t, v)).collect())
            })
            .collect()
    }

    /// Likelihood table over the given anchors (one "year" per anchor).
    pub fn table(&self, anchors: &[SeasonStamp]) -> Result<LikelihoodTable> {
        let tapestries: Vec<Tapestry> = anchors.par_iter().map(|&a| self.build(a)).collect::<Result<_>>()?;
        let truths: Vec<_> = anchors.iter().map(|&a| self.truth(a)).collect();
        likelihood_table_multi(&tapestries, &truths, self.cfg.h_bw, self.cfg.density_floor)
    }
}

pub fn build_tapestry(
    series: &SeasonalSeries,
    anchor: SeasonStamp,
    coding: &ColumnCoding,
    target: usize,
    cfg: TapestryConfig,
) -> Result<Tapestry> {
    TapestryBuilder::new(series, coding, target, cfg)?.build(anchor)
}

/// Test years and forecast origins for [`evaluate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationPlan {
    pub test_years: RangeInclusive<i32>,
    pub origins: Vec<Season>,
}

/// One likelihood table per origin season, each over the test years.
pub fn evaluate(
    series: &SeasonalSeries,
    coding: &ColumnCoding,
    target: usize,
    cfg: TapestryConfig,
    plan: &EvaluationPlan,
) -> Result<Vec<LikelihoodTable>> {
    if let Some((_, end)) = series.train_years {
        if *plan.test_years.start() <= end {
            return Err(Error::InvalidArgument(format!(
                "test years start at {} but training runs through {end}",
                plan.test_years.start()
            )));
        }
    }
    let builder = TapestryBuilder::new(series, coding, target, cfg)?;
    plan.origins
        .iter()
        .map(|&origin| {
            let anchors: Vec<SeasonStamp> = plan
                .test_years
                .clone()
                .map(|y| SeasonStamp::new(y, origin))
                .filter(|&a| series.index_of(a).is_some())
                .collect();
            if anchors.is_empty() {
                return Err(Error::InsufficientData(format!("no {origin} anchors inside the test years")));
            }
            builder.table(&anchors)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{parse_subset_code, Aggregation, VariableSpec};

    /// Two variables: x follows x' = 0.9 x - 0.3 w with w a deterministic driver.
    fn linear_series(n: usize) -> SeasonalSeries {
        let mut rows = Vec::with_capacity(n);
        let (mut x, mut w) = (0.5f64, 0.0f64);
        for t in 0..n {
            w = (t as f64 * 0.7).sin() + 0.5 * (t as f64 * 0.13).cos();
            rows.push(vec![x, w]);
            x = 0.9 * x - 0.3 * w + 0.2;
        }
        let _ = w;
        let vars = ["x", "w"].iter().map(|n| VariableSpec { name: n.to_string(), agg: Aggregation::Mean }).collect();
        let mut s = SeasonalSeries::new(vars, SeasonStamp::new(1900, Season::Winter), rows).unwrap();
        s.train_years = Some((1900, 1900 + (n as i32 / 4) - 6));
        s
    }

    fn cfg() -> TapestryConfig {
        TapestryConfig { embedding_dim: Some(2), max_lag: 1, n_views: 4, n_draws: 25, j: 12, ..Default::default() }
    }

    #[test]
    fn thread_count_and_uniform_weights() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let t = build_tapestry(&s, SeasonStamp::new(1947, Season::Spring), &coding, 0, cfg()).unwrap();
        // views of size 2 with (x,0) forced: 3 distinct, the first repeated
        assert_eq!(t.views.len(), 4);
        assert_eq!(t.views[3].coords, t.views[0].coords);
        assert_ne!(t.threads[0].predictions, t.threads[75].predictions);
        assert_eq!(t.len(), 100);
        assert!(t.threads.iter().all(|th| th.weight == 0.01));
        assert!(t.threads.iter().all(|th| th.predictions[0].len() == 4));
    }

    #[test]
    fn hundred_threads() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let cfg = TapestryConfig { embedding_dim: Some(3), max_lag: 2, ..cfg() };
        let t = build_tapestry(&s, SeasonStamp::new(1947, Season::Spring), &coding, 0, cfg).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.threads.iter().all(|th| th.weight == 0.01));
    }

    #[test]
    fn zero_noise_linear_system_is_exact_at_horizon_one() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let cfg = TapestryConfig { embedding_dim: Some(2), max_lag: 0, ..cfg() };
        let anchor = SeasonStamp::new(1947, Season::Spring);
        let t = build_tapestry(&s, anchor, &coding, 0, cfg).unwrap();
        let t0 = s.index_of(anchor).unwrap();
        let truth = s.value(t0 + 1, 0);
        for th in &t.threads {
            assert!((th.target_at(1) - truth).abs() < 1e-6, "{} vs {truth}", th.target_at(1));
        }
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let anchor = SeasonStamp::new(1946, Season::Fall);
        let a = build_tapestry(&s, anchor, &coding, 0, cfg()).unwrap();
        let b = build_tapestry(&s, anchor, &coding, 0, cfg()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = build_tapestry(&s, anchor, &coding, 0, TapestryConfig { seed: 1, ..cfg() }).unwrap();
        assert_ne!(a.threads, c.threads);
    }

    #[test]
    fn per_gap_residual_mode() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let cfg = TapestryConfig { residual_mode: ResidualMode::PerGap, ..cfg() };
        let t = build_tapestry(&s, SeasonStamp::new(1947, Season::Spring), &coding, 0, cfg).unwrap();
        assert_eq!(t.len(), 100);
    }

    #[test]
    fn multivariate_threads_carry_every_variable() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let cfg = TapestryConfig { reweight_mode: ReweightMode::Multivariate, ..cfg() };
        let t = build_tapestry(&s, SeasonStamp::new(1947, Season::Spring), &coding, 0, cfg).unwrap();
        assert_eq!(t.predicted_vars, vec![0, 1]);
        assert!(t.threads.iter().all(|th| th.predictions.len() == 2));
        assert!(t.reweight(1, 0.0).is_err());
        let r = t.reweight_multi(1, &[0.0, 0.1]).unwrap();
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_requests() {
        let s = linear_series(200);
        let coding = parse_subset_code("2", 2).unwrap();
        assert!(TapestryBuilder::new(&s, &coding, 0, cfg()).is_err());
        let coding = parse_subset_code("12", 2).unwrap();
        let b = TapestryBuilder::new(&s, &coding, 0, cfg()).unwrap();
        assert!(b.build(SeasonStamp::new(2100, Season::Spring)).is_err());
        assert!(b.build(SeasonStamp::new(1900, Season::Winter)).is_err());
        let small_j = TapestryConfig { j: 3, ..cfg() };
        assert!(build_tapestry(&s, SeasonStamp::new(1947, Season::Spring), &coding, 0, small_j).is_err());
    }

    #[test]
    fn evaluate_tables_have_triangular_shape() {
        let s = linear_series(200);
        let coding = parse_subset_code("12", 2).unwrap();
        let plan = EvaluationPlan { test_years: 1945..=1948, origins: Season::ALL.to_vec() };
        let tables = evaluate(&s, &coding, 0, cfg(), &plan).unwrap();
        assert_eq!(tables.len(), 4);
        for t in &tables {
            for stage in 0..4 {
                for h in 1..=4 {
                    assert_eq!(t.cell(stage, h).is_some(), stage < h, "stage {stage} h {h}");
                }
            }
        }
        let early = EvaluationPlan { test_years: 1930..=1931, origins: vec![Season::Winter] };
        assert!(evaluate(&s, &coding, 0, cfg(), &early).is_err());
    }
}
