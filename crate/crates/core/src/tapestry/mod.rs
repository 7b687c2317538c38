//! Thread ensembles, sequential Gaussian reweighting and weighted predictive
//! densities.

mod build;
mod table;

pub use build::{build_tapestry, evaluate, EvaluationPlan, TapestryBuilder};
pub use table::{likelihood_table, likelihood_table_multi, read_tables_csv, write_tables_csv, LikelihoodTable};

use serde::{Deserialize, Serialize};

use crate::dataio::{Season, SeasonStamp};
use crate::embedding::View;
use crate::scenario::CategoryBounds;
use crate::{Error, Result};

/// How residuals are drawn across the gaps of one thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// An independent residual for every gap.
    PerGap,
    /// One training trajectory per thread: the same residual index is used
    /// at every gap.
    #[default]
    CommonIndex,
}

/// Which observed quantities drive reweighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightMode {
    /// Residual of the target variable only.
    #[default]
    Target,
    /// Product of standard normal kernels over every coded variable. Threads
    /// then carry predictions for all of them.
    Multivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapestryConfig {
    /// Maximum horizon in seasons.
    pub k: usize,
    /// Neighborhood size.
    pub j: usize,
    pub n_views: usize,
    /// Threads drawn per view.
    pub n_draws: usize,
    pub max_lag: usize,
    /// Levina-Bickel neighbor range.
    pub lb_k: (usize, usize),
    /// Fixes the view dimension instead of estimating it.
    pub embedding_dim: Option<usize>,
    /// Temporal exclusion window around the query anchor; `None` uses `k`.
    pub exclusion: Option<usize>,
    pub residual_mode: ResidualMode,
    pub reweight_mode: ReweightMode,
    /// Half-width of the density window, standardized units.
    pub h_bw: f64,
    /// Lower bound applied to density estimates; `None` disables it.
    pub density_floor: Option<f64>,
    pub seed: u64,
}

impl Default for TapestryConfig {
    fn default() -> Self {
        TapestryConfig {
            k: 4,
            j: 20,
            n_views: 32,
            n_draws: 8,
            max_lag: 3,
            lb_k: (5, 10),
            embedding_dim: None,
            exclusion: None,
            residual_mode: ResidualMode::CommonIndex,
            reweight_mode: ReweightMode::Target,
            h_bw: 0.25,
            density_floor: Some(1e-6),
            seed: 0,
        }
    }
}

/// One pseudo future history. `predictions[slot][h - 1]` is the prediction
/// of the tapestry's `predicted_vars[slot]` at horizon `h`; slot 0 is the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub view_id: usize,
    pub draw_id: usize,
    pub predictions: Vec<Vec<f64>>,
    pub weight: f64,
}

impl Thread {
    pub fn target_at(&self, horizon: usize) -> f64 {
        self.predictions[0][horizon - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub horizon: usize,
    /// One value per predicted variable, target first.
    pub values: Vec<f64>,
}

/// All threads for one forecast anchor, with the observations applied so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tapestry {
    pub anchor: SeasonStamp,
    pub k: usize,
    pub target: usize,
    pub target_name: String,
    /// Variables carried by each thread, target first.
    pub predicted_vars: Vec<usize>,
    pub coding: String,
    pub embedding_dim: usize,
    pub views: Vec<View>,
    pub threads: Vec<Thread>,
    pub observation_log: Vec<Observation>,
    pub config: TapestryConfig,
    /// Climatological terciles of the target per season (Winter..Fall).
    pub category_bounds: Option<Vec<CategoryBounds>>,
    /// Times reweighting collapsed every weight to zero and was reset.
    pub degeneracy_events: usize,
}

impl Tapestry {
    pub fn len(&self) -> usize {
        self.threads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threads.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.threads.iter().map(|t| t.weight).collect()
    }

    pub fn target_predictions(&self, horizon: usize) -> Vec<f64> {
        self.threads.iter().map(|t| t.target_at(horizon)).collect()
    }

    /// Season predicted at `horizon`.
    pub fn season_at(&self, horizon: usize) -> Season {
        self.anchor.offset(horizon as i64).season
    }

    pub fn bounds_at(&self, horizon: usize) -> Option<CategoryBounds> {
        self.category_bounds.as_ref().map(|b| b[self.season_at(horizon).index()])
    }

    pub fn last_observed(&self) -> usize {
        self.observation_log.last().map_or(0, |o| o.horizon)
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon == 0 || horizon > self.k {
            return Err(Error::InvalidArgument(format!("horizon {horizon} outside 1..={}", self.k)));
        }
        Ok(())
    }

    /// Reweights by the target's residual at `horizon`.
    pub fn reweight(&self, horizon: usize, observed: f64) -> Result<Tapestry> {
        if self.config.reweight_mode == ReweightMode::Multivariate {
            return Err(Error::InvalidArgument(
                "multivariate tapestry needs every coded variable; use reweight_multi".into(),
            ));
        }
        self.reweight_multi(horizon, &[observed])
    }

    /// Multiplies each thread weight by `exp(-r^2 / 2)` for every residual
    /// `r = observed - prediction` supplied, then renormalizes. `observed`
    /// has one value per predicted variable, target first.
    pub fn reweight_multi(&self, horizon: usize, observed: &[f64]) -> Result<Tapestry> {
        self.check_horizon(horizon)?;
        let last = self.last_observed();
        if horizon <= last {
            return Err(Error::AlreadyObserved { horizon });
        }
        if horizon != last + 1 {
            return Err(Error::InvalidArgument(format!(
                "observations arrive in order; next horizon is {}, got {horizon}",
                last + 1
            )));
        }
        if observed.len() != self.predicted_vars.len() {
            return Err(Error::DimensionMismatch { expected: self.predicted_vars.len(), got: observed.len() });
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observation must be finite".into()));
        }

        let mut next = self.clone();
        let mut total = 0.0;
        for th in &mut next.threads {
            let mut mult = 1.0;
            for (slot, obs) in observed.iter().enumerate() {
                let r = obs - th.predictions[slot][horizon - 1];
                mult *= (-0.5 * r * r).exp();
            }
            th.weight *= mult;
            total += th.weight;
        }
        if total > 0.0 && total.is_finite() {
            for th in &mut next.threads {
                th.weight /= total;
            }
        } else {
            log::warn!(
                "tapestry {}: every thread weight underflowed at horizon {horizon}; resetting to uniform",
                self.anchor
            );
            let w = 1.0 / next.threads.len() as f64;
            next.threads.iter_mut().for_each(|t| t.weight = w);
            next.degeneracy_events += 1;
        }
        next.observation_log.push(Observation { horizon, values: observed.to_vec() });
        Ok(next)
    }

    /// Density at `y` for the target at `horizon`, using the configured
    /// window and floor.
    pub fn density(&self, horizon: usize, y: f64) -> Result<f64> {
        predictive_density(self, horizon, y, self.config.h_bw, self.config.density_floor)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Tapestry> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Slope of the weighted empirical distribution function over
/// `[y - h_bw, y + h_bw]`: `sum_i w_i 1{|pred_i - y| <= h_bw} / (2 h_bw)`.
pub fn predictive_density(t: &Tapestry, horizon: usize, y: f64, h_bw: f64, floor: Option<f64>) -> Result<f64> {
    t.check_horizon(horizon)?;
    if !(h_bw > 0.0) {
        return Err(Error::InvalidArgument(format!("window half-width must be positive, got {h_bw}")));
    }
    let mass: f64 = t.threads.iter().filter(|th| (th.target_at(horizon) - y).abs() <= h_bw).map(|th| th.weight).sum();
    let f = mass / (2.0 * h_bw);
    Ok(match floor {
        Some(fl) => f.max(fl),
        None => f,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Tapestry with one predicted variable and the given per-thread horizon rows.
    pub(crate) fn toy(preds: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Tapestry {
        let n = preds.len();
        let k = preds[0].len();
        let weights = weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        Tapestry {
            anchor: SeasonStamp::new(2000, Season::Spring),
            k,
            target: 0,
            target_name: "x".into(),
            predicted_vars: vec![0],
            coding: "1".into(),
            embedding_dim: 2,
            views: vec![],
            threads: preds
                .into_iter()
                .zip(weights)
                .enumerate()
                .map(|(i, (p, w))| Thread { view_id: 0, draw_id: i, predictions: vec![p], weight: w })
                .collect(),
            observation_log: vec![],
            config: TapestryConfig { k, ..Default::default() },
            category_bounds: None,
            degeneracy_events: 0,
        }
    }

    #[test]
    fn exact_predictions_keep_weights() {
        let t = toy(vec![vec![1.0, 0.0]; 4], Some(vec![0.1, 0.2, 0.3, 0.4]));
        let r = t.reweight(1, 1.0).unwrap();
        for (a, b) in r.weights().iter().zip(t.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(r.observation_log, vec![Observation { horizon: 1, values: vec![1.0] }]);
    }

    #[test]
    fn weight_ratio_is_e_squared() {
        let t = toy(vec![vec![0.0], vec![2.0]], None);
        let r = t.reweight(1, 0.0).unwrap();
        let w = r.weights();
        assert!((w[0] / w[1] - 2f64.exp()).abs() < 1e-12);
        assert!((w[0] - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn thousand_threads_match_loop() {
        let preds: Vec<Vec<f64>> = (0..1000).map(|i| vec![((i * 37) % 101) as f64 / 25.0 - 2.0]).collect();
        let weights: Vec<f64> = (0..1000).map(|i| 1.0 + (i % 7) as f64).collect();
        let sum: f64 = weights.iter().sum();
        let t = toy(preds.clone(), Some(weights.iter().map(|w| w / sum).collect()));
        let r = t.reweight(1, 0.3).unwrap();

        let mut expect = vec![0.0; 1000];
        let mut total = 0.0;
        let mut i = 0;
        while i < 1000 {
            let d = 0.3 - preds[i][0];
            expect[i] = weights[i] / sum * (-(d * d) / 2.0).exp();
            total += expect[i];
            i += 1;
        }
        for (a, e) in r.weights().iter().zip(&expect) {
            assert!((a - e / total).abs() < 1e-15);
        }
    }

    #[test]
    fn observation_order_is_enforced() {
        let t = toy(vec![vec![0.0, 0.0, 0.0]], None);
        assert!(matches!(t.reweight(2, 0.0), Err(Error::InvalidArgument(_))));
        let r = t.reweight(1, 0.0).unwrap();
        assert!(matches!(r.reweight(1, 0.0), Err(Error::AlreadyObserved { horizon: 1 })));
        assert!(matches!(r.reweight(4, 0.0), Err(Error::InvalidArgument(_))));
        assert!(r.reweight(2, 0.0).is_ok());
    }

    #[test]
    fn underflow_resets_to_uniform() {
        let t = toy(vec![vec![0.0], vec![1.0]], Some(vec![0.9, 0.1]));
        let r = t.reweight(1, 1e3).unwrap();
        assert_eq!(r.weights(), vec![0.5, 0.5]);
        assert_eq!(r.degeneracy_events, 1);
    }

    #[test]
    fn density_closed_forms() {
        let t = toy(vec![vec![0.7]; 5], None);
        let f = predictive_density(&t, 1, 0.7, 0.25, Some(1e-6)).unwrap();
        assert!((f - 2.0).abs() < 1e-12);
        assert_eq!(predictive_density(&t, 1, 2.0, 0.25, Some(1e-6)).unwrap(), 1e-6);
        assert_eq!(predictive_density(&t, 1, 2.0, 0.25, None).unwrap(), 0.0);
        assert!(predictive_density(&t, 1, 0.0, 0.0, None).is_err());
        assert!(predictive_density(&t, 2, 0.0, 0.1, None).is_err());
    }

    #[test]
    fn density_mixed_weights_by_hand() {
        let preds = [-0.5, -0.1, 0.0, 0.15, 0.2, 0.31, 1.0];
        let w = [0.05, 0.1, 0.2, 0.15, 0.25, 0.2, 0.05];
        let t = toy(preds.iter().map(|&p| vec![p]).collect(), Some(w.to_vec()));
        // window [-0.2, 0.3] holds -0.1, 0.0, 0.15, 0.2
        let f = predictive_density(&t, 1, 0.05, 0.25, None).unwrap();
        assert!((f - (0.1 + 0.2 + 0.15 + 0.25) / 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reweight_keeps_simplex(
            preds in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..50),
            obs in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let mut t = toy(preds, None);
            for (h, o) in obs.iter().enumerate() {
                t = t.reweight(h + 1, *o).unwrap();
                let w = t.weights();
                prop_assert!(w.iter().all(|&x| x >= 0.0));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn closer_threads_gain_relative_weight(
            preds in prop::collection::vec(-3.0f64..3.0, 2..30),
            obs in -3.0f64..3.0,
        ) {
            let t = toy(preds.iter().map(|&p| vec![p]).collect(), None);
            let r = t.reweight(1, obs).unwrap();
            for a in 0..preds.len() {
                for b in 0..preds.len() {
                    if (preds[a] - obs).abs() < (preds[b] - obs).abs() {
                        prop_assert!(r.threads[a].weight / t.threads[a].weight >= r.threads[b].weight / t.threads[b].weight);
                    }
                }
            }
        }
    }
}
