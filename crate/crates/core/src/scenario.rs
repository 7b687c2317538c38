//! Three-category what-if conditioning of a tapestry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{Season, SeasonalSeries};
use crate::tapestry::Tapestry;
use crate::{Error, Result};

/// Climatological terciles of one variable in one season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Sample quantile with linear interpolation between order statistics
/// (`(n - 1) p` positioning).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl CategoryBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::Degenerate(format!("tercile bounds {lower} and {upper} do not separate")));
        }
        Ok(CategoryBounds { lower, upper })
    }

    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InsufficientData(format!("terciles need 3 values, got {}", values.len())));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self::new(quantile(&v, 1.0 / 3.0), quantile(&v, 2.0 / 3.0))
    }

    /// Bounds of `var` for each season, from the series' training seasons.
    pub fn per_season(series: &SeasonalSeries, var: usize) -> Result<Vec<CategoryBounds>> {
        Season::ALL.iter().map(|&s| Self::from_sample(&series.training_values(var, s))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Low,
    Medium,
    High,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Low, Category::Medium, Category::High];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Low => "Low",
            Category::Medium => "Medium",
            Category::High => "High",
        })
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" | "l" => Ok(Category::Low),
            "medium" | "m" => Ok(Category::Medium),
            "high" | "h" => Ok(Category::High),
            _ => Err(Error::InvalidArgument(format!("unknown category {s:?}"))),
        }
    }
}

/// Values on a bound fall in Medium.
pub fn categorize(value: f64, bounds: CategoryBounds) -> Category {
    if value < bounds.lower {
        Category::Low
    } else if value > bounds.upper {
        Category::High
    } else {
        Category::Medium
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub horizon: usize,
    pub category: Category,
}

pub const DEFAULT_ALPHA: f64 = 0.1;

/// Conditioned weights over a shared tapestry.
#[derive(Debug, Clone)]
pub struct ScenarioState<'a> {
    base: &'a Tapestry,
    assignments: Vec<Assignment>,
    alpha: f64,
    weights: Vec<f64>,
}

impl<'a> ScenarioState<'a> {
    pub fn new(base: &'a Tapestry, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite and non-negative, got {alpha}")));
        }
        if base.category_bounds.is_none() {
            return Err(Error::InvalidArgument("tapestry has no category bounds".into()));
        }
        Ok(ScenarioState { base, assignments: vec![], alpha, weights: base.weights() })
    }

    pub fn base(&self) -> &Tapestry {
        self.base
    }

    /// Assignments sorted by horizon.
    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn bounds(&self, horizon: usize) -> CategoryBounds {
        self.base.bounds_at(horizon).expect("checked in new")
    }

    pub fn condition_on_category(&self, horizon: usize, cat: Category) -> Result<ScenarioState<'a>> {
        self.base.check_horizon(horizon)?;
        if horizon <= self.base.last_observed() {
            return Err(Error::AlreadyObserved { horizon });
        }
        if self.assignments.iter().any(|a| a.horizon == horizon) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} already has a category")));
        }
        let bounds = self.bounds(horizon);
        let denom = 1.0 + 3.0 * self.alpha;
        let mut weights: Vec<f64> = self
            .base
            .threads
            .iter()
            .zip(&self.weights)
            .map(|(th, &w)| {
                let hit = if categorize(th.target_at(horizon), bounds) == cat { 1.0 } else { 0.0 };
                w * (hit + self.alpha) / denom
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate(format!(
                "no thread is {cat} at horizon {horizon}; use alpha > 0 to smooth"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let mut assignments = self.assignments.clone();
        assignments.push(Assignment { horizon, category: cat });
        assignments.sort_by_key(|a| a.horizon);
        Ok(ScenarioState { base: self.base, assignments, alpha: self.alpha, weights })
    }

    pub fn apply(&self, assignments: &[Assignment]) -> Result<ScenarioState<'a>> {
        assignments.iter().try_fold(self.clone(), |st, a| st.condition_on_category(a.horizon, a.category))
    }

    /// Weighted histogram of the target at `horizon` and the category
    /// probabilities under the conditioned weights.
    pub fn conditional_summary(&self, horizon: usize, spec: &HistogramSpec) -> Result<Summary> {
        self.base.check_horizon(horizon)?;
        if let Some(a) = self.assignments.iter().find(|a| a.horizon >= horizon) {
            return Err(Error::InvalidArgument(format!(
                "summary horizon {horizon} must follow every assigned horizon (found {})",
                a.horizon
            )));
        }
        let preds = self.base.target_predictions(horizon);
        let histogram = weighted_histogram(&preds, &self.weights, spec, self.base.config.h_bw)?;
        let bounds = self.bounds(horizon);
        let mut p = [0.0; 3];
        for (&y, &w) in preds.iter().zip(&self.weights) {
            p[categorize(y, bounds) as usize] += w;
        }
        let total: f64 = p.iter().sum();
        Ok(Summary {
            horizon,
            season: self.base.season_at(horizon),
            bounds,
            histogram,
            probabilities: CategoryProbabilities { low: p[0] / total, medium: p[1] / total, high: p[2] / total },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Defaults to the base predictions' range widened by the density window.
    pub range: Option<(f64, f64)>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec { bins: 20, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// Weight per bin; the last bin is closed on the right.
    pub mass: Vec<f64>,
    pub density: Vec<f64>,
    /// Weight falling outside the range.
    pub outside: f64,
}

pub fn weighted_histogram(values: &[f64], weights: &[f64], spec: &HistogramSpec, pad: f64) -> Result<Histogram> {
    if spec.bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::DimensionMismatch { expected: values.len(), got: weights.len() });
    }
    let (lo, hi) = match spec.range {
        Some(r) => r,
        None => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min - pad, max + pad)
        }
    };
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("bad histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / spec.bins as f64;
    let edges: Vec<f64> = (0..=spec.bins).map(|i| if i == spec.bins { hi } else { lo + i as f64 * width }).collect();
    let mut mass = vec![0.0; spec.bins];
    let mut outside = 0.0;
    for (&y, &w) in values.iter().zip(weights) {
        if y < lo || y > hi {
            outside += w;
            continue;
        }
        let b = (((y - lo) / width).floor() as usize).min(spec.bins - 1);
        mass[b] += w;
    }
    let density = mass.iter().map(|m| m / width).collect();
    Ok(Histogram { edges, mass, density, outside })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbabilities {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: usize,
    pub season: Season,
    pub bounds: CategoryBounds,
    pub histogram: Histogram,
    pub probabilities: CategoryProbabilities,
}

/// Applies `assignments` and summarizes every later unobserved horizon.
pub fn evaluate_scenario(
    base: &Tapestry,
    assignments: &[Assignment],
    alpha: f64,
    spec: &HistogramSpec,
) -> Result<Vec<Summary>> {
    let st = ScenarioState::new(base, alpha)?.apply(assignments)?;
    let first = assignments.iter().map(|a| a.horizon).max().unwrap_or(0).max(base.last_observed()) + 1;
    (first..=base.k).map(|h| st.conditional_summary(h, spec)).collect()
}
