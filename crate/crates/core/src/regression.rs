//! Local linear models for each forecast gap: lasso-modified LARS paths,
//! Mallows Cp step selection and residual resampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::SeasonalSeries;
use crate::embedding::EmbeddedDataset;
use crate::neighbors::NeighborSet;
use crate::{Error, Result};

const GAMMA_EPS: f64 = 1e-12;

/// One point on the path. Coefficients are on the original column scale and
/// are nonzero only on `active`. `coef`, `intercept` and `sse` describe the
/// shrunken fit at the knot; the `ols_` fields are the least-squares refit on
/// the same active set, which Cp selection scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsStep {
    pub active: Vec<usize>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub sse: f64,
    pub ols_coef: Vec<f64>,
    pub ols_intercept: f64,
    pub ols_sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarsPath {
    pub steps: Vec<LarsStep>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl LarsPath {
    /// Variables in the order they first joined the active set.
    pub fn entry_order(&self) -> Vec<usize> {
        let mut order = Vec::new();
        for step in &self.steps {
            for &j in &step.active {
                if !order.contains(&j) {
                    order.push(j);
                }
            }
        }
        order
    }

    pub fn last(&self) -> &LarsStep {
        self.steps.last().expect("path always has the intercept-only step")
    }
}

/// Least-angle regression with the lasso modification (variables leave the
/// active set when their coefficient crosses zero).
///
/// `x` is row-major, `n_rows x n_cols`. Columns are centered and scaled to
/// unit norm internally and `y` is centered, so every step carries an
/// intercept. The path runs from the intercept-only model until the active
/// set reaches `min(n_rows - 1, usable columns)` or the design becomes rank
/// deficient, whichever comes first. Constant `y` yields the intercept-only
/// path.
pub fn lars_path(x: &[Vec<f64>], y: &[f64]) -> Result<LarsPath> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("lars needs at least 2 rows, got {n}")));
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let p = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: r.len() });
    }

    let mut means = vec![0.0; p];
    let mut norms = vec![0.0; p];
    for j in 0..p {
        means[j] = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        norms[j] = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>().sqrt();
    }
    let usable: Vec<bool> = (0..p)
        .map(|j| {
            let scale = x.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(1e-300);
            norms[j] > 1e-10 * scale * (n as f64).sqrt()
        })
        .collect();
    let xs = DMatrix::from_fn(n, p, |i, j| if usable[j] { (x[i][j] - means[j]) / norms[j] } else { 0.0 });
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);

    let fit = |beta: &DVector<f64>, active: &[usize]| {
        let mut coef = vec![0.0; p];
        let mut intercept = y_mean;
        for &j in active {
            coef[j] = beta[j] / norms[j];
            intercept -= coef[j] * means[j];
        }
        let sse = x
            .iter()
            .zip(y)
            .map(|(row, yi)| {
                let pred = intercept + active.iter().map(|&j| coef[j] * row[j]).sum::<f64>();
                (yi - pred).powi(2)
            })
            .sum();
        (coef, intercept, sse)
    };
    let refit = |active: &[usize]| -> Option<DVector<f64>> {
        let k = active.len();
        let gram = DMatrix::from_fn(k, k, |a, b| xs.column(active[a]).dot(&xs.column(active[b])));
        let rhs = DVector::from_fn(k, |a, _| xs.column(active[a]).dot(&yc));
        let sol = gram.cholesky()?.solve(&rhs);
        let mut full = DVector::zeros(p);
        for (i, &j) in active.iter().enumerate() {
            full[j] = sol[i];
        }
        Some(full)
    };
    let to_step = |beta: &DVector<f64>, active: &[usize]| {
        let mut sorted = active.to_vec();
        sorted.sort_unstable();
        let (coef, intercept, sse) = fit(beta, &sorted);
        let (ols_coef, ols_intercept, ols_sse) = match refit(&sorted) {
            Some(b) => fit(&b, &sorted),
            None => (coef.clone(), intercept, sse),
        };
        LarsStep { active: sorted, coef, intercept, sse, ols_coef, ols_intercept, ols_sse }
    };

    let mut beta = DVector::zeros(p);
    let mut resid = yc.clone();
    let mut steps = vec![to_step(&beta, &[])];
    let max_active = (n - 1).min(usable.iter().filter(|&&u| u).count());
    let y_scale = yc.norm();

    let mut corr = xs.tr_mul(&resid);
    let c_max = |corr: &DVector<f64>| (0..p).filter(|&j| usable[j]).map(|j| corr[j].abs()).fold(0.0, f64::max);
    let mut big_c = c_max(&corr);
    if max_active == 0 || big_c <= 1e-12 * y_scale.max(1e-300) || y_scale == 0.0 {
        return Ok(LarsPath { steps, n_rows: n, n_cols: p });
    }

    let first = (0..p)
        .filter(|&j| usable[j])
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if corr[b].abs() >= corr[j].abs() => Some(b),
            _ => Some(j),
        })
        .expect("at least one usable column");
    let mut active = vec![first];

    // each iteration adds or drops one variable; the cap only guards against cycling
    for _ in 0..(8 * p + 8) {
        let k = active.len();
        let signs = DVector::from_fn(k, |i, _| corr[active[i]].signum());
        let gram = DMatrix::from_fn(k, k, |a, b| xs.column(active[a]).dot(&xs.column(active[b])));
        let Some(chol) = gram.clone().cholesky() else {
            log::debug!("lars: active set {active:?} is rank deficient, stopping");
            break;
        };
        let l = chol.l();
        let min_pivot = (0..k).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot < 1e-7 {
            log::debug!("lars: active set {active:?} is near rank deficient, stopping");
            break;
        }
        let z = chol.solve(&signs);
        let a_norm = 1.0 / signs.dot(&z).sqrt();
        let w = z * a_norm;
        let u = DMatrix::from_fn(n, 1, |i, _| active.iter().zip(w.iter()).map(|(&j, wj)| xs[(i, j)] * wj).sum());
        let u = u.column(0).into_owned();
        let a = xs.tr_mul(&u);

        let mut gamma = big_c / a_norm;
        let mut add = None;
        if k < max_active {
            for j in (0..p).filter(|j| usable[*j] && !active.contains(j)) {
                for cand in [(big_c - corr[j]) / (a_norm - a[j]), (big_c + corr[j]) / (a_norm + a[j])] {
                    if cand.is_finite() && cand > GAMMA_EPS && cand < gamma {
                        gamma = cand;
                        add = Some(j);
                    }
                }
            }
        }
        let mut drop = None;
        for (i, &j) in active.iter().enumerate() {
            if w[i] != 0.0 {
                let g = -beta[j] / w[i];
                if g > GAMMA_EPS && g < gamma {
                    gamma = g;
                    drop = Some(i);
                    add = None;
                }
            }
        }

        for (i, &j) in active.iter().enumerate() {
            beta[j] += gamma * w[i];
        }
        resid -= &u * gamma;
        if let Some(i) = drop {
            let j = active.remove(i);
            beta[j] = 0.0;
        }
        steps.push(to_step(&beta, &active));

        corr = xs.tr_mul(&resid);
        big_c = c_max(&corr);
        match (add, drop) {
            (Some(j), _) => active.push(j),
            (None, Some(_)) if !active.is_empty() => {}
            _ => break,
        }
        if big_c <= 1e-12 * y_scale {
            break;
        }
    }
    Ok(LarsPath { steps, n_rows: n, n_cols: p })
}

/// Mallows Cp for a step with `p` active variables plus the intercept.
pub fn mallows_cp(sse: f64, sigma2: f64, n: usize, p: usize) -> f64 {
    sse / sigma2 - n as f64 + 2.0 * (p as f64 + 1.0)
}

/// Index of the path step minimizing Cp of its least-squares refit; ties go
/// to the smaller model.
pub fn cp_select(path: &LarsPath, sigma2: f64) -> Result<usize> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
    }
    let mut best = (f64::INFINITY, usize::MAX, 0usize);
    for (i, step) in path.steps.iter().enumerate() {
        let cp = mallows_cp(step.ols_sse, sigma2, path.n_rows, step.active.len());
        let p = step.active.len();
        if cp < best.0 || (cp == best.0 && p < best.1) {
            best = (cp, p, i);
        }
    }
    Ok(best.2)
}

/// Residual variance of the largest model on the path, `SSE / (n - p - 1)`.
///
/// Exact fits are floored at a tiny fraction of the response variance so Cp
/// stays finite and picks the smallest exactly fitting model.
pub fn full_model_sigma2(path: &LarsPath, y: &[f64]) -> f64 {
    let fullest = path.steps.iter().rev().max_by_key(|s| s.active.len()).expect("nonempty path");
    let df = path.n_rows as f64 - fullest.active.len() as f64 - 1.0;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var_y = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let floor = 1e-20 * var_y.max(1e-300);
    if df <= 0.0 {
        return floor;
    }
    (fullest.ols_sse / df).max(floor)
}

/// Regression for one forecast gap fitted on a neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub gap: usize,
    pub target: usize,
    pub intercept: f64,
    /// One per view coordinate; zero outside the selected active set.
    pub coef: Vec<f64>,
    pub active: Vec<usize>,
    /// In-sample residuals of the selected model, one per neighbor.
    pub residual_pool: Vec<f64>,
    pub cp: f64,
}

impl GapModel {
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.coef.len() {
            return Err(Error::DimensionMismatch { expected: self.coef.len(), got: query.len() });
        }
        Ok(self.intercept + self.coef.iter().zip(query).map(|(b, q)| b * q).sum::<f64>())
    }

    /// Linear prediction plus one residual drawn uniformly from the pool.
    pub fn predict_with_residual<R: Rng + ?Sized>(&self, query: &[f64], rng: &mut R) -> Result<f64> {
        let idx = rng.random_range(0..self.residual_pool.len());
        self.predict_with_residual_index(query, idx)
    }

    /// Linear prediction plus the pool residual at `idx` (modulo pool size).
    pub fn predict_with_residual_index(&self, query: &[f64], idx: usize) -> Result<f64> {
        Ok(self.predict(query)? + self.residual_pool[idx % self.residual_pool.len()])
    }
}

/// Fits a Cp-selected lasso-LARS model predicting `target` `gap` seasons
/// after each neighbor's anchor, using the neighbor's delay vector as the
/// design row.
pub fn fit_gap_regression(
    series: &SeasonalSeries,
    embedded: &EmbeddedDataset,
    hood: &NeighborSet,
    target: usize,
    gap: usize,
) -> Result<GapModel> {
    let m = embedded.view.dim();
    let j = hood.indices.len();
    if j < m + 2 {
        return Err(Error::InsufficientData(format!(
            "{j} neighbors for a {m}-dimensional view; use j >= {}",
            m + 2
        )));
    }
    let limit = series.train_end().unwrap_or(series.len().saturating_sub(1));
    let mut x = Vec::with_capacity(j);
    let mut y = Vec::with_capacity(j);
    for &i in &hood.indices {
        let t = embedded.anchors[i] + gap;
        if t > limit {
            return Err(Error::InvalidArgument(format!(
                "neighbor anchored at {} has no training value {gap} seasons ahead",
                embedded.anchor_stamp(i)
            )));
        }
        x.push(embedded.points[i].clone());
        y.push(series.value(t, target));
    }
    fit_design(&x, &y, target, gap)
}

pub(crate) fn fit_design(x: &[Vec<f64>], y: &[f64], target: usize, gap: usize) -> Result<GapModel> {
    let path = lars_path(x, y)?;
    let sigma2 = full_model_sigma2(&path, y);
    let pick = cp_select(&path, sigma2)?;
    let step = &path.steps[pick];
    let residual_pool = x
        .iter()
        .zip(y)
        .map(|(row, yi)| yi - step.ols_intercept - row.iter().zip(&step.ols_coef).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(GapModel {
        gap,
        target,
        intercept: step.ols_intercept,
        coef: step.ols_coef.clone(),
        active: step.active.clone(),
        residual_pool,
        cp: mallows_cp(step.ols_sse, sigma2, path.n_rows, step.active.len()),
    })
}
