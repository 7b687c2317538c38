//! Synthetic seasonal benchmarks: a kicked Lorenz-63 system with measurement
//! noise and a linear AR(1) control with a closed-form predictive density.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{
    mean_sd, Aggregation, MonthlyRow, MonthlyTable, Season, SeasonStamp, SeasonalSeries, VariableSpec,
};
use crate::{rng, Error, Result};

pub const SIGMA: f64 = 10.0;
pub const RHO: f64 = 28.0;
pub const BETA: f64 = 8.0 / 3.0;

const DIVERGENCE: f64 = 1e6;
const KEY: u64 = 0x5EED_0063;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Lorenz63,
    /// `x' = phi x + sigma e`, one variable.
    NoisyAr { phi: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub system: System,
    /// Integration step.
    pub dt: f64,
    /// Integration steps between recorded seasons.
    pub steps_per_season: usize,
    /// Measurement noise sd as a fraction of each variable's latent sd.
    pub noise_frac: f64,
    /// Sd of the Gaussian kick added to the state between seasons.
    pub kick_sd: f64,
    /// Seasons discarded before recording.
    pub burn_in: usize,
    pub start: SeasonStamp,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            system: System::Lorenz63,
            dt: 0.01,
            steps_per_season: 25,
            noise_frac: 0.1,
            kick_sd: 0.0,
            burn_in: 40,
            start: SeasonStamp::new(1000, Season::Winter),
            seed: 0,
        }
    }
}

pub fn lorenz_rhs(s: [f64; 3]) -> [f64; 3] {
    [SIGMA * (s[1] - s[0]), s[0] * (RHO - s[2]) - s[1], s[0] * s[1] - BETA * s[2]]
}

pub fn rk4_step(s: [f64; 3], dt: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = lorenz_rhs(s);
    let k2 = lorenz_rhs(add(s, k1, dt / 2.0));
    let k3 = lorenz_rhs(add(s, k2, dt / 2.0));
    let k4 = lorenz_rhs(add(s, k3, dt));
    std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// States after each of `steps` RK4 steps.
pub fn lorenz_trajectory(init: [f64; 3], dt: f64, steps: usize) -> Result<Vec<[f64; 3]>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    let mut s = init;
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        s = rk4_step(s, dt);
        check_bounded(&s, i)?;
        out.push(s);
    }
    Ok(out)
}

fn check_bounded(s: &[f64], step: usize) -> Result<()> {
    if s.iter().any(|v| !(v.abs() <= DIVERGENCE)) {
        return Err(Error::Degenerate(format!("integration diverged at step {step}; reduce the step size")));
    }
    Ok(())
}

/// Latent and observed seasonal values, `[t][var]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub config: SynthConfig,
    pub variables: Vec<String>,
    pub latent: Vec<Vec<f64>>,
    pub observed: Vec<Vec<f64>>,
    /// Absolute measurement noise sd per variable.
    pub noise_sd: Vec<f64>,
}

pub fn generate(cfg: &SynthConfig, n_seasons: usize) -> Result<SynthRun> {
    if n_seasons < 50 {
        return Err(Error::InvalidArgument(format!("need at least 50 seasons, got {n_seasons}")));
    }
    if !(cfg.dt > 0.0) || cfg.steps_per_season == 0 {
        return Err(Error::InvalidArgument("step size and steps per season must be positive".into()));
    }
    if !(cfg.noise_frac >= 0.0) || !(cfg.kick_sd >= 0.0) {
        return Err(Error::InvalidArgument("noise sds must be non-negative".into()));
    }
    let mut init_rng = rng::stream(cfg.seed, KEY, 0);
    let mut kick_rng = rng::stream(cfg.seed, KEY, 1);
    let mut noise_rng = rng::stream(cfg.seed, KEY, 2);

    let (variables, latent) = match cfg.system {
        System::Lorenz63 => {
            let mut s: [f64; 3] = std::array::from_fn(|_| 1.0 + gauss(&mut init_rng));
            let mut latent = Vec::with_capacity(n_seasons);
            for season in 0..cfg.burn_in + n_seasons {
                for i in 0..cfg.steps_per_season {
                    s = rk4_step(s, cfg.dt);
                    check_bounded(&s, season * cfg.steps_per_season + i)?;
                }
                if season >= cfg.burn_in {
                    latent.push(s.to_vec());
                }
                if cfg.kick_sd > 0.0 {
                    for v in &mut s {
                        *v += cfg.kick_sd * gauss(&mut kick_rng);
                    }
                }
            }
            (vec!["x".to_string(), "y".into(), "z".into()], latent)
        }
        System::NoisyAr { phi, sigma } => {
            if !(phi.abs() < 1.0) || !(sigma > 0.0) {
                return Err(Error::InvalidArgument(format!("AR(1) needs |phi| < 1 and sigma > 0, got {phi}, {sigma}")));
            }
            let innov = Normal::new(0.0, sigma).expect("sigma > 0");
            let mut x = innov.sample(&mut init_rng) / (1.0 - phi * phi).sqrt();
            let mut latent = Vec::with_capacity(n_seasons);
            for season in 0..cfg.burn_in + n_seasons {
                x = phi * x + innov.sample(&mut kick_rng);
                if season >= cfg.burn_in {
                    latent.push(vec![x]);
                }
            }
            (vec!["x".to_string()], latent)
        }
    };

    let noise_sd: Vec<f64> = (0..variables.len())
        .map(|v| {
            let col: Vec<f64> = latent.iter().map(|r| r[v]).collect();
            cfg.noise_frac * mean_sd(&col).1
        })
        .collect();
    let observed = latent
        .iter()
        .map(|row| {
            row.iter()
                .zip(&noise_sd)
                .map(|(x, &sd)| x + sd * gauss(&mut noise_rng))
                .collect()
        })
        .collect();
    Ok(SynthRun { config: cfg.clone(), variables, latent, observed, noise_sd })
}

fn gauss<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn months_of(stamp: SeasonStamp) -> [(i32, u8); 3] {
    let y = stamp.year;
    match stamp.season {
        Season::Winter => [(y - 1, 12), (y, 1), (y, 2)],
        Season::Spring => [(y, 3), (y, 4), (y, 5)],
        Season::Summer => [(y, 6), (y, 7), (y, 8)],
        Season::Fall => [(y, 9), (y, 10), (y, 11)],
    }
}

impl SynthRun {
    fn specs(&self) -> Vec<VariableSpec> {
        self.variables.iter().map(|n| VariableSpec { name: n.clone(), agg: Aggregation::Mean }).collect()
    }

    pub fn observed_series(&self) -> Result<SeasonalSeries> {
        SeasonalSeries::new(self.specs(), self.config.start, self.observed.clone())
    }

    pub fn latent_series(&self) -> Result<SeasonalSeries> {
        SeasonalSeries::new(self.specs(), self.config.start, self.latent.clone())
    }

    /// Monthly table whose seasonal means reproduce the observed series:
    /// each season's value is repeated in its three months.
    pub fn monthly(&self) -> MonthlyTable {
        let mut rows = Vec::with_capacity(3 * self.observed.len());
        for (t, values) in self.observed.iter().enumerate() {
            for (year, month) in months_of(self.config.start.offset(t as i64)) {
                rows.push(MonthlyRow { year, month, values: values.clone() });
            }
        }
        MonthlyTable { variables: self.specs(), rows }
    }
}
