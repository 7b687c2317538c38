//! `tapestry`: ingest monthly data, build and evaluate tapestries, and run
//! the model comparison and learning tests.

use std::fs;
use std::io::{self, Read, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tapestry_core::dataio::{
    parse_agg_spec, parse_subset_code, read_monthly_csv, standardize_and_anomalize, to_seasonal, Season,
    SeasonMap, SeasonStamp, SeasonalSeries,
};
use tapestry_core::inference::{
    compare_tables, fdr_select, learning_tests, read_pvalues_csv, write_comparisons_csv, write_learning_csv,
};
use tapestry_core::synth::{generate, SynthConfig, System};
use tapestry_core::tapestry::{
    evaluate, read_tables_csv, write_tables_csv, EvaluationPlan, ResidualMode, ReweightMode, TapestryBuilder,
    TapestryConfig,
};
use tapestry_core::Error;

#[derive(Parser)]
#[command(name = "tapestry", version, about = "Learning tapestries for seasonal forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate a monthly CSV to standardized seasonal anomalies (JSON).
    Ingest {
        /// Monthly CSV with `year,month,<vars...>`; `-` reads stdin.
        #[arg(long)]
        input: String,
        /// `name=MEAN|SUM` pairs, comma separated, or `@file`.
        #[arg(long)]
        agg: String,
        /// Last season-year of the training period.
        #[arg(long)]
        train_through: i32,
        /// First training season-year; defaults to the first year in the data.
        #[arg(long)]
        train_from: Option<i32>,
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Build one tapestry (JSON).
    Tapestry {
        #[command(flatten)]
        model: ModelArgs,
        /// Forecast anchor, `year:season`.
        #[arg(long)]
        anchor: SeasonStamp,
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Likelihood tables over test years, one per origin season (CSV).
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        /// Inclusive range such as `2001-2009`.
        #[arg(long, value_parser = parse_years)]
        test_years: RangeInclusive<i32>,
        /// Origin seasons; defaults to all four.
        #[arg(long, value_delimiter = ',')]
        origins: Vec<Season>,
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Cell-by-cell paired tests between two models' tables (CSV).
    Compare {
        #[arg(long)]
        table_a: String,
        #[arg(long)]
        table_b: String,
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Tests of each reweighted stage against stage 0 (CSV).
    Learning {
        #[arg(long)]
        table: String,
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// False discovery rate selection over a CSV with a `p` column.
    Fdr {
        #[arg(long)]
        pvalues: String,
        #[arg(long, default_value_t = 0.1)]
        q: f64,
        /// Apply the harmonic correction for dependent tests.
        #[arg(long)]
        dependent: bool,
        #[arg(long, default_value = "-")]
        output: String,
        /// Where to write the plot-data JSON.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Synthetic benchmark as a monthly CSV.
    Synth {
        #[arg(long, value_enum, default_value_t = SystemArg::Lorenz63)]
        system: SystemArg,
        #[arg(long, default_value_t = 400)]
        seasons: usize,
        /// Measurement noise sd as a fraction of each variable's sd.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Sd of the state kicks between seasons.
        #[arg(long, default_value_t = 0.0)]
        kick: f64,
        #[arg(long, default_value_t = 0.6)]
        phi: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Year of the first (winter) season.
        #[arg(long, default_value_t = 1000)]
        start_year: i32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "-")]
        output: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Lorenz63,
    Ar,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResidualArg {
    Common,
    PerGap,
}

#[derive(Args)]
struct ModelArgs {
    /// Seasonal series JSON from `ingest`.
    #[arg(long)]
    series: String,
    /// Target variable, by name or 1-based column.
    #[arg(long)]
    target: String,
    /// Subset code of the columns to embed, e.g. `123`.
    #[arg(long)]
    coding: String,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighborhood size.
    #[arg(long, default_value_t = 20)]
    j: usize,
    #[arg(long, default_value_t = 32)]
    views: usize,
    /// Threads per view.
    #[arg(long, default_value_t = 8)]
    draws: usize,
    #[arg(long, default_value_t = 3)]
    max_lag: usize,
    /// Fix the view dimension instead of estimating it.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    exclusion: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    h_bw: f64,
    /// Density floor; 0 disables it.
    #[arg(long, default_value_t = 1e-6)]
    floor: f64,
    #[arg(long, value_enum, default_value_t = ResidualArg::Common)]
    residuals: ResidualArg,
    /// Reweight on every coded variable instead of the target alone.
    #[arg(long)]
    multivariate: bool,
}

impl ModelArgs {
    fn config(&self) -> TapestryConfig {
        TapestryConfig {
            k: self.k,
            j: self.j,
            n_views: self.views,
            n_draws: self.draws,
            max_lag: self.max_lag,
            embedding_dim: self.dim,
            exclusion: self.exclusion,
            residual_mode: match self.residuals {
                ResidualArg::Common => ResidualMode::CommonIndex,
                ResidualArg::PerGap => ResidualMode::PerGap,
            },
            reweight_mode: if self.multivariate { ReweightMode::Multivariate } else { ReweightMode::Target },
            h_bw: self.h_bw,
            density_floor: (self.floor > 0.0).then_some(self.floor),
            seed: self.seed,
            ..TapestryConfig::default()
        }
    }
}

fn parse_years(s: &str) -> Result<RangeInclusive<i32>, String> {
    let (a, b) = s.split_once('-').or_else(|| s.split_once("..")).unwrap_or((s, s));
    let a: i32 = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
    let b: i32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad year {b:?}"))?;
    if a > b {
        return Err(format!("empty year range {s}"));
    }
    Ok(a..=b)
}

enum CliError {
    Core(Error),
    Io(String, io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_degenerate() => 3,
            _ => 2,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Core(e) => (e.kind(), e.to_string()),
            CliError::Io(path, e) => ("io", format!("{path}: {e}")),
        };
        serde_json::json!({ "error": kind, "exit": self.exit_code(), "message": msg }).to_string()
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_input(path: &str) -> CliResult<String> {
    if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| CliError::Io("<stdin>".into(), e))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError::Io(path.into(), e))
    }
}

fn write_output(path: &str, bytes: &[u8]) -> CliResult<()> {
    if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Io("<stdout>".into(), e))
    } else {
        fs::write(path, bytes).map_err(|e| CliError::Io(path.into(), e))
    }
}

fn load_series(path: &str) -> CliResult<SeasonalSeries> {
    Ok(SeasonalSeries::from_json(&read_input(path)?)?)
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Ingest { input, agg, train_through, train_from, output } => {
            let spec_text = match agg.strip_prefix('@') {
                Some(file) => read_input(file)?,
                None => agg,
            };
            let schema = parse_agg_spec(&spec_text)?;
            let origin = if input == "-" { "<stdin>" } else { input.as_str() };
            let monthly = read_monthly_csv(read_input(&input)?.as_bytes(), origin, &schema)?;
            let seasonal = to_seasonal(&monthly, &SeasonMap::default())?;
            let from = train_from.unwrap_or(seasonal.start.year);
            let series = standardize_and_anomalize(&seasonal, from..=train_through)?;
            write_output(&output, series.to_json()?.as_bytes())
        }
        Command::Tapestry { model, anchor, output } => {
            let series = load_series(&model.series)?;
            let target = series.resolve_var(&model.target)?;
            let coding = parse_subset_code(&model.coding, series.n_vars())?;
            let t = TapestryBuilder::new(&series, &coding, target, model.config())?.build(anchor)?;
            write_output(&output, t.to_json()?.as_bytes())
        }
        Command::Evaluate { model, test_years, origins, output } => {
            let series = load_series(&model.series)?;
            let target = series.resolve_var(&model.target)?;
            let coding = parse_subset_code(&model.coding, series.n_vars())?;
            let origins = if origins.is_empty() { Season::ALL.to_vec() } else { origins };
            let plan = EvaluationPlan { test_years, origins };
            let tables = evaluate(&series, &coding, target, model.config(), &plan)?;
            for t in &tables {
                for f in &t.flags {
                    log::warn!("{f}");
                }
            }
            let mut buf = vec![];
            write_tables_csv(&tables, &mut buf)?;
            write_output(&output, &buf)
        }
        Command::Compare { table_a, table_b, output } => {
            let a = read_tables_csv(read_input(&table_a)?.as_bytes(), &table_a)?;
            let b = read_tables_csv(read_input(&table_b)?.as_bytes(), &table_b)?;
            let mut buf = vec![];
            write_comparisons_csv(&compare_tables(&a, &b)?, &mut buf)?;
            write_output(&output, &buf)
        }
        Command::Learning { table, output } => {
            let tables = read_tables_csv(read_input(&table)?.as_bytes(), &table)?;
            let mut tests = vec![];
            for t in &tables {
                tests.extend(learning_tests(t)?);
            }
            let mut buf = vec![];
            write_learning_csv(&tests, &mut buf)?;
            write_output(&output, &buf)
        }
        Command::Fdr { pvalues, q, dependent, output, plot } => {
            let ps = read_pvalues_csv(read_input(&pvalues)?.as_bytes(), &pvalues)?;
            let report = fdr_select(&ps, q, dependent)?;
            if let Some(path) = plot {
                fs::write(&path, report.plot_json()?).map_err(|e| CliError::Io(path.display().to_string(), e))?;
            }
            let mut buf = vec![];
            report.write_csv(&mut buf)?;
            write_output(&output, &buf)
        }
        Command::Synth { system, seasons, noise, kick, phi, sigma, start_year, seed, output } => {
            let cfg = SynthConfig {
                system: match system {
                    SystemArg::Lorenz63 => System::Lorenz63,
                    SystemArg::Ar => System::NoisyAr { phi, sigma },
                },
                noise_frac: noise,
                kick_sd: kick,
                start: SeasonStamp::new(start_year, Season::Winter),
                seed,
                ..SynthConfig::default()
            };
            let run = generate(&cfg, seasons)?;
            let mut buf = vec![];
            run.monthly().write_csv(&mut buf)?;
            write_output(&output, &buf)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
