//! Monthly ingest, seasonal aggregation and standardized seasonal anomalies.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How monthly values collapse into a season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Aggregation {
    /// Temperatures and climate indices.
    Mean,
    /// Precipitation and sunspot counts.
    Sum,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MEAN" => Ok(Aggregation::Mean),
            "SUM" => Ok(Aggregation::Sum),
            other => Err(Error::InvalidArgument(format!(
                "aggregation must be MEAN or SUM, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub agg: Aggregation,
}

/// Parses `name=MEAN,other=SUM` (commas or newlines between entries).
/// Blank lines and `#` comments are ignored so the same syntax works as a sidecar file.
pub fn parse_agg_spec(spec: &str) -> Result<Vec<VariableSpec>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for entry in spec.split([',', '\n']) {
        let entry = entry.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        let (name, agg) = entry.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("aggregation entry {entry:?} is not name=MEAN|SUM"))
        })?;
        let name = name.trim().to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::InvalidArgument(format!("variable {name:?} listed twice")));
        }
        out.push(VariableSpec { name, agg: agg.parse()? });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty aggregation spec".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub year: i32,
    /// 1..=12
    pub month: u8,
    pub values: Vec<f64>,
}

/// Monthly multivariate table. Rows are strictly increasing in time with
/// every value present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTable {
    pub variables: Vec<VariableSpec>,
    pub rows: Vec<MonthlyRow>,
}

impl MonthlyTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["year".to_string(), "month".to_string()];
        header.extend(self.variables.iter().map(|v| v.name.clone()));
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv write: {e}"));
        wtr.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.year.to_string(), row.month.to_string()];
            rec.extend(row.values.iter().map(|v| format!("{v:.12}")));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Sidecar text for [`parse_agg_spec`].
    pub fn agg_spec(&self) -> String {
        self.variables
            .iter()
            .map(|v| format!("{}={}", v.name, if v.agg == Aggregation::Mean { "MEAN" } else { "SUM" }))
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn load_monthly_csv(path: impl AsRef<Path>, schema: &[VariableSpec]) -> Result<MonthlyTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_monthly_csv(file, &path.display().to_string(), schema)
}

/// Reader-based variant of [`load_monthly_csv`]; `origin` is used in error messages.
pub fn read_monthly_csv<R: Read>(reader: R, origin: &str, schema: &[VariableSpec]) -> Result<MonthlyTable> {
    let parse_err = |line: usize, msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "year" || &header[1] != "month" {
        return Err(parse_err(1, "header must start with year,month".into()));
    }
    // column position of each schema variable
    let mut columns = Vec::with_capacity(schema.len());
    for var in schema {
        let pos = header
            .iter()
            .position(|h| h == var.name)
            .ok_or_else(|| parse_err(1, format!("missing column {:?}", var.name)))?;
        columns.push(pos);
    }
    if header.len() != schema.len() + 2 {
        let extra: Vec<_> = header
            .iter()
            .skip(2)
            .filter(|h| !schema.iter().any(|v| v.name == *h))
            .collect();
        return Err(parse_err(1, format!("columns without an aggregation tag: {extra:?}")));
    }

    let mut rows = Vec::new();
    let mut seen: BTreeMap<(i32, u8), usize> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let year: i32 = rec[0].parse().map_err(|_| parse_err(line, format!("bad year {:?}", &rec[0])))?;
        let month: u8 = rec[1].parse().map_err(|_| parse_err(line, format!("bad month {:?}", &rec[1])))?;
        if !(1..=12).contains(&month) {
            return Err(parse_err(line, format!("month {month} outside 1..12")));
        }
        if let Some(prev) = seen.insert((year, month), line) {
            return Err(parse_err(line, format!("duplicate month ({year}, {month}), first seen on line {prev}")));
        }
        let mut values = Vec::with_capacity(schema.len());
        for (var, &col) in schema.iter().zip(&columns) {
            let raw = &rec[col];
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, format!("unparseable value {raw:?} for {:?}", var.name)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("missing value {raw:?} for {:?}", var.name)));
            }
            values.push(v);
        }
        rows.push(MonthlyRow { year, month, values });
    }
    rows.sort_by_key(|r| (r.year, r.month));
    Ok(MonthlyTable { variables: schema.to_vec(), rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Season {
        Season::ALL[i % 4]
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Fall => "Fall",
        };
        f.write_str(s)
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "winter" | "djf" | "0" => Ok(Season::Winter),
            "spring" | "mam" | "1" => Ok(Season::Spring),
            "summer" | "jja" | "2" => Ok(Season::Summer),
            "fall" | "autumn" | "son" | "3" => Ok(Season::Fall),
            other => Err(Error::InvalidArgument(format!("unknown season {other:?}"))),
        }
    }
}

/// A season of a specific year. Ordered in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeasonStamp {
    pub year: i32,
    pub season: Season,
}

impl SeasonStamp {
    pub fn new(year: i32, season: Season) -> Self {
        SeasonStamp { year, season }
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + self.season.index() as i64
    }

    fn from_ordinal(o: i64) -> Self {
        SeasonStamp { year: o.div_euclid(4) as i32, season: Season::from_index(o.rem_euclid(4) as usize) }
    }

    /// Stamp `n` seasons later (or earlier for negative `n`).
    pub fn offset(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Seasons from `self` to `other`.
    pub fn seasons_until(self, other: SeasonStamp) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for SeasonStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.year, self.season)
    }
}

impl FromStr for SeasonStamp {
    type Err = Error;

    /// `2001:spring`
    fn from_str(s: &str) -> Result<Self> {
        let (y, season) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("anchor {s:?} is not year:season")))?;
        let year = y.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad year in {s:?}")))?;
        Ok(SeasonStamp { year, season: season.parse()? })
    }
}

/// Month → (season, year offset) assignment. The offset moves December into
/// the following year's winter under the meteorological convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonMap {
    months: [(Season, i32); 12],
}

impl Default for SeasonMap {
    /// Winter = Dec-Feb (December from the previous calendar year),
    /// Spring = Mar-May, Summer = Jun-Aug, Fall = Sep-Nov.
    fn default() -> Self {
        use Season::*;
        SeasonMap {
            months: [
                (Winter, 0),
                (Winter, 0),
                (Spring, 0),
                (Spring, 0),
                (Spring, 0),
                (Summer, 0),
                (Summer, 0),
                (Summer, 0),
                (Fall, 0),
                (Fall, 0),
                (Fall, 0),
                (Winter, 1),
            ],
        }
    }
}

impl SeasonMap {
    /// Custom mapping; each season must receive exactly three months.
    pub fn new(months: [(Season, i32); 12]) -> Result<Self> {
        for season in Season::ALL {
            let n = months.iter().filter(|(s, _)| *s == season).count();
            if n != 3 {
                return Err(Error::InvalidArgument(format!("{season} has {n} months, need 3")));
            }
        }
        Ok(SeasonMap { months })
    }

    pub fn stamp(&self, year: i32, month: u8) -> SeasonStamp {
        let (season, off) = self.months[(month - 1) as usize];
        SeasonStamp { year: year + off, season }
    }
}

/// Per-variable location and scale used for standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Contiguous seasonal panel, stored time-major: `values[t][var]` is the value
/// of `var` at `start.offset(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSeries {
    pub variables: Vec<VariableSpec>,
    pub start: SeasonStamp,
    pub values: Vec<Vec<f64>>,
    /// Present once standardized.
    pub scaling: Option<Scaling>,
    /// `seasonal_means[season][var]`, in standardized units.
    pub seasonal_means: Option<Vec<Vec<f64>>>,
    /// Inclusive year range the transform was fitted on.
    pub train_years: Option<(i32, i32)>,
}

impl SeasonalSeries {
    pub fn new(variables: Vec<VariableSpec>, start: SeasonStamp, values: Vec<Vec<f64>>) -> Result<Self> {
        let v = variables.len();
        if let Some((t, row)) = values.iter().enumerate().find(|(_, r)| r.len() != v) {
            return Err(Error::InvalidArgument(format!(
                "row {t} has {} values for {v} variables",
                row.len()
            )));
        }
        Ok(SeasonalSeries { variables, start, values, scaling: None, seasonal_means: None, train_years: None })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn value(&self, t: usize, var: usize) -> f64 {
        self.values[t][var]
    }

    pub fn stamp(&self, t: usize) -> SeasonStamp {
        self.start.offset(t as i64)
    }

    pub fn index_of(&self, stamp: SeasonStamp) -> Option<usize> {
        let d = self.start.seasons_until(stamp);
        (d >= 0 && (d as usize) < self.len()).then_some(d as usize)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Resolves a variable given by name or 1-based column number.
    pub fn resolve_var(&self, key: &str) -> Result<usize> {
        if let Some(i) = self.var_index(key) {
            return Ok(i);
        }
        match key.parse::<usize>() {
            Ok(c) if (1..=self.n_vars()).contains(&c) => Ok(c - 1),
            _ => Err(Error::InvalidArgument(format!("unknown variable {key:?}"))),
        }
    }

    /// Indices of time points whose season-year lies in the training range.
    pub fn train_indices(&self) -> Vec<usize> {
        match self.train_years {
            Some((a, b)) => (0..self.len()).filter(|&t| (a..=b).contains(&self.stamp(t).year)).collect(),
            None => (0..self.len()).collect(),
        }
    }

    /// Last time index inside the training range.
    pub fn train_end(&self) -> Option<usize> {
        self.train_indices().last().copied()
    }

    /// Training values of `var` observed in `season`.
    pub fn training_values(&self, var: usize, season: Season) -> Vec<f64> {
        self.train_indices()
            .into_iter()
            .filter(|&t| self.stamp(t).season == season)
            .map(|t| self.values[t][var])
            .collect()
    }

    /// Maps a raw value through the fitted standardization and seasonal centering.
    pub fn transform_value(&self, var: usize, season: Season, raw: f64) -> Option<f64> {
        let sc = self.scaling.as_ref()?;
        let means = self.seasonal_means.as_ref()?;
        Some((raw - sc.mean[var]) / sc.sd[var] - means[season.index()][var])
    }

    /// Inverse of [`transform_value`](Self::transform_value).
    pub fn raw_value(&self, var: usize, season: Season, anomaly: f64) -> Option<f64> {
        let sc = self.scaling.as_ref()?;
        let means = self.seasonal_means.as_ref()?;
        Some((anomaly + means[season.index()][var]) * sc.sd[var] + sc.mean[var])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Collapses months into seasons. Incomplete seasons at either end are
/// dropped with a warning; an incomplete season in the interior is an error
/// because it would break the contiguity delay maps rely on.
pub fn to_seasonal(m: &MonthlyTable, season_map: &SeasonMap) -> Result<SeasonalSeries> {
    let mut groups: BTreeMap<SeasonStamp, Vec<&MonthlyRow>> = BTreeMap::new();
    for row in &m.rows {
        groups.entry(season_map.stamp(row.year, row.month)).or_default().push(row);
    }
    let complete: Vec<SeasonStamp> = groups.iter().filter(|(_, r)| r.len() == 3).map(|(s, _)| *s).collect();
    let (Some(&first), Some(&last)) = (complete.first(), complete.last()) else {
        return Err(Error::InsufficientData("no season has all three months".into()));
    };
    for (stamp, rows) in &groups {
        if rows.len() < 3 && (*stamp < first || *stamp > last) {
            log::warn!("dropping incomplete boundary season {stamp} ({} of 3 months)", rows.len());
        }
    }

    let n = first.seasons_until(last) as usize + 1;
    let mut values = Vec::with_capacity(n);
    for t in 0..n {
        let stamp = first.offset(t as i64);
        let rows = groups.get(&stamp).filter(|r| r.len() == 3).ok_or_else(|| {
            Error::InsufficientData(format!("season {stamp} inside the retained range lacks months"))
        })?;
        let row = m
            .variables
            .iter()
            .enumerate()
            .map(|(v, spec)| {
                let sum: f64 = rows.iter().map(|r| r.values[v]).sum();
                match spec.agg {
                    Aggregation::Sum => sum,
                    Aggregation::Mean => sum / 3.0,
                }
            })
            .collect();
        values.push(row);
    }
    SeasonalSeries::new(m.variables.clone(), first, values)
}

/// Standardizes each variable with training-year mean and sd, then removes
/// per-(season, variable) training means. Test years are transformed with
/// the same training parameters.
pub fn standardize_and_anomalize(s: &SeasonalSeries, train_years: RangeInclusive<i32>) -> Result<SeasonalSeries> {
    if s.scaling.is_some() {
        return Err(Error::InvalidArgument("series is already standardized".into()));
    }
    let train: Vec<usize> = (0..s.len()).filter(|&t| train_years.contains(&s.stamp(t).year)).collect();
    let nv = s.n_vars();

    let mut per_season = [0usize; 4];
    for &t in &train {
        per_season[s.stamp(t).season.index()] += 1;
    }
    if let Some(season) = Season::ALL.iter().find(|se| per_season[se.index()] < 2) {
        return Err(Error::InsufficientData(format!(
            "{season} has {} training years, need at least 2",
            per_season[season.index()]
        )));
    }

    let mut mean = vec![0.0; nv];
    let mut sd = vec![0.0; nv];
    for v in 0..nv {
        let xs: Vec<f64> = train.iter().map(|&t| s.values[t][v]).collect();
        let (m, sdev) = mean_sd(&xs);
        if !(sdev > f64::EPSILON * m.abs().max(1.0)) {
            return Err(Error::ZeroVariance { name: s.variables[v].name.clone() });
        }
        mean[v] = m;
        sd[v] = sdev;
    }

    let z: Vec<Vec<f64>> =
        s.values.iter().map(|row| row.iter().enumerate().map(|(v, x)| (x - mean[v]) / sd[v]).collect()).collect();

    let mut seasonal_means = vec![vec![0.0; nv]; 4];
    for &t in &train {
        let si = s.stamp(t).season.index();
        for v in 0..nv {
            seasonal_means[si][v] += z[t][v];
        }
    }
    for (si, row) in seasonal_means.iter_mut().enumerate() {
        for x in row.iter_mut() {
            *x /= per_season[si] as f64;
        }
    }

    let values = z
        .into_iter()
        .enumerate()
        .map(|(t, row)| {
            let si = s.stamp(t).season.index();
            row.into_iter().enumerate().map(|(v, x)| x - seasonal_means[si][v]).collect()
        })
        .collect();

    Ok(SeasonalSeries {
        variables: s.variables.clone(),
        start: s.start,
        values,
        scaling: Some(Scaling { mean, sd }),
        seasonal_means: Some(seasonal_means),
        train_years: Some((*train_years.start(), *train_years.end())),
    })
}

/// Two-pass mean and sample (n-1) standard deviation.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

/// Variable subset selected by a column code such as `127` or `1-9`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnCoding {
    /// 1-based column numbers, ascending.
    columns: Vec<usize>,
    code: String,
}

impl ColumnCoding {
    /// 1-based columns.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// 0-based variable indices.
    pub fn var_indices(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c - 1).collect()
    }

    pub fn contains_var(&self, var: usize) -> bool {
        self.columns.contains(&(var + 1))
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

impl fmt::Display for ColumnCoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// Parses a column code: a digit string (`"127"`) or a digit range (`"1-9"`).
/// Digits are 1-based column numbers and must be unique.
pub fn parse_subset_code(code: &str, n_vars: usize) -> Result<ColumnCoding> {
    let err = |msg: String| Error::SubsetCode { code: code.to_string(), msg };
    let trimmed = code.trim();
    if trimmed.is_empty() {
        return Err(err("empty code".into()));
    }
    let digit = |c: char| -> Result<usize> {
        let d = c.to_digit(10).ok_or_else(|| err(format!("{c:?} is not a digit")))? as usize;
        if d == 0 {
            return Err(err("column 0 does not exist; columns are numbered from 1".into()));
        }
        if d > n_vars {
            return Err(err(format!("column {d} exceeds the {n_vars} available")));
        }
        Ok(d)
    };

    let columns: Vec<usize> = if let Some((a, b)) = trimmed.split_once('-') {
        let (mut ca, mut cb) = (a.chars(), b.chars());
        let (Some(lo), None, Some(hi), None) = (ca.next(), ca.next(), cb.next(), cb.next()) else {
            return Err(err("ranges take the form a-b with single digits".into()));
        };
        let (lo, hi) = (digit(lo)?, digit(hi)?);
        if lo > hi {
            return Err(err(format!("descending range {lo}-{hi}")));
        }
        (lo..=hi).collect()
    } else {
        let mut cols = Vec::new();
        for c in trimmed.chars() {
            let d = digit(c)?;
            if cols.contains(&d) {
                return Err(err(format!("column {d} repeated")));
            }
            cols.push(d);
        }
        cols.sort_unstable();
        cols
    };
    Ok(ColumnCoding { columns, code: trimmed.to_string() })
}
