use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{predictive_density, Tapestry};
use crate::dataio::Season;
use crate::{Error, Result};

/// Log-likelihood terms by stage and horizon for a set of test anchors.
///
/// Stage `s` means observations at horizons `1..=s` have been applied, so
/// only cells with `s < h` are populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    pub k: usize,
    /// Season shared by every anchor, if any.
    pub origin: Option<Season>,
    /// One label per anchor, e.g. `2001:Spring`.
    pub labels: Vec<String>,
    /// `terms[stage][h - 1][anchor]`; `None` where the truth is unavailable.
    pub terms: Vec<Vec<Vec<Option<f64>>>>,
    /// Notes on anchors with missing observations.
    pub flags: Vec<String>,
}

impl LikelihoodTable {
    fn empty(k: usize, origin: Option<Season>, labels: Vec<String>) -> Self {
        let n = labels.len();
        LikelihoodTable { k, origin, labels, terms: vec![vec![vec![None; n]; k]; k], flags: vec![] }
    }

    /// Summed log-likelihood over the anchors with a value; `None` outside
    /// the triangle or when no anchor has one.
    pub fn cell(&self, stage: usize, h: usize) -> Option<f64> {
        if stage >= h || h == 0 || h > self.k {
            return None;
        }
        let vals: Vec<f64> = self.terms[stage][h - 1].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum())
    }

    pub fn per_anchor(&self, stage: usize, h: usize) -> &[Option<f64>] {
        &self.terms[stage][h - 1]
    }

    pub fn n_anchors(&self) -> usize {
        self.labels.len()
    }

    fn origin_label(&self) -> String {
        self.origin.map_or_else(|| "all".to_string(), |s| s.to_string())
    }
}

/// Univariate convenience over [`likelihood_table_multi`].
pub fn likelihood_table(
    tapestries: &[Tapestry],
    truths: &[Vec<Option<f64>>],
    h_bw: f64,
    floor: Option<f64>,
) -> Result<LikelihoodTable> {
    let multi: Vec<Vec<Option<Vec<f64>>>> =
        truths.iter().map(|row| row.iter().map(|v| v.map(|x| vec![x])).collect()).collect();
    likelihood_table_multi(tapestries, &multi, h_bw, floor)
}

/// Evaluates each fresh tapestry against its truth: at stage `s` the
/// tapestry has been reweighted by the truths at horizons `1..=s`, and the
/// log density of the target truth is recorded for every `h > s`.
///
/// `truths[a][h - 1]` holds the values of the tapestry's predicted variables,
/// target first.
pub fn likelihood_table_multi(
    tapestries: &[Tapestry],
    truths: &[Vec<Option<Vec<f64>>>],
    h_bw: f64,
    floor: Option<f64>,
) -> Result<LikelihoodTable> {
    let Some(first) = tapestries.first() else {
        return Err(Error::InsufficientData("no tapestries to evaluate".into()));
    };
    if truths.len() != tapestries.len() {
        return Err(Error::DimensionMismatch { expected: tapestries.len(), got: truths.len() });
    }
    let k = first.k;
    let origin = first.anchor.season;
    let same_origin = tapestries.iter().all(|t| t.anchor.season == origin);
    let labels = tapestries.iter().map(|t| t.anchor.to_string()).collect();
    let mut table = LikelihoodTable::empty(k, same_origin.then_some(origin), labels);

    for (a, (t, truth)) in tapestries.iter().zip(truths).enumerate() {
        if t.k != k {
            return Err(Error::InvalidArgument(format!("tapestry {} has k = {}, expected {k}", t.anchor, t.k)));
        }
        if truth.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: truth.len() });
        }
        if !t.observation_log.is_empty() {
            return Err(Error::InvalidArgument(format!("tapestry {} has already been reweighted", t.anchor)));
        }
        let mut cur = t.clone();
        for stage in 0..k {
            if stage > 0 {
                match &truth[stage - 1] {
                    Some(v) => cur = cur.reweight_multi(stage, v)?,
                    None => {
                        table.flags.push(format!("{}: no observation at horizon {stage}", t.anchor));
                        break;
                    }
                }
            }
            for h in stage + 1..=k {
                if let Some(v) = &truth[h - 1] {
                    let f = predictive_density(&cur, h, v[0], h_bw, floor)?;
                    table.terms[stage][h - 1][a] = Some(f.ln());
                }
            }
        }
        if cur.degeneracy_events > 0 {
            table.flags.push(format!("{}: {} weight resets", t.anchor, cur.degeneracy_events));
        }
    }
    Ok(table)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes tables as CSV: `origin,stage,row,h<k>,...,h1`, with a `sum` row
/// per stage followed by one row per anchor. Missing cells are `NA`.
pub fn write_tables_csv<W: Write>(tables: &[LikelihoodTable], w: W) -> Result<()> {
    let Some(first) = tables.first() else {
        return Err(Error::InvalidArgument("no tables to write".into()));
    };
    let k = first.k;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["origin".to_string(), "stage".into(), "row".into()];
    header.extend((1..=k).rev().map(|h| format!("h{h}")));
    let io = |e: csv::Error| Error::InvalidArgument(format!("writing table: {e}"));
    out.write_record(&header).map_err(io)?;
    for t in tables {
        if t.k != k {
            return Err(Error::InvalidArgument("tables in one file must share k".into()));
        }
        let origin = t.origin_label();
        for stage in 0..k {
            let mut rec = vec![origin.clone(), stage.to_string(), "sum".into()];
            rec.extend((1..=k).rev().map(|h| fmt_cell(t.cell(stage, h))));
            out.write_record(&rec).map_err(io)?;
            for (a, label) in t.labels.iter().enumerate() {
                let mut rec = vec![origin.clone(), stage.to_string(), label.clone()];
                rec.extend((1..=k).rev().map(|h| fmt_cell(t.terms[stage][h - 1][a])));
                out.write_record(&rec).map_err(io)?;
            }
        }
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("writing table: {e}")))?;
    Ok(())
}

/// Inverse of [`write_tables_csv`]. Sum rows are recomputed rather than read.
pub fn read_tables_csv<R: Read>(r: R, origin_name: &str) -> Result<Vec<LikelihoodTable>> {
    let perr = |line: usize, msg: String| Error::Parse { path: origin_name.to_string(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.len() < 4 || &header[0] != "origin" || &header[1] != "stage" || &header[2] != "row" {
        return Err(perr(1, "expected header origin,stage,row,h<k>,...,h1".into()));
    }
    let k = header.len() - 3;
    for (i, name) in header.iter().skip(3).enumerate() {
        if name != format!("h{}", k - i) {
            return Err(perr(1, format!("column {} should be h{}, found {name}", i + 4, k - i)));
        }
    }

    let mut tables: Vec<LikelihoodTable> = vec![];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        if rec.len() != k + 3 {
            return Err(perr(line, format!("expected {} fields, found {}", k + 3, rec.len())));
        }
        let origin = match &rec[0] {
            "all" => None,
            s => Some(s.parse::<Season>().map_err(|e| perr(line, e.to_string()))?),
        };
        let stage: usize = rec[1].parse().map_err(|_| perr(line, format!("bad stage {:?}", &rec[1])))?;
        if stage >= k {
            return Err(perr(line, format!("stage {stage} out of range for k = {k}")));
        }
        if &rec[2] == "sum" {
            continue;
        }
        let label = rec[2].to_string();
        let mut vals = vec![None; k];
        for (c, field) in rec.iter().skip(3).enumerate() {
            let h = k - c;
            vals[h - 1] = match field {
                "NA" => None,
                s => Some(s.parse::<f64>().map_err(|_| perr(line, format!("bad value {s:?}")))?),
            };
        }

        if tables.last().is_none_or(|t| t.origin != origin) {
            tables.push(LikelihoodTable::empty(k, origin, vec![]));
        }
        let t = tables.last_mut().expect("pushed above");
        let a = match t.labels.iter().position(|l| *l == label) {
            Some(a) => a,
            None if stage == 0 => {
                t.labels.push(label);
                t.terms.iter_mut().flatten().for_each(|col| col.push(None));
                t.labels.len() - 1
            }
            None => return Err(perr(line, format!("row {label} missing from stage 0"))),
        };
        for (h, v) in vals.into_iter().enumerate() {
            if v.is_some() && stage > h {
                return Err(perr(line, format!("stage {stage} cannot have a value at h{}", h + 1)));
            }
            t.terms[stage][h][a] = v;
        }
    }
    if tables.is_empty() {
        return Err(perr(2, "no table rows".into()));
    }
    Ok(tables)
}
