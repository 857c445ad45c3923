//! Delimited-text interfaces: episode tables (id, tstart, tstop, status,
//! optional stratum, covariates), long-format timelines (id, time, variable,
//! value), and estimator curve export (time, estimate, lower, upper).
//! Numeric output uses shortest-roundtrip formatting so emit -> ingest is
//! lossless.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::cohort::{CohortTable, Episode, Timeline, TimelineRecord};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::step::StepFunction;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub delimiter: u8,
    /// Reference level per categorical column; defaults to the first level in
    /// sorted order (with a warning) when not declared.
    pub reference_levels: BTreeMap<String, String>,
    /// Declared cause labels; when present, undeclared nonzero status codes
    /// are rejected.
    pub cause_labels: Option<BTreeMap<u32, String>>,
    pub time_axis: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            reference_levels: BTreeMap::new(),
            cause_labels: None,
            time_axis: "time".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    /// A categorical column was expanded against an undeclared reference
    /// level (first level in sorted order).
    DefaultReference { column: String, reference: String },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::DefaultReference { column, reference } => write!(
                f,
                "categorical column '{column}': no declared reference level, using '{reference}'"
            ),
        }
    }
}

pub fn read_episodes<F: Real, R: Read>(
    reader: R,
    opts: &IngestOptions,
) -> Result<(CohortTable<F>, Vec<IngestWarning>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    {
        let mut seen = BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::DuplicateColumn { column: h.clone() });
            }
        }
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };
    let id_col = col("id")?;
    let tstart_col = col("tstart")?;
    let tstop_col = col("tstop")?;
    let status_col = col("status")?;
    let stratum_col = headers.iter().position(|h| h == "stratum");
    let fixed: BTreeSet<usize> = [Some(id_col), Some(tstart_col), Some(tstop_col), Some(status_col), stratum_col]
        .into_iter()
        .flatten()
        .collect();
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|i| !fixed.contains(i)).collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|f| f.to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyCohort);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(Error::Invalid(format!(
                "row {}: expected {} fields, found {}",
                i + 2,
                headers.len(),
                row.len()
            )));
        }
    }

    // classify covariate columns: numeric if every value parses, else categorical
    enum ColKind {
        Numeric,
        Categorical { levels: Vec<String>, reference: String },
    }
    let mut warnings = Vec::new();
    let mut kinds = Vec::new();
    for &c in &cov_cols {
        let name = &headers[c];
        for (i, row) in rows.iter().enumerate() {
            if row[c].is_empty() {
                return Err(Error::MissingValue {
                    row: i + 2,
                    column: name.clone(),
                });
            }
        }
        let numeric = rows.iter().all(|row| row[c].parse::<f64>().is_ok());
        if numeric {
            kinds.push(ColKind::Numeric);
        } else {
            let mut levels: Vec<String> = rows
                .iter()
                .map(|row| row[c].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            levels.sort();
            let reference = match opts.reference_levels.get(name) {
                Some(r) => {
                    if !levels.iter().any(|l| l == r) {
                        return Err(Error::Invalid(format!(
                            "declared reference level '{r}' for column '{name}' is not an observed level"
                        )));
                    }
                    r.clone()
                }
                None => {
                    let r = levels[0].clone();
                    warnings.push(IngestWarning::DefaultReference {
                        column: name.clone(),
                        reference: r.clone(),
                    });
                    r
                }
            };
            kinds.push(ColKind::Categorical { levels, reference });
        }
    }

    let mut names: Vec<String> = Vec::new();
    for (&c, kind) in cov_cols.iter().zip(&kinds) {
        match kind {
            ColKind::Numeric => names.push(headers[c].clone()),
            ColKind::Categorical { levels, reference } => {
                for l in levels.iter().filter(|l| *l != reference) {
                    names.push(format!("{}={}", headers[c], l));
                }
            }
        }
    }

    let parse_f = |row: usize, column: &str, s: &str| -> Result<F> {
        s.parse::<f64>()
            .map(F::of)
            .map_err(|_| Error::BadValue {
                row,
                column: column.to_string(),
                value: s.to_string(),
            })
    };

    let mut episodes = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        if row[id_col].is_empty() {
            return Err(Error::MissingValue {
                row: line,
                column: "id".into(),
            });
        }
        let tstart = parse_f(line, "tstart", &row[tstart_col])?;
        let tstop = parse_f(line, "tstop", &row[tstop_col])?;
        let status: u32 = row[status_col].parse().map_err(|_| Error::BadValue {
            row: line,
            column: "status".into(),
            value: row[status_col].clone(),
        })?;
        if status != 0 {
            if let Some(labels) = &opts.cause_labels {
                if !labels.contains_key(&status) {
                    return Err(Error::UnknownCause { code: status });
                }
            }
        }
        let stratum = stratum_col.and_then(|c| {
            if row[c].is_empty() {
                None
            } else {
                Some(row[c].clone())
            }
        });
        let mut covariates = Vec::with_capacity(names.len());
        for (&c, kind) in cov_cols.iter().zip(&kinds) {
            match kind {
                ColKind::Numeric => covariates.push(parse_f(line, &headers[c], &row[c])?),
                ColKind::Categorical { levels, reference } => {
                    for l in levels.iter().filter(|l| *l != reference) {
                        covariates.push(if &row[c] == l { F::one() } else { F::zero() });
                    }
                }
            }
        }
        episodes.push(Episode {
            subject: row[id_col].clone(),
            tstart,
            tstop,
            status,
            stratum,
            covariates,
        });
    }

    let mut table = CohortTable::new(episodes, names)?.with_time_axis(opts.time_axis.clone());
    if let Some(labels) = &opts.cause_labels {
        table = table.with_cause_labels(labels.clone())?;
    }
    Ok((table, warnings))
}

pub fn read_episodes_path<F: Real>(
    path: impl AsRef<Path>,
    opts: &IngestOptions,
) -> Result<(CohortTable<F>, Vec<IngestWarning>)> {
    read_episodes(std::fs::File::open(path)?, opts)
}

pub fn write_episodes<F: Real, W: Write>(writer: W, table: &CohortTable<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let has_stratum = table.episodes().iter().any(|e| e.stratum.is_some());
    let mut header = vec!["id", "tstart", "tstop", "status"];
    if has_stratum {
        header.push("stratum");
    }
    let mut header: Vec<String> = header.into_iter().map(String::from).collect();
    header.extend(table.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for ep in table.episodes() {
        let mut rec = vec![
            ep.subject.clone(),
            format!("{}", ep.tstart),
            format!("{}", ep.tstop),
            format!("{}", ep.status),
        ];
        if has_stratum {
            rec.push(ep.stratum.clone().unwrap_or_default());
        }
        rec.extend(ep.covariates.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes_path<F: Real>(path: impl AsRef<Path>, table: &CohortTable<F>) -> Result<()> {
    write_episodes(std::fs::File::create(path)?, table)
}

pub fn read_timeline<F: Real, R: Read>(reader: R, delimiter: u8) -> Result<Timeline<F>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };
    let (id_col, time_col, var_col, val_col) =
        (col("id")?, col("time")?, col("variable")?, col("value")?);
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |c: usize, name: &str| -> Result<&str> {
            let v = rec.get(c).unwrap_or("");
            if v.is_empty() {
                Err(Error::MissingValue {
                    row: line,
                    column: name.to_string(),
                })
            } else {
                Ok(v)
            }
        };
        let parse = |name: &str, s: &str| -> Result<F> {
            s.parse::<f64>().map(F::of).map_err(|_| Error::BadValue {
                row: line,
                column: name.to_string(),
                value: s.to_string(),
            })
        };
        records.push(TimelineRecord {
            subject: get(id_col, "id")?.to_string(),
            time: parse("time", get(time_col, "time")?)?,
            variable: get(var_col, "variable")?.to_string(),
            value: parse("value", get(val_col, "value")?)?,
        });
    }
    Timeline::new(records)
}

pub fn read_timeline_path<F: Real>(path: impl AsRef<Path>, delimiter: u8) -> Result<Timeline<F>> {
    read_timeline(std::fs::File::open(path)?, delimiter)
}

pub fn write_timeline<F: Real, W: Write>(writer: W, timeline: &Timeline<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "time", "variable", "value"])?;
    for r in timeline.records() {
        w.write_record(&[
            r.subject.clone(),
            format!("{}", r.time),
            r.variable.clone(),
            format!("{}", r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_step_function<F: Real, W: Write>(writer: W, curve: &StepFunction<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "estimate", "lower", "upper"])?;
    for i in 0..curve.n_jumps() {
        let lo = curve.lower().map(|l| format!("{}", l[i])).unwrap_or_default();
        let hi = curve.upper().map(|u| format!("{}", u[i])).unwrap_or_default();
        w.write_record(&[
            format!("{}", curve.times()[i]),
            format!("{}", curve.values()[i]),
            lo,
            hi,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_step_function_path<F: Real>(
    path: impl AsRef<Path>,
    curve: &StepFunction<F>,
) -> Result<()> {
    write_step_function(std::fs::File::create(path)?, curve)
}
