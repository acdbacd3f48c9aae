//! CSV files written and read by the command-line tool.
//!
//! Every file opens with `# key = value` comment lines (at least
//! `config_hash` and `seed`), followed by a header row and data rows.
//! Numbers use Rust's shortest round-trip formatting; lists inside a field
//! are `;`-separated.
//!
//! | file | columns |
//! |---|---|
//! | curve | `epoch,step,mean_return,std_return,returns` |
//! | diagnostics | `update,step,n_samples,lambda,rel_change,condition,feature_sparsity,status` |
//! | periodic | `epoch,step,dqn,<regularizer>_<lambda>...` |
//! | ablation | `epoch,method,minibatch,score_delta,rel_weight_distance,objective` |
//! | report | `variant,max_score,final_score,p_value,statistic,n_effective` |

use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::dqn::EvalRecord;
use crate::error::{Error, Result};
use crate::lsdqn::{AblationMethod, AblationRow, LsDiagnostic, PeriodicTable, UpdateStatus};
use crate::stats::{LearningCurve, ReportRow};

pub const CURVE_HEADER: &str = "epoch,step,mean_return,std_return,returns";
pub const DIAGNOSTICS_HEADER: &str =
    "update,step,n_samples,lambda,rel_change,condition,feature_sparsity,status";
pub const ABLATION_HEADER: &str =
    "epoch,method,minibatch,score_delta,rel_weight_distance,objective";
pub const REPORT_HEADER: &str = "variant,max_score,final_score,p_value,statistic,n_effective";
/// Written in the p-value column when the signed-rank test has too few
/// non-zero pairs.
pub const TOO_FEW_PAIRS: &str = "too_few_pairs";

/// The `# key = value` lines at the top of a file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Meta {
    pub entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            entries: vec![
                ("config_hash".into(), config_hash.into()),
                ("seed".into(), seed.to_string()),
            ],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "# {k} = {v}")?;
        }
        Ok(())
    }
}

/// Splits a file into its metadata, header row and data rows.
fn read_sections<R: BufRead>(
    input: R,
    expected_header: Option<&str>,
) -> Result<(Meta, Vec<String>, Vec<Vec<String>>)> {
    let mut meta = Meta::default();
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) if body.is_empty() => {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("bad metadata line '{line}'")))?;
                meta.entries.push((k.trim().into(), v.trim().into()));
            }
            _ => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(h) => h.map_err(csv_error)?.iter().map(str::to_string).collect(),
        None => return Err(Error::Format("missing header row".into())),
    };
    if let Some(expected) = expected_header {
        if header.join(",") != expected {
            return Err(Error::Format(format!(
                "expected header '{expected}', found '{}'",
                header.join(",")
            )));
        }
    }
    let rows = records
        .map(|r| Ok(r.map_err(csv_error)?.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((meta, header, rows))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes the metadata block, then the header and rows as CSV.
fn write_sections<W: Write, I>(mut out: W, meta: &Meta, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    meta.write(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from '{s}'")))
}

fn join_returns(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn columns(header: &str) -> Vec<&str> {
    header.split(',').collect()
}

pub fn write_curve<W: Write>(out: W, meta: &Meta, curve: &LearningCurve) -> Result<()> {
    let rows = curve.points.iter().map(|p| {
        vec![
            p.epoch.to_string(),
            p.step.to_string(),
            p.mean_return.to_string(),
            p.std_return().to_string(),
            join_returns(&p.returns),
        ]
    });
    write_sections(out, meta, &columns(CURVE_HEADER), rows)
}

/// Reads a curve; its label is the `label` metadata entry when present.
pub fn read_curve<R: BufRead>(input: R) -> Result<(Meta, LearningCurve)> {
    let (meta, _, rows) = read_sections(input, Some(CURVE_HEADER))?;
    let mut curve = LearningCurve::new(meta.get("label").unwrap_or("curve"));
    for r in rows {
        let returns = r[4]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| field(s, "return"))
            .collect::<Result<Vec<f64>>>()?;
        let rec = EvalRecord::new(field(&r[0], "epoch")?, field(&r[1], "step")?, returns);
        curve.push(rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok((meta, curve))
}

pub fn write_diagnostics<W: Write>(out: W, meta: &Meta, diags: &[LsDiagnostic]) -> Result<()> {
    let rows = diags.iter().map(|d| {
        vec![
            d.update.to_string(),
            d.step.to_string(),
            d.n_samples.to_string(),
            d.lambda.to_string(),
            d.rel_change.to_string(),
            d.condition.to_string(),
            d.feature_sparsity.to_string(),
            d.status.name().to_string(),
        ]
    });
    write_sections(out, meta, &columns(DIAGNOSTICS_HEADER), rows)
}

pub fn read_diagnostics<R: BufRead>(input: R) -> Result<(Meta, Vec<LsDiagnostic>)> {
    let (meta, _, rows) = read_sections(input, Some(DIAGNOSTICS_HEADER))?;
    let diags = rows
        .iter()
        .map(|r| {
            Ok(LsDiagnostic {
                update: field(&r[0], "update")?,
                step: field(&r[1], "step")?,
                n_samples: field(&r[2], "n_samples")?,
                lambda: field(&r[3], "lambda")?,
                rel_change: field(&r[4], "rel_change")?,
                condition: field(&r[5], "condition")?,
                feature_sparsity: field(&r[6], "feature_sparsity")?,
                status: match r[7].as_str() {
                    "applied" => UpdateStatus::Applied,
                    "skipped" => UpdateStatus::Skipped,
                    other => return Err(Error::Format(format!("unknown status '{other}'"))),
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok((meta, diags))
}

pub fn write_periodic<W: Write>(out: W, meta: &Meta, table: &PeriodicTable) -> Result<()> {
    let mut header = vec!["epoch", "step"];
    header.extend(table.columns.iter().map(String::as_str));
    let rows = table
        .epochs
        .iter()
        .zip(&table.steps)
        .zip(&table.values)
        .map(|((epoch, step), vals)| {
            let mut row = vec![epoch.to_string(), step.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            row
        });
    write_sections(out, meta, &header, rows)
}

pub fn read_periodic<R: BufRead>(input: R) -> Result<(Meta, PeriodicTable)> {
    let (meta, header, rows) = read_sections(input, None)?;
    if header.len() < 3 || header[0] != "epoch" || header[1] != "step" {
        return Err(Error::Format(format!(
            "unexpected periodic header '{}'",
            header.join(",")
        )));
    }
    let mut table = PeriodicTable {
        columns: header[2..].to_vec(),
        epochs: Vec::new(),
        steps: Vec::new(),
        values: Vec::new(),
    };
    for r in rows {
        table.epochs.push(field(&r[0], "epoch")?);
        table.steps.push(field(&r[1], "step")?);
        table.values.push(
            r[2..]
                .iter()
                .map(|s| field(s, "score"))
                .collect::<Result<_>>()?,
        );
    }
    Ok((meta, table))
}

pub fn write_ablation<W: Write>(out: W, meta: &Meta, rows: &[AblationRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.epoch.to_string(),
            r.method.name().to_string(),
            r.minibatch.map(|m| m.to_string()).unwrap_or_default(),
            r.score_delta.to_string(),
            r.rel_weight_distance.to_string(),
            r.objective.to_string(),
        ]
    });
    write_sections(out, meta, &columns(ABLATION_HEADER), rows)
}

pub fn read_ablation<R: BufRead>(input: R) -> Result<(Meta, Vec<AblationRow>)> {
    let (meta, _, rows) = read_sections(input, Some(ABLATION_HEADER))?;
    let out = rows
        .iter()
        .map(|r| {
            Ok(AblationRow {
                epoch: field(&r[0], "epoch")?,
                method: r[1].parse::<AblationMethod>()?,
                minibatch: if r[2].is_empty() {
                    None
                } else {
                    Some(field(&r[2], "minibatch")?)
                },
                score_delta: field(&r[3], "score_delta")?,
                rel_weight_distance: field(&r[4], "rel_weight_distance")?,
                objective: field(&r[5], "objective")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((meta, out))
}

/// The baseline row has empty test columns; a failed test is written as
/// [`TOO_FEW_PAIRS`].
pub fn write_report<W: Write>(out: W, meta: &Meta, rows: &[ReportRow]) -> Result<()> {
    let rows = rows.iter().enumerate().map(|(i, r)| {
        let (p, stat, n) = match &r.wilcoxon {
            Some(w) => (
                w.p_value.to_string(),
                w.statistic.to_string(),
                w.n_effective.to_string(),
            ),
            None if i == 0 => Default::default(),
            None => (TOO_FEW_PAIRS.to_string(), String::new(), String::new()),
        };
        vec![
            r.label.clone(),
            r.max_score.to_string(),
            r.final_score.to_string(),
            p,
            stat,
            n,
        ]
    });
    write_sections(out, meta, &columns(REPORT_HEADER), rows)
}

/// Report rows as `(label, max, final, p)`; `p` is `None` for the
/// too-few-pairs sentinel and for the baseline row.
pub fn read_report<R: BufRead>(input: R) -> Result<(Meta, Vec<(String, f64, f64, Option<f64>)>)> {
    let (meta, _, rows) = read_sections(input, Some(REPORT_HEADER))?;
    let out = rows
        .iter()
        .map(|r| {
            let p = match r[3].as_str() {
                TOO_FEW_PAIRS | "" => None,
                s => Some(field(s, "p_value")?),
            };
            Ok((
                r[0].clone(),
                field(&r[1], "max_score")?,
                field(&r[2], "final_score")?,
                p,
            ))
        })
        .collect::<Result<_>>()?;
    Ok((meta, out))
}

/// Lines after the metadata block.
pub fn data_section(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
