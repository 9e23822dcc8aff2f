//! Tab-separated plot data from a record file.

use std::collections::BTreeMap;

use super::config::ExperimentKind;
use super::records::ExperimentRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlotError {
    #[error("records mix experiments: {0} and {1}")]
    Mixed(String, String),
    #[error("records are from `{found}`, not `{wanted}`")]
    WrongKind { wanted: String, found: String },
    #[error("no plot layout for `{0}`")]
    Unsupported(String),
}

pub fn columns(kind: ExperimentKind) -> Result<&'static [&'static str], PlotError> {
    Ok(match kind {
        ExperimentKind::LowerTail => &["t", "t_squared", "log_p", "ci_lo", "ci_hi"],
        ExperimentKind::Shape => &["angle", "t", "radius"],
        ExperimentKind::Kesten => &["m", "log_p", "ci_lo", "ci_hi"],
        ExperimentKind::Mu | ExperimentKind::Fluctuation => &["n", "mean_tau_over_n", "stderr"],
        ExperimentKind::TauSample => &["n", "mean_tau", "stderr"],
        ExperimentKind::BoxSandwich => &["m", "tail_probability", "ci_lo", "ci_hi"],
        ExperimentKind::EntropyExact => &["lambda", "ent", "edge_sum", "box_sum"],
        other => return Err(PlotError::Unsupported(other.to_string())),
    })
}

fn row(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("\t")
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Build the TSV for `kind`. Empty input yields just the header.
pub fn emit_plot_data(records: &[ExperimentRecord], kind: ExperimentKind) -> Result<String, PlotError> {
    let cols = columns(kind)?;
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.experiment != first.experiment) {
            return Err(PlotError::Mixed(first.experiment.clone(), other.experiment.clone()));
        }
        if first.experiment != kind.as_str() {
            return Err(PlotError::WrongKind {
                wanted: kind.to_string(),
                found: first.experiment.clone(),
            });
        }
    }
    fn pick<'a>(records: &'a [ExperimentRecord], stat: &'a str) -> impl Iterator<Item = &'a ExperimentRecord> {
        records.iter().filter(move |r| r.statistic == stat)
    }
    let ci = |r: &ExperimentRecord| r.ci.unwrap_or((f64::NAN, f64::NAN));
    let mut rows = Vec::new();
    match kind {
        ExperimentKind::LowerTail => {
            for r in pick(records, "tail_probability") {
                let t = r.grid.t.unwrap_or(f64::NAN);
                let (lo, hi) = ci(r);
                rows.push(row(&[t, t * t, ln_or_neg_inf(r.value), ln_or_neg_inf(lo), ln_or_neg_inf(hi)]));
            }
        }
        ExperimentKind::Shape => {
            for r in pick(records, "radius") {
                let angle = r.aux.get("angle").and_then(super::records::json_f64::from_value).unwrap_or(f64::NAN);
                rows.push(row(&[angle, r.grid.t.unwrap_or(f64::NAN), r.value]));
            }
        }
        ExperimentKind::Kesten => {
            for r in pick(records, "p_exact") {
                let (lo, hi) = ci(r);
                let m = r.grid.m.map(|m| m as f64).unwrap_or(f64::NAN);
                rows.push(row(&[m, ln_or_neg_inf(r.value), ln_or_neg_inf(lo), ln_or_neg_inf(hi)]));
            }
        }
        ExperimentKind::Mu | ExperimentKind::Fluctuation => {
            for r in pick(records, "mean_tau_over_n") {
                let n = r.grid.n.map(|n| n as f64).unwrap_or(f64::NAN);
                rows.push(row(&[n, r.value, r.stderr.unwrap_or(f64::NAN)]));
            }
        }
        ExperimentKind::TauSample => {
            for r in pick(records, "mean_tau") {
                let n = r.grid.n.map(|n| n as f64).unwrap_or(f64::NAN);
                rows.push(row(&[n, r.value, r.stderr.unwrap_or(f64::NAN)]));
            }
        }
        ExperimentKind::BoxSandwich => {
            for r in pick(records, "tail_probability") {
                let (lo, hi) = ci(r);
                let m = r.grid.m.map(|m| m as f64).unwrap_or(f64::NAN);
                rows.push(row(&[m, r.value, lo, hi]));
            }
        }
        ExperimentKind::EntropyExact => {
            let mut by_lambda: BTreeMap<u64, (f64, [f64; 3])> = BTreeMap::new();
            let order = |l: f64| {
                // total order on finite floats via sign-flipped bits
                let b = l.to_bits();
                if l < 0.0 {
                    !b
                } else {
                    b | (1 << 63)
                }
            };
            for r in records {
                let Some(l) = r.grid.lambda else { continue };
                let slot = match r.statistic.as_str() {
                    "ent" => 0,
                    "edge_sum" => 1,
                    "box_sum" => 2,
                    _ => continue,
                };
                by_lambda.entry(order(l)).or_insert((l, [f64::NAN; 3])).1[slot] = r.value;
            }
            for (l, v) in by_lambda.values() {
                rows.push(row(&[*l, v[0], v[1], v[2]]));
            }
        }
        _ => unreachable!("columns() rejected it"),
    }
    let mut out = cols.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    Ok(out)
}

/// Parse TSV produced by [`emit_plot_data`]: header and numeric rows.
pub fn parse_tsv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty input")?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let vals = l
            .split('\t')
            .map(|s| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != header.len() {
            return Err(format!("row {} has {} fields", i + 1, vals.len()));
        }
        rows.push(vals);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::records::{GridPoint, RecordFactory};

    fn factory(exp: &str) -> RecordFactory {
        RecordFactory {
            experiment: exp.into(),
            config_hash: "h".into(),
            d: 2,
            dist: "x".into(),
            seed: 0,
        }
    }

    #[test]
    fn lower_tail_parses_back() {
        let f = factory("lower-tail");
        let recs = vec![
            f.record(GridPoint::t(0.3), "tail_probability", 0.25).with_ci((0.2, 0.3)),
            f.record(GridPoint::t(0.1), "tail_probability", 0.0).with_ci((0.0, 0.01)),
            f.record(GridPoint::none(), "c_hat", 2.0),
        ];
        let tsv = emit_plot_data(&recs, ExperimentKind::LowerTail).unwrap();
        let (h, rows) = parse_tsv(&tsv).unwrap();
        assert_eq!(h, vec!["t", "t_squared", "log_p", "ci_lo", "ci_hi"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][2], 0.25f64.ln());
        assert_eq!(rows[1][2], f64::NEG_INFINITY);
        assert_eq!(rows[0][1], 0.3 * 0.3);
    }

    #[test]
    fn empty_and_mixed() {
        let tsv = emit_plot_data(&[], ExperimentKind::Shape).unwrap();
        assert_eq!(tsv, "angle\tt\tradius\n");
        let recs = vec![
            factory("shape").record(GridPoint::t(1.0), "radius", 1.0),
            factory("mu").record(GridPoint::n(1), "mu", 1.0),
        ];
        assert!(matches!(emit_plot_data(&recs, ExperimentKind::Shape), Err(PlotError::Mixed(..))));
        assert!(matches!(
            emit_plot_data(&recs[1..], ExperimentKind::Shape),
            Err(PlotError::WrongKind { .. })
        ));
    }
}
