//! Long-format CSV: one row per (series, step) with columns
//! `series_id, step, dim_0 .. dim_{D-1}, label`.

use std::collections::HashMap;

use super::{LabeledSeries, TsFile};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, Default)]
pub struct CsvSchema {
    /// Class vocabulary. When absent, labels are indexed in order of first appearance.
    pub vocabulary: Option<Vec<String>>,
}

struct Group {
    id: String,
    label: String,
    rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_csv(bytes: &[u8], schema: &CsvSchema) -> Result<TsFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    if n < 4
        || &headers[0] != "series_id"
        || &headers[1] != "step"
        || &headers[n - 1] != "label"
    {
        return Err(Error::Data(format!(
            "CSV header must be series_id, step, dim_0.., label; got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let dims = n - 3;

    let mut groups: Vec<Group> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row_no + 2;
        let bad = |msg: String| Error::Parse {
            source_name: "csv".into(),
            line,
            msg,
        };
        if rec.len() != n {
            return Err(bad(format!("expected {n} fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        let step: usize = rec[1]
            .parse()
            .map_err(|_| bad(format!("invalid step '{}'", &rec[1])))?;
        let values = (0..dims)
            .map(|j| {
                rec[2 + j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("invalid value '{}' in dim_{j}", &rec[2 + j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = rec[n - 1].to_string();
        let gi = *index.entry(id.clone()).or_insert_with(|| {
            groups.push(Group {
                id: id.clone(),
                label: label.clone(),
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        let g = &mut groups[gi];
        if g.label != label {
            return Err(Error::Series {
                series: id,
                msg: format!("conflicting labels '{}' and '{label}'", g.label),
            });
        }
        g.rows.push((step, values));
    }

    let mut vocabulary = schema.vocabulary.clone().unwrap_or_default();
    let fixed_vocab = schema.vocabulary.is_some();
    let mut series = Vec::with_capacity(groups.len());
    let mut length = None;
    for mut g in groups {
        g.rows.sort_by_key(|(s, _)| *s);
        for (expect, (step, _)) in g.rows.iter().enumerate() {
            if *step != expect {
                return Err(Error::Series {
                    series: g.id,
                    msg: format!("steps must run 0..T without gaps or duplicates (found {step} at position {expect})"),
                });
            }
        }
        let t = g.rows.len();
        if *length.get_or_insert(t) != t {
            return Err(Error::Series {
                series: g.id,
                msg: format!("has {t} steps, other series have {}", length.unwrap()),
            });
        }
        let label = match vocabulary.iter().position(|l| *l == g.label) {
            Some(i) => i,
            None if !fixed_vocab => {
                vocabulary.push(g.label.clone());
                vocabulary.len() - 1
            }
            None => {
                return Err(Error::Series {
                    series: g.id,
                    msg: format!("unknown class label '{}'", g.label),
                })
            }
        };
        let values = Matrix::from_fn(t, dims, |s, j| g.rows[s].1[j]);
        series.push(LabeledSeries::new(values, label, g.id)?);
    }
    Ok(TsFile {
        problem_name: None,
        dims,
        series_length: length.unwrap_or(0),
        class_labels: vocabulary,
        series,
    })
}

/// Writes series in long format; the inverse of [`parse_csv`].
pub fn write_csv(series: &[LabeledSeries], vocabulary: &[String]) -> Result<String> {
    let dims = series.first().map_or(0, |s| s.dims());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["series_id".to_string(), "step".to_string()];
    header.extend((0..dims).map(|j| format!("dim_{j}")));
    header.push("label".into());
    w.write_record(&header)?;
    for s in series {
        let label = vocabulary
            .get(s.label())
            .ok_or_else(|| Error::invalid(format!("series {} label outside vocabulary", s.id())))?;
        for t in 0..s.len() {
            let mut row = vec![s.id().to_string(), t.to_string()];
            row.extend(s.step(t).iter().map(|v| v.to_string()));
            row.push(label.clone());
            w.write_record(&row)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv writer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}
