//! Reader and writer for the UEA/sktime `.ts` text format.
//!
//! A file is a header of `@key value` lines (comments start with `#`), an
//! `@data` marker, then one record per line. Dimensions within a record are
//! separated by `:`, values by `,`, and the class label follows the final `:`.

use std::fmt::Write as _;

use super::LabeledSeries;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct TsFile {
    pub problem_name: Option<String>,
    pub dims: usize,
    pub series_length: usize,
    /// Class names in header order; label indices refer to this list.
    pub class_labels: Vec<String>,
    pub series: Vec<LabeledSeries>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TsOptions {
    /// Fill `?`/`NaN` markers by linear interpolation instead of rejecting them.
    pub interpolate_missing: bool,
}

pub fn parse_ts(bytes: &[u8], source_name: &str) -> Result<TsFile> {
    parse_ts_with(bytes, source_name, TsOptions::default())
}

#[derive(Default)]
struct Header {
    problem_name: Option<String>,
    dims: Option<usize>,
    univariate: Option<bool>,
    equal_length: Option<bool>,
    series_length: Option<usize>,
    labels: Option<Vec<String>>,
    missing: Option<bool>,
}

pub fn parse_ts_with(bytes: &[u8], source_name: &str, opts: TsOptions) -> Result<TsFile> {
    let err = |line: usize, msg: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        err(line, "file is not valid UTF-8".into())
    })?;

    let mut header = Header::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut data_line = None;
    let mut last_line = 0;
    for (no, line) in lines.by_ref() {
        last_line = no;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !line.starts_with('@') {
            return Err(err(no, format!("expected a header tag or @data, found '{}'", clip(line))));
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or("").to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        let flag = |rest: &[&str]| -> Result<bool> {
            match rest.first().map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("true") => Ok(true),
                Some("false") => Ok(false),
                _ => Err(err(no, format!("{tag} expects true or false"))),
            }
        };
        let count = |rest: &[&str]| -> Result<usize> {
            rest.first()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| err(no, format!("{tag} expects a non-negative integer")))
        };
        match tag.as_str() {
            "@problemname" => header.problem_name = Some(rest.join(" ")),
            "@timestamps" => {
                if flag(&rest)? {
                    return Err(err(no, "time-stamped series are not supported".into()));
                }
            }
            "@missing" => header.missing = Some(flag(&rest)?),
            "@univariate" => header.univariate = Some(flag(&rest)?),
            "@dimension" | "@dimensions" => header.dims = Some(count(&rest)?),
            "@equallength" => header.equal_length = Some(flag(&rest)?),
            "@serieslength" => header.series_length = Some(count(&rest)?),
            "@classlabel" => {
                if !flag(&rest)? {
                    return Err(err(no, "files without class labels are not supported".into()));
                }
                let labels: Vec<String> = rest[1..].iter().map(|s| s.to_string()).collect();
                if labels.is_empty() {
                    return Err(err(no, "@classLabel true lists no classes".into()));
                }
                for (i, l) in labels.iter().enumerate() {
                    if labels[..i].contains(l) {
                        return Err(err(no, format!("duplicate class label '{l}'")));
                    }
                }
                header.labels = Some(labels);
            }
            "@targetlabel" => {
                return Err(err(no, "regression targets are not supported".into()));
            }
            "@data" => {
                data_line = Some(no);
                break;
            }
            _ => log::debug!("{source_name}:{no}: ignoring header tag {tag}"),
        }
    }
    if data_line.is_none() {
        return Err(err(last_line.max(1), "missing @data section".into()));
    }
    if header.equal_length == Some(false) {
        return Err(err(
            data_line.unwrap(),
            "unequal-length series are not supported (@equalLength false)".into(),
        ));
    }
    let labels = header
        .labels
        .ok_or_else(|| err(data_line.unwrap(), "missing @classLabel header".into()))?;
    let mut dims = header.dims;
    if header.univariate == Some(true) {
        if dims.is_some_and(|d| d != 1) {
            return Err(err(data_line.unwrap(), "@univariate true conflicts with @dimensions".into()));
        }
        dims = Some(1);
    }
    if dims == Some(0) {
        return Err(err(data_line.unwrap(), "@dimensions must be at least 1".into()));
    }
    let allow_missing = opts.interpolate_missing;
    let _ = header.missing;

    let mut series = Vec::new();
    let mut length = header.series_length;
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let record = series.len();
        let mut fields: Vec<&str> = line.split(':').collect();
        if fields.len() < 2 {
            return Err(err(no, format!("record {record} has no class label")));
        }
        let label_str = fields.pop().unwrap().trim();
        let label = labels
            .iter()
            .position(|l| l == label_str)
            .ok_or_else(|| err(no, format!("record {record}: unknown class label '{}'", clip(label_str))))?;
        let d = *dims.get_or_insert(fields.len());
        if fields.len() != d {
            return Err(err(
                no,
                format!("record {record} has {} dimensions, expected {d}", fields.len()),
            ));
        }
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
        for (j, field) in fields.iter().enumerate() {
            let mut col = Vec::new();
            let mut any_missing = false;
            for tok in field.split(',') {
                let tok = tok.trim();
                if tok == "?" || tok.eq_ignore_ascii_case("nan") {
                    if !allow_missing {
                        return Err(err(
                            no,
                            format!("record {record} dimension {j}: missing value '{tok}'"),
                        ));
                    }
                    any_missing = true;
                    col.push(f64::NAN);
                    continue;
                }
                let v: f64 = tok.parse().map_err(|_| {
                    err(no, format!("record {record} dimension {j}: invalid number '{}'", clip(tok)))
                })?;
                if !v.is_finite() {
                    return Err(err(
                        no,
                        format!("record {record} dimension {j}: non-finite value '{}'", clip(tok)),
                    ));
                }
                col.push(v);
            }
            if any_missing {
                interpolate(&mut col).map_err(|m| err(no, format!("record {record} dimension {j}: {m}")))?;
            }
            columns.push(col);
        }
        let t = columns[0].len();
        if let Some(j) = columns.iter().position(|c| c.len() != t) {
            return Err(err(
                no,
                format!(
                    "record {record} is ragged: dimension {j} has {} values, dimension 0 has {t}",
                    columns[j].len()
                ),
            ));
        }
        match length {
            Some(l) if l != t => {
                return Err(err(
                    no,
                    format!("record {record} has length {t}, expected equal length {l}"),
                ))
            }
            _ => length = Some(t),
        }
        let values = Matrix::from_fn(t, d, |step, j| columns[j][step]);
        let id = format!("{}#{record}", header.problem_name.as_deref().unwrap_or(source_name));
        series.push(LabeledSeries::new(values, label, id).map_err(|e| err(no, e.to_string()))?);
    }
    let dims = dims.ok_or_else(|| err(last_line.max(1), "no records and no @dimensions header".into()))?;
    Ok(TsFile {
        problem_name: header.problem_name,
        dims,
        series_length: length.unwrap_or(0),
        class_labels: labels,
        series,
    })
}

fn interpolate(col: &mut [f64]) -> std::result::Result<(), String> {
    let known: Vec<usize> = (0..col.len()).filter(|i| !col[*i].is_nan()).collect();
    let (first, last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err("every value is missing".into()),
    };
    for i in 0..first {
        col[i] = col[first];
    }
    for i in last + 1..col.len() {
        col[i] = col[last];
    }
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let frac = (i - a) as f64 / (b - a) as f64;
            col[i] = col[a] + frac * (col[b] - col[a]);
        }
    }
    Ok(())
}

fn clip(s: &str) -> String {
    s.chars().take(40).collect()
}

/// Serialises series in `.ts` form; values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_ts(file: &TsFile) -> Result<String> {
    for l in &file.class_labels {
        if l.is_empty() || l.contains(|c: char| c.is_whitespace() || c == ':' || c == ',') {
            return Err(Error::invalid(format!("class label '{l}' cannot be written to .ts")));
        }
    }
    let mut out = String::new();
    if let Some(name) = &file.problem_name {
        writeln!(out, "@problemName {name}").unwrap();
    }
    writeln!(out, "@timeStamps false").unwrap();
    writeln!(out, "@missing false").unwrap();
    writeln!(out, "@univariate {}", file.dims == 1).unwrap();
    writeln!(out, "@dimensions {}", file.dims).unwrap();
    writeln!(out, "@equalLength true").unwrap();
    writeln!(out, "@seriesLength {}", file.series_length).unwrap();
    writeln!(out, "@classLabel true {}", file.class_labels.join(" ")).unwrap();
    writeln!(out, "@data").unwrap();
    for s in &file.series {
        let label = file
            .class_labels
            .get(s.label())
            .ok_or_else(|| Error::invalid(format!("series {} has label outside vocabulary", s.id())))?;
        for j in 0..s.dims() {
            for t in 0..s.len() {
                if t > 0 {
                    out.push(',');
                }
                write!(out, "{}", s.values().get(t, j)).unwrap();
            }
            out.push(':');
        }
        out.push_str(label);
        out.push('\n');
    }
    Ok(out)
}
