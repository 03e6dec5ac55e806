//! Text formats for datasets, models and configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::{validate_dataset, Bag, Example, LabelSet, MimlDataset};
use crate::error::{MimlError, Result};

pub const DATASET_VERSION: &str = "miml/1";
pub const MODEL_VERSION: &str = "miml-model/1";
pub const ALGORITHMS: [&str; 5] = ["mimlboost", "mimlsvm", "dmimlsvm", "insdif", "subcod"];

/// Shortest decimal that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn check_token(what: &str, s: &str, forbidden: &[char]) -> Result<()> {
    if s.is_empty()
        || s.chars()
            .any(|c| c.is_whitespace() || forbidden.contains(&c))
    {
        return Err(MimlError::InvalidArgument(format!(
            "{what} {s:?} cannot be written in the dataset format"
        )));
    }
    Ok(())
}

/// Writes the canonical text form.
///
/// Label names must be free of whitespace, `,` and `|`; bag ids free of
/// whitespace and `|`.
pub fn serialize_dataset(ds: &MimlDataset) -> Result<String> {
    let mut out = String::new();
    writeln!(
        out,
        "{DATASET_VERSION} T={} d={} m={}",
        ds.n_labels(),
        ds.dim(),
        ds.len()
    )
    .unwrap();
    out.push_str("labels");
    for name in ds.label_names() {
        check_token("label name", name, &[',', '|'])?;
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    for ex in ds.examples() {
        check_token("bag id", &ex.bag.id, &['|'])?;
        out.push_str(&ex.bag.id);
        out.push_str(" | ");
        let names: Vec<&str> = ex
            .labels
            .iter()
            .map(|l| ds.label_names()[l].as_str())
            .collect();
        out.push_str(&names.join(","));
        out.push_str(" |");
        for (j, inst) in ex.bag.instances.iter().enumerate() {
            out.push_str(if j == 0 { " " } else { " ; " });
            let vals: Vec<String> = inst.iter().map(|&v| format_real(v)).collect();
            out.push_str(&vals.join(" "));
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_err(line: usize, message: impl Into<String>) -> MimlError {
    MimlError::Parse {
        line,
        message: message.into(),
    }
}

fn header_field(line: usize, token: Option<&str>, key: &str) -> Result<usize> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {key}= in header")))?;
    let value = token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected {key}=<n>, found {token:?}")))?;
    value.parse().map_err(|_| {
        parse_err(
            line,
            format!("{key} must be a non-negative integer, found {value:?}"),
        )
    })
}

/// Parses the canonical text form; every error carries its 1-based line number.
pub fn parse_dataset(text: &str) -> Result<MimlDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let mut tokens = header.split_whitespace();
    match tokens.next() {
        Some(DATASET_VERSION) => {}
        other => {
            return Err(parse_err(
                ln,
                format!("expected format tag {DATASET_VERSION}, found {other:?}"),
            ))
        }
    }
    let t = header_field(ln, tokens.next(), "T")?;
    let d = header_field(ln, tokens.next(), "d")?;
    let m = header_field(ln, tokens.next(), "m")?;
    if let Some(extra) = tokens.next() {
        return Err(parse_err(ln, format!("unexpected header field {extra:?}")));
    }
    if d == 0 {
        return Err(parse_err(ln, "d must be at least 1"));
    }

    let (ln, table) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing label table"))?;
    let mut tokens = table.split_whitespace();
    if tokens.next() != Some("labels") {
        return Err(parse_err(ln, "label table must start with 'labels'"));
    }
    let names: Vec<String> = tokens.map(str::to_owned).collect();
    if names.len() != t {
        return Err(parse_err(
            ln,
            format!(
                "header declares T={t} but the table has {} names",
                names.len()
            ),
        ));
    }
    let mut index = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if name.contains(',') || name.contains('|') {
            return Err(parse_err(
                ln,
                format!("label name {name:?} contains a reserved character"),
            ));
        }
        if index.insert(name.as_str(), i).is_some() {
            return Err(parse_err(ln, format!("duplicate label name {name:?}")));
        }
    }

    let mut examples = Vec::with_capacity(m);
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('|');
        let (Some(id), Some(labels), Some(body), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(parse_err(ln, "expected '<id> | <labels> | <instances>'"));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(parse_err(ln, "empty bag id"));
        }
        let mut set = Vec::new();
        for name in labels.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let &l = index
                .get(name)
                .ok_or_else(|| parse_err(ln, format!("unknown label {name:?}")))?;
            set.push(l);
        }
        let mut instances = Vec::new();
        for (j, chunk) in body.split(';').enumerate() {
            let inst: Vec<f64> = chunk
                .split_whitespace()
                .map(|v| {
                    f64::from_str(v)
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| parse_err(ln, format!("non-numeric feature {v:?}")))
                })
                .collect::<Result<_>>()?;
            if inst.len() != d {
                return Err(parse_err(
                    ln,
                    format!("instance {j} has {} features, expected {d}", inst.len()),
                ));
            }
            instances.push(inst);
        }
        examples.push(Example {
            bag: Bag::new(id, instances),
            labels: LabelSet::new(set),
        });
    }
    if examples.len() != m {
        return Err(parse_err(
            text.lines().count().max(1),
            format!("header declares m={m} but found {} records", examples.len()),
        ));
    }
    let ds = MimlDataset::new_unchecked(examples, t, d, names);
    let report = validate_dataset(&ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    Ok(ds)
}

/// Self-describing container for any fitted learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format: String,
    pub algorithm: String,
    pub hyperparameters: BTreeMap<String, String>,
    pub payload: serde_json::Value,
}

impl ModelEnvelope {
    pub fn wrap<P: Serialize>(
        algorithm: &str,
        hyperparameters: BTreeMap<String, String>,
        payload: &P,
    ) -> Result<Self> {
        if !ALGORITHMS.contains(&algorithm) {
            return Err(MimlError::ModelFormat(format!(
                "unknown algorithm tag {algorithm:?}"
            )));
        }
        let payload =
            serde_json::to_value(payload).map_err(|e| MimlError::ModelFormat(e.to_string()))?;
        Ok(Self {
            format: MODEL_VERSION.to_owned(),
            algorithm: algorithm.to_owned(),
            hyperparameters,
            payload,
        })
    }

    pub fn payload<P: DeserializeOwned>(&self) -> Result<P> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| MimlError::ModelFormat(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string(self).expect("envelope values are always serializable");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let env: Self =
            serde_json::from_str(text).map_err(|e| MimlError::ModelFormat(e.to_string()))?;
        if env.format != MODEL_VERSION {
            return Err(MimlError::ModelFormat(format!(
                "unsupported model format {:?}, expected {MODEL_VERSION}",
                env.format
            )));
        }
        if !ALGORITHMS.contains(&env.algorithm.as_str()) {
            return Err(MimlError::ModelFormat(format!(
                "unknown algorithm tag {:?}",
                env.algorithm
            )));
        }
        Ok(env)
    }
}

/// Flat `key=value` settings; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MimlError::Config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(MimlError::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(MimlError::Config(format!(
                    "line {}: duplicate key {k}",
                    i + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Typed lookup; `Ok(None)` when the key is absent.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| MimlError::Config(format!("bad value {v:?} for {key}"))),
        }
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(MimlError::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }

    /// Entries whose key starts with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}
