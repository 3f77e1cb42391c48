use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One user-item interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub user_id: String,
    pub item_id: String,
    /// Overall rating on `1..=m_rating` (integer or half-star).
    #[serde(rename = "stars")]
    pub overall: f64,
    /// Explicit criterion ratings keyed by criterion name; empty when absent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub criteria: BTreeMap<String, f64>,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
}

impl Review {
    /// Checks the rating-range and identifier invariants.
    pub fn validate(&self, m_rating: u32) -> std::result::Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if self.item_id.is_empty() {
            return Err("empty item_id".into());
        }
        let hi = m_rating as f64;
        let in_range = |v: f64| v.is_finite() && (1.0..=hi).contains(&v);
        if !in_range(self.overall) {
            return Err(format!("rating {} outside [1, {m_rating}]", self.overall));
        }
        for (name, &v) in &self.criteria {
            if !in_range(v) {
                return Err(format!("criterion `{name}` = {v} outside [1, {m_rating}]"));
            }
        }
        Ok(())
    }

    /// Explicit criteria in name order.
    pub fn criteria_vector(&self) -> Vec<f64> {
        self.criteria.values().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewFormat {
    Jsonl,
    Csv,
}

impl FromStr for ReviewFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json-lines" | "jsonlines" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(Error::invalid(format!("unknown review format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Parsed reviews plus one entry per rejected record.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub reviews: Vec<Review>,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
struct JsonRecord {
    review_id: Option<String>,
    user_id: Option<serde_json::Value>,
    item_id: Option<serde_json::Value>,
    stars: Option<f64>,
    text: Option<String>,
    #[serde(default)]
    criteria: BTreeMap<String, f64>,
    timestamp: Option<i64>,
}

fn id_string(v: Option<serde_json::Value>, key: &str) -> std::result::Result<String, String> {
    match v {
        Some(serde_json::Value::String(s)) => Ok(s),
        Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(format!("`{key}` must be a string")),
        None => Err(format!("missing `{key}`")),
    }
}

/// Loads a review file. Malformed records are collected in
/// [`LoadReport::errors`] with their 1-based line number and logged.
pub fn load_reviews(path: &Path, format: ReviewFormat, m_rating: u32) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report = match format {
        ReviewFormat::Jsonl => load_jsonl(BufReader::new(file), path, m_rating)?,
        ReviewFormat::Csv => load_csv(file, path, m_rating)?,
    };
    if !report.errors.is_empty() {
        log::warn!(
            "{}: {} malformed record(s) skipped (first at line {})",
            path.display(),
            report.errors.len(),
            report.errors[0].line
        );
    }
    Ok(report)
}

fn load_jsonl<R: BufRead>(reader: R, path: &Path, m_rating: u32) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_json_record(&line, lineno, m_rating) {
            Ok(r) => report.reviews.push(r),
            Err(message) => report.errors.push(RecordError {
                line: lineno,
                message,
            }),
        }
    }
    Ok(report)
}

fn parse_json_record(line: &str, lineno: usize, m_rating: u32) -> std::result::Result<Review, String> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let review = Review {
        review_id: rec.review_id.unwrap_or_else(|| format!("r{lineno}")),
        user_id: id_string(rec.user_id, "user_id")?,
        item_id: id_string(rec.item_id, "item_id")?,
        overall: rec.stars.ok_or("missing `stars`")?,
        criteria: rec.criteria,
        text: rec.text.unwrap_or_default(),
        timestamp: rec.timestamp,
    };
    review.validate(m_rating)?;
    Ok(review)
}

fn load_csv(file: File, path: &Path, m_rating: u32) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let expected = ["user_id", "item_id", "stars"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            "CSV header must start with user_id,item_id,stars",
        ));
    }
    let criteria_names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    let mut report = LoadReport::default();
    for (idx, rec) in reader.records().enumerate() {
        // header is line 1
        let lineno = idx + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            if rec.len() != headers.len() {
                return Err(format!("expected {} fields, found {}", headers.len(), rec.len()));
            }
            let num = |s: &str, what: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("`{what}` is not a number: {s:?}"))
            };
            let mut criteria = BTreeMap::new();
            for (name, v) in criteria_names.iter().zip(rec.iter().skip(3)) {
                criteria.insert(name.clone(), num(v, name)?);
            }
            let review = Review {
                review_id: format!("r{lineno}"),
                user_id: rec[0].trim().to_string(),
                item_id: rec[1].trim().to_string(),
                overall: num(&rec[2], "stars")?,
                criteria,
                text: String::new(),
                timestamp: None,
            };
            review.validate(m_rating)?;
            Ok(review)
        });
        match parsed {
            Ok(r) => report.reviews.push(r),
            Err(message) => report.errors.push(RecordError {
                line: lineno,
                message,
            }),
        }
    }
    Ok(report)
}

/// Writes reviews as JSON Lines, one object per review, in the same schema
/// accepted by [`load_reviews`].
pub fn write_reviews_jsonl(path: &Path, reviews: &[Review]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in reviews {
        let line = serde_json::to_string(r).expect("review serialises");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Strict reader for files produced by [`write_reviews_jsonl`]: any malformed
/// record is an error.
pub fn read_reviews_jsonl(path: &Path, m_rating: u32) -> Result<Vec<Review>> {
    let report = load_reviews(path, ReviewFormat::Jsonl, m_rating)?;
    if let Some(e) = report.errors.first() {
        return Err(Error::Record {
            path: PathBuf::from(path),
            line: e.line,
            message: e.message.clone(),
        });
    }
    Ok(report.reviews)
}
