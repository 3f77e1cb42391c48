use std::collections::HashMap;

use super::ami::adjusted_mutual_info;
use crate::compressor::LatentRatingTable;
use crate::ingest::Review;
use crate::{Error, Result};

/// Best-matching explicit criterion for one code dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeAlignment {
    /// 1-based code dimension.
    pub code: usize,
    pub criterion: String,
    pub ami: f64,
}

/// For each code dimension, the explicit criterion with the highest adjusted
/// mutual information (ties to the first criterion name).
pub fn code_alignment(codes: &LatentRatingTable, reviews: &[Review]) -> Result<Vec<CodeAlignment>> {
    let by_id: HashMap<&str, &Review> = reviews.iter().map(|r| (r.review_id.as_str(), r)).collect();
    let joined: Vec<(&[u32], &Review)> = codes
        .entries
        .iter()
        .map(|e| {
            by_id
                .get(e.review_id.as_str())
                .map(|r| (e.code.as_slice(), *r))
                .ok_or_else(|| Error::invalid(format!("no review with id {}", e.review_id)))
        })
        .collect::<Result<_>>()?;
    let names: Vec<String> = joined
        .first()
        .map(|(_, r)| r.criteria.keys().cloned().collect())
        .unwrap_or_default();
    if names.is_empty() {
        return Err(Error::invalid("code alignment needs reviews with explicit criteria"));
    }
    // half-star values stay distinct labels
    let criterion_labels: Vec<Vec<i64>> = names
        .iter()
        .map(|n| {
            joined
                .iter()
                .map(|(_, r)| r.criteria.get(n).map_or(i64::MIN, |v| (v * 2.0).round() as i64))
                .collect()
        })
        .collect();
    Ok((0..codes.k)
        .map(|d| {
            let code_labels: Vec<u32> = joined.iter().map(|(c, _)| c[d]).collect();
            let mut best = CodeAlignment {
                code: d + 1,
                criterion: names[0].clone(),
                ami: f64::NEG_INFINITY,
            };
            for (name, labels) in names.iter().zip(&criterion_labels) {
                let ami = adjusted_mutual_info(&code_labels, labels);
                if ami > best.ami {
                    best.ami = ami;
                    best.criterion = name.clone();
                }
            }
            best
        })
        .collect())
}

pub fn alignment_csv(rows: &[CodeAlignment]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["code", "criterion", "ami"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.code.to_string(), r.criterion.clone(), r.ami.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
