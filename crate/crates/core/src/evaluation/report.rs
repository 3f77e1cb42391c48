use std::collections::BTreeMap;

use super::cv::{fold_metrics, EvalConfig, FoldOutcome, FoldScores, Metric};
use super::ttest::{is_significant, paired_significance};
use crate::recommender::{Algorithm, CriteriaSource};

/// One (algorithm, source, metric, k) cell across folds.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub source: CriteriaSource,
    pub metric: Metric,
    pub k: usize,
    /// `None` where the fold failed or had no evaluable user.
    pub per_fold: Vec<Option<f64>>,
    /// Present only when every fold has a value.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Latent rows only: p-value against each baseline source, in
    /// [`CriteriaSource::BASELINES`] order.
    pub p_values: Vec<Option<f64>>,
    /// Latent rows only: every available p-value is below 0.05.
    pub star: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldUsers {
    pub fold: usize,
    pub test_users: usize,
    /// Users without a relevant held-out item; `None` if nothing ran.
    pub skipped_users: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub folds: usize,
    pub rows: Vec<ReportRow>,
    pub fold_users: Vec<FoldUsers>,
    pub failures: Vec<String>,
}

fn complete(values: &[Option<f64>]) -> Option<Vec<f64>> {
    values.iter().copied().collect()
}

impl EvalReport {
    pub fn assemble(eval: &EvalConfig, threshold: f64, outcomes: &[FoldOutcome]) -> Self {
        let mut failures = Vec::new();
        let mut scores: Vec<BTreeMap<(Algorithm, CriteriaSource), FoldScores>> = Vec::new();
        let mut fold_users = Vec::new();
        for o in outcomes {
            let mut fold_scores = BTreeMap::new();
            match &o.cells {
                Err(msg) => failures.push(format!("fold {}: {msg}", o.fold)),
                Ok(cells) => {
                    for (&(a, s), cell) in cells {
                        match cell {
                            Ok(preds) => {
                                fold_scores.insert((a, s), fold_metrics(preds, &eval.k_values, threshold));
                            }
                            Err(msg) => failures.push(format!("fold {} {a}/{s}: {msg}", o.fold)),
                        }
                    }
                }
            }
            fold_users.push(FoldUsers {
                fold: o.fold,
                test_users: o.test_users,
                skipped_users: fold_scores.values().next().map(|s| s.skipped_users),
            });
            scores.push(fold_scores);
        }

        let mut rows = Vec::new();
        for &algorithm in &eval.algorithms {
            for &source in &eval.sources {
                for metric in Metric::ALL {
                    for &k in &eval.k_values {
                        let per_fold: Vec<Option<f64>> = scores
                            .iter()
                            .map(|f| f.get(&(algorithm, source)).and_then(|s| s.values[&(metric, k)]))
                            .collect();
                        let (mean, std) = match complete(&per_fold) {
                            Some(v) => {
                                let n = v.len() as f64;
                                let mean = v.iter().sum::<f64>() / n;
                                let var = if v.len() > 1 {
                                    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                                } else {
                                    0.0
                                };
                                (Some(mean), Some(var.sqrt()))
                            }
                            None => (None, None),
                        };
                        rows.push(ReportRow {
                            algorithm,
                            source,
                            metric,
                            k,
                            per_fold,
                            mean,
                            std,
                            p_values: Vec::new(),
                            star: false,
                        });
                    }
                }
            }
        }

        let lookup: BTreeMap<(Algorithm, CriteriaSource, Metric, usize), Option<Vec<f64>>> = rows
            .iter()
            .map(|r| ((r.algorithm, r.source, r.metric, r.k), complete(&r.per_fold)))
            .collect();
        for r in rows.iter_mut().filter(|r| r.source == CriteriaSource::Latent) {
            let latent = complete(&r.per_fold);
            r.p_values = CriteriaSource::BASELINES
                .iter()
                .map(|&b| {
                    let base = lookup.get(&(r.algorithm, b, r.metric, r.k))?.as_ref()?;
                    paired_significance(latent.as_ref()?, base).ok()
                })
                .collect();
            let available: Vec<f64> = r.p_values.iter().flatten().copied().collect();
            r.star = !available.is_empty() && available.iter().all(|&p| is_significant(p));
        }

        Self {
            folds: outcomes.len(),
            rows,
            fold_users,
            failures,
        }
    }

    pub fn row(&self, algorithm: Algorithm, source: CriteriaSource, metric: Metric, k: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.source == source && r.metric == metric && r.k == k)
    }

    fn to_csv(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for rec in records {
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// `algorithm,source,metric,k,fold,value`; empty value for a missing cell.
    pub fn folds_csv(&self) -> String {
        Self::to_csv(
            &["algorithm", "source", "metric", "k", "fold", "value"],
            self.rows.iter().flat_map(|r| {
                r.per_fold.iter().enumerate().map(move |(f, v)| {
                    vec![
                        r.algorithm.label().to_string(),
                        r.source.label().to_string(),
                        r.metric.label().to_string(),
                        r.k.to_string(),
                        f.to_string(),
                        fmt(*v),
                    ]
                })
            }),
        )
    }

    /// One row per (algorithm, source, metric, k) with p-values of the latent
    /// source against each baseline.
    pub fn summary_csv(&self) -> String {
        let mut header = vec!["algorithm", "source", "metric", "k", "mean", "std"];
        let p_cols: Vec<String> = CriteriaSource::BASELINES
            .iter()
            .map(|b| format!("p_vs_{}", b.label()))
            .collect();
        header.extend(p_cols.iter().map(String::as_str));
        header.push("star");
        Self::to_csv(
            &header,
            self.rows.iter().map(|r| {
                let mut rec = vec![
                    r.algorithm.label().to_string(),
                    r.source.label().to_string(),
                    r.metric.label().to_string(),
                    r.k.to_string(),
                    fmt(r.mean),
                    fmt(r.std),
                ];
                for i in 0..CriteriaSource::BASELINES.len() {
                    rec.push(fmt(r.p_values.get(i).copied().flatten()));
                }
                rec.push(if r.star { "*".into() } else { String::new() });
                rec
            }),
        )
    }

    /// `fold,test_users,skipped_users`.
    pub fn users_csv(&self) -> String {
        Self::to_csv(
            &["fold", "test_users", "skipped_users"],
            self.fold_users.iter().map(|u| {
                vec![
                    u.fold.to_string(),
                    u.test_users.to_string(),
                    u.skipped_users.map(|s| s.to_string()).unwrap_or_default(),
                ]
            }),
        )
    }

    /// Algorithms x metrics by source, mean over folds; `*` marks latent
    /// cells significant against every baseline. Aspect-based ratings are
    /// not implemented and shown as `n/a`.
    pub fn render_table(&self) -> String {
        let columns = [
            Some(CriteriaSource::Explicit),
            Some(CriteriaSource::Overall),
            Some(CriteriaSource::Embedding),
            Some(CriteriaSource::Pca),
            None,
            Some(CriteriaSource::Latent),
        ];
        let mut out = format!("{:<10} {:<6}", "Algorithm", "Metric");
        for c in columns {
            out.push_str(&format!(" {:>10}", c.map_or("Aspect", |s| s.label())));
        }
        out.push('\n');
        let mut algorithms: Vec<Algorithm> = Vec::new();
        let mut keys: Vec<(Metric, usize)> = Vec::new();
        for r in &self.rows {
            if !algorithms.contains(&r.algorithm) {
                algorithms.push(r.algorithm);
            }
            if !keys.contains(&(r.metric, r.k)) {
                keys.push((r.metric, r.k));
            }
        }
        for a in algorithms {
            for &(m, k) in &keys {
                out.push_str(&format!("{:<10} {:<6}", a.label(), format!("{}@{k}", m.label())));
                for c in columns {
                    let cell = match c {
                        None => "n/a".to_string(),
                        Some(s) if !a.supports(s) => "n/a".to_string(),
                        Some(s) => match self.row(a, s, m, k) {
                            Some(ReportRow { mean: Some(v), star, .. }) => {
                                format!("{v:.4}{}", if *star { "*" } else { "" })
                            }
                            Some(_) => "-".to_string(),
                            None => "".to_string(),
                        },
                    };
                    out.push_str(&format!(" {cell:>10}"));
                }
                out.push('\n');
            }
        }
        if !self.failures.is_empty() {
            out.push_str(&format!("{} failed cell(s); see log\n", self.failures.len()));
        }
        out
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
