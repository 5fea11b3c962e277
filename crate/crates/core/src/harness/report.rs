use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::loso::{FoldOutcome, LosoRun};
use super::table::{emit_table, TableColumn};
use crate::data::SubjectId;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject: SubjectId,
    /// Percent; absent when the fold failed.
    pub accuracy: Option<f64>,
    pub n_test: usize,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub dcr_initial_loss: Option<f64>,
    pub dcr_final_loss: Option<f64>,
    pub error: Option<String>,
}

/// Outcome of one leave-one-subject-out run. Contains nothing time-dependent,
/// so identical inputs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub pipeline: String,
    pub fingerprint: String,
    pub seed: u64,
    pub n_classes: usize,
    pub subjects: Vec<SubjectRow>,
    /// Over successful folds.
    pub mean: Option<f64>,
    /// Population standard deviation over successful folds.
    pub std: Option<f64>,
    pub failed: Vec<SubjectId>,
}

/// `sqrt(Σ(x − x̄)² / n)`.
pub fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl LosoReport {
    pub(crate) fn from_outcomes(cfg: &RunConfig, n_classes: usize, outcomes: &[FoldOutcome]) -> Result<Self> {
        let subjects: Vec<SubjectRow> = outcomes.iter().map(|o| SubjectRow::from_outcome(o, n_classes)).collect();
        let accs: Vec<f64> = subjects.iter().filter_map(|r| r.accuracy).collect();
        let (mean, std) = if accs.is_empty() {
            (None, None)
        } else {
            (Some(accs.iter().sum::<f64>() / accs.len() as f64), Some(population_std(&accs)))
        };
        Ok(Self {
            pipeline: cfg.label(),
            fingerprint: cfg.fingerprint()?,
            seed: cfg.seed(),
            n_classes,
            failed: subjects.iter().filter(|r| r.error.is_some()).map(|r| r.subject).collect(),
            subjects,
            mean,
            std,
        })
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.subjects.iter().filter_map(|r| r.accuracy).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Successful folds as a table column named after the pipeline.
    pub fn column(&self) -> TableColumn {
        TableColumn {
            name: self.pipeline.clone(),
            rows: self
                .subjects
                .iter()
                .filter_map(|r| r.accuracy.map(|a| (r.subject.to_string(), a)))
                .collect(),
        }
    }
}

fn confusion_csv(row: &SubjectRow) -> String {
    let k = row.confusion.len();
    let mut out = String::from("true\\pred");
    for j in 0..k {
        out.push_str(&format!(",{j}"));
    }
    out.push('\n');
    for (i, r) in row.confusion.iter().enumerate() {
        out.push_str(&i.to_string());
        for c in r {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

impl LosoRun {
    /// Writes `report.json`, `table.txt`, `table.csv`, `confusion_<subject>.csv`
    /// and `timing.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report.to_json()?)?;
        let col = self.report.column();
        if !col.rows.is_empty() {
            let (text, csv) = emit_table(&[col])?;
            fs::write(dir.join("table.txt"), text)?;
            fs::write(dir.join("table.csv"), csv)?;
        }
        for row in self.report.subjects.iter().filter(|r| r.error.is_none()) {
            fs::write(dir.join(format!("confusion_{}.csv", row.subject)), confusion_csv(row))?;
        }
        let timing: Vec<serde_json::Value> = self
            .fold_seconds
            .iter()
            .map(|(s, t)| serde_json::json!({"subject": s, "seconds": t}))
            .collect();
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std_of_known_values() {
        assert_eq!(population_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), 2.0);
        assert_eq!(population_std(&[61.81]), 0.0);
    }

    #[test]
    fn confusion_layout() {
        let row = SubjectRow {
            subject: SubjectId(3),
            accuracy: Some(50.0),
            n_test: 4,
            confusion: vec![vec![1, 1], vec![1, 1]],
            dcr_initial_loss: None,
            dcr_final_loss: None,
            error: None,
        };
        assert_eq!(confusion_csv(&row), "true\\pred,0,1\n0,1,1\n1,1,1\n");
    }
}
