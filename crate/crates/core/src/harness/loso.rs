use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::report::{LosoReport, SubjectRow};
use crate::align::{AlignStep, AlignerModel};
use crate::data::{loso_splits, CovItem, CovarianceSet, LosoSplit, SubjectId};
use crate::error::{Error, Result};

/// One estimator fit, recorded for the zero-shot audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditEntry {
    pub fold: SubjectId,
    pub stage: String,
    /// Whether the estimator read action labels.
    pub supervised: bool,
    pub subjects: Vec<SubjectId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub subject: SubjectId,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    /// (initial, final) DCR loss when the pipeline has a DCR stage.
    pub dcr_losses: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FoldOutcome {
    Done(FoldResult),
    Failed { subject: SubjectId, error: String },
}

/// Report plus the parts that are not reproducible or not reported.
#[derive(Clone, Debug)]
pub struct LosoRun {
    pub report: LosoReport,
    pub audit: Vec<AuditEntry>,
    /// Wall-clock seconds per fold, in fold order.
    pub fold_seconds: Vec<(SubjectId, f64)>,
}

impl LosoRun {
    pub fn failed(&self) -> bool {
        !self.report.failed.is_empty()
    }
}

struct Audit {
    fold: SubjectId,
    entries: Vec<AuditEntry>,
}

impl Audit {
    /// Logs a fit and refuses supervised fits that see the held-out subject.
    fn record(&mut self, stage: &str, supervised: bool, ds: &CovarianceSet) -> Result<()> {
        let subjects = ds.subjects();
        if supervised && subjects.contains(&self.fold) {
            return Err(Error::ZeroShotViolation(format!(
                "fold {}: supervised stage `{stage}` received held-out items",
                self.fold
            )));
        }
        info!("fold {}: fit {stage} (supervised={supervised}) on subjects {subjects:?}", self.fold);
        self.entries.push(AuditEntry {
            fold: self.fold,
            stage: stage.to_string(),
            supervised,
            subjects,
        });
        Ok(())
    }
}

/// Test items with their labels hidden.
fn masked(ds: &CovarianceSet) -> Result<CovarianceSet> {
    let items = ds
        .items()
        .iter()
        .map(|it| CovItem {
            label: 0,
            ..it.clone()
        })
        .collect();
    CovarianceSet::new(ds.dim(), items)
}

fn run_fold(
    cfg: &RunConfig,
    steps: &[AlignStep],
    ds: &CovarianceSet,
    split: &LosoSplit,
) -> (Result<FoldResult>, Vec<AuditEntry>) {
    let mut audit = Audit {
        fold: split.held_out,
        entries: Vec::new(),
    };
    let res = fold_inner(cfg, steps, ds, split, &mut audit);
    (res, audit.entries)
}

fn fold_inner(
    cfg: &RunConfig,
    steps: &[AlignStep],
    ds: &CovarianceSet,
    split: &LosoSplit,
    audit: &mut Audit,
) -> Result<FoldResult> {
    let seed = cfg.seed().wrapping_add(split.held_out.0 as u64);
    let mut train = ds.subset(&split.train);
    let held_out = ds.subset(&split.test);
    let truth = held_out.labels();
    let mut test = masked(&held_out)?;
    let mut dcr_losses = None;

    for step in steps {
        audit.record(step.name(), step.supervised(), &train)?;
        let fit = step.fit(&train, Some(seed))?;
        if let (AlignStep::Dcr(_), Some(a), Some(b)) = (step, fit.initial_loss, fit.final_loss) {
            dcr_losses = Some((a, b));
        }
        let mut model: AlignerModel = fit.model;
        train = model.apply(&train)?;
        let added = model.fit_unseen(&test)?;
        if !added.is_empty() {
            audit.record(&format!("{} (unlabelled test reference)", step.name()), false, &test)?;
        }
        test = model.apply(&test)?;
    }

    let spec = cfg.effective_classifier();
    audit.record(spec.name(), true, &train)?;
    let fit = spec.fit(&train, Some(seed))?;
    let pred = fit.model.predict(&test)?;
    Ok(FoldResult {
        subject: split.held_out,
        truth,
        predicted: pred.labels,
        dcr_losses,
    })
}

/// Leave-one-subject-out evaluation.
///
/// Folds run on `jobs` threads; each fold's seed is `seed + subject id`, so the
/// report does not depend on `jobs`. A fold that fails numerically is marked and
/// the run continues; a zero-shot violation aborts the run.
pub fn run_loso(cfg: &RunConfig, ds: &CovarianceSet, jobs: usize) -> Result<LosoRun> {
    cfg.validate()?;
    let splits = loso_splits(ds)?;
    let steps = cfg.effective_align();
    let fold = |split: &LosoSplit| {
        let t0 = Instant::now();
        let (res, audit) = run_fold(cfg, &steps, ds, split);
        (res, audit, t0.elapsed().as_secs_f64())
    };
    let results: Vec<_> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| splits.par_iter().map(fold).collect())
    } else {
        splits.iter().map(fold).collect()
    };

    let mut outcomes = Vec::with_capacity(results.len());
    let mut audit = Vec::new();
    let mut fold_seconds = Vec::new();
    for (split, (res, entries, secs)) in splits.iter().zip(results) {
        audit.extend(entries);
        fold_seconds.push((split.held_out, secs));
        outcomes.push(match res {
            Ok(r) => FoldOutcome::Done(r),
            Err(e @ Error::ZeroShotViolation(_)) => return Err(e),
            Err(e) => {
                warn!("fold {} failed: {e}", split.held_out);
                FoldOutcome::Failed {
                    subject: split.held_out,
                    error: e.to_string(),
                }
            }
        });
    }
    let report = LosoReport::from_outcomes(cfg, ds.n_classes(), &outcomes)?;
    Ok(LosoRun {
        report,
        audit,
        fold_seconds,
    })
}

/// Accuracy in percent and the `k × k` confusion matrix (rows: truth).
pub fn score(truth: &[usize], predicted: &[usize], k: usize) -> (f64, Vec<Vec<usize>>) {
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t < k && p < k {
            confusion[t][p] += 1;
        }
        correct += usize::from(t == p);
    }
    let acc = if truth.is_empty() {
        0.0
    } else {
        100.0 * correct as f64 / truth.len() as f64
    };
    (acc, confusion)
}

impl SubjectRow {
    pub(crate) fn from_outcome(o: &FoldOutcome, k: usize) -> Self {
        match o {
            FoldOutcome::Done(r) => {
                let (acc, confusion) = score(&r.truth, &r.predicted, k);
                SubjectRow {
                    subject: r.subject,
                    accuracy: Some(acc),
                    n_test: r.truth.len(),
                    confusion,
                    dcr_initial_loss: r.dcr_losses.map(|l| l.0),
                    dcr_final_loss: r.dcr_losses.map(|l| l.1),
                    error: None,
                }
            }
            FoldOutcome::Failed { subject, error } => SubjectRow {
                subject: *subject,
                accuracy: None,
                n_test: 0,
                confusion: Vec::new(),
                dcr_initial_loss: None,
                dcr_final_loss: None,
                error: Some(error.clone()),
            },
        }
    }
}
