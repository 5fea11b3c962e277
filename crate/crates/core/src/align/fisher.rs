use std::collections::BTreeMap;

use crate::data::{CovarianceSet, SubjectId};
use crate::error::{Error, Result};
use crate::spd::{spd_log, vec_upper, TangentVector};

/// Action / subject scatter of tangent features.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherStats {
    pub within_action: f64,
    pub between_action: f64,
    pub within_subject: f64,
    pub between_subject: f64,
    pub class_means: BTreeMap<usize, Vec<f64>>,
    pub subject_means: BTreeMap<SubjectId, Vec<f64>>,
    pub global_mean: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn group_means<K: Ord + Copy>(z: &[TangentVector], keys: &[K]) -> BTreeMap<K, (usize, Vec<f64>)> {
    let p = z[0].coords.len();
    let mut acc: BTreeMap<K, (usize, Vec<f64>)> = BTreeMap::new();
    for (v, k) in z.iter().zip(keys) {
        let e = acc.entry(*k).or_insert_with(|| (0, vec![0.0; p]));
        e.0 += 1;
        for (s, x) in e.1.iter_mut().zip(&v.coords) {
            *s += x;
        }
    }
    for (n, m) in acc.values_mut() {
        for x in m.iter_mut() {
            *x /= *n as f64;
        }
    }
    acc
}

/// Within / between scatter `(1/N) Σ ‖zᵢ − μ_{g(i)}‖²` and `(1/N) Σ_g n_g ‖μ_g − μ‖²`
/// for both action and subject groupings.
pub fn fisher_stats(z: &[TangentVector], actions: &[usize], subjects: &[SubjectId]) -> Result<FisherStats> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actions.len() != z.len() || subjects.len() != z.len() {
        return Err(Error::Shape(format!(
            "{} features, {} action labels, {} subject labels",
            z.len(),
            actions.len(),
            subjects.len()
        )));
    }
    let p = z[0].coords.len();
    if z.iter().any(|v| v.coords.len() != p) {
        return Err(Error::Shape("tangent features differ in length".into()));
    }
    let n = z.len() as f64;
    let mut global = vec![0.0; p];
    for v in z {
        for (g, x) in global.iter_mut().zip(&v.coords) {
            *g += x;
        }
    }
    for g in global.iter_mut() {
        *g /= n;
    }

    let by_action = group_means(z, actions);
    let by_subject = group_means(z, subjects);
    let within = |means: &dyn Fn(usize) -> Vec<f64>| -> f64 {
        z.iter().enumerate().map(|(i, v)| sq_dist(&v.coords, &means(i))).sum::<f64>() / n
    };
    let within_action = within(&|i| by_action[&actions[i]].1.clone());
    let within_subject = within(&|i| by_subject[&subjects[i]].1.clone());
    let between_action = by_action
        .values()
        .map(|(c, m)| *c as f64 * sq_dist(m, &global))
        .sum::<f64>()
        / n;
    let between_subject = by_subject
        .values()
        .map(|(c, m)| *c as f64 * sq_dist(m, &global))
        .sum::<f64>()
        / n;
    Ok(FisherStats {
        within_action,
        between_action,
        within_subject,
        between_subject,
        class_means: by_action.into_iter().map(|(k, (_, m))| (k, m)).collect(),
        subject_means: by_subject.into_iter().map(|(k, (_, m))| (k, m)).collect(),
        global_mean: global,
    })
}

/// `vec_upper(log C)` for every item.
pub fn log_features(ds: &CovarianceSet) -> Result<Vec<TangentVector>> {
    ds.items().iter().map(|it| Ok(vec_upper(&spd_log(&it.cov)?))).collect()
}

/// [`fisher_stats`] of the log features of a labelled set.
pub fn dataset_fisher_stats(ds: &CovarianceSet) -> Result<FisherStats> {
    fisher_stats(&log_features(ds)?, &ds.labels(), &ds.subject_ids())
}
