use super::{CovarianceSet, SubjectId};
use crate::error::{Error, Result};

/// One leave-one-subject-out fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LosoSplit {
    pub held_out: SubjectId,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per subject, in ascending subject order.
pub fn loso_splits(ds: &CovarianceSet) -> Result<Vec<LosoSplit>> {
    let subjects = ds.subjects();
    if subjects.len() < 2 {
        return Err(Error::InsufficientSubjects(subjects.len()));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.len()).partition(|&i| ds.items()[i].subject == s);
            LosoSplit {
                held_out: s,
                train,
                test,
            }
        })
        .collect())
}
