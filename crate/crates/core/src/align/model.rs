use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dcr::{dcr_apply, dcr_fit, DcrHyper, DcrModel};
use super::ra::{ra_apply, ra_fit, RaModel, RaScope, Reference, ReferenceMean};
use super::rifu::{rifu_apply, rifu_fit, RifuConfig, RifuModel};
use super::rpa::{rpa_apply, rpa_fit, RpaDispersion, RpaModel, RpaSubject};
use crate::container::ModelFile;
use crate::data::{CovarianceSet, SubjectId};
use crate::error::{Error, Result};
use crate::nets::UNet;
use crate::spd::{Mat, SpdMatrix};

const MAGIC: &[u8; 4] = b"ALGN";

/// One configured alignment stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlignStep {
    Ra {
        #[serde(default)]
        scope: RaScope,
        #[serde(default)]
        mean: ReferenceMean,
    },
    Rpa {
        #[serde(default)]
        dispersion: RpaDispersion,
    },
    Dcr(#[serde(default)] DcrHyper),
    Rifu(#[serde(default)] RifuConfig),
}

/// Fitted stage plus training diagnostics.
#[derive(Clone, Debug)]
pub struct AlignFit {
    pub model: AlignerModel,
    pub losses: Vec<f64>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

impl AlignStep {
    pub fn name(&self) -> &'static str {
        match self {
            AlignStep::Ra { .. } => "ra",
            AlignStep::Rpa { .. } => "rpa",
            AlignStep::Dcr(_) => "dcr",
            AlignStep::Rifu(_) => "rifu",
        }
    }

    /// Whether fitting reads action labels.
    pub fn supervised(&self) -> bool {
        matches!(self, AlignStep::Dcr(_) | AlignStep::Rifu(_))
    }

    /// Fits on `train`; `seed` replaces the configured training seed.
    pub fn fit(&self, train: &CovarianceSet, seed: Option<u64>) -> Result<AlignFit> {
        let plain = |model| AlignFit {
            model,
            losses: Vec::new(),
            initial_loss: None,
            final_loss: None,
        };
        Ok(match self {
            AlignStep::Ra { scope, mean } => plain(AlignerModel::Ra(ra_fit(train, *scope, *mean)?)),
            AlignStep::Rpa { dispersion } => plain(AlignerModel::Rpa(rpa_fit(train, *dispersion)?)),
            AlignStep::Dcr(h) => {
                let mut h = h.clone();
                if let Some(s) = seed {
                    h.train.seed = s;
                }
                let fit = dcr_fit(train, &h)?;
                AlignFit {
                    model: AlignerModel::Dcr(fit.model),
                    losses: fit.trace.losses,
                    initial_loss: Some(fit.initial_loss),
                    final_loss: Some(fit.final_loss),
                }
            }
            AlignStep::Rifu(c) => {
                let mut c = c.clone();
                if let Some(s) = seed {
                    c.train.seed = s;
                }
                let fit = rifu_fit(train, &c)?;
                AlignFit {
                    model: AlignerModel::Rifu(fit.model),
                    losses: fit.trace.losses,
                    initial_loss: None,
                    final_loss: None,
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlignerModel {
    Ra(RaModel),
    Rpa(RpaModel),
    Dcr(DcrModel),
    Rifu(RifuModel),
}

#[derive(Serialize, Deserialize)]
struct RaMeta {
    scope: RaScope,
    mean: ReferenceMean,
    subjects: Vec<SubjectId>,
}

#[derive(Serialize, Deserialize)]
struct RpaMeta {
    dispersion: RpaDispersion,
    subjects: Vec<SubjectId>,
}

fn spd_block(m: Mat, what: &str) -> Result<SpdMatrix> {
    SpdMatrix::new(m).map_err(|e| Error::format(0, None, format!("block `{what}`: {e}")))
}

impl AlignerModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AlignerModel::Ra(_) => "ra",
            AlignerModel::Rpa(_) => "rpa",
            AlignerModel::Dcr(_) => "dcr",
            AlignerModel::Rifu(_) => "rifu",
        }
    }

    pub fn apply(&self, ds: &CovarianceSet) -> Result<CovarianceSet> {
        match self {
            AlignerModel::Ra(m) => ra_apply(m, ds),
            AlignerModel::Rpa(m) => rpa_apply(m, ds),
            AlignerModel::Dcr(m) => dcr_apply(m, ds),
            AlignerModel::Rifu(m) => rifu_apply(m, ds),
        }
    }

    /// Label-free per-subject fitting for subjects the model has not seen.
    /// Learned stages are global and return an empty list.
    pub fn fit_unseen(&mut self, ds: &CovarianceSet) -> Result<Vec<SubjectId>> {
        match self {
            AlignerModel::Ra(m) => m.fit_unseen(ds),
            AlignerModel::Rpa(m) => m.fit_unseen(ds),
            AlignerModel::Dcr(_) | AlignerModel::Rifu(_) => Ok(Vec::new()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let file = match self {
            AlignerModel::Ra(m) => {
                let (subjects, refs): (Vec<SubjectId>, Vec<&Reference>) = match &m.global {
                    Some(g) => (Vec::new(), vec![g]),
                    None => m.references.iter().map(|(s, r)| (*s, r)).unzip(),
                };
                let dim = refs.first().map_or(0, |r| r.reference.dim());
                ModelFile {
                    kind: 1,
                    dim: dim as u32,
                    meta: serde_json::to_string(&RaMeta {
                        scope: m.scope,
                        mean: m.mean,
                        subjects,
                    })?,
                    blocks: refs
                        .iter()
                        .flat_map(|r| [r.reference.as_mat().clone(), r.whitener.clone()])
                        .collect(),
                }
            }
            AlignerModel::Rpa(m) => ModelFile {
                kind: 2,
                dim: m.subjects.values().next().map_or(0, |s| s.mean.dim()) as u32,
                meta: serde_json::to_string(&RpaMeta {
                    dispersion: m.dispersion,
                    subjects: m.subjects.keys().copied().collect(),
                })?,
                blocks: m
                    .subjects
                    .values()
                    .flat_map(|s| {
                        [
                            s.mean.as_mat().clone(),
                            s.dispersion.as_mat().clone(),
                            s.rotation.clone(),
                            s.mean_isqrt.clone(),
                            s.dispersion_isqrt.clone(),
                        ]
                    })
                    .collect(),
            },
            AlignerModel::Dcr(m) => ModelFile {
                kind: 3,
                dim: m.dim() as u32,
                meta: "{}".into(),
                blocks: vec![m.generator.clone(), Mat::from_element(1, 1, m.raw_scale)],
            },
            AlignerModel::Rifu(m) => ModelFile {
                kind: 4,
                dim: m.net.input_dim() as u32,
                meta: serde_json::to_string(&m.config)?,
                blocks: m.net.enc.iter().chain(&m.net.dec).cloned().collect(),
            },
        };
        file.encode(MAGIC)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut file = ModelFile::decode(MAGIC, bytes)?;
        let d = file.dim as usize;
        let mut blocks = file.take_blocks();
        let model = match file.kind {
            1 => {
                let meta: RaMeta = serde_json::from_str(&file.meta)?;
                let mut read_ref = |what: &str| -> Result<Reference> {
                    Ok(Reference {
                        reference: spd_block(blocks.next(d, d, what)?, what)?,
                        whitener: blocks.next(d, d, what)?,
                    })
                };
                let mut model = RaModel {
                    scope: meta.scope,
                    mean: meta.mean,
                    references: Default::default(),
                    global: None,
                };
                if meta.scope == RaScope::TrainGlobal {
                    model.global = Some(read_ref("global reference")?);
                } else {
                    for s in meta.subjects {
                        model.references.insert(s, read_ref("subject reference")?);
                    }
                }
                AlignerModel::Ra(model)
            }
            2 => {
                let meta: RpaMeta = serde_json::from_str(&file.meta)?;
                let mut model = RpaModel {
                    dispersion: meta.dispersion,
                    subjects: Default::default(),
                };
                for s in meta.subjects {
                    let sub = RpaSubject {
                        mean: spd_block(blocks.next(d, d, "mean")?, "mean")?,
                        dispersion: spd_block(blocks.next(d, d, "dispersion")?, "dispersion")?,
                        rotation: blocks.next(d, d, "rotation")?,
                        mean_isqrt: blocks.next(d, d, "mean whitener")?,
                        dispersion_isqrt: blocks.next(d, d, "dispersion whitener")?,
                    };
                    model.subjects.insert(s, sub);
                }
                AlignerModel::Rpa(model)
            }
            3 => AlignerModel::Dcr(DcrModel {
                generator: blocks.next(d, d, "generator")?,
                raw_scale: blocks.next(1, 1, "raw scale")?[(0, 0)],
            }),
            4 => {
                let config: RifuConfig = serde_json::from_str(&file.meta)?;
                let dims = config.dims_for(d)?;
                let enc = dims
                    .windows(2)
                    .map(|w| blocks.next(w[0], w[1], "encoder"))
                    .collect::<Result<Vec<_>>>()?;
                let dec = dims
                    .windows(2)
                    .map(|w| blocks.next(w[1], w[0], "decoder"))
                    .collect::<Result<Vec<_>>>()?;
                AlignerModel::Rifu(RifuModel {
                    net: UNet { dims, enc, dec },
                    config,
                })
            }
            k => return Err(Error::format(8, None, format!("unknown aligner kind {k}"))),
        };
        blocks.finish()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
