use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csp::{csp_fit, CspConfig, CspModel};
use super::dcnet::{dcnet_fit, DcNetConfig, DcNetModel};
use super::lda::{tsa_lda_fit, LdaConfig, LdaModel, TsaLdaModel};
use super::mdm::{mdm_fit, MdmConfig, MdmModel};
use super::rifunet::{rifunet_fit, RifuNetConfig, RifuNetModel};
use super::tslr::{tslr_fit, TslrConfig, TslrModel};
use super::TangentMap;
use crate::container::{BlockCursor, ModelFile};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::UNet;
use crate::spd::{tangent_len, Mat, SpdMatrix};

const MAGIC: &[u8; 4] = b"CLSF";

/// Classifier choice with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Mdm(#[serde(default)] MdmConfig),
    Tslr(#[serde(default)] TslrConfig),
    TsaLda(#[serde(default)] LdaConfig),
    CspLda(#[serde(default)] CspConfig),
    Dcnet(#[serde(default)] DcNetConfig),
    Rifunet(#[serde(default)] RifuNetConfig),
}

/// Predicted labels, with class probabilities where the model defines them.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probabilities: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct ClassifierFit {
    pub model: Classifier,
    pub losses: Vec<f64>,
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Mdm(_) => "mdm",
            ClassifierSpec::Tslr(_) => "tslr",
            ClassifierSpec::TsaLda(_) => "tsa-lda",
            ClassifierSpec::CspLda(c) if c.z_score => "csp-lda-z",
            ClassifierSpec::CspLda(_) => "csp-lda",
            ClassifierSpec::Dcnet(_) => "dcnet",
            ClassifierSpec::Rifunet(_) => "rifunet",
        }
    }

    /// Fits on `train`; `seed` replaces the configured training seed of trained models.
    pub fn fit(&self, train: &CovarianceSet, seed: Option<u64>) -> Result<ClassifierFit> {
        if train.is_empty() {
            return Err(Error::EmptyInput);
        }
        let plain = |model| ClassifierFit { model, losses: Vec::new() };
        Ok(match self {
            ClassifierSpec::Mdm(c) => plain(Classifier::Mdm(mdm_fit(train, c)?)),
            ClassifierSpec::Tslr(c) => {
                let mut c = c.clone();
                if let Some(s) = seed {
                    c.train.seed = s;
                }
                let (m, trace) = tslr_fit(train, &c)?;
                ClassifierFit { model: Classifier::Tslr(m), losses: trace.losses }
            }
            ClassifierSpec::TsaLda(c) => plain(Classifier::TsaLda(tsa_lda_fit(train, c)?)),
            ClassifierSpec::CspLda(c) => plain(Classifier::CspLda(csp_fit(train, c)?)),
            ClassifierSpec::Dcnet(c) => {
                let mut c = c.clone();
                if let Some(s) = seed {
                    c.train.seed = s;
                }
                let (m, trace) = dcnet_fit(train, &c)?;
                ClassifierFit { model: Classifier::Dcnet(m), losses: trace.losses }
            }
            ClassifierSpec::Rifunet(c) => {
                let mut c = c.clone();
                if let Some(s) = seed {
                    c.train.seed = s;
                }
                let (m, trace) = rifunet_fit(train, &c)?;
                ClassifierFit { model: Classifier::Rifunet(m), losses: trace.losses }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Mdm(MdmModel),
    Tslr(TslrModel),
    TsaLda(TsaLdaModel),
    CspLda(CspModel),
    Dcnet(DcNetModel),
    Rifunet(RifuNetModel),
}

#[derive(Serialize, Deserialize)]
struct MdmMeta {
    classes: usize,
}

#[derive(Serialize, Deserialize)]
struct CspMeta {
    z_score: bool,
}

#[derive(Serialize, Deserialize)]
struct RifuNetMeta {
    dims: Vec<usize>,
    base: super::TslrBase,
}

#[derive(Serialize, Deserialize)]
struct DcNetMeta {
    layers: usize,
    eps: f64,
}

fn lda_blocks(lda: &LdaModel) -> Vec<Mat> {
    vec![
        lda.means.clone(),
        lda.sigma.clone(),
        Mat::from_row_slice(1, lda.log_priors.len(), &lda.log_priors),
        lda.coef.clone(),
        Mat::from_row_slice(1, lda.intercept.len(), &lda.intercept),
    ]
}

fn read_lda(blocks: &mut BlockCursor, p: usize) -> Result<LdaModel> {
    let means = blocks.any("class means")?;
    let k = means.nrows();
    if means.ncols() != p {
        return Err(Error::format(0, None, format!("class means have {} features, expected {p}", means.ncols())));
    }
    Ok(LdaModel {
        means,
        sigma: blocks.next(p, p, "covariance")?,
        log_priors: blocks.next(1, k, "log priors")?.iter().copied().collect(),
        coef: blocks.next(k, p, "coefficients")?,
        intercept: blocks.next(1, k, "intercepts")?.iter().copied().collect(),
    })
}

fn spd_block(m: Mat, what: &str) -> Result<SpdMatrix> {
    SpdMatrix::new(m).map_err(|e| Error::format(0, None, format!("block `{what}`: {e}")))
}

fn read_tangent(blocks: &mut BlockCursor, d: usize) -> Result<TangentMap> {
    Ok(TangentMap {
        base: spd_block(blocks.next(d, d, "tangent base")?, "tangent base")?,
        base_isqrt: blocks.next(d, d, "tangent whitener")?,
    })
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Mdm(_) => "mdm",
            Classifier::Tslr(_) => "tslr",
            Classifier::TsaLda(_) => "tsa-lda",
            Classifier::CspLda(_) => "csp-lda",
            Classifier::Dcnet(_) => "dcnet",
            Classifier::Rifunet(_) => "rifunet",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Mdm(m) => m.prototypes.len(),
            Classifier::Tslr(m) => m.n_classes(),
            Classifier::TsaLda(m) => m.lda.n_classes(),
            Classifier::CspLda(m) => m.lda.n_classes(),
            Classifier::Dcnet(m) => m.n_classes(),
            Classifier::Rifunet(m) => m.n_classes(),
        }
    }

    /// Labels for every item of `ds`. Labels in `ds` are ignored.
    pub fn predict(&self, ds: &CovarianceSet) -> Result<Prediction> {
        if ds.is_empty() {
            return Err(Error::EmptyInput);
        }
        let covs: Vec<&SpdMatrix> = ds.items().iter().map(|it| &it.cov).collect();
        let each = |f: &dyn Fn(&SpdMatrix) -> Result<usize>| -> Result<Prediction> {
            Ok(Prediction {
                labels: covs.iter().map(|c| f(c)).collect::<Result<_>>()?,
                probabilities: None,
            })
        };
        let with_probs = |f: &dyn Fn(&SpdMatrix) -> Result<(usize, Vec<f64>)>| -> Result<Prediction> {
            let (labels, probs) = covs.iter().map(|c| f(c)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
            Ok(Prediction {
                labels,
                probabilities: Some(probs),
            })
        };
        match self {
            Classifier::Mdm(m) => each(&|c| m.predict(c)),
            Classifier::Tslr(m) => with_probs(&|c| m.predict(c)),
            Classifier::TsaLda(m) => each(&|c| m.predict(c)),
            Classifier::CspLda(m) => Ok(Prediction {
                labels: m.predict_set(ds)?,
                probabilities: None,
            }),
            Classifier::Dcnet(m) => with_probs(&|c| m.predict(c)),
            Classifier::Rifunet(m) => {
                let p = m.predict_batch(&covs)?;
                Ok(Prediction {
                    labels: p.labels,
                    probabilities: Some(p.probabilities),
                })
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let file = match self {
            Classifier::Mdm(m) => ModelFile {
                kind: 1,
                dim: m.prototypes[0].dim() as u32,
                meta: serde_json::to_string(&MdmMeta { classes: m.prototypes.len() })?,
                blocks: m.prototypes.iter().map(|p| p.as_mat().clone()).collect(),
            },
            Classifier::Tslr(m) => ModelFile {
                kind: 2,
                dim: m.tangent.base.dim() as u32,
                meta: "{}".into(),
                blocks: vec![
                    m.tangent.base.as_mat().clone(),
                    m.tangent.base_isqrt.clone(),
                    m.weights.clone(),
                    m.bias.clone(),
                ],
            },
            Classifier::TsaLda(m) => {
                let mut blocks = vec![m.tangent.base.as_mat().clone(), m.tangent.base_isqrt.clone()];
                blocks.extend(lda_blocks(&m.lda));
                ModelFile {
                    kind: 3,
                    dim: m.tangent.base.dim() as u32,
                    meta: "{}".into(),
                    blocks,
                }
            }
            Classifier::CspLda(m) => {
                let mut blocks = vec![m.filters.clone()];
                blocks.extend(lda_blocks(&m.lda));
                ModelFile {
                    kind: 4,
                    dim: m.filters.nrows() as u32,
                    meta: serde_json::to_string(&CspMeta { z_score: m.z_score })?,
                    blocks,
                }
            }
            Classifier::Dcnet(m) => {
                let mut blocks = m.stack.clone();
                blocks.extend([m.head_in.clone(), m.head_out.clone(), m.bias.clone()]);
                ModelFile {
                    kind: 5,
                    dim: m.input_dim() as u32,
                    meta: serde_json::to_string(&DcNetMeta {
                        layers: m.stack.len(),
                        eps: m.eps,
                    })?,
                    blocks,
                }
            }
            Classifier::Rifunet(m) => {
                let mut blocks: Vec<Mat> = m.net.enc.iter().chain(&m.net.dec).cloned().collect();
                blocks.extend([m.weights.clone(), m.bias.clone(), m.train_mean_log.clone()]);
                ModelFile {
                    kind: 6,
                    dim: m.net.input_dim() as u32,
                    meta: serde_json::to_string(&RifuNetMeta {
                        dims: m.net.dims.clone(),
                        base: m.base,
                    })?,
                    blocks,
                }
            }
        };
        file.encode(MAGIC)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut file = ModelFile::decode(MAGIC, bytes)?;
        let d = file.dim as usize;
        let p = tangent_len(d);
        let mut blocks = file.take_blocks();
        let model = match file.kind {
            1 => {
                let meta: MdmMeta = serde_json::from_str(&file.meta)?;
                let prototypes = (0..meta.classes)
                    .map(|_| spd_block(blocks.next(d, d, "prototype")?, "prototype"))
                    .collect::<Result<Vec<_>>>()?;
                Classifier::Mdm(MdmModel { prototypes })
            }
            2 => {
                let tangent = read_tangent(&mut blocks, d)?;
                let weights = blocks.any("weights")?;
                if weights.ncols() != p {
                    return Err(Error::format(0, None, "TSLR weights do not match the tangent dimension"));
                }
                let bias = blocks.next(weights.nrows(), 1, "bias")?;
                Classifier::Tslr(TslrModel { tangent, weights, bias })
            }
            3 => {
                let tangent = read_tangent(&mut blocks, d)?;
                let lda = read_lda(&mut blocks, p)?;
                Classifier::TsaLda(TsaLdaModel { tangent, lda })
            }
            4 => {
                let meta: CspMeta = serde_json::from_str(&file.meta)?;
                let filters = blocks.any("filters")?;
                if filters.nrows() != d {
                    return Err(Error::format(0, None, "CSP filters do not match the channel count"));
                }
                let lda = read_lda(&mut blocks, filters.ncols())?;
                Classifier::CspLda(CspModel {
                    filters,
                    z_score: meta.z_score,
                    lda,
                })
            }
            5 => {
                let meta: DcNetMeta = serde_json::from_str(&file.meta)?;
                let mut stack = Vec::with_capacity(meta.layers);
                let mut rows = d;
                for _ in 0..meta.layers {
                    let w = blocks.any("congruence layer")?;
                    if w.nrows() != rows {
                        return Err(Error::format(0, None, "congruence layers do not chain"));
                    }
                    rows = w.ncols();
                    stack.push(w);
                }
                let head_in = blocks.any("head input layer")?;
                if head_in.ncols() != tangent_len(rows) {
                    return Err(Error::format(0, None, "head input does not match the stack output"));
                }
                let head_out = blocks.any("head output layer")?;
                if head_out.ncols() != head_in.nrows() {
                    return Err(Error::format(0, None, "head layers do not chain"));
                }
                let bias = blocks.next(head_out.nrows(), 1, "bias")?;
                Classifier::Dcnet(DcNetModel {
                    stack,
                    eps: meta.eps,
                    head_in,
                    head_out,
                    bias,
                })
            }
            6 => {
                let meta: RifuNetMeta = serde_json::from_str(&file.meta)?;
                if meta.dims.first() != Some(&d) || meta.dims.len() < 2 {
                    return Err(Error::format(0, None, "U-Net dims do not match the model dimension"));
                }
                let enc = meta
                    .dims
                    .windows(2)
                    .map(|w| blocks.next(w[0], w[1], "encoder"))
                    .collect::<Result<Vec<_>>>()?;
                let dec = meta
                    .dims
                    .windows(2)
                    .map(|w| blocks.next(w[1], w[0], "decoder"))
                    .collect::<Result<Vec<_>>>()?;
                let weights = blocks.any("weights")?;
                if weights.ncols() != p {
                    return Err(Error::format(0, None, "head weights do not match the tangent dimension"));
                }
                let bias = blocks.next(weights.nrows(), 1, "bias")?;
                let train_mean_log = blocks.next(d, d, "training mean log")?;
                Classifier::Rifunet(RifuNetModel {
                    net: UNet {
                        dims: meta.dims,
                        enc,
                        dec,
                    },
                    weights,
                    bias,
                    base: meta.base,
                    train_mean_log,
                })
            }
            k => return Err(Error::format(8, None, format!("unknown classifier kind {k}"))),
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
