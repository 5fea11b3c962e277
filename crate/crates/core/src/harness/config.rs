use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::AlignStep;
use crate::classify::ClassifierSpec;
use crate::data::{read_covariances, read_epochs, synth_generate, CovarianceSet, SynthConfig};
use crate::error::{Error, Result};
use crate::nets::TrainConfig;

/// Where a run's covariances come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// `SPDC` file.
    Covariances { path: PathBuf },
    /// `EPOC` file, covariances estimated on load.
    Epochs {
        path: PathBuf,
        #[serde(default)]
        shrinkage: bool,
    },
    Synth(SynthConfig),
}

impl DataSource {
    /// Picks the file kind from its magic bytes.
    pub fn from_path(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let bytes = fs::read(&path)?;
        match bytes.get(..4) {
            Some(b"EPOC") => Ok(DataSource::Epochs { path, shrinkage: false }),
            _ => Ok(DataSource::Covariances { path }),
        }
    }

    pub fn load(&self) -> Result<CovarianceSet> {
        match self {
            DataSource::Covariances { path } => read_covariances(&fs::read(path)?),
            DataSource::Epochs { path, shrinkage } => read_epochs(&fs::read(path)?)?.covariances(*shrinkage),
            DataSource::Synth(cfg) => synth_generate(cfg),
        }
    }
}

/// One pipeline: ordered alignment stages and a classifier.
///
/// `optimizer`, when given, replaces the training block of every learned stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub align: Vec<AlignStep>,
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub optimizer: Option<TrainConfig>,
    /// Not part of the fingerprint.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn set_train(slot: &mut TrainConfig, opt: &TrainConfig) {
    let seed = slot.seed;
    *slot = TrainConfig { seed, ..opt.clone() };
}

impl RunConfig {
    pub fn new(align: Vec<AlignStep>, classifier: ClassifierSpec) -> Self {
        Self {
            align,
            classifier,
            seed: None,
            data: None,
            optimizer: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Each stage kind may appear at most once; learned stages need a valid optimizer.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.align.iter().enumerate() {
            if self.align[..i].iter().any(|p| p.name() == s.name()) {
                return Err(Error::Config(format!("alignment stage `{}` repeated", s.name())));
            }
        }
        if let Some(opt) = &self.optimizer {
            opt.validate()?;
        }
        for s in &self.align {
            if let AlignStep::Dcr(h) = s {
                h.validate()?;
            }
        }
        Ok(())
    }

    /// Alignment stages with the optimizer override applied.
    pub fn effective_align(&self) -> Vec<AlignStep> {
        let mut steps = self.align.clone();
        if let Some(opt) = &self.optimizer {
            for s in &mut steps {
                match s {
                    AlignStep::Dcr(h) => set_train(&mut h.train, opt),
                    AlignStep::Rifu(c) => set_train(&mut c.train, opt),
                    AlignStep::Ra { .. } | AlignStep::Rpa { .. } => {}
                }
            }
        }
        steps
    }

    pub fn effective_classifier(&self) -> ClassifierSpec {
        let mut spec = self.classifier.clone();
        if let Some(opt) = &self.optimizer {
            match &mut spec {
                ClassifierSpec::Tslr(c) => set_train(&mut c.train, opt),
                ClassifierSpec::Dcnet(c) => set_train(&mut c.train, opt),
                ClassifierSpec::Rifunet(c) => set_train(&mut c.train, opt),
                ClassifierSpec::Mdm(_) | ClassifierSpec::TsaLda(_) | ClassifierSpec::CspLda(_) => {}
            }
        }
        spec
    }

    /// Pipeline label such as `ra+dcr/tslr`.
    pub fn label(&self) -> String {
        let stages: Vec<&str> = self.align.iter().map(|s| s.name()).collect();
        if stages.is_empty() {
            self.classifier.name().to_string()
        } else {
            format!("{}/{}", stages.join("+"), self.classifier.name())
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys, defaults filled in),
    /// ignoring the output directory.
    pub fn fingerprint(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("out_dir");
        }
        let canonical = serde_json::to_string(&v)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}
