//! Alignment stages: RA, RPA and the learned DCR / RiFU pre-aligners.

mod dcr;
mod fisher;
mod model;
mod ra;
mod rifu;
mod rpa;

pub use dcr::{beta_schedule, dcr_apply, dcr_fit, dcr_loss, DcrFit, DcrHyper, DcrModel, SCALE_OFFSET};
pub use fisher::{dataset_fisher_stats, fisher_stats, log_features, FisherStats};
pub use model::{AlignFit, AlignStep, AlignerModel};
pub use ra::{ra_apply, ra_fit, RaModel, RaScope, Reference, ReferenceMean};
pub use rifu::{default_unet_dims, rifu_apply, rifu_fit, rifu_loss, RifuConfig, RifuFit, RifuModel};
pub use rpa::{rpa_align, rpa_apply, rpa_fit, RpaDispersion, RpaModel, RpaSubject, DISPERSION_EPS};
