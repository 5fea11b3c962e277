//! Classifiers over covariance sets: MDM, tangent-space logistic regression,
//! tangent-space LDA, CSP-LDA, SPD-DCNet and RiFUNet.

mod common;
mod csp;
mod dcnet;
mod lda;
mod mdm;
mod model;
mod rifunet;
mod tslr;

pub use common::{argmax, argmin, softmax, TangentMap};
pub use csp::{csp_filters, csp_fit, csp_fit_epochs, standardize_channels, CspConfig, CspModel};
pub use dcnet::{dcnet_fit, dcnet_loss, DcNetConfig, DcNetModel, DCNET_EPS};
pub use lda::{lda_fit, tsa_lda_fit, LdaConfig, LdaModel, TsaLdaModel, LDA_SHRINKAGE};
pub use mdm::{mdm_fit, MdmConfig, MdmModel};
pub use model::{Classifier, ClassifierFit, ClassifierSpec, Prediction};
pub use rifunet::{head_feature, rifunet_fit, rifunet_loss, BatchPrediction, RifuNetConfig, RifuNetModel, TslrBase};
pub use tslr::{tslr_fit, TslrConfig, TslrModel};
