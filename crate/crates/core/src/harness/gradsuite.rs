//! Finite-difference verification of every differentiable tape primitive and
//! of the four training objectives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::align::{dcr_loss, rifu_loss, DcrHyper, RifuConfig};
use crate::autodiff::{check_gradient, expm, skew_exp, CheckInput, Shape, Tape, Var};
use crate::classify::{dcnet_loss, rifunet_loss, DcNetConfig, DcNetModel, RifuNetConfig, RifuNetModel, TslrBase};
use crate::error::Result;
use crate::nets::{eigen_basis, UNet, WeightInit};
use crate::sampling::{gaussian, random_full_rank, random_orthogonal, random_spd, random_sym};
use crate::spd::{congruence_mat, spd_log, tangent_len, vec_upper_mat, Mat, SpdMatrix, SpectralFn};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradSuiteEntry {
    pub name: String,
    pub instances: usize,
    pub worst_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradSuiteReport {
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<GradSuiteEntry>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.worst_rel_err < self.tolerance)
    }
}

type LossFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct Case {
    inputs: Vec<CheckInput>,
    f: LossFn,
}

fn mat(v: Mat) -> CheckInput {
    let (r, c) = v.shape();
    CheckInput::new(v, Shape::Matrix(r, c))
}

fn sym(v: Mat) -> CheckInput {
    let d = v.nrows();
    CheckInput::new(v, Shape::Sym(d))
}

fn scalar(x: f64) -> CheckInput {
    CheckInput::new(Mat::from_element(1, 1, x), Shape::Scalar)
}

/// `Σ R ∘ X` with a fixed random `R`, turning any tensor into a scalar.
fn project(t: &mut Tape, x: Var, r: &Mat) -> Var {
    let rv = t.input(r.clone());
    let p = t.mul(x, rv);
    t.sum(p)
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(2..=5), rng.random_range(2..=5))
}

/// Symmetric matrix with two eigenvalues `gap` apart.
fn near_degenerate(rng: &mut ChaCha8Rng, d: usize, gap: f64) -> Mat {
    let q = random_orthogonal(rng, d);
    let mut eig: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..3.0)).collect();
    eig[1] = eig[0] + gap;
    let l = Mat::from_diagonal(&nalgebra::DVector::from_vec(eig));
    congruence_mat(&l, &q.transpose())
}

fn binary(rng: &mut ChaCha8Rng, op: fn(&mut Tape, Var, Var) -> Var) -> Case {
    let (r, c) = dims(rng);
    let a = gaussian(rng, r, c);
    let b = gaussian(rng, r, c);
    let proj = gaussian(rng, r, c);
    Case {
        inputs: vec![mat(a), mat(b)],
        f: Box::new(move |t, v| {
            let y = op(t, v[0], v[1]);
            Ok(project(t, y, &proj))
        }),
    }
}

fn unary(rng: &mut ChaCha8Rng, op: fn(&mut Tape, Var) -> Var) -> Case {
    let (r, c) = dims(rng);
    let a = gaussian(rng, r, c);
    let seed: u64 = rng.random();
    Case {
        inputs: vec![mat(a)],
        f: Box::new(move |t, v| {
            let y = op(t, v[0]);
            if y.shape() == Shape::Scalar {
                return Ok(y);
            }
            let (rr, cc) = y.shape().dims();
            let proj = gaussian(&mut ChaCha8Rng::seed_from_u64(seed), rr, cc);
            Ok(project(t, y, &proj))
        }),
    }
}

fn spectral(rng: &mut ChaCha8Rng, f: SpectralFn, gap: Option<f64>) -> Case {
    let d = rng.random_range(2..=6);
    let x = match gap {
        Some(g) if f.needs_positive() => near_degenerate(rng, d, g),
        Some(g) => near_degenerate(rng, d, g) - Mat::identity(d, d),
        None if f.needs_positive() => random_spd(rng, d, 50.0).into_mat(),
        None => random_sym(rng, d, 0.7).into_mat(),
    };
    let proj = random_sym(rng, d, 1.0).into_mat();
    Case {
        inputs: vec![sym(x)],
        f: Box::new(move |t, v| {
            let y = t.spectral(v[0], f)?;
            Ok(project(t, y, &proj))
        }),
    }
}

fn primitive_cases() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> Case)> {
    vec![
        ("add", |r| binary(r, |t, a, b| t.add(a, b))),
        ("sub", |r| binary(r, |t, a, b| t.sub(a, b))),
        ("mul", |r| binary(r, |t, a, b| t.mul(a, b))),
        ("scale", |r| unary(r, |t, a| t.scale(a, -1.7))),
        ("shift", |r| unary(r, |t, a| t.shift(a, 0.3))),
        ("transpose", |r| unary(r, |t, a| t.transpose(a))),
        ("frob_sq", |r| unary(r, |t, a| t.frob_sq(a))),
        ("sum", |r| unary(r, |t, a| t.sum(a))),
        ("offdiag_sq", |r| unary(r, |t, a| t.offdiag_sq(a))),
        ("softplus", |r| unary(r, |t, a| t.softplus(a))),
        ("log_softmax", |r| unary(r, |t, a| t.log_softmax(a))),
        ("trace", |rng| {
            let d = rng.random_range(2..=6);
            Case {
                inputs: vec![mat(gaussian(rng, d, d))],
                f: Box::new(|t, v| {
                    let m = t.matmul(v[0], v[0]);
                    Ok(t.trace(m))
                }),
            }
        }),
        ("div", |rng| {
            let a = rng.random_range(-2.0..2.0);
            let b = rng.random_range(0.5..2.0);
            Case {
                inputs: vec![scalar(a), scalar(b)],
                f: Box::new(|t, v| Ok(t.div(v[0], v[1]))),
            }
        }),
        ("scale_by", |rng| {
            let (r, c) = dims(rng);
            let m = gaussian(rng, r, c);
            let proj = gaussian(rng, r, c);
            Case {
                inputs: vec![scalar(rng.random_range(-2.0..2.0)), mat(m)],
                f: Box::new(move |t, v| {
                    let y = t.scale_by(v[0], v[1]);
                    Ok(project(t, y, &proj))
                }),
            }
        }),
        ("matmul", |rng| {
            let (r, k) = dims(rng);
            let c = rng.random_range(2..=5);
            let a = gaussian(rng, r, k);
            let b = gaussian(rng, k, c);
            let proj = gaussian(rng, r, c);
            Case {
                inputs: vec![mat(a), mat(b)],
                f: Box::new(move |t, v| {
                    let y = t.matmul(v[0], v[1]);
                    Ok(project(t, y, &proj))
                }),
            }
        }),
        ("congruence", |rng| {
            let d_in = rng.random_range(2..=6);
            let d_out = rng.random_range(1..=d_in);
            let c = random_spd(rng, d_in, 20.0).into_mat();
            let w = random_full_rank(rng, d_in, d_out);
            let proj = random_sym(rng, d_out, 1.0).into_mat();
            Case {
                inputs: vec![sym(c), mat(w)],
                f: Box::new(move |t, v| {
                    let y = t.congruence(v[0], v[1]);
                    Ok(project(t, y, &proj))
                }),
            }
        }),
        ("add_identity", |rng| {
            let d = rng.random_range(2..=6);
            let proj = random_sym(rng, d, 1.0).into_mat();
            Case {
                inputs: vec![sym(random_sym(rng, d, 1.0).into_mat())],
                f: Box::new(move |t, v| {
                    let y = t.add_identity(v[0], 0.25);
                    let y2 = t.mul(y, y);
                    Ok(project(t, y2, &proj))
                }),
            }
        }),
        ("spectral log", |r| spectral(r, SpectralFn::Log, None)),
        ("spectral exp", |r| spectral(r, SpectralFn::Exp, None)),
        ("spectral sqrt", |r| spectral(r, SpectralFn::Sqrt, None)),
        ("spectral inv_sqrt", |r| spectral(r, SpectralFn::InvSqrt, None)),
        ("spectral pow 0.3", |r| spectral(r, SpectralFn::Pow(0.3), None)),
        ("spectral log, gap 1e-10", |r| spectral(r, SpectralFn::Log, Some(1e-10))),
        ("spectral exp, gap 1e-10", |r| spectral(r, SpectralFn::Exp, Some(1e-10))),
        ("spectral inv_sqrt, gap 1e-10", |r| spectral(r, SpectralFn::InvSqrt, Some(1e-10))),
        ("eigvals", |rng| {
            let d = rng.random_range(2..=6);
            // well separated spectrum; eigenvalues are not differentiable at crossings
            let q = random_orthogonal(rng, d);
            let eig: Vec<f64> = (0..d).map(|i| i as f64 + rng.random_range(0.0..0.5)).collect();
            let x = congruence_mat(&Mat::from_diagonal(&nalgebra::DVector::from_vec(eig)), &q.transpose());
            let proj = gaussian(rng, d, 1);
            Case {
                inputs: vec![sym(x)],
                f: Box::new(move |t, v| {
                    let e = t.eigvals(v[0])?;
                    Ok(project(t, e, &proj))
                }),
            }
        }),
        ("solve", |rng| {
            let d = rng.random_range(2..=5);
            let c = rng.random_range(1..=3);
            let a = random_full_rank(rng, d, d);
            let b = gaussian(rng, d, c);
            let proj = gaussian(rng, d, c);
            Case {
                inputs: vec![mat(a), mat(b)],
                f: Box::new(move |t, v| {
                    let x = t.solve(v[0], v[1])?;
                    Ok(project(t, x, &proj))
                }),
            }
        }),
        ("vec_upper", |rng| {
            let d = rng.random_range(2..=6);
            let proj = gaussian(rng, tangent_len(d), 1);
            Case {
                inputs: vec![sym(random_sym(rng, d, 1.0).into_mat())],
                f: Box::new(move |t, v| {
                    let z = t.vec_upper(v[0]);
                    Ok(project(t, z, &proj))
                }),
            }
        }),
        ("stack_rows + mean_of", |rng| {
            let p = rng.random_range(2..=5);
            let n = rng.random_range(2..=4);
            let inputs: Vec<CheckInput> = (0..n).map(|_| mat(gaussian(rng, p, 1))).collect();
            let proj = gaussian(rng, n, p);
            let proj2 = gaussian(rng, p, 1);
            Case {
                inputs,
                f: Box::new(move |t, v| {
                    let z = t.stack_rows(v);
                    let a = project(t, z, &proj);
                    let m = t.mean_of(v);
                    let b = project(t, m, &proj2);
                    Ok(t.add(a, b))
                }),
            }
        }),
        ("linear", |rng| {
            let (n, p) = dims(rng);
            let q = rng.random_range(2..=4);
            let proj = gaussian(rng, n, q);
            Case {
                inputs: vec![mat(gaussian(rng, n, p)), mat(gaussian(rng, q, p)), mat(gaussian(rng, q, 1))],
                f: Box::new(move |t, v| {
                    let y = t.linear(v[0], v[1], v[2]);
                    Ok(project(t, y, &proj))
                }),
            }
        }),
        ("cross_entropy", |rng| {
            let (n, k) = dims(rng);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            Case {
                inputs: vec![mat(gaussian(rng, n, k))],
                f: Box::new(move |t, v| {
                    let lp = t.log_softmax(v[0]);
                    Ok(t.cross_entropy(lp, &labels))
                }),
            }
        }),
        ("within_scatter", |rng| {
            let (n, p) = (rng.random_range(4..=8), rng.random_range(2..=4));
            let groups: Vec<usize> = (0..n).map(|i| i % 3).collect();
            Case {
                inputs: vec![mat(gaussian(rng, n, p))],
                f: Box::new(move |t, v| Ok(t.within_scatter(v[0], &groups))),
            }
        }),
        ("between_scatter", |rng| {
            let (n, p) = (rng.random_range(4..=8), rng.random_range(2..=4));
            let groups: Vec<usize> = (0..n).map(|i| i % 3).collect();
            Case {
                inputs: vec![mat(gaussian(rng, n, p))],
                f: Box::new(move |t, v| Ok(t.between_scatter(v[0], &groups))),
            }
        }),
        ("expm", |rng| {
            let d = rng.random_range(2..=5);
            let proj = gaussian(rng, d, d);
            Case {
                inputs: vec![mat(gaussian(rng, d, d) * 0.3)],
                f: Box::new(move |t, v| {
                    let e = expm(t, v[0])?;
                    Ok(project(t, e, &proj))
                }),
            }
        }),
        ("skew_exp", |rng| {
            let d = rng.random_range(2..=5);
            let proj = gaussian(rng, d, d);
            Case {
                inputs: vec![mat(gaussian(rng, d, d) * 0.3)],
                f: Box::new(move |t, v| {
                    let e = skew_exp(t, v[0])?;
                    Ok(project(t, e, &proj))
                }),
            }
        }),
    ]
}

/// Random SPD batch with balanced action / subject labels.
fn toy_batch(rng: &mut ChaCha8Rng, d: usize, n: usize) -> (Vec<SpdMatrix>, Vec<usize>, Vec<usize>) {
    let covs = (0..n).map(|_| random_spd(rng, d, 10.0)).collect();
    let actions = (0..n).map(|i| i % 2).collect();
    let subjects = (0..n).map(|i| (i / 2) % 2).collect();
    (covs, actions, subjects)
}

fn loss_cases() -> Vec<(&'static str, fn(&mut ChaCha8Rng) -> Case)> {
    vec![
        ("loss DCR", |rng| {
            let d = rng.random_range(3..=5);
            let (covs, actions, _) = toy_batch(rng, d, 6);
            let logs: Vec<Mat> = covs.iter().map(|c| spd_log(c).unwrap().into_mat()).collect();
            let hyper = DcrHyper::default();
            let step = rng.random_range(0..hyper.train.steps);
            Case {
                inputs: vec![mat(gaussian(rng, d, d) * 0.2), scalar(rng.random_range(-0.5..1.5))],
                f: Box::new(move |t, v| {
                    let refs: Vec<&Mat> = logs.iter().collect();
                    dcr_loss(t, &refs, &actions, v[0], v[1], &hyper, step)
                }),
            }
        }),
        ("loss RiFU", |rng| {
            let d = 6;
            let (covs, actions, subjects) = toy_batch(rng, d, 4);
            let cfg = RifuConfig { dims: vec![6, 4, 2], ..RifuConfig::default() };
            let basis = eigen_basis(&covs).unwrap();
            let net = UNet::new(&cfg.dims, WeightInit::Eigen, &basis, rng).unwrap();
            let feats: Vec<Vec<f64>> = covs.iter().map(|c| vec_upper_mat(spd_log(c).unwrap().as_mat())).collect();
            let inputs = net.params().into_iter().map(|p| mat(p.value)).collect();
            Case {
                inputs,
                f: Box::new(move |t, v| {
                    let w = net.vars_from(v);
                    let bc: Vec<&SpdMatrix> = covs.iter().collect();
                    let bf: Vec<&[f64]> = feats.iter().map(|f| f.as_slice()).collect();
                    rifu_loss(t, &net, &w, &bc, &bf, &actions, &subjects, &cfg)
                }),
            }
        }),
        ("loss RiFUNet", |rng| {
            let d = 6;
            let (covs, actions, subjects) = toy_batch(rng, d, 4);
            let basis = eigen_basis(&covs).unwrap();
            let net = UNet::new(&[6, 4, 2], WeightInit::Eigen, &basis, rng).unwrap();
            let p = tangent_len(d);
            let model = RifuNetModel {
                net,
                weights: gaussian(rng, 2, p),
                bias: gaussian(rng, 2, 1),
                base: TslrBase::Batch,
                train_mean_log: Mat::zeros(d, d),
            };
            let cfg = RifuNetConfig { lambda_act: 0.3, lambda_sub: 0.3, lambda_rec: 0.3, ..RifuNetConfig::default() };
            let inputs = model.params().into_iter().map(|p| mat(p.value)).collect();
            Case {
                inputs,
                f: Box::new(move |t, v| {
                    let bc: Vec<&SpdMatrix> = covs.iter().collect();
                    rifunet_loss(t, &model, v, &bc, &actions, &subjects, &cfg)
                }),
            }
        }),
        ("loss SPD-DCNet", |rng| {
            let d = 6;
            let (covs, actions, subjects) = toy_batch(rng, d, 6);
            let basis = eigen_basis(&covs).unwrap();
            let cfg = DcNetConfig { hidden: 5, lambda_act: 0.3, lambda_sub: 0.3, ..DcNetConfig::default() };
            let seed = rng.random();
            let model = DcNetModel::new(d, 2, &cfg, &basis, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let inputs = model.params().into_iter().map(|p| mat(p.value)).collect();
            Case {
                inputs,
                f: Box::new(move |t, v| {
                    let bc: Vec<&SpdMatrix> = covs.iter().collect();
                    dcnet_loss(t, &model, v, &bc, &actions, &subjects, &cfg)
                }),
            }
        }),
    ]
}

/// Runs every case on `instances` random instances drawn from `seed`.
pub fn gradcheck_suite(seed: u64, instances: usize) -> Result<GradSuiteReport> {
    let mut entries = Vec::new();
    for (k, (name, make)) in primitive_cases().into_iter().chain(loss_cases()).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 * k as u64));
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let case = make(&mut rng);
            let rep = check_gradient(&case.f, &case.inputs, GRAD_STEP)?;
            worst = worst.max(rep.max_rel_err);
        }
        entries.push(GradSuiteEntry {
            name: name.to_string(),
            instances,
            worst_rel_err: worst,
        });
    }
    Ok(GradSuiteReport {
        step: GRAD_STEP,
        tolerance: GRAD_TOL,
        entries,
    })
}
