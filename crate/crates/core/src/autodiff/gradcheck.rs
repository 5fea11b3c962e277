use super::tape::{Shape, Tape, Var};
use crate::error::{Error, Result};
use crate::spd::Mat;

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, row, col) of the worst coordinate.
    pub worst: (usize, usize, usize),
    pub coordinates: usize,
}

/// Point at which to check a function: values plus their tape shapes.
#[derive(Clone, Debug)]
pub struct CheckInput {
    pub value: Mat,
    pub shape: Shape,
}

impl CheckInput {
    pub fn new(value: Mat, shape: Shape) -> Self {
        Self { value, shape }
    }
}

fn evaluate<F>(f: &F, inputs: &[CheckInput]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|i| tape.leaf(i.value.clone(), i.shape))
        .collect();
    let out = f(&mut tape, &vars)?;
    if out.shape() != Shape::Scalar {
        return Err(Error::Shape("gradient check needs a scalar function".into()));
    }
    Ok((tape, vars, out))
}

/// Compares reverse-mode gradients of a scalar function against central differences.
///
/// Symmetric inputs are perturbed along `E_ij + E_ji`, matching the directional
/// derivative `G_ij + G_ji` of the symmetrized gradient. The relative error
/// uses the denominator `max(|fd|, |ad|, 1e-8, 1e-3·‖g‖∞)`.
pub fn check_gradient<F>(f: F, inputs: &[CheckInput], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(&f, inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Mat> = vars.iter().map(|v| grads.wrt(*v)).collect();
    let gmax = analytic.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let floor = 1e-8f64.max(1e-3 * gmax);

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0, 0),
        coordinates: 0,
    };
    for (k, input) in inputs.iter().enumerate() {
        let sym = matches!(input.shape, Shape::Sym(_));
        let (r, c) = input.shape.dims();
        for i in 0..r {
            for j in 0..c {
                if sym && j < i {
                    continue;
                }
                let shifted = |delta: f64| -> Result<f64> {
                    let mut pert = inputs.to_vec();
                    pert[k].value[(i, j)] += delta;
                    if sym && i != j {
                        pert[k].value[(j, i)] += delta;
                    }
                    let (t, _, o) = evaluate(&f, &pert)?;
                    Ok(t.scalar(o))
                };
                let fd = (shifted(step)? - shifted(-step)?) / (2.0 * step);
                let ad = if sym && i != j {
                    analytic[k][(i, j)] + analytic[k][(j, i)]
                } else {
                    analytic[k][(i, j)]
                };
                let denom = fd.abs().max(ad.abs()).max(floor);
                let rel = (fd - ad).abs() / denom;
                let rel = if rel.is_nan() { f64::INFINITY } else { rel };
                report.coordinates += 1;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = (k, i, j);
                }
            }
        }
    }
    Ok(report)
}
