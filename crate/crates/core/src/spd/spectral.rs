use super::EigDecomposition;

/// Relative eigenvalue floor applied inside `log` and fractional powers.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Gaps below `DEGENERATE_GAP * λ_max` use the derivative limit instead of a
/// divided difference.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Scalar function lifted to symmetric matrices through the spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralFn {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
    Pow(f64),
}

impl SpectralFn {
    /// Whether the function requires a positive spectrum (and hence the floor).
    pub fn needs_positive(self) -> bool {
        !matches!(self, SpectralFn::Exp)
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            SpectralFn::Log => x.ln(),
            SpectralFn::Exp => x.exp(),
            SpectralFn::Sqrt => x.sqrt(),
            SpectralFn::InvSqrt => 1.0 / x.sqrt(),
            SpectralFn::Pow(p) => x.powf(p),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            SpectralFn::Log => 1.0 / x,
            SpectralFn::Exp => x.exp(),
            SpectralFn::Sqrt => 0.5 / x.sqrt(),
            SpectralFn::InvSqrt => -0.5 / (x * x.sqrt()),
            SpectralFn::Pow(p) => p * x.powf(p - 1.0),
        }
    }

    /// `(f(a) − f(b)) / (a − b)`, evaluated in a cancellation-free form where one exists.
    pub fn divided_difference(self, a: f64, b: f64, gap_floor: f64) -> f64 {
        let h = a - b;
        if h.abs() <= gap_floor {
            return self.derivative(0.5 * (a + b));
        }
        match self {
            SpectralFn::Log => {
                let r = h / b;
                if r.abs() < 0.5 {
                    r.ln_1p() / h
                } else {
                    (a.ln() - b.ln()) / h
                }
            }
            SpectralFn::Exp => {
                if h.abs() < 1.0 {
                    b.exp() * h.exp_m1() / h
                } else {
                    (a.exp() - b.exp()) / h
                }
            }
            SpectralFn::Sqrt => 1.0 / (a.sqrt() + b.sqrt()),
            SpectralFn::InvSqrt => {
                let (sa, sb) = (a.sqrt(), b.sqrt());
                -1.0 / (sa * sb * (sa + sb))
            }
            SpectralFn::Pow(p) => {
                let r = h / b;
                if r.abs() < 0.5 {
                    b.powf(p) * (p * r.ln_1p()).exp_m1() / h
                } else {
                    (a.powf(p) - b.powf(p)) / h
                }
            }
        }
    }
}

/// Eigenvalues after the positivity floor `max(λ, 1e-10·λ_max)`.
pub fn floored_eigenvalues(eig: &EigDecomposition) -> Vec<f64> {
    let floor = EIGEN_FLOOR * eig.max_eigenvalue().max(0.0);
    eig.eigenvalues.iter().map(|&l| l.max(floor)).collect()
}

/// Eigenvalues the function is evaluated at (floored where needed).
pub fn effective_eigenvalues(f: SpectralFn, eig: &EigDecomposition) -> Vec<f64> {
    if f.needs_positive() {
        floored_eigenvalues(eig)
    } else {
        eig.eigenvalues.clone()
    }
}

/// Daleckii–Krein kernel `Φ_ij` of the Fréchet derivative of `f` at the spectrum.
pub fn frechet_kernel(f: SpectralFn, lambdas: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    let scale = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let gap_floor = DEGENERATE_GAP * scale;
    let mut phi = vec![0.0; n * n];
    for i in 0..n {
        phi[i * n + i] = f.derivative(lambdas[i]);
        for j in i + 1..n {
            let d = f.divided_difference(lambdas[i], lambdas[j], gap_floor);
            phi[i * n + j] = d;
            phi[j * n + i] = d;
        }
    }
    phi
}
