//! Matrix-level reverse-mode tape.
//!
//! Nodes hold whole matrices; scalars are `1×1` and vectors `n×1`. Operations
//! are recorded in execution order, so the node list is already topologically
//! sorted and `backward` is a single reverse sweep.
//!
//! Shape mismatches between operands are programming errors and panic;
//! numerical failures (a non-SPD argument to `log`, say) are returned as
//! [`Error`]s.

use crate::error::{Error, Result};
use crate::spd::{
    congruence_mat, effective_eigenvalues, frechet_kernel, jacobi_eigen, spectral_mat,
    symmetrize_in_place, tangent_len, unvec_upper_mat, vec_upper_mat, EigDecomposition, Mat,
    SpectralFn,
};

/// Shape descriptor of a tape value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
    /// Symmetric `d×d`; gradients with respect to such leaves are symmetrized.
    Sym(usize),
}

impl Shape {
    pub fn dims(self) -> (usize, usize) {
        match self {
            Shape::Scalar => (1, 1),
            Shape::Vector(n) => (n, 1),
            Shape::Matrix(r, c) => (r, c),
            Shape::Sym(d) => (d, d),
        }
    }

    fn of(m: &Mat) -> Shape {
        match (m.nrows(), m.ncols()) {
            (1, 1) => Shape::Scalar,
            (n, 1) => Shape::Vector(n),
            (r, c) => Shape::Matrix(r, c),
        }
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    id: usize,
    shape: Shape,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn shape(self) -> Shape {
        self.shape
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Mul(usize, usize),
    Div(usize, usize),
    ScaleBy(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Congruence { c: usize, w: usize },
    AddIdentity(usize),
    Spectral {
        x: usize,
        f: SpectralFn,
        eig: EigDecomposition,
        lambdas: Vec<f64>,
    },
    EigVals { x: usize, eig: EigDecomposition },
    FrobSq(usize),
    Trace(usize),
    OffdiagSq(usize),
    Sum(usize),
    Softplus(usize),
    Solve { a: usize, b: usize },
    VecUpper(usize),
    StackRows(Vec<usize>),
    MeanOf(Vec<usize>),
    Linear { x: usize, w: usize, b: usize },
    LogSoftmax(usize),
    CrossEntropy { logp: usize, labels: Vec<usize> },
    WithinScatter { z: usize, centered: Mat },
    BetweenScatter { z: usize, offsets: Mat },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::ScaleBy(a, b) => {
                vec![*a, *b]
            }
            Op::Matmul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Transpose(a)
            | Op::AddIdentity(a)
            | Op::FrobSq(a)
            | Op::Trace(a)
            | Op::OffdiagSq(a)
            | Op::Sum(a)
            | Op::Softplus(a)
            | Op::VecUpper(a)
            | Op::LogSoftmax(a) => vec![*a],
            Op::Congruence { c, w } => vec![*c, *w],
            Op::Spectral { x, .. } | Op::EigVals { x, .. } => vec![*x],
            Op::Solve { a, b } => vec![*a, *b],
            Op::StackRows(ids) | Op::MeanOf(ids) => ids.clone(),
            Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::CrossEntropy { logp, .. } => vec![*logp],
            Op::WithinScatter { z, .. } | Op::BetweenScatter { z, .. } => vec![*z],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Mat,
    shape: Shape,
    op: Op,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Mat>>,
    shapes: Vec<Shape>,
    accumulations: usize,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Mat {
        let (r, c) = self.shapes[v.id].dims();
        match &self.adjoints[v.id] {
            Some(g) => {
                let mut g = g.clone();
                if let Shape::Sym(_) = self.shapes[v.id] {
                    symmetrize_in_place(&mut g);
                }
                g
            }
            None => Mat::zeros(r, c),
        }
    }

    /// Number of adjoint contributions accumulated during the sweep.
    pub fn accumulations(&self) -> usize {
        self.accumulations
    }
}

fn group_means(z: &Mat, groups: &[usize]) -> (Vec<usize>, Mat) {
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let p = z.ncols();
    let mut counts = vec![0usize; n_groups];
    let mut sums = Mat::zeros(n_groups, p);
    for (i, &g) in groups.iter().enumerate() {
        counts[g] += 1;
        let mut row = sums.row_mut(g);
        row += z.row(i);
    }
    for (g, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums.row_mut(g).scale_mut(1.0 / n as f64);
        }
    }
    (counts, sums)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of (node, input) edges recorded so far.
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.op.inputs().len()).sum()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.id].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.id].value[(0, 0)]
    }

    fn push(&mut self, value: Mat, shape: Shape, op: Op) -> Var {
        debug_assert_eq!(shape.dims(), (value.nrows(), value.ncols()));
        let id = self.nodes.len();
        self.nodes.push(Node { value, shape, op });
        Var { id, shape }
    }

    fn val(&self, v: Var) -> &Mat {
        &self.nodes[v.id].value
    }

    /// Input node (parameter or constant). A `Sym` shape is symmetrized on entry.
    pub fn leaf(&mut self, mut value: Mat, shape: Shape) -> Var {
        assert_eq!(shape.dims(), (value.nrows(), value.ncols()), "leaf shape mismatch");
        if let Shape::Sym(_) = shape {
            symmetrize_in_place(&mut value);
        }
        self.push(value, shape, Op::Leaf)
    }

    /// Leaf with shape inferred from the matrix dimensions.
    pub fn input(&mut self, value: Mat) -> Var {
        let shape = Shape::of(&value);
        self.leaf(value, shape)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.leaf(Mat::from_element(1, 1, x), Shape::Scalar)
    }

    fn same_dims(&self, a: Var, b: Var, what: &str) {
        assert_eq!(a.shape.dims(), b.shape.dims(), "{what}: operand shapes differ");
    }

    fn joint_shape(a: Var, b: Var) -> Shape {
        match (a.shape, b.shape) {
            (Shape::Sym(d), Shape::Sym(_)) => Shape::Sym(d),
            (s, _) => s,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_dims(a, b, "add");
        let v = self.val(a) + self.val(b);
        self.push(v, Self::joint_shape(a, b), Op::Add(a.id, b.id))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_dims(a, b, "sub");
        let v = self.val(a) - self.val(b);
        self.push(v, Self::joint_shape(a, b), Op::Sub(a.id, b.id))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.val(a) * s;
        self.push(v, a.shape, Op::Scale(a.id, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Adds a constant to every entry.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a).map(|x| x + c);
        let shape = match a.shape {
            Shape::Sym(d) => Shape::Matrix(d, d),
            s => s,
        };
        self.push(v, shape, Op::Shift(a.id))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_dims(a, b, "mul");
        let v = self.val(a).component_mul(self.val(b));
        self.push(v, Self::joint_shape(a, b), Op::Mul(a.id, b.id))
    }

    /// Scalar division.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert!(a.shape == Shape::Scalar && b.shape == Shape::Scalar, "div is scalar-only");
        let v = Mat::from_element(1, 1, self.scalar(a) / self.scalar(b));
        self.push(v, Shape::Scalar, Op::Div(a.id, b.id))
    }

    /// Scalar variable times a tensor.
    pub fn scale_by(&mut self, s: Var, m: Var) -> Var {
        assert_eq!(s.shape, Shape::Scalar, "scale_by needs a scalar factor");
        let v = self.val(m) * self.scalar(s);
        self.push(v, m.shape, Op::ScaleBy(s.id, m.id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = a.shape.dims();
        let (br, bc) = b.shape.dims();
        assert_eq!(ac, br, "matmul: inner dimensions differ");
        let v = self.val(a) * self.val(b);
        self.push(v, Shape::of(&Mat::zeros(ar, bc)), Op::Matmul(a.id, b.id))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.val(a).transpose();
        let shape = match a.shape {
            Shape::Sym(d) => Shape::Sym(d),
            _ => Shape::of(&v),
        };
        self.push(v, shape, Op::Transpose(a.id))
    }

    /// `Wᵀ C W` with `C` symmetric `d_in×d_in` and `W` `d_in×d_out`.
    pub fn congruence(&mut self, c: Var, w: Var) -> Var {
        let (cr, cc) = c.shape.dims();
        let (wr, wc) = w.shape.dims();
        assert!(cr == cc && cr == wr, "congruence: C is {cr}x{cc}, W is {wr}x{wc}");
        let v = congruence_mat(self.val(c), self.val(w));
        self.push(v, Shape::Sym(wc), Op::Congruence { c: c.id, w: w.id })
    }

    /// `A + εI`.
    pub fn add_identity(&mut self, a: Var, eps: f64) -> Var {
        let (r, c) = a.shape.dims();
        assert_eq!(r, c, "add_identity needs a square matrix");
        let mut v = self.val(a).clone();
        for i in 0..r {
            v[(i, i)] += eps;
        }
        self.push(v, a.shape, Op::AddIdentity(a.id))
    }

    /// `U f(Λ) Uᵀ`; same numerics as [`crate::spd::spectral_mat`].
    pub fn spectral(&mut self, x: Var, f: SpectralFn) -> Result<Var> {
        let (r, c) = x.shape.dims();
        assert_eq!(r, c, "spectral function needs a square matrix");
        let (v, eig) = spectral_mat(self.val(x), f)?;
        let lambdas = effective_eigenvalues(f, &eig);
        Ok(self.push(
            v,
            Shape::Sym(r),
            Op::Spectral {
                x: x.id,
                f,
                eig,
                lambdas,
            },
        ))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.spectral(x, SpectralFn::Log)
    }

    pub fn exp_sym(&mut self, x: Var) -> Result<Var> {
        self.spectral(x, SpectralFn::Exp)
    }

    /// Ascending eigenvalues as a vector.
    pub fn eigvals(&mut self, x: Var) -> Result<Var> {
        let eig = jacobi_eigen(self.val(x))?;
        let v = Mat::from_column_slice(eig.dim(), 1, &eig.eigenvalues);
        let shape = Shape::of(&v);
        Ok(self.push(v, shape, Op::EigVals { x: x.id, eig }))
    }

    /// `‖A‖²_F`.
    pub fn frob_sq(&mut self, a: Var) -> Var {
        let v = Mat::from_element(1, 1, self.val(a).norm_squared());
        self.push(v, Shape::Scalar, Op::FrobSq(a.id))
    }

    pub fn trace(&mut self, a: Var) -> Var {
        let v = Mat::from_element(1, 1, self.val(a).trace());
        self.push(v, Shape::Scalar, Op::Trace(a.id))
    }

    /// Squared Frobenius norm of the off-diagonal part.
    pub fn offdiag_sq(&mut self, a: Var) -> Var {
        let m = self.val(a);
        let mut s = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        self.push(Mat::from_element(1, 1, s), Shape::Scalar, Op::OffdiagSq(a.id))
    }

    /// Sum of all entries.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_element(1, 1, self.val(a).sum());
        self.push(v, Shape::Scalar, Op::Sum(a.id))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.val(a).map(softplus);
        let shape = match a.shape {
            Shape::Sym(d) => Shape::Matrix(d, d),
            s => s,
        };
        self.push(v, shape, Op::Softplus(a.id))
    }

    /// `A⁻¹ B` for square invertible `A`.
    pub fn solve(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = a.shape.dims();
        let (br, _) = b.shape.dims();
        assert!(ar == ac && ac == br, "solve: A must be square and match B");
        let x = self
            .val(a)
            .clone()
            .lu()
            .solve(self.val(b))
            .ok_or_else(|| Error::Numerical("singular matrix in solve".into()))?;
        let shape = Shape::of(&x);
        Ok(self.push(x, shape, Op::Solve { a: a.id, b: b.id }))
    }

    /// Upper-triangular vectorization with √2 off-diagonal weighting, as a column vector.
    pub fn vec_upper(&mut self, a: Var) -> Var {
        let (r, c) = a.shape.dims();
        assert_eq!(r, c, "vec_upper needs a square matrix");
        let z = vec_upper_mat(self.val(a));
        let n = z.len();
        self.push(Mat::from_vec(n, 1, z), Shape::Vector(n), Op::VecUpper(a.id))
    }

    /// Stacks equally sized column vectors as the rows of an `N×p` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let p = rows[0].shape.dims().0;
        let mut m = Mat::zeros(rows.len(), p);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.shape.dims(), (p, 1), "stack_rows: rows must be p x 1 vectors");
            m.row_mut(i).copy_from(&self.val(*r).transpose());
        }
        let shape = Shape::of(&m);
        self.push(m, shape, Op::StackRows(rows.iter().map(|r| r.id).collect()))
    }

    /// Arithmetic mean of equally shaped values.
    pub fn mean_of(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "mean_of needs at least one item");
        let mut acc = self.val(items[0]).clone();
        for it in &items[1..] {
            self.same_dims(items[0], *it, "mean_of");
            acc += self.val(*it);
        }
        acc /= items.len() as f64;
        self.push(acc, items[0].shape, Op::MeanOf(items.iter().map(|v| v.id).collect()))
    }

    /// Row-wise affine map `X Wᵀ + 1 bᵀ` with `X: N×p`, `W: q×p`, `b: q×1`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, p) = x.shape.dims();
        let (q, wp) = w.shape.dims();
        assert_eq!(p, wp, "linear: feature dimension mismatch");
        assert_eq!(b.shape.dims(), (q, 1), "linear: bias must be q x 1");
        let mut y = self.val(x) * self.val(w).transpose();
        let bias = self.val(b);
        for i in 0..n {
            for j in 0..q {
                y[(i, j)] += bias[(j, 0)];
            }
        }
        let shape = Shape::of(&y);
        self.push(y, shape, Op::Linear { x: x.id, w: w.id, b: b.id })
    }

    /// Row-wise `x − logsumexp(x)`.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let m = self.val(a);
        let mut out = m.clone();
        for i in 0..m.nrows() {
            let row = m.row(i);
            let mx = row.max();
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            for j in 0..m.ncols() {
                out[(i, j)] = m[(i, j)] - lse;
            }
        }
        let shape = Shape::of(&out);
        self.push(out, shape, Op::LogSoftmax(a.id))
    }

    /// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
    pub fn cross_entropy(&mut self, logp: Var, labels: &[usize]) -> Var {
        let m = self.val(logp);
        assert_eq!(m.nrows(), labels.len(), "cross_entropy: one label per row");
        let n = labels.len() as f64;
        let s: f64 = labels.iter().enumerate().map(|(i, &y)| -m[(i, y)]).sum();
        self.push(
            Mat::from_element(1, 1, s / n),
            Shape::Scalar,
            Op::CrossEntropy {
                logp: logp.id,
                labels: labels.to_vec(),
            },
        )
    }

    /// `(1/N) Σᵢ ‖zᵢ − μ_{g(i)}‖²` over the rows of `Z` grouped by `groups`.
    pub fn within_scatter(&mut self, z: Var, groups: &[usize]) -> Var {
        let zm = self.val(z);
        assert_eq!(zm.nrows(), groups.len(), "within_scatter: one group per row");
        let (_, means) = group_means(zm, groups);
        let mut centered = zm.clone();
        for (i, &g) in groups.iter().enumerate() {
            let mut row = centered.row_mut(i);
            row -= means.row(g);
        }
        let v = centered.norm_squared() / groups.len() as f64;
        self.push(
            Mat::from_element(1, 1, v),
            Shape::Scalar,
            Op::WithinScatter { z: z.id, centered },
        )
    }

    /// `(1/N) Σ_g n_g ‖μ_g − μ‖²` over the rows of `Z` grouped by `groups`.
    pub fn between_scatter(&mut self, z: Var, groups: &[usize]) -> Var {
        let zm = self.val(z);
        assert_eq!(zm.nrows(), groups.len(), "between_scatter: one group per row");
        let n = groups.len() as f64;
        let (counts, means) = group_means(zm, groups);
        let global = zm.row_mean();
        let mut v = 0.0;
        let mut offsets = Mat::zeros(zm.nrows(), zm.ncols());
        for (g, &c) in counts.iter().enumerate() {
            if c > 0 {
                v += c as f64 * (means.row(g) - &global).norm_squared();
            }
        }
        for (i, &g) in groups.iter().enumerate() {
            offsets.row_mut(i).copy_from(&(means.row(g) - &global));
        }
        self.push(
            Mat::from_element(1, 1, v / n),
            Shape::Scalar,
            Op::BetweenScatter { z: z.id, offsets },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.shape != Shape::Scalar {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                loss.shape
            )));
        }
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.id] = Some(Mat::from_element(1, 1, 1.0));
        let mut accumulations = 0usize;

        let mut acc = |adj: &mut Vec<Option<Mat>>, id: usize, g: Mat| {
            accumulations += 1;
            match &mut adj[id] {
                Some(a) => *a += g,
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, -&g);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, &g * *s),
                Op::Shift(a) => acc(&mut adj, *a, g.clone()),
                Op::Mul(a, b) => {
                    let ga = g.component_mul(&self.nodes[*b].value);
                    let gb = g.component_mul(&self.nodes[*a].value);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Div(a, b) => {
                    let av = self.nodes[*a].value[(0, 0)];
                    let bv = self.nodes[*b].value[(0, 0)];
                    let gv = g[(0, 0)];
                    acc(&mut adj, *a, Mat::from_element(1, 1, gv / bv));
                    acc(&mut adj, *b, Mat::from_element(1, 1, -gv * av / (bv * bv)));
                }
                Op::ScaleBy(s, m) => {
                    let sv = self.nodes[*s].value[(0, 0)];
                    let gs = g.component_mul(&self.nodes[*m].value).sum();
                    acc(&mut adj, *s, Mat::from_element(1, 1, gs));
                    acc(&mut adj, *m, &g * sv);
                }
                Op::Matmul(a, b) => {
                    let ga = &g * self.nodes[*b].value.transpose();
                    let gb = self.nodes[*a].value.transpose() * &g;
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.transpose()),
                Op::Congruence { c, w } => {
                    let mut gs = g.clone();
                    symmetrize_in_place(&mut gs);
                    let cv = &self.nodes[*c].value;
                    let wv = &self.nodes[*w].value;
                    let gc = wv * &gs * wv.transpose();
                    // W̄ = C W Ȳᵀ + Cᵀ W Ȳ, with Ȳ symmetric
                    let gw = (cv + cv.transpose()) * wv * &gs;
                    acc(&mut adj, *c, gc);
                    acc(&mut adj, *w, gw);
                }
                Op::AddIdentity(a) => acc(&mut adj, *a, g.clone()),
                Op::Spectral { x, f, eig, lambdas } => {
                    let mut gs = g.clone();
                    symmetrize_in_place(&mut gs);
                    let u = &eig.eigenvectors;
                    let mut inner = u.transpose() * gs * u;
                    let phi = frechet_kernel(*f, lambdas);
                    let n = lambdas.len();
                    for i in 0..n {
                        for j in 0..n {
                            inner[(i, j)] *= phi[i * n + j];
                        }
                    }
                    let mut gx = u * inner * u.transpose();
                    symmetrize_in_place(&mut gx);
                    acc(&mut adj, *x, gx);
                }
                Op::EigVals { x, eig } => {
                    let gx = eig.recompose(g.as_slice());
                    acc(&mut adj, *x, gx);
                }
                Op::FrobSq(a) => acc(&mut adj, *a, &self.nodes[*a].value * (2.0 * g[(0, 0)])),
                Op::Trace(a) => {
                    let (r, c) = self.nodes[*a].shape.dims();
                    acc(&mut adj, *a, Mat::identity(r, c) * g[(0, 0)]);
                }
                Op::OffdiagSq(a) => {
                    let mut ga = &self.nodes[*a].value * (2.0 * g[(0, 0)]);
                    for i in 0..ga.nrows().min(ga.ncols()) {
                        ga[(i, i)] = 0.0;
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[*a].shape.dims();
                    acc(&mut adj, *a, Mat::from_element(r, c, g[(0, 0)]));
                }
                Op::Softplus(a) => {
                    let ga = self.nodes[*a].value.map(sigmoid).component_mul(&g);
                    acc(&mut adj, *a, ga);
                }
                Op::Solve { a, b } => {
                    let av = &self.nodes[*a].value;
                    let gb = av
                        .transpose()
                        .lu()
                        .solve(&g)
                        .ok_or_else(|| Error::Numerical("singular matrix in solve adjoint".into()))?;
                    let ga = -&gb * node.value.transpose();
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::VecUpper(a) => {
                    let d = self.nodes[*a].shape.dims().0;
                    debug_assert_eq!(g.nrows(), tangent_len(d));
                    // symmetric split: √2·ḡ shared between (i,j) and (j,i)
                    acc(&mut adj, *a, unvec_upper_mat(d, g.as_slice()));
                }
                Op::StackRows(ids) => {
                    for (i, &r) in ids.iter().enumerate() {
                        acc(&mut adj, r, Mat::from_iterator(g.ncols(), 1, g.row(i).iter().copied()));
                    }
                }
                Op::MeanOf(ids) => {
                    let share = &g / ids.len() as f64;
                    for &i in ids {
                        acc(&mut adj, i, share.clone());
                    }
                }
                Op::Linear { x, w, b } => {
                    let gx = &g * &self.nodes[*w].value;
                    let gw = g.transpose() * &self.nodes[*x].value;
                    let gb = g.row_sum().transpose();
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *w, gw);
                    acc(&mut adj, *b, Mat::from_column_slice(gb.len(), 1, gb.as_slice()));
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for i in 0..y.nrows() {
                        let s: f64 = g.row(i).sum();
                        for j in 0..y.ncols() {
                            ga[(i, j)] -= y[(i, j)].exp() * s;
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::CrossEntropy { logp, labels } => {
                    let (r, c) = self.nodes[*logp].shape.dims();
                    let mut gl = Mat::zeros(r, c);
                    let scale = -g[(0, 0)] / labels.len() as f64;
                    for (i, &y) in labels.iter().enumerate() {
                        gl[(i, y)] = scale;
                    }
                    acc(&mut adj, *logp, gl);
                }
                Op::WithinScatter { z, centered } => {
                    let n = centered.nrows() as f64;
                    acc(&mut adj, *z, centered * (2.0 * g[(0, 0)] / n));
                }
                Op::BetweenScatter { z, offsets } => {
                    let n = offsets.nrows() as f64;
                    acc(&mut adj, *z, offsets * (2.0 * g[(0, 0)] / n));
                }
            }
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.shape).collect(),
            accumulations,
        })
    }
}
