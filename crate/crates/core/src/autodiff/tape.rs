use super::cholesky::{asymmetry, Cholesky};
use super::{AutodiffError, Tensor};

type Result<T> = std::result::Result<T, AutodiffError>;

/// Tolerated relative asymmetry of the matrix handed to [`Tape::solve_spd`].
const SYMMETRY_TOL: f64 = 1e-10;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Tanh,
    Sigmoid,
    Relu,
    Log,
    Softplus,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Discriminant of a recorded operation, for inspecting a built graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Unary,
    Binary,
    MatMul,
    Transpose,
    Sum,
    SliceRows,
    ConcatRows,
    StackRows,
    Blend,
    SolveSpd,
}

/// Deliberately wrong adjoint rules, used to prove that gradient checks
/// actually catch broken backward passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjointFault {
    /// The solve node propagates nothing into its matrix operand.
    DropSolveMatrixAdjoint,
}

enum Op {
    Leaf,
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sum(Var),
    SliceRows { src: Var, start: usize },
    ConcatRows(Vec<Var>),
    StackRows(Vec<Var>),
    Blend { prev: Var, next: Var, mask: Vec<f64> },
    SolveSpd { a: Var, b: Var, factor: Cholesky },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Unary(..) => OpKind::Unary,
            Op::Binary(..) => OpKind::Binary,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Sum(_) => OpKind::Sum,
            Op::SliceRows { .. } => OpKind::SliceRows,
            Op::ConcatRows(_) => OpKind::ConcatRows,
            Op::StackRows(_) => OpKind::StackRows,
            Op::Blend { .. } => OpKind::Blend,
            Op::SolveSpd { .. } => OpKind::SolveSpd,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Unary(u, _) => match u {
                UnaryOp::Neg => "neg",
                UnaryOp::Abs => "abs",
                UnaryOp::Tanh => "tanh",
                UnaryOp::Sigmoid => "sigmoid",
                UnaryOp::Relu => "relu",
                UnaryOp::Log => "log",
                UnaryOp::Softplus => "softplus",
                UnaryOp::Scale(_) => "scale",
            },
            Op::Binary(b, ..) => match b {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            },
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Sum(_) => "sum",
            Op::SliceRows { .. } => "slice_rows",
            Op::ConcatRows(_) => "concat_rows",
            Op::StackRows(_) => "stack_rows",
            Op::Blend { .. } => "blend",
            Op::SolveSpd { .. } => "solve_spd",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<AdjointFault>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, or zeros shaped like `like` when `v` did not influence the loss.
    pub fn wrt_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
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

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, contribution: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

/// Sums a full-shape contribution down to the shape of a broadcast operand.
fn reduce_to(contribution: Tensor, target: &Tensor) -> Tensor {
    if target.is_scalar() && !contribution.is_scalar() {
        Tensor::scalar(contribution.sum())
    } else {
        contribution
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a deliberately broken adjoint rule (test hook).
    pub fn with_fault(fault: AdjointFault) -> Self {
        Self {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Number of recorded nodes of the given kind.
    pub fn count(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Parent ids of a node, in operand order.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::Unary(_, a) | Op::Transpose(a) | Op::Sum(a) => vec![*a],
            Op::SliceRows { src, .. } => vec![*src],
            Op::Binary(_, a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::ConcatRows(parts) | Op::StackRows(parts) => parts.clone(),
            Op::Blend { prev, next, .. } => vec![*prev, *next],
            Op::SolveSpd { a, b, .. } => vec![*a, *b],
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite {
                node: id,
                op: op.name(),
            });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(id))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copies the value of `v` into a fresh constant: gradients stop here.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn unary(&mut self, kind: UnaryOp, a: Var) -> Result<Var> {
        let x = self.value(a);
        let out = match kind {
            UnaryOp::Neg => x.map(|v| -v),
            UnaryOp::Abs => x.map(f64::abs),
            UnaryOp::Tanh => x.map(f64::tanh),
            UnaryOp::Sigmoid => x.map(sigmoid),
            UnaryOp::Relu => x.map(|v| v.max(0.0)),
            UnaryOp::Log => x.map(f64::ln),
            UnaryOp::Softplus => x.map(softplus),
            UnaryOp::Scale(c) => x.map(|v| c * v),
        };
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn binary(&mut self, kind: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (rows, cols) = if x.shape() == y.shape() || y.is_scalar() {
            (x.rows(), x.cols())
        } else if x.is_scalar() {
            (y.rows(), y.cols())
        } else {
            return Err(AutodiffError::Shape(format!(
                "{kind:?} of {}x{} and {}x{}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols()
            )));
        };
        let xs = x.is_scalar();
        let ys = y.is_scalar();
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let u = x.data()[if xs { 0 } else { i }];
            let v = y.data()[if ys { 0 } else { i }];
            data.push(match kind {
                BinaryOp::Add => u + v,
                BinaryOp::Sub => u - v,
                BinaryOp::Mul => u * v,
                BinaryOp::Div => {
                    if v == 0.0 {
                        return Err(AutodiffError::DivisionByZero {
                            node: self.nodes.len(),
                        });
                    }
                    u / v
                }
            });
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, Op::Binary(kind, a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Abs, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Relu, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Softplus, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(UnaryOp::Scale(c), a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(AutodiffError::Shape(format!(
                "rows {start}..{} of {}x{}",
                start + len,
                x.rows(),
                x.cols()
            )));
        }
        let out = x.slice_rows(start, len);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::SliceRows { src: a, start }, rg)
    }

    /// Vertical concatenation of tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::Shape("concat of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(AutodiffError::Shape(format!(
                    "concat of {} and {} columns",
                    cols,
                    t.cols()
                )));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.any_grad(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Stacks vectors (each `d x 1` or `1 x d`) as the rows of an `n x d` matrix.
    pub fn stack_rows(&mut self, vectors: &[Var]) -> Result<Var> {
        let first = vectors
            .first()
            .ok_or_else(|| AutodiffError::Shape("stack of nothing".into()))?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(d * vectors.len());
        for &v in vectors {
            let t = self.value(v);
            if t.len() != d || (t.rows() != 1 && t.cols() != 1) {
                return Err(AutodiffError::Shape(format!(
                    "stacking {}x{} as a row of width {d}",
                    t.rows(),
                    t.cols()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vectors.len(), d, data)?;
        let rg = self.any_grad(vectors);
        self.push(out, Op::StackRows(vectors.to_vec()), rg)
    }

    /// `mask ⊙ prev + (1 - mask) ⊙ next` with a constant mask.
    pub fn blend(&mut self, prev: Var, next: Var, mask: Vec<f64>) -> Result<Var> {
        let (p, n) = (self.value(prev), self.value(next));
        if p.shape() != n.shape() || mask.len() != p.len() {
            return Err(AutodiffError::Shape(format!(
                "blend of {}x{}, {}x{} with mask of {}",
                p.rows(),
                p.cols(),
                n.rows(),
                n.cols(),
                mask.len()
            )));
        }
        let data = p
            .data()
            .iter()
            .zip(n.data())
            .zip(&mask)
            .map(|((&a, &b), &m)| m * a + (1.0 - m) * b)
            .collect();
        let out = Tensor::new(p.rows(), p.cols(), data)?;
        let rg = self.any_grad(&[prev, next]);
        self.push(out, Op::Blend { prev, next, mask }, rg)
    }

    /// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
    pub fn solve_spd(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.rows() != am.cols() || bm.rows() != am.rows() {
            return Err(AutodiffError::Shape(format!(
                "solve of {}x{} with rhs {}x{}",
                am.rows(),
                am.cols(),
                bm.rows(),
                bm.cols()
            )));
        }
        let asym = asymmetry(am);
        if asym > SYMMETRY_TOL {
            return Err(AutodiffError::NotSymmetric(asym));
        }
        let factor = Cholesky::factor(am)?;
        let x = factor.solve(bm)?;
        let rg = self.any_grad(&[a, b]);
        self.push(x, Op::SolveSpd { a, b, factor }, rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !g.is_finite() {
                return Err(AutodiffError::NonFiniteAdjoint {
                    node: i,
                    op: node.op.name(),
                });
            }
            if node.requires_grad {
                self.propagate(node, &g, &mut adj)?;
            }
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<()> {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let y = &node.value;
                let local = match kind {
                    UnaryOp::Neg => g.map(|v| -v),
                    UnaryOp::Abs => g.zip_map(x, |gv, xv| gv * sign(xv)),
                    UnaryOp::Tanh => g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv)),
                    UnaryOp::Sigmoid => g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)),
                    UnaryOp::Relu => g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
                    UnaryOp::Log => g.zip_map(x, |gv, xv| gv / xv),
                    UnaryOp::Softplus => g.zip_map(x, |gv, xv| gv * sigmoid(xv)),
                    UnaryOp::Scale(c) => g.map(|v| c * v),
                };
                accumulate(adj, *a, local);
            }
            Op::Binary(kind, a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (xs, ys) = (x.is_scalar(), y.is_scalar());
                let at = |t: &Tensor, scalar: bool, i: usize| t.data()[if scalar { 0 } else { i }];
                let len = g.len();
                let (rows, cols) = (g.rows(), g.cols());
                if wants(*a) {
                    let mut ga = Vec::with_capacity(len);
                    for i in 0..len {
                        let gv = g.data()[i];
                        ga.push(match kind {
                            BinaryOp::Add | BinaryOp::Sub => gv,
                            BinaryOp::Mul => gv * at(y, ys, i),
                            BinaryOp::Div => gv / at(y, ys, i),
                        });
                    }
                    let full = Tensor::new(rows, cols, ga)?;
                    accumulate(adj, *a, reduce_to(full, x));
                }
                if wants(*b) {
                    let mut gb = Vec::with_capacity(len);
                    for i in 0..len {
                        let gv = g.data()[i];
                        gb.push(match kind {
                            BinaryOp::Add => gv,
                            BinaryOp::Sub => -gv,
                            BinaryOp::Mul => gv * at(x, xs, i),
                            BinaryOp::Div => {
                                let yv = at(y, ys, i);
                                -gv * node.value.data()[i] / yv
                            }
                        });
                    }
                    let full = Tensor::new(rows, cols, gb)?;
                    accumulate(adj, *b, reduce_to(full, y));
                }
            }
            Op::MatMul(a, b) => {
                if wants(*a) {
                    accumulate(adj, *a, g.matmul_t(self.value(*b))?);
                }
                if wants(*b) {
                    accumulate(adj, *b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::Transpose(a) => accumulate(adj, *a, g.transpose()),
            Op::Sum(a) => {
                let x = self.value(*a);
                accumulate(adj, *a, Tensor::filled(x.rows(), x.cols(), g.item()));
            }
            Op::SliceRows { src, start } => {
                if wants(*src) {
                    let x = self.value(*src);
                    let mut full = Tensor::zeros(x.rows(), x.cols());
                    let c = x.cols();
                    full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    accumulate(adj, *src, full);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    if wants(p) {
                        accumulate(adj, p, g.slice_rows(offset, t.rows()));
                    }
                    offset += t.rows();
                }
            }
            Op::StackRows(vectors) => {
                let d = g.cols();
                for (r, &v) in vectors.iter().enumerate() {
                    if wants(v) {
                        let t = self.value(v);
                        let piece = g.data()[r * d..(r + 1) * d].to_vec();
                        accumulate(adj, v, Tensor::new(t.rows(), t.cols(), piece)?);
                    }
                }
            }
            Op::Blend { prev, next, mask } => {
                if wants(*prev) {
                    let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    accumulate(adj, *prev, Tensor::new(g.rows(), g.cols(), data)?);
                }
                if wants(*next) {
                    let data = g
                        .data()
                        .iter()
                        .zip(mask)
                        .map(|(gv, m)| gv * (1.0 - m))
                        .collect();
                    accumulate(adj, *next, Tensor::new(g.rows(), g.cols(), data)?);
                }
            }
            Op::SolveSpd { a, b, factor } => {
                // x = A⁻¹ b  =>  b̄ = A⁻¹ x̄,  Ā = -sym(b̄ xᵀ)
                let gb = factor.solve(g)?;
                if wants(*a) && self.fault != Some(AdjointFault::DropSolveMatrixAdjoint) {
                    let x = &node.value;
                    let outer = gb.matmul_t(x)?;
                    let n = outer.rows();
                    let mut ga = Tensor::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            ga.set(i, j, -0.5 * (outer.get(i, j) + outer.get(j, i)));
                        }
                    }
                    accumulate(adj, *a, ga);
                }
                if wants(*b) {
                    accumulate(adj, *b, gb);
                }
            }
        }
        Ok(())
    }
}
