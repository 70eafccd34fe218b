//! Tape-based reverse-mode differentiation over dense 2-D tensors.
//!
//! A [`Graph`] records every operation as a node in creation order, so the
//! tape is already topologically sorted and [`Graph::backward`] simply walks
//! it in reverse. Parameters are copied in from a [`ParamStore`] as leaves and
//! their gradients are pushed back with [`Graph::accumulate_param_grads`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Element, ParamId, ParamStore, Tensor};
use crate::error::{contract_err, shape_err, Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, F),
    ScaleBy(Var, Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<F> },
    Dropout { x: Var, mask: Vec<F> },
    Conv1d { x: Var, w: Var },
    GatherRows { x: Var, index: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<F> {
    shape: Vec<usize>,
    value: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: Op<F>,
}

/// Computation tape. Single-threaded; build one per forward pass.
pub struct Graph<F: Element> {
    nodes: Vec<Node<F>>,
    rng: ChaCha8Rng,
    backward_done: bool,
}

impl<F: Element> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims2(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err!("expected a 2-D operand, got shape {s:?}")),
    }
}

impl<F: Element> Graph<F> {
    pub fn new() -> Self {
        Self::with_seed(0)
    }

    /// Graph whose dropout masks are drawn from a stream seeded with `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<F>, op: Op<F>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<F> {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: &Tensor<F>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<F>) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, false))
    }

    /// Leaf that tracks its own gradient, readable through [`Graph::grad`].
    pub fn leaf(&mut self, t: &Tensor<F>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Param(id),
            t.requires_grad,
        )
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.node(v).value
    }

    pub fn rows(&self, v: Var) -> usize {
        self.node(v).shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self, v: Var) -> usize {
        self.node(v).shape.last().copied().unwrap_or(1)
    }

    pub fn tensor(&self, v: Var) -> Tensor<F> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.node(v).grad.as_deref()
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.shape(a))?;
        let (k2, n) = dims2(self.shape(b))?;
        if k != k2 {
            return Err(shape_err!("matmul inner dims differ: {m}x{k} by {k2}x{n}"));
        }
        let mut out = vec![F::ZERO; m * n];
        F::gemm(
            m,
            k,
            n,
            F::ONE,
            self.value(a),
            k as isize,
            1,
            self.value(b),
            n as isize,
            1,
            F::ZERO,
            &mut out,
            n as isize,
            1,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2(self.shape(a))?;
        let out = transpose_data(self.value(a), r, c);
        let rg = self.rg(&[a]);
        Ok(self.push(vec![c, r], out, Op::Transpose(a), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op<F>, f: impl Fn(F, F) -> F) -> Var {
        let out: Vec<F> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op, rg)
    }

    fn map(&mut self, a: Var, op: Op<F>, f: impl Fn(F) -> F) -> Var {
        let out: Vec<F> = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    fn check_row(&self, x: Var, row: Var, what: &str) -> Result<(usize, usize)> {
        let (r, c) = dims2(self.shape(x))?;
        if self.node(row).value.len() != c {
            return Err(shape_err!(
                "{what}: row vector of {} entries against {c} columns",
                self.node(row).value.len()
            ));
        }
        Ok((r, c))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, c) = self.check_row(x, row, "add_row")?;
        let r = self.value(row);
        let out: Vec<F> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + r[i % c])
            .collect();
        let rg = self.rg(&[x, row]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::AddRow(x, row), rg))
    }

    /// Multiplies every row of `x` elementwise by a length-`cols` vector.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, c) = self.check_row(x, row, "mul_row")?;
        let r = self.value(row);
        let out: Vec<F> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v * r[i % c])
            .collect();
        let rg = self.rg(&[x, row]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::MulRow(x, row), rg))
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        self.map(x, Op::Scale(x, c), |v| v * c)
    }

    /// Multiplies `x` by a one-element tensor `s`, differentiable in both.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.node(s).value.len() != 1 {
            return Err(shape_err!("scale_by expects a scalar, got {:?}", self.shape(s)));
        }
        let c = self.value(s)[0];
        let out: Vec<F> = self.value(x).iter().map(|&v| v * c).collect();
        let rg = self.rg(&[x, s]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::ScaleBy(x, s), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| if v > F::ZERO { v } else { F::ZERO })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), |v| v.abs())
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x), |v| v * v)
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let c = self.cols(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().copied().fold(row[0], F::max);
            let mut sum = F::ZERO;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let rg = self.rg(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Softmax(x), rg)
    }

    /// Normalizes each row to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let c = self.cols(x);
        let eps = F::from_f64(LAYER_NORM_EPS);
        let inv_n = F::from_f64(1.0 / c as f64);
        let mut out = self.value(x).to_vec();
        let mut inv_std = Vec::with_capacity(out.len() / c.max(1));
        for row in out.chunks_mut(c) {
            let mean = row.iter().copied().sum::<F>() * inv_n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_n;
            let is = F::ONE / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(&[x]);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::LayerNorm { x, inv_std }, rg)
    }

    /// Inverted dropout. Returns `x` itself when `train` is off or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout rate {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = F::from_f64(1.0 / (1.0 - p));
        let n = self.node(x).value.len();
        let mask: Vec<F> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < p {
                    F::ZERO
                } else {
                    keep
                }
            })
            .collect();
        let out: Vec<F> = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let rg = self.rg(&[x]);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::Dropout { x, mask }, rg))
    }

    /// Same-padded 1-D convolution over rows: `x` is `T x C_in`, `w` is
    /// `k x C_in x C_out` with odd `k`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (t, cin) = dims2(self.shape(x))?;
        let (k, wcin, cout) = match self.shape(w) {
            [k, a, b] => (*k, *a, *b),
            s => return Err(shape_err!("conv1d kernel must be k x C_in x C_out, got {s:?}")),
        };
        if k % 2 == 0 {
            return Err(Error::Parameter(format!(
                "conv1d kernel size {k} is even; same padding needs an odd size"
            )));
        }
        if wcin != cin {
            return Err(shape_err!("conv1d input has {cin} channels, kernel expects {wcin}"));
        }
        let mut out = vec![F::ZERO; t * cout];
        let xv = self.value(x);
        let wv = self.value(w);
        for j in 0..k {
            let Some((t0, t1, s0)) = conv_range(t, j, k) else {
                continue;
            };
            F::gemm(
                t1 - t0,
                cin,
                cout,
                F::ONE,
                &xv[s0 * cin..],
                cin as isize,
                1,
                &wv[j * cin * cout..(j + 1) * cin * cout],
                cout as isize,
                1,
                F::ONE,
                &mut out[t0 * cout..],
                cout as isize,
                1,
            );
        }
        let rg = self.rg(&[x, w]);
        Ok(self.push(vec![t, cout], out, Op::Conv1d { x, w }, rg))
    }

    /// Selects rows of `x` by index; repeated indices copy rows.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (r, c) = dims2(self.shape(x))?;
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(shape_err!("row index {bad} out of range for {r} rows"));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            out.extend_from_slice(&xv[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            vec![index.len(), c],
            out,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("concat_cols of zero tensors"))?;
        let (r, _) = dims2(self.shape(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = dims2(self.shape(p))?;
            if pr != r {
                return Err(shape_err!("concat_cols row counts differ: {r} vs {pr}"));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![r, total], out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims2(self.shape(x))?;
        if start >= end || end > c {
            return Err(shape_err!("column slice {start}..{end} invalid for {c} columns"));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&xv[i * c + start..i * c + end]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![r, end - start], out, Op::SliceCols { x, start }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.node(x).value.len();
        let s: F = self.value(x).iter().copied().sum();
        let m = if n == 0 { F::ZERO } else { s / F::from_f64(n as f64) };
        let rg = self.rg(&[x]);
        self.push(vec![1], vec![m], Op::Mean(x), rg)
    }

    // ---- reverse pass -----------------------------------------------------

    /// Accumulates gradients of the scalar `loss` into every reachable node
    /// that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(contract_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        if self.backward_done {
            return Err(contract_err!("backward already ran on this graph"));
        }
        self.backward_done = true;
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![F::ONE]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &gy)?;
            self.nodes[i].grad = Some(gy);
            for (v, g) in contributions {
                self.acc(v, g);
            }
        }
        Ok(())
    }

    fn acc(&mut self, v: Var, g: Vec<F>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, x)| *b += *x),
            None => node.grad = Some(g),
        }
    }

    fn local_grads(&self, i: usize, gy: &[F]) -> Result<Vec<(Var, Vec<F>)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        let want = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(self.shape(*a))?;
                let n = self.cols(*b);
                if want(a) {
                    // dA = dC * B^T
                    let mut ga = vec![F::ZERO; m * k];
                    F::gemm(
                        m,
                        n,
                        k,
                        F::ONE,
                        gy,
                        n as isize,
                        1,
                        self.value(*b),
                        1,
                        n as isize,
                        F::ZERO,
                        &mut ga,
                        k as isize,
                        1,
                    );
                    out.push((*a, ga));
                }
                if want(b) {
                    // dB = A^T * dC
                    let mut gb = vec![F::ZERO; k * n];
                    F::gemm(
                        k,
                        m,
                        n,
                        F::ONE,
                        self.value(*a),
                        1,
                        k as isize,
                        gy,
                        n as isize,
                        1,
                        F::ZERO,
                        &mut gb,
                        n as isize,
                        1,
                    );
                    out.push((*b, gb));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = dims2(self.shape(*a))?;
                out.push((*a, transpose_data(gy, c, r)));
            }
            Op::Add(a, b) => {
                out.push((*a, gy.to_vec()));
                out.push((*b, gy.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, gy.to_vec()));
                out.push((*b, gy.iter().map(|&g| -g).collect()));
            }
            Op::Mul(a, b) => {
                if want(a) {
                    out.push((*a, mul_vec(gy, self.value(*b))));
                }
                if want(b) {
                    out.push((*b, mul_vec(gy, self.value(*a))));
                }
            }
            Op::AddRow(x, row) => {
                let c = self.cols(*x);
                out.push((*x, gy.to_vec()));
                if want(row) {
                    out.push((*row, column_sums(gy, c)));
                }
            }
            Op::MulRow(x, row) => {
                let c = self.cols(*x);
                let r = self.value(*row);
                if want(x) {
                    let g = gy.iter().enumerate().map(|(j, &g)| g * r[j % c]).collect();
                    out.push((*x, g));
                }
                if want(row) {
                    out.push((*row, column_sums(&mul_vec(gy, self.value(*x)), c)));
                }
            }
            Op::Scale(x, c) => out.push((*x, gy.iter().map(|&g| g * *c).collect())),
            Op::ScaleBy(x, s) => {
                let c = self.value(*s)[0];
                if want(x) {
                    out.push((*x, gy.iter().map(|&g| g * c).collect()));
                }
                if want(s) {
                    let d = gy.iter().zip(self.value(*x)).map(|(&g, &v)| g * v).sum();
                    out.push((*s, vec![d]));
                }
            }
            Op::Relu(x) => {
                let g = gy
                    .iter()
                    .zip(self.value(*x))
                    .map(|(&g, &v)| if v > F::ZERO { g } else { F::ZERO })
                    .collect();
                out.push((*x, g));
            }
            Op::Abs(x) => {
                let g = gy
                    .iter()
                    .zip(self.value(*x))
                    .map(|(&g, &v)| {
                        if v > F::ZERO {
                            g
                        } else if v < F::ZERO {
                            -g
                        } else {
                            F::ZERO
                        }
                    })
                    .collect();
                out.push((*x, g));
            }
            Op::Square(x) => {
                let two = F::from_f64(2.0);
                let g = gy
                    .iter()
                    .zip(self.value(*x))
                    .map(|(&g, &v)| two * v * g)
                    .collect();
                out.push((*x, g));
            }
            Op::Softmax(x) => {
                let c = self.cols(*x);
                let mut g = vec![F::ZERO; y.len()];
                for ((gr, yr), dr) in g.chunks_mut(c).zip(y.chunks(c)).zip(gy.chunks(c)) {
                    let dot: F = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                    for ((o, &yv), &dv) in gr.iter_mut().zip(yr).zip(dr) {
                        *o = yv * (dv - dot);
                    }
                }
                out.push((*x, g));
            }
            Op::LayerNorm { x, inv_std } => {
                let c = self.cols(*x);
                let inv_n = F::from_f64(1.0 / c as f64);
                let mut g = vec![F::ZERO; y.len()];
                for (((gr, yr), dr), &is) in g
                    .chunks_mut(c)
                    .zip(y.chunks(c))
                    .zip(gy.chunks(c))
                    .zip(inv_std)
                {
                    let mean_d = dr.iter().copied().sum::<F>() * inv_n;
                    let mean_dy = dr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<F>() * inv_n;
                    for ((o, &yv), &dv) in gr.iter_mut().zip(yr).zip(dr) {
                        *o = is * (dv - mean_d - yv * mean_dy);
                    }
                }
                out.push((*x, g));
            }
            Op::Dropout { x, mask } => out.push((*x, mul_vec(gy, mask))),
            Op::Conv1d { x, w } => {
                let (t, cin) = dims2(self.shape(*x))?;
                let k = self.shape(*w)[0];
                let cout = self.shape(*w)[2];
                let xv = self.value(*x);
                let wv = self.value(*w);
                let mut gx = want(x).then(|| vec![F::ZERO; t * cin]);
                let mut gw = want(w).then(|| vec![F::ZERO; k * cin * cout]);
                for j in 0..k {
                    let Some((t0, t1, s0)) = conv_range(t, j, k) else {
                        continue;
                    };
                    let rows = t1 - t0;
                    let wj = &wv[j * cin * cout..(j + 1) * cin * cout];
                    if let Some(gx) = gx.as_mut() {
                        // dX[s0..] += dY[t0..t1] * W_j^T
                        F::gemm(
                            rows,
                            cout,
                            cin,
                            F::ONE,
                            &gy[t0 * cout..],
                            cout as isize,
                            1,
                            wj,
                            1,
                            cout as isize,
                            F::ONE,
                            &mut gx[s0 * cin..],
                            cin as isize,
                            1,
                        );
                    }
                    if let Some(gw) = gw.as_mut() {
                        // dW_j += X[s0..]^T * dY[t0..t1]
                        F::gemm(
                            cin,
                            rows,
                            cout,
                            F::ONE,
                            &xv[s0 * cin..],
                            1,
                            cin as isize,
                            &gy[t0 * cout..],
                            cout as isize,
                            1,
                            F::ONE,
                            &mut gw[j * cin * cout..(j + 1) * cin * cout],
                            cout as isize,
                            1,
                        );
                    }
                }
                if let Some(gx) = gx {
                    out.push((*x, gx));
                }
                if let Some(gw) = gw {
                    out.push((*w, gw));
                }
            }
            Op::GatherRows { x, index } => {
                let (r, c) = dims2(self.shape(*x))?;
                let mut g = vec![F::ZERO; r * c];
                for (o, &src) in index.iter().enumerate() {
                    for (a, &b) in g[src * c..(src + 1) * c]
                        .iter_mut()
                        .zip(&gy[o * c..(o + 1) * c])
                    {
                        *a += b;
                    }
                }
                out.push((*x, g));
            }
            Op::ConcatCols(parts) => {
                let total = self.cols(Var(i));
                let rows = self.rows(Var(i));
                let mut offset = 0;
                for &p in parts {
                    let w = self.cols(p);
                    if want(&p) {
                        let mut g = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            g.extend_from_slice(&gy[r * total + offset..r * total + offset + w]);
                        }
                        out.push((p, g));
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let (r, c) = dims2(self.shape(*x))?;
                let w = self.cols(Var(i));
                let mut g = vec![F::ZERO; r * c];
                for row in 0..r {
                    g[row * c + start..row * c + start + w]
                        .copy_from_slice(&gy[row * w..(row + 1) * w]);
                }
                out.push((*x, g));
            }
            Op::Sum(x) => {
                let n = self.node(*x).value.len();
                out.push((*x, vec![gy[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.node(*x).value.len();
                let g = gy[0] / F::from_f64(n.max(1) as f64);
                out.push((*x, vec![g; n]));
            }
        }
        Ok(out)
    }

    /// Adds gradients of every parameter leaf into `store`. Parameters that
    /// appear on the tape but were not reached receive zeros.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<F>) -> Result<()> {
        for node in &self.nodes {
            if let Op::Param(id) = node.op {
                if !node.requires_grad {
                    continue;
                }
                match &node.grad {
                    Some(g) => store.get_mut(id).accumulate_grad(g)?,
                    None => store
                        .get_mut(id)
                        .accumulate_grad(&vec![F::ZERO; node.value.len()])?,
                }
            }
        }
        Ok(())
    }
}

/// Output rows `[t0, t1)` that kernel tap `j` contributes to, and the first
/// input row `s0` they read.
fn conv_range(t: usize, j: usize, k: usize) -> Option<(usize, usize, usize)> {
    let half = k / 2;
    let (t0, t1) = if j < half {
        let shift = half - j;
        (shift, t)
    } else {
        let shift = j - half;
        (0, t.saturating_sub(shift))
    };
    if t0 >= t1 {
        return None;
    }
    let s0 = t0 + j - half;
    Some((t0, t1, s0))
}

fn transpose_data<F: Element>(v: &[F], r: usize, c: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = v[i * c + j];
        }
    }
    out
}

fn mul_vec<F: Element>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

fn column_sums<F: Element>(v: &[F], c: usize) -> Vec<F> {
    let mut s = vec![F::ZERO; c];
    for row in v.chunks(c) {
        for (a, &b) in s.iter_mut().zip(row) {
            *a += b;
        }
    }
    s
}
