//! Reverse-mode autodiff on a flat op tape.
//!
//! A [`Graph`] records every op eagerly (values are computed at insertion
//! time) and `backward` walks the tape in reverse, so parents always carry
//! smaller ids than their consumers and each node is visited exactly once.
//! Reduction order inside every kernel is fixed, which keeps training runs
//! bit-reproducible for a given seed.

use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("fully masked softmax row {row}")]
    FullyMaskedRow { row: usize },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Attention mask for `softmax_rows`. `Causal` allows column j at row i iff
/// j <= i; `Full` allows everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    Full,
    Causal,
}

impl Mask {
    #[inline]
    pub fn allows(self, row: usize, col: usize) -> bool {
        match self {
            Mask::Full => true,
            Mask::Causal => col <= row,
        }
    }
}

enum Op<F> {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, F),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    SoftmaxRows {
        x: NodeId,
    },
    TakeRows {
        x: NodeId,
        rows: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
}

enum Aux<F> {
    LayerNorm { xhat: Vec<F>, rstd: Vec<F> },
}

struct Node<F> {
    op: Op<F>,
    value: Tensor<F>,
    needs_grad: bool,
    aux: Option<Aux<F>>,
}

pub struct Graph<F = f32> {
    nodes: Vec<Node<F>>,
}

const LN_EPS: f64 = 1e-5;

impl<F: Scalar> Graph<F>
where
    StandardNormal: Distribution<F>,
{
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn check_finite(&self, id: NodeId, context: &str) -> Result<(), NumericsError> {
        if self.nodes[id.0].value.is_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>, needs_grad: bool, aux: Option<Aux<F>>) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            aux,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf with gradient tracking: a trainable parameter.
    pub fn param(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Leaf, value, true, None)
    }

    /// Leaf without gradient tracking: inputs, targets, overrides.
    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Leaf, value, false, None)
    }

    /// `A (m×k) · B (k×n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![F::zero(); m * n];
        matmul_acc(ta.data(), tb.data(), m, k, n, &mut out);
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(
            Op::MatMul(a, b),
            Tensor::from_vec(&[m, n], out).unwrap(),
            ng,
            None,
        )
    }

    /// `A (m×k) · Bᵀ` with `B (n×k)`; used for attention scores.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
        let mut out = vec![F::zero(); m * n];
        matmul_nt_acc(ta.data(), tb.data(), m, k, n, &mut out);
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(
            Op::MatMulNT(a, b),
            Tensor::from_vec(&[m, n], out).unwrap(),
            ng,
            None,
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "add shapes");
        let data: Vec<F> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let ng = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(
            Op::Add(a, b),
            Tensor::from_vec(&shape, data).unwrap(),
            ng,
            None,
        )
    }

    /// Broadcast-add a bias row over every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (tx, tb) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(tb.len(), n, "add_row bias length");
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for (j, &b) in tb.data().iter().enumerate() {
                data.push(tx.at(i, j) + b);
            }
        }
        let ng = self.nodes[x.0].needs_grad || self.nodes[bias.0].needs_grad;
        self.push(
            Op::AddRow(x, bias),
            Tensor::from_vec(&[m, n], data).unwrap(),
            ng,
            None,
        )
    }

    pub fn scale(&mut self, x: NodeId, s: F) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let data: Vec<F> = tx.data().iter().map(|&v| v * s).collect();
        let shape = tx.shape().to_vec();
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Op::Scale(x, s),
            Tensor::from_vec(&shape, data).unwrap(),
            ng,
            None,
        )
    }

    /// GELU, tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let c = F::from_f64((2.0 / std::f64::consts::PI).sqrt());
        let a = F::from_f64(0.044715);
        let half = F::from_f64(0.5);
        let data: Vec<F> = tx
            .data()
            .iter()
            .map(|&v| {
                let u = c * (v + a * v * v * v);
                half * v * (F::one() + u.tanh())
            })
            .collect();
        let shape = tx.shape().to_vec();
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Op::Gelu(x),
            Tensor::from_vec(&shape, data).unwrap(),
            ng,
            None,
        )
    }

    /// Row-wise layer norm with learned gain and bias. Population variance,
    /// eps = 1e-5, applied per row.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (tx, tg, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
        );
        let (m, n) = (tx.rows(), tx.cols());
        assert!(n > 0, "layer_norm on zero-length rows");
        assert_eq!(tg.len(), n, "layer_norm gain length");
        assert_eq!(tb.len(), n, "layer_norm bias length");
        let inv_n = F::from_f64(1.0 / n as f64);
        let eps = F::from_f64(LN_EPS);
        let mut xhat = vec![F::zero(); m * n];
        let mut rstd = vec![F::zero(); m];
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let row = tx.row(i);
            let mut mean = F::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_n;
            let mut var = F::zero();
            for &v in row {
                let d = v - mean;
                var = var + d * d;
            }
            var = var * inv_n;
            let r = F::one() / (var + eps).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let ng = self.nodes[x.0].needs_grad
            || self.nodes[gain.0].needs_grad
            || self.nodes[bias.0].needs_grad;
        self.push(
            Op::LayerNorm { x, gain, bias },
            Tensor::from_vec(&[m, n], out).unwrap(),
            ng,
            Some(Aux::LayerNorm { xhat, rstd }),
        )
    }

    /// Max-subtracted softmax over each row; masked entries are exactly 0.
    pub fn softmax_rows(&mut self, x: NodeId, mask: Mask) -> Result<NodeId, NumericsError> {
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let row = tx.row(i);
            let mut max = F::neg_infinity();
            for j in 0..n {
                if mask.allows(i, j) && row[j] > max {
                    max = row[j];
                }
            }
            if !max.is_finite() {
                return Err(NumericsError::FullyMaskedRow { row: i });
            }
            let mut sum = F::zero();
            for j in 0..n {
                if mask.allows(i, j) {
                    let e = (row[j] - max).exp();
                    out[i * n + j] = e;
                    sum = sum + e;
                }
            }
            let inv = F::one() / sum;
            for j in 0..n {
                out[i * n + j] = out[i * n + j] * inv;
            }
        }
        let ng = self.nodes[x.0].needs_grad;
        Ok(self.push(
            Op::SoftmaxRows { x },
            Tensor::from_vec(&[m, n], out).unwrap(),
            ng,
            None,
        ))
    }

    /// Gather the given rows (duplicates allowed) into a new matrix.
    pub fn take_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let n = tx.cols();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(tx.row(r));
        }
        let ng = self.nodes[x.0].needs_grad;
        self.push(
            Op::TakeRows {
                x,
                rows: rows.to_vec(),
            },
            Tensor::from_vec(&[rows.len(), n], data).unwrap(),
            ng,
            None,
        )
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let ng = parts.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::from_vec(&[m, total], data).unwrap(),
            ng,
            None,
        )
    }

    /// Mean over all elements of the squared difference.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, NumericsError> {
        let (tp, tt) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
        if tp.shape() != tt.shape() {
            return Err(NumericsError::Shape {
                op: "mse_loss",
                detail: format!("pred {:?} vs target {:?}", tp.shape(), tt.shape()),
            });
        }
        let inv_n = F::from_f64(1.0 / tp.len() as f64);
        let mut acc = F::zero();
        for (&p, &t) in tp.data().iter().zip(tt.data()) {
            let d = p - t;
            acc = acc + d * d;
        }
        let loss = acc * inv_n;
        if !loss.is_finite() {
            return Err(NumericsError::NonFinite {
                context: "mse_loss".to_string(),
            });
        }
        let ng = self.nodes[pred.0].needs_grad;
        Ok(self.push(Op::MseLoss { pred, target }, Tensor::scalar(loss), ng, None))
    }

    /// Reverse pass from a scalar root. Returns per-node gradient slots;
    /// read them through [`Graph::grad_of`].
    pub fn backward(&mut self, root: NodeId) -> Gradients<F> {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(F::one()));
        for id in (0..=root.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Gradients { grads }
    }

    fn accumulate(grads: &mut [Option<Tensor<F>>], id: NodeId, delta: Tensor<F>) {
        match &mut grads[id.0] {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a = *a + b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: usize, gout: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.cols();
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![F::zero(); m * k];
                    matmul_nt_acc(gout.data(), tb.data(), m, n, k, &mut da);
                    Self::accumulate(grads, *a, Tensor::from_vec(&[m, k], da).unwrap());
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![F::zero(); k * n];
                    matmul_tn_acc(ta.data(), gout.data(), k, m, n, &mut db);
                    Self::accumulate(grads, *b, Tensor::from_vec(&[k, n], db).unwrap());
                }
            }
            Op::MatMulNT(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k) = (ta.rows(), ta.cols());
                let n = tb.rows();
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![F::zero(); m * k];
                    matmul_acc(gout.data(), tb.data(), m, n, k, &mut da);
                    Self::accumulate(grads, *a, Tensor::from_vec(&[m, k], da).unwrap());
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![F::zero(); n * k];
                    matmul_tn_acc(gout.data(), ta.data(), n, m, k, &mut db);
                    Self::accumulate(grads, *b, Tensor::from_vec(&[n, k], db).unwrap());
                }
            }
            Op::Add(a, b) => {
                if self.nodes[a.0].needs_grad {
                    Self::accumulate(grads, *a, gout.clone());
                }
                if self.nodes[b.0].needs_grad {
                    Self::accumulate(grads, *b, gout.clone());
                }
            }
            Op::AddRow(x, bias) => {
                if self.nodes[x.0].needs_grad {
                    Self::accumulate(grads, *x, gout.clone());
                }
                if self.nodes[bias.0].needs_grad {
                    let (m, n) = (gout.rows(), gout.cols());
                    let mut db = vec![F::zero(); n];
                    for i in 0..m {
                        for (j, d) in db.iter_mut().enumerate() {
                            *d = *d + gout.at(i, j);
                        }
                    }
                    let shape = self.nodes[bias.0].value.shape().to_vec();
                    Self::accumulate(grads, *bias, Tensor::from_vec(&shape, db).unwrap());
                }
            }
            Op::Scale(x, s) => {
                if self.nodes[x.0].needs_grad {
                    let data: Vec<F> = gout.data().iter().map(|&v| v * *s).collect();
                    let shape = gout.shape().to_vec();
                    Self::accumulate(grads, *x, Tensor::from_vec(&shape, data).unwrap());
                }
            }
            Op::Gelu(x) => {
                if self.nodes[x.0].needs_grad {
                    let tx = &self.nodes[x.0].value;
                    let c = F::from_f64((2.0 / std::f64::consts::PI).sqrt());
                    let a = F::from_f64(0.044715);
                    let half = F::from_f64(0.5);
                    let three = F::from_f64(3.0);
                    let data: Vec<F> = tx
                        .data()
                        .iter()
                        .zip(gout.data())
                        .map(|(&v, &g)| {
                            let u = c * (v + a * v * v * v);
                            let t = u.tanh();
                            let sech2 = F::one() - t * t;
                            let du = c * (F::one() + three * a * v * v);
                            let d = half * (F::one() + t) + half * v * sech2 * du;
                            g * d
                        })
                        .collect();
                    let shape = tx.shape().to_vec();
                    Self::accumulate(grads, *x, Tensor::from_vec(&shape, data).unwrap());
                }
            }
            Op::LayerNorm { x, gain, bias } => {
                let Some(Aux::LayerNorm { xhat, rstd }) = &self.nodes[id].aux else {
                    unreachable!("layer_norm node without aux");
                };
                let tg = &self.nodes[gain.0].value;
                let (m, n) = (gout.rows(), gout.cols());
                let inv_n = F::from_f64(1.0 / n as f64);
                if self.nodes[gain.0].needs_grad {
                    let mut dg = vec![F::zero(); n];
                    for i in 0..m {
                        for (j, d) in dg.iter_mut().enumerate() {
                            *d = *d + gout.at(i, j) * xhat[i * n + j];
                        }
                    }
                    let shape = tg.shape().to_vec();
                    Self::accumulate(grads, *gain, Tensor::from_vec(&shape, dg).unwrap());
                }
                if self.nodes[bias.0].needs_grad {
                    let mut db = vec![F::zero(); n];
                    for i in 0..m {
                        for (j, d) in db.iter_mut().enumerate() {
                            *d = *d + gout.at(i, j);
                        }
                    }
                    let shape = self.nodes[bias.0].value.shape().to_vec();
                    Self::accumulate(grads, *bias, Tensor::from_vec(&shape, db).unwrap());
                }
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![F::zero(); m * n];
                    for i in 0..m {
                        let mut mean_dh = F::zero();
                        let mut mean_dh_h = F::zero();
                        for j in 0..n {
                            let dh = gout.at(i, j) * tg.data()[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * xhat[i * n + j];
                        }
                        mean_dh = mean_dh * inv_n;
                        mean_dh_h = mean_dh_h * inv_n;
                        for j in 0..n {
                            let dh = gout.at(i, j) * tg.data()[j];
                            dx[i * n + j] =
                                rstd[i] * (dh - mean_dh - xhat[i * n + j] * mean_dh_h);
                        }
                    }
                    Self::accumulate(grads, *x, Tensor::from_vec(&[m, n], dx).unwrap());
                }
            }
            Op::SoftmaxRows { x } => {
                if self.nodes[x.0].needs_grad {
                    let p = &self.nodes[id].value;
                    let (m, n) = (p.rows(), p.cols());
                    let mut dx = vec![F::zero(); m * n];
                    for i in 0..m {
                        let mut dot = F::zero();
                        for j in 0..n {
                            dot = dot + gout.at(i, j) * p.at(i, j);
                        }
                        for j in 0..n {
                            dx[i * n + j] = p.at(i, j) * (gout.at(i, j) - dot);
                        }
                    }
                    Self::accumulate(grads, *x, Tensor::from_vec(&[m, n], dx).unwrap());
                }
            }
            Op::TakeRows { x, rows } => {
                if self.nodes[x.0].needs_grad {
                    let tx = &self.nodes[x.0].value;
                    let (m, n) = (tx.rows(), tx.cols());
                    let mut dx = vec![F::zero(); m * n];
                    for (out_i, &r) in rows.iter().enumerate() {
                        for j in 0..n {
                            dx[r * n + j] = dx[r * n + j] + gout.at(out_i, j);
                        }
                    }
                    Self::accumulate(grads, *x, Tensor::from_vec(&[m, n], dx).unwrap());
                }
            }
            Op::ConcatCols(parts) => {
                let m = gout.rows();
                let mut col = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if self.nodes[p.0].needs_grad {
                        let mut dp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            for j in 0..w {
                                dp.push(gout.at(i, col + j));
                            }
                        }
                        Self::accumulate(grads, *p, Tensor::from_vec(&[m, w], dp).unwrap());
                    }
                    col += w;
                }
            }
            Op::MseLoss { pred, target } => {
                if self.nodes[pred.0].needs_grad {
                    let (tp, tt) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
                    let scale = gout.item() * F::from_f64(2.0 / tp.len() as f64);
                    let data: Vec<F> = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .map(|(&p, &t)| scale * (p - t))
                        .collect();
                    let shape = tp.shape().to_vec();
                    Self::accumulate(grads, *pred, Tensor::from_vec(&shape, data).unwrap());
                }
            }
        }
    }
}

impl<F: Scalar> Default for Graph<F>
where
    StandardNormal: Distribution<F>,
{
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by one backward pass.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F>
where
    StandardNormal: Distribution<F>,
{
    pub fn of(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<F>> {
        self.grads[id.0].take()
    }
}

/// Max over coordinates of |analytic − central difference| normalized by
/// (|analytic| + |central| + 1e-12). `eval` must be a pure function of `x`.
pub fn grad_check<F, E>(mut eval: E, x: &Tensor<F>, analytic: &Tensor<F>, h: F) -> F
where
    F: Scalar,
    E: FnMut(&Tensor<F>) -> F,
    StandardNormal: Distribution<F>,
{
    assert_eq!(x.shape(), analytic.shape(), "grad_check shapes");
    let eps = F::from_f64(1e-12);
    let mut worst = F::zero();
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe);
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe);
        probe.data_mut()[i] = orig;
        let central = (up - down) / (F::from_f64(2.0) * h);
        let a = analytic.data()[i];
        let rel = (a - central).abs() / (a.abs() + central.abs() + eps);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::randn(shape, 1.0, rng)
    }

    /// Finite-difference check for a scalar-valued graph builder: the
    /// builder gets (graph, leaf id) and returns the loss node.
    fn check_op<B>(x: Tensor<f64>, build: B) -> f64
    where
        B: Fn(&mut Graph<f64>, NodeId) -> NodeId,
    {
        let mut g = Graph::new();
        let xid = g.param(x.clone());
        let loss = build(&mut g, xid);
        let grads = g.backward(loss);
        let analytic = grads.of(xid).expect("leaf grad").clone();
        grad_check(
            |probe| {
                let mut g = Graph::new();
                let xid = g.param(probe.clone());
                let loss = build(&mut g, xid);
                g.value(loss).item()
            },
            &x,
            &analytic,
            1e-6,
        )
    }

    #[test]
    fn mse_loss_values() {
        let mut g = Graph::<f64>::new();
        let p = g.constant(Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap());
        let t = g.constant(Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap());
        let l = g.mse_loss(p, t).unwrap();
        assert_eq!(g.value(l).item(), 1.0);
        let l2 = g.mse_loss(p, p).unwrap();
        assert_eq!(g.value(l2).item(), 0.0);
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = randn(&[3, 5], &mut rng);
        let t = randn(&[3, 5], &mut rng);
        let mut g = Graph::new();
        let pid = g.constant(p.clone());
        let tid = g.constant(t.clone());
        let l = g.mse_loss(pid, tid).unwrap();
        let mut brute = 0.0;
        for (a, b) in p.data().iter().zip(t.data()) {
            brute += (a - b) * (a - b);
        }
        brute /= 15.0;
        assert!((g.value(l).item() - brute).abs() < 1e-6);
    }

    #[test]
    fn mse_shape_mismatch_errors() {
        let mut g = Graph::<f64>::new();
        let p = g.constant(Tensor::zeros(&[1, 2]));
        let t = g.constant(Tensor::zeros(&[2, 1]));
        assert!(g.mse_loss(p, t).is_err());
    }

    #[test]
    fn softmax_rows_basics() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap());
        let s = g.softmax_rows(x, Mask::Full).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::from_vec(&[2, 2], vec![3.0, 100.0, 1.0, 2.0]).unwrap());
        let s = g.softmax_rows(x, Mask::Causal).unwrap();
        // Causal row 0 masks column 1 entirely.
        assert_eq!(g.value(s).at(0, 0), 1.0);
        assert_eq!(g.value(s).at(0, 1), 0.0);
        let sum: f64 = g.value(s).row(1).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randn(&[6, 6], &mut rng);
        let mut g = Graph::new();
        let xid = g.constant(x);
        let s = g.softmax_rows(xid, Mask::Causal).unwrap();
        for i in 0..6 {
            let sum: f64 = g.value(s).row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for j in (i + 1)..6 {
                assert_eq!(g.value(s).at(i, j), 0.0);
            }
        }
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[1, 4], vec![7.0, 7.0, 7.0, 7.0]).unwrap());
        let gain = g.constant(Tensor::from_vec(&[4], vec![1.0; 4]).unwrap());
        let bias = g.constant(Tensor::from_vec(&[4], vec![0.0; 4]).unwrap());
        let y = g.layer_norm(x, gain, bias);
        for &v in g.value(y).data() {
            assert_eq!(v, 0.0); // zero variance guarded by eps
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn(&[3, 16], &mut rng);
        let mut g = Graph::new();
        let xid = g.constant(x);
        let gain = g.constant(Tensor::from_vec(&[16], vec![1.0; 16]).unwrap());
        let bias = g.constant(Tensor::from_vec(&[16], vec![0.0; 16]).unwrap());
        let y = g.layer_norm(xid, gain, bias);
        for i in 0..3 {
            let row = g.value(y).row(i);
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn grad_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = randn(&[3, 4], &mut rng);
        let w = randn(&[4, 5], &mut rng);
        let t = randn(&[3, 5], &mut rng);
        let err = check_op(x, |g, xid| {
            let wid = g.constant(w.clone());
            let tid = g.constant(t.clone());
            let y = g.matmul(xid, wid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "matmul lhs grad err {err}");
        let x2 = randn(&[3, 4], &mut rng);
        let err = check_op(w.clone(), |g, wid| {
            let xid = g.constant(x2.clone());
            let tid = g.constant(t.clone());
            let y = g.matmul(xid, wid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "matmul rhs grad err {err}");
    }

    #[test]
    fn grad_matmul_nt() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = randn(&[3, 4], &mut rng);
        let b = randn(&[5, 4], &mut rng);
        let t = randn(&[3, 5], &mut rng);
        let err = check_op(a.clone(), |g, aid| {
            let bid = g.constant(b.clone());
            let tid = g.constant(t.clone());
            let y = g.matmul_nt(aid, bid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "matmul_nt lhs grad err {err}");
        let err = check_op(b, |g, bid| {
            let aid = g.constant(a.clone());
            let tid = g.constant(t.clone());
            let y = g.matmul_nt(aid, bid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "matmul_nt rhs grad err {err}");
    }

    #[test]
    fn grad_layer_norm_and_gain_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = randn(&[4, 6], &mut rng);
        let gain = randn(&[6], &mut rng);
        let bias = randn(&[6], &mut rng);
        let t = randn(&[4, 6], &mut rng);
        let err = check_op(x.clone(), |g, xid| {
            let gid = g.constant(gain.clone());
            let bid = g.constant(bias.clone());
            let tid = g.constant(t.clone());
            let y = g.layer_norm(xid, gid, bid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-4, "layer_norm x grad err {err}");
        let err = check_op(gain.clone(), |g, gid| {
            let xid = g.constant(x.clone());
            let bid = g.constant(bias.clone());
            let tid = g.constant(t.clone());
            let y = g.layer_norm(xid, gid, bid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "layer_norm gain grad err {err}");
        let err = check_op(bias.clone(), |g, bid| {
            let xid = g.constant(x.clone());
            let gid = g.constant(gain.clone());
            let tid = g.constant(t.clone());
            let y = g.layer_norm(xid, gid, bid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "layer_norm bias grad err {err}");
    }

    #[test]
    fn grad_softmax_gelu_scale_addrow_takerows_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = randn(&[4, 4], &mut rng);
        let t = randn(&[4, 4], &mut rng);
        let err = check_op(x.clone(), |g, xid| {
            let tid = g.constant(t.clone());
            let y = g.softmax_rows(xid, Mask::Causal).unwrap();
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-6, "softmax grad err {err}");

        let err = check_op(x.clone(), |g, xid| {
            let tid = g.constant(t.clone());
            let y = g.gelu(xid);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-6, "gelu grad err {err}");

        let bias = randn(&[4], &mut rng);
        let err = check_op(bias.clone(), |g, bid| {
            let xid = g.constant(x.clone());
            let tid = g.constant(t.clone());
            let y = g.add_row(xid, bid);
            let y = g.scale(y, 0.7);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-7, "add_row bias grad err {err}");

        let t2 = randn(&[3, 8], &mut rng);
        let err = check_op(x, |g, xid| {
            let tid = g.constant(t2.clone());
            let a = g.take_rows(xid, &[0, 2, 2]);
            let b = g.take_rows(xid, &[1, 1, 3]);
            let y = g.concat_cols(&[a, b]);
            g.mse_loss(y, tid).unwrap()
        });
        assert!(err < 1e-6, "take_rows/concat grad err {err}");
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x = randn(&[2, 3], &mut rng);
        // f = sum of squares: analytic grad 2x.
        let analytic =
            Tensor::from_vec(&[2, 3], x.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let err = grad_check(
            |p| p.data().iter().map(|v| v * v).sum::<f64>(),
            &x,
            &analytic,
            1e-6,
        );
        assert!(err < 1e-6, "quadratic err {err}");
        // f constant: analytic grads all zero.
        let zeros = Tensor::zeros(&[2, 3]);
        let err = grad_check(|_| 4.2_f64, &x, &zeros, 1e-6);
        assert!(err < 1e-9, "constant err {err}");
    }

    #[test]
    fn untracked_leaves_get_no_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap());
        let c = g.constant(Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap());
        let y = g.add(x, c);
        let t = g.constant(Tensor::zeros(&[1, 2]));
        let l = g.mse_loss(y, t).unwrap();
        let grads = g.backward(l);
        assert!(grads.of(x).is_some());
        assert!(grads.of(c).is_none());
    }
}
