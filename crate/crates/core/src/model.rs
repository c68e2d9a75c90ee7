//! Pre-norm decoder-style transformer over continuous input vectors.
//!
//! Per layer: x += attn(LN(x)); optionally x += mlp(LN(x)). Attention
//! projects the residual stream to `head_dim` per head (so residual and
//! head sizes are independent), scores are scaled by 1/sqrt(head_dim) and
//! causally masked by default. Outputs are read at the last `n_queries`
//! positions through a readout applied to the final layer norm.
//!
//! The forward pass can capture every post-softmax attention matrix and
//! can replace selected rows of selected heads' attention with prescribed
//! distributions (the ablation hook); replaced rows are constants, so
//! gradients are never traced through an ablation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Mask, NodeId, NumericsError};
use crate::optim::ParamSet;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads_per_layer: usize,
    pub residual_dim: usize,
    pub head_dim: usize,
    pub use_mlp: bool,
    pub mlp_hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub causal: bool,
}

impl ModelConfig {
    /// GPT-2-style defaults for a task: head_dim = residual/heads, MLP with
    /// 4× hidden, causal masking.
    pub fn for_task(task: &crate::task::TaskConfig, layers: usize, heads: usize, residual_dim: usize) -> Self {
        ModelConfig {
            layers,
            heads_per_layer: heads,
            residual_dim,
            head_dim: residual_dim / heads,
            use_mlp: true,
            mlp_hidden: 4 * residual_dim,
            input_dim: task.input_dim(),
            output_dim: task.target_dim(),
            causal: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::ConfigMismatch(msg.to_string()));
        if self.layers < 1 {
            return bad("need at least one layer");
        }
        if self.heads_per_layer < 1 || self.head_dim < 1 {
            return bad("need at least one head of positive size");
        }
        if self.residual_dim < 1 || self.input_dim < 1 || self.output_dim < 1 {
            return bad("dimensions must be positive");
        }
        if self.use_mlp && self.mlp_hidden < 1 {
            return bad("mlp_hidden must be positive when use_mlp is set");
        }
        Ok(())
    }

    fn mask(&self) -> Mask {
        if self.causal {
            Mask::Causal
        } else {
            Mask::Full
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("non-finite activations in {at}")]
    NonFinite { at: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

// Parameter indices into the ParamSet, fixed by construction order.
#[derive(Debug, Clone)]
struct HeadIdx {
    wq: usize,
    wk: usize,
    wv: usize,
}

#[derive(Debug, Clone)]
struct MlpIdx {
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    heads: Vec<HeadIdx>,
    wo: usize,
    bo: usize,
    mlp: Option<MlpIdx>,
}

#[derive(Debug, Clone)]
struct Layout {
    embed_w: usize,
    embed_b: usize,
    layers: Vec<LayerIdx>,
    final_g: usize,
    final_b: usize,
    readout_w: usize,
    readout_b: usize,
}

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Model<F = f32> {
    pub config: ModelConfig,
    pub params: ParamSet<F>,
    layout: Layout,
}

/// Replacement for one attention row: uniform over causally allowed
/// positions, or equal mass on an explicit position list.
#[derive(Debug, Clone, PartialEq)]
pub enum RowPlan {
    Uniform,
    OneHot(Vec<usize>),
}

/// Fully resolved attention overrides for one example: per (layer, head),
/// a plan for every row. Heads absent from the map keep their computed
/// attention.
#[derive(Debug, Clone, Default)]
pub struct ResolvedAblation {
    pub heads: BTreeMap<(usize, usize), Vec<RowPlan>>,
}

/// Post-softmax attention weights of one forward pass, layer-major.
#[derive(Debug, Clone)]
pub struct AttentionCapture<F = f32> {
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
    weights: Vec<Tensor<F>>,
}

impl<F: Scalar> AttentionCapture<F>
where
    StandardNormal: Distribution<F>,
{
    pub fn at(&self, layer: usize, head: usize) -> &Tensor<F> {
        &self.weights[layer * self.heads + head]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOpts<'a> {
    /// Record post-softmax weights for every layer and head.
    pub capture: bool,
    /// Insert parameters as gradient-tracked leaves (training) instead of
    /// constants (evaluation).
    pub trainable: bool,
    pub ablation: Option<&'a ResolvedAblation>,
}

pub struct ForwardOut<F = f32> {
    pub graph: Graph<F>,
    pub output: NodeId,
    /// Leaf ids aligned with the ParamSet; empty unless `trainable`.
    pub param_nodes: Vec<NodeId>,
    pub capture: Option<AttentionCapture<F>>,
}

impl<F: Scalar> Model<F>
where
    StandardNormal: Distribution<F>,
{
    /// Fresh parameters: weights ~ N(0, 0.02²), biases 0, layer-norm gain 1.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let std = F::from_f64(INIT_STD);
        let mut params = ParamSet::new();
        let w = |params: &mut ParamSet<F>, name: String, shape: &[usize], rng: &mut R| {
            params.push(name, Tensor::randn(shape, std, rng))
        };
        let (r, hd, heads) = (config.residual_dim, config.head_dim, config.heads_per_layer);

        let embed_w = w(&mut params, "embed.w".into(), &[config.input_dim, r], rng);
        let embed_b = params.push("embed.b", Tensor::zeros(&[r]));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let ln1_g = params.push(format!("l{l}.ln1.g"), Tensor::full(&[r], F::one()));
            let ln1_b = params.push(format!("l{l}.ln1.b"), Tensor::zeros(&[r]));
            let mut head_idx = Vec::with_capacity(heads);
            for h in 0..heads {
                let wq = w(&mut params, format!("l{l}.h{h}.wq"), &[r, hd], rng);
                let wk = w(&mut params, format!("l{l}.h{h}.wk"), &[r, hd], rng);
                let wv = w(&mut params, format!("l{l}.h{h}.wv"), &[r, hd], rng);
                head_idx.push(HeadIdx { wq, wk, wv });
            }
            let wo = w(&mut params, format!("l{l}.attn.wo"), &[heads * hd, r], rng);
            let bo = params.push(format!("l{l}.attn.bo"), Tensor::zeros(&[r]));
            let mlp = if config.use_mlp {
                let ln2_g = params.push(format!("l{l}.ln2.g"), Tensor::full(&[r], F::one()));
                let ln2_b = params.push(format!("l{l}.ln2.b"), Tensor::zeros(&[r]));
                let w1 = w(&mut params, format!("l{l}.mlp.w1"), &[r, config.mlp_hidden], rng);
                let b1 = params.push(format!("l{l}.mlp.b1"), Tensor::zeros(&[config.mlp_hidden]));
                let w2 = w(&mut params, format!("l{l}.mlp.w2"), &[config.mlp_hidden, r], rng);
                let b2 = params.push(format!("l{l}.mlp.b2"), Tensor::zeros(&[r]));
                Some(MlpIdx {
                    ln2_g,
                    ln2_b,
                    w1,
                    b1,
                    w2,
                    b2,
                })
            } else {
                None
            };
            layers.push(LayerIdx {
                ln1_g,
                ln1_b,
                heads: head_idx,
                wo,
                bo,
                mlp,
            });
        }
        let final_g = params.push("final_ln.g", Tensor::full(&[r], F::one()));
        let final_b = params.push("final_ln.b", Tensor::zeros(&[r]));
        let readout_w = w(&mut params, "readout.w".into(), &[r, config.output_dim], rng);
        let readout_b = params.push("readout.b", Tensor::zeros(&[config.output_dim]));

        Ok(Model {
            config,
            params,
            layout: Layout {
                embed_w,
                embed_b,
                layers,
                final_g,
                final_b,
                readout_w,
                readout_b,
            },
        })
    }

    /// Rebuild a model from a parameter set (e.g. a loaded checkpoint),
    /// validating names and shapes against the config's layout.
    pub fn assemble(config: ModelConfig, params: ParamSet<F>) -> Result<Self, ModelError> {
        config.validate()?;
        // Init a throwaway at the same config to obtain the reference
        // layout and expected names/shapes, then check the given set.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let reference = Model::<F>::init(config, &mut rng)?;
        if params.len() != reference.params.len() {
            return Err(ModelError::ConfigMismatch(format!(
                "expected {} parameter tensors, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for i in 0..params.len() {
            if params.name(i) != reference.params.name(i) {
                return Err(ModelError::ConfigMismatch(format!(
                    "parameter {i} is named {:?}, expected {:?}",
                    params.name(i),
                    reference.params.name(i)
                )));
            }
            if params.tensor(i).shape() != reference.params.tensor(i).shape() {
                return Err(ModelError::ConfigMismatch(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    params.name(i),
                    params.tensor(i).shape(),
                    reference.params.tensor(i).shape()
                )));
            }
        }
        Ok(Model {
            config,
            params,
            layout: reference.layout,
        })
    }

    pub fn cast<G: Scalar>(&self) -> Model<G>
    where
        StandardNormal: Distribution<G>,
    {
        Model {
            config: self.config,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Run the model on one input sequence, reading out the last
    /// `n_queries` positions.
    pub fn forward(
        &self,
        inputs: &Tensor<F>,
        n_queries: usize,
        opts: &ForwardOpts,
    ) -> Result<ForwardOut<F>, ModelError> {
        let mut g = Graph::new();
        let ids = self.insert_params(&mut g, opts.trainable);
        let x = g.constant(inputs.clone());
        let (output, capture) = self.forward_on(&mut g, &ids, x, n_queries, opts)?;
        Ok(ForwardOut {
            graph: g,
            output,
            param_nodes: if opts.trainable { ids } else { Vec::new() },
            capture,
        })
    }

    /// Insert every parameter into a graph, in ParamSet order.
    pub fn insert_params(&self, g: &mut Graph<F>, trainable: bool) -> Vec<NodeId> {
        (0..self.params.len())
            .map(|i| {
                let t = self.params.tensor(i).clone();
                if trainable {
                    g.param(t)
                } else {
                    g.constant(t)
                }
            })
            .collect()
    }

    /// Forward over an already-populated graph; `ids` must come from
    /// [`Model::insert_params`] on the same graph. This is the shared core
    /// for single-example evaluation and batched training.
    pub fn forward_on(
        &self,
        g: &mut Graph<F>,
        ids: &[NodeId],
        inputs: NodeId,
        n_queries: usize,
        opts: &ForwardOpts,
    ) -> Result<(NodeId, Option<AttentionCapture<F>>), ModelError> {
        let cfg = &self.config;
        let seq_len = g.value(inputs).rows();
        if g.value(inputs).cols() != cfg.input_dim {
            return Err(ModelError::ConfigMismatch(format!(
                "input width {} but model expects {}",
                g.value(inputs).cols(),
                cfg.input_dim
            )));
        }
        if n_queries > seq_len {
            return Err(ModelError::ConfigMismatch(format!(
                "cannot read {n_queries} queries from {seq_len} positions"
            )));
        }
        let lay = &self.layout;
        let mask = cfg.mask();
        let scale = F::from_f64(1.0 / (cfg.head_dim as f64).sqrt());
        let mut captured = Vec::new();

        let mut x = g.matmul(inputs, ids[lay.embed_w]);
        x = g.add_row(x, ids[lay.embed_b]);
        g.check_finite(x, "embed")
            .map_err(|_| ModelError::NonFinite { at: "embed".into() })?;

        for (l, layer) in lay.layers.iter().enumerate() {
            let ln = g.layer_norm(x, ids[layer.ln1_g], ids[layer.ln1_b]);
            let mut ctxs = Vec::with_capacity(layer.heads.len());
            for (h, head) in layer.heads.iter().enumerate() {
                let q = g.matmul(ln, ids[head.wq]);
                let k = g.matmul(ln, ids[head.wk]);
                let v = g.matmul(ln, ids[head.wv]);
                let scores = g.matmul_nt(q, k);
                let scores = g.scale(scores, scale);
                let mut probs = g.softmax_rows(scores, mask)?;
                if let Some(ablation) = opts.ablation {
                    if let Some(plans) = ablation.heads.get(&(l, h)) {
                        let replaced = apply_row_plans(g.value(probs), plans, mask);
                        probs = g.constant(replaced);
                    }
                }
                if opts.capture {
                    captured.push(g.value(probs).clone());
                }
                ctxs.push(g.matmul(probs, v));
            }
            let cat = if ctxs.len() == 1 {
                ctxs[0]
            } else {
                g.concat_cols(&ctxs)
            };
            let proj = g.matmul(cat, ids[layer.wo]);
            let proj = g.add_row(proj, ids[layer.bo]);
            x = g.add(x, proj);
            if let Some(mlp) = &layer.mlp {
                let ln2 = g.layer_norm(x, ids[mlp.ln2_g], ids[mlp.ln2_b]);
                let h1 = g.matmul(ln2, ids[mlp.w1]);
                let h1 = g.add_row(h1, ids[mlp.b1]);
                let h1 = g.gelu(h1);
                let h2 = g.matmul(h1, ids[mlp.w2]);
                let h2 = g.add_row(h2, ids[mlp.b2]);
                x = g.add(x, h2);
            }
            g.check_finite(x, "layer").map_err(|_| ModelError::NonFinite {
                at: format!("layer {l}"),
            })?;
        }

        let fin = g.layer_norm(x, ids[lay.final_g], ids[lay.final_b]);
        let rows: Vec<usize> = (seq_len - n_queries..seq_len).collect();
        let picked = g.take_rows(fin, &rows);
        let out = g.matmul(picked, ids[lay.readout_w]);
        let out = g.add_row(out, ids[lay.readout_b]);
        g.check_finite(out, "readout")
            .map_err(|_| ModelError::NonFinite { at: "readout".into() })?;

        let capture = if opts.capture {
            Some(AttentionCapture {
                layers: cfg.layers,
                heads: cfg.heads_per_layer,
                seq_len,
                weights: captured,
            })
        } else {
            None
        };
        Ok((out, capture))
    }
}

/// Build the replacement attention matrix for one head from per-row plans.
fn apply_row_plans<F: Scalar>(probs: &Tensor<F>, plans: &[RowPlan], mask: Mask) -> Tensor<F>
where
    StandardNormal: Distribution<F>,
{
    let (m, n) = (probs.rows(), probs.cols());
    assert_eq!(plans.len(), m, "ablation plans must cover every row");
    let mut out = vec![F::zero(); m * n];
    for (i, plan) in plans.iter().enumerate() {
        match plan {
            RowPlan::Uniform => {
                let allowed: Vec<usize> = (0..n).filter(|&j| mask.allows(i, j)).collect();
                let w = F::from_f64(1.0 / allowed.len() as f64);
                for j in allowed {
                    out[i * n + j] = w;
                }
            }
            RowPlan::OneHot(targets) => {
                assert!(!targets.is_empty(), "one-hot row without targets");
                let w = F::from_f64(1.0 / targets.len() as f64);
                for &j in targets {
                    assert!(
                        mask.allows(i, j),
                        "one-hot target {j} violates the mask at row {i}"
                    );
                    out[i * n + j] = out[i * n + j] + w;
                }
            }
        }
    }
    Tensor::from_vec(&[m, n], out).unwrap()
}
