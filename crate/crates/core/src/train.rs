//! Training loops, validation with partial losses, and the layer sweep.
//!
//! A run draws a fixed corpus from its seed, iterates it in shuffled
//! epochs, and takes one Adam step per batch. Validation runs on a fixed
//! held-out set every `val_every` steps (plus once before training), and
//! the headline number of a run is the mean validation loss over the last
//! 100 evaluations. Everything is keyed off `RunConfig::seed`: data,
//! initialization, and shuffles come from disjoint derived streams, so a
//! rerun reproduces metrics and checkpoints bit-exactly.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointError};
use crate::graph::NumericsError;
use crate::model::{ForwardOpts, Model, ModelConfig, ModelError};
use crate::optim::{adam_update, AdamHyper, AdamState};
use crate::seeds::{derive_seed, DOM_INIT, DOM_SHUFFLE, DOM_TRAIN_DATA, DOM_VAL_DATA};
use crate::task::{gen_batch, EncodedExample, TaskConfig};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Size of the fixed training corpus.
    pub train_examples: usize,
    pub val_examples: usize,
    pub val_every: usize,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_every_epochs: Option<u64>,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        self.task
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        if self.model.input_dim != self.task.input_dim() {
            return bad(format!(
                "model input_dim {} but task needs {}",
                self.model.input_dim,
                self.task.input_dim()
            ));
        }
        if self.model.output_dim != self.task.target_dim() {
            return bad(format!(
                "model output_dim {} but task targets are {} wide",
                self.model.output_dim,
                self.task.target_dim()
            ));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.train_examples < self.batch_size {
            return bad(format!(
                "corpus of {} examples is smaller than the batch size {}",
                self.train_examples, self.batch_size
            ));
        }
        if self.val_examples < 1 || self.val_every < 1 {
            return bad("need val_examples >= 1 and val_every >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub val_loss: f64,
    /// Per-chain-position losses, D entries; empty for non-IC targets.
    pub partials: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Training loss per step, index 0 = step 1.
    pub train_loss: Vec<f64>,
    pub evals: Vec<EvalRecord>,
    /// (first step of the epoch, epoch index); epoch 0 starts at step 1.
    pub epoch_starts: Vec<(usize, u64)>,
    pub d: usize,
    pub ic: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("diverged at step {step}: loss {loss:.3e} vs initial {initial:.3e}")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("need {need} validation evaluations, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("metrics csv: {0}")]
    MetricsCsv(String),
}

impl From<CheckpointError> for TrainError {
    fn from(e: CheckpointError) -> Self {
        TrainError::Checkpoint(e.to_string())
    }
}

pub struct TrainResult {
    pub metrics: RunMetrics,
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub epochs_completed: u64,
}

/// Loss over column blocks of K: entry j is the MSE restricted to columns
/// [jK, (j+1)K), i.e. the loss on chain position x_{j+1}.
pub fn partial_losses<F: Scalar>(
    pred: &Tensor<F>,
    target: &Tensor<F>,
    d: usize,
    k: usize,
) -> Result<Vec<F>, NumericsError>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    if pred.shape() != target.shape() || pred.cols() != d * k {
        return Err(NumericsError::Shape {
            op: "partial_losses",
            detail: format!(
                "pred {:?} target {:?} with d={d} k={k}",
                pred.shape(),
                target.shape()
            ),
        });
    }
    let rows = pred.rows();
    let inv = F::from_f64(1.0 / (rows * k) as f64);
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut acc = F::zero();
        for i in 0..rows {
            for c in j * k..(j + 1) * k {
                let diff = pred.at(i, c) - target.at(i, c);
                acc = acc + diff * diff;
            }
        }
        out.push(acc * inv);
    }
    Ok(out)
}

/// Mean of the last 100 validation losses.
pub fn final_loss(metrics: &RunMetrics) -> Result<f64, TrainError> {
    final_window_mean(&metrics.evals, |e| e.val_loss)
}

const FINAL_WINDOW: usize = 100;

fn final_window_mean(
    evals: &[EvalRecord],
    value: impl Fn(&EvalRecord) -> f64,
) -> Result<f64, TrainError> {
    if evals.len() < FINAL_WINDOW {
        return Err(TrainError::InsufficientHistory {
            need: FINAL_WINDOW,
            have: evals.len(),
        });
    }
    let tail = &evals[evals.len() - FINAL_WINDOW..];
    Ok(tail.iter().map(value).sum::<f64>() / FINAL_WINDOW as f64)
}

/// First evaluation step at which partial loss j (0-based) drops below the
/// threshold.
pub fn first_eval_below(metrics: &RunMetrics, j: usize, threshold: f64) -> Option<usize> {
    metrics
        .evals
        .iter()
        .find(|e| e.partials.get(j).is_some_and(|&p| p < threshold))
        .map(|e| e.step)
}

/// Mean validation loss (and partials) of a model over a set of examples.
pub fn evaluate(
    model: &Model<f32>,
    examples: &[EncodedExample],
    task: &TaskConfig,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut loss_sum = 0.0f64;
    let mut partial_sum = vec![0.0f64; if task.ic { task.d } else { 0 }];
    for ex in examples {
        let out = model.forward(&ex.inputs, task.n, &ForwardOpts::default())?;
        let mut g = out.graph;
        let t = g.constant(ex.targets.clone());
        let l = g.mse_loss(out.output, t)?;
        loss_sum += g.value(l).item() as f64;
        if task.ic {
            let pred = g.value(out.output);
            let parts = partial_losses(pred, &ex.targets, task.d, task.k)?;
            for (s, p) in partial_sum.iter_mut().zip(parts) {
                *s += p as f64;
            }
        }
    }
    let n = examples.len() as f64;
    Ok((
        loss_sum / n,
        partial_sum.iter().map(|s| s / n).collect(),
    ))
}

/// Tracks the divergence-abort rule: abort once the loss has exceeded
/// 10× the initial loss for 100 consecutive steps.
#[derive(Debug, Default)]
pub struct DivergenceMonitor {
    initial: Option<f64>,
    consecutive: usize,
}

impl DivergenceMonitor {
    const FACTOR: f64 = 10.0;
    const PATIENCE: usize = 100;

    /// Feed one training loss; returns the initial loss if the run should
    /// abort now.
    pub fn observe(&mut self, loss: f64) -> Option<f64> {
        let initial = *self.initial.get_or_insert(loss);
        if loss > Self::FACTOR * initial {
            self.consecutive += 1;
        } else {
            self.consecutive = 0;
        }
        (self.consecutive >= Self::PATIENCE).then_some(initial)
    }
}

pub fn train(run: &RunConfig) -> Result<TrainResult, TrainError> {
    run.validate()?;
    let task = run.task;
    let corpus = gen_batch(&task, derive_seed(run.seed, DOM_TRAIN_DATA, 0), run.train_examples);
    let val_set = gen_batch(&task, derive_seed(run.seed, DOM_VAL_DATA, 0), run.val_examples);

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(run.seed, DOM_INIT, 0));
    let mut model = Model::<f32>::init(run.model, &mut init_rng)?;
    let mut adam = AdamState::for_params(&model.params);
    let hyper = AdamHyper {
        lr: run.lr,
        weight_decay: run.weight_decay,
        ..Default::default()
    };

    let ckpt = |model: &Model<f32>,
                adam: &AdamState<f32>,
                epoch: u64,
                step: usize,
                name: String|
     -> Result<(), TrainError> {
        if let Some(dir) = &run.checkpoint_dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| TrainError::Checkpoint(format!("{}: {e}", dir.display())))?;
            save_checkpoint(&dir.join(name), model, &task, epoch, step as u64, Some(adam))?;
        }
        Ok(())
    };
    let epoch_name = |epoch: u64| format!("ckpt_epoch_{epoch:06}.rlcp");

    let mut metrics = RunMetrics {
        train_loss: Vec::with_capacity(run.steps),
        evals: Vec::new(),
        epoch_starts: vec![(1, 0)],
        d: task.d,
        ic: task.ic,
    };

    // Baseline evaluation and (optionally) the untrained checkpoint.
    let (val_loss, partials) = evaluate(&model, &val_set, &task)?;
    metrics.evals.push(EvalRecord {
        step: 0,
        val_loss,
        partials,
    });
    if run
        .checkpoint_every_epochs
        .is_some_and(|every| every > 0)
    {
        ckpt(&model, &adam, 0, 0, epoch_name(0))?;
    }

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let shuffle_for = |order: &mut Vec<usize>, epoch: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.seed, DOM_SHUFFLE, epoch));
        order.shuffle(&mut rng);
    };
    shuffle_for(&mut order, 0);
    let mut cursor = 0usize;
    let mut completed_epochs = 0u64;
    let mut monitor = DivergenceMonitor::default();

    for step in 1..=run.steps {
        let mut batch: Vec<&EncodedExample> = Vec::with_capacity(run.batch_size);
        while batch.len() < run.batch_size {
            if cursor == order.len() {
                completed_epochs += 1;
                if run
                    .checkpoint_every_epochs
                    .is_some_and(|every| every > 0 && completed_epochs % every == 0)
                {
                    ckpt(
                        &model,
                        &adam,
                        completed_epochs,
                        step - 1,
                        epoch_name(completed_epochs),
                    )?;
                }
                shuffle_for(&mut order, completed_epochs);
                cursor = 0;
                metrics.epoch_starts.push((step, completed_epochs));
            }
            batch.push(&corpus[order[cursor]]);
            cursor += 1;
        }

        let mut g = crate::graph::Graph::<f32>::new();
        let ids = model.insert_params(&mut g, true);
        let mut total: Option<crate::graph::NodeId> = None;
        for ex in &batch {
            let x = g.constant(ex.inputs.clone());
            let (out, _) = model.forward_on(
                &mut g,
                &ids,
                x,
                task.n,
                &ForwardOpts {
                    trainable: true,
                    ..Default::default()
                },
            )?;
            let t = g.constant(ex.targets.clone());
            let l = g.mse_loss(out, t)?;
            total = Some(match total {
                Some(acc) => g.add(acc, l),
                None => l,
            });
        }
        let loss_node = g.scale(total.expect("non-empty batch"), 1.0 / run.batch_size as f32);
        let loss = g.value(loss_node).item() as f64;
        metrics.train_loss.push(loss);
        if let Some(initial) = monitor.observe(loss) {
            return Err(TrainError::Diverged {
                step,
                loss,
                initial,
            });
        }

        let mut grads = g.backward(loss_node);
        let grad_vec: Vec<Option<Tensor<f32>>> =
            ids.iter().map(|&id| grads.take(id)).collect();
        adam_update(&mut model.params, &grad_vec, &mut adam, &hyper)?;

        if step % run.val_every == 0 {
            let (val_loss, partials) = evaluate(&model, &val_set, &task)?;
            metrics.evals.push(EvalRecord {
                step,
                val_loss,
                partials,
            });
        }
    }

    if cursor == order.len() {
        completed_epochs += 1;
    }
    if run.checkpoint_dir.is_some() {
        if run
            .checkpoint_every_epochs
            .is_some_and(|every| every > 0 && completed_epochs % every == 0)
        {
            ckpt(
                &model,
                &adam,
                completed_epochs,
                run.steps,
                epoch_name(completed_epochs),
            )?;
        }
        ckpt(
            &model,
            &adam,
            completed_epochs,
            run.steps,
            "ckpt_final.rlcp".to_string(),
        )?;
    }

    Ok(TrainResult {
        metrics,
        model,
        adam,
        epochs_completed: completed_epochs,
    })
}

// --- metrics CSV -----------------------------------------------------------

/// One row per step (plus a step-0 baseline row): step, train_loss,
/// val_loss, partial_1..partial_D. Validation columns are empty on steps
/// without an evaluation; partial columns exist only for IC runs.
pub fn metrics_csv_string(metrics: &RunMetrics) -> String {
    let mut out = String::from("step,train_loss,val_loss");
    if metrics.ic {
        for j in 1..=metrics.d {
            out.push_str(&format!(",partial_{j}"));
        }
    }
    out.push('\n');
    let n_part = if metrics.ic { metrics.d } else { 0 };
    let mut eval_at = std::collections::HashMap::new();
    for e in &metrics.evals {
        eval_at.insert(e.step, e);
    }
    let mut push_row = |step: usize, train: Option<f64>| {
        out.push_str(&step.to_string());
        out.push(',');
        if let Some(t) = train {
            out.push_str(&format!("{t}"));
        }
        match eval_at.get(&step) {
            Some(e) => {
                out.push_str(&format!(",{}", e.val_loss));
                for j in 0..n_part {
                    out.push_str(&format!(",{}", e.partials[j]));
                }
            }
            None => {
                for _ in 0..n_part + 1 {
                    out.push(',');
                }
            }
        }
        out.push('\n');
    };
    if eval_at.contains_key(&0) {
        push_row(0, None);
    }
    for (i, &loss) in metrics.train_loss.iter().enumerate() {
        push_row(i + 1, Some(loss));
    }
    out
}

pub fn write_metrics_csv(metrics: &RunMetrics, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, metrics_csv_string(metrics))
        .map_err(|e| TrainError::MetricsCsv(format!("{}: {e}", path.display())))
}

/// Parse a metrics CSV written by [`metrics_csv_string`]. Reports the
/// 1-based line number of any malformed row.
pub fn parse_metrics_csv(text: &str) -> Result<RunMetrics, TrainError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TrainError::MetricsCsv("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "step" || cols[1] != "train_loss" || cols[2] != "val_loss" {
        return Err(TrainError::MetricsCsv(format!(
            "line 1: unexpected header {header:?}"
        )));
    }
    let d = cols.len() - 3;
    let ic = d > 0;
    let mut metrics = RunMetrics {
        train_loss: Vec::new(),
        evals: Vec::new(),
        epoch_starts: Vec::new(),
        d,
        ic,
    };
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let bad = |what: &str| TrainError::MetricsCsv(format!("line {lineno}: {what}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(&format!(
                "{} fields, expected {}",
                fields.len(),
                cols.len()
            )));
        }
        let step: usize = fields[0].parse().map_err(|_| bad("bad step"))?;
        if !fields[1].is_empty() {
            let t: f64 = fields[1].parse().map_err(|_| bad("bad train_loss"))?;
            if step != metrics.train_loss.len() + 1 {
                return Err(bad("train-loss steps must be contiguous from 1"));
            }
            metrics.train_loss.push(t);
        }
        if !fields[2].is_empty() {
            let val_loss: f64 = fields[2].parse().map_err(|_| bad("bad val_loss"))?;
            let mut partials = Vec::with_capacity(d);
            for f in &fields[3..] {
                partials.push(f.parse().map_err(|_| bad("bad partial loss"))?);
            }
            metrics.evals.push(EvalRecord {
                step,
                val_loss,
                partials,
            });
        }
    }
    Ok(metrics)
}

// --- layer sweep -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Template run; each cell overrides layers, seed, and the IC flag
    /// (plus the output dim that follows from it).
    pub base: RunConfig,
    pub layers: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Formulations to cover: true = implicit curriculum.
    pub ic: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ic: bool,
    pub layers: usize,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub final_partials: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// Mean final loss over seeds for one (formulation, layers) setting.
    pub fn mean_final(&self, ic: bool, layers: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.ic == ic && c.layers == layers)
            .filter_map(|c| c.final_loss)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let max_d = self
            .cells
            .iter()
            .map(|c| c.final_partials.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("formulation,layers,seed,final_loss,status");
        for j in 1..=max_d {
            out.push_str(&format!(",partial_{j}"));
        }
        out.push('\n');
        for c in &self.cells {
            out.push_str(if c.ic { "ic" } else { "non-ic" });
            out.push_str(&format!(",{},{}", c.layers, c.seed));
            match c.final_loss {
                Some(l) => out.push_str(&format!(",{l}")),
                None => out.push(','),
            }
            match &c.error {
                Some(e) => out.push_str(&format!(",failed: {}", e.replace(',', ";"))),
                None => out.push_str(",ok"),
            }
            for j in 0..max_d {
                match c.final_partials.get(j) {
                    Some(p) => out.push_str(&format!(",{p}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Run every (formulation, layers, seed) cell; failures are recorded in
/// the report and do not stop the sweep.
pub fn sweep(config: &SweepConfig) -> SweepReport {
    let mut cells = Vec::new();
    for &ic in &config.ic {
        for &layers in &config.layers {
            for &seed in &config.seeds {
                let mut run = config.base.clone();
                run.task.ic = ic;
                run.model.layers = layers;
                run.model.output_dim = run.task.target_dim();
                run.seed = seed;
                run.checkpoint_dir = None;
                let mut cell = SweepCell {
                    ic,
                    layers,
                    seed,
                    final_loss: None,
                    final_partials: Vec::new(),
                    error: None,
                };
                match train(&run).and_then(|r| {
                    let f = final_loss(&r.metrics)?;
                    let partials = (0..if ic { run.task.d } else { 0 })
                        .map(|j| {
                            final_window_mean(&r.metrics.evals, |e| e.partials[j])
                                .expect("window checked by final_loss")
                        })
                        .collect();
                    Ok((f, partials))
                }) {
                    Ok((f, partials)) => {
                        cell.final_loss = Some(f);
                        cell.final_partials = partials;
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
                cells.push(cell);
            }
        }
    }
    SweepReport { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_run(steps: usize, seed: u64) -> RunConfig {
        let task = TaskConfig {
            n: 2,
            d: 1,
            k: 4,
            ic: true,
            seed: 0,
            ..Default::default()
        };
        let model = ModelConfig::for_task(&task, 1, 1, 8);
        RunConfig {
            task,
            model,
            steps,
            batch_size: 4,
            lr: 1e-3,
            weight_decay: 0.1,
            train_examples: 16,
            val_examples: 32,
            val_every: 5,
            seed,
            checkpoint_every_epochs: None,
            checkpoint_dir: None,
        }
    }

    #[test]
    fn zero_steps_baseline_near_unit_variance() {
        let run = tiny_run(0, 3);
        let result = train(&run).unwrap();
        assert_eq!(result.metrics.evals.len(), 1);
        let v = result.metrics.evals[0].val_loss;
        assert!((v - 1.0).abs() < 0.1, "baseline val loss {v}");
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let run = tiny_run(25, 7);
        let a = train(&run).unwrap();
        let b = train(&run).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.adam.m, b.adam.m);
        assert_eq!(a.epochs_completed, b.epochs_completed);
    }

    #[test]
    fn loss_goes_down_on_induction_task() {
        let mut run = tiny_run(200, 5);
        run.model = ModelConfig::for_task(&run.task, 2, 2, 16);
        let result = train(&run).unwrap();
        let first = result.metrics.train_loss[..20].iter().sum::<f64>() / 20.0;
        let last = result.metrics.train_loss[180..].iter().sum::<f64>() / 20.0;
        assert!(
            last < 0.9 * first,
            "no learning: first {first:.3} last {last:.3}"
        );
    }

    #[test]
    fn epochs_counted_from_corpus_and_batch() {
        // 16 examples / batch 4 = 4 steps per epoch; 25 steps = 6 full
        // epochs plus one step.
        let run = tiny_run(25, 9);
        let result = train(&run).unwrap();
        assert_eq!(result.epochs_completed, 6);
        assert_eq!(result.metrics.epoch_starts.len(), 7); // epochs 0..=6 started
    }

    #[test]
    fn partial_losses_blocks() {
        let pred = Tensor::from_vec(&[2, 4], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        assert_eq!(
            partial_losses(&pred, &pred, 2, 2).unwrap(),
            vec![0.0, 0.0]
        );
        // corrupt only the second block: first partial stays zero
        let mut t = pred.clone();
        t.data_mut()[2] += 1.0; // row 0, col 2 (block 2)
        t.data_mut()[7] += 2.0; // row 1, col 3 (block 2)
        let parts = partial_losses(&pred, &t, 2, 2).unwrap();
        assert_eq!(parts[0], 0.0);
        assert!((parts[1] - (1.0 + 4.0) / 4.0).abs() < 1e-6);
        // mean of partials equals the total MSE
        let mut g = crate::graph::Graph::<f32>::new();
        let p = g.constant(pred.clone());
        let tt = g.constant(t.clone());
        let l = g.mse_loss(p, tt).unwrap();
        let total = g.value(l).item();
        let mean = (parts[0] + parts[1]) / 2.0;
        assert!((total - mean).abs() < 1e-6);
        // shape guard
        assert!(partial_losses(&pred, &t, 3, 2).is_err());
    }

    #[test]
    fn final_loss_windows() {
        let mk = |vals: Vec<f64>| RunMetrics {
            train_loss: vec![],
            evals: vals
                .into_iter()
                .enumerate()
                .map(|(i, v)| EvalRecord {
                    step: i,
                    val_loss: v,
                    partials: vec![],
                })
                .collect(),
            epoch_starts: vec![],
            d: 1,
            ic: false,
        };
        let m = mk(vec![0.3; 150]);
        assert!((final_loss(&m).unwrap() - 0.3).abs() < 1e-12);
        let m = mk((1..=200).map(|v| v as f64).collect());
        assert!((final_loss(&m).unwrap() - 150.5).abs() < 1e-12);
        let m = mk(vec![0.5; 99]);
        assert!(matches!(
            final_loss(&m),
            Err(TrainError::InsufficientHistory { have: 99, .. })
        ));
        // brute-force slice mean on an arbitrary series
        let series: Vec<f64> = (0..137).map(|i| ((i * 37) % 11) as f64 * 0.13).collect();
        let brute = series[37..].iter().sum::<f64>() / 100.0;
        assert!((final_loss(&mk(series)).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn divergence_monitor_patience() {
        let mut m = DivergenceMonitor::default();
        assert!(m.observe(1.0).is_none());
        for _ in 0..99 {
            assert!(m.observe(10.5).is_none());
        }
        assert_eq!(m.observe(10.5), Some(1.0));
        // dipping back below resets the count
        let mut m = DivergenceMonitor::default();
        m.observe(1.0);
        for _ in 0..99 {
            m.observe(11.0);
        }
        assert!(m.observe(2.0).is_none());
        for _ in 0..99 {
            assert!(m.observe(11.0).is_none());
        }
        assert!(m.observe(11.0).is_some());
    }

    #[test]
    fn checkpoints_written_and_reloadable() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = tiny_run(8, 2); // 4 steps/epoch -> 2 epochs
        run.checkpoint_every_epochs = Some(1);
        run.checkpoint_dir = Some(dir.path().to_path_buf());
        let result = train(&run).unwrap();
        assert_eq!(result.epochs_completed, 2);
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(
            names,
            vec![
                "ckpt_epoch_000000.rlcp",
                "ckpt_epoch_000001.rlcp",
                "ckpt_epoch_000002.rlcp",
                "ckpt_final.rlcp"
            ]
        );
        let final_ck =
            crate::checkpoint::load_checkpoint(&dir.path().join("ckpt_final.rlcp")).unwrap();
        assert_eq!(final_ck.model.params, result.model.params);
        assert_eq!(final_ck.epoch, 2);
        assert_eq!(final_ck.step, 8);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let run = tiny_run(12, 4);
        let m = train(&run).unwrap().metrics;
        let text = metrics_csv_string(&m);
        assert!(text.starts_with("step,train_loss,val_loss,partial_1\n"));
        assert!(text.contains("\n0,,")); // baseline row
        let parsed = parse_metrics_csv(&text).unwrap();
        assert_eq!(parsed.train_loss, m.train_loss);
        assert_eq!(parsed.evals, m.evals);
    }

    #[test]
    fn metrics_csv_reports_bad_lines() {
        let err = parse_metrics_csv("step,train_loss,val_loss\n1,oops,\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn one_cell_sweep() {
        let mut base = tiny_run(110, 6);
        base.val_every = 1; // 110 evals > window
        let report = sweep(&SweepConfig {
            base,
            layers: vec![1],
            seeds: vec![6],
            ic: vec![true],
        });
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert!(cell.error.is_none(), "{:?}", cell.error);
        assert!(cell.final_loss.is_some());
        assert_eq!(cell.final_partials.len(), 1);
        let mean = report.mean_final(true, 1).unwrap();
        assert_eq!(Some(mean), cell.final_loss);
        let csv = report.to_csv();
        assert!(csv.starts_with("formulation,layers,seed,final_loss,status,partial_1\n"));
        assert!(csv.contains("ic,1,6,"));
    }
}
