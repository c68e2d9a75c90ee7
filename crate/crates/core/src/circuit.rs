//! Circuit hypotheses and the tooling that tests them: role-indexed
//! attention ablations, leave-one-path-out validation, attention-map
//! export, and the emergence tracker that follows each path's average
//! attention across training checkpoints.
//!
//! Circuit specs are authored by hand (JSON) and validated here; nothing
//! in this module tries to discover circuits automatically.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::model::{
    AttentionCapture, ForwardOpts, Model, ModelConfig, ModelError, ResolvedAblation, RowPlan,
};
use crate::plot::{heatmap_svg, matrix_csv, PlotError};
use crate::seeds::{derive_seed, DOM_TRACE};
use crate::task::{gen_batch, EncodedExample, PosRole, TaskConfig};
use crate::tensor::Tensor;

/// A position role as referenced by circuit and ablation specs. Pair
/// steps are 1-based, matching x_1..x_D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    PairFirst(usize),
    PairSecond(usize),
    Query,
    /// Dynamic: resolves to the position directly before the attending
    /// row (the row itself at position 0).
    PrevToken,
    /// Dynamic: resolves to the attending row itself.
    #[serde(rename = "Self")]
    SelfPos,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::PairFirst(s) => write!(f, "PairFirst({s})"),
            Role::PairSecond(s) => write!(f, "PairSecond({s})"),
            Role::Query => write!(f, "Query"),
            Role::PrevToken => write!(f, "PrevToken"),
            Role::SelfPos => write!(f, "Self"),
        }
    }
}

impl Role {
    fn is_static(&self) -> bool {
        !matches!(self, Role::PrevToken | Role::SelfPos)
    }

    fn matches(&self, role: &PosRole) -> bool {
        match (*self, role) {
            (Role::PairFirst(s), PosRole::PairFirst { step, .. }) => *step == s,
            (Role::PairSecond(s), PosRole::PairSecond { step, .. }) => *step == s,
            (Role::Query, PosRole::Query { .. }) => true,
            _ => false,
        }
    }

    fn valid_for(&self, task: &TaskConfig) -> bool {
        match *self {
            Role::PairFirst(s) | Role::PairSecond(s) => (1..=task.d).contains(&s),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid circuit: {0}")]
    Invalid(String),
    #[error("role {role} has no fixed positions; it resolves per attending row")]
    DynamicRole { role: Role },
    #[error("role {role} resolves to no position{}", chain.map(|c| format!(" in chain {c}")).unwrap_or_default())]
    Unresolvable { role: Role, chain: Option<usize> },
    #[error("row {row}: destination {role} resolves to position {dst}, after the attending row")]
    NonCausal { row: usize, dst: usize, role: Role },
    #[error("layer {layer} head {head}: row {row} claimed by more than one rule")]
    Conflict { layer: usize, head: usize, row: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
    #[error("circuit json: {0}")]
    Json(String),
}

// --- circuit specs -----------------------------------------------------------

/// One attention path of a hypothesized circuit: at `layer`/`head`, rows
/// in the `src` role are expected to attend to the `dst` role (resolved
/// within the same chain for pair/query roles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitPath {
    pub layer: usize,
    pub head: usize,
    pub src: Role,
    pub dst: Role,
}

impl CircuitPath {
    pub fn id(&self) -> String {
        format!("L{}H{}:{}->{}", self.layer, self.head, self.src, self.dst)
    }
}

/// Default treatment of heads that appear in no path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    Uniform,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub paths: Vec<CircuitPath>,
    pub background: Background,
}

impl CircuitSpec {
    pub fn validate(&self, model: &ModelConfig, task: &TaskConfig) -> Result<(), CircuitError> {
        let bad = |m: String| Err(CircuitError::Invalid(m));
        if self.paths.is_empty() {
            // legal (validating an empty circuit is a meaningful control),
            // nothing else to check
            return Ok(());
        }
        let mut seen: BTreeMap<(usize, usize), Vec<Role>> = BTreeMap::new();
        for p in &self.paths {
            if p.layer >= model.layers || p.head >= model.heads_per_layer {
                return bad(format!(
                    "path {} outside a {}x{} model",
                    p.id(),
                    model.layers,
                    model.heads_per_layer
                ));
            }
            if !p.src.is_static() {
                return Err(CircuitError::DynamicRole { role: p.src });
            }
            for role in [p.src, p.dst] {
                if !role.valid_for(task) {
                    return bad(format!("path {}: role {role} invalid for D={}", p.id(), task.d));
                }
            }
            let srcs = seen.entry((p.layer, p.head)).or_default();
            if srcs.contains(&p.src) {
                return bad(format!(
                    "layer {} head {}: two paths share source {}",
                    p.layer, p.head, p.src
                ));
            }
            srcs.push(p.src);
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit specs are plain data")
    }

    pub fn from_json_str(text: &str) -> Result<Self, CircuitError> {
        serde_json::from_str(text).map_err(|e| CircuitError::Json(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CircuitError> {
        let text = std::fs::read_to_string(path).map_err(|e| CircuitError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }
}

// --- ablation specs ----------------------------------------------------------

/// What to do with the rows claimed by one source role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowAction {
    /// One-hot attention onto the resolved destination.
    Attend(Role),
    /// Uniform attention over causally allowed positions (a knockout).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowRule {
    pub src: Role,
    pub action: RowAction,
}

/// Treatment of one head under ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadAblation {
    /// Leave the computed attention untouched.
    Keep,
    /// Every row uniform over its causally allowed positions.
    Uniform,
    /// Every row attends to itself.
    Identity,
    /// Per-role one-hot rules; unclaimed rows fall back to Identity.
    Rules(Vec<RowRule>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRule {
    pub layer: usize,
    pub head: usize,
    pub ablation: HeadAblation,
}

/// Full attention-replacement plan: explicit per-head entries plus a
/// background applied to every other head, so all heads are covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub background: HeadAblation,
    pub heads: Vec<HeadRule>,
}

impl AblationSpec {
    pub fn all_keep() -> Self {
        AblationSpec {
            background: HeadAblation::Keep,
            heads: Vec::new(),
        }
    }

    pub fn all_uniform() -> Self {
        AblationSpec {
            background: HeadAblation::Uniform,
            heads: Vec::new(),
        }
    }

    pub fn validate(&self, model: &ModelConfig, task: &TaskConfig) -> Result<(), CircuitError> {
        if matches!(self.background, HeadAblation::Rules(_)) {
            return Err(CircuitError::Invalid(
                "background must be Keep, Uniform, or Identity".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for rule in &self.heads {
            if rule.layer >= model.layers || rule.head >= model.heads_per_layer {
                return Err(CircuitError::Invalid(format!(
                    "head ({}, {}) outside a {}x{} model",
                    rule.layer, rule.head, model.layers, model.heads_per_layer
                )));
            }
            if !seen.insert((rule.layer, rule.head)) {
                return Err(CircuitError::Invalid(format!(
                    "head ({}, {}) listed twice",
                    rule.layer, rule.head
                )));
            }
            if let HeadAblation::Rules(rules) = &rule.ablation {
                for r in rules {
                    if !r.src.is_static() {
                        return Err(CircuitError::DynamicRole { role: r.src });
                    }
                    if !r.src.valid_for(task) {
                        return Err(CircuitError::Invalid(format!(
                            "source {} invalid for D={}",
                            r.src, task.d
                        )));
                    }
                    if let RowAction::Attend(dst) = r.action {
                        if !dst.valid_for(task) {
                            return Err(CircuitError::Invalid(format!(
                                "destination {dst} invalid for D={}",
                                task.d
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// The combined ablation of a circuit: path heads get their one-hot
/// rules, every other head gets the circuit's background.
pub fn combined_ablation(circuit: &CircuitSpec) -> AblationSpec {
    build_ablation(circuit, None)
}

/// Leave-one-path-out: like the combined ablation, but the knocked
/// path's source rows become uniform instead of one-hot.
pub fn knockout_ablation(circuit: &CircuitSpec, knocked: usize) -> AblationSpec {
    build_ablation(circuit, Some(knocked))
}

fn build_ablation(circuit: &CircuitSpec, knocked: Option<usize>) -> AblationSpec {
    let background = match circuit.background {
        Background::Uniform => HeadAblation::Uniform,
        Background::Identity => HeadAblation::Identity,
    };
    let mut by_head: BTreeMap<(usize, usize), Vec<RowRule>> = BTreeMap::new();
    for (i, p) in circuit.paths.iter().enumerate() {
        let action = if Some(i) == knocked {
            RowAction::Uniform
        } else {
            RowAction::Attend(p.dst)
        };
        by_head
            .entry((p.layer, p.head))
            .or_default()
            .push(RowRule { src: p.src, action });
    }
    AblationSpec {
        background,
        heads: by_head
            .into_iter()
            .map(|((layer, head), rules)| HeadRule {
                layer,
                head,
                ablation: HeadAblation::Rules(rules),
            })
            .collect(),
    }
}

// --- role resolution ---------------------------------------------------------

/// All positions carrying a static role. Dynamic roles (PrevToken, Self)
/// have no fixed positions and are rejected.
pub fn resolve_role(roles: &[PosRole], role: Role) -> Result<Vec<usize>, CircuitError> {
    if !role.is_static() {
        return Err(CircuitError::DynamicRole { role });
    }
    let hits: Vec<usize> = (0..roles.len()).filter(|&i| role.matches(&roles[i])).collect();
    if hits.is_empty() {
        return Err(CircuitError::Unresolvable { role, chain: None });
    }
    Ok(hits)
}

/// Destination positions for one attending row. Static roles resolve
/// within the row's own chain; PrevToken is the preceding position (the
/// row itself at position 0); Self is the row itself.
pub fn resolve_dst(roles: &[PosRole], role: Role, row: usize) -> Result<Vec<usize>, CircuitError> {
    match role {
        Role::PrevToken => Ok(vec![row.saturating_sub(1)]),
        Role::SelfPos => Ok(vec![row]),
        _ => {
            let chain = roles[row].chain();
            let hits: Vec<usize> = (0..roles.len())
                .filter(|&i| role.matches(&roles[i]) && roles[i].chain() == chain)
                .collect();
            if hits.is_empty() {
                return Err(CircuitError::Unresolvable {
                    role,
                    chain: Some(chain),
                });
            }
            for &dst in &hits {
                if dst > row {
                    return Err(CircuitError::NonCausal { row, dst, role });
                }
            }
            Ok(hits)
        }
    }
}

/// Resolve an ablation spec against one example's position roles into
/// concrete per-row attention plans.
pub fn resolve_ablation(
    spec: &AblationSpec,
    roles: &[PosRole],
    config: &ModelConfig,
) -> Result<ResolvedAblation, CircuitError> {
    let seq_len = roles.len();
    let explicit: BTreeMap<(usize, usize), &HeadAblation> = spec
        .heads
        .iter()
        .map(|r| ((r.layer, r.head), &r.ablation))
        .collect();
    let mut resolved = ResolvedAblation::default();
    for layer in 0..config.layers {
        for head in 0..config.heads_per_layer {
            let ablation = explicit.get(&(layer, head)).copied().unwrap_or(&spec.background);
            let plans = match ablation {
                HeadAblation::Keep => continue,
                HeadAblation::Uniform => vec![RowPlan::Uniform; seq_len],
                HeadAblation::Identity => identity_plans(seq_len),
                HeadAblation::Rules(rules) => {
                    let mut plans = identity_plans(seq_len);
                    let mut claimed = vec![false; seq_len];
                    for rule in rules {
                        for row in resolve_role(roles, rule.src)? {
                            if claimed[row] {
                                return Err(CircuitError::Conflict { layer, head, row });
                            }
                            claimed[row] = true;
                            plans[row] = match rule.action {
                                RowAction::Uniform => RowPlan::Uniform,
                                RowAction::Attend(dst) => {
                                    RowPlan::OneHot(resolve_dst(roles, dst, row)?)
                                }
                            };
                        }
                    }
                    plans
                }
            };
            resolved.heads.insert((layer, head), plans);
        }
    }
    Ok(resolved)
}

fn identity_plans(seq_len: usize) -> Vec<RowPlan> {
    (0..seq_len).map(|i| RowPlan::OneHot(vec![i])).collect()
}

// --- ablated evaluation ------------------------------------------------------

/// Forward pass with the spec's attention replacements applied.
pub fn ablate_forward(
    model: &Model<f32>,
    example: &EncodedExample,
    n_queries: usize,
    spec: &AblationSpec,
    capture: bool,
) -> Result<(Tensor<f32>, Option<AttentionCapture<f32>>), CircuitError> {
    let resolved = resolve_ablation(spec, &example.roles, &model.config)?;
    let out = model.forward(
        &example.inputs,
        n_queries,
        &ForwardOpts {
            capture,
            trainable: false,
            ablation: Some(&resolved),
        },
    )?;
    Ok((out.graph.value(out.output).clone(), out.capture))
}

fn mse(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let n = a.len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Mean validation MSE, optionally under an ablation (None = unablated).
pub fn mean_mse(
    model: &Model<f32>,
    examples: &[EncodedExample],
    n_queries: usize,
    spec: Option<&AblationSpec>,
) -> Result<f64, CircuitError> {
    let mut sum = 0.0;
    for ex in examples {
        let pred = match spec {
            Some(spec) => ablate_forward(model, ex, n_queries, spec, false)?.0,
            None => {
                let out = model.forward(&ex.inputs, n_queries, &ForwardOpts::default())?;
                out.graph.value(out.output).clone()
            }
        };
        sum += mse(&pred, &ex.targets);
    }
    Ok(sum / examples.len() as f64)
}

/// The accept/reject table for a hypothesized circuit: combined ablation
/// MSE plus one leave-one-path-out MSE per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitReport {
    pub unablated_mse: f64,
    pub combined_mse: f64,
    pub knockouts: Vec<(String, f64)>,
}

impl CircuitReport {
    /// The comparison table: 1 + |paths| rows.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("combined".to_string(), self.combined_mse)];
        rows.extend(self.knockouts.iter().cloned());
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ablation,mse\n");
        for (label, mse) in self.rows() {
            out.push_str(&format!("{},{mse}\n", label.replace(',', ";")));
        }
        out
    }
}

pub fn validate_circuit(
    model: &Model<f32>,
    task: &TaskConfig,
    circuit: &CircuitSpec,
    val_set: &[EncodedExample],
) -> Result<CircuitReport, CircuitError> {
    if val_set.is_empty() {
        return Err(CircuitError::Invalid("validation set is empty".into()));
    }
    circuit.validate(&model.config, task)?;
    let unablated_mse = mean_mse(model, val_set, task.n, None)?;
    let combined = combined_ablation(circuit);
    let combined_mse = mean_mse(model, val_set, task.n, Some(&combined))?;
    let mut knockouts = Vec::with_capacity(circuit.paths.len());
    for (i, path) in circuit.paths.iter().enumerate() {
        let spec = knockout_ablation(circuit, i);
        knockouts.push((path.id(), mean_mse(model, val_set, task.n, Some(&spec))?));
    }
    Ok(CircuitReport {
        unablated_mse,
        combined_mse,
        knockouts,
    })
}

// --- attention-map export ----------------------------------------------------

/// Run `examples` through the model with capture on; write per-head
/// attention matrices (CSV + grayscale SVG), both per example and
/// averaged, into `out_dir`. Returns the per-example captures.
pub fn export_attention_maps(
    model: &Model<f32>,
    examples: &[EncodedExample],
    n_queries: usize,
    out_dir: &Path,
) -> Result<Vec<AttentionCapture<f32>>, CircuitError> {
    if examples.is_empty() {
        return Err(CircuitError::Invalid("no examples to export".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CircuitError::Io {
        path: out_dir.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut captures = Vec::with_capacity(examples.len());
    for ex in examples {
        let out = model.forward(
            &ex.inputs,
            n_queries,
            &ForwardOpts {
                capture: true,
                ..Default::default()
            },
        )?;
        captures.push(out.capture.expect("capture requested"));
    }
    let seq_len = captures[0].seq_len;
    let cfg = &model.config;
    let write_map = |name: String, values: &[f64], title: &str| -> Result<(), CircuitError> {
        let svg = heatmap_svg(seq_len, seq_len, values, title)?;
        crate::plot::write_text(&out_dir.join(format!("{name}.svg")), &svg)?;
        crate::plot::write_text(
            &out_dir.join(format!("{name}.csv")),
            &matrix_csv(seq_len, seq_len, values),
        )?;
        Ok(())
    };
    for layer in 0..cfg.layers {
        for head in 0..cfg.heads_per_layer {
            let mut avg = vec![0.0f64; seq_len * seq_len];
            for (e, cap) in captures.iter().enumerate() {
                let m = cap.at(layer, head);
                let vals: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
                for (a, &v) in avg.iter_mut().zip(&vals) {
                    *a += v / captures.len() as f64;
                }
                write_map(
                    format!("attn_ex{e:03}_l{layer}h{head}"),
                    &vals,
                    &format!("example {e} layer {layer} head {head}"),
                )?;
            }
            write_map(
                format!("attn_avg_l{layer}h{head}"),
                &avg,
                &format!("mean of {} examples, layer {layer} head {head}", captures.len()),
            )?;
        }
    }
    Ok(captures)
}

// --- emergence tracking ------------------------------------------------------

/// Average attention of one circuit path per checkpoint epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub path_id: String,
    /// Strictly increasing checkpoint epochs.
    pub epochs: Vec<u64>,
    /// Average attention per epoch, each in [0,1].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceTrace {
    pub paths: Vec<PathTrace>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl EmergenceTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,path_id,attention\n");
        if self.paths.is_empty() {
            return out;
        }
        for i in 0..self.paths[0].epochs.len() {
            for p in &self.paths {
                out.push_str(&format!("{},{},{}\n", p.epochs[i], p.path_id, p.values[i]));
            }
        }
        out
    }
}

/// Mean attention the path's source rows put on their resolved
/// destinations in one capture.
pub fn path_attention(
    capture: &AttentionCapture<f32>,
    roles: &[PosRole],
    path: &CircuitPath,
) -> Result<f64, CircuitError> {
    let attn = capture.at(path.layer, path.head);
    let srcs = resolve_role(roles, path.src)?;
    let mut sum = 0.0;
    for &row in &srcs {
        let dsts = resolve_dst(roles, path.dst, row)?;
        sum += dsts.iter().map(|&d| attn.at(row, d) as f64).sum::<f64>() / dsts.len() as f64;
    }
    Ok(sum / srcs.len() as f64)
}

/// Evaluate every checkpoint in `dir` on `n_examples` fixed sequences and
/// record each path's average attention, keyed by epoch. Unreadable
/// checkpoints are skipped and reported in the trace.
pub fn emergence_trace(
    dir: &Path,
    circuit: &CircuitSpec,
    n_examples: usize,
) -> Result<EmergenceTrace, CircuitError> {
    let mut names: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CircuitError::Io {
            path: dir.display().to_string(),
            detail: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rlcp"))
        .collect();
    names.sort();

    let mut skipped = Vec::new();
    let mut by_epoch: BTreeMap<u64, Model<f32>> = BTreeMap::new();
    let mut task: Option<TaskConfig> = None;
    for path in names {
        match load_checkpoint(&path) {
            Ok(ck) => {
                match task {
                    None => task = Some(ck.task),
                    Some(t) if t != ck.task => {
                        return Err(CircuitError::Checkpoint {
                            path: path.display().to_string(),
                            detail: "task config differs from other checkpoints in dir".into(),
                        })
                    }
                    _ => {}
                }
                by_epoch.entry(ck.epoch).or_insert(ck.model);
            }
            Err(e) => skipped.push((path.display().to_string(), e.to_string())),
        }
    }
    let task = task.ok_or(CircuitError::Invalid(format!(
        "no readable checkpoints in {}",
        dir.display()
    )))?;
    let first = by_epoch.values().next().expect("task implies a checkpoint");
    circuit.validate(&first.config, &task)?;

    let examples = gen_batch(&task, derive_seed(task.seed, DOM_TRACE, 0), n_examples);
    let mut paths: Vec<PathTrace> = circuit
        .paths
        .iter()
        .map(|p| PathTrace {
            path_id: p.id(),
            epochs: Vec::new(),
            values: Vec::new(),
        })
        .collect();
    for (&epoch, model) in &by_epoch {
        let mut sums = vec![0.0f64; circuit.paths.len()];
        for ex in &examples {
            let out = model.forward(
                &ex.inputs,
                task.n,
                &ForwardOpts {
                    capture: true,
                    ..Default::default()
                },
            )?;
            let cap = out.capture.expect("capture requested");
            for (s, path) in sums.iter_mut().zip(&circuit.paths) {
                *s += path_attention(&cap, &ex.roles, path)?;
            }
        }
        for (trace, s) in paths.iter_mut().zip(sums) {
            trace.epochs.push(epoch);
            trace.values.push(s / examples.len() as f64);
        }
    }
    Ok(EmergenceTrace { paths, skipped })
}

/// First (possibly fractional) epoch at which the linearly interpolated
/// trace reaches the threshold; None if it never does.
pub fn crossing_epoch(trace: &PathTrace, threshold: f64) -> Option<f64> {
    let (epochs, values) = (&trace.epochs, &trace.values);
    if values.is_empty() {
        return None;
    }
    if values[0] >= threshold {
        return Some(epochs[0] as f64);
    }
    for i in 1..values.len() {
        if values[i] >= threshold {
            let (e0, e1) = (epochs[i - 1] as f64, epochs[i] as f64);
            let (v0, v1) = (values[i - 1], values[i]);
            return Some(e0 + (threshold - v0) / (v1 - v0) * (e1 - e0));
        }
    }
    None
}
