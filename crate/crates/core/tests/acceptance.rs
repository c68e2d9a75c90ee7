//! Acceptance suite: nine numbered criteria, each printing one
//! `criterion N (<name>): PASS|FAIL` line.
//!
//! Everything runs inside a single #[test] so that trained models are
//! shared between criteria and the timing-sensitive checks (criteria 1
//! and 2) are not distorted by parallel test threads. The suite trains
//! several small transformers from scratch and takes a few minutes on one
//! CPU core. Run `cargo test --test acceptance -- --nocapture` to watch
//! the per-criterion lines as they appear.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use retlab::bench::{
    gen_prompt, grade, parse_fixture, run_cases, solve_case, BenchRun, Formulation, Grade,
    MockBehavior, MockClient,
};
use retlab::circuit::{
    crossing_epoch, emergence_trace, validate_circuit, Background, CircuitPath, CircuitReport,
    CircuitSpec, PathTrace, Role,
};
use retlab::cli::dispatch;
use retlab::flow::{initial_state, min_layers_closed_form, step as flow_step, theorem1_bound};
use retlab::graph::grad_check;
use retlab::model::{ForwardOpts, Model, ModelConfig};
use retlab::seeds::{derive_seed, DOM_BENCH, DOM_VAL_DATA};
use retlab::task::{gen_batch, gen_example, TaskConfig};
use retlab::tensor::Tensor;
use retlab::train::{first_eval_below, train, RunConfig, RunMetrics};

// --- tolerances and pinned configurations ------------------------------------

/// Criterion 1: depth range checked by iterating the flow model.
const C1_ITERATED_MAX_D: usize = 500;
/// Criterion 1: depth range for the closed-form lower-bound comparison.
const C1_BOUND_MAX_D: u64 = 1_000_000;
const C1_TIME_LIMIT: Duration = Duration::from_secs(5);

/// Criterion 2: worst relative gradient error allowed, and central
/// difference step, both at f64.
const C2_TOLERANCE: f64 = 1e-4;
const C2_STEP: f64 = 1e-5;
const C2_TIME_LIMIT: Duration = Duration::from_secs(10);

/// Criterion 3: induction task (D=1, N=2) budgets and loss bounds; the
/// reported loss is the mean of the last 10 evaluations.
const C3_SEED: u64 = 12;
const C3_STEPS: usize = 1500;
const C3_TWO_LAYER_MAX: f64 = 0.1;
const C3_ONE_LAYER_MIN: f64 = 0.4;

/// Criterion 4: matched-budget contrast at D=3, N=4, 4 layers.
const C4_SEEDS: [u64; 2] = [21, 22];
const C4_STEPS: usize = 3000;

/// Criterion 5: ordered emergence across IC seeds at D=3 (N=2 keeps the
/// later chain positions learnable inside the step budget).
const C5_SEEDS: [u64; 3] = [41, 43, 44];
const C5_STEPS: usize = 12_000;

/// Criterion 6/7: the trained model whose circuit is validated by
/// ablation and tracked across checkpoints.
const C6_SEED: u64 = 31;
const C6_LAYERS: usize = 3;
const C6_HEADS: usize = 2;
const C6_STEPS: usize = 16_000;
const C6_COMBINED_MAX_RATIO: f64 = 2.0;
const C6_KNOCKOUT_MIN_RATIO: f64 = 3.0;

/// Criterion 8: cases per formulation and the binomial tolerance.
const C8_CASES: usize = 500;
const C8_SEED: u64 = 0x8e;
const C8_SIGMA: f64 = 3.0;

fn main_attn_config(task: TaskConfig, layers: usize, heads: usize, residual: usize) -> RunConfig {
    let mut model = ModelConfig::for_task(&task, layers, heads, residual);
    model.use_mlp = false;
    RunConfig {
        seed: task.seed,
        task,
        model,
        steps: 0,
        batch_size: 16,
        lr: 1e-3,
        weight_decay: 1e-4,
        train_examples: 4096,
        val_examples: 128,
        val_every: 50,
        checkpoint_every_epochs: None,
        checkpoint_dir: None,
    }
}

fn tail_mean_val(metrics: &RunMetrics, k: usize) -> f64 {
    let n = metrics.evals.len();
    let tail = &metrics.evals[n.saturating_sub(k)..];
    tail.iter().map(|e| e.val_loss).sum::<f64>() / tail.len() as f64
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create tmp dir");
    dir
}

// --- criterion 1: flow-model exactness ----------------------------------------

/// Independent closed form: smallest t with (3^t - 1)/2 >= 2D.
fn closed_form_oracle(d: u64) -> u32 {
    let mut t = 0u32;
    let mut pow3: u128 = 1;
    while (pow3 - 1) / 2 < 2 * d as u128 {
        pow3 *= 3;
        t += 1;
    }
    t
}

fn criterion1() -> Result<(), String> {
    let t0 = Instant::now();
    let mut fails: Vec<String> = Vec::new();

    for d in 1..=C1_ITERATED_MAX_D {
        let mut state = initial_state(d);
        let mut t = 0u32;
        while state.hi[0] < 2 * d {
            state = flow_step(&state);
            t += 1;
            let bound = 3u128.pow(t) + 1;
            if state.max_len() as u128 > bound {
                fails.push(format!(
                    "D={d} t={t}: interval length {} exceeds 3^t+1={bound}",
                    state.max_len()
                ));
            }
            if t > 64 {
                fails.push(format!("D={d}: no convergence after 64 layers"));
                break;
            }
        }
        if t != closed_form_oracle(d as u64) {
            fails.push(format!(
                "D={d}: iterated min_layers {t} != closed form {}",
                closed_form_oracle(d as u64)
            ));
        }
        if min_layers_closed_form(d as u64) != t {
            fails.push(format!(
                "D={d}: library closed form {} != iterated {t}",
                min_layers_closed_form(d as u64)
            ));
        }
        if fails.len() > 5 {
            break;
        }
    }

    for d in 1..=C1_BOUND_MAX_D {
        if min_layers_closed_form(d) < theorem1_bound(d) {
            fails.push(format!(
                "D={d}: min_layers {} below bound {}",
                min_layers_closed_form(d),
                theorem1_bound(d)
            ));
            break;
        }
    }

    let elapsed = t0.elapsed();
    if elapsed > C1_TIME_LIMIT {
        fails.push(format!("took {elapsed:?}, limit {C1_TIME_LIMIT:?}"));
    }
    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criterion 2: autograd soundness -------------------------------------------

fn to_f64(t: &Tensor<f32>) -> Tensor<f64> {
    Tensor::from_vec(t.shape(), t.data().iter().map(|&v| v as f64).collect()).unwrap()
}

fn criterion2() -> Result<(), String> {
    let t0 = Instant::now();
    // D=1, N=2 gives sequence length L = N(2D+1) = 6.
    let task = TaskConfig {
        n: 2,
        d: 1,
        k: 4,
        ic: true,
        seed: 0xC2,
        ..Default::default()
    };
    let config = ModelConfig::for_task(&task, 2, 1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let model = Model::<f64>::init(config, &mut rng).map_err(|e| e.to_string())?;

    let ex = gen_example(&task, derive_seed(task.seed, DOM_VAL_DATA, 0));
    let inputs = to_f64(&ex.inputs);
    let targets = to_f64(&ex.targets);
    if inputs.shape()[0] != 6 {
        return Err(format!("expected L=6 rows, got {}", inputs.shape()[0]));
    }

    let loss_of = |m: &Model<f64>| -> f64 {
        let out = m.forward(&inputs, task.n, &ForwardOpts::default()).unwrap();
        let mut g = out.graph;
        let t = g.constant(targets.clone());
        let l = g.mse_loss(out.output, t).unwrap();
        g.value(l).item()
    };

    let fwd = model
        .forward(
            &inputs,
            task.n,
            &ForwardOpts {
                trainable: true,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
    let mut g = fwd.graph;
    let t = g.constant(targets.clone());
    let l = g.mse_loss(fwd.output, t).map_err(|e| e.to_string())?;
    let grads = g.backward(l);

    let mut worst = 0.0f64;
    for i in 0..model.params.len() {
        let analytic = grads
            .of(fwd.param_nodes[i])
            .ok_or_else(|| format!("no gradient for param {i}"))?
            .clone();
        let err = grad_check(
            |probe| {
                let mut m2 = model.clone();
                *m2.params.tensor_mut(i) = probe.clone();
                loss_of(&m2)
            },
            model.params.tensor(i),
            &analytic,
            C2_STEP,
        );
        if err > worst {
            worst = err;
        }
    }

    let elapsed = t0.elapsed();
    let mut fails = Vec::new();
    if worst >= C2_TOLERANCE {
        fails.push(format!(
            "worst relative gradient error {worst:.3e} >= {C2_TOLERANCE:.0e}"
        ));
    }
    if elapsed > C2_TIME_LIMIT {
        fails.push(format!("took {elapsed:?}, limit {C2_TIME_LIMIT:?}"));
    }
    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criterion 3: induction baseline -------------------------------------------

fn criterion3() -> Result<(), String> {
    let task = TaskConfig {
        n: 2,
        d: 1,
        k: 4,
        ic: true,
        seed: C3_SEED,
        ..Default::default()
    };
    let mut fails = Vec::new();

    let mut two = main_attn_config(task, 2, 1, 16);
    two.steps = C3_STEPS;
    let res2 = train(&two).map_err(|e| format!("2-layer run: {e}"))?;
    let loss2 = tail_mean_val(&res2.metrics, 10);
    if loss2 >= C3_TWO_LAYER_MAX {
        fails.push(format!(
            "2-layer val MSE {loss2:.4} not below {C3_TWO_LAYER_MAX}"
        ));
    }

    let mut one = main_attn_config(task, 1, 1, 16);
    one.steps = C3_STEPS;
    let res1 = train(&one).map_err(|e| format!("1-layer run: {e}"))?;
    let loss1 = tail_mean_val(&res1.metrics, 10);
    if loss1 <= C3_ONE_LAYER_MIN {
        fails.push(format!(
            "1-layer val MSE {loss1:.4} not above {C3_ONE_LAYER_MIN}"
        ));
    }

    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criterion 4: implicit-curriculum contrast ---------------------------------

fn d3_task(n: usize, k: usize, ic: bool, seed: u64) -> TaskConfig {
    TaskConfig {
        n,
        d: 3,
        k,
        ic,
        seed,
        ..Default::default()
    }
}

fn criterion4() -> Result<(), String> {
    let mut fails = Vec::new();
    for seed in C4_SEEDS {
        let mut run = main_attn_config(d3_task(4, 4, true, seed), 4, 1, 32);
        run.steps = C4_STEPS;
        let res = train(&run).map_err(|e| format!("IC seed {seed}: {e}"))?;
        match first_eval_below(&res.metrics, 0, 0.5) {
            Some(_) => {}
            None => fails.push(format!(
                "IC seed {seed}: partial loss for x1 never fell below 0.5 in {C4_STEPS} steps"
            )),
        }
    }
    for seed in C4_SEEDS {
        let mut run = main_attn_config(d3_task(4, 4, false, seed), 4, 1, 32);
        run.steps = C4_STEPS;
        let res = train(&run).map_err(|e| format!("non-IC seed {seed}: {e}"))?;
        if let Some(e) = res.metrics.evals.iter().find(|e| e.val_loss <= 0.5) {
            fails.push(format!(
                "non-IC seed {seed}: val loss {:.4} fell to 0.5 at step {}",
                e.val_loss, e.step
            ));
        }
    }
    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criterion 5: curriculum ordering -------------------------------------------

fn criterion5() -> Result<(), String> {
    let mut fails = Vec::new();
    for seed in C5_SEEDS {
        let mut run = main_attn_config(d3_task(2, 8, true, seed), 4, 1, 32);
        run.steps = C5_STEPS;
        let res = train(&run).map_err(|e| format!("seed {seed}: {e}"))?;
        let cross: Vec<Option<usize>> = (0..3)
            .map(|j| first_eval_below(&res.metrics, j, 0.5))
            .collect();
        // x1 and x2 must emerge inside the budget; x3 may still be pending
        // (an unfinished tail keeps the ordering claim intact).
        let (c1, c2) = match (cross[0], cross[1]) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                fails.push(format!(
                    "seed {seed}: x1/x2 crossings {:?} incomplete after {C5_STEPS} steps",
                    cross
                ));
                continue;
            }
        };
        if c1 > c2 {
            fails.push(format!("seed {seed}: x1 crossed at {c1} after x2 at {c2}"));
        }
        if let Some(c3) = cross[2] {
            if c2 > c3 {
                fails.push(format!("seed {seed}: x2 crossed at {c2} after x3 at {c3}"));
            }
        }
    }
    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criteria 6 and 7: circuit ablation and emergence ---------------------------

struct CircuitFixture {
    ckpt_dir: PathBuf,
    task: TaskConfig,
    model: Model<f32>,
    circuit: CircuitSpec,
}

/// The hand-authored retrieval circuit of the criterion-6 model: the
/// step-1 answer is read off the step-1 pair, the step-2 answer off the
/// step-2 pair, each by its own late-layer head.
fn c6_circuit() -> CircuitSpec {
    CircuitSpec {
        paths: vec![
            CircuitPath {
                layer: 2,
                head: 0,
                src: Role::Query,
                dst: Role::PairSecond(1),
            },
            CircuitPath {
                layer: 2,
                head: 1,
                src: Role::Query,
                dst: Role::PairSecond(2),
            },
        ],
        background: Background::Uniform,
    }
}

fn build_circuit_fixture() -> Result<CircuitFixture, String> {
    let ckpt_dir = tmp_dir("acceptance_circuit");
    let task = TaskConfig {
        n: 2,
        d: 2,
        k: 8,
        ic: true,
        seed: C6_SEED,
        ..Default::default()
    };
    let mut run = main_attn_config(task, C6_LAYERS, C6_HEADS, 32);
    run.steps = C6_STEPS;
    run.checkpoint_every_epochs = Some(2);
    run.checkpoint_dir = Some(ckpt_dir.clone());
    let res = train(&run).map_err(|e| format!("circuit model training: {e}"))?;
    Ok(CircuitFixture {
        ckpt_dir,
        task,
        model: res.model,
        circuit: c6_circuit(),
    })
}

fn criterion6(fix: &CircuitFixture) -> Result<CircuitReport, String> {
    let val = gen_batch(
        &fix.task,
        derive_seed(fix.task.seed, DOM_VAL_DATA, 0),
        64,
    );
    let report = validate_circuit(&fix.model, &fix.task, &fix.circuit, &val)
        .map_err(|e| e.to_string())?;
    let mut fails = Vec::new();
    if report.combined_mse > C6_COMBINED_MAX_RATIO * report.unablated_mse {
        fails.push(format!(
            "combined ablation MSE {:.4} exceeds {C6_COMBINED_MAX_RATIO}x unablated {:.4}",
            report.combined_mse, report.unablated_mse
        ));
    }
    for (id, mse) in &report.knockouts {
        if *mse < C6_KNOCKOUT_MIN_RATIO * report.combined_mse {
            fails.push(format!(
                "knockout {id} MSE {:.4} below {C6_KNOCKOUT_MIN_RATIO}x combined {:.4}",
                mse, report.combined_mse
            ));
        }
    }
    if fails.is_empty() {
        Ok(report)
    } else {
        Err(fails.join("; "))
    }
}

fn criterion7(fix: &CircuitFixture) -> Result<(), String> {
    let mut fails = Vec::new();

    // Synthetic traces against hand-computed interpolation.
    let ramp = PathTrace {
        path_id: "ramp".into(),
        epochs: vec![100, 110],
        values: vec![0.4, 0.6],
    };
    if crossing_epoch(&ramp, 0.5) != Some(105.0) {
        fails.push(format!(
            "0.4@100,0.6@110 crossed at {:?}, expected Some(105.0)",
            crossing_epoch(&ramp, 0.5)
        ));
    }
    let high = PathTrace {
        path_id: "high".into(),
        epochs: vec![100, 110],
        values: vec![0.6, 0.7],
    };
    if crossing_epoch(&high, 0.5) != Some(100.0) {
        fails.push("already-crossed trace should report its first epoch".into());
    }
    let flat = PathTrace {
        path_id: "flat".into(),
        epochs: vec![100, 110],
        values: vec![0.1, 0.2],
    };
    if crossing_epoch(&flat, 0.5).is_some() {
        fails.push("never-crossing trace should report None".into());
    }

    // Checkpoint traces of the criterion-6 circuit: each path must end
    // above 0.5 and the crossings must follow chain order.
    let trace =
        emergence_trace(&fix.ckpt_dir, &fix.circuit, 16).map_err(|e| e.to_string())?;
    let mut crossings = Vec::new();
    for (path, p) in fix.circuit.paths.iter().zip(&trace.paths) {
        let end = *p.values.last().unwrap_or(&0.0);
        if end <= 0.5 {
            fails.push(format!("path {} ends at {end:.3}, not above 0.5", p.path_id));
        }
        match crossing_epoch(p, 0.5) {
            Some(e) => crossings.push((chain_step_of(path), e)),
            None => fails.push(format!("path {} never crossed 0.5", p.path_id)),
        }
    }
    for (i, &(s0, e0)) in crossings.iter().enumerate() {
        for &(s1, e1) in &crossings[i + 1..] {
            let ((s0, e0), (s1, e1)) = if s0 <= s1 { ((s0, e0), (s1, e1)) } else { ((s1, e1), (s0, e0)) };
            if s0 < s1 && e0 > e1 {
                fails.push(format!(
                    "step-{s0} path crossed at epoch {e0:.1} after step-{s1} path at {e1:.1}"
                ));
            }
        }
    }

    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

/// Chain step served by a path, for ordering: the step of its pair-role
/// endpoint (queries serve the step they read from).
fn chain_step_of(path: &CircuitPath) -> usize {
    let step = |r: &Role| match *r {
        Role::PairFirst(s) | Role::PairSecond(s) => Some(s),
        _ => None,
    };
    step(&path.dst).or_else(|| step(&path.src)).unwrap_or(0)
}

// --- criterion 8: benchmark generators ------------------------------------------

fn criterion8() -> Result<(), String> {
    let mut fails = Vec::new();

    for (fi, f) in Formulation::ALL.into_iter().enumerate() {
        let d = f.default_d();
        let mut bad_solves = 0usize;
        for i in 0..C8_CASES {
            let case_seed = derive_seed(derive_seed(C8_SEED, DOM_BENCH, fi as u64), DOM_BENCH, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let case = match gen_prompt(f, d, 4, &mut rng) {
                Ok(c) => c,
                Err(e) => {
                    fails.push(format!("{f} case {i}: generation failed: {e}"));
                    break;
                }
            };
            if let Err(e) = case.check() {
                fails.push(format!("{f} case {i}: malformed: {e}"));
                break;
            }
            match solve_case(&case) {
                Ok(ans) if ans == case.correct => {}
                Ok(ans) => {
                    bad_solves += 1;
                    if bad_solves == 1 {
                        fails.push(format!(
                            "{f} case {i}: solver said {ans:?}, correct is {:?}",
                            case.correct
                        ));
                    }
                }
                Err(e) => {
                    bad_solves += 1;
                    if bad_solves == 1 {
                        fails.push(format!("{f} case {i}: solver failed: {e}"));
                    }
                }
            }
        }
        if bad_solves > 1 {
            fails.push(format!("{f}: {bad_solves} of {C8_CASES} cases mis-solved"));
        }

        // Uniform-random mock accuracy vs. the chance baseline.
        let run = BenchRun {
            formulation: f,
            n_cases: C8_CASES,
            n_chains: 4,
            d: None,
            max_attempts: 8,
        };
        let mut client = MockClient::new(MockBehavior::Uniform, derive_seed(C8_SEED, DOM_BENCH, 1000 + fi as u64));
        let (report, _) = run_cases(&mut client, &run, derive_seed(C8_SEED, DOM_BENCH, fi as u64), None)
            .map_err(|e| format!("{f}: {e}"))?;
        let p = report.baseline;
        let sigma = (p * (1.0 - p) / report.graded as f64).sqrt();
        if (report.accuracy - p).abs() > C8_SIGMA * sigma {
            fails.push(format!(
                "{f}: uniform mock accuracy {:.4} outside {}σ of baseline {:.4} (σ={:.4})",
                report.accuracy, C8_SIGMA, p, sigma
            ));
        }
    }

    // Reference transcripts parse back into cases that grade Correct.
    let fixtures: [(Formulation, &str); 5] = [
        (Formulation::Equations, include_str!("fixtures/equations.txt")),
        (Formulation::LivesWith, include_str!("fixtures/lives_with.txt")),
        (Formulation::Kingdoms, include_str!("fixtures/kingdoms.txt")),
        (Formulation::Functions, include_str!("fixtures/functions.txt")),
        (Formulation::Relatives, include_str!("fixtures/relatives.txt")),
    ];
    for (f, text) in fixtures {
        let case = match parse_fixture(f, text) {
            Ok(c) => c,
            Err(e) => {
                fails.push(format!("{f} fixture failed to parse: {e}"));
                continue;
            }
        };
        if grade(&case, &case.correct) != Grade::Correct {
            fails.push(format!("{f} fixture: stated answer does not grade Correct"));
        }
        match solve_case(&case) {
            Ok(ans) if ans == case.correct => {}
            Ok(ans) => fails.push(format!(
                "{f} fixture: solver said {ans:?}, stated answer is {:?}",
                case.correct
            )),
            Err(e) => fails.push(format!("{f} fixture: solver failed: {e}")),
        }
    }

    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- criterion 9: determinism ----------------------------------------------------

fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).expect("read file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn rerun_identical(name: &str, dir: &Path, argv: &[String]) -> Result<(), String> {
    let code = dispatch(argv.iter().cloned());
    if code != 0 {
        return Err(format!("{name}: first run exited {code}"));
    }
    let first = snapshot_dir(dir);
    let code = dispatch(argv.iter().cloned());
    if code != 0 {
        return Err(format!("{name}: second run exited {code}"));
    }
    let second = snapshot_dir(dir);

    if first.len() != second.len() {
        return Err(format!(
            "{name}: {} files then {} files",
            first.len(),
            second.len()
        ));
    }
    for (path, bytes) in &first {
        match second.get(path) {
            None => return Err(format!("{name}: {path} missing on rerun")),
            Some(b) if b != bytes => {
                return Err(format!("{name}: {path} differs between runs"))
            }
            _ => {}
        }
    }
    Ok(())
}

fn criterion9() -> Result<(), String> {
    let mut fails = Vec::new();

    let gen_dir = tmp_dir("acceptance_det_gen");
    let out = gen_dir.join("data.rlds").display().to_string();
    let argv: Vec<String> = [
        "retlab", "gen", "--out", &out, "--seed", "5", "--examples", "24", "--d", "1", "--n",
        "2", "--k", "4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Err(e) = rerun_identical("gen", &gen_dir, &argv) {
        fails.push(e);
    }

    let train_dir = tmp_dir("acceptance_det_train");
    let out_dir = train_dir.display().to_string();
    let argv: Vec<String> = [
        "retlab",
        "train",
        "--out-dir",
        &out_dir,
        "--seed",
        "3",
        "--steps",
        "40",
        "--batch-size",
        "8",
        "--train-examples",
        "64",
        "--val-examples",
        "16",
        "--val-every",
        "10",
        "--d",
        "1",
        "--n",
        "2",
        "--k",
        "4",
        "--layers",
        "1",
        "--residual-dim",
        "8",
        "--checkpoint-every",
        "2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Err(e) = rerun_identical("train", &train_dir, &argv) {
        fails.push(e);
    }

    let bench_dir = tmp_dir("acceptance_det_bench");
    let out_dir = bench_dir.display().to_string();
    let argv: Vec<String> = [
        "retlab",
        "bench",
        "--out-dir",
        &out_dir,
        "--seed",
        "7",
        "--formulation",
        "equations",
        "--cases",
        "40",
        "--mock",
        "uniform",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Err(e) = rerun_identical("bench", &bench_dir, &argv) {
        fails.push(e);
    }

    if fails.is_empty() {
        Ok(())
    } else {
        Err(fails.join("; "))
    }
}

// --- driver -----------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut failed: Vec<String> = Vec::new();
    let mut report = |n: usize, name: &str, result: Result<(), String>| match result {
        Ok(()) => println!("criterion {n} ({name}): PASS"),
        Err(msg) => {
            println!("criterion {n} ({name}): FAIL");
            failed.push(format!("criterion {n} ({name}): {msg}"));
        }
    };

    report(1, "flow-model exactness", criterion1());
    report(2, "autograd soundness", criterion2());
    report(3, "induction baseline", criterion3());
    report(4, "curriculum contrast", criterion4());
    report(5, "curriculum ordering", criterion5());

    match build_circuit_fixture() {
        Ok(fix) => {
            report(6, "ablation protocol", criterion6(&fix).map(|_| ()));
            report(7, "emergence tracker", criterion7(&fix));
        }
        Err(e) => {
            report(6, "ablation protocol", Err(e.clone()));
            report(7, "emergence tracker", Err(e));
        }
    }

    report(8, "benchmark generators", criterion8());
    report(9, "determinism", criterion9());

    assert!(
        failed.is_empty(),
        "{} criteria failed:\n{}",
        failed.len(),
        failed.join("\n")
    );
}
