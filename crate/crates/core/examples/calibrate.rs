//! Scratch calibration harness; not part of the shipped surface.

use std::time::Instant;

use retlab::circuit::{
    crossing_epoch, emergence_trace, path_attention, validate_circuit, Background, CircuitPath,
    CircuitSpec, Role,
};
use retlab::model::{ForwardOpts, ModelConfig};
use retlab::seeds::{derive_seed, DOM_TRACE, DOM_VAL_DATA};
use retlab::task::{gen_batch, TaskConfig};
use retlab::train::{first_eval_below, train, RunConfig};

fn d3_task(ic: bool, seed: u64) -> TaskConfig {
    TaskConfig {
        n: 4,
        d: 3,
        k: 4,
        ic,
        seed,
        ..Default::default()
    }
}

fn run_config(task: TaskConfig, layers: usize, heads: usize, residual: usize, use_mlp: bool, steps: usize, batch: usize) -> RunConfig {
    let mut model = ModelConfig::for_task(&task, layers, heads, residual);
    model.use_mlp = use_mlp;
    RunConfig {
        task,
        model,
        steps,
        batch_size: batch,
        lr: 1e-3,
        weight_decay: 1e-4,
        train_examples: 4096,
        val_examples: 128,
        val_every: 50,
        seed: task.seed,
        checkpoint_every_epochs: None,
        checkpoint_dir: None,
    }
}

fn summarize(tag: &str, run: &RunConfig) {
    let t0 = Instant::now();
    match train(run) {
        Ok(res) => {
            let m = &res.metrics;
            let last = m.evals.last().unwrap();
            let crossings: Vec<String> = (0..run.task.d)
                .map(|j| match first_eval_below(m, j, 0.5) {
                    Some(s) => format!("x{}@{}", j + 1, s),
                    None => format!("x{}@never", j + 1),
                })
                .collect();
            println!(
                "{tag}: {:.1}s, {} steps, final val {:.4}, partials {:?}, cross [{}]",
                t0.elapsed().as_secs_f64(),
                m.train_loss.len(),
                last.val_loss,
                last.partials.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>(),
                crossings.join(" ")
            );
        }
        Err(e) => println!("{tag}: FAILED after {:.1}s: {e}", t0.elapsed().as_secs_f64()),
    }
}

fn speed() {
    // extrapolate step cost for candidate shapes
    for (layers, heads, residual, mlp, batch) in [
        (4, 1, 32, false, 16),
        (4, 1, 32, true, 16),
        (4, 2, 32, false, 16),
        (4, 1, 48, false, 16),
        (4, 1, 32, false, 32),
        (2, 1, 16, false, 16),
        (3, 1, 32, false, 16),
    ] {
        let mut run = run_config(d3_task(true, 1), layers, heads, residual, mlp, 30, batch);
        run.val_every = 1000;
        let t0 = Instant::now();
        train(&run).unwrap();
        let per = t0.elapsed().as_secs_f64() / 30.0;
        println!(
            "L{layers} H{heads} R{residual} mlp={mlp} batch {batch}: {:.0} ms/step -> 3k steps = {:.0}s",
            per * 1e3,
            per * 3000.0
        );
    }
}

fn c3() {
    for (layers, seed) in [(2, 11), (1, 11), (2, 12), (1, 12)] {
        let task = TaskConfig {
            n: 2,
            d: 1,
            k: 4,
            ic: true,
            seed,
            ..Default::default()
        };
        let run = run_config(task, layers, 1, 16, false, 1500, 16);
        summarize(&format!("c3 L{layers} seed {seed}"), &run);
    }
}

fn c45(steps: usize) {
    for seed in [21u64, 22, 23] {
        let run = run_config(d3_task(true, seed), 4, 1, 32, false, steps, 16);
        summarize(&format!("c45 ic seed {seed}"), &run);
    }
    for seed in [21u64, 22] {
        let run = run_config(d3_task(false, seed), 4, 1, 32, false, steps, 16);
        summarize(&format!("c45 non-ic seed {seed}"), &run);
    }
}

fn grid(steps: usize) {
    for (k, residual, heads, mlp, lr) in [
        (4usize, 32usize, 1usize, false, 1e-3),
        (8, 32, 1, false, 1e-3),
        (8, 48, 2, false, 1e-3),
        (8, 48, 2, true, 1e-3),
        (8, 32, 1, false, 2e-3),
    ] {
        let mut task = d3_task(true, 21);
        task.k = k;
        let mut run = run_config(task, 4, heads, residual, mlp, steps, 16);
        run.lr = lr;
        summarize(
            &format!("grid K{k} R{residual} H{heads} mlp={mlp} lr={lr}"),
            &run,
        );
    }
}

fn c5(steps: usize, layers: usize, n: usize, k: usize, residual: usize, seeds: &[u64]) {
    for &seed in seeds {
        let task = TaskConfig {
            n,
            d: 3,
            k,
            ic: true,
            seed,
            ..Default::default()
        };
        let run = run_config(task, layers, 1, residual, false, steps, 16);
        summarize(&format!("c5 L{layers} N{n} K{k} R{residual} seed {seed}"), &run);
    }
}

fn role_names(d: usize) -> Vec<(String, Role)> {
    let mut out = Vec::new();
    for s in 1..=d {
        out.push((format!("PF{s}"), Role::PairFirst(s)));
        out.push((format!("PS{s}"), Role::PairSecond(s)));
    }
    out.push(("Q".into(), Role::Query));
    out
}

struct C6Args {
    steps: usize,
    layers: usize,
    k: usize,
    n: usize,
    residual: usize,
    seed: u64,
    heads: usize,
    batch: usize,
    wd: f64,
    lr: f64,
}

fn c6(dir: &std::path::Path, a: &C6Args) {
    let task = TaskConfig {
        n: a.n,
        d: 2,
        k: a.k,
        ic: true,
        seed: a.seed,
        ..Default::default()
    };
    let mut run = run_config(task, a.layers, a.heads, a.residual, false, a.steps, a.batch);
    run.weight_decay = a.wd;
    run.lr = a.lr;
    run.checkpoint_every_epochs = Some(2);
    run.checkpoint_dir = Some(dir.to_path_buf());
    let t0 = Instant::now();
    let res = match train(&run) {
        Ok(r) => r,
        Err(e) => {
            println!("c6 train FAILED: {e}");
            return;
        }
    };
    let last = res.metrics.evals.last().unwrap();
    println!(
        "c6 train: {:.1}s, final val {:.4} partials {:?}, epochs {}",
        t0.elapsed().as_secs_f64(),
        last.val_loss,
        last.partials,
        res.epochs_completed
    );

    // mean attention for every candidate (src, dst) role pair, per head
    let model = res.model;
    let examples = gen_batch(&task, derive_seed(task.seed, DOM_TRACE, 0), 16);
    let mut dsts = role_names(task.d);
    dsts.push(("Prev".into(), Role::PrevToken));
    dsts.push(("Self".into(), Role::SelfPos));
    let srcs = role_names(task.d);
    for layer in 0..run.model.layers {
        for head in 0..run.model.heads_per_layer {
            println!("-- layer {layer} head {head}");
            for (sname, src) in &srcs {
                let mut row = String::new();
                for (dname, dst) in &dsts {
                    let path = CircuitPath {
                        layer,
                        head,
                        src: *src,
                        dst: *dst,
                    };
                    let mut sum = 0.0;
                    let mut ok = true;
                    for ex in &examples {
                        let out = model
                            .forward(
                                &ex.inputs,
                                task.n,
                                &ForwardOpts {
                                    capture: true,
                                    ..Default::default()
                                },
                            )
                            .unwrap();
                        match path_attention(&out.capture.unwrap(), &ex.roles, &path) {
                            Ok(a) => sum += a,
                            Err(_) => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        row.push_str(&format!("{dname}={:.3} ", sum / examples.len() as f64));
                    } else {
                        row.push_str(&format!("{dname}=----- "));
                    }
                }
                println!("   {sname:>4} -> {row}");
            }
        }
    }

    println!("c6 checkpoints in {}", dir.display());
}

fn circ(dir: &std::path::Path, circuit_path: &std::path::Path) {
    let ck = retlab::checkpoint::load_checkpoint(&dir.join("ckpt_final.rlcp")).unwrap();
    let (model, task) = (ck.model, ck.task);
    let circuit = CircuitSpec::from_json_file(circuit_path).unwrap();
    let val = gen_batch(&task, derive_seed(task.seed, DOM_VAL_DATA, 0), 64);
    match validate_circuit(&model, &task, &circuit, &val) {
        Ok(report) => {
            println!(
                "circ: unablated {:.4} combined {:.4} ({:.2}x)",
                report.unablated_mse,
                report.combined_mse,
                report.combined_mse / report.unablated_mse
            );
            for (id, mse) in &report.knockouts {
                println!(
                    "   knockout {id}: {:.4} ({:.1}x combined)",
                    mse,
                    mse / report.combined_mse
                );
            }
        }
        Err(e) => println!("circ FAILED: {e}"),
    }
    match emergence_trace(dir, &circuit, 16) {
        Ok(trace) => {
            for p in &trace.paths {
                println!(
                    "circ trace {}: end {:.3}, cross {:?}",
                    p.path_id,
                    p.values.last().unwrap(),
                    crossing_epoch(p, 0.5)
                );
            }
        }
        Err(e) => println!("circ emergence FAILED: {e}"),
    }
}

fn c8() {
    use rand::SeedableRng;
    use retlab::bench::{
        gen_prompt, grade, parse_fixture, run_cases, solve_case, BenchRun, Formulation,
        MockBehavior, MockClient,
    };
    use retlab::seeds::DOM_BENCH;
    for (fi, f) in Formulation::ALL.into_iter().enumerate() {
        let d = f.default_d();
        let mut bad = 0usize;
        for i in 0..500usize {
            let seed = derive_seed(derive_seed(0x8e, DOM_BENCH, fi as u64), DOM_BENCH, i as u64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let case = gen_prompt(f, d, 4, &mut rng).unwrap();
            case.check().unwrap();
            match solve_case(&case) {
                Ok(ans) if ans == case.correct => {}
                Ok(ans) => {
                    bad += 1;
                    if bad == 1 {
                        println!("{f} case {i}: solver {ans:?} != correct {:?}", case.correct);
                    }
                }
                Err(e) => {
                    bad += 1;
                    if bad == 1 {
                        println!("{f} case {i}: solver error {e}");
                    }
                }
            }
        }
        let run = BenchRun {
            formulation: f,
            n_cases: 500,
            n_chains: 4,
            d: None,
            max_attempts: 8,
        };
        let mut client = MockClient::new(
            MockBehavior::Uniform,
            derive_seed(0x8e, DOM_BENCH, 1000 + fi as u64),
        );
        let (report, _) =
            run_cases(&mut client, &run, derive_seed(0x8e, DOM_BENCH, fi as u64), None).unwrap();
        let p = report.baseline;
        let sigma = (p * (1.0 - p) / report.graded as f64).sqrt();
        println!(
            "{f}: bad_solves {bad}, uniform acc {:.4} baseline {:.4} |diff| {:.4} vs 3σ {:.4}",
            report.accuracy,
            p,
            (report.accuracy - p).abs(),
            3.0 * sigma
        );
    }
    let fixtures: [(Formulation, &str); 5] = [
        (
            Formulation::Equations,
            include_str!("../tests/fixtures/equations.txt"),
        ),
        (
            Formulation::LivesWith,
            include_str!("../tests/fixtures/lives_with.txt"),
        ),
        (
            Formulation::Kingdoms,
            include_str!("../tests/fixtures/kingdoms.txt"),
        ),
        (
            Formulation::Functions,
            include_str!("../tests/fixtures/functions.txt"),
        ),
        (
            Formulation::Relatives,
            include_str!("../tests/fixtures/relatives.txt"),
        ),
    ];
    for (f, text) in fixtures {
        let case = parse_fixture(f, text).unwrap();
        let g = grade(&case, &case.correct);
        let solved = solve_case(&case);
        println!(
            "{f} fixture: grade(correct)={g:?}, solve == stated: {:?}",
            solved.as_deref() == Ok(case.correct.as_str())
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let phase = args.get(1).map(String::as_str).unwrap_or("speed");
    match phase {
        "speed" => speed(),
        "c3" => c3(),
        "c45" => {
            let steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
            c45(steps);
        }
        "grid" => {
            let steps = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
            grid(steps);
        }
        "c5" => {
            let get = |i: usize, def: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(def);
            let steps = get(2, 12000);
            let layers = get(3, 4);
            let n = get(4, 2);
            let k = get(5, 8);
            let residual = get(6, 32);
            let seeds: Vec<u64> = if args.len() > 7 {
                args[7..].iter().filter_map(|s| s.parse().ok()).collect()
            } else {
                vec![41, 42, 43]
            };
            c5(steps, layers, n, k, residual, &seeds);
        }
        "c6" => {
            let name = args
                .get(10)
                .cloned()
                .unwrap_or_else(|| "retlab_c6".to_string());
            let dir = std::env::temp_dir().join(name);
            let _ = std::fs::remove_dir_all(&dir);
            std::fs::create_dir_all(&dir).unwrap();
            let get = |i: usize, def: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(def);
            let getf = |i: usize, def: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(def);
            let a = C6Args {
                steps: get(2, 4000),
                layers: get(3, 3),
                k: get(4, 8),
                n: get(5, 2),
                residual: get(6, 32),
                seed: get(7, 31) as u64,
                heads: get(8, 1),
                batch: get(9, 16),
                wd: getf(11, 1e-4),
                lr: getf(12, 1e-3),
            };
            c6(&dir, &a);
        }
        "circ" => {
            let dir = std::path::PathBuf::from(args.get(2).expect("ckpt dir"));
            let cj = std::path::PathBuf::from(args.get(3).expect("circuit json"));
            circ(&dir, &cj);
        }
        "c8" => c8(),
        other => eprintln!("unknown phase {other}"),
    }
}
