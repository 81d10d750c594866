//! Acceptance criteria, one pass/fail line each.
//!
//! Dataset criteria read the TU files from `$GRAPHPROMPT_DATA_DIR`, or from
//! `data/` at the workspace root, either flat or one directory per dataset.
//! A missing dataset is reported as a failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use graphprompt::encoder::{self, EncoderParams};
use graphprompt::experiment::{
    dataset_dir, link_pred_expression, random_expression, random_graph, run, run_collection, ExperimentConfig,
    RunReport, SelfCheck,
};
use graphprompt::graphdata::{
    contextual_subgraph, parse_tu_dataset, synthetic_collection, write_tu_dataset, Graph, GraphCollection, InstanceId,
    Subgraph, SyntheticConfig, TaskLevel,
};
use graphprompt::pretrain::{generalized_contrastive_loss, link_pred_loss, pretrain, ContrastiveBatch, PretrainConfig, PretrainKind};
use graphprompt::prompt::{classify, prompt_loss, InstanceContext, PromptMode, PromptState, PrototypeSet};
use graphprompt::rng::{self, Rng};
use graphprompt::tensorgrad::{finite_diff_check, finite_diff_report, Tape, Tensor, Var};
use rand::Rng as _;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_tensor(r: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn data_root() -> PathBuf {
    std::env::var_os("GRAPHPROMPT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn dataset(name: &str) -> std::result::Result<GraphCollection, String> {
    let root = data_root();
    parse_tu_dataset(dataset_dir(&root, name), name)
        .map_err(|e| format!("{name} unavailable under {}: {e}", root.display()))
}

// 1 ------------------------------------------------------------------------

/// Analytic gradient of one scalar and a fourth-order central estimate of it.
fn stencil_estimate(tape: &Tape, root: Var, leaf: Var, j: usize) -> std::result::Result<(f64, f64), String> {
    let analytic = tape.gradients(root).map_err(e2s)?.get(leaf).map_or(0.0, |g| g.data()[j]);
    let mut work = tape.clone();
    let base = tape.value(leaf).clone();
    let mut f = |d: f64| -> std::result::Result<f64, String> {
        let mut t = base.clone();
        t.data_mut()[j] += d;
        work.set_leaf(leaf, t).map_err(e2s)?;
        work.recompute().map_err(e2s)?;
        work.value(root).to_scalar().map_err(e2s)
    };
    let h = 1e-3;
    let est = (-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h);
    Ok((analytic, est))
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let report = SelfCheck::gradient_suite(1e-5, 1e-4).run();
    ensure(report.ok(), || format!("suite failures: {:?}", report.failures))?;
    let mut worst = 0.0f64;
    for seed in 0..64 {
        let mut r = rng::from_seed(1000 + seed);
        let mut tape = Tape::new();
        let depth = r.gen_range(1..=4);
        let (rows, cols) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let e = random_expression(&mut tape, &mut r, depth, rows, cols).map_err(e2s)?;
        let w = tape.constant(Tensor::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(0.5..1.5)).collect()).unwrap());
        let m = tape.mul(e, w).map_err(e2s)?;
        let root = tape.sum(m).map_err(e2s)?;
        let err = finite_diff_check(&tape, root, 1e-5).map_err(e2s)?;
        ensure(err < 1e-4, || format!("random expression seed {seed}: {err:e}"))?;
        worst = worst.max(err);
    }
    let mut over = Vec::new();
    for seed in 0..20 {
        let mut tape = Tape::new();
        let root = link_pred_expression(&mut tape, &mut rng::from_seed(2000 + seed), 6, 2, 8).map_err(e2s)?;
        let rep = finite_diff_report(&tape, root, 1e-5).map_err(e2s)?;
        if rep.max_rel_error >= 1e-4 {
            let (analytic, stencil) = stencil_estimate(&tape, root, rep.worst_leaf.unwrap(), rep.worst_index)?;
            over.push(format!(
                "graph {seed}: {:.2e} at a gradient entry of {analytic:.2e} (5-point stencil, step 1e-3: {stencil:.2e})",
                rep.max_rel_error
            ));
        }
        worst = worst.max(rep.max_rel_error);
    }
    let elapsed = start.elapsed();
    ensure(over.is_empty(), || {
        format!("encoder loss over tolerance on {}/20 graphs: {}; {elapsed:.1?}", over.len(), over.join("; "))
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} suite checks, 64 random expressions, 20 encoder losses; worst {worst:.2e}; {elapsed:.1?}",
        report.passed.len()
    ))
}

// 2 ------------------------------------------------------------------------

fn prompt_identities() -> Check {
    let c = synthetic_collection("ID", &SyntheticConfig { num_graphs: 6, ..Default::default() }, 3).map_err(e2s)?;
    let mut r = rng::from_seed(21);
    let p = EncoderParams::init(c.feature_dim(), 8, 3, &mut r).map_err(e2s)?;

    // single prompt of ones vs plain sum readout
    let instances: Vec<InstanceId> = (0..c.len())
        .flat_map(|g| [InstanceId::Node { graph: g, node: 0 }, InstanceId::Node { graph: g, node: 3 }, InstanceId::Graph(g)])
        .collect();
    let ctx = InstanceContext::new(&c, &instances, &p, PromptMode::Single, 1).map_err(e2s)?;
    let reps = ctx.evaluate(&p, &PromptState::init(PromptMode::Single, &p)).map_err(e2s)?;
    let mut single = 0.0f64;
    for (i, inst) in instances.iter().enumerate() {
        let g = c.graph(inst.graph()).map_err(e2s)?;
        let s = match *inst {
            InstanceId::Node { node, .. } => contextual_subgraph(g, node, 1).map_err(e2s)?,
            InstanceId::Graph(_) => Subgraph::whole(g),
        };
        let plain = encoder::readout(&encoder::encode(g, &p).map_err(e2s)?, &s).map_err(e2s)?;
        for (a, b) in reps.row(i).iter().zip(&plain) {
            single = single.max((a - b).abs());
        }
    }
    ensure(single < 1e-12, || format!("single prompt differs by {single:e}"))?;

    for g in c.graphs() {
        let layers = p.num_layers() + 1;
        let ones: Vec<Vec<f64>> = (0..layers).map(|l| vec![1.0; p.layer_width(l)]).collect();
        let random: Vec<Vec<f64>> = (0..layers)
            .map(|l| (0..p.layer_width(l)).map(|_| r.gen_range(0.0..2.0)).collect())
            .collect();
        for prompts in [&ones, &random] {
            for l in 0..layers {
                let mut w = vec![0.0; layers];
                w[l] = 1.0;
                let fused = encoder::fused_prompt_embeddings(g, &p, prompts, &w).map_err(e2s)?;
                let single = encoder::encode_with_layer_prompt(g, &p, &prompts[l], l).map_err(e2s)?;
                ensure(fused.values.bitwise_eq(&single.values), || format!("one-hot weight on layer {l} not bitwise equal"))?;
            }
        }
        let plain = encoder::encode(g, &p).map_err(e2s)?;
        for w in [vec![0.25; 4], vec![0.7, 0.1, 0.1, 0.1], vec![1.5, -0.5, 0.3, -0.3]] {
            let fused = encoder::fused_prompt_embeddings(g, &p, &ones, &w).map_err(e2s)?;
            let d = fused.values.max_abs_diff(&plain.values);
            ensure(d < 1e-10, || format!("weights {w:?} differ by {d:e}"))?;
        }
    }
    Ok(format!("single-prompt max |Δ| {single:.1e}; one-hot fusion bitwise; Σw = 1 fusion within 1e-10"))
}

// 3 ------------------------------------------------------------------------

fn closed_form_losses() -> Check {
    let mut r = rng::from_seed(31);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let v = random_tensor(&mut r, 1, 5);
        let a = random_tensor(&mut r, 1, 5);
        let tau = r.gen_range(0.1..2.0);
        let l = link_pred_loss(&v, &a, &a, tau).map_err(e2s)?;
        worst[0] = worst[0].max((l - std::f64::consts::LN_2).abs());

        let emb = random_tensor(&mut r, 6, 4);
        let batches = [
            ContrastiveBatch { target: 0, positives: vec![1, 2, 3], negatives: vec![1, 2, 3] },
            ContrastiveBatch { target: 5, positives: vec![4], negatives: vec![4] },
        ];
        worst[1] = worst[1].max(generalized_contrastive_loss(&emb, &batches, tau).map_err(e2s)?.abs());

        let classes = r.gen_range(2..6);
        let n = r.gen_range(1..10);
        let proto = random_tensor(&mut r, 1, 4);
        let protos = PrototypeSet {
            values: Tensor::from_rows(&vec![proto.row(0).to_vec(); classes]).unwrap(),
        };
        let reps = random_tensor(&mut r, n, 4);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let l = prompt_loss(&reps, &labels, &protos, tau).map_err(e2s)?;
        worst[2] = worst[2].max((l - n as f64 * (classes as f64).ln()).abs());
    }
    ensure(worst[0] < 1e-12 && worst[1] < 1e-12 && worst[2] < 1e-9, || format!("errors {worst:?}"))?;
    Ok(format!("triplet ln 2 err {:.1e}; Pos = Neg err {:.1e}; uniform prompt loss err {:.1e}", worst[0], worst[1], worst[2]))
}

// 4 ------------------------------------------------------------------------

/// Exhaustive nearest prototype by normalized dot product, first on ties.
fn nearest_oracle(rep: &[f64], protos: &[Vec<f64>]) -> usize {
    let unit = |x: &[f64]| {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter().map(|v| v / n).collect::<Vec<f64>>()
    };
    let u = unit(rep);
    let scores: Vec<f64> = protos.iter().map(|p| unit(p).iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == best).unwrap()
}

fn classify_oracle() -> Check {
    let mut r = rng::from_seed(41);
    let mut ties = 0;
    for case in 0..100 {
        let dim = r.gen_range(1..8);
        let classes = r.gen_range(2..7);
        let mut rows: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        if case % 10 == 0 {
            // duplicated prototype: the lower index must win
            let (i, j) = (r.gen_range(0..classes), r.gen_range(0..classes));
            rows[j] = rows[i].clone();
            ties += 1;
        }
        let rep: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let protos = PrototypeSet { values: Tensor::from_rows(&rows).unwrap() };
        let got = classify(&rep, &protos);
        let want = nearest_oracle(&rep, &rows);
        ensure(got == want, || {
            let cos: Vec<f64> = rows.iter().map(|p| graphprompt::prompt::cosine(&rep, p)).collect();
            format!("case {case}: classify {got}, oracle {want}; rep {rep:?} protos {rows:?} cos {cos:?}")
        })?;
    }
    Ok(format!("100/100 labels agree ({ties} with duplicated prototypes)"))
}

// 5 ------------------------------------------------------------------------

fn permuted(g: &Graph, perm: &[usize]) -> Graph {
    let n = g.num_nodes();
    let mut x = Tensor::zeros(n, g.feature_dim());
    for v in 0..n {
        x.row_mut(perm[v]).copy_from_slice(g.features().row(v));
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    Graph::new(x, edges, None, None).unwrap()
}

fn permutation_invariance() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut r = rng::from_seed(500 + seed);
        let n = r.gen_range(5..15);
        let g = random_graph(&mut r, n, 4, 0.25);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let h = permuted(&g, &perm);
        let p = EncoderParams::init(4, 16, 3, &mut r).map_err(e2s)?;
        let (eg, eh) = (encoder::encode(&g, &p).map_err(e2s)?, encoder::encode(&h, &p).map_err(e2s)?);
        for delta in 0..=2 {
            for v in 0..n {
                let a = encoder::readout(&eg, &contextual_subgraph(&g, v, delta).map_err(e2s)?).map_err(e2s)?;
                let b = encoder::readout(&eh, &contextual_subgraph(&h, perm[v], delta).map_err(e2s)?).map_err(e2s)?;
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        let a = encoder::readout(&eg, &Subgraph::whole(&g)).map_err(e2s)?;
        let b = encoder::readout(&eh, &Subgraph::whole(&h)).map_err(e2s)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst < 1e-10, || format!("max change {worst:e}"))?;
    Ok(format!("20 graphs, δ ∈ {{0,1,2}} and whole-graph readouts; max change {worst:.1e}"))
}

// 6 ------------------------------------------------------------------------

fn parser_fidelity() -> Check {
    let proteins = dataset("PROTEINS")?;
    let enzymes = dataset("ENZYMES")?;
    let got = (
        proteins.len(),
        proteins.graph_class_count(),
        proteins.node_class_count(),
        enzymes.len(),
        enzymes.graph_class_count(),
        enzymes.feature_dim(),
    );
    ensure(got == (1113, Some(2), Some(3), 600, Some(6), 18), || format!("got {got:?}"))?;
    Ok("PROTEINS 1113/2/3, ENZYMES 600/6/18".into())
}

// 7-10 ---------------------------------------------------------------------

fn training_sanity(kind: PretrainKind) -> Check {
    let c = dataset("ENZYMES")?;
    let cfg = PretrainConfig { kind, tau: 0.5, epochs: 100, seed: 0, ..PretrainConfig::default() };
    let start = Instant::now();
    let out = pretrain(&c, &cfg).map_err(e2s)?;
    let elapsed = start.elapsed();
    let (first, last) = (out.initial_loss(), out.final_loss());
    ensure(out.curve.iter().all(|(_, l)| l.is_finite()), || "non-finite loss".into())?;
    ensure(last < first, || format!("loss {first} -> {last}"))?;
    ensure(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!("{kind}: loss {first:.4} -> {last:.4} in {elapsed:.1?}"))
}

fn few_shot(dataset_name: &str, kind: PretrainKind, level: TaskLevel, k: usize, modes: &[PromptMode]) -> std::result::Result<(RunReport, Duration), String> {
    let c = dataset(dataset_name)?;
    let out = tempfile::tempdir().map_err(e2s)?;
    let cfg = ExperimentConfig {
        dataset: dataset_name.into(),
        out_dir: out.path().to_path_buf(),
        pretrain_kinds: vec![kind],
        seeds: vec![0],
        modes: modes.to_vec(),
        levels: vec![level],
        shots: vec![k],
        num_tasks: 10,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let report = run_collection(&c, &cfg).map_err(e2s)?;
    Ok((report, start.elapsed()))
}

fn floors(kind: PretrainKind, slack: f64) -> Check {
    let cases = [
        ("ENZYMES", TaskLevel::Node, 1, 0.50),
        ("PROTEINS", TaskLevel::Node, 1, 0.50),
        ("ENZYMES", TaskLevel::Graph, 5, 0.25),
    ];
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (name, level, k, floor) in cases {
        let (report, elapsed) = few_shot(name, kind, level, k, &[PromptMode::Single])?;
        let s = report.setting(kind, level, k, PromptMode::Single).ok_or("setting missing")?;
        let floor = floor - slack;
        let line = format!("{name} {level} {k}-shot {:.3} ± {:.3} (floor {floor:.2}, {elapsed:.0?})", s.mean, s.std);
        if s.mean < floor || elapsed > Duration::from_secs(900) {
            failures.push(line.clone());
        }
        parts.push(line);
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{kind}: {}", parts.join("; ")))
}

fn layerwise_direction() -> Check {
    let (report, _) = few_shot("ENZYMES", PretrainKind::LinkPred, TaskLevel::Graph, 5, &[PromptMode::Single, PromptMode::Layerwise])?;
    let get = |m| report.setting(PretrainKind::LinkPred, TaskLevel::Graph, 5, m).map(|s| s.mean).ok_or("setting missing");
    let (single, layerwise) = (get(PromptMode::Single)?, get(PromptMode::Layerwise)?);
    ensure(layerwise >= single - 0.02, || format!("layerwise {layerwise:.3} vs single {single:.3}"))?;
    Ok(format!("layerwise {layerwise:.3} vs single {single:.3}"))
}

fn compatibility() -> Check {
    let mut parts = Vec::new();
    for kind in [PretrainKind::Dgi, PretrainKind::GraphCl] {
        parts.push(training_sanity(kind)?);
        parts.push(floors(kind, 0.05)?);
    }
    Ok(parts.join("; "))
}

// 11 -----------------------------------------------------------------------

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let c = synthetic_collection("SYN", &SyntheticConfig::default(), 8).map_err(e2s)?;
    write_tu_dataset(&c, dir.path().join("data"), "SYN").map_err(e2s)?;
    let mut trees = Vec::new();
    for attempt in 0..2 {
        let cfg = ExperimentConfig {
            dataset: "SYN".into(),
            data_dir: dir.path().join("data"),
            out_dir: dir.path().join(format!("out{attempt}")),
            pretrain_kinds: vec![PretrainKind::LinkPred, PretrainKind::GraphCl],
            seeds: vec![7],
            modes: vec![PromptMode::Single, PromptMode::Layerwise],
            levels: vec![TaskLevel::Node, TaskLevel::Graph],
            shots: vec![1, 3],
            num_tasks: 4,
            query_per_class: 4,
            ..ExperimentConfig::default()
        };
        let mut cfg = cfg;
        cfg.pretrain.epochs = 10;
        cfg.tune.max_steps = 20;
        run(&cfg).map_err(e2s)?;
        trees.push(read_tree(&cfg.out_dir));
    }
    let checkpoints = trees[0].iter().filter(|(p, _)| p.ends_with("encoder.gpck")).count();
    ensure(checkpoints == 2, || format!("{checkpoints} checkpoints written"))?;
    ensure(trees[0] == trees[1], || "outputs differ between runs".into())?;
    Ok(format!("{} files byte-identical across two runs", trees[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("gradient correctness", gradient_correctness),
        ("prompt identities", prompt_identities),
        ("closed-form losses", closed_form_losses),
        ("classify oracle equivalence", classify_oracle),
        ("permutation invariance", permutation_invariance),
        ("parser fidelity", parser_fidelity),
        ("training sanity (link_pred on ENZYMES)", || training_sanity(PretrainKind::LinkPred)),
        ("few-shot floors (link_pred)", || floors(PretrainKind::LinkPred, 0.0)),
        ("layer-wise directionality", layerwise_direction),
        ("pre-training compatibility (dgi, graphcl)", compatibility),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS  criterion {id:>2}  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {id:>2}  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
