//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use nextfocus::baselines::Scored;
use nextfocus::datagen::{generate, GenConfig};
use nextfocus::dataset::{label_pairs, split_cross_project, split_temporal, LabeledPair};
use nextfocus::eval::{
    build_case, evaluate, mann_whitney_u, precision_at_k, spearman_rho, stats::PMethod, Alternative, EvalReport,
    RandomScorer, RankedList,
};
use nextfocus::graph::{diff, Edge, ModelGraph, NodeId};
use nextfocus::pipeline::{self, Approach, RunConfig};
use nextfocus::ranker::{gradcheck, loss, LossConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- 1

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PREC)
}

/// The per-sample loss evaluated in 256-bit arithmetic from the textbook
/// cross-entropy, focal, class and penalty factors.
fn loss_oracle(z: f64, y: bool, c: &LossConfig, cc: &mut Consts) -> BigFloat {
    let one = big(1.0);
    let sigma = one.div(&one.add(&big(-z).exp(PREC, RM, cc), PREC, RM), PREC, RM);
    let not_sigma = one.sub(&sigma, PREC, RM);
    let (p_true, bce) = if y {
        (sigma.clone(), sigma.ln(PREC, RM, cc).neg())
    } else {
        (not_sigma.clone(), not_sigma.ln(PREC, RM, cc).neg())
    };
    let focal = one.sub(&p_true.pow(&big(c.beta), PREC, RM, cc), PREC, RM);
    let class = big(if y { c.alpha } else { 1.0 - c.alpha });
    let penalty = if y {
        one.clone()
    } else {
        sigma.mul(&big(c.lambda_penalty), PREC, RM).add(&one, PREC, RM)
    };
    class.mul(&focal, PREC, RM).mul(&bce, PREC, RM).mul(&penalty, PREC, RM)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cc = Consts::new().map_err(|e| format!("{e:?}"))?;
    let tol = big(1e-9);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let z = rng.gen_range(-20.0..=20.0);
        let y = rng.gen_bool(0.5);
        let c = LossConfig {
            alpha: rng.gen_range(0.01..0.99),
            beta: rng.gen_range(0.0..5.0),
            lambda_penalty: rng.gen_range(0.0..10.0),
        };
        let got = loss(z, y, &c);
        let err = loss_oracle(z, y, &c, &mut cc).sub(&big(got), PREC, RM).abs();
        check(err.cmp(&tol).is_some_and(|o| o <= 0), || format!("draw {i}: z={z} y={y} {c:?} loss={got}"))?;
        let e = err.format(astro_float::Radix::Dec, RM, &mut cc).map_err(|e| format!("{e:?}"))?;
        worst = worst.max(e.parse::<f64>().unwrap_or(f64::INFINITY));
    }
    for z in [-500.0f64, 500.0] {
        for y in [false, true] {
            let v = loss(z, y, &LossConfig::default());
            check(v.is_finite(), || format!("loss({z},{y}) = {v}"))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("1000 draws, max |err| {worst:.2e}, finite at |z|=500, {:?}", start.elapsed()))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut params = 0;
    let configs = 24;
    for i in 0..configs {
        let c = LossConfig {
            alpha: rng.gen_range(0.05..0.95),
            beta: rng.gen_range(0.0..4.0),
            lambda_penalty: rng.gen_range(0.0..5.0),
        };
        let r = gradcheck(1, rng.gen(), &c, 1e-4);
        worst = worst.max(r.max_rel_error);
        params += r.parameters_checked;
        check(r.passed, || format!("configuration {i} ({c:?}): rel err {:.3e}", r.max_rel_error))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{configs} configurations, {params} parameters, max rel err {worst:.2e}"))
}

// ---------------------------------------------------------------- 3

fn random_graph(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> ModelGraph {
    let labels = ["A", "B", "C"];
    let nodes: Vec<(NodeId, String)> = (0..n)
        .map(|i| (NodeId::from(format!("{prefix}{i}").as_str()), labels.choose(rng).unwrap().to_string()))
        .collect();
    let mut edges = BTreeSet::new();
    for _ in 0..rng.gen_range(0..=2 * n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        edges.insert(Edge::new(nodes[a].0.clone(), nodes[b].0.clone(), *["e", "f"].choose(rng).unwrap()));
    }
    ModelGraph::new(nodes, edges).unwrap()
}

/// Deletes, relabels and adds nodes, then drops and adds edges.
fn mutate(rng: &mut ChaCha8Rng, m: &ModelGraph) -> ModelGraph {
    let mut nodes = Vec::new();
    for (id, l) in m.nodes() {
        if rng.gen_bool(0.15) {
            continue;
        }
        let l = if rng.gen_bool(0.15) { format!("{l}x") } else { l.to_owned() };
        nodes.push((id.clone(), l));
    }
    for i in 0..rng.gen_range(0..3) {
        nodes.push((NodeId::from(format!("new{i}").as_str()), "N".into()));
    }
    let ids: BTreeSet<NodeId> = nodes.iter().map(|(id, _)| id.clone()).collect();
    let mut edges: BTreeSet<Edge> = m
        .edges()
        .filter(|e| ids.contains(&e.src) && ids.contains(&e.dst) && !rng.gen_bool(0.1))
        .cloned()
        .collect();
    let all: Vec<&NodeId> = ids.iter().collect();
    for _ in 0..rng.gen_range(0..4) {
        edges.insert(Edge::new((*all.choose(rng).unwrap()).clone(), (*all.choose(rng).unwrap()).clone(), "e"));
    }
    ModelGraph::new(nodes, edges).unwrap()
}

/// Enumerates every (anchor, candidate, successor) triple.
fn labeling_oracle(m: &ModelGraph, n: &ModelGraph) -> BTreeSet<(NodeId, NodeId, bool)> {
    let ids: BTreeSet<&NodeId> = m.node_ids().chain(n.node_ids()).collect();
    let changed: Vec<&NodeId> = ids.iter().copied().filter(|v| m.label(v) != n.label(v)).collect();
    let preserved: Vec<&NodeId> = ids.iter().copied().filter(|v| m.label(v).is_some() && m.label(v) == n.label(v)).collect();
    let mut out = BTreeSet::new();
    for &v1 in &changed {
        for &v2 in &preserved {
            if v1 == v2 {
                continue;
            }
            let mut label = false;
            for &u in &changed {
                if n.edges().any(|e| &e.src == v2 && &e.dst == u) {
                    label = true;
                }
            }
            out.insert((v1.clone(), v2.clone(), label));
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut graphs, mut pairs) = (0, 0);
    while graphs < 200 {
        let size = rng.gen_range(1..=10);
        let m = random_graph(&mut rng, "v", size);
        let n = mutate(&mut rng, &m);
        if n.node_count() > 12 {
            continue;
        }
        graphs += 1;
        let d = diff(&m, &n);
        let expected = labeling_oracle(&m, &n);
        let anchors: BTreeSet<NodeId> = d.changed_nodes().into_iter().cloned().collect();
        if anchors.is_empty() {
            check(expected.is_empty(), || format!("graph {graphs}: oracle has pairs without changes"))?;
            continue;
        }
        let got: BTreeSet<(NodeId, NodeId, bool)> = label_pairs("p", 0, &d, &n, &anchors)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p: LabeledPair| (p.anchor, p.candidate, p.label))
            .collect();
        check(got == expected, || format!("graph {graphs}: {got:?} != {expected:?}"))?;
        pairs += got.len();
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 graphs, {pairs} pairs identical to triple enumeration"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checks = 0;
    for t in 0..500 {
        let n = rng.gen_range(1..=10);
        let ids: Vec<NodeId> = (0..n).map(|i| NodeId::from(format!("c{i}").as_str())).collect();
        let mut positives: BTreeSet<NodeId> = ids.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        if positives.is_empty() {
            positives.insert(ids.choose(&mut rng).unwrap().clone());
        }
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        let ranking: Vec<Scored> = order
            .iter()
            .enumerate()
            .map(|(i, id)| Scored { id: id.clone(), score: -(i as f64) })
            .collect();
        let list = RankedList::new("a".into(), ranking, positives.clone()).map_err(|e| e.to_string())?;
        for k in 1..=12 {
            let top: BTreeSet<&NodeId> = order.iter().take(k).collect();
            let hits = positives.iter().filter(|p| top.contains(p)).count();
            let denom = if k < positives.len() { k } else { positives.len() };
            let expected = hits as f64 / denom as f64;
            let got = precision_at_k(&list, k).map_err(|e| e.to_string())?;
            check(got == expected, || format!("ranking {t}, k={k}: {got} != {expected}"))?;
            checks += 1;
        }
    }
    Ok(format!("500 rankings, {checks} (ranking, k) values equal"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let cfg = GenConfig {
        base_nodes: 30,
        pattern_size_c: 10,
        target_dispersion_s: 2,
        ..GenConfig::default()
    };
    let corpus = generate(&cfg).map_err(|e| e.to_string())?;
    let mut cases = Vec::new();
    for p in &corpus.projects {
        let last = p.versions.len() - 2;
        cases.push(build_case(p, last).map_err(|e| e.to_string())?.ok_or("no anchor")?);
    }
    let trials = 1000;
    let mut total = 0.0;
    let mut prevalence = 0.0;
    for seed in 0..trials {
        let r = evaluate(&RandomScorer { seed }, &cases, 10, None).map_err(|e| e.to_string())?;
        total += r.summary.precision[9];
        prevalence = r.summary.prevalence;
    }
    let mean = total / trials as f64;
    check((0.08..=0.12).contains(&prevalence), || format!("corpus prevalence {prevalence:.4} is not near 0.1"))?;
    check((mean - prevalence).abs() <= 0.02, || format!("mean random P@10 {mean:.4} vs prevalence {prevalence:.4}"))?;
    Ok(format!("prevalence {prevalence:.4}, mean random P@10 over {trials} seeds {mean:.4}"))
}

// ---------------------------------------------------------------- 6, 9, 10

struct Run {
    dir: tempfile::TempDir,
    reports: BTreeMap<Approach, Vec<EvalReport>>,
    elapsed: Duration,
}

fn full_run() -> Result<Run, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::load(None, &[], Some(7), Some(dir.path())).map_err(|e| e.to_string())?;
    cfg.eval.plot_data = true;
    pipeline::cmd_gen(&cfg).map_err(|e| e.to_string())?;
    pipeline::cmd_prepare(&cfg).map_err(|e| e.to_string())?;
    pipeline::cmd_train(&cfg).map_err(|e| e.to_string())?;
    let mut reports = BTreeMap::new();
    for a in Approach::ALL {
        reports.insert(a, pipeline::cmd_eval(&cfg, a).map_err(|e| e.to_string())?);
    }
    Ok(Run { dir, reports, elapsed: start.elapsed() })
}

fn per_anchor(r: &EvalReport) -> Vec<f64> {
    r.anchors.iter().map(|a| a.mean_precision()).collect()
}

fn criterion_6(run: &Run) -> Outcome {
    let [nf, rnd, sem] = [Approach::NextFocus, Approach::Random, Approach::Semantic].map(|a| &run.reports[&a][0]);
    let (m_nf, m_rnd, m_sem) = (nf.summary.mean_precision, rnd.summary.mean_precision, sem.summary.mean_precision);
    check(nf.summary.anchors == 8, || format!("{} test anchors evaluated", nf.summary.anchors))?;
    check(m_nf >= 0.80, || format!("ranker mean P@k {m_nf:.4} < 0.80"))?;
    check(m_nf > m_sem, || format!("ranker {m_nf:.4} does not exceed semantic {m_sem:.4}"))?;
    check(m_nf - m_rnd >= 0.5, || format!("ranker {m_nf:.4} - random {m_rnd:.4} < 0.5"))?;
    let mw = mann_whitney_u(&per_anchor(nf), &per_anchor(rnd), Alternative::Greater).map_err(|e| e.to_string())?;
    check(mw.p_value < 0.01, || format!("Mann-Whitney p = {:.4}", mw.p_value))?;
    within(run.elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "nextfocus {m_nf:.3}, semantic {m_sem:.3}, random {m_rnd:.3}, U={} p={:.2e}, pipeline {:.1?}",
        mw.u, mw.p_value, run.elapsed
    ))
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn criterion_9(a: &Run, b: &Run) -> Outcome {
    let mut files = vec![Path::new("model/checkpoint.json").to_path_buf()];
    let reports = a.dir.path().join("reports");
    let mut names: Vec<_> = std::fs::read_dir(&reports)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    files.extend(names.iter().map(|n| Path::new("reports").join(n)));
    for f in &files {
        let (x, y) = (read(&a.dir.path().join(f))?, read(&b.dir.path().join(f))?);
        check(x == y, || format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("checkpoint and {} report files byte-identical", files.len() - 1))
}

fn criterion_10(run: &Run) -> Outcome {
    let sweep = &run.reports[&Approach::NextFocus][1..];
    let taus: Vec<Option<usize>> = sweep.iter().map(|r| r.tau).collect();
    check(taus == [Some(1), Some(2), Some(3), None], || format!("swept radii {taus:?}"))?;
    for r in sweep {
        let s = &r.summary;
        for k in 0..r.k_max {
            let ratio = s.precision[k] / s.prevalence.max(1e-12);
            check((s.ratio[k] - ratio).abs() <= 1e-12 * ratio.abs().max(1.0), || format!("tau {:?}: ratio", r.tau))?;
            check((s.margin[k] - (s.precision[k] - s.prevalence)).abs() <= 1e-15, || format!("tau {:?}: margin", r.tau))?;
            check((0.0..=1.0).contains(&s.precision[k]), || format!("tau {:?}: precision", r.tau))?;
        }
    }
    let plot = String::from_utf8(read(&run.dir.path().join("reports/nextfocus-plot-data.csv"))?).map_err(|e| e.to_string())?;
    check(plot.lines().count() == 1 + 4 * 10, || "plot data rows".into())?;

    let cfg = RunConfig::load(None, &[], Some(7), Some(run.dir.path())).map_err(|e| e.to_string())?;
    let cases = pipeline::test_cases(&cfg).map_err(|e| e.to_string())?;
    for c in &cases {
        let unrestricted: Vec<&NodeId> = c.candidates.iter().map(|x| &x.id).collect();
        let inf: Vec<&NodeId> = c.within(None).iter().map(|x| &x.id).collect();
        check(unrestricted == inf, || format!("{} diff {}: tau=inf changed the candidates", c.project, c.diff_index))?;
    }
    let unrestricted = &run.reports[&Approach::NextFocus][0];
    let inf = &sweep[3];
    check(unrestricted.anchors == inf.anchors, || "tau=inf report differs from the unrestricted report".into())?;
    let line = sweep
        .iter()
        .map(|r| {
            format!(
                "tau={} P={:.3} prev={:.3} ratio={:.1} margin={:.3}",
                r.tau.map_or("inf".into(), |t| t.to_string()),
                r.summary.mean_precision,
                r.summary.prevalence,
                r.summary.ratio[0],
                r.summary.margin[0]
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(line)
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let corpus = generate(&GenConfig::default()).map_err(|e| e.to_string())?;
    let sizes: Vec<(String, usize)> = corpus.projects.iter().map(|p| (p.project.clone(), p.versions.len() - 1)).collect();
    for (p, n) in &sizes {
        let s = split_temporal(p, *n).map_err(|e| e.to_string())?;
        let max_train = s.train.iter().map(|r| r.diff_index).max().ok_or("empty train")?;
        let (val, test) = (s.validation[0].diff_index, s.test[0].diff_index);
        check(max_train < val && val < test, || format!("{p}: train {max_train} val {val} test {test}"))?;
        let all: BTreeSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).map(|r| r.diff_index).collect();
        check(all.len() == *n, || format!("{p}: split does not cover {n} diffs"))?;
    }
    let mut layouts = 0;
    for folds in 2..=sizes.len() {
        for seed in 0..20 {
            let splits = split_cross_project(&sizes, folds, seed).map_err(|e| e.to_string())?;
            let mut tested = BTreeMap::new();
            for s in &splits {
                let train: BTreeSet<&str> = s.train.iter().chain(&s.validation).map(|r| r.project.as_str()).collect();
                let test: BTreeSet<&str> = s.test.iter().map(|r| r.project.as_str()).collect();
                check(train.is_disjoint(&test), || format!("folds={folds} seed={seed}: overlap"))?;
                check(train.len() + test.len() == sizes.len(), || format!("folds={folds} seed={seed}: coverage"))?;
                for t in test {
                    *tested.entry(t).or_insert(0) += 1;
                }
                layouts += 1;
            }
            check(tested.len() == sizes.len() && tested.values().all(|&c| c == 1), || {
                format!("folds={folds} seed={seed}: each project must be tested once")
            })?;
        }
    }
    Ok(format!("{} temporal splits ordered, {layouts} cross-project folds disjoint", sizes.len()))
}

// ---------------------------------------------------------------- 8

/// U of `a` by direct pair counting.
fn u_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// P(U ≥ observed) over every relabeling of the pooled sample.
fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let observed = u_pairs(a, b);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                xa.push(*v);
            } else {
                xb.push(*v);
            }
        }
        total += 1;
        if u_pairs(&xa, &xb) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Exact upper tail of U for tie-free samples, by counting arrangements:
/// f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u).
fn exact_tail(n: usize, m: usize, u_obs: usize) -> f64 {
    let max_u = n * m;
    let mut f = vec![vec![vec![0u128; max_u + 1]; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            if i == 0 || j == 0 {
                f[i][j][0] = 1;
                continue;
            }
            for u in 0..=i * j {
                let take = if u >= j { f[i - 1][j][u - j] } else { 0 };
                f[i][j][u] = take + f[i][j - 1][u];
            }
        }
    }
    let total: u128 = f[n][m].iter().sum();
    let tail: u128 = f[n][m][u_obs..].iter().sum();
    tail as f64 / total as f64
}

fn criterion_8() -> Outcome {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let fixtures = [([2.0, 4.0, 6.0, 8.0, 10.0], 1.0), ([5.0, 4.0, 3.0, 2.0, 1.0], -1.0), ([1.0, 3.0, 2.0, 5.0, 4.0], 0.8)];
    for (ys, want) in fixtures {
        let (rho, _) = spearman_rho(&xs, &ys).map_err(|e| e.to_string())?;
        check(rho == want, || format!("rho({ys:?}) = {rho}, expected {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_exact = 0.0f64;
    let mut pairs = 0;
    for na in 1..=8 {
        for nb in 1..=8 {
            for _ in 0..3 {
                let a: Vec<f64> = (0..na).map(|_| f64::from(rng.gen_range(0..6u8))).collect();
                let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.gen_range(0..6u8))).collect();
                let r = mann_whitney_u(&a, &b, Alternative::Greater).map_err(|e| e.to_string())?;
                check(r.method == PMethod::Exact, || format!("n=({na},{nb}) not exact"))?;
                check(r.u == u_pairs(&a, &b), || format!("U mismatch for {a:?} {b:?}"))?;
                let p = permutation_p(&a, &b);
                worst_exact = worst_exact.max((r.p_value - p).abs());
                check((r.p_value - p).abs() <= 1e-9, || format!("{a:?} vs {b:?}: {} != {p}", r.p_value))?;
                pairs += 1;
            }
        }
    }

    let mut pool: Vec<f64> = (0..40).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
    pool.shuffle(&mut rng);
    let a: Vec<f64> = pool[..20].iter().map(|v| v + 6.0).collect();
    let b = pool[20..].to_vec();
    let r = mann_whitney_u(&a, &b, Alternative::Greater).map_err(|e| e.to_string())?;
    check(r.method == PMethod::Normal, || "n=20 did not use the normal branch".into())?;
    let exact = exact_tail(20, 20, r.u as usize);
    check((r.p_value - exact).abs() <= 0.01, || format!("normal p {} vs exact {exact}", r.p_value))?;
    Ok(format!(
        "Spearman fixtures exact; {pairs} small pairs max |dp| {worst_exact:.1e}; n=20 normal {:.4} vs exact {exact:.4}",
        r.p_value
    ))
}

// ----------------------------------------------------------------

fn guarded<R>(f: impl FnOnce() -> Result<R, String>) -> Result<R, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn main() {
    let mut out = std::io::stdout();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, r: Outcome| {
        let line = match &r {
            Ok(detail) => format!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(why) => format!("criterion {n:>2} {name}: FAIL ({why})"),
        };
        if r.is_err() {
            failed += 1;
        }
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    };
    report(1, "loss-formula fidelity", guarded(criterion_1));
    report(2, "gradient correctness", guarded(criterion_2));
    report(3, "labeling oracle", guarded(criterion_3));
    report(4, "precision@k oracle", guarded(criterion_4));
    report(5, "random-baseline prevalence", guarded(criterion_5));
    let runs = guarded(|| {
        let a = full_run()?;
        let b = full_run()?;
        Ok((a, b))
    });
    match runs {
        Ok((a, b)) => {
            report(6, "end-to-end separation", guarded(|| criterion_6(&a)));
            report(7, "split integrity", guarded(criterion_7));
            report(8, "statistics sanity", guarded(criterion_8));
            report(9, "determinism", guarded(|| criterion_9(&a, &b)));
            report(10, "radius sweep", guarded(|| criterion_10(&a)));
        }
        Err(e) => {
            report(6, "end-to-end separation", Err(format!("pipeline failed: {e}")));
            report(7, "split integrity", guarded(criterion_7));
            report(8, "statistics sanity", guarded(criterion_8));
            report(9, "determinism", Err(format!("pipeline failed: {e}")));
            report(10, "radius sweep", Err(format!("pipeline failed: {e}")));
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
