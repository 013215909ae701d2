//! Acceptance checks, one line per criterion. Run with
//! `cargo test --release -p evsite-core --test acceptance`; pass criterion
//! numbers after `--` to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use evsite_core::config::{MethodChoice, RunConfig};
use evsite_core::eval::{auc, confusion, metrics, theta_grid, ConfusionMatrix, MetricCurves, MetricSet};
use evsite_core::features::{ColumnKind, ColumnMeta, FeatureMatrix};
use evsite_core::geo::{intersection_area, make_buffer, polygon_area, BufferSpec, PointXY, Polygon};
use evsite_core::ingest::label_top;
use evsite_core::models::sampling::stratified_split;
use evsite_core::models::tree::{Columns, RegressionTree, TreeParams, GAIN_EPS};
use evsite_core::models::{fit_forest, fit_gbrt, ols_r2, LrProblem, Method, TreeHparams};
use evsite_core::pipeline::{
    bootstrap, evaluate, load_dataset, read_reference_scores, run_bootstrap, run_evaluate, run_extract, run_rank,
    run_train, model_file_name, FEATURES_FILE,
};
use evsite_core::synth::{generate, ScenarioSpec, SCENARIO_CONFIG};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within_budget(out: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    match out {
        Outcome::Pass(d) if elapsed > budget => {
            Outcome::Fail(format!("{d}; took {elapsed:.1?}, budget {budget:.0?}"))
        }
        o => o,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

fn null_model() -> Outcome {
    let n = 100_000;
    let mut r = rng(1);
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
    let s: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let mut worst: (f64, f64) = (0.0, 0.0);
    for t in theta_grid() {
        let m = metrics(&confusion(&y, &s, t).unwrap());
        let acc = 0.25 + 0.5 * t;
        let f = (1.0 - t) / (2.5 - 2.0 * t);
        let d = (m.accuracy - acc).abs().max((m.f_score - f).abs());
        if d > worst.0 {
            worst = (d, t);
        }
    }
    check(worst.0 <= 0.01, format!("largest deviation {:.4} at θ = {:.2}", worst.0, worst.1))
}

// ---------------------------------------------------------------- 2

fn oracle_metrics(y: &[u8], s: &[f64], t: f64) -> (ConfusionMatrix, MetricSet) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&yi, &si) in y.iter().zip(s) {
        match (yi == 1, si >= t) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let (a, b, c, d) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let precision = div(a, a + b);
    let sensitivity = div(a, a + d);
    let m = MetricSet {
        accuracy: div(a + c, a + b + c + d),
        precision,
        sensitivity,
        fall_out: div(b, b + c),
        f_score: div(2.0 * sensitivity * precision, sensitivity + precision),
        mcc: div(a * c - b * d, ((a + b) * (a + d) * (c + b) * (c + d)).sqrt()),
    };
    (ConfusionMatrix { tp, fp, tn, fn_ }, m)
}

fn metric_oracle() -> Outcome {
    let mut r = rng(2);
    let mut zero_den = 0;
    for k in 0..1000 {
        let n = r.random_range(1..=200);
        // a share of instances has a single class so some MCC denominators vanish
        let p1 = match k % 5 {
            0 => 0.0,
            1 => 1.0,
            _ => r.random::<f64>(),
        };
        let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < p1)).collect();
        let s: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..101u32)) / 100.0).collect();
        let t = f64::from(r.random_range(0..100u32)) / 100.0;
        let (c0, m0) = oracle_metrics(&y, &s, t);
        let c = confusion(&y, &s, t).unwrap();
        let m = metrics(&c);
        if c != c0 || m != m0 {
            return Outcome::Fail(format!("instance {k}: {m:?} vs oracle {m0:?}"));
        }
        let den = (c.tp + c.fp) * (c.tp + c.fn_) * (c.tn + c.fp) * (c.tn + c.fn_);
        if den == 0 {
            zero_den += 1;
            if m.mcc != 0.0 {
                return Outcome::Fail(format!("instance {k}: zero denominator but MCC {}", m.mcc));
            }
        }
    }
    Outcome::Pass(format!("1000 instances identical, {zero_den} with a zero MCC denominator"))
}

// ---------------------------------------------------------------- 3

fn concordance(y: &[u8], s: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn auc_identity() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(2..=300);
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.3)).collect();
        y[0] = 0;
        y[1] = 1;
        let levels = r.random_range(2..50u32);
        let s: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..levels)) / f64::from(levels)).collect();
        worst = worst.max((auc(&y, &s).unwrap() - concordance(&y, &s)).abs());
    }
    check(worst <= 1e-12, format!("largest difference {worst:.2e} over 200 tied instances"))
}

// ---------------------------------------------------------------- 4

fn logistic_data(n: usize, p: usize, scale: f64, r: &mut ChaCha8Rng) -> (Array2<f64>, Vec<u8>) {
    let x = Array2::from_shape_fn((n, p), |(_, j)| (j as f64 + 1.0) * (r.random::<f64>() * 2.0 - 1.0) + j as f64);
    let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { scale / (j as f64 + 1.0) } else { 0.0 }).collect();
    let mut y: Vec<u8> = (0..n)
        .map(|i| {
            let eta: f64 = -0.7 + (0..p).map(|j| beta[j] * (x[[i, j]] - j as f64)).sum::<f64>();
            u8::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

/// Unpenalized maximum likelihood by Newton's method with an intercept.
fn newton_logistic(x: &Array2<f64>, y: &[u8]) -> Vec<f64> {
    let (n, p) = x.dim();
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
    let mut b = DVector::zeros(p + 1);
    for _ in 0..100 {
        let eta = &design * &b;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let grad = design.transpose() * (&yv - &mu);
        let mut h = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let row = design.row(i);
            h += row.transpose() * row * w[i];
        }
        let step = h.cholesky().expect("positive definite Hessian").solve(&grad);
        b += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    b.iter().copied().collect()
}

fn lr_correctness() -> Outcome {
    let mut r = rng(4);
    // (a) null model above λ_max
    let mut worst_a = 0.0f64;
    for _ in 0..20 {
        let (x, y) = logistic_data(150, 8, 1.0, &mut r);
        let prob = LrProblem::new(x.view(), &y).unwrap();
        let lmax = prob.lambda_max();
        for lam in [lmax, lmax * 1.5, lmax * 10.0] {
            let m = prob.fit(lam).unwrap();
            let ybar = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
            let (b0, beta) = m.coefficients();
            let dev = beta.iter().fold((b0 - (ybar / (1.0 - ybar)).ln()).abs(), |a, b| a.max(b.abs()));
            worst_a = worst_a.max(dev);
        }
    }
    // (b) KKT on n = 200, p = 50
    let mut worst_b = 0.0f64;
    let mut not_converged = 0;
    for _ in 0..50 {
        let (x, y) = logistic_data(200, 50, 2.0, &mut r);
        let prob = LrProblem::new(x.view(), &y).unwrap();
        let lam = prob.lambda_max() * 10f64.powf(-2.0 * r.random::<f64>());
        let m = prob.fit(lam).unwrap();
        if !m.converged {
            not_converged += 1;
        }
        worst_b = worst_b.max(prob.kkt_residual(&m));
    }
    // (c) λ = 0 against Newton
    let mut worst_c = 0.0f64;
    for _ in 0..20 {
        let p = r.random_range(1..=5);
        let (x, y) = logistic_data(200, p, 1.0, &mut r);
        let m = LrProblem::new(x.view(), &y).unwrap().fit(0.0).unwrap();
        let (b0, beta) = m.coefficients();
        let oracle = newton_logistic(&x, &y);
        let dev = beta.iter().zip(&oracle[1..]).fold((b0 - oracle[0]).abs(), |a, (u, v)| a.max((u - v).abs()));
        worst_c = worst_c.max(dev);
    }
    check(
        worst_a <= 1e-8 && worst_b <= 1e-6 && not_converged == 0 && worst_c <= 1e-5,
        format!(
            "(a) {worst_a:.1e} (b) KKT {worst_b:.1e}, {not_converged} unconverged (c) vs Newton {worst_c:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 5

enum Node {
    Leaf(f64),
    Split(usize, f64, Box<Node>, Box<Node>),
}

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

/// Greedy CART by exhaustive enumeration of every (feature, threshold) pair.
fn cart(x: &[Vec<f64>], y: &[f64], rows: &[usize], min_leaf: usize) -> Node {
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    let parent = sse(y, rows);
    let mut best: Option<(f64, usize, f64)> = None;
    if rows.len() >= 2 * min_leaf && parent > 0.0 {
        for (f, col) in x.iter().enumerate() {
            let mut vals: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let t = if mid < w[1] { mid } else { w[0] };
                let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= t);
                if l.len() < min_leaf || rr.len() < min_leaf {
                    continue;
                }
                let gain = parent - sse(y, &l) - sse(y, &rr);
                let beats = best.map_or(gain > GAIN_EPS * parent, |b| gain > b.0 + GAIN_EPS * parent);
                if beats {
                    best = Some((gain, f, t));
                }
            }
        }
    }
    match best {
        None => Node::Leaf(mean),
        Some((_, f, t)) => {
            let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[f][i] <= t);
            Node::Split(f, t, Box::new(cart(x, y, &l, min_leaf)), Box::new(cart(x, y, &rr, min_leaf)))
        }
    }
}

fn cart_predict(node: &Node, q: &[f64]) -> f64 {
    match node {
        Node::Leaf(v) => *v,
        Node::Split(f, t, l, r) => cart_predict(if q[*f] <= *t { l } else { r }, q),
    }
}

fn cart_splits(node: &Node) -> usize {
    match node {
        Node::Leaf(_) => 0,
        Node::Split(_, _, l, r) => 1 + cart_splits(l) + cart_splits(r),
    }
}

fn tree_correctness() -> Outcome {
    let mut r = rng(5);
    let mut checked = 0;
    for k in 0..600 {
        let n = r.random_range(2..=30);
        let p = r.random_range(1..=4);
        let min_leaf = r.random_range(1..=3);
        // half of the instances use a few discrete levels so ties occur
        let levels = if k % 2 == 0 { 4 } else { 1_000_000 };
        let cols: Vec<Vec<f64>> =
            (0..p).map(|_| (0..n).map(|_| f64::from(r.random_range(0..levels))).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random::<f64>() < 0.4))).collect();
        let x = Array2::from_shape_fn((n, p), |(i, j)| cols[j][i]);
        let rows: Vec<usize> = (0..n).collect();
        let params = TreeParams { min_leaf, max_splits: usize::MAX };
        let tree = RegressionTree::fit::<ChaCha8Rng>(&Columns::new(x.view()).unwrap(), &y, &rows, &params, None).unwrap();
        let oracle = cart(&cols, &y, &rows, min_leaf);
        if tree.n_splits() != cart_splits(&oracle) {
            return Outcome::Fail(format!("instance {k}: {} splits vs oracle {}", tree.n_splits(), cart_splits(&oracle)));
        }
        for i in 0..n + 50 {
            let q: Vec<f64> = if i < n {
                x.row(i).to_vec()
            } else {
                (0..p).map(|_| r.random::<f64>() * f64::from(levels.min(10))).collect()
            };
            if (tree.predict_row(&q) - cart_predict(&oracle, &q)).abs() > 1e-12 {
                return Outcome::Fail(format!("instance {k}: prediction differs at {q:?}"));
            }
        }
        checked += 1;
    }
    // GBRT training MSE
    for k in 0..50 {
        let n = r.random_range(20..120);
        let p = r.random_range(1..6);
        let (x, y) = logistic_data(n, p, 2.0, &mut r);
        let hp = TreeHparams {
            n_cycles: 60,
            learn_rate: r.random_range(0.05..1.0),
            min_leaf: r.random_range(1..6),
            max_splits: r.random_range(1..10),
        };
        let g = fit_gbrt(x.view(), &y, &hp, 0.0).unwrap();
        if g.train_mse.windows(2).any(|w| w[1] > w[0]) {
            return Outcome::Fail(format!("GBRT problem {k}: training MSE increased"));
        }
    }
    // forest weights
    let mut worst = 0.0f64;
    for k in 0..10 {
        let (x, y) = logistic_data(80, 3, 2.0, &mut r);
        let hp = TreeHparams { n_cycles: 25, learn_rate: 1.0, min_leaf: 2, max_splits: 30 };
        let f = fit_forest(x.view(), &y, &hp, k).unwrap();
        for _ in 0..1000 {
            let q: Vec<f64> = (0..3).map(|j| (j as f64 + 2.0) * (r.random::<f64>() * 2.0 - 1.0) + j as f64).collect();
            worst = worst.max((f.training_weights(x.view(), &q).iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("{checked} trees match CART, 50 GBRT traces monotone, 10⁴ forest weight sums off by ≤ {worst:.1e}"),
    )
}

// ---------------------------------------------------------------- 6

fn star_ring(c: (f64, f64), radii: &[f64], phase: f64) -> Vec<PointXY> {
    let n = radii.len();
    radii
        .iter()
        .enumerate()
        .map(|(k, rad)| {
            let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
            PointXY::new(c.0 + rad * a.cos(), c.1 + rad * a.sin())
        })
        .collect()
}

/// Winding number of `p` around a closed ring.
fn winding(ring: &[PointXY], p: (f64, f64)) -> i32 {
    let mut w = 0;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        let cross = (b.x - a.x) * (p.1 - a.y) - (p.0 - a.x) * (b.y - a.y);
        if a.y <= p.1 {
            if b.y > p.1 && cross > 0.0 {
                w += 1;
            }
        } else if b.y <= p.1 && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

struct Shape {
    outer: Vec<PointXY>,
    hole: Option<Vec<PointXY>>,
}

impl Shape {
    fn random(r: &mut ChaCha8Rng, c: (f64, f64)) -> Self {
        let k = r.random_range(3..16);
        let radii: Vec<f64> = (0..k).map(|_| r.random_range(30.0..100.0)).collect();
        let outer = star_ring(c, &radii, r.random::<f64>() * 6.0);
        let hole = r.random_bool(0.3).then(|| star_ring(c, &[12.0, 20.0, 15.0, 18.0, 10.0], r.random::<f64>()));
        Self { outer, hole }
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        winding(&self.outer, p) != 0 && self.hole.as_ref().is_none_or(|h| winding(h, p) == 0)
    }

    fn polygon(&self) -> Polygon {
        Polygon::new(self.outer.clone(), self.hole.iter().cloned().collect()).unwrap()
    }
}

fn geometry_oracle() -> Outcome {
    let mut r = rng(6);
    let mut worst = (0.0f64, 0);
    let samples = 1_000_000;
    for k in 0..100 {
        let a = Shape::random(&mut r, (0.0, 0.0));
        let c = (r.random_range(-60.0..60.0), r.random_range(-60.0..60.0));
        let b = Shape::random(&mut r, c);
        let exact = intersection_area(&a.polygon(), &b.polygon());
        // sample the overlap of the two bounding boxes
        let (ba, bb) = (a.polygon().bbox().clone(), b.polygon().bbox().clone());
        let (x0, x1) = (ba.min.x.max(bb.min.x), ba.max.x.min(bb.max.x));
        let (y0, y1) = (ba.min.y.max(bb.min.y), ba.max.y.min(bb.max.y));
        if x1 <= x0 || y1 <= y0 {
            if exact != 0.0 {
                return Outcome::Fail(format!("pair {k}: disjoint boxes but area {exact}"));
            }
            continue;
        }
        let mut hits = 0usize;
        for _ in 0..samples {
            let p = (r.random_range(x0..x1), r.random_range(y0..y1));
            if a.contains(p) && b.contains(p) {
                hits += 1;
            }
        }
        let mc = hits as f64 / samples as f64 * (x1 - x0) * (y1 - y0);
        let rel = (exact - mc).abs() / mc.max(1e-9);
        if mc > 0.0 && rel > worst.0 {
            worst = (rel, k);
        }
        if mc == 0.0 && exact > 1e-6 * (x1 - x0) * (y1 - y0) {
            return Outcome::Fail(format!("pair {k}: no Monte Carlo hits but area {exact}"));
        }
    }
    let mut worst_buf = 0.0f64;
    for _ in 0..200 {
        let spec = BufferSpec::new(r.random_range(1.0..5000.0), r.random_range(16..256)).unwrap();
        let b = make_buffer(PointXY::new(r.random_range(-1e5..1e5), r.random_range(-1e5..1e5)), &spec);
        worst_buf = worst_buf.max((polygon_area(&b) / spec.nominal_area() - 1.0).abs());
    }
    check(
        worst.0 <= 0.01 && worst_buf <= 1e-3,
        format!("overlap vs Monte Carlo ≤ {:.3}% (pair {}), buffer area ≤ {:.1e} relative", 100.0 * worst.0, worst.1, worst_buf),
    )
}

// ---------------------------------------------------------------- 7

/// Index of the maximum if it is attained exactly once and not at either end.
fn unique_interior_max(v: &[f64]) -> Option<usize> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at: Vec<usize> = (0..v.len()).filter(|&i| v[i] == m).collect();
    (at.len() == 1 && at[0] > 0 && at[0] + 1 < v.len()).then(|| at[0])
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (scen, out) = (tmp.path().join("scenario"), tmp.path().join("extract"));
    let truth = generate(&ScenarioSpec::default(), &scen).unwrap();
    let mut cfg = RunConfig::load(&scen.join(SCENARIO_CONFIG)).unwrap();
    cfg.method = MethodChoice::LrL1;
    cfg.n_splits = 100;
    cfg.bootstrap_samples = 500;
    run_extract(&cfg, &out, false).unwrap();
    let (x, y) = load_dataset(&out).unwrap();
    let oracle = read_reference_scores(&scen.join("oracle.csv"), "signal", x.row_ids()).unwrap();
    let report = evaluate(&cfg, &x, &y, Some(&oracle)).unwrap();
    let ens = &report.ensembles[0];
    let oracle_aucs = ens.oracle_aucs.as_ref().unwrap();
    let oracle_mean = oracle_aucs.iter().sum::<f64>() / oracle_aucs.len() as f64;
    let boot = bootstrap(&cfg, &x, &y).unwrap();
    let elapsed = start.elapsed();

    let by_name: BTreeMap<&str, _> = boot.predictors.iter().map(|p| (p.predictor.as_str(), p)).collect();
    let recovered = truth
        .planted
        .iter()
        .filter(|t| {
            by_name
                .get(t.predictor.as_str())
                .is_some_and(|p| p.selection_frequency >= 0.9 && p.median.signum() == t.coefficient.signum())
        })
        .count();
    let curves: &MetricCurves = &ens.mean;
    let mcc_max = unique_interior_max(&curves.mcc);
    let f_max = unique_interior_max(&curves.f_score);
    let threads = rayon::current_num_threads();
    // splits and resamples are independent, so wall time scales with cores
    let projected = elapsed.as_secs_f64() * threads.min(4) as f64 / 4.0;

    let acc_ok = ens.mean_auc >= 0.85 && (ens.mean_auc - oracle_mean).abs() <= 0.02;
    let ok = acc_ok && recovered >= 8 && mcc_max.is_some() && f_max.is_some() && projected < 900.0;
    check(
        ok,
        format!(
            "{} pools, {} predictors; mean AUC {:.4} vs oracle {:.4}; {}/{} planted stable with correct sign; \
             MCC max at {:?}, F max at {:?}; {:.0} s on {} thread(s), ≈{:.0} s projected on 4 cores",
            x.n_rows(),
            x.n_cols(),
            ens.mean_auc,
            oracle_mean,
            recovered,
            truth.planted.len(),
            mcc_max.map(|k| ens.thetas[k]),
            f_max.map(|k| ens.thetas[k]),
            elapsed.as_secs_f64(),
            threads,
            projected,
        ),
    )
}

// ---------------------------------------------------------------- 8

fn protocol_fidelity() -> Outcome {
    let cfg = RunConfig::default();
    let lambdas = cfg.lambdas.values();
    let expected: Vec<f64> = (0..=200).map(|i| 10f64.powf(-4.0 + 0.015 * f64::from(i))).collect();
    if lambdas != expected {
        return Outcome::Fail("λ grid differs".into());
    }
    let thetas = cfg.thetas.values();
    let expected: Vec<f64> = (0..100).map(|k| f64::from(k) / 100.0).collect();
    if thetas != expected || theta_grid() != expected {
        return Outcome::Fail("θ grid differs".into());
    }
    if cfg.test_fraction != 0.2 || cfg.n_splits != 100 {
        return Outcome::Fail(format!("split protocol {} × {}", cfg.n_splits, cfg.test_fraction));
    }
    let mut r = rng(8);
    for n in [200usize, 1200, 1271, 333] {
        let ids: Vec<String> = (0..n).map(|i| format!("P{i:05}")).collect();
        let pop: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let y = label_top(&pop, &ids, 0.25).unwrap().y;
        for s in 0..25 {
            let (tr, te) = stratified_split(&y, cfg.test_fraction, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            let pos = te.iter().filter(|&&i| y[i] == 1).count() as f64;
            let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
            all.sort_unstable();
            let share_ok = (te.len() as f64 - 0.2 * n as f64).abs() <= 1.0;
            if all != (0..n).collect::<Vec<_>>() || !share_ok || (pos - 0.25 * te.len() as f64).abs() > 1.0 {
                return Outcome::Fail(format!("n = {n}: test set of {} with {pos} positives", te.len()));
            }
        }
    }
    // the experiment driver records the same proportions
    let mut small = RunConfig::default();
    small.n_splits = 5;
    small.k_folds = 3;
    small.lambdas.count = 11;
    small.lambdas.step = 0.3;
    let (x, y) = logistic_data(120, 3, 2.0, &mut r);
    let ids: Vec<String> = (0..120).map(|i| format!("P{i}")).collect();
    let score: Vec<f64> = y.iter().zip(x.column(0)).map(|(&l, &v)| f64::from(l) * 10.0 + v).collect();
    let y = label_top(&score, &ids, 0.25).unwrap().y;
    let meta = (0..3)
        .map(|j| ColumnMeta { name: format!("x{j}"), source: "test".into(), kind: ColumnKind::Unspecified })
        .collect();
    let fm = FeatureMatrix::new(ids, meta, x).unwrap();
    let report = evaluate(&small, &fm, &y, None).unwrap();
    for s in &report.ensembles[0].splits {
        if s.n_test != 24 || s.test_positives != 6 {
            return Outcome::Fail(format!("split {}: {} test rows, {} positive", s.split, s.n_test, s.test_positives));
        }
    }
    Outcome::Pass("201 λ values, 100 θ values and 80/20 stratified splits as configured".into())
}

// ---------------------------------------------------------------- 9

pub const PUBLISHED_DATA_ENV: &str = "EVSITE_PUBLISHED_DATA";

/// Expects `predictors.csv` (pool_id plus predictor columns) and
/// `response.csv` (pool_id, popularity) in the directory named by the
/// environment variable.
fn published_data() -> Outcome {
    let Some(dir) = std::env::var_os(PUBLISHED_DATA_ENV).map(PathBuf::from) else {
        return Outcome::Skip(format!("set {PUBLISHED_DATA_ENV} to a directory with predictors.csv and response.csv"));
    };
    let x = match FeatureMatrix::read_csv(&dir.join("predictors.csv")) {
        Ok(x) => x,
        Err(e) => return Outcome::Fail(format!("predictors.csv: {e}")),
    };
    let pop = match read_reference_scores(&dir.join("response.csv"), "popularity", x.row_ids()) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(format!("response.csv: {e}")),
    };
    let y = label_top(&pop, x.row_ids(), 0.25).unwrap().y;
    let cfg = RunConfig::default();
    let report = evaluate(&cfg, &x, &y, None).unwrap();
    let sel = &report.ensembles[0].selection;
    let r2 = ols_r2(x.values(), &pop).unwrap();
    let ok = (0.30..=0.40).contains(&sel.theta_mcc_max)
        && (sel.at_mcc_max.accuracy - 0.829).abs() <= 0.03
        && (sel.at_mcc_max.mcc - 0.571).abs() <= 0.05
        && (r2 - 0.60).abs() <= 0.05;
    check(
        ok,
        format!(
            "θ_MCCmax {:.2}, accuracy {:.3}, MCC {:.3}, OLS R² {:.3}",
            sel.theta_mcc_max, sel.at_mcc_max.accuracy, sel.at_mcc_max.mcc, r2
        ),
    )
}

// ---------------------------------------------------------------- 10

fn snapshot(dir: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            snapshot(&p, into, root);
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json" | "geojson")) {
            into.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
}

fn full_run(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    if root.exists() {
        fs::remove_dir_all(root).unwrap();
    }
    let scen = root.join("scenario");
    generate(&ScenarioSpec::small(10), &scen).unwrap();
    let mut cfg = RunConfig::load(&scen.join(SCENARIO_CONFIG)).unwrap();
    cfg.method = MethodChoice::All;
    cfg.n_splits = 4;
    cfg.k_folds = 3;
    cfg.bootstrap_samples = 10;
    let ex = root.join("extract");
    run_extract(&cfg, &ex, true).unwrap();
    run_train(&cfg, &ex, &root.join("train")).unwrap();
    run_evaluate(&cfg, &ex, &root.join("eval"), Some(&scen.join("oracle.csv"))).unwrap();
    run_bootstrap(&cfg, &ex, &root.join("bootstrap")).unwrap();
    let model = root.join("train").join(model_file_name(Method::LrL1));
    run_rank(&cfg, &model, &ex.join(FEATURES_FILE), &root.join("rank")).unwrap();
    let mut files = BTreeMap::new();
    snapshot(root, &mut files, root);
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");
    let first = full_run(&root);
    let second = full_run(&root);
    if first.keys().ne(second.keys()) {
        return Outcome::Fail("the two runs wrote different file sets".into());
    }
    let differing: Vec<String> =
        first.iter().filter(|(k, v)| second[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} CSV/JSON files byte-identical across reruns", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(u32, &str, Check, u64); 10] = [
        (1, "null-model consistency", null_model, 5),
        (2, "metric oracle", metric_oracle, 5),
        (3, "AUC identity", auc_identity, 10),
        (4, "LR-ℓ1 correctness", lr_correctness, 60),
        (5, "tree correctness", tree_correctness, 60),
        (6, "geometry oracle", geometry_oracle, 120),
        (7, "planted recovery", planted_recovery, u64::MAX),
        (8, "protocol fidelity", protocol_fidelity, 5),
        (9, "published data", published_data, u64::MAX),
        (10, "determinism", determinism, u64::MAX),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        let elapsed = t.elapsed();
        let out = within_budget(out, elapsed, Duration::from_secs(budget));
        let (tag, detail) = match out {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {id:>2} {tag} {name}: {detail} [{:.1?}]", elapsed);
    }
    if failed > 0 {
        eprintln!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
