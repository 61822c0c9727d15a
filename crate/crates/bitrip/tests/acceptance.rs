//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use bitrip::config::{DatasetKind, TrainConfig};
use bitrip::core::data::{balanced_batches, synth_blobs, Dataset, EmbeddingBatch};
use bitrip::core::distributions::{invwishart_logpdf, invwishart_mean, mvn_logpdf, GaussianParams, InvWishartParams};
use bitrip::core::loss::{nca_loss, triplet_loss, LossKind, LossOutput};
use bitrip::core::matrix::{cholesky, regularize_psd};
use bitrip::core::mlp::{forward, init_params};
use bitrip::core::sampler::{sample_triplets, AnchorGroup, TripletBatch};
use bitrip::core::step::anchor_loss;
use bitrip::core::tracker::{BatchSlice, ClassTracker, CovMode};
use bitrip::core::{Matrix, Rng, SymMatrix};
use bitrip::harness::{load_splits, metrics_csv, train_on, Splits};
use bitrip::idx::{load_idx, write_idx};

type Outcome = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed();
        let over = limit.is_some_and(|l| secs > l);
        let (ok, detail) = match out {
            Ok(d) if over => (false, format!("{d}; took {:.1}s, limit {}s", secs.as_secs_f64(), limit.unwrap().as_secs())),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail} [{:.2}s]", if ok { "PASS" } else { "FAIL" }, secs.as_secs_f64());
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn pooling_oracle() -> Outcome {
    let mut rng = Rng::seed_from_u64(101);
    let (mut worst_mean, mut worst_scatter): (f64, f64) = (0.0, 0.0);
    for s in 0..50 {
        let d = [2, 4, 8][s % 3];
        let n = [3, 5, 9][(s / 3) % 3];
        let batches = 3 + s % 8;
        let mut tracker = ClassTracker::new(1, d, CovMode::Standard);
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for _ in 0..batches {
            let shift = randn(&mut rng, d).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| randn(&mut rng, d).iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
            seen.extend(rows.iter().cloned());
            let st = tracker
                .observe(&BatchSlice::new(0, rows.iter().map(Vec::as_slice).collect()).unwrap())
                .map_err(|e| e.to_string())?;
            let m = seen.len() as f64;
            let mean: Vec<f64> = (0..d).map(|t| seen.iter().map(|r| r[t]).sum::<f64>() / m).collect();
            let mut scatter = vec![0.0; d * d];
            for r in &seen {
                for i in 0..d {
                    for j in 0..d {
                        scatter[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
                    }
                }
            }
            let dm = st.mean0.iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let num: f64 = st.scatter().as_slice().iter().zip(&scatter).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = scatter.iter().map(|v| v * v).sum();
            worst_mean = worst_mean.max(dm);
            worst_scatter = worst_scatter.max((num / den).sqrt());
        }
    }
    check(
        worst_mean <= 1e-10 && worst_scatter <= 1e-8,
        format!("max mean error {worst_mean:.2e} (tol 1e-10), max scatter rel. Frobenius {worst_scatter:.2e} (tol 1e-8)"),
    )
}

/// Wishart(I, nu) draw by the Bartlett decomposition; chi-square variates
/// as sums of squared standard normals (integer degrees of freedom).
fn bartlett_identity(d: usize, nu: usize, rng: &mut Rng) -> SymMatrix {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        let chi2: f64 = (0..nu - i).map(|_| rng.standard_normal().powi(2)).sum();
        a[i * d + i] = chi2.sqrt();
        for j in 0..i {
            a[i * d + j] = rng.standard_normal();
        }
    }
    let mut w = SymMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            w.set(i, j, (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum());
        }
    }
    w
}

fn invwishart_moment() -> Outcome {
    let (d, nu, draws) = (2, 12, 200_000);
    let mut rng = Rng::seed_from_u64(202);
    let mut acc = vec![0.0; d * d];
    for _ in 0..draws {
        let inv = cholesky(&bartlett_identity(d, nu, &mut rng)).map_err(|e| e.to_string())?.inverse();
        acc.iter_mut().zip(inv.as_slice()).for_each(|(a, v)| *a += v);
    }
    let target = invwishart_mean(&InvWishartParams { scale: SymMatrix::identity(d), dof: nu as f64 })
        .map_err(|e| e.to_string())?;
    let scale = target.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = acc
        .iter()
        .zip(target.as_slice())
        .map(|(a, t)| (a / draws as f64 - t).abs() / scale)
        .fold(0.0, f64::max);
    check(worst < 0.05, format!("max entry error {:.2}% of the diagonal 1/9 (tol 5%)", 100.0 * worst))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn density_normalisation() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (mu, var) in [(0.0, 1.0), (2.5, 0.3), (-1.0, 4.0)] {
        let p = GaussianParams::new(vec![mu], SymMatrix::from_diag(&[var])).unwrap();
        let sd: f64 = var.sqrt();
        let z = simpson(|x| mvn_logpdf(&[x], &p).unwrap().exp(), mu - 12.0 * sd, mu + 12.0 * sd, 4000);
        worst = worst.max((z - 1.0).abs());
        parts.push(format!("N({mu},{var}) {z:.6}"));
    }
    for (psi, nu) in [(1.0, 3.0), (2.0, 5.0), (0.5, 8.0)] {
        let p = InvWishartParams { scale: SymMatrix::from_diag(&[psi]), dof: nu };
        // x = e^t
        let z = simpson(
            |t: f64| (invwishart_logpdf(&SymMatrix::from_diag(&[t.exp()]), &p).unwrap() + t).exp(),
            -30.0,
            30.0,
            6000,
        );
        worst = worst.max((z - 1.0).abs());
        parts.push(format!("IW({psi},{nu}) {z:.6}"));
    }
    check(worst < 1e-2, format!("{} (tol 1e-2)", parts.join(", ")))
}

fn random_batch(rng: &mut Rng, b: usize, c: usize, d: usize) -> TripletBatch {
    TripletBatch {
        groups: (0..b)
            .map(|i| AnchorGroup {
                anchor: randn(rng, d),
                anchor_label: i % c,
                positives: (0..c - 1).map(|_| randn(rng, d)).collect(),
                negatives: (0..c - 1).map(|_| randn(rng, d)).collect(),
                negative_labels: (0..c).filter(|&j| j != i % c).collect(),
            })
            .collect(),
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn min_bracket(tb: &TripletBatch, margin: f64) -> f64 {
    let mut m = f64::INFINITY;
    for g in &tb.groups {
        for p in &g.positives {
            for n in &g.negatives {
                m = m.min((margin + sq(&g.anchor, p) - sq(&g.anchor, n)).abs());
            }
        }
    }
    m
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-3)
}

/// Every vector of the batch as a mutable coordinate list, with the
/// matching analytic gradient entries.
fn coordinates(tb: &TripletBatch, out: &LossOutput) -> Vec<(usize, usize, usize, f64)> {
    let mut v = Vec::new();
    for (gi, (g, gg)) in tb.groups.iter().zip(&out.grads).enumerate() {
        let grads: Vec<&Vec<f64>> =
            std::iter::once(&gg.anchor).chain(gg.positives.iter()).chain(gg.negatives.iter()).collect();
        for (s, gv) in grads.iter().enumerate() {
            for t in 0..g.anchor.len() {
                v.push((gi, s, t, gv[t]));
            }
        }
    }
    v
}

fn bump(tb: &TripletBatch, gi: usize, s: usize, t: usize, delta: f64) -> TripletBatch {
    let mut b = tb.clone();
    let g = &mut b.groups[gi];
    let k = g.positives.len();
    let v = if s == 0 {
        &mut g.anchor
    } else if s <= k {
        &mut g.positives[s - 1]
    } else {
        &mut g.negatives[s - 1 - k]
    };
    v[t] += delta;
    b
}

fn gradient_suite() -> Outcome {
    let mut rng = Rng::seed_from_u64(303);
    let h = 1e-5;
    let margin = 0.5;
    let (mut worst_t, mut worst_n): (f64, f64) = (0.0, 0.0);
    let mut instances = 0;
    let mut redrawn = 0;
    while instances < 100 {
        let b = 1 + instances % 4;
        let c = 2 + instances % 3;
        let d = 1 + instances % 6;
        let tb = random_batch(&mut rng, b, c, d);
        if min_bracket(&tb, margin) < 1e-3 {
            redrawn += 1;
            continue;
        }
        let tl = triplet_loss(&tb, margin);
        for (gi, s, t, a) in coordinates(&tb, &tl) {
            let fd = (triplet_loss(&bump(&tb, gi, s, t, h), margin).value
                - triplet_loss(&bump(&tb, gi, s, t, -h), margin).value)
                / (2.0 * h);
            worst_t = worst_t.max(rel_err(a, fd));
        }
        let nl = nca_loss(&tb);
        for (gi, s, t, a) in coordinates(&tb, &nl) {
            let fd = (nca_loss(&bump(&tb, gi, s, t, h)).value - nca_loss(&bump(&tb, gi, s, t, -h)).value) / (2.0 * h);
            worst_n = worst_n.max(rel_err(a, fd));
        }
        instances += 1;
    }

    // full network: 2-layer net, q=6, d=4, b=4
    let mut worst_net: f64 = 0.0;
    let mut nets = 0;
    while nets < 6 {
        let (q, hdim, d, b, c) = (6, 8, 4, 4, 2);
        let model = init_params(&[q, hdim, d], &mut rng).unwrap();
        let x = Matrix::from_vec(b, q, randn(&mut rng, b * q)).unwrap();
        let (_, trace) = forward(&model, &x).unwrap();
        if trace.pre_activations()[0].as_slice().iter().any(|z| z.abs() < 1e-4) {
            continue;
        }
        let comp = random_batch(&mut rng, b, c, d);
        let kind = if nets % 2 == 0 { LossKind::Triplet } else { LossKind::Nca };
        let (_, g) = anchor_loss(&model, &x, &comp, kind, 2.0, false).unwrap();
        let g = g.flatten();
        let base = model.params();
        let step = 1e-6;
        for k in 0..base.len() {
            let at = |delta: f64| {
                let mut m = model.clone();
                let mut p = base.clone();
                p[k] += delta;
                m.set_params(&p).unwrap();
                anchor_loss(&m, &x, &comp, kind, 2.0, false).unwrap().0
            };
            worst_net = worst_net.max(rel_err(g[k], (at(step) - at(-step)) / (2.0 * step)));
        }
        nets += 1;
    }
    check(
        worst_t < 1e-5 && worst_n < 1e-5 && worst_net < 1e-4,
        format!(
            "100 instances ({redrawn} redrawn near a hinge): triplet {worst_t:.1e}, NCA {worst_n:.1e} (tol 1e-5); \
             network {worst_net:.1e} (tol 1e-4)"
        ),
    )
}

fn blobs_run(loss: LossKind, normalize: bool, lr: f64, threshold: f64) -> Outcome {
    let mut cfg = TrainConfig::blobs();
    cfg.loss = loss;
    cfg.normalize_embeddings = normalize;
    cfg.lr = lr;
    cfg.max_epochs = 20;
    let data = load_splits(&cfg).map_err(|e| e.to_string())?;
    let res = train_on(&cfg, &data).map_err(|e| e.to_string())?;
    let r1 = res.summary.best_val.r1.unwrap();
    check(
        r1 >= threshold,
        format!(
            "val R@1 {r1:.4} (need >= {threshold}) after {} epochs, best epoch {}, baseline {:.4}",
            res.summary.epochs_run,
            res.summary.best_epoch,
            res.summary.baseline_val.r1.unwrap()
        ),
    )
}

fn mnist_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist"))
}

fn mnist_desk_scale() -> Outcome {
    let cfg = TrainConfig {
        dataset: DatasetKind::Mnist,
        data_dir: mnist_dir(),
        embed_dim: 16,
        hidden: vec![256],
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let data: Splits = load_splits(&cfg).map_err(|e| e.to_string())?;
    let full = data.train.len() + data.val.len();
    if full != 2000 || data.test.len() != 1000 {
        return Err(format!("expected 2000 train / 1000 test digits, found {full} / {}", data.test.len()));
    }
    let res = train_on(&cfg, &data).map_err(|e| e.to_string())?;
    let (base, got) = (res.summary.baseline_test.r1.unwrap(), res.summary.test.r1.unwrap());
    let gain = got - base;
    check(
        gain >= 0.20,
        format!(
            "test R@1 {got:.4} vs untrained {base:.4}: +{:.1} pp (need >= 20), {} epochs",
            100.0 * gain,
            res.summary.epochs_run
        ),
    )
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(a: &SymMatrix) -> f64 {
    let d = a.dim();
    let mut m = a.as_slice().to_vec();
    let mut det = 1.0;
    for c in 0..d {
        let p = (c..d).max_by(|&i, &j| m[i * d + c].abs().total_cmp(&m[j * d + c].abs())).unwrap();
        if p != c {
            for t in 0..d {
                m.swap(c * d + t, p * d + t);
            }
            det = -det;
        }
        let piv = m[c * d + c];
        det *= piv;
        for r in c + 1..d {
            let f = m[r * d + c] / piv;
            for t in c..d {
                m[r * d + t] -= f * m[c * d + t];
            }
        }
    }
    det
}

fn invariant_suites() -> Outcome {
    let mut rng = Rng::seed_from_u64(404);
    let mut notes = Vec::new();

    // matrix core
    let (mut rec, mut ld, mut res): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..200 {
        let d = 1 + trial % 8;
        let b = randn(&mut rng, d * d);
        let mut a = SymMatrix::identity(d).scaled(0.5);
        for i in 0..d {
            for j in 0..=i {
                a.set(i, j, a.get(i, j) + (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>());
            }
        }
        let f = cholesky(&a).map_err(|e| e.to_string())?;
        rec = rec.max(f.reconstruct().rel_frobenius_error(&a).unwrap());
        ld = ld.max((f.logdet() - det(&a).ln()).abs());
        let x = randn(&mut rng, d);
        let y = f.solve(&x).unwrap();
        let ay = a.mul_vec(&y).unwrap();
        res = res.max(ay.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        let rank1 = {
            let v = randn(&mut rng, d);
            let mut s = SymMatrix::zeros(d);
            s.add_outer(1.0, &v).unwrap();
            s
        };
        cholesky(&regularize_psd(&rank1, 1e-6)).map_err(|e| format!("jittered rank-1 failed: {e}"))?;
    }
    if rec > 1e-10 || ld > 1e-8 || res > 1e-8 {
        return Err(format!("cholesky round-trip {rec:.1e}, logdet {ld:.1e}, solve residual {res:.1e}"));
    }
    notes.push(format!("matrix ok (round-trip {rec:.0e})"));

    // sampler counts
    for (c, per, d) in [(2, 3, 2), (3, 2, 4), (5, 1, 3), (10, 5, 16)] {
        let labels: Vec<usize> = (0..c).flat_map(|j| std::iter::repeat(j).take(per)).collect();
        let v = Matrix::from_vec(c * per, d, randn(&mut rng, c * per * d)).unwrap();
        let eb = EmbeddingBatch::new(v, labels, per, c).unwrap();
        let mut tr = ClassTracker::new(c, d, CovMode::Standard);
        for j in 0..c {
            tr.observe(&BatchSlice::new(j, eb.class_rows(j)).unwrap()).unwrap();
        }
        let tb = sample_triplets(&eb, tr.states(), Some(1e-6), &mut rng).map_err(|e| e.to_string())?;
        let ok = tb.groups.len() == c * per
            && tb.triplet_count() == c * per * (c - 1)
            && tb.groups.iter().all(|g| {
                g.positives.len() == c - 1
                    && g.negatives.len() == c - 1
                    && !g.negative_labels.contains(&g.anchor_label)
            });
        if !ok {
            return Err(format!("sampler counts wrong for c={c}, n'={per}"));
        }
    }
    notes.push("sampler ok".into());

    // batcher balance
    for seed in 0..20u64 {
        let counts: Vec<usize> = (0..4).map(|j| 6 + ((seed as usize + j) * 7) % 11).collect();
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat(j).take(n)).collect();
        let ds = Dataset::new(Matrix::zeros(labels.len(), 1), labels.clone()).unwrap();
        let per = 1 + seed as usize % 5;
        let batches = balanced_batches(&ds, per, &mut Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let mut used = vec![false; labels.len()];
        for b in &batches {
            for j in 0..4 {
                if b.iter().filter(|&&i| labels[i] == j).count() != per {
                    return Err(format!("unbalanced batch (seed {seed})"));
                }
            }
            for &i in b {
                if std::mem::replace(&mut used[i], true) {
                    return Err(format!("index {i} repeated within an epoch"));
                }
            }
        }
        if batches.len() != counts.iter().min().unwrap() / per {
            return Err("batch count is not the per-class floor".into());
        }
    }
    notes.push("batcher ok".into());

    // IDX round trip
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in 0..5 {
        let ds = synth_blobs(3, 4, 6, 0.7, &mut Rng::seed_from_u64(seed)).unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, &i, &l).map_err(|e| e.to_string())?;
        let back = load_idx(&i, &l).map_err(|e| e.to_string())?;
        if back.inputs != ds.inputs || back.labels != ds.labels {
            return Err("IDX round trip changed the data".into());
        }
    }
    notes.push("IDX ok".into());

    // determinism
    let mut cfg = TrainConfig::blobs();
    cfg.max_epochs = 5;
    let data = load_splits(&cfg).map_err(|e| e.to_string())?;
    let a = metrics_csv(&train_on(&cfg, &data).map_err(|e| e.to_string())?.metrics);
    let b = metrics_csv(&train_on(&cfg, &load_splits(&cfg).unwrap()).map_err(|e| e.to_string())?.metrics);
    if a != b {
        return Err("same seed produced different metrics".into());
    }
    notes.push(format!("determinism ok ({} CSV lines)", a.lines().count()));
    Ok(notes.join(", "))
}

fn main() {
    let mut r = Report { failed: 0 };
    let secs = Duration::from_secs;
    r.run("conjugate pooling oracle", Some(secs(5)), pooling_oracle);
    r.run("inverse-Wishart Monte Carlo mean", Some(secs(30)), invwishart_moment);
    r.run("1-D density normalisation", None, density_normalisation);
    r.run("loss and network gradient suite", Some(secs(60)), gradient_suite);
    r.run("blobs BUT (standard covariance)", Some(secs(120)), || blobs_run(LossKind::Triplet, false, 1e-4, 0.95));
    r.run("blobs BUNCA (normalised embeddings)", Some(secs(120)), || blobs_run(LossKind::Nca, true, 1e-2, 0.90));
    r.run("MNIST desk-scale BUT vs untrained", Some(secs(600)), mnist_desk_scale);
    r.run("invariant suites", None, invariant_suites);
    println!("{} criteria failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
