//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dumcal::cli::{cmd_train, evaluate_log, read_log, read_report};
use dumcal::diffcore::{finite_diff_grad, max_relative_error, Tape, Tensor};
use dumcal::dum::{evidence_head, spectral_normalize, HeadKind, HeadNodes, SpectralNorm};
use dumcal::harness::{ensemble, grid_search, make_dataset, multi_seed, DatasetSpec, TrainingConfig};
use dumcal::losses::{cross_entropy, enn_loss, mmce_loss, total_loss, BatchAnnotations, LossConfig, LossWeights};
use dumcal::metrics::{
    adaptive_ece, balanced_accuracy, brier_score, ece, mce, overconfidence_error, CalibrationReport, PredictionRecord,
};
use dumcal::model::{ModelSpec, Network, SpectralSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * normal(rng)).collect()).unwrap()
}

// ---------------------------------------------------------------- gradients

struct GradRow {
    name: &'static str,
    head: HeadKind,
    sn_coeff: Option<f64>,
    weights: LossWeights,
}

fn grad_rows() -> Vec<GradRow> {
    let w = |enn, avuc, mmce, entropy, dissimilarity, uncertainty| LossWeights {
        enn,
        avuc,
        mmce,
        entropy,
        dissimilarity,
        uncertainty,
    };
    let row = |name, head, sn_coeff, weights| GradRow {
        name,
        head,
        sn_coeff,
        weights,
    };
    use HeadKind::*;
    vec![
        row("baseline", Softmax, None, w(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        row("baseline+avuc", Softmax, None, w(0.0, 0.6, 0.0, 0.0, 0.0, 0.0)),
        row("baseline+mmce", Softmax, None, w(0.0, 0.0, 25.0, 0.0, 0.0, 0.0)),
        row("enn", Evidential, None, w(40.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        row("enn+avuc", Evidential, None, w(40.0, 0.6, 0.0, 0.0, 0.0, 0.0)),
        row("enn+mmce", Evidential, None, w(40.0, 0.0, 40.0, 0.0, 0.0, 0.0)),
        row("ddu", Softmax, Some(0.8), w(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        row("ddu+avuc", Softmax, Some(0.9), w(0.0, 0.6, 0.0, 0.0, 0.0, 0.0)),
        row("ddu+mmce", Softmax, Some(0.9), w(0.0, 0.0, 50.0, 0.0, 0.0, 0.0)),
        row("ldu", Prototype, None, w(0.0, 0.0, 0.0, 0.9, 2.0, 4.0)),
        row("ldu+avuc", Prototype, None, w(0.0, 0.4, 0.0, 0.2, 1.2, 5.0)),
        row("ldu+mmce", Prototype, None, w(0.0, 0.0, 50.0, 0.8, 1.5, 5.0)),
    ]
}

const FD_EPS: f64 = 1e-4;
const KINK_MARGIN: f64 = 2e-3;
const TIE_MARGIN: f64 = 1e-3;

struct Instance {
    net: Network,
    x: Tensor,
    labels: Vec<usize>,
}

fn loss_value(net: &Network, x: &Tensor, labels: &[usize], cfg: &LossConfig) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let fwd = net.forward(&mut tape, xv).unwrap();
    let out = total_loss(&mut tape, cfg, &fwd.head, labels).unwrap();
    tape.value(out.total).item()
}

/// True when the instance sits within a finite-difference step of a point
/// where the objective is not differentiable.
fn near_kink(inst: &Instance, cfg: &LossConfig) -> bool {
    let mut tape = Tape::new();
    let xv = tape.constant(inst.x.clone());
    let fwd = inst.net.forward(&mut tape, xv).unwrap();
    if fwd
        .relu_inputs
        .iter()
        .any(|&z| tape.value(z).data().iter().any(|v| v.abs() < KINK_MARGIN))
    {
        return true;
    }
    if inst.net.spectral_ratios().iter().any(|r| (r - 1.0).abs() < 1e-2) {
        return true;
    }
    let probs = tape.value(fwd.head.probs()).clone();
    let zero_evidence: Vec<bool> = match &fwd.head {
        HeadNodes::Evidential(h) => {
            let e = tape.value(h.evidence);
            (0..e.rows()).map(|i| e.row(i).iter().all(|&v| v == 0.0)).collect()
        }
        _ => vec![false; probs.rows()],
    };
    let conf: Vec<f64> = (0..probs.rows())
        .map(|i| probs.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for i in 0..probs.rows() {
        let mut row = probs.row(i).to_vec();
        row.sort_by(|a, b| b.total_cmp(a));
        if !zero_evidence[i] && row[0] - row[1] < TIE_MARGIN {
            return true;
        }
    }
    if cfg.weights.mmce > 0.0 {
        for i in 0..conf.len() {
            for j in 0..i {
                if !(zero_evidence[i] && zero_evidence[j]) && (conf[i] - conf[j]).abs() < TIE_MARGIN {
                    return true;
                }
            }
        }
        let out = total_loss(&mut tape, cfg, &fwd.head, &inst.labels).unwrap();
        if tape.value(out.mmce.unwrap()).item() < 1e-3 {
            return true;
        }
    }
    false
}

fn random_instance(rng: &mut ChaCha8Rng, row: &GradRow) -> Instance {
    let input_dim = rng.random_range(2..=8);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
    let classes = rng.random_range(2..=5);
    let batch = rng.random_range(2..=8);
    let spec = ModelSpec {
        input_dim,
        hidden,
        classes,
        head: row.head,
        spectral: row.sn_coeff.map(|coeff| SpectralSpec { coeff, iterations: 1 }),
    };
    let net = Network::init(spec, rng).unwrap();
    let x = random_matrix(rng, batch, input_dim, 1.0);
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    Instance { net, x, labels }
}

fn criterion_gradients() -> Outcome {
    const INSTANCES: usize = 20;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut resampled = 0usize;
    let mut per_row = Vec::new();
    for row in grad_rows() {
        let cfg = LossConfig {
            weights: row.weights,
            ..LossConfig::default()
        };
        let mut row_worst = 0.0f64;
        let mut done = 0;
        while done < INSTANCES {
            let inst = random_instance(&mut rng, &row);
            if near_kink(&inst, &cfg) {
                resampled += 1;
                continue;
            }
            let mut tape = Tape::new();
            let xv = tape.constant(inst.x.clone());
            let fwd = inst.net.forward(&mut tape, xv).unwrap();
            let out = total_loss(&mut tape, &cfg, &fwd.head, &inst.labels).unwrap();
            let grads = tape.backprop(out.total).unwrap();
            let analytic: Vec<Tensor> = fwd.params.iter().map(|&p| grads.wrt(p).unwrap().clone()).collect();

            let params: Vec<Tensor> = inst.net.parameters().into_iter().cloned().collect();
            let mut probe = inst.net.clone();
            let numeric = finite_diff_grad(
                |p| {
                    probe.set_parameters(p).unwrap();
                    loss_value(&probe, &inst.x, &inst.labels, &cfg)
                },
                &params,
                FD_EPS,
            );
            row_worst = row_worst.max(max_relative_error(&analytic, &numeric));
            done += 1;
        }
        per_row.push(format!("{}={row_worst:.1e}", row.name));
        worst = worst.max(row_worst);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs <= 30.0,
        format!(
            "12 configs x {INSTANCES} instances, max rel err {worst:.2e} (tol 1e-4), {resampled} near-kink draws resampled, {secs:.1}s (limit 30s) [{}]",
            per_row.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- metrics

fn naive_fixed_bins(conf: &[f64], correct: &[bool], n_bins: usize) -> Vec<Vec<usize>> {
    let mut bins = vec![Vec::new(); n_bins];
    for (i, &c) in conf.iter().enumerate() {
        for (b, members) in bins.iter_mut().enumerate() {
            let lo = b as f64 / n_bins as f64;
            let hi = (b + 1) as f64 / n_bins as f64;
            let last = b + 1 == n_bins;
            if c >= lo && (c < hi || (last && c <= hi)) {
                members.push(i);
                break;
            }
        }
    }
    let _ = correct;
    bins
}

fn naive_adaptive_bins(conf: &[f64], n_bins: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[a].partial_cmp(&conf[b]).unwrap());
    let (base, extra) = (conf.len() / n_bins, conf.len() % n_bins);
    let mut out = Vec::new();
    let mut at = 0;
    for b in 0..n_bins {
        let size = base + usize::from(b < extra);
        out.push(order[at..at + size].to_vec());
        at += size;
    }
    out
}

struct Naive {
    ece: f64,
    aece: f64,
    mce: f64,
    oe: f64,
    brier: f64,
    bacc: f64,
}

fn naive_metrics(probs: &[Vec<f64>], labels: &[usize], n_bins: usize) -> Naive {
    let n = probs.len() as f64;
    let mut conf = Vec::new();
    let mut correct = Vec::new();
    for (p, &y) in probs.iter().zip(labels) {
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        conf.push(p[best]);
        correct.push(best == y);
    }
    let stats = |members: &[usize]| {
        let k = members.len() as f64;
        let acc = members.iter().filter(|&&i| correct[i]).count() as f64 / k;
        let c = members.iter().map(|&i| conf[i]).sum::<f64>() / k;
        (k / n, acc, c)
    };
    let (mut e, mut m, mut oe) = (0.0, 0.0f64, 0.0);
    for members in naive_fixed_bins(&conf, &correct, n_bins) {
        if members.is_empty() {
            continue;
        }
        let (w, acc, c) = stats(&members);
        e += w * (acc - c).abs();
        m = m.max((acc - c).abs());
        oe += w * c * (c - acc).max(0.0);
    }
    let mut ae = 0.0;
    for members in naive_adaptive_bins(&conf, n_bins) {
        if members.is_empty() {
            continue;
        }
        let (w, acc, c) = stats(&members);
        ae += w * (acc - c).abs();
    }
    let mut brier = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        for (k, &pk) in p.iter().enumerate() {
            let t = if k == y { 1.0 } else { 0.0 };
            brier += (pk - t) * (pk - t);
        }
    }
    let classes = probs[0].len();
    let mut recalls = Vec::new();
    for c in 0..classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if !idx.is_empty() {
            recalls.push(idx.iter().filter(|&&i| correct[i]).count() as f64 / idx.len() as f64);
        }
    }
    Naive {
        ece: e,
        aece: ae,
        mce: m,
        oe,
        brier: brier / n,
        bacc: recalls.iter().sum::<f64>() / recalls.len() as f64,
    }
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(10..=200);
        let m = rng.random_range(2..=5);
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let raw: Vec<f64> = (0..m).map(|_| (2.0 * normal(&mut rng)).exp()).collect();
            let s: f64 = raw.iter().sum();
            probs.push(raw.iter().map(|v| v / s).collect::<Vec<_>>());
            labels.push(rng.random_range(0..m));
        }
        let records: Vec<PredictionRecord> = probs
            .iter()
            .zip(&labels)
            .map(|(p, &y)| {
                let c = p.iter().copied().fold(0.0, f64::max);
                PredictionRecord::from_probs(p.clone(), y, 1.0 - c).unwrap()
            })
            .collect();
        let oracle = naive_metrics(&probs, &labels, 10);
        for (got, want) in [
            (ece(&records, 10).unwrap(), oracle.ece),
            (adaptive_ece(&records, 10).unwrap(), oracle.aece),
            (mce(&records, 10).unwrap(), oracle.mce),
            (overconfidence_error(&records, 10).unwrap(), oracle.oe),
            (brier_score(&records).unwrap(), oracle.brier),
            (balanced_accuracy(&records).unwrap(), oracle.bacc),
        ] {
            worst = worst.max((got - want).abs());
        }
    }

    let hand: Vec<PredictionRecord> = [(0.9, true), (0.8, false), (0.7, true), (0.3, false)]
        .into_iter()
        .map(|(c, ok)| {
            let rest = (1.0 - c) / 3.0;
            let probs = vec![c, rest, rest, 1.0 - c - 2.0 * rest];
            PredictionRecord::from_probs(probs, usize::from(!ok), 1.0 - c).unwrap()
        })
        .collect();
    let hand_vals = [
        ece(&hand, 2).unwrap(),
        mce(&hand, 2).unwrap(),
        overconfidence_error(&hand, 2).unwrap(),
        adaptive_ece(&hand, 2).unwrap(),
    ];
    let hand_ok = hand_vals
        .iter()
        .zip([0.175, 0.3, 0.1025, 0.175])
        .all(|(g, w)| (g - w).abs() <= 1e-12);
    outcome(
        worst <= 1e-12 && hand_ok,
        format!(
            "100 random sets, max |diff| vs naive {worst:.2e} (tol 1e-12); hand set ECE {:.4} MCE {:.4} OE {:.4} AECE {:.4}",
            hand_vals[0], hand_vals[1], hand_vals[2], hand_vals[3]
        ),
    )
}

// ---------------------------------------------------------------- exact zeros

fn criterion_exact_zeros() -> Outcome {
    let records: Vec<PredictionRecord> = (0..30)
        .map(|i| {
            let mut p = vec![0.0; 3];
            p[i % 3] = 1.0;
            PredictionRecord::from_probs(p, i % 3, 0.0).unwrap()
        })
        .collect();
    let r = CalibrationReport::compute(&records, 10).unwrap();
    let zeros = [r.ece, r.aece, r.mce, r.oe, r.brier].iter().all(|&v| v == 0.0);
    let bacc_one = r.bacc == 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut bitwise = true;
    for head in [HeadKind::Softmax, HeadKind::Prototype] {
        for _ in 0..10 {
            let spec = ModelSpec {
                input_dim: 3,
                hidden: vec![6, 5],
                classes: 4,
                head,
                spectral: None,
            };
            let net = Network::init(spec, &mut rng).unwrap();
            let x = random_matrix(&mut rng, 7, 3, 1.0);
            let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..4)).collect();

            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let fwd = net.forward(&mut tape, xv).unwrap();
            let total = total_loss(&mut tape, &LossConfig::default(), &fwd.head, &labels).unwrap();

            let mut ref_tape = Tape::new();
            let xv = ref_tape.constant(x);
            let fwd = net.forward(&mut ref_tape, xv).unwrap();
            let ce = cross_entropy(&mut ref_tape, fwd.head.probs(), &labels).unwrap();
            bitwise &= tape.value(total.total).item().to_bits() == ref_tape.value(ce).item().to_bits();
        }
    }
    outcome(
        zeros && bacc_one && bitwise,
        format!(
            "ECE {} AECE {} MCE {} OE {} Brier {} BACC {}; zero-weight total loss bitwise CE: {bitwise}",
            r.ece, r.aece, r.mce, r.oe, r.brier, r.bacc
        ),
    )
}

// ---------------------------------------------------------------- spectral norm

fn criterion_spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rows = rng.random_range(1..=16);
        let cols = rng.random_range(1..=16);
        let coeff = rng.random_range(0.3..3.0);
        let scale = rng.random_range(0.1..3.0);
        let w = random_matrix(&mut rng, rows, cols, scale);
        let mut sn = SpectralNorm::new(coeff, 1, rows, cols, &mut rng).unwrap();
        let normed = spectral_normalize(&w, &mut sn).unwrap();
        let m = DMatrix::from_row_slice(rows, cols, normed.data());
        let sigma = m.singular_values().max();
        worst = worst.max(sigma / coeff);
    }
    outcome(
        worst <= 1.001,
        format!("100 random matrices, max SVD sigma / coeff {worst:.6} (limit 1.001)"),
    )
}

// ---------------------------------------------------------------- evidential

fn enn_data_term(evidence: Vec<f64>, label: usize) -> f64 {
    let mut tape = Tape::new();
    let m = evidence.len();
    let logits = tape.constant(Tensor::matrix(1, m, evidence).unwrap());
    let head = evidence_head(&mut tape, logits, m).unwrap();
    let loss = enn_loss(&mut tape, &head, &[label], 0.0).unwrap();
    tape.value(loss).item()
}

fn criterion_evidential() -> Outcome {
    let uniform = enn_data_term(vec![0.0, 0.0], 0);
    let peaked = enn_data_term(vec![9.0, 0.0], 0);
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for k in 0..50 {
        let e = k as f64 * 0.7;
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::matrix(1, 3, vec![e, 0.5 * e, 0.0]).unwrap());
        let head = evidence_head(&mut tape, logits, 3).unwrap();
        let u = tape.value(head.uncertainty).item();
        let s = tape.value(head.strength).item();
        monotone &= u < prev && u == 3.0 / s;
        prev = u;
    }
    outcome(
        uniform == 1.0 && peaked == 0.1 && monotone,
        format!("alpha=(1,1) data term {uniform}, alpha=(10,1) data term {peaked}, u = M/S strictly decreasing in evidence: {monotone}"),
    )
}

// ---------------------------------------------------------------- MMCE

fn mmce_three_sums(r: &[f64], c: &[bool], width: f64) -> f64 {
    let n = r.len();
    let m = c.iter().filter(|&&x| x).count();
    let k = |i: usize, j: usize| (-(r[i] - r[j]).abs() / width).exp();
    let (mut a, mut b, mut x) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if !c[i] && !c[j] {
                a += r[i] * r[j] * k(i, j);
            }
            if c[i] && c[j] {
                b += (1.0 - r[i]) * (1.0 - r[j]) * k(i, j);
            }
            if c[i] && !c[j] {
                x += (1.0 - r[i]) * r[j] * k(i, j);
            }
        }
    }
    let wrong = (n - m) as f64;
    let right = m as f64;
    let mut sum = 0.0;
    if n > m {
        sum += a / (wrong * wrong);
    }
    if m > 0 {
        sum += b / (right * right);
    }
    if m > 0 && n > m {
        sum -= 2.0 * x / (right * wrong);
    }
    sum.max(0.0).sqrt()
}

fn mmce_value(r: &[f64], c: &[bool]) -> f64 {
    let mut tape = Tape::new();
    let conf = tape.constant(Tensor::vector(r.to_vec()));
    let unc = tape.rsub(1.0, conf);
    let batch = BatchAnnotations {
        confidence: conf,
        uncertainty: unc,
        correct: c.iter().map(|&b| f64::from(b)).collect(),
    };
    let v = mmce_loss(&mut tape, &batch, 0.4).unwrap();
    tape.value(v).item()
}

fn criterion_mmce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    let mut zero = true;
    for _ in 0..300 {
        let n = rng.random_range(1..=32);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let c: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        worst = worst.max((mmce_value(&r, &c) - mmce_three_sums(&r, &c, 0.4)).abs());
        let exact: Vec<f64> = c.iter().map(|&b| f64::from(b)).collect();
        zero &= mmce_value(&exact, &c) == 0.0;
    }
    outcome(
        worst <= 1e-12 && zero,
        format!(
            "300 batches n<=32, max |diff| vs three-sum oracle {worst:.2e} (tol 1e-12); r=c gives exactly 0: {zero}"
        ),
    )
}

// ---------------------------------------------------------------- trend

fn criterion_trend() -> Outcome {
    let start = Instant::now();
    let data = make_dataset(&DatasetSpec {
        samples: 2000,
        classes: 2,
        noise: 1.0,
        label_noise: 0.15,
        ..DatasetSpec::default()
    })
    .unwrap();
    let base = TrainingConfig {
        hidden: vec![64, 64],
        lr: 1e-3,
        epochs: 60,
        batch_size: 16,
        ..TrainingConfig::default()
    };
    let seeds: Vec<u64> = (0..10).collect();

    let baseline = multi_seed(&base, &data, &seeds).unwrap();
    let mut avuc_cfg = base.clone();
    avuc_cfg.loss.weights.avuc = 0.6;
    let avuc = multi_seed(&avuc_cfg, &data, &seeds).unwrap();

    let space = vec![(
        "loss.lambda_m".to_string(),
        ["10", "25", "50"].iter().map(|s| s.to_string()).collect(),
    )];
    let grid = grid_search(&space, &base, &data).unwrap();
    let mmce_cfg = grid.best_config().clone();
    let mmce = multi_seed(&mmce_cfg, &data, &seeds).unwrap();

    let logs: Vec<_> = baseline.runs.iter().map(|r| &r.log).collect();
    let ens = ensemble(&logs).unwrap();
    let ens_report = CalibrationReport::compute(&ens.records, 10).unwrap();

    let stat = |a: &dumcal::harness::AggregateReport, k: &str| a.stat(k).unwrap().mean;
    let (b_ece, b_bacc) = (stat(&baseline, "ece"), stat(&baseline, "bacc"));
    let (a_ece, a_bacc) = (stat(&avuc, "ece"), stat(&avuc, "bacc"));
    let (m_ece, m_bacc) = (stat(&mmce, "ece"), stat(&mmce, "bacc"));
    let secs = start.elapsed().as_secs_f64();

    let checks = [
        ("a", m_ece <= b_ece),
        ("b", a_ece <= b_ece),
        ("c", ens_report.ece <= b_ece),
        (
            "d",
            [a_bacc, m_bacc, ens_report.bacc].iter().all(|&v| v >= b_bacc - 0.03),
        ),
        ("time", secs <= 300.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let trace: Vec<String> = grid
        .trace
        .iter()
        .map(|p| format!("{}:{:.3}/{:.3}", p.assignment[0].1, p.val_bacc, p.val_ece))
        .collect();
    outcome(
        failed.is_empty(),
        format!(
            "baseline ECE {b_ece:.4} BACC {b_bacc:.4}; AvUC(0.6) ECE {a_ece:.4} BACC {a_bacc:.4}; MMCE(lambda_m={}) ECE {m_ece:.4} BACC {m_bacc:.4}; ensemble ECE {:.4} BACC {:.4}; grid val bacc/ece [{}]; {secs:.0}s (limit 300s){}",
            mmce_cfg.get("loss.lambda_m").unwrap_or_default(),
            ens_report.ece,
            ens_report.bacc,
            trace.join(" "),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed sub-checks: {}", failed.join(","))
            }
        ),
    )
}

// ---------------------------------------------------------------- artifacts

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.ini");
    std::fs::write(
        &config,
        "[model]\nhead = enn\nhidden = 16, 16\n\n[loss]\nlambda_enn = 2\nlambda_a = 0.5\n\n[optimizer]\nlr = 1e-3\n\n[data]\nkind = blobs\nsamples = 400\nclasses = 3\nlabel_noise = 0.1\nseed = 4\n\n[run]\nepochs = 5\nseed = 11\naugment = true\n",
    )
    .unwrap();
    let (log_a, report_a) = cmd_train(&config, &dir.path().join("a"), None).unwrap();
    let (log_b, _) = cmd_train(&config, &dir.path().join("b"), None).unwrap();
    let identical = std::fs::read(&log_a).unwrap() == std::fs::read(&log_b).unwrap();

    let saved = read_report(&report_a).unwrap();
    let recomputed = evaluate_log(&read_log(&log_a).unwrap(), saved.n_bins).unwrap();
    let worst = saved
        .scalars()
        .iter()
        .zip(recomputed.scalars())
        .map(|((_, a), (_, b))| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        identical && worst <= 1e-9,
        format!("same config+seed logs bytewise identical: {identical}; evaluate(log) vs report max |diff| {worst:.1e} (tol 1e-9)"),
    )
}

fn criterion_table_configs() -> Outcome {
    let out = tempfile::tempdir().unwrap();
    let mut count = 0;
    let mut failures = Vec::new();
    for task in ["pccmr", "acdc"] {
        let dir = workspace_root().join("configs").join(task);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "ini"))
            .collect();
        files.sort();
        for f in files {
            count += 1;
            let name = format!("{task}/{}", f.file_name().unwrap().to_string_lossy());
            if let Err(e) = cmd_train(&f, &out.path().join(&name), None) {
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(
        count == 24 && failures.is_empty(),
        format!(
            "{count} table configs (expected 24), failures: [{}]",
            failures.join("; ")
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 gradient check", criterion_gradients),
        ("2 metric oracles", criterion_metrics),
        ("3 exact zeros", criterion_exact_zeros),
        ("4 spectral bound", criterion_spectral),
        ("5 evidential values", criterion_evidential),
        ("6 MMCE oracle", criterion_mmce),
        ("7 calibration trend", criterion_trend),
        ("8 determinism and round-trip", criterion_determinism),
        ("9 table configs", criterion_table_configs),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
