//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use hetmed::diagnet::{build_network, HetNet, NodeId, NodeType, Triplet};
use hetmed::embed::{pair_loss_and_grads, EmbeddingModel};
use hetmed::matrix::Matrix;
use hetmed::taskheads::{ClassifierModel, LabeledNode, PredictorModel};
use hetmed::walker::SkipGramPair;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Magnitude floor of the relative-error denominator.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central finite-difference derivative of `f` at `x` along coordinate `i`.
pub fn fd_coord(x: &mut [f64], i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let up = f(x);
    x[i] = orig - FD_STEP;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// SGNS loss recomputed from scratch, independent of the trainer's code path.
pub fn sgns_loss_direct(center: &[f64], context: &Matrix, pos: usize, negs: &[usize]) -> f64 {
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let dot = |r: usize| {
        center
            .iter()
            .zip(context.row(r))
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    let mut loss = -sig(dot(pos)).ln();
    for &n in negs {
        loss -= (1.0 - sig(dot(n))).ln();
    }
    loss
}

/// Largest relative error between analytic SGNS gradients and central
/// differences, over every touched coordinate.
pub fn sgns_max_rel_err(model: &EmbeddingModel, pair: SkipGramPair, negs: &[NodeId]) -> f64 {
    let grads = pair_loss_and_grads(model, pair, negs).unwrap();
    let neg_idx: Vec<usize> = negs.iter().map(|v| v.index()).collect();
    let pos = pair.context.index();
    let mut worst: f64 = 0.0;

    let mut u = model.center.row(pair.center.index()).to_vec();
    for i in 0..u.len() {
        let num = fd_coord(&mut u, i, &mut |x| {
            sgns_loss_direct(x, &model.context, pos, &neg_idx)
        });
        worst = worst.max(rel_err(grads.center_grad[i], num));
    }
    let u = model.center.row(pair.center.index()).to_vec();
    for (v, g) in &grads.context_grads {
        let mut ctx = model.context.clone();
        for i in 0..model.dim() {
            let orig = ctx.get(v.index(), i);
            ctx.set(v.index(), i, orig + FD_STEP);
            let up = sgns_loss_direct(&u, &ctx, pos, &neg_idx);
            ctx.set(v.index(), i, orig - FD_STEP);
            let down = sgns_loss_direct(&u, &ctx, pos, &neg_idx);
            ctx.set(v.index(), i, orig);
            worst = worst.max(rel_err(g[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Summed BCE of a sigmoid layer on input `x`, computed directly.
pub fn bce_direct(x: &[f64], w: &Matrix, b: &[f64], label: usize) -> f64 {
    (0..b.len())
        .map(|c| {
            let z: f64 = b[c]
                + x.iter()
                    .enumerate()
                    .map(|(j, xj)| xj * w.get(j, c))
                    .sum::<f64>();
            let p = sig(z);
            if c == label {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// MSE of a sigmoid layer on input `x`, computed directly.
pub fn mse_direct(x: &[f64], w: &Matrix, b: &[f64], target: usize) -> f64 {
    let c = b.len();
    (0..c)
        .map(|k| {
            let z: f64 = b[k]
                + x.iter()
                    .enumerate()
                    .map(|(j, xj)| xj * w.get(j, k))
                    .sum::<f64>();
            let y = if k == target { 1.0 } else { 0.0 };
            (sig(z) - y).powi(2)
        })
        .sum::<f64>()
        / c as f64
}

fn layer_fd_err(
    analytic_w: &Matrix,
    analytic_b: &[f64],
    w: &Matrix,
    b: &[f64],
    loss: &dyn Fn(&Matrix, &[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut w2 = w.clone();
    for r in 0..w.rows() {
        for c in 0..w.cols() {
            let orig = w2.get(r, c);
            w2.set(r, c, orig + FD_STEP);
            let up = loss(&w2, b);
            w2.set(r, c, orig - FD_STEP);
            let down = loss(&w2, b);
            w2.set(r, c, orig);
            worst = worst.max(rel_err(analytic_w.get(r, c), (up - down) / (2.0 * FD_STEP)));
        }
    }
    let mut b2 = b.to_vec();
    for i in 0..b.len() {
        let num = fd_coord(&mut b2, i, &mut |bb| loss(w, bb));
        worst = worst.max(rel_err(analytic_b[i], num));
    }
    worst
}

pub fn classifier_max_rel_err(model: &ClassifierModel, ex: LabeledNode) -> f64 {
    let g = model.loss_and_grads(ex).unwrap();
    let (w, b) = (&model.output.weights, &model.output.bias);
    let x = model.embedding.row(ex.node.index()).to_vec();
    let mut worst = layer_fd_err(&g.layer.weights, &g.layer.bias, w, b, &|w, b| {
        bce_direct(&x, w, b, ex.label)
    });
    let mut xe = x.clone();
    for i in 0..xe.len() {
        let num = fd_coord(&mut xe, i, &mut |xx| bce_direct(xx, w, b, ex.label));
        worst = worst.max(rel_err(g.embedding[0].1[i], num));
    }
    worst
}

pub fn predictor_max_rel_err(model: &PredictorModel, symptoms: &[NodeId], target: usize) -> f64 {
    let g = model.loss_and_grads(symptoms, target).unwrap();
    let (w, b) = (&model.output.weights, &model.output.bias);
    let pool = |emb: &Matrix| -> Vec<f64> {
        let mut p = vec![0.0; emb.cols()];
        for s in symptoms {
            for (acc, v) in p.iter_mut().zip(emb.row(s.index())) {
                *acc += v / symptoms.len() as f64;
            }
        }
        p
    };
    let x = pool(&model.embedding);
    let mut worst = layer_fd_err(&g.layer.weights, &g.layer.bias, w, b, &|w, b| {
        mse_direct(&x, w, b, target)
    });
    let mut emb = model.embedding.clone();
    for (s, grad) in &g.embedding {
        for i in 0..emb.cols() {
            let orig = emb.get(s.index(), i);
            emb.set(s.index(), i, orig + FD_STEP);
            let up = mse_direct(&pool(&emb), w, b, target);
            emb.set(s.index(), i, orig - FD_STEP);
            let down = mse_direct(&pool(&emb), w, b, target);
            emb.set(s.index(), i, orig);
            worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Confusion-matrix F1 oracle.
pub fn f1_bruteforce(pred: &[usize], truth: &[usize], classes: usize) -> (f64, f64) {
    let mut cm = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t][p] += 1;
    }
    let mut per_class = Vec::with_capacity(classes);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..classes {
        let tp = cm[c][c];
        let col: usize = (0..classes).map(|t| cm[t][c]).sum();
        let row: usize = cm[c].iter().sum();
        let (fp, fn_) = (col - tp, row - tp);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let denom = 2 * tp + fp + fn_;
        per_class.push(if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        });
    }
    let denom = 2 * tp_all + fp_all + fn_all;
    let micro = if denom == 0 {
        0.0
    } else {
        2.0 * tp_all as f64 / denom as f64
    };
    let macro_ = per_class.iter().sum::<f64>() / classes as f64;
    (micro, macro_)
}

/// A fixed 20-node diagnostic network.
pub fn twenty_node_net() -> HetNet {
    let rows = [
        ("d0", "n0", "w0"),
        ("d0", "n1", "w0"),
        ("d0", "n2", "w1"),
        ("d1", "n0", "w0"),
        ("d1", "n1", "w1"),
        ("d2", "n2", "w1"),
        ("d2", "n0", "w1"),
        ("d3", "n1", "w0"),
        ("d3", "n2", "w0"),
        ("d4", "n3", "w2"),
        ("d5", "n3", "w2"),
        ("d5", "n0", "w0"),
    ];
    let triplets: Vec<Triplet> = rows.iter().map(|(d, n, w)| Triplet::new(d, n, w)).collect();
    let net = build_network(&triplets).unwrap();
    assert_eq!(net.node_count(), 20);
    net
}

/// Path graph `d:a - s:b - n:c`.
pub fn path_graph() -> (HetNet, NodeId, NodeId, NodeId) {
    let mut net = HetNet::new();
    let a = net.add_node(NodeType::Disease, "d:a".into());
    let b = net.add_node(NodeType::SymptomOccurrence, "s:b".into());
    let c = net.add_node(NodeType::SymptomName, "n:c".into());
    net.add_edge(a, b).unwrap();
    net.add_edge(b, c).unwrap();
    (net, a, b, c)
}

/// Whether the type sequence of `walk` is a prefix of the cyclic extension
/// of `types` (whose last entry repeats the first).
pub fn is_cyclic_prefix(net: &HetNet, walk: &[NodeId], types: &[NodeType]) -> bool {
    let period = types.len() - 1;
    walk.iter()
        .enumerate()
        .all(|(i, &v)| net.kind(v) == types[i % period])
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
