//! Forward passes for every architecture, on the clean graph or on an
//! explicitly materialized pendant-injection graph.
//!
//! One tape-based implementation serves training (gradients on) and
//! inference (gradients off); the separate incremental evaluator in
//! [`super::incremental`] is checked against this one.

use std::rc::Rc;

use super::{ArchExtra, GnnArchitecture, GnnKind, VictimModel};
use crate::error::{Result, SniaError};
use crate::graph::InjectedGraph;
use crate::tensor::ops::softmax_row_slice;
use crate::tensor::{CsrMatrix, Matrix, Tape, Var};

/// Normalized adjacency of the (N+1)-node injection graph. Degrees are
/// recomputed for the affected rows: the target gains the injected edge
/// (degree + 2 with the self-loop) and the injected node has degree 2.
pub fn injected_norm_adjacency(ig: &InjectedGraph) -> CsrMatrix {
    let g = ig.base();
    let n = g.num_nodes();
    let target = ig.target();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| {
            let extra = usize::from(u == target);
            1.0 / ((g.degree(u) + 1 + extra) as f64).sqrt()
        })
        .collect();
    let inv_sqrt_inj = 1.0 / (2f64).sqrt();
    let mut triples = Vec::with_capacity(g.num_edges() * 2 + n + 3);
    for u in 0..n {
        let mut placed_self = false;
        for &v in g.neighbors(u) {
            if !placed_self && v > u {
                triples.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
                placed_self = true;
            }
            triples.push((u, v, inv_sqrt[u] * inv_sqrt[v]));
        }
        if !placed_self {
            triples.push((u, u, inv_sqrt[u] * inv_sqrt[u]));
        }
        if u == target {
            triples.push((u, n, inv_sqrt[u] * inv_sqrt_inj));
        }
    }
    triples.push((n, target, inv_sqrt[target] * inv_sqrt_inj));
    triples.push((n, n, inv_sqrt_inj * inv_sqrt_inj));
    CsrMatrix::from_triples(n + 1, n + 1, &triples)
}

/// Feature matrix of the injection graph: the base features plus the
/// injected node's row.
pub fn injected_feature_csr(ig: &InjectedGraph) -> CsrMatrix {
    let g = ig.base();
    let n = g.num_nodes();
    let mut triples = Vec::new();
    for u in 0..n {
        for &f in g.features(u) {
            triples.push((u, f, 1.0));
        }
    }
    for &f in ig.injected_features() {
        triples.push((n, f, 1.0));
    }
    CsrMatrix::from_triples(n + 1, g.num_features(), &triples)
}

/// Build the logits of `arch` on a tape.
///
/// `propagated` short-circuits the SGC-family input (`A^k X` folded to a
/// dense matrix); when absent it is derived from `feats` on the fly.
pub fn logits_on_tape(
    tape: &mut Tape,
    arch: &GnnArchitecture,
    params: &[Var],
    norm: &Rc<CsrMatrix>,
    feats: &Rc<CsrMatrix>,
    propagated: Option<&Rc<Matrix>>,
) -> Result<Var> {
    match arch.kind {
        GnnKind::Gcn => {
            let xw = tape.spmm(feats, params[0])?;
            let h_pre = tape.spmm(norm, xw)?;
            let h = tape.relu(h_pre);
            let hw = tape.matmul(h, params[1])?;
            tape.spmm(norm, hw)
        }
        GnnKind::Sgc => {
            let s = propagate_input(tape, arch, norm, feats, propagated)?;
            tape.matmul(s, params[0])
        }
        GnnKind::SurrogateLinear => {
            let s = propagate_input(tape, arch, norm, feats, propagated)?;
            let w = tape.matmul(params[0], params[1])?;
            tape.matmul(s, w)
        }
        GnnKind::Tagcn => {
            let hops = match arch.extra {
                ArchExtra::Hops { hops } => hops,
                _ => 3,
            };
            // layer 0: sum_k  A^k X W_k, sparse input
            let mut acc: Option<Var> = None;
            for k in 0..=hops {
                let mut term = tape.spmm(feats, params[k])?;
                for _ in 0..k {
                    term = tape.spmm(norm, term)?;
                }
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            let h = tape.relu(acc.expect("hops >= 0"));
            // layer 1: dense input
            let mut out: Option<Var> = None;
            let mut prop = h;
            for k in 0..=hops {
                let term = tape.matmul(prop, params[hops + 1 + k])?;
                out = Some(match out {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
                if k < hops {
                    prop = tape.spmm(norm, prop)?;
                }
            }
            Ok(out.expect("hops >= 0"))
        }
        GnnKind::Gcnii => {
            let (alpha, theta) = match arch.extra {
                ArchExtra::InitialResidual { alpha, theta } => (alpha, theta),
                _ => (0.1, 0.5),
            };
            let xw = tape.spmm(feats, params[0])?;
            let h0 = tape.relu(xw);
            let mut h = h0;
            for l in 1..=arch.layers {
                let beta = (theta / l as f64 + 1.0).ln();
                let agg = tape.spmm(norm, h)?;
                let smooth = tape.scale(agg, 1.0 - alpha);
                let res = tape.scale(h0, alpha);
                let p = tape.add(smooth, res)?;
                let pw = tape.matmul(p, params[l])?;
                let ident = tape.scale(p, 1.0 - beta);
                let mapped = tape.scale(pw, beta);
                let pre = tape.add(ident, mapped)?;
                h = tape.relu(pre);
            }
            tape.matmul(h, params[arch.layers + 1])
        }
    }
}

fn propagate_input(
    tape: &mut Tape,
    arch: &GnnArchitecture,
    norm: &Rc<CsrMatrix>,
    feats: &Rc<CsrMatrix>,
    propagated: Option<&Rc<Matrix>>,
) -> Result<Var> {
    if let Some(p) = propagated {
        return Ok(tape.shared_constant(Rc::clone(p)));
    }
    let k = match arch.extra {
        ArchExtra::Power { k } => k,
        _ => 2,
    };
    let mut s = feats.to_dense();
    for _ in 0..k {
        s = norm.spmm(&s)?;
    }
    Ok(tape.constant(s))
}

fn logits_plain(
    model: &VictimModel,
    norm: &Rc<CsrMatrix>,
    feats: &Rc<CsrMatrix>,
    propagated: Option<&Rc<Matrix>>,
) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = model
        .params()
        .iter()
        .map(|(_, m)| tape.constant(m.clone()))
        .collect();
    let logits = logits_on_tape(&mut tape, &model.arch, &vars, norm, feats, propagated)?;
    Ok(tape.value(logits).clone())
}

/// Logits of every node on the clean training graph.
pub fn clean_logits(model: &VictimModel, g: &crate::graph::Graph) -> Result<Matrix> {
    let feats = Rc::new(g.feature_csr());
    logits_plain(model, model.norm_adjacency(), &feats, None)
}

/// Logits of every node (including the injected one, as the last row) on
/// the materialized injection graph.
pub fn injected_logits(model: &VictimModel, ig: &InjectedGraph) -> Result<Matrix> {
    let norm = Rc::new(injected_norm_adjacency(ig));
    let feats = Rc::new(injected_feature_csr(ig));
    logits_plain(model, &norm, &feats, None)
}

/// Row-wise softmax over an optional row subset.
pub fn softmax_subset(logits: &Matrix, subset: Option<&[usize]>) -> Matrix {
    match subset {
        None => {
            let mut out = logits.clone();
            for r in 0..out.rows() {
                softmax_row_slice(out.row_mut(r));
            }
            out
        }
        Some(ids) => {
            let mut out = Matrix::zeros(ids.len(), logits.cols());
            for (row, &u) in ids.iter().enumerate() {
                out.row_mut(row).copy_from_slice(logits.row(u));
                softmax_row_slice(out.row_mut(row));
            }
            out
        }
    }
}

/// Shape sanity for loaded parameter sets.
pub fn check_param_shapes(arch: &GnnArchitecture, params: &[(String, Matrix)], f: usize, y: usize) -> Result<()> {
    let expect = |cond: bool, msg: String| -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(SniaError::Validation(msg))
        }
    };
    match arch.kind {
        GnnKind::Gcn | GnnKind::SurrogateLinear => {
            expect(params.len() == 2, format!("expected 2 parameter tensors, got {}", params.len()))?;
            expect(
                params[0].1.shape() == (f, arch.hidden_dim) && params[1].1.shape() == (arch.hidden_dim, y),
                "parameter shapes do not match architecture".into(),
            )
        }
        GnnKind::Sgc => {
            expect(params.len() == 1, format!("expected 1 parameter tensor, got {}", params.len()))?;
            expect(params[0].1.shape() == (f, y), "parameter shape does not match architecture".into())
        }
        _ => Ok(()),
    }
}
