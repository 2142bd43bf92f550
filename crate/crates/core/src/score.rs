//! Score functions, the Hamming loss and its gradient, and the accuracy
//! metric.

use crate::error::{Error, Result};
use crate::graph::{check_matching_constraints, Assignment, MatchingInstance};

/// Quadratic matching score: `sv . v` plus, for every pair of arcs
/// `(i,j) in E1`, `(k,l) in E2`, the term `v_{i,k} * v_{j,l} * se_{ij,kl}`.
///
/// Edge terms are accumulated over actual edge pairs only; unmatched
/// vertices incur no penalty.
pub fn score_quadratic(instance: &MatchingInstance, v: &[bool]) -> Result<f64> {
    let shape = instance.shape();
    check_matching_constraints(v, shape.n1, shape.n2, "v")?;

    let sv = instance.sv();
    let mut total: f64 = v
        .iter()
        .zip(sv)
        .filter(|(&bit, _)| bit)
        .map(|(_, &s)| s)
        .sum();

    let se = instance.se();
    for (a, &(i, j)) in instance.g1().edges().iter().enumerate() {
        for (b, &(k, l)) in instance.g2().edges().iter().enumerate() {
            if v[instance.node_pair_index(i, k)] && v[instance.node_pair_index(j, l)] {
                total += se[instance.edge_pair_index(a, b)];
            }
        }
    }
    Ok(total)
}

/// Linear matching score `SL = sv . v + se . e`.
pub fn score_linear(instance: &MatchingInstance, assignment: &Assignment) -> Result<f64> {
    if assignment.shape() != instance.shape() {
        return Err(Error::DimensionMismatch(
            "assignment shape does not match instance".into(),
        ));
    }
    let node: f64 = assignment
        .v()
        .iter()
        .zip(instance.sv())
        .filter(|(&bit, _)| bit)
        .map(|(_, &s)| s)
        .sum();
    let edge: f64 = assignment
        .e()
        .iter()
        .zip(instance.se())
        .filter(|(&bit, _)| bit)
        .map(|(_, &s)| s)
        .sum();
    Ok(node + edge)
}

/// Edge-match vector induced by a node matching: `e_{ij,kl} = 1` iff both
/// endpoint pairs are matched by `v` (and, with `only_positive`, the pair's
/// similarity is strictly positive).
pub fn induced_edge_matches(
    instance: &MatchingInstance,
    v: &[bool],
    only_positive: bool,
) -> Result<Vec<bool>> {
    let shape = instance.shape();
    check_matching_constraints(v, shape.n1, shape.n2, "v")?;
    let mut e = vec![false; shape.edge_pairs()];
    for (a, &(i, j)) in instance.g1().edges().iter().enumerate() {
        for (b, &(k, l)) in instance.g2().edges().iter().enumerate() {
            if v[instance.node_pair_index(i, k)] && v[instance.node_pair_index(j, l)] {
                let idx = instance.edge_pair_index(a, b);
                e[idx] = !only_positive || instance.se()[idx] > 0.0;
            }
        }
    }
    Ok(e)
}

/// Normalized Hamming loss `(1/N) * ||v - v_gt||_1`, in `[0, 1]`.
pub fn hamming_loss(v_gt: &[bool], v: &[bool]) -> Result<f64> {
    if v_gt.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "hamming_loss: lengths {} vs {}",
            v_gt.len(),
            v.len()
        )));
    }
    if v.is_empty() {
        return Ok(0.0);
    }
    let differing = v_gt.iter().zip(v).filter(|(a, b)| a != b).count();
    Ok(differing as f64 / v.len() as f64)
}

/// Gradient of the Hamming loss with respect to a real-valued relaxation of
/// `v`: elementwise `(1 - 2 * v_gt) / N`. It does not depend on `v` itself;
/// `v` is accepted only to check that the two vectors are conformable.
pub fn hamming_loss_grad(v_gt: &[bool], v: &[bool]) -> Result<Vec<f64>> {
    if v_gt.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "hamming_loss_grad: lengths {} vs {}",
            v_gt.len(),
            v.len()
        )));
    }
    let n = v_gt.len() as f64;
    Ok(v_gt
        .iter()
        .map(|&gt| if gt { -1.0 / n } else { 1.0 / n })
        .collect())
}

/// Recall of ground-truth matches: `sum(v .* v_gt) / sum(v_gt)`.
pub fn accuracy(v_gt: &[bool], v: &[bool]) -> Result<f64> {
    if v_gt.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "accuracy: lengths {} vs {}",
            v_gt.len(),
            v.len()
        )));
    }
    let total = v_gt.iter().filter(|&&b| b).count();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "accuracy is undefined for an all-zero ground truth",
        ));
    }
    let hit = v_gt.iter().zip(v).filter(|(&gt, &p)| gt && p).count();
    Ok(hit as f64 / total as f64)
}
