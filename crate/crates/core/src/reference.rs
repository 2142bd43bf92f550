//! Exhaustive reference solvers and instance fixtures. These enumerate the
//! feasible sets directly and are kept independent of the production solver
//! paths; every bound and solver in this crate is tested against them.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, MatchingInstance};
use crate::lap::lap_bruteforce;

const MAX_ENUM_VERTICES: usize = 6;

/// Exact optimum of the full matching formulation (node, edge and topology
/// constraints) by enumerating all partial node injections.
///
/// For an injective `v`, each arc of the first graph has at most one
/// compatible arc pair in the second, so the optimal edge vector is the
/// induced one restricted to strictly positive similarities.
pub fn model1_optimum(instance: &MatchingInstance) -> Result<(Vec<bool>, f64)> {
    model1_optimum_restricted(instance, &[], &[])
}

/// [`model1_optimum`] restricted to completions consistent with the given
/// fixations: `fixed_in` pairs must be matched, `fixed_out` pairs must not.
pub fn model1_optimum_restricted(
    instance: &MatchingInstance,
    fixed_in: &[(usize, usize)],
    fixed_out: &[(usize, usize)],
) -> Result<(Vec<bool>, f64)> {
    let (n1, n2) = (instance.n1(), instance.n2());
    if n1 > MAX_ENUM_VERTICES || n2 > MAX_ENUM_VERTICES {
        return Err(Error::SizeLimit(format!(
            "reference enumeration handles up to {MAX_ENUM_VERTICES} vertices per side, got {n1}x{n2}"
        )));
    }
    let mut best: Option<(Vec<bool>, f64)> = None;
    for v in enumerate_completions(n1, n2, fixed_in, fixed_out) {
        let score = model1_score(instance, &v);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((v, score));
        }
    }
    best.ok_or_else(|| {
        Error::ConstraintViolation("fixations admit no feasible completion".into())
    })
}

/// Score of a node matching under the full formulation: `sv . v` plus the
/// induced edge pairs with strictly positive similarity (the optimal edge
/// choice for an injective `v`).
pub fn model1_score(instance: &MatchingInstance, v: &[bool]) -> f64 {
    let sv = instance.sv();
    let mut total: f64 = v
        .iter()
        .zip(sv)
        .filter(|(&bit, _)| bit)
        .map(|(_, &s)| s)
        .sum();
    for (a, &(i, j)) in instance.g1().edges().iter().enumerate() {
        for (b, &(k, l)) in instance.g2().edges().iter().enumerate() {
            if v[instance.node_pair_index(i, k)] && v[instance.node_pair_index(j, l)] {
                let se = instance.se()[instance.edge_pair_index(a, b)];
                if se > 0.0 {
                    total += se;
                }
            }
        }
    }
    total
}

/// Exact optimum of the topology-relaxed formulation via the exhaustive
/// assignment oracle on each of the two independent tables.
pub fn model2_optimum(instance: &MatchingInstance) -> Result<f64> {
    let nodes = lap_bruteforce(&instance.sv_matrix())?;
    let edges = lap_bruteforce(&instance.se_matrix())?;
    Ok(nodes.score + edges.score)
}

/// All valid partial node injections of an `n1 x n2` pair table consistent
/// with the fixations, as binary vectors in vectorization order.
pub fn enumerate_completions(
    n1: usize,
    n2: usize,
    fixed_in: &[(usize, usize)],
    fixed_out: &[(usize, usize)],
) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut col_used = vec![false; n2];
    let mut assignment: Vec<Option<usize>> = vec![None; n1];
    for &(i, k) in fixed_in {
        if assignment[i].is_some() || col_used[k] {
            return Vec::new();
        }
        assignment[i] = Some(k);
        col_used[k] = true;
    }
    recurse_rows(0, n1, n2, fixed_out, &mut assignment, &mut col_used, &mut out);
    out
}

fn recurse_rows(
    row: usize,
    n1: usize,
    n2: usize,
    fixed_out: &[(usize, usize)],
    assignment: &mut Vec<Option<usize>>,
    col_used: &mut Vec<bool>,
    out: &mut Vec<Vec<bool>>,
) {
    if row == n1 {
        let mut v = vec![false; n1 * n2];
        for (i, &col) in assignment.iter().enumerate() {
            if let Some(k) = col {
                v[k * n1 + i] = true;
            }
        }
        out.push(v);
        return;
    }
    if assignment[row].is_some() {
        // fixed-in row
        recurse_rows(row + 1, n1, n2, fixed_out, assignment, col_used, out);
        return;
    }
    recurse_rows(row + 1, n1, n2, fixed_out, assignment, col_used, out);
    for k in 0..n2 {
        if !col_used[k] && !fixed_out.contains(&(row, k)) {
            assignment[row] = Some(k);
            col_used[k] = true;
            recurse_rows(row + 1, n1, n2, fixed_out, assignment, col_used, out);
            assignment[row] = None;
            col_used[k] = false;
        }
    }
}

/// Seeded random instance fixture: graph sizes in `1..=max_vertices`, each
/// ordered non-loop arc present with probability 0.4, similarities uniform
/// in `[-1, 1]`.
pub fn random_instance(seed: u64, max_vertices: usize) -> MatchingInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = rng.random_range(1..=max_vertices);
    let n2 = rng.random_range(1..=max_vertices);
    let g1 = random_graph(&mut rng, n1);
    let g2 = random_graph(&mut rng, n2);
    let sv = (0..n1 * n2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let se = (0..g1.edge_count() * g2.edge_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    MatchingInstance::new(g1, g2, sv, se).expect("random fixture is structurally valid")
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> AttributedGraph {
    let mut edges = Vec::new();
    for tail in 0..n {
        for head in 0..n {
            if tail != head && rng.random::<f64>() < 0.4 {
                edges.push((tail, head));
            }
        }
    }
    AttributedGraph::plain(n, edges).expect("random graph is structurally valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_partial_injections() {
        // 2x2: empty, 4 singles, 2 full = 7
        assert_eq!(enumerate_completions(2, 2, &[], &[]).len(), 7);
        // fixing (0,0) in: row 1 can skip or take column 1 = 2
        assert_eq!(enumerate_completions(2, 2, &[(0, 0)], &[]).len(), 2);
        // forbidding (0,0): 7 - those containing (0,0) = 7 - 2 = 5
        assert_eq!(enumerate_completions(2, 2, &[], &[(0, 0)]).len(), 5);
    }

    #[test]
    fn model2_splits_into_independent_tables() {
        let inst = random_instance(3, 3);
        let m2 = model2_optimum(&inst).unwrap();
        let (_, m1) = model1_optimum(&inst).unwrap();
        assert!(m2 >= m1 - 1e-9, "relaxation must dominate: {m2} < {m1}");
    }

    #[test]
    fn size_cap_is_enforced() {
        let g = AttributedGraph::plain(7, vec![]).unwrap();
        let inst = MatchingInstance::new(g.clone(), g, vec![0.0; 49], vec![]).unwrap();
        assert!(model1_optimum(&inst).is_err());
    }
}
