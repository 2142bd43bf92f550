//! Continuous relaxation of the node assignment problem: log-domain
//! Sinkhorn normalization over a padded square table, discretization back to
//! a binary matching, and the cross-entropy loss used to train through the
//! continuous output.
//!
//! Padding: the `n x m` similarity table is embedded into an
//! `(n+m) x (n+m)` square whose dummy rows and columns carry score zero.
//! A doubly stochastic matrix over the padded table projects onto exactly
//! the `<=`-constrained relaxed polytope of the real block, including
//! solutions that leave many rows or columns unassigned (a single dummy row
//! and column would cap the total non-assignment mass at one, which cannot
//! represent matchings that drop several rows).

use crate::error::{Error, Result};
use crate::lap::lap_max;
use crate::matrix::Matrix;

/// Parameters of the Sinkhorn iteration. These are calibrated constants of
/// this artifact, not values from a reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornConfig {
    /// Softmax scale: scores are divided by this before exponentiation.
    pub temperature: f64,
    pub max_iters: usize,
    /// Largest tolerated deviation of any padded row/column sum from 1.
    pub convergence_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            temperature: 0.1,
            max_iters: 100,
            convergence_tol: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "convergence_tol must be finite and > 0, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Runs Sinkhorn normalization on `exp(sv / temperature)` over the padded
/// square table and returns the real `n x m` block, entries in `[0, 1]`.
///
/// All arithmetic stays in the log domain, so large `|sv| / temperature`
/// ratios cannot overflow; inputs are required to be finite.
pub fn sinkhorn_solve(sv: &Matrix, config: &SinkhornConfig) -> Result<Matrix> {
    let (n, m) = (sv.rows(), sv.cols());
    let plan = sinkhorn_padded(sv, config)?;
    Ok(Matrix::from_fn(n, m, |i, j| plan.get(i, j).clamp(0.0, 1.0)))
}

/// Same iteration, returning the whole `(n+m) x (n+m)` padded plan whose
/// rows and columns each sum to 1 within the convergence tolerance.
pub fn sinkhorn_padded(sv: &Matrix, config: &SinkhornConfig) -> Result<Matrix> {
    config.validate()?;
    if !sv.is_finite() {
        return Err(Error::NonFinite("sinkhorn scores"));
    }
    let (n, m) = (sv.rows(), sv.cols());
    let s = n + m;
    if s == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let log_kernel = |i: usize, j: usize| -> f64 {
        if i < n && j < m {
            sv.get(i, j) / config.temperature
        } else {
            0.0
        }
    };

    let mut row_potential = vec![0.0f64; s];
    let mut col_potential = vec![0.0f64; s];
    let mut plan = Matrix::zeros(s, s);
    for _ in 0..config.max_iters {
        for (i, rp) in row_potential.iter_mut().enumerate() {
            *rp = -log_sum_exp((0..s).map(|j| log_kernel(i, j) + col_potential[j]));
        }
        for (j, cp) in col_potential.iter_mut().enumerate() {
            *cp = -log_sum_exp((0..s).map(|i| log_kernel(i, j) + row_potential[i]));
        }
        for (j, &cp) in col_potential.iter().enumerate() {
            for (i, &rp) in row_potential.iter().enumerate() {
                plan.set(i, j, (log_kernel(i, j) + rp + cp).exp());
            }
        }
        if marginal_deviation(&plan) < config.convergence_tol {
            break;
        }
    }
    Ok(plan)
}

/// Largest deviation of any row or column sum from 1.
pub fn marginal_deviation(plan: &Matrix) -> f64 {
    let (rows, cols) = (plan.rows(), plan.cols());
    let mut worst = 0.0f64;
    for i in 0..rows {
        let sum: f64 = (0..cols).map(|j| plan.get(i, j)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    for j in 0..cols {
        let sum: f64 = (0..rows).map(|i| plan.get(i, j)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    worst
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Rounds a soft matching to a feasible binary node vector: a maximum-weight
/// matching on the soft mass shifted down by `0.5 / max(n, m)`, so only
/// pairs carrying clearly more than background mass are assignable.
pub fn discretize(soft: &Matrix) -> Result<Vec<bool>> {
    if !soft.is_finite() {
        return Err(Error::NonFinite("soft matching"));
    }
    let (n, m) = (soft.rows(), soft.cols());
    if n == 0 || m == 0 {
        return Ok(vec![false; n * m]);
    }
    for &x in soft.as_slice() {
        if !(-1e-9..=1.0 + 1e-9).contains(&x) {
            return Err(Error::ConstraintViolation(format!(
                "soft matching entry {x} outside [0, 1]"
            )));
        }
    }
    let threshold = 0.5 / n.max(m) as f64;
    let shifted = Matrix::from_fn(n, m, |i, j| soft.get(i, j) - threshold);
    Ok(lap_max(&shifted)?.to_vector(m))
}

const PROB_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy between a soft matching and the ground truth
/// (the loss used to train the continuous pipeline; probabilities are
/// clamped away from 0 and 1).
pub fn permutation_loss(soft: &Matrix, v_gt: &[bool]) -> Result<f64> {
    let len = soft.rows() * soft.cols();
    if v_gt.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "ground truth has length {}, soft matching has {len}",
            v_gt.len()
        )));
    }
    if len == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (idx, &gt) in v_gt.iter().enumerate() {
        let p = soft.as_slice()[idx].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        total -= if gt { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / len as f64)
}

/// Closed-form training gradient of [`permutation_loss`] with respect to the
/// score table: the cross-entropy derivative in the soft matching times the
/// local score sensitivity `p / temperature` of each entry, holding the
/// normalization potentials at their converged values.
pub fn permutation_loss_grad(soft: &Matrix, v_gt: &[bool], temperature: f64) -> Result<Vec<f64>> {
    let len = soft.rows() * soft.cols();
    if v_gt.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "ground truth has length {}, soft matching has {len}",
            v_gt.len()
        )));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be finite and > 0, got {temperature}"
        )));
    }
    let n = len as f64;
    let mut grad = Vec::with_capacity(len);
    for (idx, &gt) in v_gt.iter().enumerate() {
        let p = soft.as_slice()[idx].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let dl_dp = if gt { -1.0 / p } else { 1.0 / (1.0 - p) } / n;
        grad.push(dl_dp * p / temperature);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lap::lap_bruteforce;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_validation() {
        assert!(SinkhornConfig::default().validate().is_ok());
        let bad_temp = SinkhornConfig {
            temperature: 0.0,
            ..SinkhornConfig::default()
        };
        assert!(bad_temp.validate().is_err());
        let bad_iters = SinkhornConfig {
            max_iters: 0,
            ..SinkhornConfig::default()
        };
        assert!(bad_iters.validate().is_err());
        let bad_tol = SinkhornConfig {
            convergence_tol: -1.0,
            ..SinkhornConfig::default()
        };
        assert!(bad_tol.validate().is_err());
    }

    #[test]
    fn all_zero_scores_give_a_symmetric_block() {
        let sv = Matrix::zeros(2, 2);
        let config = SinkhornConfig::default();
        let soft = sinkhorn_solve(&sv, &config).unwrap();
        let v = soft.as_slice();
        for &x in v {
            assert!((x - v[0]).abs() < 1e-9, "{v:?}");
            assert!((0.0..=1.0).contains(&x));
        }
        let padded = sinkhorn_padded(&sv, &config).unwrap();
        assert!(marginal_deviation(&padded) < config.convergence_tol);
    }

    #[test]
    fn scalar_score_is_monotone() {
        let config = SinkhornConfig {
            temperature: 1.0,
            ..SinkhornConfig::default()
        };
        let lo = sinkhorn_solve(&Matrix::from_vec(1, 1, vec![1.0]).unwrap(), &config).unwrap();
        let hi = sinkhorn_solve(&Matrix::from_vec(1, 1, vec![10.0]).unwrap(), &config).unwrap();
        assert!(lo.get(0, 0) > 0.0 && lo.get(0, 0) < 1.0);
        assert!(hi.get(0, 0) > 0.0 && hi.get(0, 0) < 1.0);
        assert!(hi.get(0, 0) > lo.get(0, 0));
    }

    #[test]
    fn scaling_scores_equals_dividing_temperature() {
        // exact identity when the factor is a power of two
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sv = Matrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let scaled = Matrix::from_fn(3, 4, |i, j| 2.0 * sv.get(i, j));
        let base = SinkhornConfig {
            temperature: 0.5,
            ..SinkhornConfig::default()
        };
        let halved = SinkhornConfig {
            temperature: 0.25,
            ..SinkhornConfig::default()
        };
        let a = sinkhorn_solve(&scaled, &base).unwrap();
        let b = sinkhorn_solve(&sv, &halved).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn padded_plan_is_doubly_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..8 {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(1..=4);
            let sv = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let config = SinkhornConfig {
                max_iters: 20_000,
                convergence_tol: 1e-8,
                ..SinkhornConfig::default()
            };
            let plan = sinkhorn_padded(&sv, &config).unwrap();
            assert_eq!(plan.rows(), n + m);
            assert!(marginal_deviation(&plan) < 1e-6);
        }
    }

    #[test]
    fn low_temperature_recovers_the_assignment_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let config = SinkhornConfig {
            temperature: 0.01,
            max_iters: 5000,
            convergence_tol: 1e-8,
        };
        let mut agreements = 0;
        let mut total = 0;
        for _ in 0..40 {
            let n = rng.random_range(2..=4);
            let m = rng.random_range(2..=4);
            let sv = Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            if !has_unique_optimum(&sv) {
                continue;
            }
            total += 1;
            let soft = sinkhorn_solve(&sv, &config).unwrap();
            let rounded = discretize(&soft).unwrap();
            let exact = lap_max(&sv).unwrap().to_vector(m);
            if rounded == exact {
                agreements += 1;
            }
        }
        assert!(total >= 20, "not enough unique-optimum draws: {total}");
        assert!(
            agreements as f64 >= 0.95 * total as f64,
            "only {agreements}/{total} matched the assignment oracle"
        );
    }

    fn has_unique_optimum(sv: &Matrix) -> bool {
        let sol = lap_bruteforce(sv).unwrap();
        let mut second = f64::NEG_INFINITY;
        let mut scores = Vec::new();
        collect_scores(sv, 0, &mut vec![false; sv.cols()], 0.0, &mut scores);
        for s in scores {
            if (s - sol.score).abs() > 1e-12 && s > second {
                second = s;
            }
        }
        sol.score - second > 0.05
    }

    fn collect_scores(w: &Matrix, row: usize, used: &mut Vec<bool>, acc: f64, out: &mut Vec<f64>) {
        if row == w.rows() {
            out.push(acc);
            return;
        }
        collect_scores(w, row + 1, used, acc, out);
        for k in 0..w.cols() {
            if !used[k] {
                used[k] = true;
                collect_scores(w, row + 1, used, acc + w.get(row, k), out);
                used[k] = false;
            }
        }
    }

    #[test]
    fn discretize_keeps_permutation_matrices() {
        let soft = Matrix::from_fn(3, 3, |i, j| if (i + 1) % 3 == j { 1.0 } else { 0.0 });
        let v = discretize(&soft).unwrap();
        let expected: Vec<bool> = soft.as_slice().iter().map(|&x| x > 0.5).collect();
        assert_eq!(v, expected);
    }

    #[test]
    fn discretize_uniform_mass_is_deterministic_and_maximal() {
        let soft = Matrix::from_fn(2, 2, |_, _| 0.5);
        let v1 = discretize(&soft).unwrap();
        let v2 = discretize(&soft).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.iter().filter(|&&b| b).count(), 2, "maximal matching");
    }

    #[test]
    fn discretize_rejects_out_of_range_entries() {
        let soft = Matrix::from_vec(1, 1, vec![1.5]).unwrap();
        assert!(discretize(&soft).is_err());
    }

    #[test]
    fn bce_loss_prefers_the_ground_truth() {
        let gt = vec![true, false, false, true];
        let good = Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        let bad = Matrix::from_vec(2, 2, vec![0.1, 0.9, 0.9, 0.1]).unwrap();
        let lg = permutation_loss(&good, &gt).unwrap();
        let lb = permutation_loss(&bad, &gt).unwrap();
        assert!(lg < lb);
        // the gradient pushes ground-truth entries up (negative sign)
        let grad = permutation_loss_grad(&bad, &gt, 0.1).unwrap();
        assert!(grad[0] < 0.0 && grad[3] < 0.0);
        assert!(grad[1] > 0.0 && grad[2] > 0.0);
    }
}
