//! End-to-end learning of matching similarities: a bilinear similarity
//! model, manual backpropagation through the matching layer, Adam, and the
//! training loop.
//!
//! The model is the smallest one whose parameters influence both similarity
//! tables: `sv_{ik} = x_i' A y_k` over vertex descriptors and
//! `se_{ab} = p_a' B q_b` over arc descriptors. Combinatorial solvers train
//! through the blackbox layer on the Hamming loss; the continuous Sinkhorn
//! pipeline trains node-only through the cross-entropy loss on its soft
//! output. Test-time evaluation always solves exactly, whatever trained.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{backward, forward, BlackboxSolver, GmsSolver, GmsStarSolver, Lambda};
use crate::error::{Error, Result};
use crate::graph::{MatchingInstance, TrainSample};
use crate::matrix::Matrix;
use crate::score::{accuracy, hamming_loss, hamming_loss_grad};
use crate::sinkhorn::{permutation_loss, permutation_loss_grad, sinkhorn_solve, SinkhornConfig};
use crate::solver::{solve_gms, QualityLevel};

/// Bilinear similarity model: node affinity `A` (d_v x d_v) and edge
/// affinity `B` (d_e x d_e).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityModel {
    a: Matrix,
    b: Matrix,
}

impl SimilarityModel {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.rows() != a.cols() || b.rows() != b.cols() {
            return Err(Error::DimensionMismatch(
                "affinity matrices must be square".into(),
            ));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(SimilarityModel { a, b })
    }

    /// Inner-product similarities (identity affinities).
    pub fn identity(d_v: usize, d_e: usize) -> Self {
        SimilarityModel {
            a: Matrix::identity(d_v),
            b: Matrix::identity(d_e),
        }
    }

    /// Small random initialization, uniform in `[-scale, scale]`.
    pub fn random(d_v: usize, d_e: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(d_v, d_v, |_, _| rng.random_range(-scale..=scale));
        let b = Matrix::from_fn(d_e, d_e, |_, _| rng.random_range(-scale..=scale));
        SimilarityModel { a, b }
    }

    pub fn node_affinity(&self) -> &Matrix {
        &self.a
    }

    pub fn edge_affinity(&self) -> &Matrix {
        &self.b
    }
}

/// Evaluates the model on a sample: `sv` and `se` from the bilinear forms,
/// packed in the fixed vectorization order.
pub fn compute_similarities(
    model: &SimilarityModel,
    sample: &TrainSample,
) -> Result<MatchingInstance> {
    let (g1, g2) = (sample.g1(), sample.g2());
    if g1.vertex_descriptor_dim() != model.a.rows() || g2.vertex_descriptor_dim() != model.a.rows()
    {
        return Err(Error::DimensionMismatch(format!(
            "vertex descriptors ({} / {}) do not fit the node affinity ({})",
            g1.vertex_descriptor_dim(),
            g2.vertex_descriptor_dim(),
            model.a.rows()
        )));
    }
    if g1.edge_count() * g2.edge_count() > 0
        && (g1.edge_descriptor_dim() != model.b.rows()
            || g2.edge_descriptor_dim() != model.b.rows())
    {
        return Err(Error::DimensionMismatch(format!(
            "edge descriptors ({} / {}) do not fit the edge affinity ({})",
            g1.edge_descriptor_dim(),
            g2.edge_descriptor_dim(),
            model.b.rows()
        )));
    }

    let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
    let mut sv = Vec::with_capacity(n1 * n2);
    for k in 0..n2 {
        for i in 0..n1 {
            sv.push(bilinear(
                g1.vertex_descriptor(i),
                &model.a,
                g2.vertex_descriptor(k),
            ));
        }
    }
    let (m1, m2) = (g1.edge_count(), g2.edge_count());
    let mut se = Vec::with_capacity(m1 * m2);
    for b in 0..m2 {
        for a in 0..m1 {
            se.push(bilinear(
                g1.edge_descriptor(a),
                &model.b,
                g2.edge_descriptor(b),
            ));
        }
    }
    MatchingInstance::new(g1.clone(), g2.clone(), sv, se)
}

fn bilinear(x: &[f64], a: &Matrix, y: &[f64]) -> f64 {
    let mut total = 0.0;
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        for (c, &yc) in y.iter().enumerate() {
            total += xr * a.get(r, c) * yc;
        }
    }
    total
}

/// Adjoint of [`compute_similarities`]: accumulates
/// `dA = sum_ik d_sv_{ik} x_i y_k'` and the analogous `dB` over edge pairs.
pub fn backprop_similarities(
    model: &SimilarityModel,
    sample: &TrainSample,
    d_sv: &[f64],
    d_se: &[f64],
) -> Result<(Matrix, Matrix)> {
    let (g1, g2) = (sample.g1(), sample.g2());
    let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
    let (m1, m2) = (g1.edge_count(), g2.edge_count());
    if d_sv.len() != n1 * n2 || d_se.len() != m1 * m2 {
        return Err(Error::DimensionMismatch(format!(
            "gradient lengths {}/{} do not match pair counts {}/{}",
            d_sv.len(),
            d_se.len(),
            n1 * n2,
            m1 * m2
        )));
    }
    let mut da = Matrix::zeros(model.a.rows(), model.a.cols());
    for k in 0..n2 {
        for i in 0..n1 {
            let g = d_sv[k * n1 + i];
            if g != 0.0 {
                outer_accumulate(
                    &mut da,
                    g,
                    g1.vertex_descriptor(i),
                    g2.vertex_descriptor(k),
                );
            }
        }
    }
    let mut db = Matrix::zeros(model.b.rows(), model.b.cols());
    for b in 0..m2 {
        for a in 0..m1 {
            let g = d_se[b * m1 + a];
            if g != 0.0 {
                outer_accumulate(&mut db, g, g1.edge_descriptor(a), g2.edge_descriptor(b));
            }
        }
    }
    Ok((da, db))
}

fn outer_accumulate(target: &mut Matrix, weight: f64, x: &[f64], y: &[f64]) {
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        for (c, &yc) in y.iter().enumerate() {
            target.set(r, c, target.get(r, c) + weight * xr * yc);
        }
    }
}

/// First/second-moment accumulators of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One Adam update with the conventional moment constants
/// (beta1 0.9, beta2 0.999, eps 1e-8) and bias correction.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be finite and > 0, got {learning_rate}"
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Which solver sits inside the matching layer during training.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverKind {
    /// Branch and bound at the configured quality level (`TrainConfig::alpha`),
    /// trained through the blackbox layer on the Hamming loss.
    Gms,
    /// Topology-relaxed solver, same training path.
    GmsStar,
    /// Continuous node-only pipeline trained on the cross-entropy loss of
    /// its soft output; the edge affinity receives no gradient.
    Sinkhorn(SinkhornConfig),
}

impl SolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            SolverKind::Gms => "gms",
            SolverKind::GmsStar => "gms-star",
            SolverKind::Sinkhorn(_) => "sinkhorn",
        }
    }
}

/// Training hyper-parameters. Defaults follow the reference configuration:
/// learning rate 2e-3 halved every `lr_halving_every` epochs, batch size 8,
/// 10 epochs, lambda 80.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_halving_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: Lambda,
    pub alpha: QualityLevel,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            lr_halving_every: 3,
            batch_size: 8,
            epochs: 10,
            lambda: Lambda::new(80.0).expect("default lambda is valid"),
            alpha: QualityLevel::EXACT,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.lr_halving_every == 0 {
            return Err(Error::InvalidConfig("lr_halving_every must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the training record. Epoch 0 is the untrained model;
/// `mean_loss`, `mean_gap` and `mean_tree_nodes` aggregate the epoch's
/// training-time solves (evaluation solves for epoch 0).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub mean_gap: f64,
    pub mean_tree_nodes: f64,
}

/// Mean exact-solver accuracy of a model over a sample set. Evaluation
/// always solves the full formulation to optimality so that the comparison
/// across training regimes isolates the quality of the learned similarities.
pub fn evaluate(model: &SimilarityModel, samples: &[TrainSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate on an empty set".into()));
    }
    let mut total = 0.0;
    for sample in samples {
        let instance = compute_similarities(model, sample)?;
        let result = solve_gms(&instance, QualityLevel::EXACT)?;
        total += accuracy(sample.v_gt(), result.assignment.v())?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains the similarity model. Returns the final model and one metrics row
/// per epoch (including the untrained epoch-0 row). Deterministic given the
/// config seed.
pub fn train(
    train_set: &[TrainSample],
    test_set: &[TrainSample],
    config: &TrainConfig,
    kind: &SolverKind,
) -> Result<(SimilarityModel, Vec<EpochMetrics>)> {
    config.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::InvalidConfig("training set is empty".into()))?;
    if test_set.is_empty() {
        return Err(Error::InvalidConfig("test set is empty".into()));
    }
    let d_v = first.g1().vertex_descriptor_dim();
    let d_e = first.g1().edge_descriptor_dim();

    let mut model = SimilarityModel::random(d_v, d_e, 0.1, config.seed);
    let mut state_a = AdamState::new(d_v * d_v);
    let mut state_b = AdamState::new(d_e * d_e);
    // decorrelate the shuffle stream from the init stream
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut metrics = Vec::with_capacity(config.epochs + 1);
    metrics.push(epoch_zero_row(&model, train_set, test_set, kind, config)?);

    for epoch in 1..=config.epochs {
        let lr = config.learning_rate / f64::powi(2.0, ((epoch - 1) / config.lr_halving_every) as i32);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_gap = 0.0;
        let mut epoch_nodes = 0.0;
        let mut solve_count = 0usize;

        for batch in order.chunks(config.batch_size) {
            let mut grad_a = vec![0.0; d_v * d_v];
            let mut grad_b = vec![0.0; d_e * d_e];
            for &idx in batch {
                let sample = &train_set[idx];
                let (loss, da, db, gap, nodes) = sample_gradients(&model, sample, config, kind)?;
                for (acc, g) in grad_a.iter_mut().zip(da.as_slice()) {
                    *acc += g;
                }
                for (acc, g) in grad_b.iter_mut().zip(db.as_slice()) {
                    *acc += g;
                }
                epoch_loss += loss;
                epoch_gap += gap;
                epoch_nodes += nodes;
                solve_count += 1;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grad_a {
                *g *= scale;
            }
            for g in &mut grad_b {
                *g *= scale;
            }
            let mut a = model.a.clone().into_vec();
            adam_step(&mut a, &grad_a, &mut state_a, lr)?;
            let mut b = model.b.clone().into_vec();
            adam_step(&mut b, &grad_b, &mut state_b, lr)?;
            model = SimilarityModel::new(
                Matrix::from_vec(d_v, d_v, a)?,
                Matrix::from_vec(d_e, d_e, b)?,
            )?;
        }

        let denom = solve_count.max(1) as f64;
        metrics.push(EpochMetrics {
            epoch,
            mean_loss: epoch_loss / denom,
            train_acc: evaluate(&model, train_set)?,
            test_acc: evaluate(&model, test_set)?,
            mean_gap: epoch_gap / denom,
            mean_tree_nodes: epoch_nodes / denom,
        });
    }
    Ok((model, metrics))
}

/// Loss, parameter gradients and solver statistics for one sample.
fn sample_gradients(
    model: &SimilarityModel,
    sample: &TrainSample,
    config: &TrainConfig,
    kind: &SolverKind,
) -> Result<(f64, Matrix, Matrix, f64, f64)> {
    let instance = compute_similarities(model, sample)?;
    match kind {
        SolverKind::Gms | SolverKind::GmsStar => {
            let solver: Box<dyn BlackboxSolver> = match kind {
                SolverKind::Gms => Box::new(GmsSolver {
                    quality: config.alpha,
                }),
                _ => Box::new(GmsStarSolver),
            };
            let (result, ctx) = forward(&instance, solver.as_ref())?;
            let loss = hamming_loss(sample.v_gt(), result.assignment.v())?;
            let grad_v = hamming_loss_grad(sample.v_gt(), result.assignment.v())?;
            let (d_sv, d_se) = backward(&ctx, &grad_v, config.lambda, solver.as_ref())?;
            let (da, db) = backprop_similarities(model, sample, &d_sv, &d_se)?;
            Ok((
                loss,
                da,
                db,
                result.gap,
                result.tree_nodes_expanded as f64,
            ))
        }
        SolverKind::Sinkhorn(sk) => {
            let soft = sinkhorn_solve(&instance.sv_matrix(), sk)?;
            let loss = permutation_loss(&soft, sample.v_gt())?;
            let d_sv = permutation_loss_grad(&soft, sample.v_gt(), sk.temperature)?;
            let d_se = vec![0.0; instance.shape().edge_pairs()];
            let (da, db) = backprop_similarities(model, sample, &d_sv, &d_se)?;
            Ok((loss, da, db, 0.0, 0.0))
        }
    }
}

fn epoch_zero_row(
    model: &SimilarityModel,
    train_set: &[TrainSample],
    test_set: &[TrainSample],
    kind: &SolverKind,
    config: &TrainConfig,
) -> Result<EpochMetrics> {
    // Loss/gap/node statistics of the untrained model come from one pass of
    // training-style solves without updates.
    let mut loss_total = 0.0;
    let mut gap_total = 0.0;
    let mut node_total = 0.0;
    for sample in train_set {
        let instance = compute_similarities(model, sample)?;
        match kind {
            SolverKind::Sinkhorn(sk) => {
                let soft = sinkhorn_solve(&instance.sv_matrix(), sk)?;
                loss_total += permutation_loss(&soft, sample.v_gt())?;
            }
            SolverKind::Gms => {
                let result = solve_gms(&instance, config.alpha)?;
                loss_total += hamming_loss(sample.v_gt(), result.assignment.v())?;
                gap_total += result.gap;
                node_total += result.tree_nodes_expanded as f64;
            }
            SolverKind::GmsStar => {
                let result = crate::solver::solve_gms_star(&instance)?;
                loss_total += hamming_loss(sample.v_gt(), result.assignment.v())?;
            }
        }
    }
    let denom = train_set.len() as f64;
    Ok(EpochMetrics {
        epoch: 0,
        mean_loss: loss_total / denom,
        train_acc: evaluate(model, train_set)?,
        test_acc: evaluate(model, test_set)?,
        mean_gap: gap_total / denom,
        mean_tree_nodes: node_total / denom,
    })
}
