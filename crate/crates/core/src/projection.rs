//! Exact t-SNE projection of graph vectors onto the plane.
//!
//! The O(n^2) formulation is used throughout: Gaussian conditionals with
//! per-point bandwidths found by bisection on the perplexity, symmetrized
//! joint probabilities, Student-t similarities in the embedding, and gradient
//! descent on the KL divergence with momentum and per-coordinate gains.
//!
//! Inputs are processed in a canonical order (sorted by value) and each point's
//! initial position is derived from the seed and a hash of its vector, so the
//! output depends on the input values only, never on their order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::CombinedVector;

const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;
const INIT_STD: f64 = 1e-4;
const BANDWIDTH_TOL: f64 = 1e-5;
const BANDWIDTH_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Effective neighbour count; clamped below `n / 3` for small inputs.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated P; momentum switches 0.5 -> 0.8 here too.
    pub exaggeration_iterations: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            perplexity: 30.0,
            iterations: 500,
            learning_rate: 200.0,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProjectionConfig(m));
        if !(self.perplexity.is_finite() && self.perplexity >= 2.0) {
            return bad(format!("perplexity must be >= 2, got {}", self.perplexity));
        }
        if self.iterations < 50 {
            return bad(format!("iterations must be >= 50, got {}", self.iterations));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.early_exaggeration.is_finite() && self.early_exaggeration >= 1.0) {
            return bad(format!(
                "early_exaggeration must be >= 1, got {}",
                self.early_exaggeration
            ));
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points.
    pub fn effective_perplexity(&self, n: usize) -> f64 {
        let cap = (n as f64 - 1.0) / 3.0;
        self.perplexity.min(cap).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPoint {
    pub snapshot_id: String,
    pub x: f64,
    pub y: f64,
    /// Position in time order, for colouring and the time polyline.
    pub time_rank: usize,
}

/// Result of [`embed`], in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<[f64; 2]>,
    /// KL(P || Q) at the first iteration after exaggeration ends.
    pub kl_initial: f64,
    /// KL(P || Q) after the final update.
    pub kl_final: f64,
}

/// Project combined vectors; `ids[i]` labels `vectors[i]`, which is taken to be
/// `i`-th in time order.
pub fn project(
    vectors: &[CombinedVector],
    ids: &[String],
    cfg: &ProjectionConfig,
) -> Result<Vec<ProjectionPoint>> {
    project_with(vectors, ids, cfg, Execution::default())
}

pub fn project_with(
    vectors: &[CombinedVector],
    ids: &[String],
    cfg: &ProjectionConfig,
    exec: Execution,
) -> Result<Vec<ProjectionPoint>> {
    if ids.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            index: ids.len().min(vectors.len()),
            expected: vectors.len(),
            found: ids.len(),
        });
    }
    let dense: Vec<Vec<f64>> = exec.map(vectors, CombinedVector::to_dense);
    let emb = embed(&dense, cfg, exec)?;
    Ok(emb
        .coords
        .into_iter()
        .zip(ids)
        .enumerate()
        .map(|(i, ([x, y], id))| ProjectionPoint {
            snapshot_id: id.clone(),
            x,
            y,
            time_rank: i,
        })
        .collect())
}

/// Exact t-SNE on real-valued rows.
pub fn embed(data: &[Vec<f64>], cfg: &ProjectionConfig, exec: Execution) -> Result<Embedding> {
    cfg.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let dim = data[0].len();
    for (i, row) in data.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                index: i,
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProjectionConfig(format!(
                "row {i} has non-finite values"
            )));
        }
    }

    // Canonical order: sorted by value.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        data[a]
            .iter()
            .zip(&data[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows: Vec<&[f64]> = order.iter().map(|&i| data[i].as_slice()).collect();

    let p = joint_probabilities(&rows, cfg.effective_perplexity(n), exec);
    let init: Vec<[f64; 2]> = rows.iter().map(|r| initial_position(r, cfg.seed)).collect();
    let (y, kl_initial, kl_final) = optimize(&p, init, cfg, exec)?;

    let mut coords = vec![[0.0; 2]; n];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        coords[orig] = y[sorted_pos];
    }
    Ok(Embedding {
        coords,
        kl_initial,
        kl_final,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetrized joint probabilities, dense row-major `n * n`.
fn joint_probabilities(rows: &[&[f64]], perplexity: f64, exec: Execution) -> Vec<f64> {
    let n = rows.len();
    let target = perplexity.ln();
    let conditional: Vec<Vec<f64>> = exec.map_range(n, |i| {
        let d: Vec<f64> = (0..n).map(|j| sq_dist(rows[i], rows[j])).collect();
        conditional_row(&d, i, target)
    });
    let mut p = vec![0.0; n * n];
    let norm = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((conditional[i][j] + conditional[j][i]) / norm).max(P_FLOOR);
            }
        }
    }
    p
}

/// Gaussian conditional distribution of row `i` whose entropy matches `target`
/// (natural log of the perplexity), found by bisection on the precision.
fn conditional_row(d: &[f64], i: usize, target: f64) -> Vec<f64> {
    let n = d.len();
    let d_min = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut row = vec![0.0; n];
    for _ in 0..BANDWIDTH_STEPS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                row[j] = 0.0;
                continue;
            }
            let shifted = d[j] - d_min;
            let w = (-shifted * beta).exp();
            row[j] = w;
            sum += w;
            weighted += shifted * w;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target;
        for v in row.iter_mut() {
            *v /= sum;
        }
        if diff.abs() < BANDWIDTH_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = if lo.is_finite() {
                (beta + lo) / 2.0
            } else {
                beta / 2.0
            };
        }
    }
    row
}

fn initial_position(row: &[f64], seed: u64) -> [f64; 2] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for v in row {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    let normal = Normal::new(0.0, INIT_STD).expect("constant std is valid");
    [normal.sample(&mut rng), normal.sample(&mut rng)]
}

/// Student-t kernel values `1 / (1 + |yi - yj|^2)` for row `i`.
fn kernel_row(y: &[[f64; 2]], i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let yi = y[i];
    y.iter()
        .enumerate()
        .filter(move |&(j, _)| j != i)
        .map(move |(j, yj)| {
            let dx = yi[0] - yj[0];
            let dy = yi[1] - yj[1];
            (j, 1.0 / (1.0 + dx * dx + dy * dy))
        })
}

fn kernel_sum(y: &[[f64; 2]], exec: Execution) -> f64 {
    exec.map_range(y.len(), |i| kernel_row(y, i).map(|(_, k)| k).sum::<f64>())
        .into_iter()
        .sum()
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]], exec: Execution) -> f64 {
    let n = y.len();
    let z = kernel_sum(y, exec);
    exec.map_range(n, |i| {
        kernel_row(y, i)
            .map(|(j, k)| {
                let pij = p[i * n + j];
                let q = (k / z).max(P_FLOOR);
                pij * (pij / q).ln()
            })
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

fn optimize(
    p: &[f64],
    mut y: Vec<[f64; 2]>,
    cfg: &ProjectionConfig,
    exec: Execution,
) -> Result<(Vec<[f64; 2]>, f64, f64)> {
    let n = y.len();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let switch = cfg.exaggeration_iterations.min(cfg.iterations);
    let mut kl_initial = None;

    for iter in 0..cfg.iterations {
        let exaggerating = iter < switch;
        if !exaggerating && kl_initial.is_none() {
            kl_initial = Some(kl_divergence(p, &y, exec));
        }
        let exag = if exaggerating {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if exaggerating { 0.5 } else { 0.8 };

        let z = kernel_sum(&y, exec);
        let grad: Vec<[f64; 2]> = exec.map_range(n, |i| {
            let mut g = [0.0; 2];
            for (j, k) in kernel_row(&y, i) {
                let mult = (exag * p[i * n + j] - k / z) * k;
                g[0] += mult * (y[i][0] - y[j][0]);
                g[1] += mult * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        });

        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign {
                    (gains[i][c] * 0.8).max(MIN_GAIN)
                } else {
                    gains[i][c] + 0.2
                };
                update[i][c] =
                    momentum * update[i][c] - cfg.learning_rate * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        center(&mut y);
        if y.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NumericalFailure);
        }
    }
    let kl_final = kl_divergence(p, &y, exec);
    Ok((y, kl_initial.unwrap_or(kl_final), kl_final))
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}
