//! Statistics on the learned metric space: Fréchet means by direct descent
//! on the differentiable distance, the classical tangent-space iteration as
//! a cross-check, and k-means clustering under the learned distance.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::SmoothMap;
use crate::eikonal::GeodesicDistance;
use crate::error::{Error, Result};
use crate::geoflow::log_star;
use crate::manifold::Manifold;
use crate::network::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Multi-start options for the Fréchet descent.
#[derive(Debug, Clone)]
pub struct FrechetOptions {
    pub chains: usize,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    /// Chain start override; defaults to the arithmetic mean.
    pub init: Option<Vec<f64>>,
    /// Jitter radius, as a fraction of each box edge, around the start.
    pub jitter: f64,
    /// Stop a chain once no coordinate moves more than this.
    pub stop_tol: f64,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        FrechetOptions {
            chains: 16,
            lr: 1e-2,
            iters: 200,
            seed: 0,
            init: None,
            jitter: 0.05,
            stop_tol: 1e-7,
        }
    }
}

/// Multi-chain Fréchet descent output.
#[derive(Debug, Clone)]
pub struct FrechetResult {
    pub mean: Vec<f64>,
    /// Iterates per chain (including the start).
    pub trajectories: Vec<Vec<Vec<f64>>>,
    /// Objective per chain per iterate.
    pub objectives: Vec<Vec<f64>>,
    pub chains: usize,
    /// How many iterates had to be projected back into the bounds box.
    pub projections: usize,
}

fn arithmetic_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples[0].len();
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= samples.len() as f64;
    }
    mean
}

fn clamp_to_bounds<M: SmoothMap>(man: &Manifold<M>, x: &mut [f64]) -> bool {
    let mut clamped = false;
    for j in 0..man.dim() {
        let c = x[j].clamp(man.bounds_low()[j], man.bounds_high()[j]);
        if c != x[j] {
            clamped = true;
            x[j] = c;
        }
    }
    clamped
}

/// Fréchet objective `τ(μ) = Σ_x φ(μ, x)²` and its gradient.
fn frechet_objective(
    dist: &dyn GeodesicDistance,
    mu: &[f64],
    samples: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let pairs: Vec<(&[f64], &[f64])> = samples.iter().map(|x| (mu, x.as_slice())).collect();
    let evals = dist.distance_and_grad_p_many(&pairs)?;
    let n = mu.len();
    let mut tau = 0.0;
    let mut grad = vec![0.0; n];
    for (phi, g) in evals {
        tau += phi * phi;
        for j in 0..n {
            grad[j] += 2.0 * phi * g[j];
        }
    }
    Ok((tau, grad))
}

/// Minimise the sum of squared learned distances to the samples with Adam,
/// from multiple jittered starts; the best-objective chain terminus wins.
pub fn frechet_mean<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    samples: &[Vec<f64>],
    opts: &FrechetOptions,
) -> Result<FrechetResult> {
    if samples.is_empty() {
        return Err(Error::argument("frechet_mean needs samples"));
    }
    for s in samples {
        if !man.in_bounds(s) {
            return Err(Error::OutOfBounds { point: s.clone() });
        }
    }
    let n = man.dim();
    let mut start = opts.init.clone().unwrap_or_else(|| arithmetic_mean(samples));
    clamp_to_bounds(man, &mut start);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trajectories = Vec::with_capacity(opts.chains);
    let mut objectives = Vec::with_capacity(opts.chains);
    let mut projections = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for chain in 0..opts.chains {
        let mut mu = start.clone();
        if chain > 0 || opts.chains > 1 {
            for j in 0..n {
                let edge = man.bounds_high()[j] - man.bounds_low()[j];
                mu[j] += rng.gen_range(-1.0..1.0) * opts.jitter * edge;
            }
            if clamp_to_bounds(man, &mut mu) {
                projections += 1;
            }
        }
        let mut m1 = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        let mut trajectory = vec![mu.clone()];
        let mut history = Vec::with_capacity(opts.iters + 1);
        let (tau0, mut grad) = frechet_objective(dist, &mu, samples)?;
        history.push(tau0);
        for iter in 0..opts.iters {
            let t = (iter + 1) as f64;
            let bc1 = 1.0 - ADAM_BETA1.powf(t);
            let bc2 = 1.0 - ADAM_BETA2.powf(t);
            let mut max_update = 0.0f64;
            for j in 0..n {
                m1[j] = ADAM_BETA1 * m1[j] + (1.0 - ADAM_BETA1) * grad[j];
                m2[j] = ADAM_BETA2 * m2[j] + (1.0 - ADAM_BETA2) * grad[j] * grad[j];
                let step = opts.lr * (m1[j] / bc1) / ((m2[j] / bc2).sqrt() + ADAM_EPS);
                mu[j] -= step;
                max_update = max_update.max(step.abs());
            }
            if clamp_to_bounds(man, &mut mu) {
                projections += 1;
            }
            trajectory.push(mu.clone());
            let (tau, g) = frechet_objective(dist, &mu, samples)?;
            history.push(tau);
            grad = g;
            if max_update <= opts.stop_tol {
                break;
            }
        }
        let final_tau = *history.last().expect("nonempty");
        match &best {
            Some((tau, _)) if *tau <= final_tau => {}
            _ => best = Some((final_tau, mu.clone())),
        }
        trajectories.push(trajectory);
        objectives.push(history);
    }
    let (_, mean) = best.expect("at least one chain");
    Ok(FrechetResult {
        mean,
        trajectories,
        objectives,
        chains: opts.chains,
        projections,
    })
}

/// The classical iteration: average the length-scaled `log*` directions in
/// the tangent space at the current estimate and shoot back through the
/// exponential map. A cross-check oracle for small sample sets.
pub fn frechet_mean_classic<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    samples: &[Vec<f64>],
    iters: usize,
    flow_steps: usize,
) -> Result<FrechetResult> {
    if samples.is_empty() {
        return Err(Error::argument("frechet_mean_classic needs samples"));
    }
    let n = man.dim();
    let mut mu = arithmetic_mean(samples);
    clamp_to_bounds(man, &mut mu);
    let mut trajectory = vec![mu.clone()];
    let mut history = Vec::new();
    let objective = |mu: &[f64]| -> Result<f64> {
        let pairs: Vec<(&[f64], &[f64])> =
            samples.iter().map(|x| (mu, x.as_slice())).collect();
        Ok(dist
            .distance_many(&pairs)?
            .iter()
            .map(|d| d * d)
            .sum())
    };
    history.push(objective(&mu)?);
    for _ in 0..iters {
        let mut tangent_mean = vec![0.0; n];
        for x in samples {
            let v = match log_star(dist, man, &mu, x, flow_steps) {
                Ok(v) => v,
                Err(Error::DiagonalSample { .. }) => vec![0.0; n],
                Err(e) => return Err(e),
            };
            for j in 0..n {
                tangent_mean[j] += v[j] / samples.len() as f64;
            }
        }
        let step_norm: f64 = tangent_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm < 1e-10 {
            break;
        }
        let curve = crate::geodesic::exp_map(man, &mu, &tangent_mean, 64)?;
        mu = curve.end_point().to_vec();
        clamp_to_bounds(man, &mut mu);
        trajectory.push(mu.clone());
        history.push(objective(&mu)?);
        if step_norm < 1e-8 {
            break;
        }
    }
    Ok(FrechetResult {
        mean: mu,
        trajectories: vec![trajectory],
        objectives: vec![history],
        chains: 1,
        projections: 0,
    })
}

/// Lloyd options; the inner Fréchet solves are warm-started at the current
/// centroid with a few short chains.
#[derive(Debug, Clone)]
pub struct KmeansOptions {
    pub seed: u64,
    pub max_iters: usize,
    pub frechet_chains: usize,
    pub frechet_lr: f64,
    pub frechet_iters: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            seed: 0,
            max_iters: 50,
            frechet_chains: 2,
            frechet_lr: 1e-2,
            frechet_iters: 400,
        }
    }
}

/// k-means output under a given distance function.
#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Objective after each assignment step.
    pub objective_history: Vec<f64>,
}

fn assignment_step(
    dist: &dyn GeodesicDistance,
    centroids: &[Vec<f64>],
    samples: &[Vec<f64>],
) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    let k = centroids.len();
    let mut pairs = Vec::with_capacity(k * samples.len());
    for c in centroids {
        for x in samples {
            pairs.push((c.as_slice(), x.as_slice()));
        }
    }
    let d = dist.distance_many(&pairs)?;
    let mut assignments = Vec::with_capacity(samples.len());
    let mut distances = Vec::with_capacity(samples.len());
    let mut objective = 0.0;
    for (i, _) in samples.iter().enumerate() {
        let mut best = 0;
        let mut best_d = d[i];
        for c in 1..k {
            let dd = d[c * samples.len() + i];
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        assignments.push(best);
        distances.push(best_d);
        objective += best_d * best_d;
    }
    Ok((assignments, distances, objective))
}

/// Lloyd's algorithm under the learned distance: assignment by `φ_θ`,
/// update by the Fréchet mean of each cluster. Terminates when the
/// assignments stop changing. Empty clusters are reseeded at the sample
/// farthest from its centroid. Centroid updates are kept only when they do
/// not worsen their cluster's objective, so the Lloyd objective is
/// non-increasing up to the inner solver tolerance.
pub fn kmeans<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    samples: &[Vec<f64>],
    k: usize,
    opts: &KmeansOptions,
) -> Result<ClusteringResult> {
    if k == 0 || k > samples.len() {
        return Err(Error::argument("need 1 <= k <= number of samples"));
    }
    for s in samples {
        if !man.in_bounds(s) {
            return Err(Error::OutOfBounds { point: s.clone() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    indices.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = indices[..k].iter().map(|&i| samples[i].clone()).collect();

    let mut assignments: Vec<usize> = vec![usize::MAX; samples.len()];
    let mut objective_history = Vec::new();
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let (new_assignments, distances, objective) =
            assignment_step(dist, &centroids, samples)?;
        objective_history.push(objective);
        let unchanged = new_assignments == assignments;
        assignments = new_assignments;
        if unchanged {
            break;
        }
        // update step
        for c in 0..k {
            let members: Vec<Vec<f64>> = samples
                .iter()
                .zip(&assignments)
                .filter(|(_, a)| **a == c)
                .map(|(s, _)| s.clone())
                .collect();
            if members.is_empty() {
                // reseed at the sample farthest from its assigned centroid
                let far = distances
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("nonempty samples");
                centroids[c] = samples[far].clone();
                continue;
            }
            let member_pairs = |mu: &[f64]| -> Vec<(Vec<f64>, Vec<f64>)> {
                members.iter().map(|x| (mu.to_vec(), x.clone())).collect()
            };
            let cluster_objective = |mu: &[f64]| -> Result<f64> {
                let owned = member_pairs(mu);
                let pairs: Vec<(&[f64], &[f64])> = owned
                    .iter()
                    .map(|(a, b)| (a.as_slice(), b.as_slice()))
                    .collect();
                Ok(dist
                    .distance_many(&pairs)?
                    .iter()
                    .map(|d| d * d)
                    .sum())
            };
            let result = frechet_mean(
                dist,
                man,
                &members,
                &FrechetOptions {
                    chains: opts.frechet_chains,
                    lr: opts.frechet_lr,
                    iters: opts.frechet_iters,
                    seed: opts.seed ^ (0x9e37 + (iter * k + c) as u64),
                    init: Some(centroids[c].clone()),
                    jitter: 0.02,
                    stop_tol: 1e-7,
                },
            )?;
            // guarded update: never worsen the cluster objective
            if cluster_objective(&result.mean)? <= cluster_objective(&centroids[c])? {
                centroids[c] = result.mean;
            }
        }
    }
    Ok(ClusteringResult {
        centroids,
        assignments,
        iterations,
        objective_history,
    })
}

/// Plain Lloyd with coordinate-ℓ² (baseline 1) and with the ambient
/// pullback distance `‖ι(x) − ι(y)‖₂` (baseline 2). Baseline 2 clusters the
/// immersed points; its reported centroids are the intrinsic coordinates of
/// each cluster's medoid.
pub fn kmeans_euclidean_baselines<M: SmoothMap>(
    man: &Manifold<M>,
    samples: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(ClusteringResult, ClusteringResult)> {
    if k == 0 || k > samples.len() {
        return Err(Error::argument("need 1 <= k <= number of samples"));
    }
    let intrinsic = lloyd_euclidean(samples, k, seed, max_iters);
    let ambient_pts: Vec<Vec<f64>> = samples.iter().map(|x| man.immerse(x)).collect();
    let ambient = lloyd_euclidean(&ambient_pts, k, seed, max_iters);
    // project baseline-2 centroids back: the member nearest each ambient mean
    let mut centroids = Vec::with_capacity(k);
    for c in 0..k {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, pt) in ambient_pts.iter().enumerate() {
            if ambient.assignments[i] != c {
                continue;
            }
            let d: f64 = pt
                .iter()
                .zip(&ambient.centroids[c])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        centroids.push(match best {
            Some(i) => samples[i].clone(),
            None => samples[0].clone(),
        });
    }
    let pullback = ClusteringResult {
        centroids,
        assignments: ambient.assignments,
        iterations: ambient.iterations,
        objective_history: ambient.objective_history,
    };
    Ok((intrinsic, pullback))
}

fn lloyd_euclidean(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> ClusteringResult {
    let n = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..points.len()).collect();
    indices.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = indices[..k].iter().map(|&i| points[i].clone()).collect();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut objective_history = Vec::new();
    let mut iterations = 0;
    let d2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    for iter in 0..max_iters {
        iterations = iter + 1;
        let mut objective = 0.0;
        let new_assignments: Vec<usize> = points
            .iter()
            .map(|p| {
                let (mut best, mut best_d) = (0, d2(p, &centroids[0]));
                for c in 1..k {
                    let dd = d2(p, &centroids[c]);
                    if dd < best_d {
                        best_d = dd;
                        best = c;
                    }
                }
                objective += best_d;
                best
            })
            .collect();
        objective_history.push(objective);
        let unchanged = new_assignments == assignments;
        assignments = new_assignments;
        if unchanged {
            break;
        }
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignments)
                .filter(|(_, a)| **a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; n];
            for m in &members {
                for (slot, v) in mean.iter_mut().zip(m.iter()) {
                    *slot += v;
                }
            }
            for slot in mean.iter_mut() {
                *slot /= members.len() as f64;
            }
            centroids[c] = mean;
        }
    }
    ClusteringResult {
        centroids,
        assignments,
        iterations,
        objective_history,
    }
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map(|m| m + 1).unwrap_or(0);
    let kb = b.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let comb2 = |v: u64| -> f64 { (v as f64) * (v as f64 - 1.0) / 2.0 };
    let sum_table: f64 = table.iter().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = rows.iter().map(|&v| comb2(v)).sum();
    let sum_cols: f64 = cols.iter().map(|&v| comb2(v)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_table - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{EuclideanOracle, SphereOracle};
    use std::f64::consts::PI;

    fn blob(center: &[f64], count: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + rng.gen_range(-spread..spread))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn euclidean_frechet_mean_is_the_arithmetic_mean() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = blob(&[0.4, -0.7], 24, 1.0, &mut rng);
        let expect = arithmetic_mean(&samples);
        let result = frechet_mean(
            &oracle,
            &man,
            &samples,
            &FrechetOptions {
                chains: 4,
                iters: 400,
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        for j in 0..2 {
            assert!(
                (result.mean[j] - expect[j]).abs() < 1e-4,
                "{:?} vs {expect:?}",
                result.mean
            );
        }
        // objective is monotone over a trailing window
        for history in &result.objectives {
            let m = history.len();
            if m > 50 {
                assert!(history[m - 1] <= history[m - 51] + 1e-9);
            }
        }
    }

    #[test]
    fn classic_iteration_matches_on_euclidean_in_one_step() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = blob(&[-0.5, 0.8], 8, 0.8, &mut rng);
        let expect = arithmetic_mean(&samples);
        let result = frechet_mean_classic(&oracle, &man, &samples, 1, 128).unwrap();
        for j in 0..2 {
            assert!((result.mean[j] - expect[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn classic_iteration_returns_single_sample() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let samples = vec![vec![0.7, -0.2]];
        let result = frechet_mean_classic(&oracle, &man, &samples, 5, 64).unwrap();
        assert_eq!(result.mean, samples[0]);
    }

    #[test]
    fn sphere_two_sample_mean_is_the_arc_midpoint() {
        let man = Manifold::hypersphere(2)
            .unwrap()
            .with_bounds(vec![PI / 6.0, -0.5], vec![5.0 * PI / 6.0, 1.5])
            .unwrap();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let samples = vec![vec![PI / 2.0, 0.0], vec![PI / 2.0, 1.0]];
        let result = frechet_mean(
            &oracle,
            &man,
            &samples,
            &FrechetOptions {
                chains: 4,
                iters: 400,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((result.mean[0] - PI / 2.0).abs() < 1e-3, "{:?}", result.mean);
        assert!((result.mean[1] - 0.5).abs() < 1e-3, "{:?}", result.mean);

        let classic = frechet_mean_classic(&oracle, &man, &samples, 10, 256).unwrap();
        for j in 0..2 {
            assert!((classic.mean[j] - result.mean[j]).abs() < 1e-2);
        }
    }

    #[test]
    fn two_blob_clustering_recovers_the_labels() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut samples = blob(&[-1.8, -1.8], 30, 0.3, &mut rng);
        samples.extend(blob(&[1.8, 1.8], 30, 0.3, &mut rng));
        let truth: Vec<usize> = (0..60).map(|i| i / 30).collect();
        let result = kmeans(&oracle, &man, &samples, 2, &KmeansOptions::default()).unwrap();
        assert_eq!(adjusted_rand_index(&result.assignments, &truth), 1.0);
        // Lloyd objective non-increasing
        for w in result.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "objective rose: {w:?}");
        }
        // post-hoc argmin optimality
        for (i, x) in samples.iter().enumerate() {
            let mine = oracle.distance(&result.centroids[result.assignments[i]], x).unwrap();
            for c in &result.centroids {
                assert!(mine <= oracle.distance(c, x).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn k_equal_one_reduces_to_the_frechet_mean() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples = blob(&[0.3, 0.4], 20, 1.2, &mut rng);
        let result = kmeans(&oracle, &man, &samples, 1, &KmeansOptions::default()).unwrap();
        let expect = arithmetic_mean(&samples);
        for j in 0..2 {
            assert!((result.centroids[0][j] - expect[j]).abs() < 1e-3);
        }
        assert!(result.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn all_methods_agree_on_a_flat_manifold() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut samples = blob(&[-1.5, 0.0], 25, 0.25, &mut rng);
        samples.extend(blob(&[1.5, 0.5], 25, 0.25, &mut rng));
        let geo = kmeans(&oracle, &man, &samples, 2, &KmeansOptions::default()).unwrap();
        let (b1, b2) = kmeans_euclidean_baselines(&man, &samples, 2, 0, 50).unwrap();
        assert_eq!(adjusted_rand_index(&geo.assignments, &b1.assignments), 1.0);
        assert_eq!(adjusted_rand_index(&geo.assignments, &b2.assignments), 1.0);
    }

    #[test]
    fn metric_distortion_separates_methods_on_the_sphere() {
        // Cluster A sits at large polar angle, cluster B at small polar
        // angle where the metric shrinks azimuthal separations; bridge
        // points between them flip allegiance between coordinate-ℓ² and
        // geodesic distance.
        let man = Manifold::hypersphere(2).unwrap();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut samples = blob(&[1.3, 1.0], 20, 0.05, &mut rng);
        samples.extend(blob(&[0.58, 2.45], 20, 0.03, &mut rng));
        samples.extend(blob(&[0.58, 1.5], 5, 0.02, &mut rng));
        let geo = kmeans(&oracle, &man, &samples, 2, &KmeansOptions::default()).unwrap();
        let (b1, b2) = kmeans_euclidean_baselines(&man, &samples, 2, 0, 50).unwrap();
        let ari_b1 = adjusted_rand_index(&geo.assignments, &b1.assignments);
        assert!(ari_b1 < 1.0, "intrinsic ℓ² agreed with geodesic: {ari_b1}");
        let ari_b1_b2 = adjusted_rand_index(&b1.assignments, &b2.assignments);
        assert!(ari_b1_b2 < 1.0, "both baselines coincide: {ari_b1_b2}");
    }

    #[test]
    fn adjusted_rand_index_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(ari < 0.01, "independent labelings should score near zero: {ari}");
    }
}
