//! Consumers of a trained distance function: the geodesic flow (the
//! index-raised gradient field of φ), backward gradient-flow integration
//! for the globally minimising `log*` map, geodesic tracing between
//! endpoints, and dense field evaluation on grids.
//!
//! The flow ODE `γ̇ = −grad φ(γ)` is arclength-parameterised when φ solves
//! the Eikonal equation exactly, so it is integrated over
//! `λ ∈ [0, φ(q; p) − ε_stop)`: the flow is undefined at the source itself.

use crate::diffcore::SmoothMap;
use crate::eikonal::GeodesicDistance;
use crate::error::{Error, Result};
use crate::geodesic::Curve;
use crate::manifold::{quadratic_form, Manifold};

/// Fraction of φ(q; p) held back from the flow integration.
pub const EPS_STOP_FRACTION: f64 = 1e-3;
/// Minimum per-step progress before the flow counts as stalled.
pub const EPS_STALL: f64 = 1e-8;

/// `(grad φ)^i = g^{ij}(q) ∂φ/∂q_j` — the geodesic flow at `q`.
pub fn grad_distance<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
) -> Result<Vec<f64>> {
    let grad = dist.grad_q(p, q)?;
    let metric = man.metric_at(q)?;
    let n = man.dim();
    let mut raised = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += metric.g_inv[[i, j]] * grad[j];
        }
        raised[i] = acc;
    }
    Ok(raised)
}

struct FlowTrace {
    /// Node positions from q toward p.
    points: Vec<Vec<f64>>,
    /// Raised gradient at each node.
    flows: Vec<Vec<f64>>,
    /// Total integrated parameter length.
    total: f64,
}

fn integrate_flow<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    steps: usize,
) -> Result<FlowTrace> {
    assert!(steps >= 8, "flow integration needs at least 8 steps");
    let phi = dist.distance(p, q)?;
    if phi <= 0.0 {
        return Err(Error::DiagonalSample {
            epsilon: crate::eikonal::EPS_DIAG,
        });
    }
    let total = phi * (1.0 - EPS_STOP_FRACTION);
    let h = total / steps as f64;
    let n = man.dim();
    let rhs = |x: &[f64]| -> Result<Vec<f64>> {
        let g = grad_distance(dist, man, p, x)?;
        Ok(g.iter().map(|v| -v).collect())
    };
    let mut x = q.to_vec();
    let mut points = Vec::with_capacity(steps + 1);
    let mut flows = Vec::with_capacity(steps + 1);
    flows.push(grad_distance(dist, man, p, &x)?);
    points.push(x.clone());
    for step in 0..steps {
        let k1 = rhs(&x)?;
        let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = rhs(&x2)?;
        let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = rhs(&x3)?;
        let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
        let k4 = rhs(&x4)?;
        let mut moved = 0.0;
        for i in 0..n {
            let dx = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            x[i] += dx;
            moved += dx * dx;
        }
        if !man.in_bounds(&x) {
            return Err(Error::TrajectoryEscapedDomain {
                exit_lambda: (step + 1) as f64 * h,
            });
        }
        if moved.sqrt() < EPS_STALL * h.max(1.0) {
            return Err(Error::StalledFlow {
                point: x.clone(),
                step,
            });
        }
        flows.push(grad_distance(dist, man, p, &x)?);
        points.push(x.clone());
    }
    Ok(FlowTrace {
        points,
        flows,
        total,
    })
}

/// The globally length-minimising inverse of the exponential map: trace the
/// gradient field backward from `q` and read off the flow direction at the
/// near-terminal point. The result is scaled so that
/// `exp_map(man, p, log_star(p, q), ·)` reaches `q` at `λ = 1`.
pub fn log_star<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let phi = dist.distance(p, q)?;
    let trace = integrate_flow(dist, man, p, q, steps)?;
    let terminal = trace.flows.last().expect("flow has nodes");
    let terminal_point = trace.points.last().expect("flow has nodes");
    // unit-speed direction in the metric at the terminal point
    let metric = man.metric_at(terminal_point)?;
    let norm = quadratic_form(&metric.g, terminal, terminal).max(0.0).sqrt();
    if norm <= 0.0 {
        return Err(Error::StalledFlow {
            point: terminal_point.clone(),
            step: trace.points.len(),
        });
    }
    Ok(terminal.iter().map(|v| v * phi / norm).collect())
}

/// Curve from `q` to (near) `p` following `−grad φ`, reparameterised to
/// `λ ∈ [0, 1]`.
pub fn trace_geodesic<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    steps: usize,
) -> Result<Curve> {
    let trace = integrate_flow(dist, man, p, q, steps)?;
    let m = trace.points.len();
    let lambdas: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
    // γ̇ per unit normalized λ: physical velocity −grad φ times total length
    let velocities: Vec<Vec<f64>> = trace
        .flows
        .iter()
        .map(|g| g.iter().map(|v| -v * trace.total).collect())
        .collect();
    Ok(Curve {
        lambdas,
        points: trace.points,
        velocities,
    })
}

/// Dense evaluation of φ(p, ·) and its flow on a regular lattice.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub flows: Vec<Vec<f64>>,
    pub resolution: usize,
}

impl DistanceField {
    /// CSV schema: `x1..xn,phi,flow1..flown`.
    pub fn to_csv(&self) -> String {
        let n = self.source.len();
        let mut out = String::new();
        for j in 1..=n {
            out.push_str(&format!("x{j},"));
        }
        out.push_str("phi");
        for j in 1..=n {
            out.push_str(&format!(",flow{j}"));
        }
        out.push('\n');
        for k in 0..self.points.len() {
            for v in &self.points[k] {
                out.push_str(&crate::io::fmt_f64(*v));
                out.push(',');
            }
            out.push_str(&crate::io::fmt_f64(self.values[k]));
            for v in &self.flows[k] {
                out.push(',');
                out.push_str(&crate::io::fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Index of the node nearest a point (coordinate Euclidean).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// Evaluate φ and grad φ on a `resolution`-per-axis lattice spanning the
/// bounds box. Nodes where the gradient is undefined (the source itself)
/// carry a zero flow vector.
pub fn field_on_grid<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    resolution: usize,
) -> Result<DistanceField> {
    assert!(resolution >= 2, "field needs at least 2 nodes per axis");
    let n = man.dim();
    let count = resolution.pow(n as u32);
    let mut points = Vec::with_capacity(count);
    let mut index = vec![0usize; n];
    loop {
        let node: Vec<f64> = (0..n)
            .map(|j| {
                let (l, h) = (man.bounds_low()[j], man.bounds_high()[j]);
                l + (h - l) * index[j] as f64 / (resolution - 1) as f64
            })
            .collect();
        points.push(node);
        // odometer increment, last axis fastest
        let mut axis = n;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < resolution {
                break;
            }
            index[axis] = 0;
        }
        if index.iter().all(|&v| v == 0) {
            break;
        }
    }
    let mut values = Vec::with_capacity(count);
    let mut flows = Vec::with_capacity(count);
    for node in &points {
        values.push(dist.distance(p, node)?);
        match grad_distance(dist, man, p, node) {
            Ok(flow) => flows.push(flow),
            Err(Error::DiagonalSample { .. }) => flows.push(vec![0.0; n]),
            Err(e) => return Err(e),
        }
    }
    Ok(DistanceField {
        source: p.to_vec(),
        points,
        values,
        flows,
        resolution,
    })
}

/// Result of the pairwise symmetricity study over a grid of origins.
#[derive(Debug, Clone)]
pub struct SymmetricityReport {
    pub origins: Vec<Vec<f64>>,
    /// `forward[i][j] = φ(origin_j; origin_i)` from the model trained (or
    /// supplied) for origin i.
    pub forward: Vec<Vec<f64>>,
    /// Scatter pairs `(φ(q; p), φ(p; q))` for i < j.
    pub pairs: Vec<(f64, f64)>,
    pub max_relative_asymmetry: f64,
}

impl SymmetricityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d_pq,d_qp\n");
        for (a, b) in &self.pairs {
            out.push_str(&format!(
                "{},{}\n",
                crate::io::fmt_f64(*a),
                crate::io::fmt_f64(*b)
            ));
        }
        out
    }
}

/// Train (or fetch) one distance function per origin on a `grid_k`-per-axis
/// lattice of origin points and compare distances in both directions.
pub fn symmetricity_test<M, F>(
    mut trainer: F,
    man: &Manifold<M>,
    grid_k: usize,
) -> Result<SymmetricityReport>
where
    M: SmoothMap,
    F: FnMut(&[f64]) -> Result<Box<dyn GeodesicDistance>>,
{
    assert!(grid_k >= 2, "symmetricity grid needs k >= 2");
    let n = man.dim();
    let margin = 0.08;
    let mut origins = Vec::new();
    let mut index = vec![0usize; n];
    loop {
        let node: Vec<f64> = (0..n)
            .map(|j| {
                let (l, h) = (man.bounds_low()[j], man.bounds_high()[j]);
                let pad = margin * (h - l);
                (l + pad) + (h - l - 2.0 * pad) * index[j] as f64 / (grid_k - 1) as f64
            })
            .collect();
        origins.push(node);
        let mut axis = n;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < grid_k {
                break;
            }
            index[axis] = 0;
        }
        if index.iter().all(|&v| v == 0) {
            break;
        }
    }
    let models: Vec<Box<dyn GeodesicDistance>> = origins
        .iter()
        .map(|origin| trainer(origin))
        .collect::<Result<_>>()?;
    let m = origins.len();
    let mut forward = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                forward[i][j] = models[i].distance(&origins[i], &origins[j])?;
            }
        }
    }
    let mut pairs = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let a = forward[i][j];
            let b = forward[j][i];
            pairs.push((a, b));
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(SymmetricityReport {
        origins,
        forward,
        pairs,
        max_relative_asymmetry: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{EuclideanOracle, SphereOracle};
    use crate::geodesic::{curve_length, exp_map};
    use crate::manifold::cosine_rule_distance;
    use std::f64::consts::PI;

    fn wide_sphere() -> Manifold {
        Manifold::hypersphere(2)
            .unwrap()
            .with_bounds(vec![PI / 6.0, -0.5], vec![5.0 * PI / 6.0, 2.5])
            .unwrap()
    }

    #[test]
    fn euclidean_flow_is_the_unit_direction() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let flow = grad_distance(&oracle, &man, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let s = 0.5f64.sqrt();
        assert!((flow[0] - s).abs() < 1e-14);
        assert!((flow[1] - s).abs() < 1e-14);
    }

    #[test]
    fn sphere_flow_has_unit_metric_norm() {
        use rand::{Rng, SeedableRng};
        let man = Manifold::hypersphere(2).unwrap();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut tested = 0;
        while tested < 20 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(0.7..2.3)).collect();
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(0.7..2.3)).collect();
            if man.pullback_euclidean(&p, &q) < 0.05 {
                continue;
            }
            let flow = grad_distance(&oracle, &man, &p, &q).unwrap();
            let norm = man.inner_product(&q, &flow, &flow).unwrap();
            assert!((norm - 1.0).abs() < 1e-6, "|grad|²_g = {norm}");
            tested += 1;
        }
    }

    #[test]
    fn log_star_on_euclidean_recovers_the_difference_vector() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let v = log_star(&oracle, &man, &[0.0, 0.0], &[1.0, 1.0], 128).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9, "{v:?}");
        assert!((v[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_star_on_sphere_closes_through_exp() {
        let man = wide_sphere();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let p = [PI / 2.0, 0.0];
        let q = [PI / 2.0, 1.0];
        let v = log_star(&oracle, &man, &p, &q, 512).unwrap();
        assert!((v[0] - 0.0).abs() < 1e-3, "{v:?}");
        assert!((v[1] - 1.0).abs() < 1e-3);
        let curve = exp_map(&man, &p, &v, 256).unwrap();
        let end = curve.end_point();
        let err: f64 = end
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-3, "endpoint error {err}");
    }

    #[test]
    fn traced_geodesic_matches_length_and_straightness() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let p = [0.0, 0.0];
        let q = [1.5, -0.5];
        let curve = trace_geodesic(&oracle, &man, &p, &q, 256).unwrap();
        let len = curve_length(&man, &curve).unwrap();
        let d = (1.5f64 * 1.5 + 0.25).sqrt();
        assert!((len - d * (1.0 - EPS_STOP_FRACTION)).abs() < 1e-6);
        // straight: all nodes on the segment
        for node in &curve.points {
            let t = node[0] / 1.5;
            assert!((node[1] - (-0.5 * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn traced_sphere_arc_has_cosine_rule_length() {
        let man = wide_sphere();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let p = [PI / 2.0, 0.0];
        let q = [PI / 2.0, PI / 2.0];
        let curve = trace_geodesic(&oracle, &man, &p, &q, 512).unwrap();
        let len = curve_length(&man, &curve).unwrap();
        let oracle_len = cosine_rule_distance(&man, &p, &q) * (1.0 - EPS_STOP_FRACTION);
        assert!((len - oracle_len).abs() < 1e-3, "{len} vs {oracle_len}");
    }

    #[test]
    fn field_level_sets_are_concentric_and_minimum_at_source() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let p = [0.0, 0.0];
        let field = field_on_grid(&oracle, &man, &p, 33).unwrap();
        assert_eq!(field.points.len(), 33 * 33);
        // nodes at equal radius have equal φ
        let mut by_radius: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
        for (node, value) in field.points.iter().zip(&field.values) {
            let r2 = node[0] * node[0] + node[1] * node[1];
            by_radius
                .entry((r2 * 1e9).round() as u64)
                .or_default()
                .push(*value);
        }
        for (_, values) in by_radius {
            let first = values[0];
            assert!(values.iter().all(|v| (v - first).abs() < 1e-12));
        }
        // minimum at the node nearest the source
        let min_idx = field
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(min_idx, field.nearest_node(&p));
        // φ grows along a ray from p
        let ray: Vec<(f64, f64)> = field
            .points
            .iter()
            .zip(&field.values)
            .filter(|(node, _)| node[1] == 0.0 && node[0] >= 0.0)
            .map(|(node, v)| (node[0], *v))
            .collect();
        for w in ray.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn field_csv_has_schema_and_row_count() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let field = field_on_grid(&oracle, &man, &[0.0, 0.0], 8).unwrap();
        let csv = field.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "x1,x2,phi,flow1,flow2");
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn symmetricity_of_exact_oracle_is_zero() {
        let man = Manifold::euclidean(2).unwrap();
        let report = symmetricity_test(
            |_origin| {
                Ok(Box::new(EuclideanOracle { dim: 2 }) as Box<dyn GeodesicDistance>)
            },
            &man,
            3,
        )
        .unwrap();
        assert_eq!(report.origins.len(), 9);
        assert_eq!(report.max_relative_asymmetry, 0.0);
    }

    #[test]
    fn symmetricity_of_shared_global_model_is_exactly_zero() {
        use crate::eikonal::{AugmentationKind, DistanceModel};
        let man = Manifold::peaks().unwrap();
        let model =
            DistanceModel::init(man.clone(), AugmentationKind::Global, 8, 2, 0, 4).unwrap();
        let report = symmetricity_test(
            |_origin| Ok(Box::new(model.clone()) as Box<dyn GeodesicDistance>),
            &man,
            2,
        )
        .unwrap();
        assert_eq!(report.max_relative_asymmetry, 0.0);
    }
}
