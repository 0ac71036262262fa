//! Length-minimising cubic-spline geodesics: the parameterised-curve
//! baseline the Eikonal distances are compared against.
//!
//! A curve is a natural cubic spline through the fixed endpoints and `k`
//! free interior knots at uniform parameter values, so the boundary
//! conditions hold for any knot placement. Spline evaluation is linear in
//! the control points; the energy gradient therefore assembles from a
//! precomputed basis and the analytic metric partials rather than from a
//! full dual sweep of the pipeline — a finite-difference cross-check pins
//! the equivalence in the tests.

use crate::diffcore::SmoothMap;
use crate::eikonal::GeodesicDistance;
use crate::error::{Error, Result};
use crate::geodesic::Curve;
use crate::manifold::{quadratic_form, Manifold};
use crate::network::OptimizerState;

/// Cubic-spline trajectory: fixed endpoints, free interior knots.
#[derive(Debug, Clone)]
pub struct SplineCurve {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `k × n` interior knots.
    pub knots: Vec<Vec<f64>>,
}

impl SplineCurve {
    /// Straight-segment initialisation: knots evenly spaced on `p → q`.
    pub fn straight(p: &[f64], q: &[f64], k_knots: usize) -> Self {
        let m = k_knots + 2;
        let knots = (1..=k_knots)
            .map(|i| {
                let t = i as f64 / (m - 1) as f64;
                p.iter().zip(q).map(|(a, b)| a + (b - a) * t).collect()
            })
            .collect();
        SplineCurve {
            p: p.to_vec(),
            q: q.to_vec(),
            knots,
        }
    }

    fn control_points(&self) -> Vec<&[f64]> {
        let mut pts: Vec<&[f64]> = Vec::with_capacity(self.knots.len() + 2);
        pts.push(&self.p);
        for knot in &self.knots {
            pts.push(knot);
        }
        pts.push(&self.q);
        pts
    }

    /// γ(t) and γ̇(t) at an arbitrary parameter.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.knots.len() + 2;
        let basis = point_basis(m, t);
        let pts = self.control_points();
        let n = self.p.len();
        let mut pos = vec![0.0; n];
        let mut vel = vec![0.0; n];
        for (i, pt) in pts.iter().enumerate() {
            for c in 0..n {
                pos[c] += basis.0[i] * pt[c];
                vel[c] += basis.1[i] * pt[c];
            }
        }
        (pos, vel)
    }

    /// Sample onto a [`Curve`] with `nodes` points for CSV export.
    pub fn sample(&self, nodes: usize) -> Curve {
        let nodes = nodes.max(2);
        let mut lambdas = Vec::with_capacity(nodes);
        let mut points = Vec::with_capacity(nodes);
        let mut velocities = Vec::with_capacity(nodes);
        for s in 0..nodes {
            let t = s as f64 / (nodes - 1) as f64;
            let (pos, vel) = self.eval(t);
            lambdas.push(t);
            points.push(pos);
            velocities.push(vel);
        }
        Curve {
            lambdas,
            points,
            velocities,
        }
    }
}

/// Second derivatives `M` of the natural cubic interpolant of scalar data
/// at uniform parameters (M_0 = M_{m−1} = 0), by the Thomas algorithm.
fn natural_second_derivatives(data: &[f64]) -> Vec<f64> {
    let m = data.len();
    let h = 1.0 / (m - 1) as f64;
    let mut second = vec![0.0; m];
    if m < 3 {
        return second;
    }
    let inner = m - 2;
    let mut diag = vec![4.0; inner];
    let mut rhs: Vec<f64> = (0..inner)
        .map(|i| 6.0 * (data[i] - 2.0 * data[i + 1] + data[i + 2]) / (h * h))
        .collect();
    for i in 1..inner {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    let mut sol = vec![0.0; inner];
    sol[inner - 1] = rhs[inner - 1] / diag[inner - 1];
    for i in (0..inner - 1).rev() {
        sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
    }
    second[1..=inner].copy_from_slice(&sol);
    second
}

/// Spline basis value and derivative at `t` for each of the `m` control
/// points (unit-data interpolants).
fn point_basis(m: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / (m - 1) as f64;
    let j = ((t * (m - 1) as f64).floor() as usize).min(m - 2);
    let t_j = j as f64 * h;
    let tau0 = t_j + h - t;
    let tau1 = t - t_j;
    let mut value = vec![0.0; m];
    let mut deriv = vec![0.0; m];
    for i in 0..m {
        let mut data = vec![0.0; m];
        data[i] = 1.0;
        let second = natural_second_derivatives(&data);
        let a = data[j] / h - second[j] * h / 6.0;
        let b = data[j + 1] / h - second[j + 1] * h / 6.0;
        value[i] = (second[j] * tau0.powi(3) + second[j + 1] * tau1.powi(3)) / (6.0 * h)
            + a * tau0
            + b * tau1;
        deriv[i] = (-3.0 * second[j] * tau0.powi(2) + 3.0 * second[j + 1] * tau1.powi(2))
            / (6.0 * h)
            - a
            + b;
    }
    (value, deriv)
}

/// Precomputed position/velocity basis over a Simpson grid: row `s`, column
/// `i` is the i-th control point's interpolant (or its derivative) at node
/// `t_s`. Depends only on `(m, nodes)`.
struct QuadBasis {
    t: Vec<f64>,
    weight: Vec<f64>,
    b: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

fn quad_basis(m: usize, quad_nodes: usize) -> QuadBasis {
    // Align Simpson panels with the spline's polynomial segments: an even
    // number of intervals per segment keeps every panel inside one cubic
    // piece, so the quadrature is exact on the basis.
    let segments = m - 1;
    let requested_intervals = quad_nodes.max(3) - 1;
    let per_segment = (requested_intervals.div_ceil(segments)).max(2).next_multiple_of(2);
    let nodes = per_segment * segments + 1;
    let h = 1.0 / (nodes - 1) as f64;
    let mut t = Vec::with_capacity(nodes);
    let mut weight = Vec::with_capacity(nodes);
    let mut b = Vec::with_capacity(nodes);
    let mut db = Vec::with_capacity(nodes);
    for s in 0..nodes {
        let ts = s as f64 * h;
        let w = if s == 0 || s == nodes - 1 {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let (value, deriv) = point_basis(m, ts);
        t.push(ts);
        weight.push(w * h / 3.0);
        b.push(value);
        db.push(deriv);
    }
    QuadBasis { t, weight, b, db }
}

fn curve_nodes<M: SmoothMap>(
    man: &Manifold<M>,
    curve: &SplineCurve,
    basis: &QuadBasis,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = man.dim();
    let pts = curve.control_points();
    let mut positions = Vec::with_capacity(basis.t.len());
    let mut velocities = Vec::with_capacity(basis.t.len());
    for s in 0..basis.t.len() {
        let mut pos = vec![0.0; n];
        let mut vel = vec![0.0; n];
        for (i, pt) in pts.iter().enumerate() {
            for c in 0..n {
                pos[c] += basis.b[s][i] * pt[c];
                vel[c] += basis.db[s][i] * pt[c];
            }
        }
        if !man.in_bounds(&pos) {
            return Err(Error::SegmentEscapedDomain { t: basis.t[s] });
        }
        positions.push(pos);
        velocities.push(vel);
    }
    Ok((positions, velocities))
}

/// Curve energy `E = ∫₀¹ ⟨γ̇, γ̇⟩_g dλ` by composite Simpson.
pub fn spline_energy<M: SmoothMap>(
    man: &Manifold<M>,
    curve: &SplineCurve,
    quad_nodes: usize,
) -> Result<f64> {
    let basis = quad_basis(curve.knots.len() + 2, quad_nodes);
    let (positions, velocities) = curve_nodes(man, curve, &basis)?;
    let mut energy = 0.0;
    for s in 0..basis.t.len() {
        let metric = man.metric_at(&positions[s])?;
        energy += basis.weight[s] * quadratic_form(&metric.g, &velocities[s], &velocities[s]);
    }
    Ok(energy)
}

/// Energy and its gradient with respect to the interior knots.
pub fn spline_energy_and_grad<M: SmoothMap>(
    man: &Manifold<M>,
    curve: &SplineCurve,
    quad_nodes: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = man.dim();
    let k = curve.knots.len();
    let basis = quad_basis(k + 2, quad_nodes);
    let (positions, velocities) = curve_nodes(man, curve, &basis)?;
    let mut energy = 0.0;
    let mut grad = vec![0.0; k * n];
    for s in 0..basis.t.len() {
        let (g, dg) = man.metric_with_partials(&positions[s])?;
        let vel = &velocities[s];
        energy += basis.weight[s] * quadratic_form(&g, vel, vel);
        // (g γ̇)_c and γ̇ᵀ g_{,c} γ̇
        for knot in 0..k {
            let col = knot + 1; // control-point index of this knot
            for c in 0..n {
                let mut gv = 0.0;
                for j in 0..n {
                    gv += g[[c, j]] * vel[j];
                }
                let mut vgv = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        vgv += dg[[i, j, c]] * vel[i] * vel[j];
                    }
                }
                grad[knot * n + c] += basis.weight[s]
                    * (2.0 * gv * basis.db[s][col] + vgv * basis.b[s][col]);
            }
        }
    }
    Ok((energy, grad))
}

/// Curve length `∫ ⟨γ̇, γ̇⟩^{1/2}_g dλ` of the spline by composite Simpson.
pub fn spline_length<M: SmoothMap>(
    man: &Manifold<M>,
    curve: &SplineCurve,
    quad_nodes: usize,
) -> Result<f64> {
    let basis = quad_basis(curve.knots.len() + 2, quad_nodes);
    let (positions, velocities) = curve_nodes(man, curve, &basis)?;
    let mut length = 0.0;
    for s in 0..basis.t.len() {
        let metric = man.metric_at(&positions[s])?;
        length += basis.weight[s]
            * quadratic_form(&metric.g, &velocities[s], &velocities[s])
                .max(0.0)
                .sqrt();
    }
    Ok(length)
}

/// Outcome of one spline optimisation. Non-convergence is data, not an
/// error: many instances simply fail to converge.
#[derive(Debug, Clone)]
pub struct SplineFit {
    pub curve: SplineCurve,
    pub length: f64,
    pub converged: bool,
    pub iterations: usize,
}

const ENERGY_QUAD_NODES: usize = 65;
const LENGTH_QUAD_NODES: usize = 129;

/// Adam descent of the curve energy over the knot coordinates, from the
/// straight-segment initialisation. Converged when no knot coordinate moved
/// more than `grad_tol` in an update.
pub fn optimise_spline<M: SmoothMap>(
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    k_knots: usize,
    lr: f64,
    max_iters: usize,
    grad_tol: f64,
) -> Result<SplineFit> {
    assert!(k_knots >= 1);
    if !man.in_bounds(p) {
        return Err(Error::OutOfBounds { point: p.to_vec() });
    }
    if !man.in_bounds(q) {
        return Err(Error::OutOfBounds { point: q.to_vec() });
    }
    let n = man.dim();
    let mut curve = SplineCurve::straight(p, q, k_knots);
    let mut flat: Vec<f64> = curve.knots.iter().flatten().copied().collect();
    let mut state = OptimizerState::new(flat.len(), lr, 1.0, u64::MAX);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let grad = match spline_energy_and_grad(man, &curve, ENERGY_QUAD_NODES) {
            Ok((_, grad)) => grad,
            // the cubic overshot the box between knots: report, don't fail
            Err(Error::SegmentEscapedDomain { .. }) => break,
            Err(e) => return Err(e),
        };
        let before = flat.clone();
        adam_flat(&mut state, &mut flat, &grad);
        // knots stay inside the box
        for (idx, slot) in flat.iter_mut().enumerate() {
            let c = idx % n;
            *slot = slot.clamp(man.bounds_low()[c], man.bounds_high()[c]);
        }
        let max_update = flat
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        for (knot, chunk) in curve.knots.iter_mut().zip(flat.chunks(n)) {
            knot.copy_from_slice(chunk);
        }
        if max_update <= grad_tol {
            converged = true;
            break;
        }
    }
    let length = spline_length(man, &curve, LENGTH_QUAD_NODES)?;
    Ok(SplineFit {
        curve,
        length,
        converged,
        iterations,
    })
}

/// Adam over a bare parameter vector, same constants as the network
/// optimiser.
fn adam_flat(state: &mut OptimizerState, flat: &mut [f64], grad: &[f64]) {
    let lr = state.effective_lr();
    let t = (state.step + 1) as f64;
    let b1 = crate::network::ADAM_BETA1;
    let b2 = crate::network::ADAM_BETA2;
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    for i in 0..flat.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        flat[i] -= lr * mhat / (vhat.sqrt() + crate::network::ADAM_EPS);
    }
    state.step += 1;
}

/// One row of the spline-vs-Eikonal comparison table.
#[derive(Debug, Clone)]
pub struct SplineComparison {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub spline_length: f64,
    pub eikonal_distance: f64,
    pub converged: bool,
}

pub fn comparison_to_csv(rows: &[SplineComparison]) -> String {
    let n = rows.first().map(|r| r.p.len()).unwrap_or(0);
    let mut out = String::new();
    for j in 1..=n {
        out.push_str(&format!("p{j},"));
    }
    for j in 1..=n {
        out.push_str(&format!("q{j},"));
    }
    out.push_str("spline_length,eikonal_distance,converged\n");
    for row in rows {
        for v in row.p.iter().chain(&row.q) {
            out.push_str(&crate::io::fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{}\n",
            crate::io::fmt_f64(row.spline_length),
            crate::io::fmt_f64(row.eikonal_distance),
            row.converged
        ));
    }
    out
}

/// Optimise a spline per pair and put its length next to the model's
/// distance.
pub fn compare_against_model<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    pairs: &[(Vec<f64>, Vec<f64>)],
    k_knots: usize,
    lr: f64,
    max_iters: usize,
    grad_tol: f64,
) -> Result<Vec<SplineComparison>> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (p, q) in pairs {
        let fit = optimise_spline(man, p, q, k_knots, lr, max_iters, grad_tol)?;
        rows.push(SplineComparison {
            p: p.clone(),
            q: q.clone(),
            spline_length: fit.length,
            eikonal_distance: dist.distance(p, q)?,
            converged: fit.converged,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn wide_sphere() -> Manifold {
        Manifold::hypersphere(2)
            .unwrap()
            .with_bounds(vec![PI / 6.0, -0.5], vec![5.0 * PI / 6.0, 2.5])
            .unwrap()
    }

    #[test]
    fn endpoints_interpolate_exactly_for_any_knots() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut curve = SplineCurve::straight(&p, &q, 5);
            for knot in &mut curve.knots {
                for v in knot.iter_mut() {
                    *v += rng.gen_range(-1.0..1.0);
                }
            }
            let (start, _) = curve.eval(0.0);
            let (end, _) = curve.eval(1.0);
            for c in 0..2 {
                assert!((start[c] - p[c]).abs() < 1e-12);
                assert!((end[c] - q[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn straight_euclidean_spline_has_unit_energy() {
        let man = Manifold::euclidean(2).unwrap();
        let curve = SplineCurve::straight(&[0.0, 0.0], &[1.0, 0.0], 8);
        let e = spline_energy(&man, &curve, 129).unwrap();
        assert!((e - 1.0).abs() < 1e-12, "energy {e}");
    }

    #[test]
    fn bent_euclidean_spline_has_larger_energy() {
        let man = Manifold::euclidean(2).unwrap();
        let mut curve = SplineCurve::straight(&[0.0, 0.0], &[1.0, 0.0], 4);
        curve.knots[1][1] += 0.3;
        let e = spline_energy(&man, &curve, 129).unwrap();
        assert!(e > 1.0 + 1e-3, "energy {e}");
    }

    #[test]
    fn quarter_equator_energy_is_length_squared() {
        let man = Manifold::hypersphere(2).unwrap();
        let curve = SplineCurve::straight(&[PI / 2.0, PI / 6.0], &[PI / 2.0, PI / 6.0 + PI / 2.0], 8);
        let e = spline_energy(&man, &curve, 129).unwrap();
        assert!((e - (PI / 2.0) * (PI / 2.0)).abs() < 1e-3, "energy {e}");
    }

    #[test]
    fn energy_gradient_matches_finite_differences_on_peaks() {
        let man = Manifold::peaks().unwrap();
        let mut curve = SplineCurve::straight(&[-1.0, -1.0], &[1.2, 0.8], 3);
        curve.knots[0][0] += 0.2;
        curve.knots[2][1] -= 0.3;
        let (_, grad) = spline_energy_and_grad(&man, &curve, 65).unwrap();
        let h = 1e-6;
        for knot in 0..3 {
            for c in 0..2 {
                let mut cp = curve.clone();
                cp.knots[knot][c] += h;
                let mut cm = curve.clone();
                cm.knots[knot][c] -= h;
                let ep = spline_energy(&man, &cp, 65).unwrap();
                let em = spline_energy(&man, &cm, 65).unwrap();
                let fd = (ep - em) / (2.0 * h);
                let exact = grad[knot * 2 + c];
                assert!(
                    (exact - fd).abs() < 1e-5_f64.max(1e-5 * fd.abs()),
                    "knot {knot} coord {c}: {exact} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn euclidean_optimisation_recovers_the_straight_line() {
        let man = Manifold::euclidean(2).unwrap();
        let p = [-1.0, -2.0];
        let q = [2.0, 1.5];
        let fit = optimise_spline(&man, &p, &q, 8, 1e-3, 50_000, 1e-4).unwrap();
        assert!(fit.converged);
        let expect = ((3.0f64).powi(2) + (3.5f64).powi(2)).sqrt();
        assert!(
            (fit.length - expect).abs() < 1e-6,
            "length {} vs {expect}",
            fit.length
        );
        assert!(fit.length >= man.pullback_euclidean(&p, &q) - 1e-12);
    }

    #[test]
    fn sphere_equator_pair_recovers_quarter_circle() {
        let man = wide_sphere();
        let fit = optimise_spline(&man, &[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0], 8, 1e-3, 20_000, 1e-4)
            .unwrap();
        assert!(fit.converged);
        assert!(
            (fit.length - PI / 2.0).abs() < 1e-3,
            "length {}",
            fit.length
        );
    }

    #[test]
    fn energy_decreases_monotonically_on_convex_euclidean_instances() {
        use rand::{Rng, SeedableRng};
        let man = Manifold::euclidean(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut curve = SplineCurve::straight(&[-1.5, 0.0], &[1.5, 0.5], 6);
        for knot in &mut curve.knots {
            for v in knot.iter_mut() {
                *v += rng.gen_range(-0.4..0.4);
            }
        }
        let mut flat: Vec<f64> = curve.knots.iter().flatten().copied().collect();
        let mut state = OptimizerState::new(flat.len(), 1e-3, 1.0, u64::MAX);
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let (e, grad) = spline_energy_and_grad(&man, &curve, 65).unwrap();
            assert!(e <= last + 1e-12, "energy rose: {e} after {last}");
            last = e;
            adam_flat(&mut state, &mut flat, &grad);
            for (knot, chunk) in curve.knots.iter_mut().zip(flat.chunks(2)) {
                knot.copy_from_slice(chunk);
            }
        }
    }

    #[test]
    fn comparison_rows_match_oracle_on_euclidean() {
        use crate::eikonal::EuclideanOracle;
        let man = Manifold::euclidean(2).unwrap();
        let pairs = vec![
            (vec![0.0, 0.0], vec![1.0, 1.0]),
            (vec![-1.0, 0.5], vec![2.0, -1.0]),
        ];
        let rows = compare_against_model(
            &EuclideanOracle { dim: 2 },
            &man,
            &pairs,
            6,
            1e-3,
            20_000,
            1e-4,
        )
        .unwrap();
        for row in &rows {
            assert!(row.converged);
            assert!(
                (row.spline_length - row.eikonal_distance).abs() < 1e-6,
                "spline {} vs eikonal {}",
                row.spline_length,
                row.eikonal_distance
            );
        }
        let csv = comparison_to_csv(&rows);
        assert!(csv.starts_with("p1,p2,q1,q2,spline_length,eikonal_distance,converged"));
        assert_eq!(csv.lines().count(), 3);
    }
}
