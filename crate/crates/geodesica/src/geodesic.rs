//! Geodesic integration and curve functionals.
//!
//! The geodesic equation `γ̈^k + Γ^k_ij γ̇^i γ̇^j = 0` is integrated as a
//! first-order system in `(γ, γ̇)` with classical fixed-step RK4. Curve
//! length and the straight-segment upper bound are composite-Simpson
//! quadratures of `⟨γ̇, γ̇⟩^{1/2}_g`.

use crate::diffcore::SmoothMap;
use crate::error::{Error, Result};
use crate::manifold::{quadratic_form, Manifold};

/// A discretised trajectory `γ(λ)` with velocities, `λ ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct Curve {
    pub lambdas: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl Curve {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn end_point(&self) -> &[f64] {
        self.points.last().expect("curve has nodes")
    }

    /// CSV with header `lambda,x1..xn,v1..vn`.
    pub fn to_csv(&self) -> String {
        let n = self.points[0].len();
        let mut out = String::from("lambda");
        for j in 1..=n {
            out.push_str(&format!(",x{j}"));
        }
        for j in 1..=n {
            out.push_str(&format!(",v{j}"));
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&crate::io::fmt_f64(self.lambdas[k]));
            for v in &self.points[k] {
                out.push(',');
                out.push_str(&crate::io::fmt_f64(*v));
            }
            for v in &self.velocities[k] {
                out.push(',');
                out.push_str(&crate::io::fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn geodesic_rhs<M: SmoothMap>(
    man: &Manifold<M>,
    x: &[f64],
    v: &[f64],
    dx: &mut [f64],
    dv: &mut [f64],
) -> Result<()> {
    let n = man.dim();
    let chris = man.christoffel_at(x)?;
    dx.copy_from_slice(v);
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += chris.gamma[[k, i, j]] * v[i] * v[j];
            }
        }
        dv[k] = -acc;
    }
    Ok(())
}

/// Shoot the geodesic from `p` with initial velocity `v` over `λ ∈ [0, 1]`
/// using `steps` RK4 steps. Errors with the exit parameter if the curve
/// leaves the bounds box.
pub fn exp_map<M: SmoothMap>(
    man: &Manifold<M>,
    p: &[f64],
    v: &[f64],
    steps: usize,
) -> Result<Curve> {
    assert!(steps >= 16, "exp_map needs at least 16 steps");
    let n = man.dim();
    if !man.in_bounds(p) {
        return Err(Error::OutOfBounds { point: p.to_vec() });
    }
    let h = 1.0 / steps as f64;
    let mut x = p.to_vec();
    let mut vel = v.to_vec();
    let mut lambdas = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    lambdas.push(0.0);
    points.push(x.clone());
    velocities.push(vel.clone());

    let mut k1x = vec![0.0; n];
    let mut k1v = vec![0.0; n];
    let mut k2x = vec![0.0; n];
    let mut k2v = vec![0.0; n];
    let mut k3x = vec![0.0; n];
    let mut k3v = vec![0.0; n];
    let mut k4x = vec![0.0; n];
    let mut k4v = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut vt = vec![0.0; n];

    for step in 0..steps {
        geodesic_rhs(man, &x, &vel, &mut k1x, &mut k1v)?;
        for i in 0..n {
            xt[i] = x[i] + 0.5 * h * k1x[i];
            vt[i] = vel[i] + 0.5 * h * k1v[i];
        }
        geodesic_rhs(man, &xt, &vt, &mut k2x, &mut k2v)?;
        for i in 0..n {
            xt[i] = x[i] + 0.5 * h * k2x[i];
            vt[i] = vel[i] + 0.5 * h * k2v[i];
        }
        geodesic_rhs(man, &xt, &vt, &mut k3x, &mut k3v)?;
        for i in 0..n {
            xt[i] = x[i] + h * k3x[i];
            vt[i] = vel[i] + h * k3v[i];
        }
        geodesic_rhs(man, &xt, &vt, &mut k4x, &mut k4v)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            vel[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        let lambda = (step + 1) as f64 * h;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalFault {
                context: "exp_map",
                indices: vec![step + 1],
            });
        }
        if !man.in_bounds(&x) {
            return Err(Error::TrajectoryEscapedDomain { exit_lambda: lambda });
        }
        lambdas.push(lambda);
        points.push(x.clone());
        velocities.push(vel.clone());
    }
    // Pin the endpoint parameter exactly.
    *lambdas.last_mut().expect("nonempty") = 1.0;
    Ok(Curve {
        lambdas,
        points,
        velocities,
    })
}

/// Composite Simpson over possibly non-uniform but stored nodes; falls back
/// to a trapezoid on a trailing odd interval.
fn simpson_nodes(lambdas: &[f64], values: &[f64]) -> f64 {
    let m = lambdas.len();
    assert!(m >= 2);
    let mut acc = 0.0;
    let mut k = 0;
    while k + 2 < m {
        let h0 = lambdas[k + 1] - lambdas[k];
        let h1 = lambdas[k + 2] - lambdas[k + 1];
        // Simpson weights generalized to uneven spacing.
        let h = h0 + h1;
        let c0 = h * (2.0 * h0 - h1) / (6.0 * h0);
        let c1 = h * h * h / (6.0 * h0 * h1);
        let c2 = h * (2.0 * h1 - h0) / (6.0 * h1);
        acc += c0 * values[k] + c1 * values[k + 1] + c2 * values[k + 2];
        k += 2;
    }
    if k + 1 < m {
        acc += 0.5 * (lambdas[k + 1] - lambdas[k]) * (values[k] + values[k + 1]);
    }
    acc
}

/// `∫₀¹ ⟨γ̇, γ̇⟩^{1/2}_g dλ` over the stored nodes.
pub fn curve_length<M: SmoothMap>(man: &Manifold<M>, curve: &Curve) -> Result<f64> {
    let mut speeds = Vec::with_capacity(curve.len());
    for k in 0..curve.len() {
        let m = man.metric_at(&curve.points[k])?;
        let s2 = quadratic_form(&m.g, &curve.velocities[k], &curve.velocities[k]);
        speeds.push(s2.max(0.0).sqrt());
    }
    Ok(simpson_nodes(&curve.lambdas, &speeds))
}

/// `⟨γ̇, γ̇⟩^{1/2}_g` at each node.
pub fn speeds_along<M: SmoothMap>(man: &Manifold<M>, curve: &Curve) -> Result<Vec<f64>> {
    (0..curve.len())
        .map(|k| {
            let m = man.metric_at(&curve.points[k])?;
            Ok(quadratic_form(&m.g, &curve.velocities[k], &curve.velocities[k])
                .max(0.0)
                .sqrt())
        })
        .collect()
}

/// Maximum norm of the geodesic-equation residual `γ̈^k + Γ^k_ij γ̇^i γ̇^j`
/// along the curve, with `γ̈` from central differences of the stored
/// velocities. Near zero exactly when the curve is a geodesic.
pub fn covariant_deviation<M: SmoothMap>(man: &Manifold<M>, curve: &Curve) -> Result<f64> {
    assert!(curve.len() >= 3, "covariant_deviation needs >= 3 nodes");
    let n = man.dim();
    let mut worst: f64 = 0.0;
    for k in 1..curve.len() - 1 {
        let dt = curve.lambdas[k + 1] - curve.lambdas[k - 1];
        let chris = man.christoffel_at(&curve.points[k])?;
        let v = &curve.velocities[k];
        let mut norm2 = 0.0;
        for c in 0..n {
            let accel = (curve.velocities[k + 1][c] - curve.velocities[k - 1][c]) / dt;
            let mut gvv = 0.0;
            for i in 0..n {
                for j in 0..n {
                    gvv += chris.gamma[[c, i, j]] * v[i] * v[j];
                }
            }
            let r = accel + gvv;
            norm2 += r * r;
        }
        worst = worst.max(norm2.sqrt());
    }
    Ok(worst)
}

/// Length of the straight intrinsic segment `t ↦ q + (p − q) t` measured in
/// the induced metric: an upper bound on the geodesic distance.
pub fn upper_bound_length<M: SmoothMap>(
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    quad_nodes: usize,
) -> Result<f64> {
    let nodes = quad_nodes.max(3) | 1; // odd node count for Simpson
    let n = man.dim();
    let mut lambdas = Vec::with_capacity(nodes);
    let mut values = Vec::with_capacity(nodes);
    let diff: Vec<f64> = (0..n).map(|i| p[i] - q[i]).collect();
    for s in 0..nodes {
        let t = s as f64 / (nodes - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| q[i] + diff[i] * t).collect();
        if !man.in_bounds(&x) {
            return Err(Error::SegmentEscapedDomain { t });
        }
        let m = man.metric_at(&x)?;
        values.push(quadratic_form(&m.g, &diff, &diff).max(0.0).sqrt());
        lambdas.push(t);
    }
    Ok(simpson_nodes(&lambdas, &values))
}
