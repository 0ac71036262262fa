//! Manifolds as smooth immersions with domain bounds, and the geometric
//! tensors induced by them: metric, Christoffel symbols, Riemann/Ricci
//! curvature and the Ricci scalar.
//!
//! The ambient metric is Euclidean, so the induced metric is `g = JᵀJ` with
//! `J` the immersion Jacobian. Metric partials are assembled analytically
//! from first and second immersion derivatives (product rule), and the
//! Christoffel partials needed for curvature come from one more level of
//! forward-mode nesting — finite differences never enter the curvature
//! pipeline.

use ndarray::{Array2, Array3, Array4};

use crate::diffcore::{
    jacobian_generic, second_derivative_generic, Dual, Scalar, SmoothMap,
};
use crate::error::{Error, Result};

/// One Gaussian of a mixture: weight, mean and (full, SPD) covariance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmComponent {
    pub alpha: f64,
    pub mean: Vec<f64>,
    /// Row-major `n × n` covariance.
    pub cov: Vec<f64>,
}

/// The immersions shipped with the library.
#[derive(Debug, Clone)]
pub enum BuiltinImmersion {
    /// `ι: x ↦ x` on ℝⁿ.
    Euclidean { n: usize },
    /// Unit hypersphere chart with `n` angular coordinates immersed in
    /// ℝ^{n+1}.
    Hypersphere { n: usize },
    /// The two-dimensional peaks surface `(x, y) ↦ (x, y, z(x, y))`.
    Peaks,
    /// Surface of a Gaussian-mixture PDF, `x ↦ (x, p(x))`.
    Gmm {
        components: Vec<GmmComponent>,
        /// Precomputed inverse covariances, row-major per component.
        inv_cov: Vec<Vec<f64>>,
        /// `alpha / ((2π)^{n/2} √det Σ)` per component.
        norm: Vec<f64>,
        n: usize,
    },
}

fn peaks_height<T: Scalar>(x: T, y: T) -> T {
    let c = T::from_f64;
    let one = T::one();
    let a = c(3.0) * (one - x).powi(2) * (-(x * x) - (y + one).powi(2)).exp();
    let b = c(10.0) * (x / c(5.0) - x.powi(3) - y.powi(5)) * (-(x * x) - y * y).exp();
    let d = c(1.0 / 3.0) * (-(x + one).powi(2) - y * y).exp();
    a - b - d
}

impl SmoothMap for BuiltinImmersion {
    fn in_dim(&self) -> usize {
        match self {
            BuiltinImmersion::Euclidean { n } => *n,
            BuiltinImmersion::Hypersphere { n } => *n,
            BuiltinImmersion::Peaks => 2,
            BuiltinImmersion::Gmm { n, .. } => *n,
        }
    }

    fn out_dim(&self) -> usize {
        match self {
            BuiltinImmersion::Euclidean { n } => *n,
            BuiltinImmersion::Hypersphere { n } => *n + 1,
            BuiltinImmersion::Peaks => 3,
            BuiltinImmersion::Gmm { n, .. } => *n + 1,
        }
    }

    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        match self {
            BuiltinImmersion::Euclidean { .. } => out.copy_from_slice(x),
            BuiltinImmersion::Hypersphere { n } => {
                // y_1 = cos x_1, y_k = cos x_k · Π_{i<k} sin x_i,
                // y_{n+1} = Π sin x_i
                let mut sin_prod = T::one();
                for k in 0..*n {
                    out[k] = sin_prod * x[k].cos();
                    sin_prod = sin_prod * x[k].sin();
                }
                out[*n] = sin_prod;
            }
            BuiltinImmersion::Peaks => {
                out[0] = x[0];
                out[1] = x[1];
                out[2] = peaks_height(x[0], x[1]);
            }
            BuiltinImmersion::Gmm {
                components,
                inv_cov,
                norm,
                n,
            } => {
                out[..*n].copy_from_slice(x);
                let mut pdf = T::zero();
                for (c, comp) in components.iter().enumerate() {
                    let mut quad = T::zero();
                    for a in 0..*n {
                        let da = x[a] - T::from_f64(comp.mean[a]);
                        for b in 0..*n {
                            let db = x[b] - T::from_f64(comp.mean[b]);
                            quad = quad + T::from_f64(inv_cov[c][a * n + b]) * da * db;
                        }
                    }
                    pdf = pdf + T::from_f64(norm[c]) * (-quad / T::from_f64(2.0)).exp();
                }
                out[*n] = pdf;
            }
        }
    }
}

/// Structured identity of a builtin manifold, used to validate checkpoints
/// against the manifold they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldSpec {
    Euclidean { n: usize },
    Hypersphere { n: usize },
    Peaks,
    Gmm { components: Vec<GmmComponent> },
}

impl ManifoldSpec {
    pub fn describe(&self) -> String {
        match self {
            ManifoldSpec::Euclidean { n } => format!("euclidean(n={n})"),
            ManifoldSpec::Hypersphere { n } => format!("hypersphere(n={n})"),
            ManifoldSpec::Peaks => "peaks".to_string(),
            ManifoldSpec::Gmm { components } => {
                format!("gmm({} components)", components.len())
            }
        }
    }
}

/// A smooth immersion together with the coordinate box it is trained and
/// evaluated on. Immutable after construction; all geometry operations are
/// pure.
#[derive(Debug, Clone)]
pub struct Manifold<M: SmoothMap = BuiltinImmersion> {
    immersion: M,
    bounds_low: Vec<f64>,
    bounds_high: Vec<f64>,
    name: String,
}

impl<M: SmoothMap> Manifold<M> {
    pub fn from_immersion(
        name: impl Into<String>,
        immersion: M,
        bounds_low: Vec<f64>,
        bounds_high: Vec<f64>,
    ) -> Result<Self> {
        let n = immersion.in_dim();
        let m = immersion.out_dim();
        if n < 1 || m < n {
            return Err(Error::argument(format!(
                "immersion must satisfy 1 <= n <= m, got n={n}, m={m}"
            )));
        }
        if bounds_low.len() != n || bounds_high.len() != n {
            return Err(Error::argument("bounds dimension mismatch"));
        }
        if bounds_low
            .iter()
            .zip(&bounds_high)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::argument("bounds must satisfy low < high"));
        }
        let man = Manifold {
            immersion,
            bounds_low,
            bounds_high,
            name: name.into(),
        };
        // Immersion condition probed at the box centre; the full-rank
        // invariant over random points is exercised in tests.
        let centre = man.centre();
        man.metric_at(&centre)?;
        Ok(man)
    }

    pub fn immersion(&self) -> &M {
        &self.immersion
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.immersion.in_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.immersion.out_dim()
    }

    pub fn bounds_low(&self) -> &[f64] {
        &self.bounds_low
    }

    pub fn bounds_high(&self) -> &[f64] {
        &self.bounds_high
    }

    pub fn centre(&self) -> Vec<f64> {
        self.bounds_low
            .iter()
            .zip(&self.bounds_high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.bounds_low.iter().zip(&self.bounds_high))
                .all(|(v, (l, h))| v.is_finite() && *v >= *l && *v <= *h)
    }

    /// Replace the coordinate box (e.g. a config override).
    pub fn with_bounds(mut self, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != self.dim() || high.len() != self.dim() {
            return Err(Error::argument("bounds dimension mismatch"));
        }
        if low
            .iter()
            .zip(&high)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::argument("bounds must satisfy low < high"));
        }
        self.bounds_low = low;
        self.bounds_high = high;
        Ok(self)
    }

    /// Map a point into the network's standardized cube `[-1, 1]ⁿ`.
    pub fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.dim() {
            let (l, h) = (self.bounds_low[j], self.bounds_high[j]);
            out[j] = (2.0 * x[j] - (h + l)) / (h - l);
        }
    }

    /// `∂(standardized_j)/∂x_j`.
    pub fn standardize_scale(&self, j: usize) -> f64 {
        2.0 / (self.bounds_high[j] - self.bounds_low[j])
    }

    pub fn immerse(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim()];
        self.immersion.eval(x, &mut out);
        out
    }

    /// `‖ι(p) − ι(q)‖₂`, the pullback Euclidean distance.
    pub fn pullback_euclidean(&self, p: &[f64], q: &[f64]) -> f64 {
        let ip = self.immerse(p);
        let iq = self.immerse(q);
        ip.iter()
            .zip(&iq)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Induced metric `g = JᵀJ` and its inverse at `x`.
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricTensor> {
        let n = self.dim();
        let (_, jac) = jacobian_generic::<f64, M>(&self.immersion, x);
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for row in &jac {
                    acc += row[i] * row[j];
                }
                g[i * n + j] = acc;
                g[j * n + i] = acc;
            }
        }
        for (idx, v) in g.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NumericalFault {
                    context: "metric_at",
                    indices: vec![idx / n, idx % n],
                });
            }
        }
        let g_inv = spd_inverse(n, &g).ok_or_else(|| Error::DegenerateMetric {
            point: x.to_vec(),
        })?;
        Ok(MetricTensor {
            g: Array2::from_shape_vec((n, n), g).expect("shape"),
            g_inv: Array2::from_shape_vec((n, n), g_inv).expect("shape"),
            point: x.to_vec(),
        })
    }

    /// Metric and its coordinate partials `∂g_ij/∂x_m`, assembled from first
    /// and second immersion derivatives by the product rule.
    pub fn metric_with_partials(&self, x: &[f64]) -> Result<(Array2<f64>, Array3<f64>)> {
        let n = self.dim();
        let (_, jac) = jacobian_generic::<f64, M>(&self.immersion, x);
        let t2 = second_derivative_generic::<f64, M>(&self.immersion, x);
        let mut g = Array2::zeros((n, n));
        let mut dg = Array3::zeros((n, n, n));
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for row in &jac {
                    acc += row[i] * row[j];
                }
                g[[i, j]] = acc;
                g[[j, i]] = acc;
                for m in 0..n {
                    let mut d = 0.0;
                    for (a, row) in jac.iter().enumerate() {
                        d += t2[a][i][m] * row[j] + row[i] * t2[a][j][m];
                    }
                    dg[[i, j, m]] = d;
                    dg[[j, i, m]] = d;
                }
            }
        }
        if g.iter().any(|v| !v.is_finite()) || dg.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault {
                context: "metric_with_partials",
                indices: vec![],
            });
        }
        Ok((g, dg))
    }

    /// `g_ij v^i w^j` at `x`.
    pub fn inner_product(&self, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        let metric = self.metric_at(x)?;
        Ok(quadratic_form(&metric.g, v, w))
    }

    /// Christoffel symbols of the second kind at `x`.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<ChristoffelSymbols> {
        let n = self.dim();
        let gamma = christoffel_generic::<f64, M>(&self.immersion, x)
            .ok_or_else(|| Error::DegenerateMetric { point: x.to_vec() })?;
        for (idx, v) in gamma.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NumericalFault {
                    context: "christoffel_at",
                    indices: vec![idx / (n * n), (idx / n) % n, idx % n],
                });
            }
        }
        Ok(ChristoffelSymbols {
            gamma: Array3::from_shape_vec((n, n, n), gamma).expect("shape"),
            point: x.to_vec(),
        })
    }

    /// Riemann tensor, Ricci tensor and Ricci scalar at `x`.
    ///
    /// Christoffel partials are obtained by running the Christoffel pipeline
    /// over dual inputs, which pulls third immersion derivatives through one
    /// more nesting level.
    pub fn curvature_at(&self, x: &[f64]) -> Result<CurvatureBundle> {
        let n = self.dim();
        let mut gamma = vec![0.0; n * n * n];
        // dgamma[((k,i,j),m)] = ∂Γ^k_ij / ∂x_m
        let mut dgamma = vec![0.0; n * n * n * n];
        let mut xd: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        for m in 0..n {
            xd[m].dot = 1.0;
            let gd = christoffel_generic::<Dual<f64>, M>(&self.immersion, &xd)
                .ok_or_else(|| Error::DegenerateMetric { point: x.to_vec() })?;
            xd[m].dot = 0.0;
            for (idx, v) in gd.iter().enumerate() {
                if m == 0 {
                    gamma[idx] = v.val;
                }
                dgamma[idx * n + m] = v.dot;
            }
        }
        let ga = |k: usize, i: usize, j: usize| gamma[(k * n + i) * n + j];
        let dga = |k: usize, i: usize, j: usize, m: usize| dgamma[((k * n + i) * n + j) * n + m];

        // R^l_ijk = Γ^l_ik,j − Γ^l_ij,k + Γ^l_jm Γ^m_ik − Γ^l_km Γ^m_ij
        let mut riemann = Array4::zeros((n, n, n, n));
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut v = dga(l, i, k, j) - dga(l, i, j, k);
                        for m in 0..n {
                            v += ga(l, j, m) * ga(m, i, k) - ga(l, k, m) * ga(m, i, j);
                        }
                        riemann[[l, i, j, k]] = v;
                    }
                }
            }
        }
        let mut ricci = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for m in 0..n {
                    v += riemann[[m, i, m, j]];
                }
                ricci[[i, j]] = v;
            }
        }
        let metric = self.metric_at(x)?;
        let mut scalar = 0.0;
        for i in 0..n {
            for j in 0..n {
                scalar += metric.g_inv[[i, j]] * ricci[[i, j]];
            }
        }
        if !scalar.is_finite() || riemann.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault {
                context: "curvature_at",
                indices: vec![],
            });
        }
        Ok(CurvatureBundle {
            riemann,
            ricci,
            scalar,
            point: x.to_vec(),
        })
    }

    /// Ricci scalar only (the curvature-sampling target).
    pub fn ricci_scalar_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.curvature_at(x)?.scalar)
    }
}

impl Manifold<BuiltinImmersion> {
    /// `ι: x ↦ x` on `[-3, 3]ⁿ`.
    pub fn euclidean(n: usize) -> Result<Self> {
        Manifold::from_immersion(
            "euclidean",
            BuiltinImmersion::Euclidean { n },
            vec![-3.0; n],
            vec![3.0; n],
        )
    }

    /// Unit hypersphere with `n` angular coordinates on `[π/6, 5π/6]ⁿ`,
    /// keeping clear of the coordinate singularities at the poles.
    pub fn hypersphere(n: usize) -> Result<Self> {
        use std::f64::consts::PI;
        Manifold::from_immersion(
            "hypersphere",
            BuiltinImmersion::Hypersphere { n },
            vec![PI / 6.0; n],
            vec![5.0 * PI / 6.0; n],
        )
    }

    /// Peaks surface on `[-3, 3]²`.
    pub fn peaks() -> Result<Self> {
        Manifold::from_immersion(
            "peaks",
            BuiltinImmersion::Peaks,
            vec![-3.0; 2],
            vec![3.0; 2],
        )
    }

    /// Gaussian-mixture PDF surface on `[-3, 3]ⁿ`. Weights must sum to one
    /// and covariances must be SPD.
    pub fn gmm(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::argument("gmm needs at least one component"));
        }
        let n = components[0].mean.len();
        if n == 0 {
            return Err(Error::argument("gmm mean dimension must be >= 1"));
        }
        let alpha_sum: f64 = components.iter().map(|c| c.alpha).sum();
        if (alpha_sum - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!(
                "gmm weights must sum to 1, got {alpha_sum}"
            )));
        }
        let mut inv_cov = Vec::with_capacity(components.len());
        let mut norm = Vec::with_capacity(components.len());
        for comp in &components {
            if comp.mean.len() != n || comp.cov.len() != n * n || comp.alpha <= 0.0 {
                return Err(Error::argument("inconsistent gmm component"));
            }
            let chol = cholesky(n, &comp.cov)
                .ok_or_else(|| Error::argument("gmm covariance is not SPD"))?;
            let det: f64 = (0..n).map(|i| chol[i * n + i].powi(2)).product();
            let inv = spd_inverse(n, &comp.cov)
                .ok_or_else(|| Error::argument("gmm covariance is not SPD"))?;
            inv_cov.push(inv);
            norm.push(
                comp.alpha / ((2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * det.sqrt()),
            );
        }
        Manifold::from_immersion(
            "gmm",
            BuiltinImmersion::Gmm {
                components,
                inv_cov,
                norm,
                n,
            },
            vec![-3.0; n],
            vec![3.0; n],
        )
    }

    /// Construct a builtin by name. `gmm` requires component parameters.
    pub fn builtin(
        name: &str,
        n: usize,
        gmm_components: Option<Vec<GmmComponent>>,
    ) -> Result<Self> {
        match name {
            "euclidean" => Self::euclidean(n),
            "hypersphere" => Self::hypersphere(n),
            "peaks" => {
                if n != 2 {
                    return Err(Error::argument("peaks is two-dimensional"));
                }
                Self::peaks()
            }
            "gmm" => {
                let comps = gmm_components
                    .ok_or_else(|| Error::argument("gmm requires component parameters"))?;
                if n != 2 || comps.iter().any(|c| c.mean.len() != 2) {
                    return Err(Error::argument("gmm manifold is two-dimensional here"));
                }
                Self::gmm(comps)
            }
            other => Err(Error::argument(format!("unknown manifold '{other}'"))),
        }
    }

    pub fn spec(&self) -> ManifoldSpec {
        match &self.immersion {
            BuiltinImmersion::Euclidean { n } => ManifoldSpec::Euclidean { n: *n },
            BuiltinImmersion::Hypersphere { n } => ManifoldSpec::Hypersphere { n: *n },
            BuiltinImmersion::Peaks => ManifoldSpec::Peaks,
            BuiltinImmersion::Gmm { components, .. } => ManifoldSpec::Gmm {
                components: components.clone(),
            },
        }
    }

    /// Rebuild a manifold from its checkpointed identity and bounds.
    pub fn from_spec(spec: &ManifoldSpec, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let man = match spec {
            ManifoldSpec::Euclidean { n } => Self::euclidean(*n)?,
            ManifoldSpec::Hypersphere { n } => Self::hypersphere(*n)?,
            ManifoldSpec::Peaks => Self::peaks()?,
            ManifoldSpec::Gmm { components } => Self::gmm(components.clone())?,
        };
        man.with_bounds(low, high)
    }
}

/// Analytic geodesic distance on the unit hypersphere from the cosine rule.
pub fn cosine_rule_distance<M: SmoothMap>(man: &Manifold<M>, p: &[f64], q: &[f64]) -> f64 {
    let ip = man.immerse(p);
    let iq = man.immerse(q);
    let dot: f64 = ip.iter().zip(&iq).map(|(a, b)| a * b).sum();
    dot.clamp(-1.0, 1.0).acos()
}

/// Pointwise induced metric and its inverse.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    pub g: Array2<f64>,
    pub g_inv: Array2<f64>,
    pub point: Vec<f64>,
}

/// Γ^k_ij, index order `(k, i, j)`, exactly symmetric in `(i, j)`.
#[derive(Debug, Clone)]
pub struct ChristoffelSymbols {
    pub gamma: Array3<f64>,
    pub point: Vec<f64>,
}

/// Riemann tensor `R^l_ijk`, Ricci tensor and Ricci scalar at a point.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub riemann: Array4<f64>,
    pub ricci: Array2<f64>,
    pub scalar: f64,
    pub point: Vec<f64>,
}

pub(crate) fn quadratic_form(g: &Array2<f64>, v: &[f64], w: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[[i, j]] * v[i] * w[j];
        }
    }
    acc
}

/// Γ over any scalar type; used directly for Christoffel values and with a
/// dual base scalar for the Christoffel partials in the curvature tensor.
/// Returns row-major `(k, i, j)`, or `None` if the metric is degenerate.
pub(crate) fn christoffel_generic<T: Scalar, M: SmoothMap>(
    immersion: &M,
    x: &[T],
) -> Option<Vec<T>> {
    let n = immersion.in_dim();
    let (_, jac) = jacobian_generic::<T, M>(immersion, x);
    let t2 = second_derivative_generic::<T, M>(immersion, x);

    // g_ij and its partials g_ij,m via the product rule on JᵀJ.
    let mut g = vec![T::zero(); n * n];
    let mut dg = vec![T::zero(); n * n * n]; // (i, j, m) = ∂g_ij/∂x_m
    for i in 0..n {
        for j in i..n {
            let mut acc = T::zero();
            for row in &jac {
                acc = acc + row[i] * row[j];
            }
            g[i * n + j] = acc;
            g[j * n + i] = acc;
            for m in 0..n {
                let mut d = T::zero();
                for (a, row) in jac.iter().enumerate() {
                    d = d + t2[a][i][m] * row[j] + row[i] * t2[a][j][m];
                }
                dg[(i * n + j) * n + m] = d;
                dg[(j * n + i) * n + m] = d;
            }
        }
    }
    let g_inv = spd_inverse_generic(n, &g)?;

    let dgi = |i: usize, j: usize, m: usize| dg[(i * n + j) * n + m];
    let mut gamma = vec![T::zero(); n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for m in 0..n {
                    let term = dgi(m, i, j) + dgi(m, j, i) - dgi(i, j, m);
                    acc = acc + g_inv[k * n + m] * term;
                }
                let v = acc / T::from_f64(2.0);
                gamma[(k * n + i) * n + j] = v;
                gamma[(k * n + j) * n + i] = v;
            }
        }
    }
    Some(gamma)
}

/// Cholesky factor (lower triangular, row-major) of an SPD matrix, generic
/// over the scalar. Positivity is checked on the primal part.
pub(crate) fn cholesky_generic<T: Scalar>(n: usize, a: &[T]) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                let pivot = sum.value();
                if !(pivot.is_finite() && pivot > 0.0) {
                    return None;
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    cholesky_generic::<f64>(n, a)
}

/// Inverse of an SPD matrix via its Cholesky factor, generic over the
/// scalar. Returns `None` on a non-positive pivot.
pub(crate) fn spd_inverse_generic<T: Scalar>(n: usize, a: &[T]) -> Option<Vec<T>> {
    let l = cholesky_generic(n, a)?;
    // Solve L y = e_k, then Lᵀ x = y, column by column.
    let mut inv = vec![T::zero(); n * n];
    let mut y = vec![T::zero(); n];
    let mut xcol = vec![T::zero(); n];
    for col in 0..n {
        for i in 0..n {
            let mut sum = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                sum = sum - l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        for ii in (0..n).rev() {
            let mut sum = y[ii];
            for k in (ii + 1)..n {
                sum = sum - l[k * n + ii] * xcol[k];
            }
            xcol[ii] = sum / l[ii * n + ii];
        }
        for i in 0..n {
            inv[i * n + col] = xcol[i];
        }
    }
    // Symmetrize exactly: the factorization already is, up to rounding.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = inv[i * n + j];
            inv[j * n + i] = v;
        }
    }
    Some(inv)
}

fn spd_inverse(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    spd_inverse_generic::<f64>(n, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_interior(man: &Manifold, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..man.dim())
            .map(|j| {
                let (l, h) = (man.bounds_low()[j], man.bounds_high()[j]);
                let pad = 0.05 * (h - l);
                rng.gen_range(l + pad..h - pad)
            })
            .collect()
    }

    #[test]
    fn euclidean_metric_is_identity() {
        let man = Manifold::euclidean(3).unwrap();
        let m = man.metric_at(&[0.5, -1.0, 2.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(m.g[[i, j]], expect);
            }
        }
    }

    #[test]
    fn sphere_metric_matches_closed_form() {
        let man = Manifold::hypersphere(2).unwrap();
        let m = man.metric_at(&[PI / 2.0, 0.7]).unwrap();
        assert!((m.g[[0, 0]] - 1.0).abs() < 1e-14);
        assert!((m.g[[1, 1]] - 1.0).abs() < 1e-14);
        assert!(m.g[[0, 1]].abs() < 1e-14);
        // g = diag(1, sin² x₁)
        let m2 = man.metric_at(&[PI / 6.0, 1.2]).unwrap();
        assert!((m2.g[[1, 1]] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn sphere_immersion_matches_appendix_formulas() {
        let man = Manifold::hypersphere(2).unwrap();
        let y = man.immerse(&[PI / 2.0, 0.0]);
        assert!((y[0] - 0.0).abs() < 1e-15);
        assert!((y[1] - 1.0).abs() < 1e-15);
        assert!((y[2] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_jacobian_at_quarter_point() {
        let man = Manifold::hypersphere(2).unwrap();
        let j = crate::diffcore::jacobian(man.immersion(), &[PI / 2.0, 0.0]).unwrap();
        let expect = [[-1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        for r in 0..3 {
            for c in 0..2 {
                assert!((j[[r, c]] - expect[r][c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn peaks_height_at_origin() {
        let man = Manifold::peaks().unwrap();
        let y = man.immerse(&[0.0, 0.0]);
        let expect = 3.0 * (-1.0f64).exp() - (1.0 / 3.0) * (-1.0f64).exp();
        assert!((y[2] - expect).abs() < 1e-12);
        assert!((y[2] - 0.98101184312384615).abs() < 1e-10);
    }

    #[test]
    fn peaks_jacobian_matches_finite_differences() {
        let man = Manifold::peaks().unwrap();
        let x = [0.0, 0.0];
        let j = crate::diffcore::jacobian(man.immersion(), &x).unwrap();
        let h = 1e-5;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let zp = man.immerse(&xp)[2];
            let zm = man.immerse(&xm)[2];
            let fd = (zp - zm) / (2.0 * h);
            assert!(
                (j[[2, c]] - fd).abs() < 1e-6,
                "col {c}: {} vs fd {fd}",
                j[[2, c]]
            );
        }
    }

    #[test]
    fn gmm_single_component_at_mean() {
        let man = Manifold::gmm(vec![GmmComponent {
            alpha: 1.0,
            mean: vec![0.0, 0.0],
            cov: vec![1.0, 0.0, 0.0, 1.0],
        }])
        .unwrap();
        let y = man.immerse(&[0.0, 0.0]);
        assert!((y[2] - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gmm_rejects_bad_weights() {
        let err = Manifold::gmm(vec![GmmComponent {
            alpha: 0.7,
            mean: vec![0.0, 0.0],
            cov: vec![1.0, 0.0, 0.0, 1.0],
        }]);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_builtin_is_rejected() {
        assert!(Manifold::builtin("torus", 2, None).is_err());
    }

    #[test]
    fn inner_product_euclidean_reduces_to_dot() {
        let man = Manifold::euclidean(2).unwrap();
        let v = [3.0, 4.0];
        let ip = man.inner_product(&[0.1, 0.2], &v, &v).unwrap();
        assert!((ip - 25.0).abs() < 1e-14);
        let zero = man.inner_product(&[0.1, 0.2], &v, &[0.0, 0.0]).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn inner_product_sphere_equator() {
        let man = Manifold::hypersphere(2).unwrap();
        let ip = man
            .inner_product(&[PI / 2.0, 0.7], &[0.0, 1.0], &[0.0, 1.0])
            .unwrap();
        assert!((ip - 1.0).abs() < 1e-14);
    }

    #[test]
    fn euclidean_christoffel_is_exactly_zero() {
        let man = Manifold::euclidean(2).unwrap();
        let c = man.christoffel_at(&[1.0, -2.0]).unwrap();
        assert!(c.gamma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sphere_christoffel_matches_closed_form() {
        let man = Manifold::hypersphere(2).unwrap();
        let x1 = PI / 3.0;
        let c = man.christoffel_at(&[x1, 1.0]).unwrap();
        let g = &c.gamma;
        // Γ¹₂₂ = −sin x₁ cos x₁, Γ²₁₂ = Γ²₂₁ = cot x₁, others zero
        assert!((g[[0, 1, 1]] - (-(x1.sin() * x1.cos()))).abs() < 1e-12);
        assert!((g[[1, 0, 1]] - x1.cos() / x1.sin()).abs() < 1e-12);
        assert_eq!(g[[1, 0, 1]], g[[1, 1, 0]]);
        assert!(g[[0, 0, 0]].abs() < 1e-13);
        assert!(g[[0, 0, 1]].abs() < 1e-13);
        assert!(g[[1, 0, 0]].abs() < 1e-13);
        assert!(g[[1, 1, 1]].abs() < 1e-13);
    }

    #[test]
    fn peaks_christoffel_matches_finite_difference_assembly() {
        let man = Manifold::peaks().unwrap();
        let x = [0.5, 0.5];
        let c = man.christoffel_at(&x).unwrap();
        // Assemble Γ from centred finite differences of the metric.
        let n = 2;
        let h = 1e-5;
        let m0 = man.metric_at(&x).unwrap();
        let mut dg = vec![0.0; n * n * n];
        for m in 0..n {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            let gp = man.metric_at(&xp).unwrap().g;
            let gm = man.metric_at(&xm).unwrap().g;
            for i in 0..n {
                for j in 0..n {
                    dg[(i * n + j) * n + m] = (gp[[i, j]] - gm[[i, j]]) / (2.0 * h);
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += m0.g_inv[[k, m]]
                            * (dg[(m * n + i) * n + j] + dg[(m * n + j) * n + i]
                                - dg[(i * n + j) * n + m]);
                    }
                    let fd = 0.5 * acc;
                    assert!(
                        (c.gamma[[k, i, j]] - fd).abs() < 1e-5,
                        "Γ^{k}_{i}{j}: {} vs fd {fd}",
                        c.gamma[[k, i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn euclidean_curvature_is_zero() {
        let man = Manifold::euclidean(2).unwrap();
        let c = man.curvature_at(&[0.3, 0.4]).unwrap();
        assert_eq!(c.scalar, 0.0);
        assert!(c.riemann.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hypersphere_ricci_scalar_is_n_n_minus_1() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 5] {
            let man = Manifold::hypersphere(n).unwrap();
            for _ in 0..10 {
                let x = random_interior(&man, &mut rng);
                let c = man.curvature_at(&x).unwrap();
                let expect = (n * (n - 1)) as f64;
                assert!(
                    (c.scalar - expect).abs() < 1e-5,
                    "S^{n} scalar {} at {x:?}",
                    c.scalar
                );
            }
        }
    }

    #[test]
    fn riemann_antisymmetry_in_last_two_indices() {
        let man = Manifold::peaks().unwrap();
        let c = man.curvature_at(&[0.8, -0.4]).unwrap();
        let n = 2;
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        assert!(
                            (c.riemann[[l, i, j, k]] + c.riemann[[l, i, k, j]]).abs() < 1e-8
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn metric_is_spd_with_accurate_inverse_on_all_builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let manifolds = vec![
            Manifold::euclidean(2).unwrap(),
            Manifold::hypersphere(2).unwrap(),
            Manifold::peaks().unwrap(),
            Manifold::gmm(vec![
                GmmComponent {
                    alpha: 0.5,
                    mean: vec![0.8, -0.3],
                    cov: vec![0.5, 0.1, 0.1, 0.4],
                },
                GmmComponent {
                    alpha: 0.5,
                    mean: vec![-0.6, 0.7],
                    cov: vec![0.3, 0.0, 0.0, 0.6],
                },
            ])
            .unwrap(),
        ];
        for man in &manifolds {
            for _ in 0..100 {
                let x = random_interior(man, &mut rng);
                let m = man.metric_at(&x).unwrap();
                let n = man.dim();
                // SPD: Cholesky succeeded inside metric_at; check g·g⁻¹ ≈ I.
                let prod = m.g.dot(&m.g_inv);
                for i in 0..n {
                    for j in 0..n {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (prod[[i, j]] - expect).abs() < 1e-10,
                            "{}: g·g⁻¹ off at {x:?}",
                            man.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cosine_rule_distance_is_symmetric_and_zero_on_diagonal() {
        let man = Manifold::hypersphere(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_interior(&man, &mut rng);
            let q = random_interior(&man, &mut rng);
            let d1 = cosine_rule_distance(&man, &p, &q);
            let d2 = cosine_rule_distance(&man, &q, &p);
            assert!((d1 - d2).abs() < 1e-14);
            assert!(cosine_rule_distance(&man, &p, &p) < 1e-7);
        }
    }

    #[test]
    fn bounds_override_validates() {
        let man = Manifold::euclidean(2).unwrap();
        assert!(man
            .clone()
            .with_bounds(vec![-1.0, -1.0], vec![1.0, 1.0])
            .is_ok());
        let man2 = Manifold::euclidean(2).unwrap();
        assert!(man2.with_bounds(vec![1.0, 1.0], vec![-1.0, -1.0]).is_err());
    }
}
