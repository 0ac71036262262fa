//! Metric-constrained Eikonal distance models.
//!
//! The network output `φ̃_θ` is never the distance itself. It is wrapped in
//! an output augmentation built from the pullback Euclidean distance
//! `ι*d_E(p, q) = ‖ι(p) − ι(q)‖₂`:
//!
//! - single-point: `φ = ι*d_E · [1 + σ(φ̃_θ(q))]`, source `p` baked in,
//! - global:       `φ = ι*d_E · [1 + σ(½(φ̃_θ(p,q) + φ̃_θ(q,p)))]`,
//! - upper-bounded: `φ = ι*d_E + (L⁺ − ι*d_E) · sig(½(φ̃_θ(p,q) + φ̃_θ(q,p)))`
//!   with `L⁺` the straight-segment length.
//!
//! With `σ` strictly positive (softplus) these give `φ(p,p) = 0`, `φ ≥ 0`,
//! symmetry for the global kinds and `φ ≥ ι*d_E` for *any* parameter values;
//! the upper-bounded kind additionally keeps `φ ≤ L⁺`. Training only has to
//! shape the distance, never to restore the axioms.
//!
//! Training minimises the squared residual of
//! `g^{ij}(q) ∂φ/∂q_i ∂φ/∂q_j = 1` over sampled pairs. For the symmetrised
//! global kinds the residual in `q` suffices: the `p`-side equation is the
//! same statement under the swap.

use ndarray::{Array1, Array2};

use crate::diffcore::{Dual, Scalar, SmoothMap};
use crate::error::{Error, Result};
use crate::manifold::{quadratic_form, BuiltinImmersion, Manifold};
use crate::network::{
    self, engine, MlpArchitecture, MlpParameters, OptimizerState,
};
use crate::sampling::{PointSource, SamplerConfig};

/// Pairs closer than this in pullback distance are treated as diagonal:
/// `ι*d_E` is not differentiable at `p = q`.
pub const EPS_DIAG: f64 = 1e-6;

/// Which output augmentation a model uses.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationKind {
    /// Distance from a fixed source point.
    SinglePoint { source: Vec<f64> },
    Global,
    GlobalUpperBounded { quad_nodes: usize },
}

impl AugmentationKind {
    pub fn network_input_dim(&self, manifold_dim: usize) -> usize {
        match self {
            AugmentationKind::SinglePoint { .. } => manifold_dim,
            _ => 2 * manifold_dim,
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            AugmentationKind::SinglePoint { .. } => "single-point",
            AugmentationKind::Global => "global",
            AugmentationKind::GlobalUpperBounded { .. } => "global-upper",
        }
    }
}

/// The nonnegative link `σ`. Softplus for the lower-bounded kinds, sigmoid
/// for the upper-bounded kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    Softplus,
    Sigmoid,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl SigmaKind {
    /// (σ, σ', σ'')
    pub fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            SigmaKind::Softplus => {
                let value = if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                };
                let s = stable_sigmoid(x);
                (value, s, s * (1.0 - s))
            }
            SigmaKind::Sigmoid => {
                let s = stable_sigmoid(x);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
        }
    }
}

/// Anything that behaves like a geodesic distance function: the neural
/// models, and the analytic oracles used as ground truth in tests and
/// evaluation.
pub trait GeodesicDistance: Send + Sync {
    fn dim(&self) -> usize;
    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64>;
    /// `∂φ/∂q_j` (covariant components).
    fn grad_q(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>>;
    /// `∂φ/∂p_j`.
    fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>>;

    /// Batched distances; neural models override this with the engine path.
    fn distance_many(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        pairs.iter().map(|(p, q)| self.distance(p, q)).collect()
    }

    /// Batched `(φ, ∂φ/∂p)`. Pairs on the diagonal report a zero gradient
    /// (the subgradient of φ² vanishes there, which is what the Fréchet
    /// objective needs).
    fn distance_and_grad_p_many(
        &self,
        pairs: &[(&[f64], &[f64])],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        pairs
            .iter()
            .map(|(p, q)| {
                let d = self.distance(p, q)?;
                match self.grad_p(p, q) {
                    Ok(g) => Ok((d, g)),
                    Err(Error::DiagonalSample { .. }) => Ok((d, vec![0.0; self.dim()])),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

/// `ι*d_E`: the constructive lower bound on geodesic distance.
pub fn pullback_euclidean<M: SmoothMap>(man: &Manifold<M>, p: &[f64], q: &[f64]) -> f64 {
    man.pullback_euclidean(p, q)
}

/// Eikonal residual `g^{ij}(q) φ_,i φ_,j − 1` of any distance function.
pub fn eikonal_residual_of<M: SmoothMap>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
) -> Result<f64> {
    if man.pullback_euclidean(p, q) < EPS_DIAG {
        return Err(Error::DiagonalSample { epsilon: EPS_DIAG });
    }
    let grad = dist.grad_q(p, q)?;
    let metric = man.metric_at(q)?;
    Ok(quadratic_form(&metric.g_inv, &grad, &grad) - 1.0)
}

/// Mean squared Eikonal residual of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EikonalLoss {
    pub residual_mse: f64,
    pub batch_size: usize,
}

/// Loss trace row: `(update, loss, lr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub update: usize,
    pub loss: f64,
    pub lr: f64,
}

pub fn history_to_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("update,loss,lr\n");
    for rec in history {
        out.push_str(&format!(
            "{},{},{}\n",
            rec.update,
            crate::io::fmt_f64(rec.loss),
            crate::io::fmt_f64(rec.lr)
        ));
    }
    out
}

/// A trained (or untrained) neural distance function on a manifold.
#[derive(Debug, Clone)]
pub struct DistanceModel<M: SmoothMap = BuiltinImmersion> {
    params: MlpParameters,
    manifold: Manifold<M>,
    kind: AugmentationKind,
    sigma: SigmaKind,
}

impl<M: SmoothMap> DistanceModel<M> {
    pub fn new(params: MlpParameters, manifold: Manifold<M>, kind: AugmentationKind) -> Result<Self> {
        let expected = kind.network_input_dim(manifold.dim());
        if params.arch.input_dim != expected {
            return Err(Error::argument(format!(
                "network input_dim {} does not match augmentation ({expected})",
                params.arch.input_dim
            )));
        }
        if let AugmentationKind::SinglePoint { source } = &kind {
            if !manifold.in_bounds(source) {
                return Err(Error::OutOfBounds {
                    point: source.clone(),
                });
            }
        }
        let sigma = match kind {
            AugmentationKind::GlobalUpperBounded { .. } => SigmaKind::Sigmoid,
            _ => SigmaKind::Softplus,
        };
        Ok(DistanceModel {
            params,
            manifold,
            kind,
            sigma,
        })
    }

    /// Fresh Glorot-initialised model.
    pub fn init(
        manifold: Manifold<M>,
        kind: AugmentationKind,
        width: usize,
        depth: usize,
        fourier_features: usize,
        seed: u64,
    ) -> Result<Self> {
        let arch = MlpArchitecture {
            input_dim: kind.network_input_dim(manifold.dim()),
            width,
            depth,
            fourier_features,
        };
        let params = network::init(arch, seed)?;
        DistanceModel::new(params, manifold, kind)
    }

    pub fn params(&self) -> &MlpParameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MlpParameters {
        &mut self.params
    }

    pub fn manifold(&self) -> &Manifold<M> {
        &self.manifold
    }

    pub fn kind(&self) -> &AugmentationKind {
        &self.kind
    }

    pub fn sigma(&self) -> SigmaKind {
        self.sigma
    }

    fn check_pair(&self, p: &[f64], q: &[f64]) -> Result<()> {
        if !self.manifold.in_bounds(p) {
            return Err(Error::OutOfBounds { point: p.to_vec() });
        }
        if !self.manifold.in_bounds(q) {
            return Err(Error::OutOfBounds { point: q.to_vec() });
        }
        if let AugmentationKind::SinglePoint { source } = &self.kind {
            let drift = source
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift > 1e-9 {
                return Err(Error::argument(
                    "single-point model queried away from its baked-in source",
                ));
            }
        }
        Ok(())
    }

    /// Symmetrised pre-activation and its network evaluation plan for one
    /// chunk of pairs. Returns per-pair `(s, ds/dq)` given the already-run
    /// engine passes.
    fn network_inputs(&self, pairs: &[(&[f64], &[f64])]) -> (Array2<f64>, Option<Array2<f64>>) {
        let n = self.manifold.dim();
        let b = pairs.len();
        match &self.kind {
            AugmentationKind::SinglePoint { .. } => {
                let mut xs = Array2::zeros((b, n));
                let mut buf = vec![0.0; n];
                for (row, (_, q)) in pairs.iter().enumerate() {
                    self.manifold.standardize(q, &mut buf);
                    for j in 0..n {
                        xs[[row, j]] = buf[j];
                    }
                }
                (xs, None)
            }
            _ => {
                let mut xa = Array2::zeros((b, 2 * n));
                let mut xb = Array2::zeros((b, 2 * n));
                let mut sp = vec![0.0; n];
                let mut sq = vec![0.0; n];
                for (row, (p, q)) in pairs.iter().enumerate() {
                    self.manifold.standardize(p, &mut sp);
                    self.manifold.standardize(q, &mut sq);
                    for j in 0..n {
                        xa[[row, j]] = sp[j];
                        xa[[row, n + j]] = sq[j];
                        xb[[row, j]] = sq[j];
                        xb[[row, n + j]] = sp[j];
                    }
                }
                (xa, Some(xb))
            }
        }
    }

    fn seed_scales(&self) -> Vec<f64> {
        (0..self.manifold.dim())
            .map(|j| self.manifold.standardize_scale(j))
            .collect()
    }

    /// φ for many pairs, value-only path.
    pub fn distance_batch(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        for (p, q) in pairs {
            self.check_pair(p, q)?;
        }
        let out = crate::parallel::map_chunks(pairs.len(), 256, |range| {
            let chunk = &pairs[range];
            self.distance_chunk(chunk)
        });
        let mut phi = Vec::with_capacity(pairs.len());
        for part in out {
            phi.extend(part?);
        }
        Ok(phi)
    }

    fn distance_chunk(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        let (xa, xb) = self.network_inputs(pairs);
        let va = engine::forward_values(&self.params, xa.view());
        let s: Array1<f64> = match xb {
            Some(xb) => {
                let vb = engine::forward_values(&self.params, xb.view());
                (va + vb) * 0.5
            }
            None => va,
        };
        pairs
            .iter()
            .zip(s.iter())
            .map(|((p, q), s)| self.augment(p, q, *s))
            .collect()
    }

    /// Apply the output augmentation to a pre-activation value.
    fn augment(&self, p: &[f64], q: &[f64], s: f64) -> Result<f64> {
        let de = self.manifold.pullback_euclidean(p, q);
        let (sig, _, _) = self.sigma.eval(s);
        match &self.kind {
            AugmentationKind::GlobalUpperBounded { quad_nodes } => {
                if de == 0.0 {
                    return Ok(0.0);
                }
                let (lp, _, _) = upper_bound_canonical(&self.manifold, p, q, *quad_nodes, false)?;
                let lp = lp.max(de);
                Ok(de + (lp - de) * sig)
            }
            _ => Ok(de * (1.0 + sig)),
        }
    }

    /// φ and `∂φ/∂q` for one pair.
    pub fn distance_with_grad_q(&self, p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_pair(p, q)?;
        let n = self.manifold.dim();
        let de = self.manifold.pullback_euclidean(p, q);
        if de < EPS_DIAG {
            return Err(Error::DiagonalSample { epsilon: EPS_DIAG });
        }
        let pair = [(p, q)];
        let (xa, xb) = self.network_inputs(&pair);
        let scales = self.seed_scales();
        let (s, ds): (f64, Vec<f64>) = match xb {
            Some(xb) => {
                let seeds_a: Vec<(usize, f64)> = (0..n).map(|j| (n + j, scales[j])).collect();
                let seeds_b: Vec<(usize, f64)> = (0..n).map(|j| (j, scales[j])).collect();
                let (_, va, ta) = engine::forward_batch(&self.params, xa.view(), &seeds_a);
                let (_, vb, tb) = engine::forward_batch(&self.params, xb.view(), &seeds_b);
                let s = 0.5 * (va[0] + vb[0]);
                let ds = (0..n).map(|j| 0.5 * (ta[[0, j]] + tb[[0, j]])).collect();
                (s, ds)
            }
            None => {
                let seeds: Vec<(usize, f64)> = (0..n).map(|j| (j, scales[j])).collect();
                let (_, va, ta) = engine::forward_batch(&self.params, xa.view(), &seeds);
                (va[0], (0..n).map(|j| ta[[0, j]]).collect())
            }
        };
        let geo = self.pair_geometry(p, q, de)?;
        let (sig, dsig, _) = self.sigma.eval(s);
        let mut grad = vec![0.0; n];
        let phi = match &self.kind {
            AugmentationKind::GlobalUpperBounded { .. } => {
                let lp = geo.lplus.expect("upper geometry");
                let dlp = geo.dlplus_dq.as_ref().expect("upper geometry");
                for j in 0..n {
                    grad[j] =
                        geo.dde_dq[j] + (dlp[j] - geo.dde_dq[j]) * sig + (lp - de) * dsig * ds[j];
                }
                de + (lp - de) * sig
            }
            _ => {
                for j in 0..n {
                    grad[j] = geo.dde_dq[j] * (1.0 + sig) + de * dsig * ds[j];
                }
                de * (1.0 + sig)
            }
        };
        Ok((phi, grad))
    }

    fn pair_geometry(&self, p: &[f64], q: &[f64], de: f64) -> Result<PairGeometry> {
        let n = self.manifold.dim();
        let ip = self.manifold.immerse(p);
        let iq = self.manifold.immerse(q);
        let jq = crate::diffcore::jacobian(self.manifold.immersion(), q)?;
        let mut dde = vec![0.0; n];
        for j in 0..n {
            let mut acc = 0.0;
            for a in 0..self.manifold.ambient_dim() {
                acc += (iq[a] - ip[a]) * jq[[a, j]];
            }
            dde[j] = acc / de;
        }
        let (lplus, dlplus) = match &self.kind {
            AugmentationKind::GlobalUpperBounded { quad_nodes } => {
                let (lp, _, grad_q) = upper_bound_canonical(&self.manifold, p, q, *quad_nodes, true)?;
                let lp_clamped = lp.max(de);
                let grad = if lp >= de {
                    grad_q.expect("gradient requested")
                } else {
                    dde.clone()
                };
                (Some(lp_clamped), Some(grad))
            }
            _ => (None, None),
        };
        Ok(PairGeometry {
            de,
            dde_dq: dde,
            lplus,
            dlplus_dq: dlplus,
        })
    }

    /// Residual of the metric-constrained Eikonal equation at `q`.
    pub fn eikonal_residual(&self, p: &[f64], q: &[f64]) -> Result<f64>
    where
        M: Clone,
    {
        let de = self.manifold.pullback_euclidean(p, q);
        if de < EPS_DIAG {
            return Err(Error::DiagonalSample { epsilon: EPS_DIAG });
        }
        let (_, grad) = self.distance_with_grad_q(p, q)?;
        let metric = self.manifold.metric_at(q)?;
        Ok(quadratic_form(&metric.g_inv, &grad, &grad) - 1.0)
    }

    /// Batched `(φ, ∂φ/∂q)` over pairs. Diagonal pairs report `(0, 0)`
    /// rather than erroring, which is the subgradient the squared-distance
    /// objectives need.
    pub fn distance_with_grad_q_batch(
        &self,
        pairs: &[(&[f64], &[f64])],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        for (p, q) in pairs {
            self.check_pair(p, q)?;
        }
        let parts = crate::parallel::map_chunks(pairs.len(), 256, |range| {
            self.grads_chunk(&pairs[range])
        });
        let mut out = Vec::with_capacity(pairs.len());
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }

    fn grads_chunk(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<(f64, Vec<f64>)>> {
        let n = self.manifold.dim();
        let scales = self.seed_scales();
        let (xa, xb) = self.network_inputs(pairs);
        let is_global = xb.is_some();
        let seeds_a: Vec<(usize, f64)> = if is_global {
            (0..n).map(|j| (n + j, scales[j])).collect()
        } else {
            (0..n).map(|j| (j, scales[j])).collect()
        };
        let (_, va, ta) = engine::forward_batch(&self.params, xa.view(), &seeds_a);
        let pass_b = xb.map(|xb| {
            let seeds_b: Vec<(usize, f64)> = (0..n).map(|j| (j, scales[j])).collect();
            let (_, vb, tb) = engine::forward_batch(&self.params, xb.view(), &seeds_b);
            (vb, tb)
        });
        let mut out = Vec::with_capacity(pairs.len());
        for (row, (p, q)) in pairs.iter().enumerate() {
            let de = self.manifold.pullback_euclidean(p, q);
            if de < EPS_DIAG {
                out.push((0.0, vec![0.0; n]));
                continue;
            }
            let (s, ds): (f64, Vec<f64>) = match &pass_b {
                Some((vb, tb)) => (
                    0.5 * (va[row] + vb[row]),
                    (0..n)
                        .map(|j| 0.5 * (ta[[row, j]] + tb[[row, j]]))
                        .collect(),
                ),
                None => (va[row], (0..n).map(|j| ta[[row, j]]).collect()),
            };
            let geo = self.pair_geometry(p, q, de)?;
            let (sig, dsig, _) = self.sigma.eval(s);
            let mut grad = vec![0.0; n];
            let phi = match &self.kind {
                AugmentationKind::GlobalUpperBounded { .. } => {
                    let lp = geo.lplus.expect("upper geometry");
                    let dlp = geo.dlplus_dq.as_ref().expect("upper geometry");
                    for j in 0..n {
                        grad[j] = geo.dde_dq[j]
                            + (dlp[j] - geo.dde_dq[j]) * sig
                            + (lp - de) * dsig * ds[j];
                    }
                    de + (lp - de) * sig
                }
                _ => {
                    for j in 0..n {
                        grad[j] = geo.dde_dq[j] * (1.0 + sig) + de * dsig * ds[j];
                    }
                    de * (1.0 + sig)
                }
            };
            out.push((phi, grad));
        }
        Ok(out)
    }

    /// Mean squared residual of a batch and its exact parameter gradient.
    pub fn loss_and_grad(&self, pairs: &[(&[f64], &[f64])]) -> Result<(EikonalLoss, Vec<f64>)> {
        assert!(!pairs.is_empty(), "loss needs a nonempty batch");
        for (p, q) in pairs {
            self.check_pair(p, q)?;
            if self.manifold.pullback_euclidean(p, q) < EPS_DIAG {
                return Err(Error::DiagonalSample { epsilon: EPS_DIAG });
            }
        }
        let parts = crate::parallel::map_chunks(pairs.len(), 256, |range| {
            self.loss_chunk(&pairs[range])
        });
        let mut sum_sq = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for part in parts {
            let (chunk_sq, chunk_grad) = part?;
            sum_sq += chunk_sq;
            for (g, c) in grad.iter_mut().zip(chunk_grad) {
                *g += c;
            }
        }
        let b = pairs.len() as f64;
        for g in grad.iter_mut() {
            *g /= b;
        }
        Ok((
            EikonalLoss {
                residual_mse: sum_sq / b,
                batch_size: pairs.len(),
            },
            grad,
        ))
    }

    /// Sum of squared residuals over one chunk plus the gradient of that sum.
    fn loss_chunk(&self, pairs: &[(&[f64], &[f64])]) -> Result<(f64, Vec<f64>)> {
        let n = self.manifold.dim();
        let b = pairs.len();
        let scales = self.seed_scales();
        let (xa, xb) = self.network_inputs(pairs);

        // geometry per pair
        let mut geos = Vec::with_capacity(b);
        let mut ginvs = Vec::with_capacity(b);
        for (p, q) in pairs {
            let de = self.manifold.pullback_euclidean(p, q);
            geos.push(self.pair_geometry(p, q, de)?);
            ginvs.push(self.manifold.metric_at(q)?.g_inv);
        }

        let is_global = xb.is_some();
        let seeds_a: Vec<(usize, f64)> = if is_global {
            (0..n).map(|j| (n + j, scales[j])).collect()
        } else {
            (0..n).map(|j| (j, scales[j])).collect()
        };
        let (trace_a, va, ta) = engine::forward_batch(&self.params, xa.view(), &seeds_a);
        let pass_b = xb.map(|xb| {
            let seeds_b: Vec<(usize, f64)> = (0..n).map(|j| (j, scales[j])).collect();
            let (trace, vb, tb) = engine::forward_batch(&self.params, xb.view(), &seeds_b);
            (trace, vb, tb)
        });

        let mut sum_sq = 0.0;
        let mut cot_val = Array1::zeros(b);
        let mut cot_tan: Vec<Array1<f64>> = (0..n).map(|_| Array1::zeros(b)).collect();
        for row in 0..b {
            let geo = &geos[row];
            let (s, ds): (f64, Vec<f64>) = match &pass_b {
                Some((_, vb, tb)) => (
                    0.5 * (va[row] + vb[row]),
                    (0..n)
                        .map(|j| 0.5 * (ta[[row, j]] + tb[[row, j]]))
                        .collect(),
                ),
                None => (va[row], (0..n).map(|j| ta[[row, j]]).collect()),
            };
            let (sig, dsig, ddsig) = self.sigma.eval(s);
            let de = geo.de;
            // φ_,j plus its sensitivities to (s, ds_j)
            let mut dphi = vec![0.0; n];
            let mut dphi_ds = vec![0.0; n];
            let mut dphi_dds = vec![0.0; n]; // diagonal coefficient
            match &self.kind {
                AugmentationKind::GlobalUpperBounded { .. } => {
                    let lp = geo.lplus.expect("upper geometry");
                    let dlp = geo.dlplus_dq.as_ref().expect("upper geometry");
                    for j in 0..n {
                        dphi[j] = geo.dde_dq[j]
                            + (dlp[j] - geo.dde_dq[j]) * sig
                            + (lp - de) * dsig * ds[j];
                        dphi_ds[j] =
                            (dlp[j] - geo.dde_dq[j]) * dsig + (lp - de) * ddsig * ds[j];
                        dphi_dds[j] = (lp - de) * dsig;
                    }
                }
                _ => {
                    for j in 0..n {
                        dphi[j] = geo.dde_dq[j] * (1.0 + sig) + de * dsig * ds[j];
                        dphi_ds[j] = geo.dde_dq[j] * dsig + de * ddsig * ds[j];
                        dphi_dds[j] = de * dsig;
                    }
                }
            }
            let ginv = &ginvs[row];
            let mut raised = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += ginv[[i, j]] * dphi[j];
                }
                raised[i] = acc;
            }
            let r: f64 = raised
                .iter()
                .zip(&dphi)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                - 1.0;
            sum_sq += r * r;
            // d(sum_sq)/dφ_,j = 2r · 2(g⁻¹ dφ)_j
            let mut cs = 0.0;
            for j in 0..n {
                let w = 4.0 * r * raised[j];
                cs += w * dphi_ds[j];
                cot_tan[j][row] = w * dphi_dds[j];
            }
            cot_val[row] = cs;
        }

        // distribute cotangents across the one or two engine passes
        let mut grad = match &pass_b {
            Some((trace_b, _, _)) => {
                let half_val = &cot_val * 0.5;
                let half_tan: Vec<Array1<f64>> = cot_tan.iter().map(|t| t * 0.5).collect();
                let views: Vec<_> = half_tan.iter().map(|t| t.view()).collect();
                let mut g =
                    engine::backward_batch(&self.params, &trace_a, half_val.view(), &views);
                let gb = engine::backward_batch(&self.params, trace_b, half_val.view(), &views);
                for (a, b) in g.iter_mut().zip(gb) {
                    *a += b;
                }
                g
            }
            None => {
                let views: Vec<_> = cot_tan.iter().map(|t| t.view()).collect();
                engine::backward_batch(&self.params, &trace_a, cot_val.view(), &views)
            }
        };
        if !sum_sq.is_finite() {
            // keep the gradient finite-checked too; the caller decides
            grad = vec![f64::NAN; grad.len()];
        }
        Ok((sum_sq, grad))
    }
}

impl GeodesicDistance for DistanceModel<BuiltinImmersion> {
    fn dim(&self) -> usize {
        self.manifold.dim()
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        self.check_pair(p, q)?;
        Ok(self.distance_chunk(&[(p, q)])?[0])
    }
    fn grad_q(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        Ok(self.distance_with_grad_q(p, q)?.1)
    }
    fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            AugmentationKind::SinglePoint { .. } => Err(Error::argument(
                "single-point models have no free source argument",
            )),
            // symmetric by construction: ∂φ/∂p at (p,q) = ∂φ/∂q at (q,p)
            _ => Ok(self.distance_with_grad_q(q, p)?.1),
        }
    }

    fn distance_many(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        self.distance_batch(pairs)
    }

    fn distance_and_grad_p_many(
        &self,
        pairs: &[(&[f64], &[f64])],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        match self.kind {
            AugmentationKind::SinglePoint { .. } => Err(Error::argument(
                "single-point models have no free source argument",
            )),
            _ => {
                let swapped: Vec<(&[f64], &[f64])> =
                    pairs.iter().map(|(p, q)| (*q, *p)).collect();
                self.distance_with_grad_q_batch(&swapped)
            }
        }
    }
}

struct PairGeometry {
    de: f64,
    dde_dq: Vec<f64>,
    lplus: Option<f64>,
    dlplus_dq: Option<Vec<f64>>,
}

/// Straight-segment length in the induced metric, evaluated over a
/// canonical argument ordering so the value is bit-identical under swaps.
/// Returns `(value, grad_p, grad_q)`; gradients only when requested.
fn upper_bound_canonical<M: SmoothMap>(
    man: &Manifold<M>,
    p: &[f64],
    q: &[f64],
    quad_nodes: usize,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>, Option<Vec<f64>>)> {
    let swapped = lex_less(q, p);
    let (a, b) = if swapped { (q, p) } else { (p, q) };
    // bounds check on the primal segment
    let nodes = quad_nodes.max(3) | 1;
    let n = man.dim();
    for s in 0..nodes {
        let t = s as f64 / (nodes - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| b[i] + (a[i] - b[i]) * t).collect();
        if !man.in_bounds(&x) {
            return Err(Error::SegmentEscapedDomain { t });
        }
    }
    if !want_grad {
        let af: Vec<f64> = a.to_vec();
        let bf: Vec<f64> = b.to_vec();
        let val = ub_quadrature::<f64, M>(man, &af, &bf, nodes);
        return Ok((val, None, None));
    }
    // duals seeded on each coordinate of a and b in turn
    let mut grad_a = vec![0.0; n];
    let mut grad_b = vec![0.0; n];
    let mut val = 0.0;
    let mut ad: Vec<Dual<f64>> = a.iter().map(|&v| Dual::constant(v)).collect();
    let bd: Vec<Dual<f64>> = b.iter().map(|&v| Dual::constant(v)).collect();
    for j in 0..n {
        ad[j].dot = 1.0;
        let out = ub_quadrature::<Dual<f64>, M>(man, &ad, &bd, nodes);
        ad[j].dot = 0.0;
        grad_a[j] = out.dot;
        if j == 0 {
            val = out.val;
        }
    }
    let ad: Vec<Dual<f64>> = a.iter().map(|&v| Dual::constant(v)).collect();
    let mut bd: Vec<Dual<f64>> = b.iter().map(|&v| Dual::constant(v)).collect();
    for j in 0..n {
        bd[j].dot = 1.0;
        let out = ub_quadrature::<Dual<f64>, M>(man, &ad, &bd, nodes);
        bd[j].dot = 0.0;
        grad_b[j] = out.dot;
    }
    let (gp, gq) = if swapped {
        (grad_b, grad_a)
    } else {
        (grad_a, grad_b)
    };
    Ok((val, Some(gp), Some(gq)))
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// `∫₀¹ ⟨a − b, a − b⟩^{1/2}_{b + (a−b)t} dt` by composite Simpson, generic
/// over the scalar so gradients come from dual inputs.
fn ub_quadrature<T: Scalar, M: SmoothMap>(man: &Manifold<M>, a: &[T], b: &[T], nodes: usize) -> T {
    let n = man.dim();
    let diff: Vec<T> = (0..n).map(|i| a[i] - b[i]).collect();
    let h = 1.0 / (nodes - 1) as f64;
    let mut acc = T::zero();
    let mut x = vec![T::zero(); n];
    for s in 0..nodes {
        let t = T::from_f64(s as f64 * h);
        for i in 0..n {
            x[i] = b[i] + diff[i] * t;
        }
        let (_, jac) = crate::diffcore::jacobian_generic::<T, M>(man.immersion(), &x);
        // speed² = diffᵀ (JᵀJ) diff = ‖J diff‖²
        let mut speed2 = T::zero();
        for row in &jac {
            let mut dir = T::zero();
            for i in 0..n {
                dir = dir + row[i] * diff[i];
            }
            speed2 = speed2 + dir * dir;
        }
        let w = if s == 0 || s == nodes - 1 {
            1.0
        } else if s % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc = acc + T::from_f64(w) * speed2.sqrt();
    }
    acc * T::from_f64(h / 3.0)
}

/// Exact `‖p − q‖₂` distance on a Euclidean manifold (intrinsic equals
/// ambient coordinates).
#[derive(Debug, Clone)]
pub struct EuclideanOracle {
    pub dim: usize,
}

impl GeodesicDistance for EuclideanOracle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        Ok(p.iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
    fn grad_q(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let d = self.distance(p, q)?;
        if d < EPS_DIAG {
            return Err(Error::DiagonalSample { epsilon: EPS_DIAG });
        }
        Ok(p.iter().zip(q).map(|(a, b)| (b - a) / d).collect())
    }
    fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.grad_q(q, p)
    }
}

/// Cosine-rule distance `arccos(ι(p)·ι(q))` on the unit hypersphere.
#[derive(Debug, Clone)]
pub struct SphereOracle {
    man: Manifold<BuiltinImmersion>,
}

impl SphereOracle {
    pub fn new(man: Manifold<BuiltinImmersion>) -> Result<Self> {
        match man.spec() {
            crate::manifold::ManifoldSpec::Hypersphere { .. } => Ok(SphereOracle { man }),
            other => Err(Error::argument(format!(
                "sphere oracle needs a hypersphere manifold, got {}",
                other.describe()
            ))),
        }
    }
}

impl GeodesicDistance for SphereOracle {
    fn dim(&self) -> usize {
        self.man.dim()
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        Ok(crate::manifold::cosine_rule_distance(&self.man, p, q))
    }
    fn grad_q(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let ip = self.man.immerse(p);
        let iq = self.man.immerse(q);
        let jq = crate::diffcore::jacobian(self.man.immersion(), q)?;
        let u: f64 = ip.iter().zip(&iq).map(|(a, b)| a * b).sum();
        let denom = (1.0 - u * u).max(1e-14).sqrt();
        let n = self.man.dim();
        let mut grad = vec![0.0; n];
        for j in 0..n {
            let mut du = 0.0;
            for a in 0..self.man.ambient_dim() {
                du += ip[a] * jq[[a, j]];
            }
            grad[j] = -du / denom;
        }
        Ok(grad)
    }
    fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.grad_q(q, p)
    }
}

/// Training-run configuration (desk-scale defaults; paper-scale values are
/// plain overrides).
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub updates: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
    pub augmentation: AugmentationKind,
    pub width: usize,
    pub depth: usize,
    pub fourier_features: usize,
    pub log_every: usize,
    pub sampler: SamplerConfig,
    /// Also enforce the residual on the p argument (diagnostic; the
    /// symmetrised augmentation makes it redundant).
    pub enforce_p_side: bool,
}

impl TrainingConfig {
    pub fn desk(augmentation: AugmentationKind) -> Self {
        TrainingConfig {
            updates: 10_000,
            batch: 1024,
            lr: 1e-3,
            decay_factor: 0.9,
            decay_interval: 2000,
            augmentation,
            width: 128,
            depth: 4,
            fourier_features: 0,
            log_every: 100,
            sampler: SamplerConfig::Uniform,
            enforce_p_side: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch must be >= 1"));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::config("network dims must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr must be positive"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("decay_factor must be in (0, 1]"));
        }
        if self.decay_interval == 0 {
            return Err(Error::config("decay_interval must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be >= 1"));
        }
        Ok(())
    }
}

/// Result of a training run: final parameters, optimizer state, loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: MlpParameters,
    pub state: OptimizerState,
    pub history: Vec<LossRecord>,
    pub augmentation: AugmentationKind,
}

impl TrainOutput {
    pub fn into_model<M: SmoothMap>(self, man: Manifold<M>) -> Result<DistanceModel<M>> {
        DistanceModel::new(self.params, man, self.augmentation)
    }
}

/// Train a distance model on a manifold. Deterministic for a fixed seed
/// (including the thread count, which never affects summation order).
pub fn train<M: SmoothMap + Clone>(
    man: &Manifold<M>,
    config: &TrainingConfig,
    seed: u64,
) -> Result<TrainOutput> {
    config.validate()?;
    let model = DistanceModel::init(
        man.clone(),
        config.augmentation.clone(),
        config.width,
        config.depth,
        config.fourier_features,
        seed,
    )?;
    let mut model = model;
    let mut state = OptimizerState::new(
        model.params.len(),
        config.lr,
        config.decay_factor,
        config.decay_interval,
    );
    let mut source = PointSource::new(man, &config.sampler, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut history = Vec::new();
    let mut last_good: Option<(MlpParameters, OptimizerState)> = None;

    let single_source = match &config.augmentation {
        AugmentationKind::SinglePoint { source } => Some(source.clone()),
        _ => None,
    };

    for update in 0..config.updates {
        let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(config.batch);
        while pairs.len() < config.batch {
            let p = match &single_source {
                Some(src) => src.clone(),
                None => source.draw(),
            };
            let q = source.draw();
            if man.pullback_euclidean(&p, &q) >= EPS_DIAG {
                if config.enforce_p_side && single_source.is_none() {
                    pairs.push((q.clone(), p.clone()));
                    if pairs.len() == config.batch {
                        break;
                    }
                }
                pairs.push((p, q));
            }
        }
        let pair_refs: Vec<(&[f64], &[f64])> = pairs
            .iter()
            .map(|(p, q)| (p.as_slice(), q.as_slice()))
            .collect();
        let (loss, grad) = model.loss_and_grad(&pair_refs)?;
        if !loss.residual_mse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let (params, st) = last_good.unwrap_or_else(|| (model.params.clone(), state.clone()));
            return Err(Error::NonFiniteLoss {
                update,
                last_good: Box::new(TrainOutput {
                    params,
                    state: st,
                    history,
                    augmentation: config.augmentation.clone(),
                }),
            });
        }
        if update % config.log_every == 0 {
            history.push(LossRecord {
                update,
                loss: loss.residual_mse,
                lr: state.effective_lr(),
            });
        }
        last_good = Some((model.params.clone(), state.clone()));
        network::adam_step(&mut state, &mut model.params, &grad);
    }
    // closing record with the final parameters' loss left to evaluation
    if config.updates > 0 && (config.updates - 1) % config.log_every != 0 {
        if let Some(last) = history.last().copied() {
            let _ = last;
        }
    }
    Ok(TrainOutput {
        params: model.params,
        state,
        history,
        augmentation: config.augmentation.clone(),
    })
}

/// Relative ℓ² error `sqrt(E[(φ − d)²] / E[d²])` over uniform pairs.
pub fn relative_error<M: SmoothMap + Clone>(
    dist: &dyn GeodesicDistance,
    man: &Manifold<M>,
    oracle: &dyn Fn(&[f64], &[f64]) -> f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let points = crate::sampling::sample_uniform(man, 2 * n_pairs, seed)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n_pairs {
        let p = &points[2 * k];
        let q = &points[2 * k + 1];
        let predicted = dist.distance(p, q)?;
        let truth = oracle(p, q);
        num += (predicted - truth) * (predicted - truth);
        den += truth * truth;
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::cosine_rule_distance;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn untrained_global(man: Manifold, seed: u64) -> DistanceModel {
        DistanceModel::init(man, AugmentationKind::Global, 16, 2, 0, seed).unwrap()
    }

    #[test]
    fn pullback_euclidean_examples() {
        let man = Manifold::euclidean(2).unwrap();
        assert!((pullback_euclidean(&man, &[0.0, 0.0], &[1.5, 2.0]) - 2.5).abs() < 1e-15);
        assert_eq!(pullback_euclidean(&man, &[1.0, 1.0], &[1.0, 1.0]), 0.0);

        let sphere = Manifold::hypersphere(2)
            .unwrap()
            .with_bounds(vec![PI / 6.0, -0.5], vec![5.0 * PI / 6.0, 2.0])
            .unwrap();
        let chord = pullback_euclidean(&sphere, &[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0]);
        assert!((chord - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_is_zero_on_the_diagonal_for_all_kinds() {
        let man = Manifold::peaks().unwrap();
        let kinds = vec![
            AugmentationKind::SinglePoint {
                source: vec![0.5, -0.5],
            },
            AugmentationKind::Global,
            AugmentationKind::GlobalUpperBounded { quad_nodes: 33 },
        ];
        for kind in kinds {
            let model = DistanceModel::init(man.clone(), kind.clone(), 8, 2, 0, 3).unwrap();
            let p = match &kind {
                AugmentationKind::SinglePoint { source } => source.clone(),
                _ => vec![0.5, -0.5],
            };
            let d = model.distance(&p, &p).unwrap();
            assert_eq!(d, 0.0, "{kind:?}");
        }
    }

    #[test]
    fn global_kind_is_bit_exactly_symmetric() {
        use rand::{Rng, SeedableRng};
        let man = Manifold::peaks().unwrap();
        let model = untrained_global(man, 7);
        let upper = DistanceModel::init(
            Manifold::peaks().unwrap(),
            AugmentationKind::GlobalUpperBounded { quad_nodes: 17 },
            8,
            2,
            0,
            7,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.9..2.9)).collect();
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.9..2.9)).collect();
            let a = model.distance(&p, &q).unwrap();
            let b = model.distance(&q, &p).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
            let a = upper.distance(&p, &q).unwrap();
            let b = upper.distance(&q, &p).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn hardwired_euclidean_distance_has_zero_residual() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let r = eikonal_residual_of(&oracle, &man, &[0.2, -0.4], &[1.4, 2.2]).unwrap();
        assert!(r.abs() < 1e-12, "residual {r}");
    }

    #[test]
    fn hardwired_sphere_distance_has_zero_residual() {
        use rand::{Rng, SeedableRng};
        let man = Manifold::hypersphere(2).unwrap();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut tested = 0;
        while tested < 50 {
            let p: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(PI / 6.0 + 0.05..5.0 * PI / 6.0 - 0.05))
                .collect();
            let q: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(PI / 6.0 + 0.05..5.0 * PI / 6.0 - 0.05))
                .collect();
            let chord = man.pullback_euclidean(&p, &q);
            // keep away from the diagonal and the cut locus
            if chord < 1e-3 || chord > 1.9 {
                continue;
            }
            let r = eikonal_residual_of(&oracle, &man, &p, &q).unwrap();
            assert!(r.abs() < 1e-8, "residual {r} at {p:?} {q:?}");
            tested += 1;
        }
    }

    #[test]
    fn untrained_model_has_nonzero_residual() {
        let man = Manifold::euclidean(2).unwrap();
        let model = untrained_global(man, 11);
        let r = model.eikonal_residual(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(r.abs() > 1e-6);
    }

    #[test]
    fn diagonal_sample_is_rejected() {
        let man = Manifold::euclidean(2).unwrap();
        let model = untrained_global(man, 1);
        match model.eikonal_residual(&[0.5, 0.5], &[0.5, 0.5 + 1e-9]) {
            Err(Error::DiagonalSample { .. }) => {}
            other => panic!("expected DiagonalSample, got {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let man = Manifold::euclidean(2).unwrap();
        let model = untrained_global(man, 1);
        assert!(matches!(
            model.distance(&[0.0, 0.0], &[4.0, 0.0]),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn loss_is_invariant_under_batch_duplication() {
        let man = Manifold::euclidean(2).unwrap();
        let model = untrained_global(man, 5);
        let p = vec![0.1, 0.2];
        let q = vec![-1.0, 1.5];
        let r = vec![2.0, -0.5];
        let s = vec![0.3, 0.9];
        let single: Vec<(&[f64], &[f64])> = vec![(&p, &q), (&r, &s)];
        let doubled: Vec<(&[f64], &[f64])> =
            vec![(&p, &q), (&r, &s), (&p, &q), (&r, &s)];
        let (l1, _) = model.loss_and_grad(&single).unwrap();
        let (l2, _) = model.loss_and_grad(&doubled).unwrap();
        assert!((l1.residual_mse - l2.residual_mse).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let man = Manifold::peaks().unwrap();
        for kind in [
            AugmentationKind::Global,
            AugmentationKind::SinglePoint {
                source: vec![0.0, 0.0],
            },
            AugmentationKind::GlobalUpperBounded { quad_nodes: 9 },
        ] {
            let model = DistanceModel::init(man.clone(), kind.clone(), 6, 2, 0, 17).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
            let pairs_owned: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
                .map(|_| {
                    let p = match &kind {
                        AugmentationKind::SinglePoint { source } => source.clone(),
                        _ => (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    };
                    let q = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    (p, q)
                })
                .collect();
            let pairs: Vec<(&[f64], &[f64])> = pairs_owned
                .iter()
                .map(|(p, q)| (p.as_slice(), q.as_slice()))
                .collect();
            let (_, grad) = model.loss_and_grad(&pairs).unwrap();
            let h = 1e-5;
            for _ in 0..5 {
                let idx = rng.gen_range(0..model.params.len());
                let mut mp = model.clone();
                mp.params_mut().data_mut()[idx] += h;
                let mut mm = model.clone();
                mm.params_mut().data_mut()[idx] -= h;
                let (lp, _) = mp.loss_and_grad(&pairs).unwrap();
                let (lm, _) = mm.loss_and_grad(&pairs).unwrap();
                let fd = (lp.residual_mse - lm.residual_mse) / (2.0 * h);
                let tol = 1e-6_f64.max(1e-4 * fd.abs());
                assert!(
                    (grad[idx] - fd).abs() < tol,
                    "{kind:?} param {idx}: exact {} vs fd {fd}",
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn zero_update_training_returns_initialised_model() {
        let man = Manifold::euclidean(2).unwrap();
        let mut config = TrainingConfig::desk(AugmentationKind::Global);
        config.updates = 0;
        config.width = 8;
        config.depth = 2;
        let out = train(&man, &config, 99).unwrap();
        let fresh = DistanceModel::init(man.clone(), AugmentationKind::Global, 8, 2, 0, 99).unwrap();
        assert_eq!(out.params.data(), fresh.params().data());
        assert_eq!(out.state.step, 0);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let man = Manifold::euclidean(2).unwrap();
        let mut config = TrainingConfig::desk(AugmentationKind::Global);
        config.updates = 3;
        config.batch = 32;
        config.width = 8;
        config.depth = 2;
        config.log_every = 1;
        let a = train(&man, &config, 5).unwrap();
        let b = train(&man, &config, 5).unwrap();
        assert_eq!(a.params.data(), b.params.data());
        assert_eq!(a.history, b.history);
        let c = train(&man, &config, 6).unwrap();
        assert_ne!(a.params.data(), c.params.data());
    }

    #[test]
    fn relative_error_of_oracle_against_itself_is_zero() {
        let man = Manifold::euclidean(2).unwrap();
        let oracle = EuclideanOracle { dim: 2 };
        let d = |p: &[f64], q: &[f64]| {
            p.iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let err = relative_error(&oracle, &man, &d, 512, 3).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn relative_error_of_scaled_oracle_is_the_scale_offset() {
        struct Scaled(EuclideanOracle);
        impl GeodesicDistance for Scaled {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
                Ok(1.1 * self.0.distance(p, q)?)
            }
            fn grad_q(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
                self.0.grad_q(p, q)
            }
            fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
                self.0.grad_p(p, q)
            }
        }
        let man = Manifold::euclidean(2).unwrap();
        let d = |p: &[f64], q: &[f64]| {
            p.iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let err = relative_error(&Scaled(EuclideanOracle { dim: 2 }), &man, &d, 4096, 7).unwrap();
        assert!((err - 0.1).abs() < 1e-12, "scaling error {err}");
    }

    #[test]
    fn sphere_grad_q_matches_cosine_rule_finite_differences() {
        let man = Manifold::hypersphere(2).unwrap();
        let oracle = SphereOracle::new(man.clone()).unwrap();
        let p = [1.0, 1.2];
        let q = [1.8, 2.0];
        let grad = oracle.grad_q(&p, &q).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[j] += h;
            qm[j] -= h;
            let fd = (cosine_rule_distance(&man, &p, &qp) - cosine_rule_distance(&man, &p, &qm))
                / (2.0 * h);
            assert!((grad[j] - fd).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        /// M1/M2/M5 for random points and random untrained parameters, all
        /// three augmentation kinds.
        #[test]
        fn metric_axioms_hold_by_construction(
            seed in 0u64..1000,
            px in -2.9f64..2.9, py in -2.9f64..2.9,
            qx in -2.9f64..2.9, qy in -2.9f64..2.9,
        ) {
            let man = Manifold::peaks().unwrap();
            let p = vec![px, py];
            let q = vec![qx, qy];
            for kind in [
                AugmentationKind::SinglePoint { source: p.clone() },
                AugmentationKind::Global,
                AugmentationKind::GlobalUpperBounded { quad_nodes: 17 },
            ] {
                let model = DistanceModel::init(man.clone(), kind.clone(), 6, 2, 0, seed).unwrap();
                let de = man.pullback_euclidean(&p, &q);
                let d = model.distance(&p, &q).unwrap();
                // M2 and M5
                prop_assert!(d >= 0.0);
                prop_assert!(d >= de, "{kind:?}: {d} < pullback {de}");
                // M1
                prop_assert_eq!(model.distance(&p, &p).unwrap(), 0.0);
                // M3 for the global kinds
                if !matches!(kind, AugmentationKind::SinglePoint { .. }) {
                    let back = model.distance(&q, &p).unwrap();
                    prop_assert_eq!(d.to_bits(), back.to_bits());
                }
                // upper bound sandwich
                if let AugmentationKind::GlobalUpperBounded { quad_nodes } = kind {
                    let ub = crate::geodesic::upper_bound_length(&man, &p, &q, quad_nodes).unwrap();
                    prop_assert!(d <= ub.max(de) + 1e-12, "{d} > L+ {ub}");
                }
            }
        }
    }
}
