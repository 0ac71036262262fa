//! Point samplers over a manifold's coordinate box: i.i.d. uniform,
//! curvature-weighted Metropolis–Hastings (target density ∝ |R|, the
//! magnitude of the Ricci scalar), and the 50/50-style mixture of the two.
//!
//! Proposals that leave the box are rejected (the chain repeats its state),
//! which restricts the target to the box. Each chain owns a seed-derived
//! RNG stream; chains are interleaved round-robin, so the emitted stream is
//! deterministic for a fixed seed regardless of how many points are taken.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffcore::SmoothMap;
use crate::error::{Error, Result};
use crate::manifold::Manifold;

/// Curvature magnitudes below this count as flat.
pub const FLAT_THRESHOLD: f64 = 1e-12;

/// Metropolis–Hastings knobs. `delta = None` defaults to 5% of the smallest
/// box edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    pub delta: Option<f64>,
    pub burn_in: usize,
    pub chains: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            delta: None,
            burn_in: 1000,
            chains: 4,
        }
    }
}

/// Which sampling distribution a training run draws from.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    Uniform,
    CurvatureMh(MhConfig),
    Mixture { weight: f64, mh: MhConfig },
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let check_mh = |mh: &MhConfig| -> Result<()> {
            if let Some(d) = mh.delta {
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::config("mh delta must be positive"));
                }
            }
            if mh.chains == 0 {
                return Err(Error::config("mh needs at least one chain"));
            }
            Ok(())
        };
        match self {
            SamplerConfig::Uniform => Ok(()),
            SamplerConfig::CurvatureMh(mh) => check_mh(mh),
            SamplerConfig::Mixture { weight, mh } => {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::config("mixture weight must be in [0, 1]"));
                }
                check_mh(mh)
            }
        }
    }
}

/// The Metropolis acceptance rule on log densities: accept iff
/// `log u ≤ log π(q') − log π(q)`.
pub fn mh_accept(log_current: f64, log_proposed: f64, u: f64) -> bool {
    u.ln() <= log_proposed - log_current
}

fn log_abs_curvature<M: SmoothMap>(man: &Manifold<M>, x: &[f64]) -> Result<f64> {
    let r = man.ricci_scalar_at(x)?;
    Ok(r.abs().max(FLAT_THRESHOLD).ln())
}

struct MhChain {
    state: Vec<f64>,
    log_target: f64,
    rng: ChaCha8Rng,
}

struct MhSampler {
    chains: Vec<MhChain>,
    delta: f64,
    next: usize,
}

impl MhSampler {
    fn new<M: SmoothMap>(man: &Manifold<M>, config: &MhConfig, seed: u64) -> Result<Self> {
        let n = man.dim();
        let delta = config.delta.unwrap_or_else(|| {
            let smallest = (0..n)
                .map(|j| man.bounds_high()[j] - man.bounds_low()[j])
                .fold(f64::INFINITY, f64::min);
            0.05 * smallest
        });
        // flatness probe: the initial points plus 100 uniform draws
        let mut probe_rng = ChaCha8Rng::seed_from_u64(seed);
        probe_rng.set_stream(u64::MAX);
        let mut any_curved = false;
        let mut probes: Vec<Vec<f64>> = Vec::with_capacity(100 + config.chains);
        for _ in 0..(100 + config.chains) {
            probes.push(uniform_point(man, &mut probe_rng));
        }
        for x in &probes {
            if man.ricci_scalar_at(x)?.abs() >= FLAT_THRESHOLD {
                any_curved = true;
                break;
            }
        }
        if !any_curved {
            return Err(Error::FlatManifold {
                threshold: FLAT_THRESHOLD,
            });
        }
        let mut chains = Vec::with_capacity(config.chains);
        for c in 0..config.chains {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + c as u64);
            let state = uniform_point(man, &mut rng);
            let log_target = log_abs_curvature(man, &state)?;
            chains.push(MhChain {
                state,
                log_target,
                rng,
            });
        }
        let mut sampler = MhSampler {
            chains,
            delta,
            next: 0,
        };
        for _ in 0..config.burn_in {
            for c in 0..sampler.chains.len() {
                sampler.step(man, c)?;
            }
        }
        Ok(sampler)
    }

    fn step<M: SmoothMap>(&mut self, man: &Manifold<M>, c: usize) -> Result<()> {
        let n = man.dim();
        let chain = &mut self.chains[c];
        let mut proposal = vec![0.0; n];
        for (i, slot) in proposal.iter_mut().enumerate() {
            let z: f64 = chain.rng.sample(StandardNormal);
            *slot = chain.state[i] + self.delta * z;
        }
        let u: f64 = chain.rng.gen_range(0.0..1.0);
        if !man.in_bounds(&proposal) {
            return Ok(()); // proposal outside the box: repeat current state
        }
        let log_prop = log_abs_curvature(man, &proposal)?;
        if mh_accept(chain.log_target, log_prop, u) {
            chain.state = proposal;
            chain.log_target = log_prop;
        }
        Ok(())
    }

    fn next_point<M: SmoothMap>(&mut self, man: &Manifold<M>) -> Result<Vec<f64>> {
        let c = self.next;
        self.next = (self.next + 1) % self.chains.len();
        self.step(man, c)?;
        Ok(self.chains[c].state.clone())
    }
}

fn uniform_point<M: SmoothMap>(man: &Manifold<M>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..man.dim())
        .map(|j| rng.gen_range(man.bounds_low()[j]..man.bounds_high()[j]))
        .collect()
}

enum SourceInner {
    Uniform,
    Mh(MhSampler),
    Mixture {
        weight: f64,
        mh: MhSampler,
        selector: ChaCha8Rng,
    },
}

/// A deterministic stream of sample points. Cheap to pull from repeatedly;
/// the training loop and the batch samplers share this one implementation.
pub struct PointSource<M: SmoothMap> {
    man: Manifold<M>,
    uniform_rng: ChaCha8Rng,
    inner: SourceInner,
}

impl<M: SmoothMap + Clone> PointSource<M> {
    pub fn new(man: &Manifold<M>, config: &SamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut uniform_rng = ChaCha8Rng::seed_from_u64(seed);
        uniform_rng.set_stream(0);
        let inner = match config {
            SamplerConfig::Uniform => SourceInner::Uniform,
            SamplerConfig::CurvatureMh(mh) => SourceInner::Mh(MhSampler::new(man, mh, seed)?),
            SamplerConfig::Mixture { weight, mh } => {
                let mut selector = ChaCha8Rng::seed_from_u64(seed);
                selector.set_stream(u64::MAX - 1);
                SourceInner::Mixture {
                    weight: *weight,
                    mh: MhSampler::new(man, mh, seed)?,
                    selector,
                }
            }
        };
        Ok(PointSource {
            man: man.clone(),
            uniform_rng,
            inner,
        })
    }

    pub fn draw(&mut self) -> Vec<f64> {
        match &mut self.inner {
            SourceInner::Uniform => uniform_point(&self.man, &mut self.uniform_rng),
            SourceInner::Mh(mh) => mh
                .next_point(&self.man)
                .expect("curvature evaluation failed mid-chain"),
            SourceInner::Mixture {
                weight,
                mh,
                selector,
            } => {
                let u: f64 = selector.gen_range(0.0..1.0);
                if u < *weight {
                    uniform_point(&self.man, &mut self.uniform_rng)
                } else {
                    mh.next_point(&self.man)
                        .expect("curvature evaluation failed mid-chain")
                }
            }
        }
    }
}

/// `count` i.i.d. uniform points over the bounds box.
pub fn sample_uniform<M: SmoothMap + Clone>(
    man: &Manifold<M>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    assert!(count >= 1);
    let mut src = PointSource::new(man, &SamplerConfig::Uniform, seed)?;
    Ok((0..count).map(|_| src.draw()).collect())
}

/// `count` points from interleaved Metropolis–Hastings chains targeting
/// `|R|` restricted to the box. Errors with [`Error::FlatManifold`] when the
/// curvature vanishes at every probe.
pub fn sample_curvature_mh<M: SmoothMap + Clone>(
    man: &Manifold<M>,
    count: usize,
    config: &MhConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    assert!(count >= 1);
    let mut src = PointSource::new(man, &SamplerConfig::CurvatureMh(config.clone()), seed)?;
    Ok((0..count).map(|_| src.draw()).collect())
}

/// Mixture sampler: uniform with probability `weight`, curvature-MH
/// otherwise.
pub fn sample_mixture<M: SmoothMap + Clone>(
    man: &Manifold<M>,
    count: usize,
    weight: f64,
    mh: &MhConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    assert!(count >= 1);
    let mut src = PointSource::new(
        man,
        &SamplerConfig::Mixture {
            weight,
            mh: mh.clone(),
        },
        seed,
    )?;
    Ok((0..count).map(|_| src.draw()).collect())
}
