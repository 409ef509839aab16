//! Joint samplers for the Monte Carlo cross-check channel.
//!
//! Sampling is done in `f64` regardless of the scalar type of the model so
//! a run is reproducible bit-for-bit from (model, n, seed) alone. Batches
//! draw from disjoint SplitMix64 streams derived by counter and are merged
//! in batch order, making the estimate independent of the worker count.

use crate::error::{Error, Result};
use crate::expr::{eval_expr, ExprAST};
use crate::model::{DensityModel, DiscreteJoint, Kernel, Model};
use crate::real::Real;
use crate::rng::SplitMix64;

/// Walker/Vose alias table for sampling an index with given weights.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Build from non-negative weights with positive total. O(n).
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Precondition("alias table needs weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Precondition(
                "alias weights must be non-negative with positive total".into(),
            ));
        }
        let scale = n as f64 / total;
        let mut scaled: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0usize; n];
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in large.iter().chain(small.iter()) {
            prob[i] = 1.0;
            alias[i] = i;
        }
        Ok(Self { prob, alias })
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> usize {
        let k = rng.index(self.prob.len());
        if rng.next_f64() < self.prob[k] {
            k
        } else {
            self.alias[k]
        }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }
}

/// A prepared joint sampler for either model family.
pub enum PairSampler {
    Discrete {
        atoms: Vec<f64>,
        table: AliasTable,
    },
    /// Inverse CDF of a piecewise-constant marginal, applied twice.
    Product {
        // (cumulative mass before segment, lo, height)
        segments: Vec<(f64, f64, f64)>,
        total: f64,
    },
    Mixture {
        // (cumulative mass before component, lo, hi)
        components: Vec<(f64, f64, f64)>,
        total: f64,
    },
    CauchyRejection {
        intervals: Vec<(f64, f64)>,
        lengths: Vec<f64>,
        total_length: f64,
        c: ExprAST,
        d: ExprAST,
        d_max: f64,
        c_min: f64,
    },
}

const REJECTION_PROBE: u64 = 20_000;
const REJECTION_GRID: usize = 4096;

impl PairSampler {
    pub fn for_model<R: Real>(model: &Model<R>) -> Result<Self> {
        match model {
            Model::Discrete(m) => Self::for_discrete(m),
            Model::Density(m) => Self::for_density(m),
        }
    }

    pub fn for_discrete<R: Real>(model: &DiscreteJoint<R>) -> Result<Self> {
        let n = model.n();
        let mut flat = Vec::with_capacity(n * n);
        for row in model.weights() {
            for &w in row {
                flat.push(Real::to_f64(w));
            }
        }
        Ok(PairSampler::Discrete {
            atoms: model.atoms().iter().map(|&a| Real::to_f64(a)).collect(),
            table: AliasTable::new(&flat)?,
        })
    }

    pub fn for_density<R: Real>(model: &DensityModel<R>) -> Result<Self> {
        match model.kernel() {
            Kernel::Product { segments } => {
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(segments.len());
                for s in segments {
                    out.push((acc, Real::to_f64(s.lo), Real::to_f64(s.height)));
                    acc += Real::to_f64(s.mass());
                }
                Ok(PairSampler::Product {
                    segments: out,
                    total: acc,
                })
            }
            Kernel::MixtureUniform { components } => {
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(components.len());
                for c in components {
                    out.push((acc, Real::to_f64(c.lo()), Real::to_f64(c.hi())));
                    acc += Real::to_f64(c.mass);
                }
                Ok(PairSampler::Mixture {
                    components: out,
                    total: acc,
                })
            }
            Kernel::Cauchy { c, d } => {
                let intervals: Vec<(f64, f64)> = model
                    .domain()
                    .iter()
                    .map(|&(lo, hi)| (Real::to_f64(lo), Real::to_f64(hi)))
                    .collect();
                let lengths: Vec<f64> = intervals.iter().map(|&(lo, hi)| hi - lo).collect();
                let total_length: f64 = lengths.iter().sum();
                // grid extrema; maxima padded so the envelope stays an upper bound
                let mut d_max = 0.0f64;
                let mut c_min = f64::INFINITY;
                for &(lo, hi) in &intervals {
                    for k in 0..=REJECTION_GRID {
                        let x = lo + (hi - lo) * (k as f64) / (REJECTION_GRID as f64);
                        d_max = d_max.max(eval_expr(d, x)?);
                        c_min = c_min.min(eval_expr(c, x)?);
                    }
                }
                let sampler = PairSampler::CauchyRejection {
                    intervals,
                    lengths,
                    total_length,
                    c: c.clone(),
                    d: d.clone(),
                    d_max: d_max * 1.0001,
                    c_min: c_min * 0.9999,
                };
                sampler.check_acceptance()?;
                Ok(sampler)
            }
        }
    }

    fn check_acceptance(&self) -> Result<()> {
        if let PairSampler::CauchyRejection { .. } = self {
            let mut rng = SplitMix64::new(0x5EED_CAFE);
            let mut accepted = 0u64;
            for _ in 0..REJECTION_PROBE {
                if self.try_pair(&mut rng)?.is_some() {
                    accepted += 1;
                }
            }
            let rate = accepted as f64 / REJECTION_PROBE as f64;
            if rate < 0.01 {
                return Err(Error::RejectionInefficiency { acceptance: rate });
            }
        }
        Ok(())
    }

    /// One proposal; `None` is a rejection (Cauchy kernel only).
    fn try_pair(&self, rng: &mut SplitMix64) -> Result<Option<(f64, f64)>> {
        match self {
            PairSampler::Discrete { atoms, table } => {
                let idx = table.sample(rng);
                let n = atoms.len();
                Ok(Some((atoms[idx / n], atoms[idx % n])))
            }
            PairSampler::Product { segments, total } => {
                let x = inverse_pw_cdf(segments, *total, rng.next_f64());
                let y = inverse_pw_cdf(segments, *total, rng.next_f64());
                Ok(Some((x, y)))
            }
            PairSampler::Mixture { components, total } => {
                let u = rng.next_f64() * total;
                let mut chosen = components.len() - 1;
                for (k, &(acc, _, _)) in components.iter().enumerate().skip(1) {
                    if u < acc {
                        chosen = k - 1;
                        break;
                    }
                }
                let (_, lo, hi) = components[chosen];
                Ok(Some((rng.uniform(lo, hi), rng.uniform(lo, hi))))
            }
            PairSampler::CauchyRejection {
                intervals,
                lengths,
                total_length,
                c,
                d,
                d_max,
                c_min,
            } => {
                // x, y each from the marginal proposal ∝ d on D
                let mut coords = [0.0f64; 2];
                for coord in coords.iter_mut() {
                    let mut u = rng.next_f64() * total_length;
                    let mut x = intervals[0].0;
                    for (k, &(lo, _)) in intervals.iter().enumerate() {
                        if u <= lengths[k] || k + 1 == intervals.len() {
                            x = lo + u.min(lengths[k]);
                            break;
                        }
                        u -= lengths[k];
                    }
                    if rng.next_f64() * d_max >= eval_expr(d, x)? {
                        return Ok(None);
                    }
                    *coord = x;
                }
                // pair acceptance 2 c_min / (c(x) + c(y)) <= 1
                let accept = 2.0 * c_min / (eval_expr(c, coords[0])? + eval_expr(c, coords[1])?);
                if rng.next_f64() < accept {
                    Ok(Some((coords[0], coords[1])))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Sample one pair, retrying rejections. Errors if the sampler cannot
    /// produce a pair in a bounded number of proposals.
    pub fn sample_pair(&self, rng: &mut SplitMix64) -> Result<(f64, f64)> {
        const MAX_PROPOSALS: u32 = 1_000_000;
        for _ in 0..MAX_PROPOSALS {
            if let Some(pair) = self.try_pair(rng)? {
                return Ok(pair);
            }
        }
        Err(Error::RejectionInefficiency { acceptance: 0.0 })
    }
}

fn inverse_pw_cdf(segments: &[(f64, f64, f64)], total: f64, u: f64) -> f64 {
    let target = u * total;
    let mut chosen = segments.len() - 1;
    for (k, &(acc, _, _)) in segments.iter().enumerate().skip(1) {
        if target < acc {
            chosen = k - 1;
            break;
        }
    }
    let (acc, lo, height) = segments[chosen];
    lo + (target - acc) / height
}

/// Streaming mean/variance (Welford), combinable across batches in a fixed
/// order. Zero-variance streams report exactly zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64) * (other.count as f64)
            / total as f64;
        self.count = total;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).max(0.0)
    }
}
