//! Seeded sampling from distributions and combined models.
//!
//! All draws go through a [`Sampler`], a ChaCha8 stream seeded from a
//! `u64`. One draw consumes one 64-bit word `r`, interpreted as the exact
//! rational `r / 2^64`, and selects a category by inverse CDF over the
//! deterministic index order, so sequences are bit-reproducible across
//! runs and platforms. Samplers for combined models follow the two-stage
//! shape of the models themselves: draw a category of one component, then
//! a category of the other conditioned on the shared block.

use num::{BigInt, One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::category::{Category, CategoryMapping, CoreError, CategorySet};
use crate::combine::{first_disagreement, CombineError};
use crate::parametric::{ModelError, ParametricModel};
use crate::rational::{format_rat, Rat};
use crate::vector::{Dist, IndexedVector, ProductIndex};

/// Errors raised while sampling.
#[derive(Debug, Error)]
pub enum SamplingError {
    /// A structural precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// Evaluating a model failed.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// A combination precondition failed.
    #[error(transparent)]
    Combine(#[from] CombineError),
    /// The evaluated components are not consistent at this parameter.
    #[error("components are not consistent at this parameter: block {block:?} has aggregates {left} and {right}")]
    NotConsistent {
        /// Disagreeing metacategory.
        block: String,
        /// Aggregate of the first component.
        left: String,
        /// Aggregate of the second component.
        right: String,
    },
    /// A block was drawn whose component aggregate is zero.
    #[error("block {0:?} was drawn but a component has zero mass on it")]
    ZeroAggregate(String),
    /// No draws were supplied.
    #[error("cannot build an empirical distribution from zero draws")]
    EmptyDraws,
}

/// A deterministic sampler: a ChaCha8 stream with explicit seeding.
#[derive(Clone, Debug)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Seeds a fresh stream.
    pub fn from_seed(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Splits off an independent child sampler, seeded from this stream.
    pub fn split(&mut self) -> Sampler {
        Sampler::from_seed(self.rng.next_u64())
    }

    /// One uniform draw, exactly `r / 2^64` for the next stream word `r`.
    pub fn unit(&mut self) -> Rat {
        let r = self.rng.next_u64();
        Rat::new(BigInt::from(r), BigInt::one() << 64u32)
    }

    /// Inverse-CDF draw over the index order, returning the position.
    pub fn sample_position(&mut self, d: &Dist) -> usize {
        let u = self.unit();
        let mut cum = Rat::zero();
        for (t, e) in d.entries().iter().enumerate() {
            cum += e;
            if u < cum {
                return t;
            }
        }
        d.index().len() - 1
    }

    /// Inverse-CDF draw over the index order.
    ///
    /// ```
    /// use markov_comb::sampling::Sampler;
    /// use markov_comb::{Category, CategorySet, Dist};
    /// let d = Dist::point_mass(
    ///     CategorySet::new(["a", "b"]).unwrap(),
    ///     &Category::new("b"),
    /// )
    /// .unwrap();
    /// let mut s = Sampler::from_seed(1);
    /// assert_eq!(s.sample_dist(&d).as_str(), "b");
    /// ```
    pub fn sample_dist(&mut self, d: &Dist) -> Category {
        d.index().get(self.sample_position(d)).unwrap().clone()
    }

    /// Draws a position within a slice of the index: the categories at
    /// `fiber`, weighted by `entries[fiber[t]] / total`.
    fn sample_fiber(&mut self, entries: &[Rat], fiber: &[usize], total: &Rat) -> usize {
        let target = self.unit() * total;
        let mut cum = Rat::zero();
        for &t in fiber {
            cum += &entries[t];
            if target < cum {
                return t;
            }
        }
        *fiber.last().unwrap()
    }
}

struct MetaStarDraw {
    df: Dist,
    dg: Dist,
    gm: IndexedVector,
}

fn prepare_meta_star(
    f: &ParametricModel,
    g: &ParametricModel,
    prod: &ProductIndex,
    theta: &[Rat],
) -> Result<MetaStarDraw, SamplingError> {
    let df = f.eval(theta)?;
    let dg = g.eval(theta)?;
    if let Some((k, left, right)) = first_disagreement(df.vector(), dg.vector(), prod)? {
        return Err(SamplingError::NotConsistent {
            block: k.as_str().to_string(),
            left: format_rat(&left),
            right: format_rat(&right),
        });
    }
    let gm = dg.aggregate(prod.mapping_j())?;
    Ok(MetaStarDraw { df, dg, gm })
}

fn draw_pair_from(
    state: &MetaStarDraw,
    prod: &ProductIndex,
    sampler: &mut Sampler,
) -> Result<(Category, Category), SamplingError> {
    let it = sampler.sample_position(&state.df);
    let kt = prod.mapping_i().apply_idx(it);
    let total = state.gm.get_idx(kt);
    if total.is_zero() {
        return Err(SamplingError::ZeroAggregate(
            prod.mapping_i().codomain().get(kt).unwrap().as_str().to_string(),
        ));
    }
    let fiber = prod.mapping_j().fiber_indices(kt);
    let jt = sampler.sample_fiber(state.dg.entries(), &fiber, total);
    Ok((
        prod.mapping_i().domain().get(it).unwrap().clone(),
        prod.mapping_j().domain().get(jt).unwrap().clone(),
    ))
}

/// One draw from the meta combination at `θ`: sample `i` from `f(θ)`,
/// then `j` in the block of `i` with probability `g_j(θ)/g_{M,p(i)}(θ)`.
/// The components must be consistent at `θ`.
pub fn sample_meta_star(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    theta: &[Rat],
    sampler: &mut Sampler,
) -> Result<(Category, Category), SamplingError> {
    let draws = sample_meta_star_many(f, g, p, q, theta, 1, sampler)?;
    Ok(draws.into_iter().next().unwrap())
}

/// Draws `n` pairs from the meta combination at `θ`, evaluating the
/// component models once.
pub fn sample_meta_star_many(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    theta: &[Rat],
    n: usize,
    sampler: &mut Sampler,
) -> Result<Vec<(Category, Category)>, SamplingError> {
    let prod = ProductIndex::new(p, q)?;
    let state = prepare_meta_star(f, g, &prod, theta)?;
    (0..n).map(|_| draw_pair_from(&state, &prod, sampler)).collect()
}

/// One draw from the structured super combination: sample a block `k`
/// from `h(θ2)`, then `i ∈ I_k` with probability `f_i(θ1)/f_{M,k}(θ1)`,
/// then `j ∈ J_k` with probability `g_j(θ3)/g_{M,k}(θ3)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_structured_super(
    f: &ParametricModel,
    h: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    theta1: &[Rat],
    theta2: &[Rat],
    theta3: &[Rat],
    sampler: &mut Sampler,
) -> Result<(Category, Category), SamplingError> {
    let draws =
        sample_structured_super_many(f, h, g, p, q, theta1, theta2, theta3, 1, sampler)?;
    Ok(draws.into_iter().next().unwrap())
}

/// Draws `n` pairs from the structured super combination, evaluating the
/// three component models once.
#[allow(clippy::too_many_arguments)]
pub fn sample_structured_super_many(
    f: &ParametricModel,
    h: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    theta1: &[Rat],
    theta2: &[Rat],
    theta3: &[Rat],
    n: usize,
    sampler: &mut Sampler,
) -> Result<Vec<(Category, Category)>, SamplingError> {
    ProductIndex::new(p, q)?;
    if h.index() != p.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: h.index().names(),
        }
        .into());
    }
    let df = f.eval(theta1)?;
    let dh = h.eval(theta2)?;
    let dg = g.eval(theta3)?;
    let fm = df.aggregate(p)?;
    let gm = dg.aggregate(q)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let kt = sampler.sample_position(&dh);
        if fm.get_idx(kt).is_zero() || gm.get_idx(kt).is_zero() {
            return Err(SamplingError::ZeroAggregate(
                p.codomain().get(kt).unwrap().as_str().to_string(),
            ));
        }
        let it = sampler.sample_fiber(df.entries(), &p.fiber_indices(kt), fm.get_idx(kt));
        let jt = sampler.sample_fiber(dg.entries(), &q.fiber_indices(kt), gm.get_idx(kt));
        out.push((
            p.domain().get(it).unwrap().clone(),
            q.domain().get(jt).unwrap().clone(),
        ));
    }
    Ok(out)
}

/// Relative frequencies of the draws as an exact distribution on `index`.
pub fn empirical_dist(
    index: &CategorySet,
    draws: &[Category],
) -> Result<Dist, SamplingError> {
    if draws.is_empty() {
        return Err(SamplingError::EmptyDraws);
    }
    let mut counts = vec![0u64; index.len()];
    for c in draws {
        counts[index.require(c)?] += 1;
    }
    let n = BigInt::from(draws.len() as u64);
    let entries = counts
        .into_iter()
        .map(|c| Rat::new(BigInt::from(c), n.clone()))
        .collect();
    Ok(Dist::from_entries(index.clone(), entries)?)
}

/// Relative frequencies of drawn pairs on the mapping product index.
pub fn empirical_pairs(
    prod: &ProductIndex,
    draws: &[(Category, Category)],
) -> Result<Dist, SamplingError> {
    if draws.is_empty() {
        return Err(SamplingError::EmptyDraws);
    }
    let mut counts = vec![0u64; prod.cardinality()];
    for (i, j) in draws {
        let pos = prod.position(i, j).ok_or_else(|| {
            CoreError::UnknownCategory(ProductIndex::composed_name(i, j).as_str().to_string())
        })?;
        counts[pos] += 1;
    }
    let n = BigInt::from(draws.len() as u64);
    let entries = counts
        .into_iter()
        .map(|c| Rat::new(BigInt::from(c), n.clone()))
        .collect();
    Ok(Dist::from_entries(prod.index().clone(), entries)?)
}
