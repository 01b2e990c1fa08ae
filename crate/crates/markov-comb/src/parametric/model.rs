//! The parametric model type, its evaluation pipeline, deterministic
//! parameter sampling, and meta-consistency checking.

use std::fmt;
use std::sync::Arc;

use num::{One, Signed, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::category::{CategoryMapping, CategorySet, CoreError};
use crate::combine::CombineError;
use crate::rational::{format_rat, parse_rat, rat, Rat};
use crate::vector::Dist;

/// Normalization tolerance: evaluated entries must sum to one within this.
pub fn tau_norm() -> Rat {
    rat(1, 1_000_000_000)
}

/// Negativity tolerance: entries above `-tau_neg` are clamped to zero,
/// anything below is an error.
pub fn tau_neg() -> Rat {
    rat(1, 1_000_000_000_000)
}

/// Tolerance for aggregate agreement in (meta-)consistency checks.
pub fn consistency_tol() -> Rat {
    rat(1, 1_000_000_000)
}

/// Number of deterministic sample points used by default checks.
pub const DEFAULT_SAMPLE_POINTS: usize = 64;

/// Errors raised by parametric models and their combinations.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A structural precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A concrete combination failed during evaluation.
    #[error(transparent)]
    Combine(#[from] CombineError),
    /// A parameter box was built with a lower bound above an upper bound.
    #[error("interval {lo}..{hi} at coordinate {coord} is empty")]
    BadBounds {
        /// Coordinate position.
        coord: usize,
        /// Lower endpoint.
        lo: String,
        /// Upper endpoint.
        hi: String,
    },
    /// A parameter point had the wrong dimension.
    #[error("expected {expected} parameters, found {found}")]
    DimensionMismatch {
        /// Expected dimension.
        expected: usize,
        /// Supplied dimension.
        found: usize,
    },
    /// A parameter coordinate left its interval.
    #[error("parameter {value} at coordinate {coord} is outside its box")]
    OutOfBox {
        /// Coordinate position.
        coord: usize,
        /// Offending value.
        value: String,
    },
    /// Two models that must share a parameter box do not.
    #[error("parameter boxes differ")]
    BoundsMismatch,
    /// An evaluated entry was negative beyond tolerance.
    #[error("evaluated entry {value} at category {category:?} is negative")]
    NegativeEntry {
        /// Offending category name.
        category: String,
        /// Offending value.
        value: String,
    },
    /// An evaluation missed total mass one beyond tolerance.
    #[error("evaluated mass {0} is not within tolerance of 1")]
    NotNormalized(String),
    /// The pair is not meta-consistent on the sampled points.
    #[error("models are not meta-consistent: gap {gap} at theta = {theta:?}")]
    NotMetaConsistent {
        /// Worst sampled parameter point.
        theta: Vec<String>,
        /// Largest aggregate gap there.
        gap: String,
    },
    /// A lower-combination pair had inconsistent evaluations.
    #[error("parameter pair is inadmissible: aggregates differ by {gap} at theta = {theta:?}")]
    InconsistentPair {
        /// The offending concatenated parameter point.
        theta: Vec<String>,
        /// Aggregate gap.
        gap: String,
    },
    /// A meta-star evaluation hit a parameter where consistency fails.
    #[error("evaluations are inconsistent at theta = {theta:?} (gap {gap})")]
    NotConsistentAt {
        /// The offending parameter point.
        theta: Vec<String>,
        /// Aggregate gap.
        gap: String,
    },
    /// A flag coordinate was not exactly zero or one.
    #[error("flag coordinate must be exactly 0 or 1, found {0}")]
    BadFlag(String),
    /// Grid filtering left no admissible parameter.
    #[error("no admissible parameter point survives the restriction")]
    EmptyParameterSet,
    /// An operation expected a different combination variant.
    #[error("operation does not apply to variant {0:?}")]
    WrongVariant(String),
    /// A model description could not be interpreted.
    #[error("bad model description: {0}")]
    BadDescription(String),
}

/// A box of parameter intervals with exact rational endpoints.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParamBox {
    lo: Vec<Rat>,
    hi: Vec<Rat>,
}

impl ParamBox {
    /// Builds a box from per-coordinate `(lo, hi)` intervals.
    pub fn new(bounds: Vec<(Rat, Rat)>) -> Result<Self, ModelError> {
        let mut lo = Vec::with_capacity(bounds.len());
        let mut hi = Vec::with_capacity(bounds.len());
        for (coord, (l, h)) in bounds.into_iter().enumerate() {
            if l > h {
                return Err(ModelError::BadBounds {
                    coord,
                    lo: format_rat(&l),
                    hi: format_rat(&h),
                });
            }
            lo.push(l);
            hi.push(h);
        }
        Ok(ParamBox { lo, hi })
    }

    /// The unit box `[0,1]^dim`.
    pub fn unit(dim: usize) -> Self {
        ParamBox {
            lo: vec![Rat::zero(); dim],
            hi: vec![Rat::one(); dim],
        }
    }

    /// The zero-dimensional box.
    pub fn empty() -> Self {
        ParamBox {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// The interval of one coordinate.
    pub fn interval(&self, coord: usize) -> (&Rat, &Rat) {
        (&self.lo[coord], &self.hi[coord])
    }

    /// Whether a point lies in the box (dimension included).
    pub fn contains(&self, theta: &[Rat]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .enumerate()
                .all(|(t, v)| *v >= self.lo[t] && *v <= self.hi[t])
    }

    /// Errors unless the point lies in the box.
    pub fn check(&self, theta: &[Rat]) -> Result<(), ModelError> {
        if theta.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        for (t, v) in theta.iter().enumerate() {
            if *v < self.lo[t] || *v > self.hi[t] {
                return Err(ModelError::OutOfBox {
                    coord: t,
                    value: format_rat(v),
                });
            }
        }
        Ok(())
    }

    /// Concatenation of two boxes.
    pub fn concat(&self, other: &ParamBox) -> ParamBox {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.extend_from_slice(&other.lo);
        hi.extend_from_slice(&other.hi);
        ParamBox { lo, hi }
    }

    /// This box with one trailing `[0,1]` flag coordinate.
    pub fn with_flag(&self) -> ParamBox {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.push(Rat::zero());
        hi.push(Rat::one());
        ParamBox { lo, hi }
    }
}

type EvalFn = Arc<dyn Fn(&[Rat]) -> Result<Vec<Rat>, ModelError> + Send + Sync>;

/// A parametric model: an exact evaluator from a parameter box to
/// distributions on a fixed index set.
///
/// `simplex_blocks` records groups of coordinates that are the free part of
/// a probability simplex (each block sums to at most one); deterministic and
/// random parameter samplers respect them so that sampled points always
/// evaluate to valid distributions.
#[derive(Clone)]
pub struct ParametricModel {
    index: CategorySet,
    bounds: ParamBox,
    blocks: Vec<(usize, usize)>,
    eval_fn: EvalFn,
}

impl ParametricModel {
    /// Wraps an evaluator. The closure returns raw entries in index order;
    /// [`ParametricModel::eval`] validates and exactly renormalizes them.
    pub fn from_fn(
        index: CategorySet,
        bounds: ParamBox,
        eval: impl Fn(&[Rat]) -> Result<Vec<Rat>, ModelError> + Send + Sync + 'static,
    ) -> Self {
        ParametricModel {
            index,
            bounds,
            blocks: Vec::new(),
            eval_fn: Arc::new(eval),
        }
    }

    /// Attaches simplex block metadata; each `(start, len)` names a run of
    /// coordinates whose sum must stay at most one.
    pub fn with_simplex_blocks(mut self, blocks: Vec<(usize, usize)>) -> Self {
        self.blocks = blocks;
        self
    }

    /// The index set of the evaluated distributions.
    pub fn index(&self) -> &CategorySet {
        &self.index
    }

    /// The parameter box.
    pub fn bounds(&self) -> &ParamBox {
        &self.bounds
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Simplex block metadata.
    pub fn simplex_blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Evaluates at a parameter point: checks the box, runs the evaluator,
    /// rejects entries below `-tau_neg`, clamps tiny negatives to zero,
    /// rejects masses off one by more than `tau_norm`, and renormalizes
    /// exactly.
    pub fn eval(&self, theta: &[Rat]) -> Result<Dist, ModelError> {
        self.bounds.check(theta)?;
        let mut entries = (self.eval_fn)(theta)?;
        if entries.len() != self.index.len() {
            return Err(CoreError::LengthMismatch {
                expected: self.index.len(),
                found: entries.len(),
            }
            .into());
        }
        let neg_tol = tau_neg();
        for (t, e) in entries.iter_mut().enumerate() {
            if e.is_negative() {
                if -&*e > neg_tol {
                    return Err(ModelError::NegativeEntry {
                        category: self.index.get(t).unwrap().as_str().to_string(),
                        value: format_rat(e),
                    });
                }
                *e = Rat::zero();
            }
        }
        let mass = entries.iter().fold(Rat::zero(), |acc, e| acc + e);
        if (&mass - Rat::one()).abs() > tau_norm() {
            return Err(ModelError::NotNormalized(format_rat(&mass)));
        }
        if !mass.is_one() {
            for e in entries.iter_mut() {
                *e /= &mass;
            }
        }
        Ok(Dist::from_entries(self.index.clone(), entries)?)
    }

    /// The constant model at a fixed distribution (dimension zero).
    pub fn constant(dist: Dist) -> Self {
        let index = dist.index().clone();
        let entries: Vec<Rat> = dist.entries().to_vec();
        ParametricModel::from_fn(index, ParamBox::empty(), move |_| Ok(entries.clone()))
    }

    /// The saturated model on an index set `{i_0, ..., i_n}` in its standard
    /// parametrization: `f(i_t) = θ_t` for `t >= 1` and `f(i_0) = 1 - Σ θ_t`.
    ///
    /// ```
    /// use markov_comb::parametric::ParametricModel;
    /// use markov_comb::rational::rat;
    /// use markov_comb::CategorySet;
    /// let m = ParametricModel::saturated(CategorySet::range(3).unwrap());
    /// let d = m.eval(&[rat(1, 2), rat(1, 3)]).unwrap();
    /// assert_eq!(d.entries(), &[rat(1, 6), rat(1, 2), rat(1, 3)]);
    /// ```
    pub fn saturated(index: CategorySet) -> Self {
        let n = index.len();
        let model = ParametricModel::from_fn(index, ParamBox::unit(n - 1), move |theta| {
            let mut entries = Vec::with_capacity(n);
            let rest: Rat = theta.iter().fold(Rat::zero(), |acc, t| acc + t);
            entries.push(Rat::one() - rest);
            entries.extend(theta.iter().cloned());
            Ok(entries)
        });
        if n > 1 {
            model.with_simplex_blocks(vec![(0, n - 1)])
        } else {
            model
        }
    }

    /// The binomial model with `n` trials on categories `"0", ..., "n"`:
    /// `f(i) = C(n, i) θ^i (1-θ)^(n-i)`.
    ///
    /// ```
    /// use markov_comb::parametric::ParametricModel;
    /// use markov_comb::rational::rat;
    /// let m = ParametricModel::binomial(2);
    /// let d = m.eval(&[rat(1, 2)]).unwrap();
    /// assert_eq!(d.entries(), &[rat(1, 4), rat(1, 2), rat(1, 4)]);
    /// ```
    pub fn binomial(n: usize) -> Self {
        let index = CategorySet::range(n + 1).expect("non-empty");
        let coeffs: Vec<Rat> = (0..=n).map(|i| Rat::from_integer(binom(n, i))).collect();
        ParametricModel::from_fn(index, ParamBox::unit(1), move |theta| {
            let t = &theta[0];
            let ct = Rat::one() - t;
            let mut entries = Vec::with_capacity(n + 1);
            for (i, c) in coeffs.iter().enumerate() {
                let mut e = c.clone();
                for _ in 0..i {
                    e *= t;
                }
                for _ in i..n {
                    e *= &ct;
                }
                entries.push(e);
            }
            Ok(entries)
        })
    }

    /// A model whose entries are polynomials in the parameters.
    pub fn from_polynomials(
        index: CategorySet,
        bounds: ParamBox,
        polys: Vec<Polynomial>,
    ) -> Result<Self, ModelError> {
        if polys.len() != index.len() {
            return Err(CoreError::LengthMismatch {
                expected: index.len(),
                found: polys.len(),
            }
            .into());
        }
        let dim = bounds.dim();
        for poly in &polys {
            if poly.max_arity() > dim {
                return Err(ModelError::BadDescription(format!(
                    "polynomial uses {} variables but the box has dimension {}",
                    poly.max_arity(),
                    dim
                )));
            }
        }
        Ok(ParametricModel::from_fn(index, bounds, move |theta| {
            Ok(polys.iter().map(|poly| poly.eval(theta)).collect())
        }))
    }

    /// Parses a polynomial model from its JSON description:
    /// `{"index": [...], "box": [["0","1"], ...], "entries": [[{"coef": "3", "powers": [1]}, ...], ...]}`
    /// with an optional `"blocks": [[start, len], ...]`.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let raw: RawPolyModel = serde_json::from_str(text)
            .map_err(|e| ModelError::BadDescription(e.to_string()))?;
        raw.build()
    }

    /// The model with parameters re-read through `map`; evaluation applies
    /// `map` and runs this model's full checked pipeline on the result.
    pub fn reparametrize(
        &self,
        bounds: ParamBox,
        blocks: Vec<(usize, usize)>,
        map: impl Fn(&[Rat]) -> Vec<Rat> + Send + Sync + 'static,
    ) -> ParametricModel {
        let inner = self.clone();
        ParametricModel {
            index: self.index.clone(),
            bounds,
            blocks,
            eval_fn: Arc::new(move |theta| {
                let mapped = map(theta);
                Ok(inner.eval(&mapped)?.into_vector().into_entries())
            }),
        }
    }

    /// Cylindrical extension: the model reads its parameters from the listed
    /// coordinates of a larger box and ignores the rest.
    pub fn select_coords(
        &self,
        bounds: ParamBox,
        blocks: Vec<(usize, usize)>,
        coords: Vec<usize>,
    ) -> ParametricModel {
        self.reparametrize(bounds, blocks, move |theta| {
            coords.iter().map(|&c| theta[c].clone()).collect()
        })
    }

    /// Deterministic in-box parameter points for this model; see
    /// [`low_discrepancy_points`].
    pub fn sample_points(&self, count: usize) -> Vec<Vec<Rat>> {
        low_discrepancy_points(&self.bounds, &self.blocks, count)
    }
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("index", &self.index)
            .field("dim", &self.dim())
            .finish_non_exhaustive()
    }
}

fn binom(n: usize, k: usize) -> num::BigInt {
    let mut acc = num::BigInt::one();
    for t in 0..k.min(n - k) {
        acc = acc * num::BigInt::from(n - t) / num::BigInt::from(t + 1);
    }
    acc
}

/// A polynomial with rational coefficients in several variables.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Polynomial {
    terms: Vec<(Rat, Vec<u32>)>,
}

impl Polynomial {
    /// Builds from `(coefficient, exponent per variable)` terms.
    pub fn new(terms: Vec<(Rat, Vec<u32>)>) -> Self {
        Polynomial { terms }
    }

    /// The constant polynomial.
    pub fn constant(c: Rat) -> Self {
        Polynomial {
            terms: vec![(c, Vec::new())],
        }
    }

    /// Largest variable position referenced plus one.
    pub fn max_arity(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, powers)| {
                powers
                    .iter()
                    .rposition(|&e| e > 0)
                    .map_or(0, |last| last + 1)
            })
            .max()
            .unwrap_or(0)
    }

    /// Exact evaluation.
    pub fn eval(&self, theta: &[Rat]) -> Rat {
        let mut acc = Rat::zero();
        for (coef, powers) in &self.terms {
            let mut term = coef.clone();
            for (v, &e) in powers.iter().enumerate() {
                for _ in 0..e {
                    term *= &theta[v];
                }
            }
            acc += term;
        }
        acc
    }
}

#[derive(Deserialize)]
struct RawTerm {
    coef: String,
    #[serde(default)]
    powers: Vec<u32>,
}

#[derive(Deserialize)]
struct RawPolyModel {
    index: CategorySet,
    #[serde(rename = "box")]
    bounds: Vec<[String; 2]>,
    entries: Vec<Vec<RawTerm>>,
    #[serde(default)]
    blocks: Vec<[usize; 2]>,
}

impl RawPolyModel {
    fn build(self) -> Result<ParametricModel, ModelError> {
        let mut intervals = Vec::with_capacity(self.bounds.len());
        for [lo, hi] in &self.bounds {
            let l = parse_rat(lo).map_err(|e| ModelError::BadDescription(e.to_string()))?;
            let h = parse_rat(hi).map_err(|e| ModelError::BadDescription(e.to_string()))?;
            intervals.push((l, h));
        }
        let bounds = ParamBox::new(intervals)?;
        let mut polys = Vec::with_capacity(self.entries.len());
        for terms in self.entries {
            let mut out = Vec::with_capacity(terms.len());
            for term in terms {
                let coef = parse_rat(&term.coef)
                    .map_err(|e| ModelError::BadDescription(e.to_string()))?;
                out.push((coef, term.powers));
            }
            polys.push(Polynomial::new(out));
        }
        let blocks = self.blocks.iter().map(|&[s, l]| (s, l)).collect();
        Ok(ParametricModel::from_polynomials(self.index, bounds, polys)?
            .with_simplex_blocks(blocks))
    }
}

/// First `n` primes, used as radical-inverse bases.
fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while out.len() < n {
        if out.iter().all(|p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

/// Radical inverse of `t` in base `b`, as an exact rational in `[0, 1)`.
fn radical_inverse(mut t: u64, base: u64) -> Rat {
    let mut num = Rat::zero();
    let mut scale = Rat::new(1.into(), (base as i64).into());
    while t > 0 {
        num += Rat::from_integer(((t % base) as i64).into()) * &scale;
        scale /= Rat::from_integer((base as i64).into());
        t /= base;
    }
    num
}

/// Deterministic low-discrepancy parameter points inside a box.
///
/// Points come from the Halton sequence (prime bases, exact rationals).
/// Coordinates inside a simplex block are passed through a stick-breaking
/// transform so each block sums to less than one; the remaining coordinates
/// are scaled into their intervals.
pub fn low_discrepancy_points(
    bounds: &ParamBox,
    blocks: &[(usize, usize)],
    count: usize,
) -> Vec<Vec<Rat>> {
    let dim = bounds.dim();
    let bases = primes(dim);
    let mut in_block = vec![false; dim];
    for &(start, len) in blocks {
        for c in start..start + len {
            in_block[c] = true;
        }
    }
    let mut points = Vec::with_capacity(count);
    for t in 1..=count as u64 {
        let raw: Vec<Rat> = (0..dim)
            .map(|d| radical_inverse(t, bases[d]))
            .collect();
        let mut theta = vec![Rat::zero(); dim];
        for (c, u) in raw.iter().enumerate() {
            if !in_block[c] {
                let (lo, hi) = bounds.interval(c);
                theta[c] = lo + u * (hi - lo);
            }
        }
        for &(start, len) in blocks {
            let mut remaining = Rat::one();
            for c in start..start + len {
                let piece = &raw[c] * &remaining;
                remaining -= &piece;
                theta[c] = piece;
            }
        }
        points.push(theta);
    }
    points
}

/// Report of a meta-consistency check.
#[derive(Clone, Debug)]
pub struct MetaCheck {
    /// Whether every sampled point was consistent within tolerance.
    pub consistent: bool,
    /// The sampled point with the largest aggregate gap, if any gap was seen.
    pub worst_theta: Option<Vec<Rat>>,
    /// The largest aggregate gap over the sample.
    pub max_gap: Rat,
}

/// Checks meta-consistency of two models over a shared parameter box at the
/// given points: aggregates along `p` and `q` must agree within `tol`
/// everywhere, and the worst point is reported.
pub fn is_meta_consistent_at(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    points: &[Vec<Rat>],
    tol: &Rat,
) -> Result<MetaCheck, ModelError> {
    if f.bounds() != g.bounds() {
        return Err(ModelError::BoundsMismatch);
    }
    check_model_mapping(f, p)?;
    check_model_mapping(g, q)?;
    if p.codomain() != q.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: q.codomain().names(),
        }
        .into());
    }
    let mut worst: Option<Vec<Rat>> = None;
    let mut max_gap = Rat::zero();
    for theta in points {
        let f_m = f.eval(theta)?.aggregate(p)?;
        let g_m = g.eval(theta)?.aggregate(q)?;
        for (a, b) in f_m.entries().iter().zip(g_m.entries()) {
            let gap = (a - b).abs();
            if gap > max_gap {
                max_gap = gap;
                worst = Some(theta.clone());
            }
        }
    }
    Ok(MetaCheck {
        consistent: max_gap <= *tol,
        worst_theta: worst,
        max_gap,
    })
}

/// Meta-consistency on the default deterministic sample of
/// [`DEFAULT_SAMPLE_POINTS`] points with tolerance [`consistency_tol`].
pub fn is_meta_consistent(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<MetaCheck, ModelError> {
    if f.bounds() != g.bounds() {
        return Err(ModelError::BoundsMismatch);
    }
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let points = low_discrepancy_points(f.bounds(), &blocks, DEFAULT_SAMPLE_POINTS);
    is_meta_consistent_at(f, g, p, q, &points, &consistency_tol())
}

pub(crate) fn check_model_mapping(
    model: &ParametricModel,
    mapping: &CategoryMapping,
) -> Result<(), ModelError> {
    if model.index() != mapping.domain() {
        return Err(CoreError::SetMismatch {
            expected: mapping.domain().names(),
            found: model.index().names(),
        }
        .into());
    }
    Ok(())
}

pub(crate) fn merge_blocks(
    a: &[(usize, usize)],
    b: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = a.to_vec();
    for blk in b {
        if !out.contains(blk) {
            out.push(*blk);
        }
    }
    out.sort_unstable();
    out
}

pub(crate) fn shift_blocks(blocks: &[(usize, usize)], offset: usize) -> Vec<(usize, usize)> {
    blocks.iter().map(|&(s, l)| (s + offset, l)).collect()
}
