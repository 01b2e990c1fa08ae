//! Markov combinations of two compatible vectors.
//!
//! Given `p: I -> M`, `q: J -> M` and vectors `f` on `I`, `g` on `J`, the
//! left combination puts mass `f_i * g_j / f_{M,k}` on each product pair
//! `(i, j)` in the block over `k = p(i) = q(j)`; the right combination
//! divides by `g_{M,k}` instead. When the aggregates of `f` and `g` agree
//! exactly the two coincide and the common value is the Markov combination
//! `star`. Projections aggregate a combined vector back onto one component.

use num::Zero;
use thiserror::Error;

use crate::category::{Category, CategoryMapping, CoreError};
use crate::vector::{Axis, IndexedVector, ProductIndex};

/// Errors raised by concrete combination operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombineError {
    /// A structural precondition failed (index or codomain mismatch).
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A block denominator was zero in strict mode.
    #[error("zero aggregate at metacategory {0:?}")]
    ZeroAggregate(String),
    /// `star` was asked of a pair whose aggregates differ.
    #[error("aggregates differ at metacategory {meta:?}: {left} vs {right}")]
    NotConsistent {
        /// First metacategory where the aggregates differ.
        meta: String,
        /// Aggregate of the left vector there.
        left: String,
        /// Aggregate of the right vector there.
        right: String,
    },
}

/// How zero block denominators are treated.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum ZeroPolicy {
    /// Raise [`CombineError::ZeroAggregate`]. The default.
    #[default]
    Strict,
    /// Emit an all-zero block and flag the result as possibly sub-normalized.
    Permissive,
}

fn check_inputs(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<(), CombineError> {
    if f.index() != prod.mapping_i().domain() {
        return Err(CoreError::SetMismatch {
            expected: prod.mapping_i().domain().names(),
            found: f.index().names(),
        }
        .into());
    }
    if g.index() != prod.mapping_j().domain() {
        return Err(CoreError::SetMismatch {
            expected: prod.mapping_j().domain().names(),
            found: g.index().names(),
        }
        .into());
    }
    Ok(())
}

fn combine_impl(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
    divide_by_left: bool,
    policy: ZeroPolicy,
) -> Result<(IndexedVector, bool), CombineError> {
    check_inputs(f, g, prod)?;
    let f_m = f.aggregate(prod.mapping_i())?;
    let g_m = g.aggregate(prod.mapping_j())?;
    let mut entries = Vec::with_capacity(prod.cardinality());
    let mut subnormalized = false;
    for &(kt, it, jt) in prod.triple_positions() {
        let denom = if divide_by_left {
            f_m.get_idx(kt)
        } else {
            g_m.get_idx(kt)
        };
        if denom.is_zero() {
            match policy {
                ZeroPolicy::Strict => {
                    return Err(CombineError::ZeroAggregate(
                        prod.mapping_i()
                            .codomain()
                            .get(kt)
                            .unwrap()
                            .as_str()
                            .to_string(),
                    ))
                }
                ZeroPolicy::Permissive => {
                    // Mass is lost exactly when the other factor carries any.
                    let other = if divide_by_left {
                        g_m.get_idx(kt)
                    } else {
                        f_m.get_idx(kt)
                    };
                    if !other.is_zero() {
                        subnormalized = true;
                    }
                    entries.push(num::BigRational::zero());
                    continue;
                }
            }
        }
        entries.push(f.get_idx(it) * g.get_idx(jt) / denom);
    }
    Ok((
        IndexedVector::new(prod.index().clone(), entries)?,
        subnormalized,
    ))
}

/// The left combination `(f, g) -> f_i * g_j / f_{M,p(i)}` in strict mode.
///
/// ```
/// use markov_comb::{left_combine, CategoryMapping, CategorySet, IndexedVector, ProductIndex};
/// use markov_comb::rational::rat;
/// let i = CategorySet::new(["a", "b", "c"]).unwrap();
/// let j = CategorySet::new(["C", "D", "H", "S"]).unwrap();
/// let p = CategoryMapping::new(i.clone(), [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
/// let q = CategoryMapping::new(j.clone(), [("C", "1"), ("D", "1"), ("H", "1"), ("S", "2")]).unwrap();
/// let prod = ProductIndex::new(&p, &q).unwrap();
/// let f = IndexedVector::new(i, vec![rat(3, 4), rat(1, 8), rat(1, 8)]).unwrap();
/// let g = IndexedVector::new(j, vec![rat(1, 4); 4]).unwrap();
/// let c = left_combine(&f, &g, &prod).unwrap();
/// assert_eq!(c.entries(), &[rat(1, 4), rat(1, 4), rat(1, 4), rat(1, 8), rat(1, 8)]);
/// ```
pub fn left_combine(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<IndexedVector, CombineError> {
    combine_impl(f, g, prod, true, ZeroPolicy::Strict).map(|(v, _)| v)
}

/// The right combination `(f, g) -> f_i * g_j / g_{M,q(j)}` in strict mode.
pub fn right_combine(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<IndexedVector, CombineError> {
    combine_impl(f, g, prod, false, ZeroPolicy::Strict).map(|(v, _)| v)
}

/// Left combination with an explicit zero policy. The boolean reports
/// whether permissive zeroing dropped any mass, leaving the result
/// sub-normalized.
pub fn left_combine_with(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
    policy: ZeroPolicy,
) -> Result<(IndexedVector, bool), CombineError> {
    combine_impl(f, g, prod, true, policy)
}

/// Right combination with an explicit zero policy; see [`left_combine_with`].
pub fn right_combine_with(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
    policy: ZeroPolicy,
) -> Result<(IndexedVector, bool), CombineError> {
    combine_impl(f, g, prod, false, policy)
}

/// Whether the aggregates of `f` along `p` and of `g` along `q` coincide
/// exactly, metacategory by metacategory.
pub fn is_consistent(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<bool, CombineError> {
    Ok(first_disagreement(f, g, prod)?.is_none())
}

/// First metacategory where the aggregates differ, with both values.
pub fn first_disagreement(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<Option<(Category, num::BigRational, num::BigRational)>, CombineError> {
    check_inputs(f, g, prod)?;
    let f_m = f.aggregate(prod.mapping_i())?;
    let g_m = g.aggregate(prod.mapping_j())?;
    for (kt, k) in prod.mapping_i().codomain().iter().enumerate() {
        if f_m.get_idx(kt) != g_m.get_idx(kt) {
            return Ok(Some((
                k.clone(),
                f_m.get_idx(kt).clone(),
                g_m.get_idx(kt).clone(),
            )));
        }
    }
    Ok(None)
}

/// The Markov combination of a consistent pair: the common value of the
/// left and right combinations. Errors when the pair is not consistent.
pub fn star(
    f: &IndexedVector,
    g: &IndexedVector,
    prod: &ProductIndex,
) -> Result<IndexedVector, CombineError> {
    if let Some((meta, left, right)) = first_disagreement(f, g, prod)? {
        return Err(CombineError::NotConsistent {
            meta: meta.as_str().to_string(),
            left: crate::rational::format_rat(&left),
            right: crate::rational::format_rat(&right),
        });
    }
    left_combine(f, g, prod)
}

/// Aggregates a vector on the product back onto one axis.
///
/// For a consistent pair, `project(star(f, g), prod, Axis::I)` returns `f`
/// exactly, on `I` in its original order.
pub fn project(
    v: &IndexedVector,
    prod: &ProductIndex,
    axis: Axis,
) -> Result<IndexedVector, CombineError> {
    Ok(v.aggregate(&prod.projection(axis))?)
}

/// The composite mapping sending each product pair through one axis into a
/// further mapping `next`, e.g. `(i, j) -> next(i)` for [`Axis::I`]. This is
/// what makes iterated combinations expressible: the product index becomes
/// the domain of new mappings.
pub fn induced_mapping(
    prod: &ProductIndex,
    axis: Axis,
    next: &CategoryMapping,
) -> Result<CategoryMapping, CombineError> {
    Ok(prod.projection(axis).compose(next)?)
}
