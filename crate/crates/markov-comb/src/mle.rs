//! Closed-form maximum likelihood estimation for the Markov combination of
//! two saturated models, certified by a Horn pair.
//!
//! For data `x` on the mapping product, the estimate is
//! `x̂_ij = u_i v_j / (u_Mk x̄)` with row sums `u`, column sums `v`, block
//! masses `u_M`, and total mass `x̄`. The map `x -> x̂` is rational in the
//! data, and the certificate that it maximizes the likelihood is the Horn
//! pair `(H, λ)`: an integer matrix whose columns sum to zero together with
//! the all-ones vector, such that the product of the linear forms `Hx`
//! raised to the column exponents reproduces `x̂` entrywise.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::{CategoryMapping, CoreError};
use crate::rational::{format_rat, to_f64, Rat};
use crate::vector::{Dist, IndexedVector, ProductIndex};

/// Errors raised by estimation and certification.
#[derive(Debug, Error)]
pub enum MleError {
    /// A structural precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// The data vector has no mass.
    #[error("data vector is identically zero")]
    AllZero,
    /// A block carries positive data but zero block mass.
    #[error("block {0:?} has positive data but zero mass")]
    ZeroBlock(String),
    /// Horn verification needs strictly positive data.
    #[error("data entry at {0:?} is not strictly positive")]
    NotPositive(String),
    /// A linear form vanished under a negative exponent.
    #[error("linear form {0:?} is zero but has exponent -1")]
    ZeroForm(String),
    /// The model has no mass where the data does.
    #[error("model is zero at {0:?} where the data is positive")]
    SupportViolation(String),
    /// A likelihood exponent does not fit machine range.
    #[error("likelihood exponent too large: {0}")]
    ExponentTooLarge(String),
    /// The Horn pair does not match the mappings it is checked against.
    #[error("Horn pair shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Non-negative data on a mapping product, holding at least some mass.
/// Entries may be a distribution or raw intensities; estimation divides by
/// the total either way.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "IndexedVector", into = "IndexedVector")]
pub struct DataVector(IndexedVector);

impl DataVector {
    /// Validates a vector as data: non-negative, not identically zero.
    pub fn new(v: IndexedVector) -> Result<Self, MleError> {
        for (t, e) in v.entries().iter().enumerate() {
            if e.is_negative() {
                return Err(CoreError::NegativeEntry {
                    category: v.index().get(t).unwrap().as_str().to_string(),
                    value: format_rat(e),
                }
                .into());
            }
        }
        if v.sum().is_zero() {
            return Err(MleError::AllZero);
        }
        Ok(DataVector(v))
    }

    /// The underlying vector.
    pub fn vector(&self) -> &IndexedVector {
        &self.0
    }

    /// Total mass.
    pub fn total(&self) -> Rat {
        self.0.sum()
    }
}

impl TryFrom<IndexedVector> for DataVector {
    type Error = MleError;

    fn try_from(v: IndexedVector) -> Result<Self, MleError> {
        DataVector::new(v)
    }
}

impl From<DataVector> for IndexedVector {
    fn from(d: DataVector) -> IndexedVector {
        d.0
    }
}

impl std::ops::Deref for DataVector {
    type Target = IndexedVector;

    fn deref(&self) -> &IndexedVector {
        &self.0
    }
}

fn margins(
    x: &DataVector,
    prod: &ProductIndex,
) -> Result<(Vec<Rat>, Vec<Rat>, Vec<Rat>, Rat), MleError> {
    if x.index() != prod.index() {
        return Err(CoreError::SetMismatch {
            expected: prod.index().names(),
            found: x.index().names(),
        }
        .into());
    }
    let mut u = vec![Rat::zero(); prod.mapping_i().domain().len()];
    let mut v = vec![Rat::zero(); prod.mapping_j().domain().len()];
    let mut um = vec![Rat::zero(); prod.mapping_i().codomain().len()];
    let mut total = Rat::zero();
    for (pos, &(kt, it, jt)) in prod.triple_positions().iter().enumerate() {
        let e = x.get_idx(pos);
        u[it] += e;
        v[jt] += e;
        um[kt] += e;
        total += e;
    }
    Ok((u, v, um, total))
}

/// The closed-form maximum likelihood estimate on the combination of the
/// two saturated models: `x̂_ij = u_i v_j / (u_Mk x̄)`. Blocks without data
/// stay at zero.
///
/// ```
/// use markov_comb::mle::{mle, DataVector};
/// use markov_comb::rational::rat;
/// use markov_comb::{CategoryMapping, CategorySet, IndexedVector, ProductIndex};
/// let i = CategorySet::new(["a", "b"]).unwrap();
/// let j = CategorySet::new(["x", "y"]).unwrap();
/// let p = CategoryMapping::constant(&i, "m");
/// let q = CategoryMapping::constant(&j, "m");
/// let prod = ProductIndex::new(&p, &q).unwrap();
/// let x = DataVector::new(IndexedVector::new(
///     prod.index().clone(),
///     vec![rat(1, 2), rat(1, 4), rat(1, 4), rat(0, 1)],
/// ).unwrap()).unwrap();
/// let est = mle(&x, &p, &q).unwrap();
/// // Independence estimate: row sums (3/4, 1/4), column sums (3/4, 1/4).
/// assert_eq!(est.entries()[0], rat(9, 16));
/// ```
pub fn mle(x: &DataVector, p: &CategoryMapping, q: &CategoryMapping) -> Result<Dist, MleError> {
    let prod = ProductIndex::new(p, q)?;
    let (u, v, um, total) = margins(x, &prod)?;
    if total.is_zero() {
        return Err(MleError::AllZero);
    }
    let mut entries = Vec::with_capacity(prod.cardinality());
    for (pos, &(kt, it, jt)) in prod.triple_positions().iter().enumerate() {
        if um[kt].is_zero() {
            if !x.get_idx(pos).is_zero() {
                return Err(MleError::ZeroBlock(
                    p.codomain().get(kt).unwrap().as_str().to_string(),
                ));
            }
            entries.push(Rat::zero());
        } else {
            entries.push(&u[it] * &v[jt] / (&um[kt] * &total));
        }
    }
    Ok(Dist::from_entries(prod.index().clone(), entries)?)
}

/// The Horn pair certifying the estimator: one row per category of `I`,
/// `J`, and `M` arranged block by block, plus a final all `-1` row; the
/// companion vector is all ones.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct HornPair {
    /// The integer matrix, row-major.
    pub h: Vec<Vec<i64>>,
    /// The exponent multipliers, one per column.
    pub lambda: Vec<i64>,
    /// Human-readable row labels.
    pub row_labels: Vec<String>,
}

impl HornPair {
    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.h.len()
    }

    /// Number of columns, one per product category.
    pub fn cols(&self) -> usize {
        self.lambda.len()
    }

    /// Sum of each column; zero for a valid pair.
    pub fn column_sums(&self) -> Vec<i64> {
        let mut sums = vec![0; self.cols()];
        for row in &self.h {
            for (c, e) in row.iter().enumerate() {
                sums[c] += e;
            }
        }
        sums
    }
}

/// Builds the Horn pair of the estimator for a pair of mappings: the block
/// direct sum of the per-block matrices (row of ones per `I_k` category,
/// per `J_k` category, then a `-1` row), augmented by a global `-1` row.
pub fn build_horn_pair(
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<HornPair, MleError> {
    let prod = ProductIndex::new(p, q)?;
    let cols = prod.cardinality();
    let mut h = Vec::new();
    let mut row_labels = Vec::new();
    let triples = prod.triple_positions();
    for kt in 0..p.codomain().len() {
        let fiber_i = p.fiber_indices(kt);
        let fiber_j = q.fiber_indices(kt);
        for &it in &fiber_i {
            let mut row = vec![0i64; cols];
            for (pos, &(k2, i2, _)) in triples.iter().enumerate() {
                if k2 == kt && i2 == it {
                    row[pos] = 1;
                }
            }
            h.push(row);
            row_labels.push(format!(
                "i={}",
                p.domain().get(it).unwrap().as_str()
            ));
        }
        for &jt in &fiber_j {
            let mut row = vec![0i64; cols];
            for (pos, &(k2, _, j2)) in triples.iter().enumerate() {
                if k2 == kt && j2 == jt {
                    row[pos] = 1;
                }
            }
            h.push(row);
            row_labels.push(format!(
                "j={}",
                q.domain().get(jt).unwrap().as_str()
            ));
        }
        let mut row = vec![0i64; cols];
        for (pos, &(k2, _, _)) in triples.iter().enumerate() {
            if k2 == kt {
                row[pos] = -1;
            }
        }
        h.push(row);
        row_labels.push(format!(
            "k={}",
            p.codomain().get(kt).unwrap().as_str()
        ));
    }
    h.push(vec![-1i64; cols]);
    row_labels.push("total".to_string());
    Ok(HornPair {
        h,
        lambda: vec![1; cols],
        row_labels,
    })
}

/// Checks the Horn identity on strictly positive data: the product of the
/// linear forms `(Hx)_l` raised to `h_{l,(i,j)}`, scaled by `λ_{ij}`, must
/// reproduce the estimate exactly.
pub fn verify_horn_identity(
    hp: &HornPair,
    x: &DataVector,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<bool, MleError> {
    let prod = ProductIndex::new(p, q)?;
    if x.index() != prod.index() {
        return Err(CoreError::SetMismatch {
            expected: prod.index().names(),
            found: x.index().names(),
        }
        .into());
    }
    if hp.cols() != prod.cardinality() || hp.h.iter().any(|row| row.len() != hp.cols()) {
        return Err(MleError::ShapeMismatch(format!(
            "{} columns for a product of size {}",
            hp.cols(),
            prod.cardinality()
        )));
    }
    for (t, e) in x.entries().iter().enumerate() {
        if !e.is_positive() {
            return Err(MleError::NotPositive(
                x.index().get(t).unwrap().as_str().to_string(),
            ));
        }
    }
    let forms: Vec<Rat> = hp
        .h
        .iter()
        .map(|row| {
            row.iter()
                .zip(x.entries())
                .fold(Rat::zero(), |acc, (&hc, e)| acc + e * Rat::from_integer(hc.into()))
        })
        .collect();
    let est = mle(x, p, q)?;
    for pos in 0..hp.cols() {
        let mut value = Rat::from_integer(hp.lambda[pos].into());
        for (l, row) in hp.h.iter().enumerate() {
            match row[pos] {
                0 => {}
                1 => value *= &forms[l],
                -1 => {
                    if forms[l].is_zero() {
                        return Err(MleError::ZeroForm(hp.row_labels[l].clone()));
                    }
                    value /= &forms[l];
                }
                e => {
                    if forms[l].is_zero() && e < 0 {
                        return Err(MleError::ZeroForm(hp.row_labels[l].clone()));
                    }
                    let pw = rat_pow(&forms[l], e.unsigned_abs());
                    if e > 0 {
                        value *= pw;
                    } else {
                        value /= pw;
                    }
                }
            }
        }
        if value != *est.get_idx(pos) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn rat_pow(base: &Rat, mut exp: u64) -> Rat {
    let mut result = Rat::one();
    let mut sq = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result *= &sq;
        }
        sq = &sq * &sq;
        exp >>= 1;
    }
    result
}

/// The log-likelihood `Σ x_ij ln m_ij` as a float, for display and rough
/// comparisons; exact comparisons should use [`likelihood_ratio_ge`].
pub fn log_likelihood(x: &DataVector, m: &Dist) -> Result<f64, MleError> {
    if x.index() != m.index() {
        return Err(CoreError::SetMismatch {
            expected: m.index().names(),
            found: x.index().names(),
        }
        .into());
    }
    let mut total = 0.0;
    for (t, e) in x.entries().iter().enumerate() {
        if e.is_zero() {
            continue;
        }
        let me = m.get_idx(t);
        if me.is_zero() {
            return Err(MleError::SupportViolation(
                x.index().get(t).unwrap().as_str().to_string(),
            ));
        }
        total += to_f64(e) * to_f64(me).ln();
    }
    Ok(total)
}

/// Whether `Σ x ln m1 >= Σ x ln m2`, decided exactly in rationals by
/// clearing the data denominators and comparing the likelihood products
/// with integer exponents. A model that misses the data support has
/// likelihood zero.
pub fn likelihood_ratio_ge(x: &DataVector, m1: &Dist, m2: &Dist) -> Result<bool, MleError> {
    if x.index() != m1.index() || x.index() != m2.index() {
        return Err(CoreError::SetMismatch {
            expected: x.index().names(),
            found: if x.index() != m1.index() {
                m1.index().names()
            } else {
                m2.index().names()
            },
        }
        .into());
    }
    let mut den = num::BigInt::one();
    for e in x.entries() {
        den = num::Integer::lcm(&den, e.denom());
    }
    let mut left = Rat::one();
    let mut right = Rat::one();
    for (t, e) in x.entries().iter().enumerate() {
        if e.is_zero() {
            continue;
        }
        let count = (e * Rat::from_integer(den.clone())).to_integer();
        let exp = num::ToPrimitive::to_u64(&count).ok_or_else(|| {
            MleError::ExponentTooLarge(count.to_string())
        })?;
        left *= rat_pow(m1.get_idx(t), exp);
        right *= rat_pow(m2.get_idx(t), exp);
    }
    Ok(left >= right)
}
