//! Rational vectors indexed by category sets, distributions, and the
//! mapping product of two category mappings with a common codomain.

use std::fmt;
use std::ops::Deref;

use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::category::{Category, CategoryMapping, CategorySet, CoreError};
use crate::rational::{format_rat, parse_rat, Rat};

/// A vector of exact rationals indexed by a category set.
#[derive(Clone, PartialEq, Eq)]
pub struct IndexedVector {
    index: CategorySet,
    entries: Vec<Rat>,
}

impl IndexedVector {
    /// Pairs an index with entries; their lengths must agree.
    pub fn new(index: CategorySet, entries: Vec<Rat>) -> Result<Self, CoreError> {
        if entries.len() != index.len() {
            return Err(CoreError::LengthMismatch {
                expected: index.len(),
                found: entries.len(),
            });
        }
        Ok(IndexedVector { index, entries })
    }

    /// The all-zero vector on an index.
    pub fn zeros(index: CategorySet) -> Self {
        let entries = vec![Rat::zero(); index.len()];
        IndexedVector { index, entries }
    }

    /// The index set.
    pub fn index(&self) -> &CategorySet {
        &self.index
    }

    /// The entries, in index order.
    pub fn entries(&self) -> &[Rat] {
        &self.entries
    }

    /// Consumes the vector, returning the entries in index order.
    pub fn into_entries(self) -> Vec<Rat> {
        self.entries
    }

    /// Entry at a category.
    pub fn get(&self, c: &Category) -> Result<&Rat, CoreError> {
        Ok(&self.entries[self.index.require(c)?])
    }

    /// Entry at a position.
    pub fn get_idx(&self, t: usize) -> &Rat {
        &self.entries[t]
    }

    /// Total mass.
    pub fn sum(&self) -> Rat {
        self.entries.iter().fold(Rat::zero(), |acc, e| acc + e)
    }

    /// Whether every entry is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|e| !e.is_negative())
    }

    /// Pointwise sum; the indexes must coincide.
    pub fn add(&self, other: &IndexedVector) -> Result<IndexedVector, CoreError> {
        if self.index != other.index {
            return Err(CoreError::SetMismatch {
                expected: self.index.names(),
                found: other.index.names(),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(IndexedVector {
            index: self.index.clone(),
            entries,
        })
    }

    /// Scalar multiple.
    pub fn scale(&self, c: &Rat) -> IndexedVector {
        IndexedVector {
            index: self.index.clone(),
            entries: self.entries.iter().map(|e| e * c).collect(),
        }
    }

    /// Aggregation along a mapping: entry `k` of the result is the sum of
    /// the entries in the fiber over `k`. The vector's index must equal the
    /// mapping's domain; the result is indexed by the codomain.
    ///
    /// ```
    /// use markov_comb::{CategoryMapping, CategorySet, IndexedVector};
    /// use markov_comb::rational::rat;
    /// let i = CategorySet::new(["a", "b", "c"]).unwrap();
    /// let p = CategoryMapping::new(i.clone(), [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    /// let f = IndexedVector::new(i, vec![rat(3, 4), rat(1, 8), rat(1, 8)]).unwrap();
    /// let agg = f.aggregate(&p).unwrap();
    /// assert_eq!(agg.entries(), &[rat(3, 4), rat(1, 4)]);
    /// ```
    pub fn aggregate(&self, p: &CategoryMapping) -> Result<IndexedVector, CoreError> {
        if self.index != *p.domain() {
            return Err(CoreError::SetMismatch {
                expected: p.domain().names(),
                found: self.index.names(),
            });
        }
        let mut entries = vec![Rat::zero(); p.codomain().len()];
        for (t, e) in self.entries.iter().enumerate() {
            entries[p.apply_idx(t)] += e;
        }
        Ok(IndexedVector {
            index: p.codomain().clone(),
            entries,
        })
    }
}

impl fmt::Debug for IndexedVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (t, c) in self.index.iter().enumerate() {
            m.entry(c, &format_rat(&self.entries[t]));
        }
        m.finish()
    }
}

impl Serialize for IndexedVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("IndexedVector", 2)?;
        s.serialize_field("index", &self.index)?;
        let entries: Vec<String> = self.entries.iter().map(format_rat).collect();
        s.serialize_field("entries", &entries)?;
        s.end()
    }
}

#[derive(Deserialize)]
struct RawVector {
    index: CategorySet,
    entries: Vec<String>,
}

impl<'de> Deserialize<'de> for IndexedVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawVector::deserialize(deserializer)?;
        let entries = raw
            .entries
            .iter()
            .map(|s| parse_rat(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        IndexedVector::new(raw.index, entries).map_err(D::Error::custom)
    }
}

/// A probability distribution: a nonnegative indexed vector of total mass
/// exactly one.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Dist(IndexedVector);

impl Dist {
    /// Validates a vector as a distribution.
    ///
    /// ```
    /// use markov_comb::{CategorySet, Dist, IndexedVector};
    /// use markov_comb::rational::rat;
    /// let i = CategorySet::new(["h", "t"]).unwrap();
    /// let v = IndexedVector::new(i.clone(), vec![rat(1, 2), rat(1, 2)]).unwrap();
    /// assert!(Dist::new(v).is_ok());
    /// let bad = IndexedVector::new(i, vec![rat(1, 2), rat(1, 3)]).unwrap();
    /// assert!(Dist::new(bad).is_err());
    /// ```
    pub fn new(v: IndexedVector) -> Result<Self, CoreError> {
        for (t, e) in v.entries.iter().enumerate() {
            if e.is_negative() {
                return Err(CoreError::NegativeEntry {
                    category: v.index.get(t).unwrap().as_str().to_string(),
                    value: format_rat(e),
                });
            }
        }
        let mass = v.sum();
        if !mass.is_one() {
            return Err(CoreError::MassNotOne(format_rat(&mass)));
        }
        Ok(Dist(v))
    }

    /// Builds directly from an index and entries.
    pub fn from_entries(index: CategorySet, entries: Vec<Rat>) -> Result<Self, CoreError> {
        Dist::new(IndexedVector::new(index, entries)?)
    }

    /// The uniform distribution on an index.
    pub fn uniform(index: CategorySet) -> Self {
        let n = index.len();
        let entries = vec![Rat::new(1.into(), (n as i64).into()); n];
        Dist(IndexedVector { index, entries })
    }

    /// The point mass at one category.
    pub fn point_mass(index: CategorySet, at: &Category) -> Result<Self, CoreError> {
        let t = index.require(at)?;
        let mut entries = vec![Rat::zero(); index.len()];
        entries[t] = Rat::one();
        Ok(Dist(IndexedVector { index, entries }))
    }

    /// The underlying vector.
    pub fn vector(&self) -> &IndexedVector {
        &self.0
    }

    /// Unwraps into the underlying vector.
    pub fn into_vector(self) -> IndexedVector {
        self.0
    }

    /// Aggregation along a mapping; the result is again a distribution.
    pub fn aggregate_dist(&self, p: &CategoryMapping) -> Result<Dist, CoreError> {
        Ok(Dist(self.0.aggregate(p)?))
    }
}

impl Deref for Dist {
    type Target = IndexedVector;

    fn deref(&self) -> &IndexedVector {
        &self.0
    }
}

impl Serialize for Dist {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = IndexedVector::deserialize(deserializer)?;
        Dist::new(v).map_err(D::Error::custom)
    }
}

/// Axes of a mapping product.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Axis {
    /// The left component set.
    I,
    /// The right component set.
    J,
    /// The shared codomain.
    M,
}

/// The mapping product of `p: I -> M` and `q: J -> M`: all pairs `(i, j)`
/// with `p(i) = q(j)`, enumerated block by block.
///
/// Elements are stored as triples `(k, i, j)` in lexicographic order: `k`
/// runs through `M` in codomain order, `i` through the fiber of `p` over `k`
/// in domain order, and `j` through the fiber of `q`. Each pair also gets a
/// composed category name `(i,j)` so the product carries an ordinary
/// [`CategorySet`] for vectors over it.
#[derive(Clone, PartialEq)]
pub struct ProductIndex {
    p: CategoryMapping,
    q: CategoryMapping,
    triples: Vec<(usize, usize, usize)>,
    index: CategorySet,
}

impl ProductIndex {
    /// Builds the product; `p` and `q` must have the same codomain,
    /// including order.
    ///
    /// ```
    /// use markov_comb::{CategoryMapping, CategorySet, ProductIndex};
    /// let i = CategorySet::new(["a", "b", "c"]).unwrap();
    /// let j = CategorySet::new(["C", "D", "H", "S"]).unwrap();
    /// let p = CategoryMapping::new(i, [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    /// let q = CategoryMapping::new(j, [("C", "1"), ("D", "1"), ("H", "1"), ("S", "2")]).unwrap();
    /// let prod = ProductIndex::new(&p, &q).unwrap();
    /// assert_eq!(prod.cardinality(), 5);
    /// assert_eq!(prod.index().names()[0], "(a,C)");
    /// ```
    pub fn new(p: &CategoryMapping, q: &CategoryMapping) -> Result<Self, CoreError> {
        if p.codomain() != q.codomain() {
            return Err(CoreError::SetMismatch {
                expected: p.codomain().names(),
                found: q.codomain().names(),
            });
        }
        let mut triples = Vec::new();
        let mut names = Vec::new();
        for kt in 0..p.codomain().len() {
            for it in p.fiber_indices(kt) {
                for jt in q.fiber_indices(kt) {
                    triples.push((kt, it, jt));
                    names.push(Self::composed_name(
                        p.domain().get(it).unwrap(),
                        q.domain().get(jt).unwrap(),
                    ));
                }
            }
        }
        let index = CategorySet::new(names)?;
        Ok(ProductIndex {
            p: p.clone(),
            q: q.clone(),
            triples,
            index,
        })
    }

    /// The composed name given to a pair.
    pub fn composed_name(i: &Category, j: &Category) -> Category {
        Category::new(format!("({},{})", i, j))
    }

    /// Number of pairs: the sum over `k` of `|I_k| * |J_k|`.
    pub fn cardinality(&self) -> usize {
        self.triples.len()
    }

    /// The composed category set of all pairs, in product order.
    pub fn index(&self) -> &CategorySet {
        &self.index
    }

    /// The left mapping.
    pub fn mapping_i(&self) -> &CategoryMapping {
        &self.p
    }

    /// The right mapping.
    pub fn mapping_j(&self) -> &CategoryMapping {
        &self.q
    }

    /// Iterates the `(k, i, j)` name triples in product order.
    pub fn triples(&self) -> impl Iterator<Item = (&Category, &Category, &Category)> {
        self.triples.iter().map(move |&(kt, it, jt)| {
            (
                self.p.codomain().get(kt).unwrap(),
                self.p.domain().get(it).unwrap(),
                self.q.domain().get(jt).unwrap(),
            )
        })
    }

    /// The `(k, i, j)` position triples in product order.
    pub fn triple_positions(&self) -> &[(usize, usize, usize)] {
        &self.triples
    }

    /// Position of a pair in the product, if it belongs to it.
    pub fn position(&self, i: &Category, j: &Category) -> Option<usize> {
        self.index.position(&Self::composed_name(i, j))
    }

    /// The projection of the product onto an axis, as a category mapping
    /// with the original set as codomain (in its original order).
    pub fn projection(&self, axis: Axis) -> CategoryMapping {
        let (codomain, picks): (&CategorySet, Vec<usize>) = match axis {
            Axis::I => (
                self.p.domain(),
                self.triples.iter().map(|&(_, it, _)| it).collect(),
            ),
            Axis::J => (
                self.q.domain(),
                self.triples.iter().map(|&(_, _, jt)| jt).collect(),
            ),
            Axis::M => (
                self.p.codomain(),
                self.triples.iter().map(|&(kt, _, _)| kt).collect(),
            ),
        };
        let assignments: Vec<(Category, Category)> = self
            .index
            .iter()
            .zip(picks.iter())
            .map(|(pair, &t)| (pair.clone(), codomain.get(t).unwrap().clone()))
            .collect();
        CategoryMapping::with_codomain(self.index.clone(), codomain.clone(), assignments)
            .expect("projections of a mapping product are surjective")
    }
}

impl fmt::Debug for ProductIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.triples()).finish()
    }
}

/// Builds the mapping product of two mappings; alias of [`ProductIndex::new`].
pub fn mapping_product(
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<ProductIndex, CoreError> {
    ProductIndex::new(p, q)
}
