//! Finite category sets and the surjective mappings between them.
//!
//! A [`CategorySet`] is a finite, non-empty, ordered collection of distinct
//! names. Order is meaningful: it fixes vector layouts, product enumeration,
//! and serialization, so everything downstream is deterministic.
//!
//! A [`CategoryMapping`] sends every category of its domain to a
//! metacategory of its codomain and is surjective by construction: the
//! codomain is exactly the set of metacategories that occur, ordered by
//! first appearance along the domain (unless an explicit codomain is given).

use std::collections::HashMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised by category set and mapping construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoreError {
    /// A category set may not be empty.
    #[error("category set must be non-empty")]
    EmptyCategorySet,
    /// A name occurred twice in one category set.
    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),
    /// A mapping or lookup referenced a name outside the relevant set.
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    /// A mapping assignment left a domain element without an image.
    #[error("missing assignment for category {0:?}")]
    MissingAssignment(String),
    /// An explicit codomain contained a metacategory that is never hit.
    #[error("mapping is not surjective: metacategory {0:?} has empty fiber")]
    NotSurjective(String),
    /// Two sets that had to coincide (exactly, including order) differ.
    #[error("category sets differ: expected {expected:?}, found {found:?}")]
    SetMismatch {
        /// The set required by the operation.
        expected: Vec<String>,
        /// The set actually supplied.
        found: Vec<String>,
    },
    /// A vector was built with the wrong number of entries.
    #[error("expected {expected} entries, found {found}")]
    LengthMismatch {
        /// Number of categories in the index.
        expected: usize,
        /// Number of entries supplied.
        found: usize,
    },
    /// A distribution entry was negative.
    #[error("negative entry {value} at category {category:?}")]
    NegativeEntry {
        /// Offending category name.
        category: String,
        /// Offending value, rendered canonically.
        value: String,
    },
    /// A distribution did not have total mass one.
    #[error("total mass is {0}, expected 1")]
    MassNotOne(String),
}

/// A single category: an opaque, non-empty name.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category(String);

impl Category {
    /// Wraps a name.
    pub fn new(name: impl Into<String>) -> Self {
        Category(name.into())
    }

    /// The underlying text.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for Category {
    fn from(s: &str) -> Self {
        Category(s.to_string())
    }
}

impl From<String> for Category {
    fn from(s: String) -> Self {
        Category(s)
    }
}

impl From<&String> for Category {
    fn from(s: &String) -> Self {
        Category(s.clone())
    }
}

/// An ordered set of distinct categories.
#[derive(Clone, Eq)]
pub struct CategorySet {
    items: Vec<Category>,
    pos: HashMap<Category, usize>,
}

impl CategorySet {
    /// Builds a set from names, keeping their order.
    ///
    /// ```
    /// use markov_comb::CategorySet;
    /// let set = CategorySet::new(["a", "b", "c"]).unwrap();
    /// assert_eq!(set.len(), 3);
    /// assert!(CategorySet::new(["a", "a"]).is_err());
    /// ```
    pub fn new<T: Into<Category>>(names: impl IntoIterator<Item = T>) -> Result<Self, CoreError> {
        let items: Vec<Category> = names.into_iter().map(Into::into).collect();
        if items.is_empty() {
            return Err(CoreError::EmptyCategorySet);
        }
        let mut pos = HashMap::with_capacity(items.len());
        for (t, item) in items.iter().enumerate() {
            if pos.insert(item.clone(), t).is_some() {
                return Err(CoreError::DuplicateCategory(item.as_str().to_string()));
            }
        }
        Ok(CategorySet { items, pos })
    }

    /// The set `{"0", "1", ..., "n-1"}`.
    pub fn range(n: usize) -> Result<Self, CoreError> {
        CategorySet::new((0..n).map(|t| t.to_string()))
    }

    /// Number of categories.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Always false: category sets are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Iterates the categories in order.
    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.items.iter()
    }

    /// The category at a position.
    pub fn get(&self, t: usize) -> Option<&Category> {
        self.items.get(t)
    }

    /// Position of a category, if present.
    pub fn position(&self, c: &Category) -> Option<usize> {
        self.pos.get(c).copied()
    }

    /// Position of a category, as an error when absent.
    pub fn require(&self, c: &Category) -> Result<usize, CoreError> {
        self.position(c)
            .ok_or_else(|| CoreError::UnknownCategory(c.as_str().to_string()))
    }

    /// Whether the set contains the category.
    pub fn contains(&self, c: &Category) -> bool {
        self.pos.contains_key(c)
    }

    /// The names, in order.
    pub fn names(&self) -> Vec<String> {
        self.items.iter().map(|c| c.as_str().to_string()).collect()
    }
}

impl PartialEq for CategorySet {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl fmt::Debug for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.items.iter()).finish()
    }
}

impl Serialize for CategorySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.items.iter().map(|c| c.as_str()))
    }
}

impl<'de> Deserialize<'de> for CategorySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        CategorySet::new(names).map_err(D::Error::custom)
    }
}

/// A surjective mapping from a domain category set onto a codomain of
/// metacategories.
#[derive(Clone, PartialEq, Eq)]
pub struct CategoryMapping {
    domain: CategorySet,
    codomain: CategorySet,
    map: Vec<usize>,
}

impl CategoryMapping {
    /// Builds a mapping from `(category, metacategory)` assignments.
    ///
    /// Every domain element must be assigned exactly once. The codomain is
    /// the set of used metacategories, ordered by first appearance along the
    /// domain order, which makes construction deterministic.
    ///
    /// ```
    /// use markov_comb::{Category, CategoryMapping, CategorySet};
    /// let i = CategorySet::new(["a", "b", "c"]).unwrap();
    /// let p = CategoryMapping::new(i, [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    /// assert_eq!(p.codomain().names(), ["1", "2"]);
    /// assert_eq!(p.apply(&Category::new("c")).unwrap().as_str(), "2");
    /// ```
    pub fn new<C: Into<Category>, M: Into<Category>>(
        domain: CategorySet,
        assignments: impl IntoIterator<Item = (C, M)>,
    ) -> Result<Self, CoreError> {
        let mut images: Vec<Option<Category>> = vec![None; domain.len()];
        for (c, m) in assignments {
            let c = c.into();
            let t = domain.require(&c)?;
            if images[t].is_some() {
                return Err(CoreError::DuplicateCategory(c.as_str().to_string()));
            }
            images[t] = Some(m.into());
        }
        let mut ordered = Vec::with_capacity(domain.len());
        for (t, img) in images.into_iter().enumerate() {
            match img {
                Some(m) => ordered.push(m),
                None => {
                    return Err(CoreError::MissingAssignment(
                        domain.get(t).unwrap().as_str().to_string(),
                    ))
                }
            }
        }
        Self::from_images(domain, ordered)
    }

    /// Builds a mapping from the image of each domain element, in domain order.
    pub fn from_images(
        domain: CategorySet,
        images: Vec<Category>,
    ) -> Result<Self, CoreError> {
        if images.len() != domain.len() {
            return Err(CoreError::LengthMismatch {
                expected: domain.len(),
                found: images.len(),
            });
        }
        let mut codomain_items: Vec<Category> = Vec::new();
        let mut seen: HashMap<Category, usize> = HashMap::new();
        let mut map = Vec::with_capacity(images.len());
        for m in images {
            let idx = *seen.entry(m.clone()).or_insert_with(|| {
                codomain_items.push(m.clone());
                codomain_items.len() - 1
            });
            map.push(idx);
        }
        let codomain = CategorySet::new(codomain_items)?;
        Ok(CategoryMapping {
            domain,
            codomain,
            map,
        })
    }

    /// Like [`CategoryMapping::new`] but with an explicit codomain, which
    /// fixes the metacategory order. Errors when some metacategory is never
    /// hit (the mapping would not be surjective) or an image is not in the
    /// codomain.
    pub fn with_codomain<C: Into<Category>, M: Into<Category>>(
        domain: CategorySet,
        codomain: CategorySet,
        assignments: impl IntoIterator<Item = (C, M)>,
    ) -> Result<Self, CoreError> {
        let mut images: Vec<Option<usize>> = vec![None; domain.len()];
        for (c, m) in assignments {
            let c = c.into();
            let m = m.into();
            let t = domain.require(&c)?;
            if images[t].is_some() {
                return Err(CoreError::DuplicateCategory(c.as_str().to_string()));
            }
            images[t] = Some(codomain.require(&m)?);
        }
        let mut map = Vec::with_capacity(domain.len());
        for (t, img) in images.into_iter().enumerate() {
            match img {
                Some(k) => map.push(k),
                None => {
                    return Err(CoreError::MissingAssignment(
                        domain.get(t).unwrap().as_str().to_string(),
                    ))
                }
            }
        }
        let mut hit = vec![false; codomain.len()];
        for &k in &map {
            hit[k] = true;
        }
        if let Some(k) = hit.iter().position(|h| !h) {
            return Err(CoreError::NotSurjective(
                codomain.get(k).unwrap().as_str().to_string(),
            ));
        }
        Ok(CategoryMapping {
            domain,
            codomain,
            map,
        })
    }

    /// The identity mapping on a set.
    pub fn identity(set: &CategorySet) -> Self {
        CategoryMapping {
            domain: set.clone(),
            codomain: set.clone(),
            map: (0..set.len()).collect(),
        }
    }

    /// The constant mapping onto a one-element codomain.
    pub fn constant(domain: &CategorySet, target: impl Into<Category>) -> Self {
        let target = target.into();
        CategoryMapping {
            domain: domain.clone(),
            codomain: CategorySet::new([target]).expect("singleton set"),
            map: vec![0; domain.len()],
        }
    }

    /// The domain set.
    pub fn domain(&self) -> &CategorySet {
        &self.domain
    }

    /// The codomain set.
    pub fn codomain(&self) -> &CategorySet {
        &self.codomain
    }

    /// Image of a category.
    pub fn apply(&self, c: &Category) -> Result<&Category, CoreError> {
        let t = self.domain.require(c)?;
        Ok(self.codomain.get(self.map[t]).unwrap())
    }

    /// Image position of the domain element at position `t`.
    pub fn apply_idx(&self, t: usize) -> usize {
        self.map[t]
    }

    /// The fiber over a metacategory, as a category set in domain order.
    /// Non-empty for every codomain element because mappings are surjective.
    ///
    /// ```
    /// use markov_comb::{Category, CategoryMapping, CategorySet};
    /// let i = CategorySet::new(["a", "b", "c"]).unwrap();
    /// let p = CategoryMapping::new(i, [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    /// assert_eq!(p.fiber(&Category::new("2")).unwrap().names(), ["b", "c"]);
    /// ```
    pub fn fiber(&self, k: &Category) -> Result<CategorySet, CoreError> {
        let kt = self.codomain.require(k)?;
        CategorySet::new(self.fiber_indices(kt).into_iter().map(|t| {
            self.domain.get(t).unwrap().clone()
        }))
    }

    /// Positions of the fiber over the metacategory at codomain position `kt`.
    pub fn fiber_indices(&self, kt: usize) -> Vec<usize> {
        (0..self.domain.len())
            .filter(|&t| self.map[t] == kt)
            .collect()
    }

    /// Composition `next ∘ self`: when `self: I -> M` and `next: M -> M'`,
    /// the result maps `I -> M'`. The codomains must line up exactly.
    ///
    /// ```
    /// use markov_comb::{CategoryMapping, CategorySet};
    /// let i = CategorySet::new(["a", "b", "c"]).unwrap();
    /// let p = CategoryMapping::new(i, [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    /// let to_point = CategoryMapping::constant(p.codomain(), "*");
    /// let composed = p.compose(&to_point).unwrap();
    /// assert_eq!(composed.codomain().names(), ["*"]);
    /// ```
    pub fn compose(&self, next: &CategoryMapping) -> Result<CategoryMapping, CoreError> {
        if self.codomain != next.domain {
            return Err(CoreError::SetMismatch {
                expected: self.codomain.names(),
                found: next.domain.names(),
            });
        }
        Ok(CategoryMapping {
            domain: self.domain.clone(),
            codomain: next.codomain.clone(),
            map: self.map.iter().map(|&k| next.map[k]).collect(),
        })
    }

    /// Whether the codomain order agrees with first appearance along the
    /// domain, i.e. the order [`CategoryMapping::new`] would derive.
    fn codomain_is_derived(&self) -> bool {
        let mut next_expected = 0usize;
        for &k in &self.map {
            if k == next_expected {
                next_expected += 1;
            } else if k > next_expected {
                return false;
            }
        }
        next_expected == self.codomain.len()
    }
}

impl fmt::Debug for CategoryMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (t, c) in self.domain.iter().enumerate() {
            m.entry(c, self.codomain.get(self.map[t]).unwrap());
        }
        m.finish()
    }
}

impl Serialize for CategoryMapping {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let extra = usize::from(!self.codomain_is_derived());
        let mut s = serializer.serialize_map(Some(2 + extra))?;
        s.serialize_entry("domain", &self.domain)?;
        if extra == 1 {
            s.serialize_entry("codomain", &self.codomain)?;
        }
        let assignments: Vec<(&str, &str)> = self
            .domain
            .iter()
            .enumerate()
            .map(|(t, c)| {
                (
                    c.as_str(),
                    self.codomain.get(self.map[t]).unwrap().as_str(),
                )
            })
            .collect();
        let as_map: std::collections::BTreeMap<&str, &str> = assignments.into_iter().collect();
        s.serialize_entry("map", &as_map)?;
        s.end()
    }
}

#[derive(Deserialize)]
struct RawMapping {
    domain: CategorySet,
    codomain: Option<CategorySet>,
    map: HashMap<String, String>,
}

impl<'de> Deserialize<'de> for CategoryMapping {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawMapping::deserialize(deserializer)?;
        let assignments = raw.map.into_iter().collect::<Vec<_>>();
        match raw.codomain {
            Some(codomain) => {
                CategoryMapping::with_codomain(raw.domain, codomain, assignments)
                    .map_err(D::Error::custom)
            }
            None => CategoryMapping::new(raw.domain, assignments).map_err(D::Error::custom),
        }
    }
}
