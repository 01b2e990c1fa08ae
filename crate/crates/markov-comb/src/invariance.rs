//! Finite group actions on category sets and invariance of parametric
//! models under them.
//!
//! A [`FiniteAction`] is a named group of permutations of a category set,
//! with its composition and inverse tables checked eagerly. A model `f` is
//! invariant under an element when some injective parameter map `ᾱ`
//! satisfies `f(θ)_{α⁻¹(i)} = f(ᾱθ)_i`; the maps are supplied as a
//! [`ParamTransport`] and verified numerically by [`check_invariance`].
//! When the action is compatible with a pair of category mappings it
//! descends to the metacategories and to the mapping product, and the
//! transport of a combined model is assembled from the component
//! transports by [`combined_transport`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::{Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::category::{Category, CategoryMapping, CategorySet, CoreError};
use crate::parametric::{ModelError, ParametricModel, Variant};
use crate::rational::{to_f64, Rat};
use crate::vector::{IndexedVector, ProductIndex};

/// Errors raised while building actions or checking invariance.
#[derive(Debug, Error)]
pub enum InvarianceError {
    /// A structural precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// Evaluating a model failed.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Two group elements share a name.
    #[error("duplicate group element {0:?}")]
    DuplicateElement(String),
    /// A referenced group element does not exist.
    #[error("unknown group element {0:?}")]
    UnknownElement(String),
    /// An element's assignment is not a permutation.
    #[error("element {element:?} is not a permutation: {detail}")]
    NotPermutation {
        /// Offending element.
        element: String,
        /// What went wrong.
        detail: String,
    },
    /// No element acts as the group identity.
    #[error("no identity element: {0}")]
    NoIdentity(String),
    /// The permutations are not closed under composition.
    #[error("composition {left:?} then {right:?} is not an element of the group")]
    NotClosed {
        /// Outer element.
        left: String,
        /// Inner element.
        right: String,
    },
    /// The composition table violates a group axiom.
    #[error("invalid group table: {0}")]
    BadTable(String),
    /// Two actions do not share the same group.
    #[error("actions act for different groups: {0}")]
    GroupMismatch(String),
    /// The action does not respect the category mappings.
    #[error("action is not compatible with the mappings: {0}")]
    NotCompatible(String),
    /// A transport is missing for some element.
    #[error("no parameter transport supplied for element {0:?}")]
    MissingTransport(String),
    /// A transport mapped a sampled point outside the parameter box.
    #[error("transport for {element:?} left the parameter box: {detail}")]
    TransportLeftBox {
        /// Offending element.
        element: String,
        /// The box violation.
        detail: String,
    },
    /// A transport identified two distinct sampled points.
    #[error("transport for {0:?} is not injective on the sampled points")]
    NotInjective(String),
    /// A combined transport got the wrong number of components.
    #[error("variant {variant:?} combines {expected} transports, got {found}")]
    WrongArity {
        /// Requested variant.
        variant: Variant,
        /// Required component count.
        expected: usize,
        /// Supplied component count.
        found: usize,
    },
    /// The variant has no combined transport construction.
    #[error("no combined transport is defined for variant {0:?}")]
    UnsupportedVariant(Variant),
    /// Component transports disagree on dimensions.
    #[error("transport shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A finite group acting on a category set by permutations.
///
/// Each element is named; the composition and inverse tables are stored
/// explicitly and all group axioms are verified on construction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FiniteAction {
    set: CategorySet,
    elements: Vec<String>,
    perms: Vec<Vec<usize>>,
    identity: usize,
    compose: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl FiniteAction {
    /// Builds an action from named permutations, deriving the group tables
    /// by matching products of permutations against the supplied elements.
    /// The permutations must be pairwise distinct (the action must be
    /// faithful); use [`FiniteAction::with_tables`] otherwise.
    ///
    /// ```
    /// use markov_comb::invariance::FiniteAction;
    /// use markov_comb::CategorySet;
    /// let set = CategorySet::new(["0", "1", "2"]).unwrap();
    /// let action = FiniteAction::new(
    ///     &set,
    ///     [
    ///         ("e", vec![("0", "0"), ("1", "1"), ("2", "2")]),
    ///         ("flip", vec![("0", "2"), ("1", "1"), ("2", "0")]),
    ///     ],
    /// )
    /// .unwrap();
    /// assert_eq!(action.order(), 2);
    /// assert_eq!(action.compose_elems(1, 1), 0);
    /// ```
    pub fn new<N, C, D>(
        set: &CategorySet,
        elements: impl IntoIterator<Item = (N, Vec<(C, D)>)>,
    ) -> Result<Self, InvarianceError>
    where
        N: Into<String>,
        C: Into<Category>,
        D: Into<Category>,
    {
        let mut names = Vec::new();
        let mut perms = Vec::new();
        for (name, pairs) in elements {
            let name = name.into();
            if names.contains(&name) {
                return Err(InvarianceError::DuplicateElement(name));
            }
            perms.push(permutation_from_pairs(set, &name, pairs)?);
            names.push(name);
        }
        for (a, pa) in perms.iter().enumerate() {
            for pb in perms.iter().skip(a + 1) {
                if pa == pb {
                    return Err(InvarianceError::DuplicateElement(format!(
                        "{} acts identically to another element",
                        names[a]
                    )));
                }
            }
        }
        let n = names.len();
        let mut compose = vec![vec![0usize; n]; n];
        for a in 0..n {
            for b in 0..n {
                let prod: Vec<usize> = (0..set.len()).map(|t| perms[a][perms[b][t]]).collect();
                match perms.iter().position(|p| *p == prod) {
                    Some(c) => compose[a][b] = c,
                    None => {
                        return Err(InvarianceError::NotClosed {
                            left: names[a].clone(),
                            right: names[b].clone(),
                        })
                    }
                }
            }
        }
        Self::with_tables(set.clone(), names, perms, compose)
    }

    /// Builds an action from explicit tables, verifying every group axiom:
    /// a unique two-sided identity acting trivially, two-sided inverses,
    /// associativity, and that composition of elements matches composition
    /// of their permutations. Unlike [`FiniteAction::new`] this accepts
    /// unfaithful actions, where distinct elements act identically.
    pub fn with_tables(
        set: CategorySet,
        elements: Vec<String>,
        perms: Vec<Vec<usize>>,
        compose: Vec<Vec<usize>>,
    ) -> Result<Self, InvarianceError> {
        let n = elements.len();
        if n == 0 {
            return Err(InvarianceError::NoIdentity("the group is empty".into()));
        }
        if perms.len() != n || compose.len() != n {
            return Err(InvarianceError::BadTable(format!(
                "{} elements but {} permutations and {} table rows",
                n,
                perms.len(),
                compose.len()
            )));
        }
        for (e, name) in elements.iter().enumerate() {
            if elements[..e].contains(name) {
                return Err(InvarianceError::DuplicateElement(name.clone()));
            }
            check_permutation(&set, name, &perms[e])?;
        }
        for (a, row) in compose.iter().enumerate() {
            if row.len() != n || row.iter().any(|&c| c >= n) {
                return Err(InvarianceError::BadTable(format!(
                    "row for {:?} is not a valid table row",
                    elements[a]
                )));
            }
        }
        let identity = (0..n)
            .filter(|&e| (0..n).all(|x| compose[e][x] == x && compose[x][e] == x))
            .collect::<Vec<_>>();
        let identity = match identity.as_slice() {
            [e] => *e,
            [] => {
                return Err(InvarianceError::NoIdentity(
                    "no element is a two-sided unit of the table".into(),
                ))
            }
            _ => {
                return Err(InvarianceError::BadTable(
                    "multiple elements act as the identity".into(),
                ))
            }
        };
        if perms[identity].iter().enumerate().any(|(t, &s)| t != s) {
            return Err(InvarianceError::BadTable(format!(
                "the identity element {:?} does not act trivially",
                elements[identity]
            )));
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if compose[compose[a][b]][c] != compose[a][compose[b][c]] {
                        return Err(InvarianceError::BadTable(format!(
                            "associativity fails at ({:?}, {:?}, {:?})",
                            elements[a], elements[b], elements[c]
                        )));
                    }
                }
                let lhs = &perms[compose[a][b]];
                if (0..set.len()).any(|t| lhs[t] != perms[a][perms[b][t]]) {
                    return Err(InvarianceError::BadTable(format!(
                        "permutation of {:?} ∘ {:?} does not match the table",
                        elements[a], elements[b]
                    )));
                }
            }
        }
        let mut inverse = vec![0usize; n];
        for a in 0..n {
            match (0..n).find(|&b| compose[a][b] == identity && compose[b][a] == identity) {
                Some(b) => inverse[a] = b,
                None => {
                    return Err(InvarianceError::BadTable(format!(
                        "element {:?} has no two-sided inverse",
                        elements[a]
                    )))
                }
            }
        }
        Ok(FiniteAction {
            set,
            elements,
            perms,
            identity,
            compose,
            inverse,
        })
    }

    /// The one-element group acting trivially.
    pub fn trivial(set: &CategorySet) -> Self {
        FiniteAction {
            set: set.clone(),
            elements: vec!["e".to_string()],
            perms: vec![(0..set.len()).collect()],
            identity: 0,
            compose: vec![vec![0]],
            inverse: vec![0],
        }
    }

    /// The two-element group generated by one self-inverse permutation.
    pub fn involution<C, D>(
        set: &CategorySet,
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (C, D)>,
    ) -> Result<Self, InvarianceError>
    where
        C: Into<Category>,
        D: Into<Category>,
    {
        let name = name.into();
        let perm = permutation_from_pairs(set, &name, pairs)?;
        if (0..set.len()).any(|t| perm[perm[t]] != t) {
            return Err(InvarianceError::NotClosed {
                left: name.clone(),
                right: name,
            });
        }
        FiniteAction::new(
            set,
            [
                (
                    "e".to_string(),
                    set.iter()
                        .map(|c| (c.clone(), c.clone()))
                        .collect::<Vec<_>>(),
                ),
                (
                    name,
                    set.iter()
                        .enumerate()
                        .map(|(t, c)| (c.clone(), set.get(perm[t]).unwrap().clone()))
                        .collect(),
                ),
            ],
        )
    }

    /// The category set acted on.
    pub fn set(&self) -> &CategorySet {
        &self.set
    }

    /// Element names, identity first not guaranteed.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    /// Group order.
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Index of a named element.
    pub fn element_index(&self, name: &str) -> Result<usize, InvarianceError> {
        self.elements
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| InvarianceError::UnknownElement(name.to_string()))
    }

    /// Index of the identity element.
    pub fn identity(&self) -> usize {
        self.identity
    }

    /// Index of the inverse of an element.
    pub fn inverse(&self, e: usize) -> usize {
        self.inverse[e]
    }

    /// Index of the composite `a ∘ b`, acting as `x ↦ a·(b·x)`.
    pub fn compose_elems(&self, a: usize, b: usize) -> usize {
        self.compose[a][b]
    }

    /// Image position of the category at position `t` under element `e`.
    pub fn apply(&self, e: usize, t: usize) -> usize {
        self.perms[e][t]
    }

    /// Image of a category under element `e`.
    pub fn apply_cat(&self, e: usize, c: &Category) -> Result<&Category, InvarianceError> {
        let t = self.set.require(c)?;
        Ok(self.set.get(self.perms[e][t]).unwrap())
    }

    /// The induced action on vectors: `(α·v)_i = v_{α⁻¹(i)}`.
    pub fn act_on_vector(
        &self,
        e: usize,
        v: &IndexedVector,
    ) -> Result<IndexedVector, InvarianceError> {
        if v.index() != &self.set {
            return Err(CoreError::SetMismatch {
                expected: self.set.names(),
                found: v.index().names(),
            }
            .into());
        }
        let inv = &self.perms[self.inverse[e]];
        let entries = (0..self.set.len())
            .map(|t| v.get_idx(inv[t]).clone())
            .collect();
        Ok(IndexedVector::new(self.set.clone(), entries)?)
    }
}

fn permutation_from_pairs<C, D>(
    set: &CategorySet,
    name: &str,
    pairs: impl IntoIterator<Item = (C, D)>,
) -> Result<Vec<usize>, InvarianceError>
where
    C: Into<Category>,
    D: Into<Category>,
{
    let mut perm = vec![usize::MAX; set.len()];
    for (c, d) in pairs {
        let c = c.into();
        let d = d.into();
        let t = set.require(&c)?;
        if perm[t] != usize::MAX {
            return Err(InvarianceError::NotPermutation {
                element: name.to_string(),
                detail: format!("category {:?} assigned twice", c.as_str()),
            });
        }
        perm[t] = set.require(&d)?;
    }
    if let Some(t) = perm.iter().position(|&s| s == usize::MAX) {
        return Err(InvarianceError::NotPermutation {
            element: name.to_string(),
            detail: format!("category {:?} has no image", set.get(t).unwrap().as_str()),
        });
    }
    check_permutation(set, name, &perm)?;
    Ok(perm)
}

fn check_permutation(
    set: &CategorySet,
    name: &str,
    perm: &[usize],
) -> Result<(), InvarianceError> {
    if perm.len() != set.len() {
        return Err(InvarianceError::NotPermutation {
            element: name.to_string(),
            detail: format!("{} images for {} categories", perm.len(), set.len()),
        });
    }
    let mut hit = vec![false; set.len()];
    for &s in perm {
        if s >= set.len() || hit[s] {
            return Err(InvarianceError::NotPermutation {
                element: name.to_string(),
                detail: "images are not a bijection".to_string(),
            });
        }
        hit[s] = true;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RawAction {
    set: Option<Vec<String>>,
    elements: Vec<String>,
    perms: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compose: Option<BTreeMap<String, BTreeMap<String, String>>>,
}

impl Serialize for FiniteAction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let perms = self
            .elements
            .iter()
            .enumerate()
            .map(|(e, name)| {
                (
                    name.clone(),
                    self.set
                        .iter()
                        .enumerate()
                        .map(|(t, c)| {
                            (
                                c.as_str().to_string(),
                                self.set.get(self.perms[e][t]).unwrap().as_str().to_string(),
                            )
                        })
                        .collect(),
                )
            })
            .collect();
        let compose = self
            .elements
            .iter()
            .enumerate()
            .map(|(a, na)| {
                (
                    na.clone(),
                    self.elements
                        .iter()
                        .enumerate()
                        .map(|(b, nb)| (nb.clone(), self.elements[self.compose[a][b]].clone()))
                        .collect(),
                )
            })
            .collect();
        RawAction {
            set: Some(self.set.names()),
            elements: self.elements.clone(),
            perms,
            compose: Some(compose),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FiniteAction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawAction::deserialize(deserializer)?;
        let set_names: Vec<String> = match raw.set {
            Some(names) => names,
            None => match raw.perms.values().next() {
                Some(first) => first.keys().cloned().collect(),
                None => return Err(D::Error::custom("action has no permutations")),
            },
        };
        let set = CategorySet::new(set_names).map_err(D::Error::custom)?;
        let mut perms = Vec::with_capacity(raw.elements.len());
        for name in &raw.elements {
            let table = raw
                .perms
                .get(name)
                .ok_or_else(|| D::Error::custom(format!("no permutation for {name:?}")))?;
            let mut perm = vec![usize::MAX; set.len()];
            for (c, d) in table {
                let t = set.require(&Category::new(c.clone())).map_err(D::Error::custom)?;
                perm[t] = set.require(&Category::new(d.clone())).map_err(D::Error::custom)?;
            }
            if perm.contains(&usize::MAX) {
                return Err(D::Error::custom(format!(
                    "permutation for {name:?} misses some category"
                )));
            }
            perms.push(perm);
        }
        let action = match raw.compose {
            None => {
                let pairs: Vec<(String, Vec<(Category, Category)>)> = raw
                    .elements
                    .iter()
                    .zip(&perms)
                    .map(|(name, perm)| {
                        (
                            name.clone(),
                            set.iter()
                                .enumerate()
                                .map(|(t, c)| (c.clone(), set.get(perm[t]).unwrap().clone()))
                                .collect(),
                        )
                    })
                    .collect();
                FiniteAction::new(&set, pairs)
            }
            Some(table) => {
                let n = raw.elements.len();
                let mut compose = vec![vec![0usize; n]; n];
                for (a, na) in raw.elements.iter().enumerate() {
                    let row = table
                        .get(na)
                        .ok_or_else(|| D::Error::custom(format!("no table row for {na:?}")))?;
                    for (b, nb) in raw.elements.iter().enumerate() {
                        let nc = row.get(nb).ok_or_else(|| {
                            D::Error::custom(format!("no table entry for ({na:?}, {nb:?})"))
                        })?;
                        compose[a][b] = raw
                            .elements
                            .iter()
                            .position(|e| e == nc)
                            .ok_or_else(|| D::Error::custom(format!("unknown element {nc:?}")))?;
                    }
                }
                FiniteAction::with_tables(set, raw.elements, perms, compose)
            }
        };
        action.map_err(D::Error::custom)
    }
}

/// One parameter map per group element.
pub type TransportFn = Arc<dyn Fn(&[Rat]) -> Vec<Rat> + Send + Sync>;

/// Wraps a closure as a [`TransportFn`].
pub fn transport_fn(f: impl Fn(&[Rat]) -> Vec<Rat> + Send + Sync + 'static) -> TransportFn {
    Arc::new(f)
}

/// The parameter maps `ᾱ` witnessing invariance, one per group element.
/// The maps are user-supplied; injectivity is spot-checked on the sampled
/// points during [`check_invariance`].
#[derive(Clone)]
pub struct ParamTransport {
    elements: Vec<String>,
    maps: Vec<TransportFn>,
}

impl ParamTransport {
    /// Pairs maps with the elements of an action. A map may be omitted for
    /// the identity element, which then transports by the identity map.
    pub fn new(
        action: &FiniteAction,
        named: impl IntoIterator<Item = (impl Into<String>, TransportFn)>,
    ) -> Result<Self, InvarianceError> {
        let mut maps: Vec<Option<TransportFn>> = vec![None; action.order()];
        for (name, f) in named {
            let name = name.into();
            let e = action.element_index(&name)?;
            if maps[e].is_some() {
                return Err(InvarianceError::DuplicateElement(name));
            }
            maps[e] = Some(f);
        }
        if maps[action.identity()].is_none() {
            maps[action.identity()] = Some(transport_fn(|theta| theta.to_vec()));
        }
        let mut out = Vec::with_capacity(maps.len());
        for (e, m) in maps.into_iter().enumerate() {
            match m {
                Some(f) => out.push(f),
                None => {
                    return Err(InvarianceError::MissingTransport(
                        action.elements()[e].clone(),
                    ))
                }
            }
        }
        Ok(ParamTransport {
            elements: action.elements().to_vec(),
            maps: out,
        })
    }

    /// The identity transport for every element, as used for the trivial
    /// group or for models that are pointwise symmetric.
    pub fn identity(action: &FiniteAction) -> Self {
        ParamTransport {
            elements: action.elements().to_vec(),
            maps: (0..action.order())
                .map(|_| transport_fn(|theta: &[Rat]| theta.to_vec()))
                .collect(),
        }
    }

    /// Element names the maps are keyed by.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    /// The map for one element.
    pub fn map(&self, e: usize) -> &TransportFn {
        &self.maps[e]
    }

    /// Applies the map for element `e`.
    pub fn apply(&self, e: usize, theta: &[Rat]) -> Vec<Rat> {
        (self.maps[e])(theta)
    }
}

impl fmt::Debug for ParamTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamTransport")
            .field("elements", &self.elements)
            .finish_non_exhaustive()
    }
}

/// Report of an invariance check.
#[derive(Clone, Debug)]
pub struct InvarianceCheck {
    /// Whether the defining identity held at every sample within tolerance.
    pub holds: bool,
    /// The largest deviation seen.
    pub max_gap: Rat,
    /// Element of the worst deviation, if any deviation was seen.
    pub worst_element: Option<String>,
    /// Parameter point of the worst deviation.
    pub worst_theta: Option<Vec<Rat>>,
}

/// Checks `f(θ)_{α⁻¹(i)} = f(ᾱθ)_i` at low-discrepancy sample points.
pub fn check_invariance(
    f: &ParametricModel,
    action: &FiniteAction,
    transport: &ParamTransport,
    samples: usize,
    tol: f64,
) -> Result<InvarianceCheck, InvarianceError> {
    check_invariance_at(f, action, transport, &f.sample_points(samples), tol)
}

/// Like [`check_invariance`] but at explicit parameter points, for models
/// whose admissible set is smaller than their box (consistency-restricted
/// pairs, exact flags).
pub fn check_invariance_at(
    f: &ParametricModel,
    action: &FiniteAction,
    transport: &ParamTransport,
    points: &[Vec<Rat>],
    tol: f64,
) -> Result<InvarianceCheck, InvarianceError> {
    if action.set() != f.index() {
        return Err(CoreError::SetMismatch {
            expected: f.index().names(),
            found: action.set().names(),
        }
        .into());
    }
    if transport.elements() != action.elements() {
        return Err(InvarianceError::GroupMismatch(format!(
            "transport is keyed by {:?}",
            transport.elements()
        )));
    }
    let values: Vec<_> = points
        .iter()
        .map(|theta| f.eval(theta))
        .collect::<Result<_, _>>()?;
    let mut check = InvarianceCheck {
        holds: true,
        max_gap: Rat::zero(),
        worst_element: None,
        worst_theta: None,
    };
    for e in 0..action.order() {
        let images: Vec<Vec<Rat>> = points.iter().map(|p| transport.apply(e, p)).collect();
        for (a, pa) in points.iter().enumerate() {
            for (b, pb) in points.iter().enumerate().skip(a + 1) {
                if pa != pb && images[a] == images[b] {
                    return Err(InvarianceError::NotInjective(
                        action.elements()[e].clone(),
                    ));
                }
            }
        }
        let inv = action.inverse(e);
        for (idx, image) in images.iter().enumerate() {
            if let Err(err) = f.bounds().check(image) {
                return Err(InvarianceError::TransportLeftBox {
                    element: action.elements()[e].clone(),
                    detail: err.to_string(),
                });
            }
            let moved = f.eval(image)?;
            for t in 0..f.index().len() {
                let gap = (values[idx].get_idx(action.apply(inv, t)) - moved.get_idx(t)).abs();
                if gap > check.max_gap {
                    check.max_gap = gap;
                    check.worst_element = Some(action.elements()[e].clone());
                    check.worst_theta = Some(points[idx].clone());
                }
            }
        }
    }
    check.holds = to_f64(&check.max_gap) <= tol;
    Ok(check)
}

fn require_same_group(a: &FiniteAction, b: &FiniteAction) -> Result<(), InvarianceError> {
    if a.elements != b.elements {
        return Err(InvarianceError::GroupMismatch(format!(
            "{:?} versus {:?}",
            a.elements, b.elements
        )));
    }
    if a.compose != b.compose {
        return Err(InvarianceError::GroupMismatch(
            "composition tables differ".to_string(),
        ));
    }
    Ok(())
}

/// Whether the pair of actions respects the mappings: `p(i) = q(j)`
/// implies `p(α·i) = q(α·j)` for every element, checked exhaustively.
pub fn is_compatible(
    action_i: &FiniteAction,
    action_j: &FiniteAction,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<bool, InvarianceError> {
    if action_i.set() != p.domain() {
        return Err(CoreError::SetMismatch {
            expected: p.domain().names(),
            found: action_i.set().names(),
        }
        .into());
    }
    if action_j.set() != q.domain() {
        return Err(CoreError::SetMismatch {
            expected: q.domain().names(),
            found: action_j.set().names(),
        }
        .into());
    }
    if p.codomain() != q.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: q.codomain().names(),
        }
        .into());
    }
    require_same_group(action_i, action_j)?;
    for e in 0..action_i.order() {
        for it in 0..p.domain().len() {
            for jt in 0..q.domain().len() {
                if p.apply_idx(it) == q.apply_idx(jt)
                    && p.apply_idx(action_i.apply(e, it)) != q.apply_idx(action_j.apply(e, jt))
                {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// The induced action on the metacategories, `α·p(i) = p(α·i)`.
/// Well-definedness is re-verified exhaustively over both fibers.
pub fn induced_action_on_m(
    action_i: &FiniteAction,
    action_j: &FiniteAction,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<FiniteAction, InvarianceError> {
    if !is_compatible(action_i, action_j, p, q)? {
        return Err(InvarianceError::NotCompatible(
            "the defining condition p(α·i) = q(α·j) fails".to_string(),
        ));
    }
    let m = p.codomain();
    let mut perms = Vec::with_capacity(action_i.order());
    for e in 0..action_i.order() {
        let mut perm = vec![usize::MAX; m.len()];
        for kt in 0..m.len() {
            for it in p.fiber_indices(kt) {
                let image = p.apply_idx(action_i.apply(e, it));
                if perm[kt] == usize::MAX {
                    perm[kt] = image;
                } else if perm[kt] != image {
                    return Err(InvarianceError::NotCompatible(format!(
                        "block {:?} is torn apart by {:?}",
                        m.get(kt).unwrap().as_str(),
                        action_i.elements()[e]
                    )));
                }
            }
            for jt in q.fiber_indices(kt) {
                let image = q.apply_idx(action_j.apply(e, jt));
                if perm[kt] != image {
                    return Err(InvarianceError::NotCompatible(format!(
                        "block {:?} is torn apart by {:?}",
                        m.get(kt).unwrap().as_str(),
                        action_i.elements()[e]
                    )));
                }
            }
        }
        perms.push(perm);
    }
    FiniteAction::with_tables(
        m.clone(),
        action_i.elements.clone(),
        perms,
        action_i.compose.clone(),
    )
}

/// The induced action on the mapping product, `α·(i,j) = (α·i, α·j)`.
/// Group axioms are re-verified on the constructed tables.
pub fn induced_action_on_product(
    action_i: &FiniteAction,
    action_j: &FiniteAction,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<FiniteAction, InvarianceError> {
    if !is_compatible(action_i, action_j, p, q)? {
        return Err(InvarianceError::NotCompatible(
            "the defining condition p(α·i) = q(α·j) fails".to_string(),
        ));
    }
    let prod = ProductIndex::new(p, q)?;
    let mut perms = Vec::with_capacity(action_i.order());
    for e in 0..action_i.order() {
        let mut perm = Vec::with_capacity(prod.cardinality());
        for &(_, it, jt) in prod.triple_positions() {
            let i2 = p.domain().get(action_i.apply(e, it)).unwrap();
            let j2 = q.domain().get(action_j.apply(e, jt)).unwrap();
            match prod.position(i2, j2) {
                Some(pos) => perm.push(pos),
                None => {
                    return Err(InvarianceError::NotCompatible(format!(
                        "({}, {}) leaves the product under {:?}",
                        i2, j2, action_i.elements()[e]
                    )))
                }
            }
        }
        perms.push(perm);
    }
    FiniteAction::with_tables(
        prod.index().clone(),
        action_i.elements.clone(),
        perms,
        action_i.compose.clone(),
    )
}

/// Assembles the transport of a combined model from component transports,
/// following the invariance theorem: a shared map for the meta
/// combination, `(ᾱ₁, ᾱ₂)` for the lower, `(ᾱ₁, ᾱ₂, id)` for the upper,
/// the flag-dependent splice for the super, and `(ᾱ₁, ᾱ₂, ᾱ₃)` for the
/// structured super. Each component comes with its parameter dimension.
pub fn combined_transport(
    variant: Variant,
    parts: &[(usize, ParamTransport)],
) -> Result<ParamTransport, InvarianceError> {
    let expected = match variant {
        Variant::MetaStar => 1,
        Variant::Lower | Variant::Upper | Variant::Super => 2,
        Variant::StructuredSuper => 3,
        other => return Err(InvarianceError::UnsupportedVariant(other)),
    };
    if parts.len() != expected {
        return Err(InvarianceError::WrongArity {
            variant,
            expected,
            found: parts.len(),
        });
    }
    let elements = parts[0].1.elements().to_vec();
    for (_, t) in parts.iter().skip(1) {
        if t.elements() != elements.as_slice() {
            return Err(InvarianceError::GroupMismatch(format!(
                "component transports keyed by {:?} and {:?}",
                elements,
                t.elements()
            )));
        }
    }
    let maps = (0..elements.len())
        .map(|e| match variant {
            Variant::MetaStar => Ok(parts[0].1.map(e).clone()),
            Variant::Lower => {
                let (d1, t1) = (parts[0].0, parts[0].1.map(e).clone());
                let t2 = parts[1].1.map(e).clone();
                Ok(transport_fn(move |theta: &[Rat]| {
                    let mut out = t1(&theta[..d1]);
                    out.extend(t2(&theta[d1..]));
                    out
                }))
            }
            Variant::Upper => {
                let (d1, t1) = (parts[0].0, parts[0].1.map(e).clone());
                let (d2, t2) = (parts[1].0, parts[1].1.map(e).clone());
                Ok(transport_fn(move |theta: &[Rat]| {
                    let mut out = t1(&theta[..d1]);
                    out.extend(t2(&theta[d1..d1 + d2]));
                    out.extend(theta[d1 + d2..].iter().cloned());
                    out
                }))
            }
            Variant::Super => {
                let (d1, t1) = (parts[0].0, parts[0].1.map(e).clone());
                let (d3, t3) = (parts[1].0, parts[1].1.map(e).clone());
                if d1 != d3 {
                    return Err(InvarianceError::ShapeMismatch(format!(
                        "super combination shares one parameter space, got dimensions {d1} and {d3}"
                    )));
                }
                Ok(transport_fn(move |theta: &[Rat]| {
                    let d = d1;
                    let mut out = t1(&theta[..d]);
                    if theta[3 * d].is_zero() {
                        out.extend(t1(&theta[d..2 * d]));
                    } else {
                        out.extend(t3(&theta[d..2 * d]));
                    }
                    out.extend(t3(&theta[2 * d..3 * d]));
                    out.extend(theta[3 * d..].iter().cloned());
                    out
                }))
            }
            Variant::StructuredSuper => {
                let (d1, t1) = (parts[0].0, parts[0].1.map(e).clone());
                let (d2, t2) = (parts[1].0, parts[1].1.map(e).clone());
                let t3 = parts[2].1.map(e).clone();
                Ok(transport_fn(move |theta: &[Rat]| {
                    let mut out = t1(&theta[..d1]);
                    out.extend(t2(&theta[d1..d1 + d2]));
                    out.extend(t3(&theta[d1 + d2..]));
                    out
                }))
            }
            _ => unreachable!("arity filtered above"),
        })
        .collect::<Result<Vec<_>, InvarianceError>>()?;
    Ok(ParamTransport { elements, maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametric::{
        low_discrepancy_points, lower_combine, meta_star, structured_super, super_combine,
        upper_combine, ParamBox, DEFAULT_SAMPLE_POINTS,
    };
    use crate::rational::{rat, rat_int};
    use crate::vector::Dist;

    fn four_set(names: [&str; 4]) -> CategorySet {
        CategorySet::new(names).unwrap()
    }

    fn block_mapping(set: &CategorySet) -> CategoryMapping {
        let names = set.names();
        CategoryMapping::new(
            set.clone(),
            [
                (names[0].clone(), "1".to_string()),
                (names[1].clone(), "1".to_string()),
                (names[2].clone(), "2".to_string()),
                (names[3].clone(), "2".to_string()),
            ],
        )
        .unwrap()
    }

    fn block_swap(set: &CategorySet) -> FiniteAction {
        let names = set.names();
        FiniteAction::involution(
            set,
            "swap",
            [
                (names[0].clone(), names[2].clone()),
                (names[1].clone(), names[3].clone()),
                (names[2].clone(), names[0].clone()),
                (names[3].clone(), names[1].clone()),
            ],
        )
        .unwrap()
    }

    /// Transport of the saturated model on four categories under the block
    /// swap: `f(ᾱθ)_i = f(θ)_{α⁻¹(i)}` solved coordinatewise.
    fn swap_transport(action: &FiniteAction) -> ParamTransport {
        ParamTransport::new(
            action,
            [(
                "swap",
                transport_fn(|theta: &[Rat]| {
                    let rest = Rat::one() - &theta[0] - &theta[1] - &theta[2];
                    vec![theta[2].clone(), rest, theta[0].clone()]
                }),
            )],
        )
        .unwrap()
    }

    #[test]
    fn binomial_flip_is_invariant() {
        let f = ParametricModel::binomial(3);
        let action = FiniteAction::involution(
            f.index(),
            "flip",
            [("0", "3"), ("1", "2"), ("2", "1"), ("3", "0")],
        )
        .unwrap();
        let transport = ParamTransport::new(
            &action,
            [(
                "flip",
                transport_fn(|theta: &[Rat]| vec![Rat::one() - &theta[0]]),
            )],
        )
        .unwrap();
        let check =
            check_invariance(&f, &action, &transport, DEFAULT_SAMPLE_POINTS, 1e-12).unwrap();
        assert!(check.holds);
        assert!(check.max_gap.is_zero());

        // The identity transport does not witness invariance away from 1/2.
        let wrong = ParamTransport::identity(&action);
        let check = check_invariance(&f, &action, &wrong, DEFAULT_SAMPLE_POINTS, 1e-12).unwrap();
        assert!(!check.holds);
        assert_eq!(check.worst_element.as_deref(), Some("flip"));

        // A transport escaping the box is reported with its element.
        let out = ParamTransport::new(
            &action,
            [(
                "flip",
                transport_fn(|theta: &[Rat]| vec![&theta[0] + rat_int(1)]),
            )],
        )
        .unwrap();
        assert!(matches!(
            check_invariance(&f, &action, &out, 8, 1e-12),
            Err(InvarianceError::TransportLeftBox { element, .. }) if element == "flip"
        ));

        // A constant map is flagged as non-injective.
        let squash = ParamTransport::new(
            &action,
            [("flip", transport_fn(|_: &[Rat]| vec![rat(1, 2)]))],
        )
        .unwrap();
        assert!(matches!(
            check_invariance(&f, &action, &squash, 8, 1e-12),
            Err(InvarianceError::NotInjective(e)) if e == "flip"
        ));
    }

    #[test]
    fn trivial_group_is_always_invariant() {
        let f = ParametricModel::saturated(CategorySet::range(4).unwrap());
        let action = FiniteAction::trivial(f.index());
        let transport = ParamTransport::identity(&action);
        let check = check_invariance(&f, &action, &transport, 16, 1e-12).unwrap();
        assert!(check.holds);
        assert!(check.max_gap.is_zero());
    }

    #[test]
    fn action_construction_validates() {
        let set = CategorySet::new(["a", "b", "c"]).unwrap();
        let id = vec![("a", "a"), ("b", "b"), ("c", "c")];

        assert!(matches!(
            FiniteAction::new(&set, [("e", id.clone()), ("e", id.clone())]),
            Err(InvarianceError::DuplicateElement(_))
        ));
        assert!(matches!(
            FiniteAction::new(&set, [("e", vec![("a", "a"), ("b", "a"), ("c", "c")])]),
            Err(InvarianceError::NotPermutation { .. })
        ));
        assert!(matches!(
            FiniteAction::new(&set, [("e", vec![("a", "a"), ("b", "b")])]),
            Err(InvarianceError::NotPermutation { .. })
        ));
        // A three-cycle without its square is not closed.
        let cycle = vec![("a", "b"), ("b", "c"), ("c", "a")];
        assert!(matches!(
            FiniteAction::new(&set, [("e", id.clone()), ("r", cycle.clone())]),
            Err(InvarianceError::NotClosed { .. })
        ));
        let cycle2 = vec![("a", "c"), ("b", "a"), ("c", "b")];
        let z3 = FiniteAction::new(&set, [("e", id), ("r", cycle), ("rr", cycle2)]).unwrap();
        assert_eq!(z3.order(), 3);
        assert_eq!(z3.inverse(z3.element_index("r").unwrap()), 2);
        assert_eq!(z3.compose_elems(1, 2), z3.identity());

        // A lone involution is not closed: its square is missing.
        let two = CategorySet::new(["a", "b"]).unwrap();
        assert!(matches!(
            FiniteAction::new(&two, [("s", vec![("a", "b"), ("b", "a")])]),
            Err(InvarianceError::NotClosed { .. })
        ));
        // A table where every element is a left zero has no unit.
        assert!(matches!(
            FiniteAction::with_tables(
                two.clone(),
                vec!["a".into(), "b".into()],
                vec![vec![0, 1], vec![1, 0]],
                vec![vec![0, 0], vec![1, 1]],
            ),
            Err(InvarianceError::NoIdentity(_))
        ));

        // A bad explicit table is rejected.
        let bad = FiniteAction::with_tables(
            two.clone(),
            vec!["e".into(), "s".into()],
            vec![vec![0, 1], vec![1, 0]],
            vec![vec![0, 1], vec![1, 1]],
        );
        assert!(matches!(bad, Err(InvarianceError::BadTable(_) | InvarianceError::NoIdentity(_))));

        // An unfaithful action is fine with explicit tables.
        let unfaithful = FiniteAction::with_tables(
            two,
            vec!["e".into(), "g".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![0, 1], vec![1, 0]],
        )
        .unwrap();
        assert_eq!(unfaithful.apply(1, 0), 0);
    }

    #[test]
    fn vector_action_uses_inverse_positions() {
        let set = CategorySet::new(["0", "1", "2"]).unwrap();
        let action = FiniteAction::new(
            &set,
            [
                ("e", vec![("0", "0"), ("1", "1"), ("2", "2")]),
                ("r", vec![("0", "1"), ("1", "2"), ("2", "0")]),
                ("rr", vec![("0", "2"), ("1", "0"), ("2", "1")]),
            ],
        )
        .unwrap();
        let v = IndexedVector::new(set, vec![rat(1, 2), rat(1, 3), rat(1, 6)]).unwrap();
        let r = action.element_index("r").unwrap();
        let moved = action.act_on_vector(r, &v).unwrap();
        // (r·v)_i = v_{r⁻¹(i)}: position 1 receives the old position 0.
        assert_eq!(moved.entries(), &[rat(1, 6), rat(1, 2), rat(1, 3)]);
        let back = action.act_on_vector(action.inverse(r), &moved).unwrap();
        assert_eq!(back.entries(), v.entries());
    }

    #[test]
    fn compatibility_and_induced_actions() {
        let i = four_set(["a", "b", "c", "d"]);
        let j = four_set(["x", "y", "z", "w"]);
        let p = block_mapping(&i);
        let q = block_mapping(&j);
        let ai = block_swap(&i);
        let aj = block_swap(&j);
        assert!(is_compatible(&ai, &aj, &p, &q).unwrap());

        let am = induced_action_on_m(&ai, &aj, &p, &q).unwrap();
        let swap = am.element_index("swap").unwrap();
        assert_eq!(am.apply_cat(swap, &Category::new("1")).unwrap().as_str(), "2");

        // Fixing each block setwise induces the identity on M.
        let fi = FiniteAction::involution(
            &i,
            "flip",
            [("a", "b"), ("b", "a"), ("c", "d"), ("d", "c")],
        )
        .unwrap();
        let fj = FiniteAction::involution(
            &j,
            "flip",
            [("x", "y"), ("y", "x"), ("z", "w"), ("w", "z")],
        )
        .unwrap();
        assert!(is_compatible(&fi, &fj, &p, &q).unwrap());
        let am = induced_action_on_m(&fi, &fj, &p, &q).unwrap();
        let flip = am.element_index("flip").unwrap();
        assert_eq!(am.apply(flip, 0), 0);
        assert_eq!(am.apply(flip, 1), 1);

        // Swapping blocks on I but not on J is incompatible.
        let keep = FiniteAction::involution(
            &j,
            "swap",
            [("x", "y"), ("y", "x"), ("z", "z"), ("w", "w")],
        )
        .unwrap();
        assert!(!is_compatible(&ai, &keep, &p, &q).unwrap());
        assert!(matches!(
            induced_action_on_m(&ai, &keep, &p, &q),
            Err(InvarianceError::NotCompatible(_))
        ));

        // The product action moves pairs componentwise.
        let prod = ProductIndex::new(&p, &q).unwrap();
        let ap = induced_action_on_product(&ai, &aj, &p, &q).unwrap();
        assert_eq!(ap.set(), prod.index());
        let swap = ap.element_index("swap").unwrap();
        assert_eq!(
            ap.apply_cat(swap, &Category::new("(a,x)")).unwrap().as_str(),
            "(c,z)"
        );
        assert_eq!(ap.compose_elems(swap, swap), ap.identity());
    }

    #[test]
    fn aggregate_equivariance_lemma() {
        let i = four_set(["a", "b", "c", "d"]);
        let p = block_mapping(&i);
        let q = block_mapping(&four_set(["x", "y", "z", "w"]));
        let ai = block_swap(&i);
        let aj = block_swap(&four_set(["x", "y", "z", "w"]));
        let f = ParametricModel::saturated(i);
        let transport = swap_transport(&ai);
        let check =
            check_invariance(&f, &ai, &transport, DEFAULT_SAMPLE_POINTS, 1e-12).unwrap();
        assert!(check.holds && check.max_gap.is_zero());

        // f(ᾱθ)_{M,k} = f(θ)_{M,α⁻¹(k)} at every sampled θ.
        let am = induced_action_on_m(&ai, &aj, &p, &q).unwrap();
        let swap = ai.element_index("swap").unwrap();
        for theta in f.sample_points(16) {
            let here = f.eval(&theta).unwrap().aggregate(&p).unwrap();
            let moved = f
                .eval(&transport.apply(swap, &theta))
                .unwrap()
                .aggregate(&p)
                .unwrap();
            for kt in 0..p.codomain().len() {
                let pre = am.apply(am.inverse(swap), kt);
                assert_eq!(moved.get_idx(kt), here.get_idx(pre));
            }
        }
    }

    #[test]
    fn combined_transports_witness_the_theorem() {
        let i = four_set(["a", "b", "c", "d"]);
        let j = four_set(["x", "y", "z", "w"]);
        let p = block_mapping(&i);
        let q = block_mapping(&j);
        let ai = block_swap(&i);
        let aj = block_swap(&j);
        let f = ParametricModel::saturated(i.clone());
        let g = ParametricModel::saturated(j.clone());
        let tf = swap_transport(&ai);
        let tg = swap_transport(&aj);
        let ap = induced_action_on_product(&ai, &aj, &p, &q).unwrap();
        let d = f.dim();

        // Meta combination: jointly invariant via the shared map.
        let combined = meta_star(&f, &g, &p, &q).unwrap();
        let transport = combined_transport(Variant::MetaStar, &[(d, tf.clone())]).unwrap();
        let check = check_invariance(
            combined.model(),
            &ap,
            &transport,
            DEFAULT_SAMPLE_POINTS,
            1e-12,
        )
        .unwrap();
        assert!(check.holds && check.max_gap.is_zero());

        // Lower combination, on consistent parameter pairs built from five
        // free coordinates: shared block mass c, then one free coordinate
        // inside each block of each component.
        let combined = lower_combine(&f, &g, &p, &q).unwrap();
        let transport =
            combined_transport(Variant::Lower, &[(d, tf.clone()), (d, tg.clone())]).unwrap();
        let points: Vec<Vec<Rat>> =
            low_discrepancy_points(&ParamBox::unit(5), &[], DEFAULT_SAMPLE_POINTS)
                .into_iter()
                .map(|u| {
                    let c = &u[0];
                    let a2 = c * &u[1];
                    let b2 = c * &u[3];
                    vec![
                        (Rat::one() - c) * &u[2],
                        a2.clone(),
                        c - a2,
                        (Rat::one() - c) * &u[4],
                        b2.clone(),
                        c - b2,
                    ]
                })
                .collect();
        let check =
            check_invariance_at(combined.model(), &ap, &transport, &points, 1e-12).unwrap();
        assert!(check.holds && check.max_gap.is_zero());

        // Upper combination: free pairs plus an exact flag.
        let combined = upper_combine(&f, &g, &p, &q).unwrap();
        let transport =
            combined_transport(Variant::Upper, &[(d, tf.clone()), (d, tg.clone())]).unwrap();
        let points: Vec<Vec<Rat>> =
            low_discrepancy_points(&ParamBox::unit(2 * d), &[(0, d), (d, d)], 32)
                .into_iter()
                .enumerate()
                .map(|(t, mut theta)| {
                    theta.push(rat_int((t % 2) as i64));
                    theta
                })
                .collect();
        let check =
            check_invariance_at(combined.model(), &ap, &transport, &points, 1e-12).unwrap();
        assert!(check.holds && check.max_gap.is_zero());

        // Super combination: three slots plus the flag, spliced per the
        // flag value.
        let combined = super_combine(&f, &g, &p, &q).unwrap();
        let transport =
            combined_transport(Variant::Super, &[(d, tf.clone()), (d, tg.clone())]).unwrap();
        let points: Vec<Vec<Rat>> = low_discrepancy_points(
            &ParamBox::unit(3 * d),
            &[(0, d), (d, d), (2 * d, d)],
            32,
        )
        .into_iter()
        .enumerate()
        .map(|(t, mut theta)| {
            theta.push(rat_int((t % 2) as i64));
            theta
        })
        .collect();
        let check =
            check_invariance_at(combined.model(), &ap, &transport, &points, 1e-12).unwrap();
        assert!(check.holds && check.max_gap.is_zero());

        // Structured super with an invariant middle model.
        let h = ParametricModel::saturated(p.codomain().clone());
        let am = induced_action_on_m(&ai, &aj, &p, &q).unwrap();
        let th = ParamTransport::new(
            &am,
            [(
                "swap",
                transport_fn(|theta: &[Rat]| vec![Rat::one() - &theta[0]]),
            )],
        )
        .unwrap();
        let hcheck = check_invariance(&h, &am, &th, DEFAULT_SAMPLE_POINTS, 1e-12).unwrap();
        assert!(hcheck.holds);
        let combined = structured_super(&f, &h, &g, &p, &q).unwrap();
        let transport = combined_transport(
            Variant::StructuredSuper,
            &[(d, tf.clone()), (h.dim(), th), (d, tg.clone())],
        )
        .unwrap();
        let check = check_invariance(
            combined.model(),
            &ap,
            &transport,
            DEFAULT_SAMPLE_POINTS,
            1e-12,
        )
        .unwrap();
        assert!(check.holds && check.max_gap.is_zero());
    }

    #[test]
    fn combined_transport_arity_is_checked() {
        let set = CategorySet::new(["0", "1"]).unwrap();
        let action = FiniteAction::trivial(&set);
        let t = ParamTransport::identity(&action);
        assert!(matches!(
            combined_transport(Variant::Lower, &[(1, t.clone())]),
            Err(InvarianceError::WrongArity {
                expected: 2,
                found: 1,
                ..
            })
        ));
        assert!(matches!(
            combined_transport(Variant::RestrictedLower, &[(1, t.clone())]),
            Err(InvarianceError::UnsupportedVariant(Variant::RestrictedLower))
        ));
        assert!(matches!(
            combined_transport(Variant::Super, &[(1, t.clone()), (2, t.clone())]),
            Err(InvarianceError::ShapeMismatch(_))
        ));

        let other = FiniteAction::involution(&set, "s", [("0", "1"), ("1", "0")]).unwrap();
        let t2 = ParamTransport::identity(&other);
        assert!(matches!(
            combined_transport(Variant::Lower, &[(1, t), (1, t2)]),
            Err(InvarianceError::GroupMismatch(_))
        ));
    }

    #[test]
    fn action_json_round_trip() {
        let set = CategorySet::new(["0", "1", "2", "3"]).unwrap();
        let action = FiniteAction::involution(
            &set,
            "flip",
            [("0", "3"), ("1", "2"), ("2", "1"), ("3", "0")],
        )
        .unwrap();
        let text = serde_json::to_string(&action).unwrap();
        let parsed: FiniteAction = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, action);

        // Without a composition table the group is rebuilt from products.
        let bare = r#"{
            "elements": ["e", "flip"],
            "perms": {
                "e": {"0": "0", "1": "1", "2": "2", "3": "3"},
                "flip": {"0": "3", "1": "2", "2": "1", "3": "0"}
            }
        }"#;
        let parsed: FiniteAction = serde_json::from_str(bare).unwrap();
        assert_eq!(parsed.order(), 2);
        let flip = parsed.element_index("flip").unwrap();
        assert_eq!(parsed.compose_elems(flip, flip), parsed.identity());

        // An inconsistent explicit table is rejected.
        let bad = r#"{
            "elements": ["e", "flip"],
            "perms": {
                "e": {"0": "0", "1": "1", "2": "2", "3": "3"},
                "flip": {"0": "3", "1": "2", "2": "1", "3": "0"}
            },
            "compose": {
                "e": {"e": "e", "flip": "flip"},
                "flip": {"e": "flip", "flip": "flip"}
            }
        }"#;
        assert!(serde_json::from_str::<FiniteAction>(bad).is_err());
    }

    #[test]
    fn point_mass_symmetry_uses_identity_transport() {
        // A constant symmetric model is invariant with identity transport.
        let set = CategorySet::new(["a", "b"]).unwrap();
        let f = ParametricModel::constant(Dist::uniform(set.clone()));
        let action = FiniteAction::involution(&set, "s", [("a", "b"), ("b", "a")]).unwrap();
        let transport = ParamTransport::identity(&action);
        let check = check_invariance_at(&f, &action, &transport, &[vec![]], 1e-12).unwrap();
        assert!(check.holds);
    }
}
