//! Markov combinations of discrete categorical statistical models, computed
//! over exact rational arithmetic.
//!
//! The building blocks are finite [`CategorySet`]s, surjective
//! [`CategoryMapping`]s onto shared metacategories, and rational vectors
//! indexed by them. On top of those the crate provides:
//!
//! - aggregation, mapping products, and the left/right/star combinations of
//!   consistent vectors ([`combine`]);
//! - parametric models with every combination variant (meta, lower, upper,
//!   super, structured), mixtures, saturated models, and model lifting
//!   ([`parametric`]);
//! - discrete copulas, their correspondence with bistochastic matrices, and
//!   the copula product as a Markov combination ([`copula`]);
//! - staged trees, tree decompositions, and the combination of staged trees
//!   ([`stagedtree`]);
//! - closed-form maximum likelihood with Horn pairs ([`mle`]);
//! - invariance of models under finite group actions ([`invariance`]);
//! - exact seeded sampling ([`sampling`]).
//!
//! ```
//! use markov_comb::rational::rat;
//! use markov_comb::{star, CategoryMapping, CategorySet, IndexedVector, ProductIndex};
//!
//! let i = CategorySet::new(["a", "b", "c"])?;
//! let j = CategorySet::new(["C", "D", "H", "S"])?;
//! let p = CategoryMapping::new(i.clone(), [("a", "1"), ("b", "2"), ("c", "2")])?;
//! let q = CategoryMapping::new(j.clone(), [("C", "1"), ("D", "1"), ("H", "1"), ("S", "2")])?;
//! let prod = ProductIndex::new(&p, &q)?;
//!
//! let f = IndexedVector::new(i, vec![rat(3, 4), rat(1, 8), rat(1, 8)])?;
//! let g = IndexedVector::new(j, vec![rat(1, 4); 4])?;
//! let combined = star(&f, &g, &prod)?;
//! assert_eq!(combined.entries()[0], rat(1, 4));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

#![warn(missing_docs)]

pub mod category;
pub mod combine;
pub mod copula;
pub mod invariance;
pub mod mle;
pub mod parametric;
pub mod rational;
pub mod sampling;
pub mod stagedtree;
pub mod vector;

pub use category::{Category, CategoryMapping, CategorySet, CoreError};
pub use copula::{
    base_index, bistochastic_from_copula, check_copula, check_generalized_copula,
    coordinate_projection, copula_from_bistochastic, copula_from_density, density_from_copula,
    pair_index, product_copula, product_via_markov, BistochasticMatrix, CopulaError,
    CopulaViolation, DiscreteCopula,
};
pub use combine::{
    first_disagreement, induced_mapping, is_consistent, left_combine, left_combine_with,
    project, right_combine, right_combine_with, star, CombineError, ZeroPolicy,
};
pub use invariance::{
    check_invariance, check_invariance_at, combined_transport, induced_action_on_m,
    induced_action_on_product, is_compatible, transport_fn, FiniteAction, InvarianceCheck,
    InvarianceError, ParamTransport, TransportFn,
};
pub use mle::{
    build_horn_pair, likelihood_ratio_ge, log_likelihood, mle, verify_horn_identity, DataVector,
    HornPair, MleError,
};
pub use rational::Rat;
pub use sampling::{
    empirical_dist, empirical_pairs, sample_meta_star, sample_meta_star_many,
    sample_structured_super, sample_structured_super_many, Sampler, SamplingError,
};
pub use stagedtree::{
    factorize, induced_pair, leaf_bijection, models_equal, staged_combine, staged_combine_with,
    staged_meta_consistent_numeric, staged_meta_consistent_symbolic, transport_by_label_names,
    PathFactorization, StagedCombination, StagedTree, TreeDecomposition, TreeError,
};
pub use vector::{mapping_product, Axis, Dist, IndexedVector, ProductIndex};
