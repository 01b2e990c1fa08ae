//! Parametric categorical models and their Markov combination variants.
//!
//! A [`ParametricModel`] maps exact rational parameter points from a
//! [`ParamBox`] to distributions on a fixed category set. Evaluators work in
//! exact rational arithmetic throughout, so the combination identities of
//! the concrete layer hold exactly on evaluated models; the tolerances
//! ([`tau_norm`], [`tau_neg`], [`consistency_tol`]) only guard user-supplied
//! evaluators that are not exactly normalized.
//!
//! The combination variants differ in how parameters are paired:
//!
//! - [`meta_star`]: one shared parameter, requires meta-consistency;
//! - [`lower_combine`] / [`restricted_lower`]: pairs `(θ1, θ2)` whose
//!   evaluations are consistent, the restricted form enumerating a grid;
//! - [`upper_combine`] / [`restricted_upper`]: free pairs plus a binary
//!   flag selecting the left or right combination;
//! - [`super_combine`] / [`restricted_super`]: three parameter slots with a
//!   flag choosing which model feeds the middle aggregate;
//! - [`structured_super`]: an explicit middle model on the metacategories.

mod builtins;
mod model;
mod variants;

pub use builtins::{consistent_saturated_pair, expfam_combination_dim, model_lift};
pub use model::{
    consistency_tol, is_meta_consistent, is_meta_consistent_at, low_discrepancy_points,
    tau_neg, tau_norm, MetaCheck, ModelError, ParamBox, ParametricModel, Polynomial,
    DEFAULT_SAMPLE_POINTS,
};
pub use variants::{
    lower_combine, meta_star, mixture, mixture_via_chain, restricted_lower, restricted_super,
    restricted_upper, structured_marginals, structured_super, super_combine, upper_combine,
    CombinedModel, Components, ParamGrid, Variant,
};
