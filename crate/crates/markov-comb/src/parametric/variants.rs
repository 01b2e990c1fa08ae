//! The parametric combination variants and mixtures.

use num::{One, Zero};

use crate::category::{Category, CategoryMapping, CategorySet, CoreError};
use crate::combine::{left_combine, right_combine, star, CombineError};
use crate::rational::{format_rat, Rat};
use crate::vector::{Dist, IndexedVector, ProductIndex};

use super::model::{
    check_model_mapping, consistency_tol, is_meta_consistent, merge_blocks, shift_blocks,
    ModelError, ParamBox, ParametricModel,
};

/// Which combination produced a [`CombinedModel`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    /// One shared parameter, meta-consistent components.
    MetaStar,
    /// Parameter pairs `(θ1, θ2)` restricted to consistent evaluations.
    Lower,
    /// One shared parameter restricted to consistent evaluations.
    RestrictedLower,
    /// Parameter pairs plus a flag choosing left or right combination.
    Upper,
    /// One shared parameter plus the left/right flag.
    RestrictedUpper,
    /// Three parameter slots plus a flag choosing the middle aggregate.
    Super,
    /// Two parameter slots (`θ3 = θ1`) plus the middle-aggregate flag.
    RestrictedSuper,
    /// Three parameter slots with an explicit middle model.
    StructuredSuper,
}

/// The component models a combination was built from.
#[derive(Clone, Debug)]
pub enum Components {
    /// Two component models.
    Pair {
        /// Model on the first factor index.
        f: ParametricModel,
        /// Model on the second factor index.
        g: ParametricModel,
    },
    /// Two component models around a middle model on the metacategories.
    Triple {
        /// Model on the first factor index.
        f: ParametricModel,
        /// Middle model on the metacategories.
        h: ParametricModel,
        /// Model on the second factor index.
        g: ParametricModel,
    },
}

/// A parametric model over a mapping product, tagged with the variant that
/// built it and carrying the component models.
#[derive(Clone, Debug)]
pub struct CombinedModel {
    variant: Variant,
    product: ProductIndex,
    model: ParametricModel,
    components: Components,
    admissible: Option<Vec<Vec<Rat>>>,
}

impl CombinedModel {
    /// The variant tag.
    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// The underlying mapping product (with both category mappings).
    pub fn product(&self) -> &ProductIndex {
        &self.product
    }

    /// The combined model itself.
    pub fn model(&self) -> &ParametricModel {
        &self.model
    }

    /// Consumes the combination, returning the bare model.
    pub fn into_model(self) -> ParametricModel {
        self.model
    }

    /// The component models.
    pub fn components(&self) -> &Components {
        &self.components
    }

    /// Admissible parameter points, for grid-restricted combinations.
    pub fn admissible(&self) -> Option<&[Vec<Rat>]> {
        self.admissible.as_deref()
    }

    /// Evaluates the combined model.
    pub fn eval(&self, theta: &[Rat]) -> Result<Dist, ModelError> {
        self.model.eval(theta)
    }

    /// Parameter dimension of the combined model.
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Parameter box of the combined model.
    pub fn bounds(&self) -> &ParamBox {
        self.model.bounds()
    }

    /// The product index set the model is defined on.
    pub fn index(&self) -> &CategorySet {
        self.model.index()
    }

    /// Deterministic in-box parameter points; see
    /// [`super::low_discrepancy_points`].
    pub fn sample_points(&self, count: usize) -> Vec<Vec<Rat>> {
        self.model.sample_points(count)
    }
}

fn fmt_point(theta: &[Rat]) -> Vec<String> {
    theta.iter().map(format_rat).collect()
}

fn require_same_box(f: &ParametricModel, g: &ParametricModel) -> Result<(), ModelError> {
    if f.bounds() != g.bounds() {
        return Err(ModelError::BoundsMismatch);
    }
    Ok(())
}

fn checked_product(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<ProductIndex, ModelError> {
    check_model_mapping(f, p)?;
    check_model_mapping(g, q)?;
    Ok(ProductIndex::new(p, q)?)
}

fn aggregate_gap(fd: &Dist, gd: &Dist, prod: &ProductIndex) -> Result<Rat, ModelError> {
    let f_m = fd.aggregate(prod.mapping_i())?;
    let g_m = gd.aggregate(prod.mapping_j())?;
    let mut gap = Rat::zero();
    for (a, b) in f_m.entries().iter().zip(g_m.entries()) {
        let d = if a >= b { a - b } else { b - a };
        if d > gap {
            gap = d;
        }
    }
    Ok(gap)
}

/// Gap-checked combination: errors when the evaluated pair is inconsistent
/// beyond tolerance, otherwise returns the left combination entries (which
/// equal the right combination for exactly consistent pairs).
fn consistent_entries(
    fd: &Dist,
    gd: &Dist,
    prod: &ProductIndex,
    theta: &[Rat],
    paired: bool,
) -> Result<Vec<Rat>, ModelError> {
    let gap = aggregate_gap(fd, gd, prod)?;
    if gap > consistency_tol() {
        let theta = fmt_point(theta);
        let gap = format_rat(&gap);
        return Err(if paired {
            ModelError::InconsistentPair { theta, gap }
        } else {
            ModelError::NotConsistentAt { theta, gap }
        });
    }
    Ok(left_combine(fd.vector(), gd.vector(), prod)?.into_entries())
}

fn flag_value(flag: &Rat) -> Result<bool, ModelError> {
    if flag.is_zero() {
        Ok(false)
    } else if flag.is_one() {
        Ok(true)
    } else {
        Err(ModelError::BadFlag(format_rat(flag)))
    }
}

/// The meta-Markov combination: a model on the mapping product with the
/// shared parameter box, evaluating to `star(f(θ), g(θ))`. Errors with a
/// witness when the pair fails the sampled meta-consistency check.
pub fn meta_star(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let check = is_meta_consistent(f, g, p, q)?;
    if !check.consistent {
        return Err(ModelError::NotMetaConsistent {
            theta: fmt_point(&check.worst_theta.unwrap_or_default()),
            gap: format_rat(&check.max_gap),
        });
    }
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(
        prod.index().clone(),
        f.bounds().clone(),
        move |theta| {
            let fd = fc.eval(theta)?;
            let gd = gc.eval(theta)?;
            consistent_entries(&fd, &gd, &pc, theta, false)
        },
    )
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::MetaStar,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// The lower combination: parameters `(θ1, θ2)`, defined only on pairs whose
/// evaluations are consistent; evaluation elsewhere errors with
/// [`ModelError::InconsistentPair`].
pub fn lower_combine(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let d = f.dim();
    let bounds = f.bounds().concat(g.bounds());
    let mut blocks = f.simplex_blocks().to_vec();
    blocks.extend(shift_blocks(g.simplex_blocks(), d));
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..d])?;
        let gd = gc.eval(&theta[d..])?;
        consistent_entries(&fd, &gd, &pc, theta, true)
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::Lower,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// A finite set of parameter points, used to realize the restricted lower
/// combination's parameter space.
#[derive(Clone, Debug)]
pub struct ParamGrid {
    points: Vec<Vec<Rat>>,
}

impl ParamGrid {
    /// A grid from explicit points.
    pub fn from_points(points: Vec<Vec<Rat>>) -> Self {
        ParamGrid { points }
    }

    /// The lattice of points with coordinates `k / den` inside the box.
    pub fn with_denominator(bounds: &ParamBox, den: u64) -> Result<Self, ModelError> {
        if den == 0 {
            return Err(ModelError::BadDescription(
                "grid denominator must be positive".into(),
            ));
        }
        let den = Rat::from_integer(den.into());
        let mut per_coord: Vec<Vec<Rat>> = Vec::with_capacity(bounds.dim());
        for c in 0..bounds.dim() {
            let (lo, hi) = bounds.interval(c);
            let mut k = (lo * &den).ceil().to_integer();
            let top = (hi * &den).floor().to_integer();
            let mut vals = Vec::new();
            while k <= top {
                vals.push(Rat::from_integer(k.clone()) / &den);
                k += 1;
            }
            if vals.is_empty() {
                return Ok(ParamGrid { points: Vec::new() });
            }
            per_coord.push(vals);
        }
        let mut points = Vec::new();
        let mut idx = vec![0usize; per_coord.len()];
        'outer: loop {
            points.push(
                idx.iter()
                    .enumerate()
                    .map(|(c, &t)| per_coord[c][t].clone())
                    .collect(),
            );
            let mut c = per_coord.len();
            loop {
                if c == 0 {
                    break 'outer;
                }
                c -= 1;
                idx[c] += 1;
                if idx[c] < per_coord[c].len() {
                    break;
                }
                idx[c] = 0;
            }
        }
        Ok(ParamGrid { points })
    }

    /// The points.
    pub fn points(&self) -> &[Vec<Rat>] {
        &self.points
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the grid is empty.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The restricted lower combination: one shared parameter, with the
/// admissible set `{θ | f(θ), g(θ) consistent}` realized by filtering the
/// given grid. Errors with [`ModelError::EmptyParameterSet`] when no grid
/// point is admissible; evaluation itself checks the consistency predicate,
/// so admissible off-grid points also evaluate.
pub fn restricted_lower(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
    grid: &ParamGrid,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let tol = consistency_tol();
    let mut admissible = Vec::new();
    for theta in grid.points() {
        if !f.bounds().contains(theta) {
            continue;
        }
        let (fd, gd) = match (f.eval(theta), g.eval(theta)) {
            (Ok(fd), Ok(gd)) => (fd, gd),
            _ => continue,
        };
        if aggregate_gap(&fd, &gd, &prod)? <= tol {
            admissible.push(theta.clone());
        }
    }
    if admissible.is_empty() {
        return Err(ModelError::EmptyParameterSet);
    }
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(
        prod.index().clone(),
        f.bounds().clone(),
        move |theta| {
            let fd = fc.eval(theta)?;
            let gd = gc.eval(theta)?;
            consistent_entries(&fd, &gd, &pc, theta, true)
        },
    )
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::RestrictedLower,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: Some(admissible),
    })
}

/// The upper combination: parameters `(θ1, θ2, flag)` with the flag
/// selecting the left (`0`) or right (`1`) combination of `f(θ1), g(θ2)`.
/// Total on its box; inconsistent pairs give flag-dependent results.
pub fn upper_combine(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let d = f.dim();
    let bounds = f.bounds().concat(g.bounds()).with_flag();
    let mut blocks = f.simplex_blocks().to_vec();
    blocks.extend(shift_blocks(g.simplex_blocks(), d));
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..d])?;
        let gd = gc.eval(&theta[d..2 * d])?;
        let v = if flag_value(&theta[2 * d])? {
            right_combine(fd.vector(), gd.vector(), &pc)?
        } else {
            left_combine(fd.vector(), gd.vector(), &pc)?
        };
        Ok(v.into_entries())
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::Upper,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// The restricted upper combination: parameters `(θ, flag)`, both component
/// models evaluated at the same `θ`.
pub fn restricted_upper(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let d = f.dim();
    let bounds = f.bounds().with_flag();
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..d])?;
        let gd = gc.eval(&theta[..d])?;
        let v = if flag_value(&theta[d])? {
            right_combine(fd.vector(), gd.vector(), &pc)?
        } else {
            left_combine(fd.vector(), gd.vector(), &pc)?
        };
        Ok(v.into_entries())
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::RestrictedUpper,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// Entries `(f_i / f_{M,k}) * mid_k * (g_j / g_{M,k})` over the product,
/// where `mid` is a vector on the metacategories. Errors on zero block
/// aggregates of `f` or `g`.
fn super_entries(
    fd: &Dist,
    gd: &Dist,
    mid: &IndexedVector,
    prod: &ProductIndex,
) -> Result<Vec<Rat>, ModelError> {
    let f_m = fd.aggregate(prod.mapping_i())?;
    let g_m = gd.aggregate(prod.mapping_j())?;
    let mut entries = Vec::with_capacity(prod.cardinality());
    for &(kt, it, jt) in prod.triple_positions() {
        let fmk = f_m.get_idx(kt);
        let gmk = g_m.get_idx(kt);
        if fmk.is_zero() || gmk.is_zero() {
            return Err(CombineError::ZeroAggregate(
                prod.mapping_i()
                    .codomain()
                    .get(kt)
                    .unwrap()
                    .as_str()
                    .to_string(),
            )
            .into());
        }
        entries.push(fd.get_idx(it) / fmk * mid.get_idx(kt) * gd.get_idx(jt) / gmk);
    }
    Ok(entries)
}

/// The super combination: parameters `(θ1, θ2, θ3, flag)`. The entry over
/// `(i, j)` in block `k` is the conditional of `f(θ1)` times a middle
/// aggregate at `θ2` times the conditional of `g(θ3)`; the flag picks
/// `f_M(θ2)` (`0`) or `g_M(θ2)` (`1`) as the middle.
pub fn super_combine(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let d = f.dim();
    let bounds = f
        .bounds()
        .concat(f.bounds())
        .concat(f.bounds())
        .with_flag();
    let mid_blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let mut blocks = f.simplex_blocks().to_vec();
    blocks.extend(shift_blocks(&mid_blocks, d));
    blocks.extend(shift_blocks(g.simplex_blocks(), 2 * d));
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..d])?;
        let gd = gc.eval(&theta[2 * d..3 * d])?;
        let mid = if flag_value(&theta[3 * d])? {
            gc.eval(&theta[d..2 * d])?.aggregate(pc.mapping_j())?
        } else {
            fc.eval(&theta[d..2 * d])?.aggregate(pc.mapping_i())?
        };
        super_entries(&fd, &gd, &mid, &pc)
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::Super,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// The restricted super combination: parameters `(θ1, θ2, flag)`, with both
/// conditional factors taken at `θ1` and the middle aggregate at `θ2`.
pub fn restricted_super(
    f: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    require_same_box(f, g)?;
    let prod = checked_product(f, g, p, q)?;
    let d = f.dim();
    let bounds = f.bounds().concat(f.bounds()).with_flag();
    let mid_blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let mut blocks = mid_blocks.clone();
    blocks.extend(shift_blocks(&mid_blocks, d));
    let (fc, gc, pc) = (f.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..d])?;
        let gd = gc.eval(&theta[..d])?;
        let mid = if flag_value(&theta[2 * d])? {
            gc.eval(&theta[d..2 * d])?.aggregate(pc.mapping_j())?
        } else {
            fc.eval(&theta[d..2 * d])?.aggregate(pc.mapping_i())?
        };
        super_entries(&fd, &gd, &mid, &pc)
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::RestrictedSuper,
        product: prod,
        model,
        components: Components::Pair {
            f: f.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// The structured super combination of `f` and `g` with respect to a middle
/// model `h` on the metacategories: parameters `(θ1, θ2, θ3)` over the three
/// component boxes, entries `(f_i(θ1)/f_{M,k}(θ1)) h_k(θ2)
/// (g_j(θ3)/g_{M,k}(θ3))`.
pub fn structured_super(
    f: &ParametricModel,
    h: &ParametricModel,
    g: &ParametricModel,
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<CombinedModel, ModelError> {
    let prod = checked_product(f, g, p, q)?;
    if h.index() != p.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: h.index().names(),
        }
        .into());
    }
    let (df, dh) = (f.dim(), h.dim());
    let bounds = f.bounds().concat(h.bounds()).concat(g.bounds());
    let mut blocks = f.simplex_blocks().to_vec();
    blocks.extend(shift_blocks(h.simplex_blocks(), df));
    blocks.extend(shift_blocks(g.simplex_blocks(), df + dh));
    let (fc, hc, gc, pc) = (f.clone(), h.clone(), g.clone(), prod.clone());
    let model = ParametricModel::from_fn(prod.index().clone(), bounds, move |theta| {
        let fd = fc.eval(&theta[..df])?;
        let hd = hc.eval(&theta[df..df + dh])?;
        let gd = gc.eval(&theta[df + dh..])?;
        super_entries(&fd, &gd, hd.vector(), &pc)
    })
    .with_simplex_blocks(blocks);
    Ok(CombinedModel {
        variant: Variant::StructuredSuper,
        product: prod,
        model,
        components: Components::Triple {
            f: f.clone(),
            h: h.clone(),
            g: g.clone(),
        },
        admissible: None,
    })
}

/// Closed-form marginals of a structured super combination: the model on
/// the first factor index over `(θ1, θ2)` with entries
/// `(f_i(θ1)/f_{M,k}(θ1)) h_k(θ2)`, the mirror model on the second factor
/// index over `(θ2, θ3)`, and the middle model itself.
pub fn structured_marginals(
    c: &CombinedModel,
) -> Result<(ParametricModel, ParametricModel, ParametricModel), ModelError> {
    let Components::Triple { f, h, g } = c.components() else {
        return Err(ModelError::WrongVariant(format!("{:?}", c.variant())));
    };
    let p = c.product().mapping_i().clone();
    let q = c.product().mapping_j().clone();
    let (df, dh) = (f.dim(), h.dim());
    let bounds_i = f.bounds().concat(h.bounds());
    let mut blocks_i = f.simplex_blocks().to_vec();
    blocks_i.extend(shift_blocks(h.simplex_blocks(), df));
    let (fc, hc) = (f.clone(), h.clone());
    let on_i = ParametricModel::from_fn(f.index().clone(), bounds_i, move |theta| {
        let fd = fc.eval(&theta[..df])?;
        let hd = hc.eval(&theta[df..])?;
        conditional_times_mid(&fd, hd.vector(), &p)
    })
    .with_simplex_blocks(blocks_i);
    let bounds_j = h.bounds().concat(g.bounds());
    let mut blocks_j = h.simplex_blocks().to_vec();
    blocks_j.extend(shift_blocks(g.simplex_blocks(), dh));
    let (hc2, gc) = (h.clone(), g.clone());
    let on_j = ParametricModel::from_fn(g.index().clone(), bounds_j, move |theta| {
        let hd = hc2.eval(&theta[..dh])?;
        let gd = gc.eval(&theta[dh..])?;
        conditional_times_mid(&gd, hd.vector(), &q)
    })
    .with_simplex_blocks(blocks_j);
    Ok((on_i, on_j, h.clone()))
}

fn conditional_times_mid(
    d: &Dist,
    mid: &IndexedVector,
    mapping: &CategoryMapping,
) -> Result<Vec<Rat>, ModelError> {
    let agg = d.aggregate(mapping)?;
    let mut entries = Vec::with_capacity(d.entries().len());
    for (t, e) in d.entries().iter().enumerate() {
        let kt = mapping.apply_idx(t);
        let denom = agg.get_idx(kt);
        if denom.is_zero() {
            return Err(CombineError::ZeroAggregate(
                mapping.codomain().get(kt).unwrap().as_str().to_string(),
            )
            .into());
        }
        entries.push(e / denom * mid.get_idx(kt));
    }
    Ok(entries)
}

/// The mixture of two models on the same index: parameters `(θ, λ)` with
/// `λ` trailing, evaluating to `λ f(θ) + (1-λ) g(θ)`.
pub fn mixture(
    f: &ParametricModel,
    g: &ParametricModel,
) -> Result<ParametricModel, ModelError> {
    require_same_index(f, g)?;
    require_same_box(f, g)?;
    let d = f.dim();
    let bounds = f.bounds().with_flag();
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let (fc, gc) = (f.clone(), g.clone());
    Ok(
        ParametricModel::from_fn(f.index().clone(), bounds, move |theta| {
            let lam = &theta[d];
            let co = Rat::one() - lam;
            let fd = fc.eval(&theta[..d])?;
            let gd = gc.eval(&theta[..d])?;
            Ok(fd
                .entries()
                .iter()
                .zip(gd.entries())
                .map(|(a, b)| lam * a + &co * b)
                .collect())
        })
        .with_simplex_blocks(blocks),
    )
}

/// The mixture computed by combinations and aggregates alone: both models
/// are crossed with the weight vector `(λ, 1-λ)` over a one-element
/// metacategory set, one side of each cross is lumped into a single fresh
/// category, the two lumped vectors are combined over a two-element
/// metacategory set, and the blocks are aggregated back onto the original
/// index pairwise. Evaluates to the same distributions as [`mixture`] but
/// errors at the endpoints `λ ∈ {0, 1}`, where one block aggregate of the
/// middle combination vanishes.
pub fn mixture_via_chain(
    f: &ParametricModel,
    g: &ParametricModel,
) -> Result<ParametricModel, ModelError> {
    require_same_index(f, g)?;
    require_same_box(f, g)?;
    let d = f.dim();
    let bounds = f.bounds().with_flag();
    let blocks = merge_blocks(f.simplex_blocks(), g.simplex_blocks());
    let (fc, gc) = (f.clone(), g.clone());
    Ok(
        ParametricModel::from_fn(f.index().clone(), bounds, move |theta| {
            let fd = fc.eval(&theta[..d])?;
            let gd = gc.eval(&theta[..d])?;
            Ok(chain_once(&fd, &gd, &theta[d])?.into_entries())
        })
        .with_simplex_blocks(blocks),
    )
}

fn require_same_index(f: &ParametricModel, g: &ParametricModel) -> Result<(), ModelError> {
    if f.index() != g.index() {
        return Err(CoreError::SetMismatch {
            expected: f.index().names(),
            found: g.index().names(),
        }
        .into());
    }
    Ok(())
}

fn fresh_category(set: &CategorySet, base: &str) -> Category {
    let mut name = base.to_string();
    while set.contains(&Category::new(name.clone())) {
        name.push('_');
    }
    Category::new(name)
}

fn chain_once(fd: &Dist, gd: &Dist, lam: &Rat) -> Result<IndexedVector, ModelError> {
    let i_set = fd.index().clone();
    let rest = fresh_category(&i_set, "rest");
    let lump = fresh_category(&i_set, "lump");
    let two = Dist::from_entries(
        CategorySet::range(2).expect("two categories"),
        vec![lam.clone(), Rat::one() - lam],
    )?;

    // Cross each model with the weight vector over a single metacategory.
    let p_triv = CategoryMapping::constant(&i_set, "all");
    let q_triv = CategoryMapping::constant(two.index(), "all");
    let prod_two = ProductIndex::new(&p_triv, &q_triv)?;
    let f2 = star(fd.vector(), two.vector(), &prod_two)?;
    let g2 = star(gd.vector(), two.vector(), &prod_two)?;

    // Lump the weighted-down half of each cross into one fresh category.
    let m1_cod = CategorySet::new(i_set.iter().cloned().chain([rest.clone()]))?;
    let m1 = CategoryMapping::with_codomain(
        f2.index().clone(),
        m1_cod,
        prod_two
            .index()
            .iter()
            .cloned()
            .zip(prod_two.triples().map(|(_, i, s)| {
                if s.as_str() == "0" {
                    i.clone()
                } else {
                    rest.clone()
                }
            })),
    )?;
    let a1 = f2.aggregate(&m1)?;
    let m2_cod = CategorySet::new([lump.clone()].into_iter().chain(i_set.iter().cloned()))?;
    let m2 = CategoryMapping::with_codomain(
        g2.index().clone(),
        m2_cod,
        prod_two
            .index()
            .iter()
            .cloned()
            .zip(prod_two.triples().map(|(_, j, s)| {
                if s.as_str() == "0" {
                    lump.clone()
                } else {
                    j.clone()
                }
            })),
    )?;
    let a2 = g2.aggregate(&m2)?;

    // Combine the lumped vectors over two metacategories; the aggregates on
    // both sides are exactly (λ, 1-λ), so the pair is consistent.
    let m3 = CategorySet::range(2).expect("two categories");
    let r1 = CategoryMapping::with_codomain(
        a1.index().clone(),
        m3.clone(),
        a1.index().iter().map(|c| {
            (
                c.clone(),
                if *c == rest {
                    Category::new("1")
                } else {
                    Category::new("0")
                },
            )
        }),
    )?;
    let r2 = CategoryMapping::with_codomain(
        a2.index().clone(),
        m3,
        a2.index().iter().map(|c| {
            (
                c.clone(),
                if *c == lump {
                    Category::new("0")
                } else {
                    Category::new("1")
                },
            )
        }),
    )?;
    let prod_mid = ProductIndex::new(&r1, &r2)?;
    let s = star(&a1, &a2, &prod_mid)?;

    // Aggregate the two blocks back onto the original index pairwise.
    let m4 = CategoryMapping::with_codomain(
        prod_mid.index().clone(),
        i_set,
        prod_mid
            .index()
            .iter()
            .cloned()
            .zip(prod_mid.triples().map(|(k, x, y)| {
                if k.as_str() == "0" {
                    x.clone()
                } else {
                    y.clone()
                }
            })),
    )?;
    Ok(s.aggregate(&m4)?)
}
