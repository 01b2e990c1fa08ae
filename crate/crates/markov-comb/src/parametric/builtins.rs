//! Saturated-model constructions: lifting a model along a mapping and
//! building meta-consistent saturated pairs.

use num::{One, Zero};

use crate::category::{CategoryMapping, CoreError};
use crate::rational::Rat;

use super::model::{ModelError, ParamBox, ParametricModel};

/// Lifts a model `h` on the codomain of `p` to a model on its domain whose
/// aggregate along `p` is exactly `h`.
///
/// Parameters are `h`'s parameters followed by, for each metacategory in
/// codomain order, the fiber weights: the fiber's first element (in domain
/// order) carries the remainder and each later element gets one coordinate.
/// Entry `i` evaluates to `weight_i * h_k` with the weights of each fiber
/// summing to one, so aggregation recovers `h` identically.
pub fn model_lift(
    p: &CategoryMapping,
    h: &ParametricModel,
) -> Result<ParametricModel, ModelError> {
    if h.index() != p.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: h.index().names(),
        }
        .into());
    }
    let dh = h.dim();
    let fibers: Vec<Vec<usize>> = (0..p.codomain().len())
        .map(|kt| p.fiber_indices(kt))
        .collect();
    let mut bounds = h.bounds().clone();
    let mut blocks = h.simplex_blocks().to_vec();
    let mut offset = dh;
    for fiber in &fibers {
        let free = fiber.len() - 1;
        if free > 0 {
            bounds = bounds.concat(&ParamBox::unit(free));
            blocks.push((offset, free));
            offset += free;
        }
    }
    let n = p.domain().len();
    let inner = h.clone();
    let model = ParametricModel::from_fn(p.domain().clone(), bounds, move |theta| {
        let hd = inner.eval(&theta[..dh])?;
        let mut entries = vec![Rat::zero(); n];
        let mut off = dh;
        for (kt, fiber) in fibers.iter().enumerate() {
            let hk = hd.get_idx(kt);
            let free = fiber.len() - 1;
            let mut first = Rat::one();
            for (t, lam) in theta[off..off + free].iter().enumerate() {
                entries[fiber[t + 1]] = lam * hk;
                first -= lam;
            }
            entries[fiber[0]] = first * hk;
            off += free;
        }
        Ok(entries)
    });
    Ok(model.with_simplex_blocks(blocks))
}

/// Builds saturated models over the domains of `p` and `q` that are
/// meta-consistent by construction: both are lifts of the one saturated
/// model on the shared codomain, read off a joint parameter box
/// `[h | f fiber weights | g fiber weights]`.
pub fn consistent_saturated_pair(
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<(ParametricModel, ParametricModel), ModelError> {
    if p.codomain() != q.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: q.codomain().names(),
        }
        .into());
    }
    let m = p.codomain().len();
    let h = ParametricModel::saturated(p.codomain().clone());
    let f0 = model_lift(p, &h)?;
    let g0 = model_lift(q, &h)?;
    let f_free = f0.dim() - (m - 1);
    let g_free = g0.dim() - (m - 1);
    let bounds = f0.bounds().concat(&ParamBox::unit(g_free));
    let mut blocks = f0.simplex_blocks().to_vec();
    for &(start, len) in g0.simplex_blocks() {
        if start >= m - 1 {
            blocks.push((start + f_free, len));
        }
    }
    let dim = bounds.dim();
    let f = f0.select_coords(bounds.clone(), blocks.clone(), (0..f0.dim()).collect());
    let g_coords: Vec<usize> = (0..m - 1).chain(f0.dim()..dim).collect();
    let g = g0.select_coords(bounds, blocks, g_coords);
    Ok((f, g))
}

/// Model and ambient dimensions of the Markov combination of the saturated
/// pair: `(|I| + |J| - |M| - 1, sum_k |I_k||J_k| - 1)`.
pub fn expfam_combination_dim(
    p: &CategoryMapping,
    q: &CategoryMapping,
) -> Result<(usize, usize), ModelError> {
    if p.codomain() != q.codomain() {
        return Err(CoreError::SetMismatch {
            expected: p.codomain().names(),
            found: q.codomain().names(),
        }
        .into());
    }
    let m = p.codomain().len();
    let model = p.domain().len() + q.domain().len() - m - 1;
    let ambient: usize = (0..m)
        .map(|kt| p.fiber_indices(kt).len() * q.fiber_indices(kt).len())
        .sum();
    Ok((model, ambient - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::CategorySet;
    use crate::parametric::model::is_meta_consistent;
    use crate::rational::{rat, rat_int};
    use crate::vector::Dist;

    fn paper_mappings() -> (CategoryMapping, CategoryMapping) {
        let i = CategorySet::new(["a", "b", "c"]).unwrap();
        let j = CategorySet::new(["C", "D", "H", "S"]).unwrap();
        (
            CategoryMapping::new(i, [("a", "1"), ("b", "2"), ("c", "2")]).unwrap(),
            CategoryMapping::new(j, [("C", "1"), ("D", "1"), ("H", "1"), ("S", "2")])
                .unwrap(),
        )
    }

    fn block_mappings() -> (CategoryMapping, CategoryMapping) {
        // I_0 = {0,1}, I_1 = {2,3}; J_0 = {0}, J_1 = {1,2,3}.
        let i = CategorySet::range(4).unwrap();
        let p = CategoryMapping::new(
            i.clone(),
            [("0", "0"), ("1", "0"), ("2", "1"), ("3", "1")],
        )
        .unwrap();
        let q = CategoryMapping::new(
            i,
            [("0", "0"), ("1", "1"), ("2", "1"), ("3", "1")],
        )
        .unwrap();
        (p, q)
    }

    #[test]
    fn lift_over_singleton_is_saturated() {
        let i = CategorySet::range(3).unwrap();
        let p = CategoryMapping::constant(&i, "all");
        let h = ParametricModel::saturated(p.codomain().clone());
        let lifted = model_lift(&p, &h).unwrap();
        let saturated = ParametricModel::saturated(i);
        assert_eq!(lifted.dim(), saturated.dim());
        for theta in saturated.sample_points(32) {
            assert_eq!(lifted.eval(&theta).unwrap(), saturated.eval(&theta).unwrap());
        }
    }

    #[test]
    fn lift_hits_any_target_dist() {
        // Target (3/4, 1/8, 1/8): h parameters give the target aggregate,
        // fiber weights are target entries over their aggregate.
        let (p, _) = paper_mappings();
        let h = ParametricModel::saturated(p.codomain().clone());
        let lifted = model_lift(&p, &h).unwrap();
        assert_eq!(lifted.dim(), 2);
        let d = lifted.eval(&[rat(1, 4), rat(1, 2)]).unwrap();
        let target = Dist::from_entries(
            p.domain().clone(),
            vec![rat(3, 4), rat(1, 8), rat(1, 8)],
        )
        .unwrap();
        assert_eq!(d, target);
    }

    #[test]
    fn lift_aggregate_recovers_h_exactly() {
        let (_, q) = paper_mappings();
        let h = ParametricModel::saturated(q.codomain().clone());
        let lifted = model_lift(&q, &h).unwrap();
        for theta in lifted.sample_points(64) {
            let agg = lifted.eval(&theta).unwrap().aggregate_dist(&q).unwrap();
            assert_eq!(agg, h.eval(&theta[..h.dim()]).unwrap());
        }
    }

    #[test]
    fn saturated_pair_is_exactly_meta_consistent() {
        let (p, q) = block_mappings();
        let (f, g) = consistent_saturated_pair(&p, &q).unwrap();
        assert_eq!(f.dim(), 5);
        assert_eq!(g.dim(), 5);
        let check = is_meta_consistent(&f, &g, &p, &q).unwrap();
        assert!(check.consistent);
        assert_eq!(check.max_gap, rat_int(0));
    }

    #[test]
    fn singleton_codomain_gives_independence() {
        let i = CategorySet::range(2).unwrap();
        let j = CategorySet::range(3).unwrap();
        let p = CategoryMapping::constant(&i, "all");
        let q = CategoryMapping::constant(&j, "all");
        let (f, g) = consistent_saturated_pair(&p, &q).unwrap();
        assert_eq!(f.dim(), 1 + 2);
        assert_eq!(expfam_combination_dim(&p, &q).unwrap(), (2 + 3 - 1 - 1, 5));
        // Independence: the combination of each evaluated pair is the
        // product measure.
        let prod = crate::vector::ProductIndex::new(&p, &q).unwrap();
        for theta in f.sample_points(16) {
            let fd = f.eval(&theta).unwrap();
            let gd = g.eval(&theta).unwrap();
            let s = crate::combine::star(&fd, &gd, &prod).unwrap();
            for (t, (_, i, j)) in prod.triples().enumerate() {
                assert_eq!(
                    s.get_idx(t),
                    &(fd.get(i).unwrap() * gd.get(j).unwrap())
                );
            }
        }
    }

    #[test]
    fn combination_dims_match_formulas() {
        let (p, q) = block_mappings();
        assert_eq!(expfam_combination_dim(&p, &q).unwrap(), (5, 7));
        let (p2, q2) = paper_mappings();
        assert_eq!(expfam_combination_dim(&p2, &q2).unwrap(), (4, 4));
    }
}
