//! Property tests for aggregation and the concrete Markov combination:
//! mass preservation, the tower property, margin recovery, the swap
//! between left and right combinations, and the worked index structures
//! for independence and given-marginals setups.

mod common;

use common::{
    named_set, random_consistent_pair, random_mapping, random_positive_dist,
    random_with_aggregate, rng,
};
use markov_comb::rational::{rat, Rat};
use markov_comb::{
    is_consistent, left_combine, left_combine_with, project, right_combine, star, Axis,
    CategoryMapping, CategorySet, CombineError, Dist, IndexedVector, ProductIndex, ZeroPolicy,
};
use num::{One, Zero};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_preserves_total_mass(seed in any::<u64>(), n in 1usize..=10, m in 1usize..=5) {
        let mut r = rng(seed);
        let m = m.min(n);
        let iset = named_set("i", n);
        let mset = named_set("m", m);
        let p = random_mapping(&mut r, &iset, &mset);
        let entries: Vec<Rat> = (0..n).map(|_| rat(r.gen_range(-64..=64), r.gen_range(1..=16))).collect();
        let v = IndexedVector::new(iset, entries).unwrap();
        let agg = v.aggregate(&p).unwrap();
        prop_assert_eq!(v.sum(), agg.sum());
    }

    #[test]
    fn tower_property_of_aggregation(seed in any::<u64>(), n in 1usize..=10, m in 1usize..=6, l in 1usize..=3) {
        let mut r = rng(seed);
        let m = m.min(n);
        let l = l.min(m);
        let iset = named_set("i", n);
        let mset = named_set("m", m);
        let lset = named_set("l", l);
        let p = random_mapping(&mut r, &iset, &mset);
        let q = random_mapping(&mut r, &mset, &lset);
        let v = random_positive_dist(&mut r, &iset);
        let two_step = v.vector().aggregate(&p).unwrap().aggregate(&q).unwrap();
        let one_step = v.vector().aggregate(&p.compose(&q).unwrap()).unwrap();
        prop_assert_eq!(two_step, one_step);
    }

    #[test]
    fn star_margins_recover_the_components(seed in any::<u64>(), il in 1usize..=8, jl in 1usize..=8, ml in 1usize..=4) {
        let mut r = rng(seed);
        let ml = ml.min(il).min(jl);
        let pair = random_consistent_pair(&mut r, il, jl, ml);
        let s = star(pair.f.vector(), pair.g.vector(), &pair.prod).unwrap();
        prop_assert_eq!(s.sum(), Rat::one());
        let back_f = project(&s, &pair.prod, Axis::I).unwrap();
        let back_g = project(&s, &pair.prod, Axis::J).unwrap();
        prop_assert_eq!(&back_f, pair.f.vector());
        prop_assert_eq!(&back_g, pair.g.vector());
    }

    #[test]
    fn right_combination_is_the_swapped_left(seed in any::<u64>(), il in 1usize..=8, jl in 1usize..=8, ml in 1usize..=4) {
        let mut r = rng(seed);
        let ml = ml.min(il).min(jl);
        let iset = named_set("i", il);
        let jset = named_set("j", jl);
        let mset = named_set("m", ml);
        let p = random_mapping(&mut r, &iset, &mset);
        let q = random_mapping(&mut r, &jset, &mset);
        let f = random_positive_dist(&mut r, &iset);
        let g = random_positive_dist(&mut r, &jset);
        let prod = ProductIndex::new(&p, &q).unwrap();
        let swapped = ProductIndex::new(&q, &p).unwrap();
        let right = right_combine(f.vector(), g.vector(), &prod).unwrap();
        let left = left_combine(g.vector(), f.vector(), &swapped).unwrap();
        for (pos, &(_, it, jt)) in prod.triple_positions().iter().enumerate() {
            let mirror = swapped
                .position(jset.get(jt).unwrap(), iset.get(it).unwrap())
                .unwrap();
            prop_assert_eq!(right.get_idx(pos), left.get_idx(mirror));
        }
    }

    #[test]
    fn product_index_contains_exactly_the_matching_pairs(seed in any::<u64>(), il in 1usize..=8, jl in 1usize..=8, ml in 1usize..=4) {
        let mut r = rng(seed);
        let ml = ml.min(il).min(jl);
        let iset = named_set("i", il);
        let jset = named_set("j", jl);
        let mset = named_set("m", ml);
        let p = random_mapping(&mut r, &iset, &mset);
        let q = random_mapping(&mut r, &jset, &mset);
        let prod = ProductIndex::new(&p, &q).unwrap();
        let mut expected = 0usize;
        for kt in 0..ml {
            expected += p.fiber_indices(kt).len() * q.fiber_indices(kt).len();
        }
        prop_assert_eq!(prod.cardinality(), expected);
        for i in iset.iter() {
            for j in jset.iter() {
                let matching = p.apply(i).unwrap() == q.apply(j).unwrap();
                prop_assert_eq!(prod.position(i, j).is_some(), matching);
            }
        }
    }
}

#[test]
fn single_metacategory_star_is_the_outer_product() {
    let mut r = rng(2201);
    for _ in 0..20 {
        let iset = named_set("i", r.gen_range(1..=6));
        let jset = named_set("j", r.gen_range(1..=6));
        let p = CategoryMapping::constant(&iset, "all");
        let q = CategoryMapping::constant(&jset, "all");
        let prod = ProductIndex::new(&p, &q).unwrap();
        assert_eq!(prod.cardinality(), iset.len() * jset.len());
        let f = random_positive_dist(&mut r, &iset);
        let g = random_positive_dist(&mut r, &jset);
        let s = star(f.vector(), g.vector(), &prod).unwrap();
        for (pos, &(_, it, jt)) in prod.triple_positions().iter().enumerate() {
            assert_eq!(s.get_idx(pos), &(f.vector().get_idx(it) * g.vector().get_idx(jt)));
        }
    }
}

/// Two joints on A x C and C x B with a common C-marginal combine over
/// M = C into a distribution on all of A x C x B whose two margins are the
/// original joints.
#[test]
fn given_marginals_are_realized_by_the_combination() {
    let mut r = rng(2202);
    for _ in 0..20 {
        let (na, nc, nb) = (r.gen_range(2..=3), r.gen_range(2..=3), r.gen_range(2..=3));
        let iset = CategorySet::new(
            (0..na).flat_map(|a| (0..nc).map(move |c| format!("a{a}c{c}"))),
        )
        .unwrap();
        let jset = CategorySet::new(
            (0..nc).flat_map(|c| (0..nb).map(move |b| format!("c{c}b{b}"))),
        )
        .unwrap();
        let cset = named_set("c", nc);
        let pick_c = |name: &str| {
            let at = name.find('c').unwrap();
            name[at + 1..]
                .chars()
                .take_while(|ch| ch.is_ascii_digit())
                .collect::<String>()
                .parse::<usize>()
                .unwrap()
        };
        let to_pairs = |set: &CategorySet| -> Vec<(String, String)> {
            set.iter()
                .map(|cat| (cat.as_str().to_string(), format!("c{}", pick_c(cat.as_str()))))
                .collect()
        };
        let p = CategoryMapping::with_codomain(iset.clone(), cset.clone(), to_pairs(&iset)).unwrap();
        let q = CategoryMapping::with_codomain(jset.clone(), cset.clone(), to_pairs(&jset)).unwrap();
        let f = random_positive_dist(&mut r, &iset);
        let fc = f.vector().aggregate(&p).unwrap();
        let g = Dist::new(random_with_aggregate(&mut r, &q, &fc)).unwrap();
        let prod = ProductIndex::new(&p, &q).unwrap();
        assert_eq!(prod.cardinality(), na * nc * nb);
        assert!(is_consistent(f.vector(), g.vector(), &prod).unwrap());
        let h = star(f.vector(), g.vector(), &prod).unwrap();
        assert_eq!(&project(&h, &prod, Axis::I).unwrap(), f.vector());
        assert_eq!(&project(&h, &prod, Axis::J).unwrap(), g.vector());
    }
}

#[test]
fn zero_aggregate_blocks_follow_the_policy() {
    let iset = named_set("i", 3);
    let jset = named_set("j", 3);
    let mset = named_set("m", 2);
    let assign = |set: &CategorySet| -> Vec<(String, String)> {
        set.iter()
            .enumerate()
            .map(|(t, c)| {
                let target = if t < 2 { "m0" } else { "m1" };
                (c.as_str().to_string(), target.to_string())
            })
            .collect()
    };
    let p = CategoryMapping::with_codomain(iset.clone(), mset.clone(), assign(&iset)).unwrap();
    let q = CategoryMapping::with_codomain(jset.clone(), mset.clone(), assign(&jset)).unwrap();
    let prod = ProductIndex::new(&p, &q).unwrap();

    let f = IndexedVector::new(iset, vec![rat(1, 2), rat(1, 2), Rat::zero()]).unwrap();
    let g = IndexedVector::new(jset, vec![rat(1, 4), rat(1, 4), rat(1, 2)]).unwrap();

    let strict = left_combine(&f, &g, &prod);
    assert!(matches!(strict, Err(CombineError::ZeroAggregate(_))));

    let (permissive, subnormalized) =
        left_combine_with(&f, &g, &prod, ZeroPolicy::Permissive).unwrap();
    assert!(subnormalized);
    assert_eq!(permissive.sum(), rat(1, 2));
    for (pos, &(kt, _, _)) in prod.triple_positions().iter().enumerate() {
        if kt == 1 {
            assert!(permissive.get_idx(pos).is_zero());
        }
    }

    let g_zero = IndexedVector::new(
        named_set("j", 3),
        vec![rat(1, 2), rat(1, 2), Rat::zero()],
    )
    .unwrap();
    let (both_zero, dropped) =
        left_combine_with(&f, &g_zero, &prod, ZeroPolicy::Permissive).unwrap();
    assert!(!dropped, "no mass sits on the zeroed block");
    assert_eq!(both_zero.sum(), Rat::one());
}
