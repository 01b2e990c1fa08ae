//! Laws of the parametric combination variants: sampled parameters always
//! evaluate to exact distributions, the flag coordinate is irrelevant
//! exactly on consistent pairs, restricted variants collapse to their
//! unrestricted forms on shared parameters, the pure mixture reaches every
//! concrete combination of consistent vectors, and its parametrization has
//! the exponential-family dimension.

mod common;

use common::{
    named_set, paper_pair, pure_mixture_rank, random_consistent_pair, random_mapping, rng,
};
use markov_comb::parametric::{
    consistent_saturated_pair, lower_combine, meta_star, mixture, model_lift, restricted_lower,
    restricted_super, restricted_upper, structured_super, super_combine, upper_combine,
    ParamBox, ParamGrid, ParametricModel,
};
use markov_comb::rational::{rat, Rat};
use markov_comb::{left_combine, CategorySet};
use num::{One, Zero};
use rand::Rng;

#[test]
fn sampled_parameters_evaluate_to_exact_distributions() {
    let mut r = rng(3301);
    let mut catalog: Vec<ParametricModel> = vec![
        ParametricModel::saturated(named_set("s", 4)),
        ParametricModel::binomial(6),
    ];

    let iset = named_set("i", 5);
    let mset = named_set("m", 2);
    let p5 = random_mapping(&mut r, &iset, &mset);
    catalog.push(model_lift(&p5, &ParametricModel::saturated(mset.clone())).unwrap());

    let (f, g, p, q) = paper_pair();
    catalog.push(meta_star(&f, &g, &p, &q).unwrap().into_model());

    let jset = named_set("j", 4);
    let q4 = random_mapping(&mut r, &jset, &mset);
    let (sf, sg) = consistent_saturated_pair(&p5, &q4).unwrap();
    catalog.push(meta_star(&sf, &sg, &p5, &q4).unwrap().into_model());

    let sat_i = ParametricModel::saturated(iset);
    let sat_j = ParametricModel::saturated(jset);
    let sat_m = ParametricModel::saturated(mset);
    catalog.push(
        structured_super(&sat_i, &sat_m, &sat_j, &p5, &q4)
            .unwrap()
            .into_model(),
    );

    let g_alt = ParametricModel::from_fn(f.index().clone(), f.bounds().clone(), |theta| {
        let t = &theta[0];
        Ok(vec![
            t.clone(),
            rat(2, 1) * t,
            Rat::one() - rat(3, 1) * t,
        ])
    });
    catalog.push(mixture(&f, &g_alt).unwrap());

    for model in &catalog {
        let points = model.sample_points(16);
        assert_eq!(points.len(), 16);
        for theta in &points {
            assert!(model.bounds().contains(theta));
            let d = model.eval(theta).unwrap();
            assert_eq!(d.sum(), Rat::one());
            assert!(d.is_nonnegative());
        }
    }
}

#[test]
fn upper_flags_agree_exactly_iff_the_pair_is_consistent() {
    let (f, g, p, q) = paper_pair();
    let upper = upper_combine(&f, &g, &p, &q).unwrap();
    for theta in f.sample_points(8) {
        let t = theta[0].clone();
        let left = upper.eval(&[t.clone(), t.clone(), Rat::zero()]).unwrap();
        let right = upper.eval(&[t.clone(), t, Rat::one()]).unwrap();
        assert_eq!(left, right, "flags must agree on a meta-consistent pair");
    }

    let split = upper
        .eval(&[rat(1, 8), rat(1, 16), Rat::zero()])
        .unwrap();
    let split_r = upper
        .eval(&[rat(1, 8), rat(1, 16), Rat::one()])
        .unwrap();
    assert_ne!(split, split_r, "inconsistent evaluations must depend on the flag");

    let shifted = ParametricModel::from_fn(f.index().clone(), f.bounds().clone(), |theta| {
        let t = &theta[0];
        Ok(vec![
            Rat::one() - rat(4, 1) * t,
            rat(2, 1) * t,
            rat(2, 1) * t,
        ])
    });
    let upper2 = upper_combine(&shifted, &g, &p, &q).unwrap();
    let at = |t: Rat, flag: Rat| upper2.eval(&[t.clone(), t, flag]).unwrap();
    assert_ne!(
        at(rat(1, 8), Rat::zero()),
        at(rat(1, 8), Rat::one()),
        "the shifted pair is only consistent at 1/7"
    );
    assert_eq!(at(rat(1, 7), Rat::zero()), at(rat(1, 7), Rat::one()));
}

#[test]
fn restricted_variants_collapse_on_shared_parameters() {
    let (f, g, p, q) = paper_pair();
    let star = meta_star(&f, &g, &p, &q).unwrap();
    let lower = lower_combine(&f, &g, &p, &q).unwrap();
    let upper = upper_combine(&f, &g, &p, &q).unwrap();
    let r_upper = restricted_upper(&f, &g, &p, &q).unwrap();
    let full_super = super_combine(&f, &g, &p, &q).unwrap();
    let r_super = restricted_super(&f, &g, &p, &q).unwrap();

    for theta in f.sample_points(8) {
        let t = theta[0].clone();
        let shared = star.eval(&[t.clone()]).unwrap();
        assert_eq!(lower.eval(&[t.clone(), t.clone()]).unwrap(), shared);
        for flag in [Rat::zero(), Rat::one()] {
            assert_eq!(
                r_upper.eval(&[t.clone(), flag.clone()]).unwrap(),
                upper.eval(&[t.clone(), t.clone(), flag.clone()]).unwrap()
            );
            assert_eq!(
                r_super.eval(&[t.clone(), t.clone(), flag.clone()]).unwrap(),
                full_super
                    .eval(&[t.clone(), t.clone(), t.clone(), flag.clone()])
                    .unwrap()
            );
            assert_eq!(
                full_super
                    .eval(&[t.clone(), t.clone(), t.clone(), flag])
                    .unwrap(),
                shared,
                "equal slots collapse the super combination to the star"
            );
        }
    }
}

#[test]
fn restricted_lower_grid_filters_the_consistent_parameters() {
    let (f, g, p, q) = paper_pair();
    let grid = ParamGrid::with_denominator(f.bounds(), 16).unwrap();
    assert_eq!(grid.len(), 5);
    let restricted = restricted_lower(&f, &g, &p, &q, &grid).unwrap();
    let star = meta_star(&f, &g, &p, &q).unwrap();
    let points = restricted.admissible().unwrap();
    assert_eq!(points.len(), 5, "a meta-consistent pair admits the whole grid");
    for theta in points {
        if theta[0].is_zero() {
            // Consistent but degenerate: block 1 carries no mass at θ = 0,
            // so the combination itself is undefined there.
            assert!(restricted.eval(theta).is_err());
            assert!(star.eval(theta).is_err());
            continue;
        }
        assert_eq!(
            restricted.eval(theta).unwrap(),
            star.eval(theta).unwrap()
        );
    }

    let shifted = ParametricModel::from_fn(f.index().clone(), f.bounds().clone(), |theta| {
        let t = &theta[0];
        Ok(vec![
            Rat::one() - rat(4, 1) * t,
            rat(2, 1) * t,
            rat(2, 1) * t,
        ])
    });
    let coarse = ParamGrid::with_denominator(f.bounds(), 16).unwrap();
    assert!(matches!(
        restricted_lower(&shifted, &g, &p, &q, &coarse),
        Err(markov_comb::parametric::ModelError::EmptyParameterSet)
    ));
    let fine = ParamGrid::with_denominator(f.bounds(), 28).unwrap();
    let only_seventh = restricted_lower(&shifted, &g, &p, &q, &fine).unwrap();
    assert_eq!(only_seventh.admissible().unwrap(), &[vec![rat(1, 7)]]);
}

/// Every concrete combination of a consistent strictly positive pair is hit
/// by the pure-mixture parametrization: conditional fiber weights and the
/// common aggregate are parameters mapping to it exactly.
#[test]
fn pure_mixture_reaches_every_concrete_combination() {
    let mut r = rng(3304);
    for _ in 0..20 {
        let il = r.gen_range(2..=5);
        let jl = r.gen_range(2..=5);
        let ml = r.gen_range(1..=2).min(il).min(jl);
        let pair = random_consistent_pair(&mut r, il, jl, ml);
        let p = pair.prod.mapping_i();
        let q = pair.prod.mapping_j();
        let (sf, sg) = consistent_saturated_pair(p, q).unwrap();
        let star = meta_star(&sf, &sg, p, q).unwrap();

        let agg = pair.f.aggregate(p).unwrap();
        let mut params: Vec<Rat> = agg.entries()[1..].to_vec();
        for (vec, mapping) in [(&pair.f, p), (&pair.g, q)] {
            for kt in 0..mapping.codomain().len() {
                let fiber = mapping.fiber_indices(kt);
                for &it in &fiber[1..] {
                    params.push(vec.get_idx(it) / agg.get_idx(kt));
                }
            }
        }
        assert_eq!(params.len(), star.dim());
        let reached = star.eval(&params).unwrap();
        let direct = left_combine(pair.f.vector(), pair.g.vector(), &pair.prod).unwrap();
        assert_eq!(reached.vector(), &direct);
    }
}

#[test]
fn pure_mixture_jacobian_has_the_exponential_family_rank() {
    let mut r = rng(3305);
    for _ in 0..5 {
        let ml = r.gen_range(1..=3);
        let il = r.gen_range(ml.max(2)..=6);
        let jl = r.gen_range(ml.max(2)..=6);
        let iset = named_set("i", il);
        let jset = named_set("j", jl);
        let mset = named_set("m", ml);
        let p = random_mapping(&mut r, &iset, &mset);
        let q = random_mapping(&mut r, &jset, &mset);
        let (rank, dim) = pure_mixture_rank(&p, &q);
        assert_eq!(rank, dim, "parametrization must be a generic immersion");
        assert_eq!(dim, il + jl - ml - 1);
    }
}

#[test]
fn lifted_models_aggregate_back_to_the_middle_model() {
    let mut r = rng(3306);
    let iset = named_set("i", 6);
    let mset = named_set("m", 3);
    let p = random_mapping(&mut r, &iset, &mset);
    let h = ParametricModel::saturated(mset);
    let lifted = model_lift(&p, &h).unwrap();
    for theta in lifted.sample_points(12) {
        let down = lifted.eval(&theta).unwrap().aggregate(&p).unwrap();
        let middle = h.eval(&theta[..h.dim()]).unwrap();
        assert_eq!(&down, middle.vector());
    }
}

#[test]
fn binomial_models_match_the_closed_form() {
    let model = ParametricModel::binomial(4);
    let theta = [rat(1, 3)];
    let d = model.eval(&theta).unwrap();
    let expect = [
        rat(16, 81),
        rat(32, 81),
        rat(24, 81),
        rat(8, 81),
        rat(1, 81),
    ];
    assert_eq!(d.entries(), &expect);
    assert_eq!(model.index(), &CategorySet::range(5).unwrap());

    let bounds = ParamBox::new(vec![(Rat::zero(), Rat::one())]).unwrap();
    assert_eq!(model.bounds(), &bounds);
}
