//! Shared helpers for the integration suite: seeded random instances over
//! exact rationals, the three-model consistency setup for associativity
//! tests, and a chi-square tail bound for sampler checks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use markov_comb::parametric::{
    consistent_saturated_pair, expfam_combination_dim, meta_star, ParamBox, ParametricModel,
};
use markov_comb::rational::{rat, to_f64, Rat};
use markov_comb::{
    induced_mapping, star, Axis, BistochasticMatrix, CategoryMapping, CategorySet, Dist,
    IndexedVector, ProductIndex,
};
use nalgebra::DMatrix;
use num::{BigRational, One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_set(prefix: &str, n: usize) -> CategorySet {
    CategorySet::new((0..n).map(|t| format!("{prefix}{t}"))).unwrap()
}

/// Random surjective mapping onto `codomain`; every block is hit at least
/// once because the first `|codomain|` slots of the shuffled image list are
/// a permutation of the blocks.
pub fn random_mapping(
    rng: &mut ChaCha8Rng,
    domain: &CategorySet,
    codomain: &CategorySet,
) -> CategoryMapping {
    let n = domain.len();
    let m = codomain.len();
    assert!(n >= m, "cannot map {n} categories onto {m} blocks");
    let mut images: Vec<usize> = (0..m).collect();
    for _ in m..n {
        images.push(rng.gen_range(0..m));
    }
    for t in (1..n).rev() {
        images.swap(t, rng.gen_range(0..=t));
    }
    let pairs: Vec<(String, String)> = domain
        .iter()
        .zip(&images)
        .map(|(c, &kt)| {
            (
                c.as_str().to_string(),
                codomain.get(kt).unwrap().as_str().to_string(),
            )
        })
        .collect();
    CategoryMapping::with_codomain(domain.clone(), codomain.clone(), pairs).unwrap()
}

/// Strictly positive distribution with random small-integer weights.
pub fn random_positive_dist(rng: &mut ChaCha8Rng, index: &CategorySet) -> Dist {
    let weights: Vec<i64> = (0..index.len()).map(|_| rng.gen_range(1..=64)).collect();
    let total: i64 = weights.iter().sum();
    Dist::from_entries(
        index.clone(),
        weights.into_iter().map(|w| rat(w, total)).collect(),
    )
    .unwrap()
}

/// Random strictly positive vector on `q`'s domain whose aggregate along
/// `q` equals `target` exactly (each block splits its target mass by random
/// rational proportions).
pub fn random_with_aggregate(
    rng: &mut ChaCha8Rng,
    q: &CategoryMapping,
    target: &IndexedVector,
) -> IndexedVector {
    let mut entries = vec![BigRational::zero(); q.domain().len()];
    for kt in 0..q.codomain().len() {
        let fiber = q.fiber_indices(kt);
        let weights: Vec<i64> = fiber.iter().map(|_| rng.gen_range(1..=64)).collect();
        let total: i64 = weights.iter().sum();
        for (pos, &jt) in fiber.iter().enumerate() {
            entries[jt] = target.get_idx(kt) * rat(weights[pos], total);
        }
    }
    IndexedVector::new(q.domain().clone(), entries).unwrap()
}

pub struct ConsistentPair {
    pub f: Dist,
    pub g: Dist,
    pub prod: ProductIndex,
}

/// Random consistent pair over fresh index sets of the given sizes.
pub fn random_consistent_pair(
    rng: &mut ChaCha8Rng,
    i_len: usize,
    j_len: usize,
    m_len: usize,
) -> ConsistentPair {
    let iset = named_set("i", i_len);
    let jset = named_set("j", j_len);
    let mset = named_set("m", m_len);
    let p = random_mapping(rng, &iset, &mset);
    let q = random_mapping(rng, &jset, &mset);
    let f = random_positive_dist(rng, &iset);
    let fm = f.vector().aggregate(&p).unwrap();
    let g = Dist::new(random_with_aggregate(rng, &q, &fm)).unwrap();
    let prod = ProductIndex::new(&p, &q).unwrap();
    ConsistentPair { f, g, prod }
}

/// Three pairwise-consistent distributions built from a joint law on
/// `M1 x M2 x M3`: `I = M1 x M3`, `J = M1 x M2`, `K = M2 x M3`, each model
/// the corresponding 2-margin, each mapping a coordinate projection. The
/// tower property then makes every required pair of aggregates a margin of
/// the same joint, so consistency is exact by construction.
pub struct ConsistentTriple {
    pub f: Dist,
    pub g: Dist,
    pub h: Dist,
    /// I -> M1
    pub p1: CategoryMapping,
    /// J -> M1
    pub q1: CategoryMapping,
    /// J -> M2
    pub p2: CategoryMapping,
    /// K -> M2
    pub q2: CategoryMapping,
    /// I -> M3
    pub p3: CategoryMapping,
    /// K -> M3
    pub q3: CategoryMapping,
}

pub fn random_consistent_triple(
    rng: &mut ChaCha8Rng,
    m1: usize,
    m2: usize,
    m3: usize,
) -> ConsistentTriple {
    let w: Vec<Vec<Vec<i64>>> = (0..m1)
        .map(|_| {
            (0..m2)
                .map(|_| (0..m3).map(|_| rng.gen_range(1..=64)).collect())
                .collect()
        })
        .collect();
    let total: i64 = w.iter().flatten().flatten().sum();

    let m1set = named_set("M", m1);
    let m2set = named_set("N", m2);
    let m3set = named_set("P", m3);

    let iset = CategorySet::new(
        (0..m1).flat_map(|s| (0..m3).map(move |u| format!("i{s}.{u}"))),
    )
    .unwrap();
    let jset = CategorySet::new(
        (0..m1).flat_map(|s| (0..m2).map(move |t| format!("j{s}.{t}"))),
    )
    .unwrap();
    let kset = CategorySet::new(
        (0..m2).flat_map(|t| (0..m3).map(move |u| format!("k{t}.{u}"))),
    )
    .unwrap();

    let f = Dist::from_entries(
        iset.clone(),
        (0..m1)
            .flat_map(|s| {
                (0..m3).map({
                    let w = &w;
                    move |u| rat((0..m2).map(|t| w[s][t][u]).sum(), total)
                })
            })
            .collect(),
    )
    .unwrap();
    let g = Dist::from_entries(
        jset.clone(),
        (0..m1)
            .flat_map(|s| {
                (0..m2).map({
                    let w = &w;
                    move |t| rat((0..m3).map(|u| w[s][t][u]).sum(), total)
                })
            })
            .collect(),
    )
    .unwrap();
    let h = Dist::from_entries(
        kset.clone(),
        (0..m2)
            .flat_map(|t| {
                (0..m3).map({
                    let w = &w;
                    move |u| rat((0..m1).map(|s| w[s][t][u]).sum(), total)
                })
            })
            .collect(),
    )
    .unwrap();

    let proj = |set: &CategorySet, codomain: &CategorySet, pick: &dyn Fn(&str) -> usize| {
        let pairs: Vec<(String, String)> = set
            .iter()
            .map(|c| {
                (
                    c.as_str().to_string(),
                    codomain
                        .get(pick(c.as_str()))
                        .unwrap()
                        .as_str()
                        .to_string(),
                )
            })
            .collect();
        CategoryMapping::with_codomain(set.clone(), codomain.clone(), pairs).unwrap()
    };
    let first = |name: &str| -> usize {
        name[1..].split('.').next().unwrap().parse().unwrap()
    };
    let second = |name: &str| -> usize { name.split('.').nth(1).unwrap().parse().unwrap() };

    let p1 = proj(&iset, &m1set, &first);
    let q1 = proj(&jset, &m1set, &first);
    let p2 = proj(&jset, &m2set, &second);
    let q2 = proj(&kset, &m2set, &first);
    let p3 = proj(&iset, &m3set, &second);
    let q3 = proj(&kset, &m3set, &second);

    ConsistentTriple {
        f,
        g,
        h,
        p1,
        q1,
        p2,
        q2,
        p3,
        q3,
    }
}

/// Entries of a vector on `(X x Y) x Z` keyed by raw positions `(x, y, z)`
/// in the three original index sets.
pub fn decode_left_nested(
    v: &IndexedVector,
    outer: &ProductIndex,
    inner: &ProductIndex,
) -> BTreeMap<(usize, usize, usize), Rat> {
    let mut map = BTreeMap::new();
    for (pos, &(_, at, bt)) in outer.triple_positions().iter().enumerate() {
        let (_, xt, yt) = inner.triple_positions()[at];
        map.insert((xt, yt, bt), v.get_idx(pos).clone());
    }
    map
}

/// Entries of a vector on `X x (Y x Z)` keyed by raw positions `(x, y, z)`.
pub fn decode_right_nested(
    v: &IndexedVector,
    outer: &ProductIndex,
    inner: &ProductIndex,
) -> BTreeMap<(usize, usize, usize), Rat> {
    let mut map = BTreeMap::new();
    for (pos, &(_, at, bt)) in outer.triple_positions().iter().enumerate() {
        let (_, yt, zt) = inner.triple_positions()[bt];
        map.insert((at, yt, zt), v.get_idx(pos).clone());
    }
    map
}

pub fn remap_keys<F>(
    map: BTreeMap<(usize, usize, usize), Rat>,
    f: F,
) -> BTreeMap<(usize, usize, usize), Rat>
where
    F: Fn(usize, usize, usize) -> (usize, usize, usize),
{
    map.into_iter().map(|((x, y, z), v)| (f(x, y, z), v)).collect()
}

/// The parametric pair from the worked running example: `f = (3θ, θ, 1-4θ)`
/// on `{a, b, c}` and `g = (θ, θ, θ, 1-3θ)` on the four suits, both over
/// `θ ∈ [0, 1/4]`, with mappings `a -> 1, b, c -> 2` and
/// `C, D, H -> 1, S -> 2`. Meta-consistent: both aggregates are
/// `(3θ, 1-3θ)`.
pub fn paper_pair() -> (
    ParametricModel,
    ParametricModel,
    CategoryMapping,
    CategoryMapping,
) {
    let iset = CategorySet::new(["a", "b", "c"]).unwrap();
    let jset = CategorySet::new(["C", "D", "H", "S"]).unwrap();
    let p = CategoryMapping::new(iset.clone(), [("a", "1"), ("b", "2"), ("c", "2")]).unwrap();
    let q = CategoryMapping::new(
        jset.clone(),
        [("C", "1"), ("D", "1"), ("H", "1"), ("S", "2")],
    )
    .unwrap();
    let bounds = ParamBox::new(vec![(Rat::zero(), rat(1, 4))]).unwrap();
    let f = ParametricModel::from_fn(iset.clone(), bounds.clone(), |theta| {
        let t = &theta[0];
        Ok(vec![rat(3, 1) * t, t.clone(), Rat::one() - rat(4, 1) * t])
    });
    let g = ParametricModel::from_fn(jset, bounds, |theta| {
        let t = &theta[0];
        Ok(vec![
            t.clone(),
            t.clone(),
            t.clone(),
            Rat::one() - rat(3, 1) * t,
        ])
    });
    (f, g, p, q)
}

/// Numeric Jacobian rank at `point` by exact central differences (the
/// difference quotient is computed in rationals, only the final matrix is
/// floated), singular value cutoff 1e-8. `eval` returns `None` when a
/// perturbed point leaves the evaluable region; the step then shrinks.
pub fn numeric_jacobian_rank(
    eval: &dyn Fn(&[Rat]) -> Option<Vec<Rat>>,
    point: &[Rat],
    out_dim: usize,
) -> usize {
    let dim = point.len();
    let mut h = rat(1, 1 << 12);
    for _ in 0..6 {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let two_h = rat(2, 1) * &h;
        for t in 0..dim {
            let mut plus = point.to_vec();
            plus[t] = &plus[t] + &h;
            let mut minus = point.to_vec();
            minus[t] = &minus[t] - &h;
            let (vp, vm) = match (eval(&plus), eval(&minus)) {
                (Some(vp), Some(vm)) => (vp, vm),
                _ => {
                    cols.clear();
                    break;
                }
            };
            cols.push(
                vp.iter()
                    .zip(&vm)
                    .map(|(a, b)| to_f64(&((a - b) / &two_h)))
                    .collect(),
            );
        }
        if cols.len() == dim {
            let mat = DMatrix::from_fn(out_dim, dim, |r, c| cols[c][r]);
            return mat.rank(1e-8);
        }
        h /= rat(4, 1);
    }
    panic!("no differentiation step kept all perturbed points evaluable");
}

/// Numeric Jacobian rank of the pure-mixture parametrization (the
/// meta-Markov combination of the consistent saturated pair over `p, q`) at
/// a generic interior point, together with its expected model dimension
/// `|I| + |J| - |M| - 1`.
pub fn pure_mixture_rank(p: &CategoryMapping, q: &CategoryMapping) -> (usize, usize) {
    let (f, g) = consistent_saturated_pair(p, q).unwrap();
    let c = meta_star(&f, &g, p, q).unwrap();
    let point = c.sample_points(5).pop().unwrap();
    let out_dim = c.index().len();
    let rank = numeric_jacobian_rank(
        &|theta| c.eval(theta).ok().map(|d| d.vector().entries().to_vec()),
        &point,
        out_dim,
    );
    let (dim, _) = expfam_combination_dim(p, q).unwrap();
    (rank, dim)
}

/// All permutations of `0..n` in a deterministic order (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for t in 0..k {
            heap(k - 1, a, out);
            if k % 2 == 0 {
                a.swap(t, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Random rational bistochastic matrix as a Birkhoff combination of 2 to 4
/// permutation matrices with random rational weights; exactly bistochastic
/// by construction.
pub fn random_bistochastic(rng: &mut ChaCha8Rng, n: usize) -> BistochasticMatrix {
    let terms = rng.gen_range(2..=4);
    let weights: Vec<i64> = (0..terms).map(|_| rng.gen_range(1..=16)).collect();
    let total: i64 = weights.iter().sum();
    let mut entries = vec![vec![BigRational::zero(); n]; n];
    for w in weights {
        let mut perm: Vec<usize> = (0..n).collect();
        for t in (1..n).rev() {
            perm.swap(t, rng.gen_range(0..=t));
        }
        for (row, &col) in perm.iter().enumerate() {
            entries[row][col] += rat(w, total);
        }
    }
    BistochasticMatrix::new(entries).unwrap()
}

/// Upper chi-square tail probability of the goodness-of-fit statistic for
/// `n` draws summarized by the empirical law `observed`. Cells where the
/// expected mass is zero must be unobserved and are skipped.
pub fn chi_square_p(observed: &Dist, expected: &Dist, n: u64) -> f64 {
    assert_eq!(observed.index(), expected.index());
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (o, e) in observed.entries().iter().zip(expected.entries()) {
        if e.is_zero() {
            assert!(o.is_zero(), "draw landed outside the support");
            continue;
        }
        cells += 1;
        let ef = to_f64(e) * n as f64;
        let of = to_f64(o) * n as f64;
        stat += (of - ef).powi(2) / ef;
    }
    if cells <= 1 {
        return 1.0;
    }
    let chi = ChiSquared::new((cells - 1) as f64).unwrap();
    1.0 - chi.cdf(stat)
}

pub type TripleMap = BTreeMap<(usize, usize, usize), Rat>;

/// All six ways of combining a pairwise-consistent triple twice, each
/// decoded to a map keyed by positions `(i, j, k)` in the original sets.
/// Order: `(f*1g)*3h`, `(f*3h)*1g`, `(f*1g)*2h`, `f*1(g*2h)`, `f*3(g*2h)`,
/// `f*3(h*2g)`.
pub fn six_ways(t: &ConsistentTriple) -> [TripleMap; 6] {
    let prod1 = ProductIndex::new(&t.p1, &t.q1).unwrap();
    let prod2 = ProductIndex::new(&t.p2, &t.q2).unwrap();
    let prod2r = ProductIndex::new(&t.q2, &t.p2).unwrap();
    let prod3 = ProductIndex::new(&t.p3, &t.q3).unwrap();

    let s1 = star(t.f.vector(), t.g.vector(), &prod1).unwrap();
    let s2 = star(t.g.vector(), t.h.vector(), &prod2).unwrap();
    let s2r = star(t.h.vector(), t.g.vector(), &prod2r).unwrap();
    let s3 = star(t.f.vector(), t.h.vector(), &prod3).unwrap();

    let m13 = induced_mapping(&prod1, Axis::I, &t.p3).unwrap();
    let o1 = ProductIndex::new(&m13, &t.q3).unwrap();
    let e1 = decode_left_nested(&star(&s1, t.h.vector(), &o1).unwrap(), &o1, &prod1);

    let m31 = induced_mapping(&prod3, Axis::I, &t.p1).unwrap();
    let o2 = ProductIndex::new(&m31, &t.q1).unwrap();
    let e2 = remap_keys(
        decode_left_nested(&star(&s3, t.g.vector(), &o2).unwrap(), &o2, &prod3),
        |i, k, j| (i, j, k),
    );

    let m12 = induced_mapping(&prod1, Axis::J, &t.p2).unwrap();
    let o3 = ProductIndex::new(&m12, &t.q2).unwrap();
    let e3 = decode_left_nested(&star(&s1, t.h.vector(), &o3).unwrap(), &o3, &prod1);

    let m21 = induced_mapping(&prod2, Axis::I, &t.q1).unwrap();
    let o4 = ProductIndex::new(&t.p1, &m21).unwrap();
    let e4 = decode_right_nested(&star(t.f.vector(), &s2, &o4).unwrap(), &o4, &prod2);

    let m23 = induced_mapping(&prod2, Axis::J, &t.q3).unwrap();
    let o5 = ProductIndex::new(&t.p3, &m23).unwrap();
    let e5 = decode_right_nested(&star(t.f.vector(), &s2, &o5).unwrap(), &o5, &prod2);

    let m2r3 = induced_mapping(&prod2r, Axis::I, &t.q3).unwrap();
    let o6 = ProductIndex::new(&t.p3, &m2r3).unwrap();
    let e6 = remap_keys(
        decode_right_nested(&star(t.f.vector(), &s2r, &o6).unwrap(), &o6, &prod2r),
        |i, k, j| (i, j, k),
    );

    [e1, e2, e3, e4, e5, e6]
}
