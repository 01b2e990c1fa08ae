//! Discrete copulas, bistochastic matrices, and the identity between the
//! copula product and a marginal of the Markov combination.
//!
//! A discrete copula is a grid `C` on `{0..n} x {0..m}` with zero lower
//! boundary, uniform margins `C(i,m) = i/n`, `C(n,j) = j/m`, and
//! non-negative rectangle increments. Square copulas correspond to
//! bistochastic matrices (`C` is the scaled cumulative sum) and to densities
//! on `[n] x [n]` with all marginals `1/n`. The product of two copulas is
//! the copula of the product of their matrices; the same distribution
//! arises by combining the two densities over the shared middle coordinate
//! and aggregating the middle away.

use std::fmt;

use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::category::{Category, CategoryMapping, CategorySet, CoreError};
use crate::combine::{star, CombineError};
use crate::rational::{format_rat, parse_rat, Rat};
use crate::vector::{Dist, ProductIndex};

/// First failed copula condition, with its location.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CopulaViolation {
    /// (C1): a boundary value `C(i,0)` or `C(0,j)` is not zero.
    Boundary {
        /// Grid row.
        i: usize,
        /// Grid column.
        j: usize,
        /// Offending value.
        found: Rat,
    },
    /// (C2): a margin value differs from its required cumulative weight.
    Margin {
        /// Grid row.
        i: usize,
        /// Grid column.
        j: usize,
        /// Required value.
        expected: Rat,
        /// Offending value.
        found: Rat,
    },
    /// (C3): a rectangle increment is negative.
    NegativeRectangle {
        /// Grid row of the rectangle's lower-right corner.
        i: usize,
        /// Grid column of the rectangle's lower-right corner.
        j: usize,
        /// The increment.
        value: Rat,
    },
}

impl fmt::Display for CopulaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CopulaViolation::Boundary { i, j, found } => write!(
                f,
                "boundary value C({i},{j}) = {} is not zero",
                format_rat(found)
            ),
            CopulaViolation::Margin {
                i,
                j,
                expected,
                found,
            } => write!(
                f,
                "margin value C({i},{j}) = {} should be {}",
                format_rat(found),
                format_rat(expected)
            ),
            CopulaViolation::NegativeRectangle { i, j, value } => write!(
                f,
                "rectangle increment at ({i},{j}) is negative: {}",
                format_rat(value)
            ),
        }
    }
}

/// Errors raised by copula operations.
#[derive(Debug, Error)]
pub enum CopulaError {
    /// A structural precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A concrete combination failed.
    #[error(transparent)]
    Combine(#[from] CombineError),
    /// The grid is not `(n+1) x (m+1)` with `n, m >= 1`.
    #[error("grid must be rectangular with at least two rows and columns")]
    BadShape,
    /// A distribution's index is not `[n] x [n]` for any `n`.
    #[error("index of length {0} is not a square pair index")]
    NotPairIndex(usize),
    /// The grid is not a copula.
    #[error("not a copula: {0}")]
    Invalid(CopulaViolation),
    /// A matrix fails bistochasticity.
    #[error("matrix is not bistochastic: {0}")]
    NotBistochastic(String),
    /// Two square copulas or matrices have different sizes.
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch {
        /// First size.
        left: usize,
        /// Second size.
        right: usize,
    },
    /// A product factor's marginal is not uniform.
    #[error("marginal of {which} at {index} is {found}, expected {expected}")]
    MarginalNotUniform {
        /// Which factor and coordinate.
        which: String,
        /// Marginal index (1-based).
        index: usize,
        /// Found weight.
        found: String,
        /// Required weight.
        expected: String,
    },
    /// A text field failed to parse.
    #[error("bad copula description: {0}")]
    BadDescription(String),
}

fn grid_shape(values: &[Vec<Rat>]) -> Result<(usize, usize), CopulaError> {
    if values.len() < 2 {
        return Err(CopulaError::BadShape);
    }
    let cols = values[0].len();
    if cols < 2 || values.iter().any(|row| row.len() != cols) {
        return Err(CopulaError::BadShape);
    }
    Ok((values.len() - 1, cols - 1))
}

/// Checks the copula conditions on a `(n+1) x (m+1)` grid, returning the
/// first violation if any. Margins are checked against the cumulative
/// weights of `nu` (rows) and `mu` (columns); pass the uniform weights for
/// ordinary copulas, or use [`check_copula`].
pub fn check_generalized_copula(
    values: &[Vec<Rat>],
    nu: &[Rat],
    mu: &[Rat],
) -> Result<Option<CopulaViolation>, CopulaError> {
    let (n, m) = grid_shape(values)?;
    if nu.len() != n {
        return Err(CoreError::LengthMismatch {
            expected: n,
            found: nu.len(),
        }
        .into());
    }
    if mu.len() != m {
        return Err(CoreError::LengthMismatch {
            expected: m,
            found: mu.len(),
        }
        .into());
    }
    for i in 0..=n {
        if !values[i][0].is_zero() {
            return Ok(Some(CopulaViolation::Boundary {
                i,
                j: 0,
                found: values[i][0].clone(),
            }));
        }
    }
    for j in 0..=m {
        if !values[0][j].is_zero() {
            return Ok(Some(CopulaViolation::Boundary {
                i: 0,
                j,
                found: values[0][j].clone(),
            }));
        }
    }
    let mut acc = Rat::zero();
    for i in 1..=n {
        acc += &nu[i - 1];
        if values[i][m] != acc {
            return Ok(Some(CopulaViolation::Margin {
                i,
                j: m,
                expected: acc,
                found: values[i][m].clone(),
            }));
        }
    }
    acc = Rat::zero();
    for j in 1..=m {
        acc += &mu[j - 1];
        if values[n][j] != acc {
            return Ok(Some(CopulaViolation::Margin {
                i: n,
                j,
                expected: acc,
                found: values[n][j].clone(),
            }));
        }
    }
    for i in 1..=n {
        for j in 1..=m {
            let inc = &values[i - 1][j - 1] - &values[i][j - 1] - &values[i - 1][j]
                + &values[i][j];
            if inc.is_negative() {
                return Ok(Some(CopulaViolation::NegativeRectangle { i, j, value: inc }));
            }
        }
    }
    Ok(None)
}

/// Checks the ordinary copula conditions (uniform margins `i/n` and `j/m`),
/// returning the first violation if any.
pub fn check_copula(values: &[Vec<Rat>]) -> Result<Option<CopulaViolation>, CopulaError> {
    let (n, m) = grid_shape(values)?;
    let nu = vec![Rat::new(1.into(), (n as i64).into()); n];
    let mu = vec![Rat::new(1.into(), (m as i64).into()); m];
    check_generalized_copula(values, &nu, &mu)
}

/// A validated discrete copula on `{0..n} x {0..m}`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DiscreteCopula {
    n: usize,
    m: usize,
    values: Vec<Vec<Rat>>,
}

impl DiscreteCopula {
    /// Validates a grid as a copula.
    pub fn new(values: Vec<Vec<Rat>>) -> Result<Self, CopulaError> {
        if let Some(v) = check_copula(&values)? {
            return Err(CopulaError::Invalid(v));
        }
        let (n, m) = grid_shape(&values)?;
        Ok(DiscreteCopula { n, m, values })
    }

    /// The independence copula `C(i,j) = ij/(nm)`.
    pub fn independence(n: usize, m: usize) -> Result<Self, CopulaError> {
        if n == 0 || m == 0 {
            return Err(CopulaError::BadShape);
        }
        let values = (0..=n)
            .map(|i| {
                (0..=m)
                    .map(|j| Rat::new(((i * j) as i64).into(), ((n * m) as i64).into()))
                    .collect()
            })
            .collect();
        DiscreteCopula::new(values)
    }

    /// Number of row steps.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of column steps.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Whether the grid is square.
    pub fn is_square(&self) -> bool {
        self.n == self.m
    }

    /// Grid value at `(i, j)`.
    pub fn value(&self, i: usize, j: usize) -> &Rat {
        &self.values[i][j]
    }

    /// The full grid.
    pub fn values(&self) -> &[Vec<Rat>] {
        &self.values
    }

    /// The density grid: rectangle increments `h(i,j)` for `i, j` in `[n] x
    /// [m]`, non-negative with row sums `1/n` and column sums `1/m`.
    pub fn density_grid(&self) -> Vec<Vec<Rat>> {
        (1..=self.n)
            .map(|i| {
                (1..=self.m)
                    .map(|j| {
                        &self.values[i - 1][j - 1] - &self.values[i][j - 1]
                            - &self.values[i - 1][j]
                            + &self.values[i][j]
                    })
                    .collect()
            })
            .collect()
    }
}

impl Serialize for DiscreteCopula {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Raw<'a> {
            n: usize,
            m: usize,
            values: Vec<Vec<&'a str>>,
        }
        let formatted: Vec<Vec<String>> = self
            .values
            .iter()
            .map(|row| row.iter().map(format_rat).collect())
            .collect();
        Raw {
            n: self.n,
            m: self.m,
            values: formatted
                .iter()
                .map(|row| row.iter().map(String::as_str).collect())
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DiscreteCopula {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            m: usize,
            values: Vec<Vec<String>>,
        }
        let raw = Raw::deserialize(de)?;
        let mut values = Vec::with_capacity(raw.values.len());
        for row in &raw.values {
            let mut out = Vec::with_capacity(row.len());
            for cell in row {
                out.push(parse_rat(cell).map_err(D::Error::custom)?);
            }
            values.push(out);
        }
        let copula = DiscreteCopula::new(values).map_err(D::Error::custom)?;
        if copula.n != raw.n || copula.m != raw.m {
            return Err(D::Error::custom(format!(
                "declared size {}x{} does not match grid {}x{}",
                raw.n, raw.m, copula.n, copula.m
            )));
        }
        Ok(copula)
    }
}

/// A square matrix with non-negative entries whose rows and columns each
/// sum to one exactly.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BistochasticMatrix {
    n: usize,
    entries: Vec<Vec<Rat>>,
}

impl BistochasticMatrix {
    /// Validates a square matrix as bistochastic.
    pub fn new(entries: Vec<Vec<Rat>>) -> Result<Self, CopulaError> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|row| row.len() != n) {
            return Err(CopulaError::NotBistochastic("matrix is not square".into()));
        }
        for (i, row) in entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.is_negative() {
                    return Err(CopulaError::NotBistochastic(format!(
                        "entry ({},{}) is negative",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let sum: Rat = row.iter().fold(Rat::zero(), |acc, e| acc + e);
            if !sum.is_one() {
                return Err(CopulaError::NotBistochastic(format!(
                    "row {} sums to {}",
                    i + 1,
                    format_rat(&sum)
                )));
            }
        }
        for j in 0..n {
            let sum: Rat = entries.iter().fold(Rat::zero(), |acc, row| acc + &row[j]);
            if !sum.is_one() {
                return Err(CopulaError::NotBistochastic(format!(
                    "column {} sums to {}",
                    j + 1,
                    format_rat(&sum)
                )));
            }
        }
        Ok(BistochasticMatrix { n, entries })
    }

    /// The permutation matrix of `perm` (`perm[i]` is the column of row `i`).
    pub fn from_permutation(perm: &[usize]) -> Result<Self, CopulaError> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &c in perm {
            if c >= n || seen[c] {
                return Err(CopulaError::NotBistochastic(
                    "not a permutation".into(),
                ));
            }
            seen[c] = true;
        }
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if perm[i] == j { Rat::one() } else { Rat::zero() })
                    .collect()
            })
            .collect();
        BistochasticMatrix::new(entries)
    }

    /// Matrix size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry at `(i, j)`, zero-based.
    pub fn entry(&self, i: usize, j: usize) -> &Rat {
        &self.entries[i][j]
    }

    /// The rows.
    pub fn entries(&self) -> &[Vec<Rat>] {
        &self.entries
    }

    /// Matrix product; the product of bistochastic matrices is bistochastic.
    pub fn product(&self, other: &BistochasticMatrix) -> Result<Self, CopulaError> {
        if self.n != other.n {
            return Err(CopulaError::SizeMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let entries = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        (0..self.n).fold(Rat::zero(), |acc, k| {
                            acc + &self.entries[i][k] * &other.entries[k][j]
                        })
                    })
                    .collect()
            })
            .collect();
        BistochasticMatrix::new(entries)
    }
}

/// The copula of a bistochastic matrix: the scaled cumulative sum
/// `C(i,j) = (1/n) sum_{k<=i, l<=j} a_{kl}`.
pub fn copula_from_bistochastic(a: &BistochasticMatrix) -> DiscreteCopula {
    let n = a.n();
    let inv_n = Rat::new(1.into(), (n as i64).into());
    let mut values = vec![vec![Rat::zero(); n + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=n {
            let v = &values[i - 1][j] + &values[i][j - 1] - &values[i - 1][j - 1]
                + a.entry(i - 1, j - 1) * &inv_n;
            values[i][j] = v;
        }
    }
    DiscreteCopula::new(values)
        .expect("cumulative sums of a bistochastic matrix form a copula")
}

/// The bistochastic matrix of a square copula: `n` times the density grid.
pub fn bistochastic_from_copula(c: &DiscreteCopula) -> Result<BistochasticMatrix, CopulaError> {
    if !c.is_square() {
        return Err(CopulaError::SizeMismatch {
            left: c.n(),
            right: c.m(),
        });
    }
    let scale = Rat::from_integer((c.n() as i64).into());
    let entries = c
        .density_grid()
        .into_iter()
        .map(|row| row.into_iter().map(|e| e * &scale).collect())
        .collect();
    BistochasticMatrix::new(entries)
}

/// The index set `{1..n}` with decimal names.
pub fn base_index(n: usize) -> Result<CategorySet, CoreError> {
    CategorySet::new((1..=n).map(|t| t.to_string()))
}

/// The index set `[n] x [m]` with names `(i,j)`, row-major.
pub fn pair_index(n: usize, m: usize) -> Result<CategorySet, CoreError> {
    CategorySet::new(
        (1..=n).flat_map(|i| (1..=m).map(move |j| format!("({i},{j})"))),
    )
}

/// Projection of [`pair_index`] onto its first (`true`) or second (`false`)
/// coordinate.
pub fn coordinate_projection(
    n: usize,
    m: usize,
    first: bool,
) -> Result<CategoryMapping, CoreError> {
    let domain = pair_index(n, m)?;
    let codomain = base_index(if first { n } else { m })?;
    let assignments: Vec<(Category, Category)> = domain
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let coord = if first { t / m + 1 } else { t % m + 1 };
            (c.clone(), Category::new(coord.to_string()))
        })
        .collect();
    CategoryMapping::with_codomain(domain, codomain, assignments)
}

/// The density of a copula as a distribution on [`pair_index`].
pub fn density_from_copula(c: &DiscreteCopula) -> Result<Dist, CopulaError> {
    let grid = c.density_grid();
    let entries = grid.into_iter().flatten().collect();
    Ok(Dist::from_entries(pair_index(c.n(), c.m())?, entries)?)
}

/// The copula whose density is the given distribution on [`pair_index`]
/// for some `n x m`; errors when the cumulative grid is not a copula (its
/// marginals must be uniform).
pub fn copula_from_density(d: &Dist, n: usize, m: usize) -> Result<DiscreteCopula, CopulaError> {
    let expected = pair_index(n, m)?;
    if d.index() != &expected {
        return Err(CoreError::SetMismatch {
            expected: expected.names(),
            found: d.index().names(),
        }
        .into());
    }
    let mut values = vec![vec![Rat::zero(); m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let v = &values[i - 1][j] + &values[i][j - 1] - &values[i - 1][j - 1]
                + d.get_idx((i - 1) * m + (j - 1));
            values[i][j] = v;
        }
    }
    DiscreteCopula::new(values)
}

/// The product copula: the copula of the product of the two bistochastic
/// matrices.
pub fn product_copula(
    c1: &DiscreteCopula,
    c2: &DiscreteCopula,
) -> Result<DiscreteCopula, CopulaError> {
    let a = bistochastic_from_copula(c1)?;
    let b = bistochastic_from_copula(c2)?;
    Ok(copula_from_bistochastic(&a.product(&b)?))
}

fn require_uniform_marginal(
    d: &Dist,
    mapping: &CategoryMapping,
    which: &str,
    n: usize,
) -> Result<(), CopulaError> {
    let marg = d.aggregate(mapping)?;
    let expected = Rat::new(1.into(), (n as i64).into());
    for (t, e) in marg.entries().iter().enumerate() {
        if *e != expected {
            return Err(CopulaError::MarginalNotUniform {
                which: which.to_string(),
                index: t + 1,
                found: format_rat(e),
                expected: format_rat(&expected),
            });
        }
    }
    Ok(())
}

/// The distribution of the product copula computed through the Markov
/// combination: `alpha` and `beta` are copula densities on `[n] x [n]`,
/// combined over the middle coordinate (second of `alpha`, first of
/// `beta`), then aggregated along `(i,k,j) -> (i,j)`.
pub fn product_via_markov(alpha: &Dist, beta: &Dist) -> Result<Dist, CopulaError> {
    let len = alpha.index().len();
    let n = (1..=len).find(|t| t * t >= len).unwrap_or(0);
    if n == 0 || n * n != len {
        return Err(CopulaError::NotPairIndex(len));
    }
    let expected = pair_index(n, n)?;
    if alpha.index() != &expected || beta.index() != &expected {
        return Err(CoreError::SetMismatch {
            expected: expected.names(),
            found: if alpha.index() != &expected {
                alpha.index().names()
            } else {
                beta.index().names()
            },
        }
        .into());
    }
    let first = coordinate_projection(n, n, true)?;
    let second = coordinate_projection(n, n, false)?;
    require_uniform_marginal(alpha, &first, "alpha's first coordinate", n)?;
    require_uniform_marginal(alpha, &second, "alpha's second coordinate", n)?;
    require_uniform_marginal(beta, &first, "beta's first coordinate", n)?;
    require_uniform_marginal(beta, &second, "beta's second coordinate", n)?;
    let prod = ProductIndex::new(&second, &first)?;
    let combined = star(alpha.vector(), beta.vector(), &prod)?;
    // Aggregate (i, k, j) onto (i, j).
    let images: Vec<Category> = prod
        .triple_positions()
        .iter()
        .map(|&(_, it, jt)| {
            let i = it / n + 1;
            let j = jt % n + 1;
            Category::new(format!("({i},{j})"))
        })
        .collect();
    let m_prime = CategoryMapping::with_codomain(
        prod.index().clone(),
        expected,
        prod.index().iter().cloned().zip(images),
    )?;
    Ok(Dist::new(combined.aggregate(&m_prime)?)?)
}
