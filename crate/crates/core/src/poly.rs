//! Exponent vectors, homogeneous supports, and the substitution x -> A x at
//! the support and coefficient level.
//!
//! Everything downstream indexes SDP rows and columns by exponents, so the
//! ordering here (degree first, then x1-major within a degree) is fixed once
//! and used everywhere. Supports of composed polynomials p(Ax) can be taken
//! symbolically (union over the nonzero pattern, immune to cancellation) or
//! numerically with random coefficients; symbolic is the default since any
//! superset support still certifies, and it is reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::rng::{self, Rng};

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("degree {d} unsupported, multinomials overflow past d={max}")]
    DegreeTooLarge { d: u32, max: u32 },
    #[error("matrix is {rows}x{cols} but the support lives on {n} variables")]
    DimensionMismatch { rows: usize, cols: usize, n: usize },
    #[error("exponent {exponent} has degree {got}, support requires {expected}")]
    MixedDegree {
        exponent: String,
        got: u32,
        expected: u32,
    },
    #[error("target support is missing: {list}", list = .missing.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    MissingExponents { missing: Vec<Exponent> },
}

/// A monomial x^alpha, stored as its exponent vector with the degree cached.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponent {
    powers: Vec<u32>,
    degree: u32,
}

impl Exponent {
    pub fn new(powers: Vec<u32>) -> Self {
        let degree = powers.iter().sum();
        Exponent { powers, degree }
    }

    /// deg * e_j.
    pub fn unit(n: usize, j: usize, deg: u32) -> Self {
        let mut powers = vec![0; n];
        powers[j] = deg;
        Exponent { powers, degree: deg }
    }

    pub fn powers(&self) -> &[u32] {
        &self.powers
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn n(&self) -> usize {
        self.powers.len()
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        let powers = self
            .powers
            .iter()
            .zip(&other.powers)
            .map(|(a, b)| a + b)
            .collect();
        Exponent {
            powers,
            degree: self.degree + other.degree,
        }
    }

    pub fn double(&self) -> Exponent {
        Exponent {
            powers: self.powers.iter().map(|p| 2 * p).collect(),
            degree: 2 * self.degree,
        }
    }

    /// self - other componentwise, None if any component would go negative.
    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        let mut powers = Vec::with_capacity(self.powers.len());
        for (a, b) in self.powers.iter().zip(&other.powers) {
            powers.push(a.checked_sub(*b)?);
        }
        Some(Exponent {
            powers,
            degree: self.degree - other.degree,
        })
    }

    /// beta with 2*beta = self, when every power is even.
    pub fn half(&self) -> Option<Exponent> {
        if self.powers.iter().all(|p| p % 2 == 0) {
            Some(Exponent {
                powers: self.powers.iter().map(|p| p / 2).collect(),
                degree: self.degree / 2,
            })
        } else {
            None
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.powers
            .iter()
            .zip(x)
            .map(|(&p, &v)| v.powi(p as i32))
            .product()
    }
}

impl Ord for Exponent {
    /// Degree first; within a degree, x1-major (so x1^2 < x1 x2 < x2^2).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.powers.cmp(&self.powers))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (j, &p) in self.powers.iter().enumerate() {
            if p == 0 {
                continue;
            }
            if !first {
                write!(f, " ")?;
            }
            first = false;
            if p == 1 {
                write!(f, "x{}", j + 1)?;
            } else {
                write!(f, "x{}^{}", j + 1, p)?;
            }
        }
        Ok(())
    }
}

/// A duplicate-free set of exponents of one common degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    n: usize,
    degree: u32,
    exponents: BTreeSet<Exponent>,
}

impl Support {
    pub fn empty(n: usize, degree: u32) -> Self {
        Support {
            n,
            degree,
            exponents: BTreeSet::new(),
        }
    }

    pub fn from_exponents<I>(n: usize, degree: u32, it: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = Exponent>,
    {
        let mut s = Support::empty(n, degree);
        for e in it {
            s.insert(e)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, e: Exponent) -> Result<bool, PolyError> {
        if e.degree() != self.degree {
            return Err(PolyError::MixedDegree {
                exponent: e.to_string(),
                got: e.degree(),
                expected: self.degree,
            });
        }
        debug_assert_eq!(e.n(), self.n);
        Ok(self.exponents.insert(e))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn contains(&self, e: &Exponent) -> bool {
        self.exponents.contains(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exponent> {
        self.exponents.iter()
    }

    pub fn union_with(&mut self, other: &Support) {
        debug_assert_eq!(self.degree, other.degree);
        for e in &other.exponents {
            self.exponents.insert(e.clone());
        }
    }

    pub fn is_subset(&self, other: &Support) -> bool {
        self.exponents.is_subset(&other.exponents)
    }
}

/// Sparse homogeneous polynomial: exponent -> nonzero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    n: usize,
    degree: u32,
    terms: BTreeMap<Exponent, f64>,
}

impl Form {
    pub fn from_terms(n: usize, degree: u32, terms: BTreeMap<Exponent, f64>) -> Self {
        debug_assert!(terms.keys().all(|e| e.degree() == degree && e.n() == n));
        let terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        Form { n, degree, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coefficient(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn support(&self) -> Support {
        Support {
            n: self.n,
            degree: self.degree,
            exponents: self.terms.keys().cloned().collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, &c)| c * e.eval(x)).sum()
    }
}

/// Largest half-degree for which multinomial coefficients are computed.
pub const MAX_POWER_NORM_D: u32 = 20;

/// (x_1^2 + ... + x_n^2)^d with exact integer multinomial coefficients
/// d!/(k_1! ... k_n!) on the exponents 2k.
pub fn power_norm_form(n: usize, d: u32) -> Result<Form, PolyError> {
    if d > MAX_POWER_NORM_D {
        return Err(PolyError::DegreeTooLarge {
            d,
            max: MAX_POWER_NORM_D,
        });
    }
    let mut terms = BTreeMap::new();
    let mut k = vec![0u32; n];
    compositions(&mut k, 0, d, &mut |k| {
        let coef = multinomial(d, k) as f64;
        let e = Exponent::new(k.iter().map(|&p| 2 * p).collect());
        terms.insert(e, coef);
    });
    Ok(Form {
        n,
        degree: 2 * d,
        terms,
    })
}

/// Visit every way to write `remaining` as an ordered sum over k[at..].
fn compositions(k: &mut Vec<u32>, at: usize, remaining: u32, visit: &mut impl FnMut(&[u32])) {
    if at + 1 == k.len() {
        k[at] = remaining;
        visit(k);
        k[at] = 0;
        return;
    }
    for v in 0..=remaining {
        k[at] = v;
        compositions(k, at + 1, remaining - v, visit);
    }
    k[at] = 0;
}

/// d! / (k_1! ... k_n!), exact in u128 for d <= 20.
fn multinomial(d: u32, k: &[u32]) -> u128 {
    let mut num: u128 = 1;
    for v in 2..=d as u128 {
        num *= v;
    }
    let mut den: u128 = 1;
    for &ki in k {
        for v in 2..=ki as u128 {
            den *= v;
        }
    }
    num / den
}

/// All exponents on n variables of the given total degree, in order.
pub fn exponents_of_degree(n: usize, degree: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    let mut k = vec![0u32; n];
    compositions(&mut k, 0, degree, &mut |k| {
        out.push(Exponent::new(k.to_vec()));
    });
    out.sort();
    out
}

/// |{alpha : |alpha| = degree}| = C(n + degree - 1, degree), None on overflow.
pub fn count_exponents(n: usize, degree: u32) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 0..degree as u128 {
        acc = acc.checked_mul(n as u128 + i)?;
        acc /= i + 1;
    }
    Some(acc)
}

/// How composed supports are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposeMode {
    /// Union over the nonzero pattern; a cancellation-free superset.
    Symbolic,
    /// Expand p(Ax) for p with coefficients drawn in (0,1) from the seed
    /// (in support order), keep terms with |coefficient| > 1e-12.
    Numeric { seed: u64 },
}

const NUMERIC_ZERO: f64 = 1e-12;

/// Support of p(Ax) for any/some p with the given support, per mode.
pub fn compose_support(
    support: &Support,
    a: &DMatrix<f64>,
    mode: ComposeMode,
) -> Result<Support, PolyError> {
    let n = support.n();
    if a.nrows() != n || a.ncols() != n {
        return Err(PolyError::DimensionMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            n,
        });
    }
    let mut out = Support::empty(n, support.degree());
    match mode {
        ComposeMode::Symbolic => {
            let rows: Vec<Vec<usize>> = (0..n)
                .map(|j| (0..n).filter(|&l| a[(j, l)] != 0.0).collect())
                .collect();
            for alpha in support.iter() {
                for powers in symbolic_expansion(&rows, alpha) {
                    out.insert(Exponent::new(powers))?;
                }
            }
        }
        ComposeMode::Numeric { seed } => {
            let mut rng = Rng::from_seed(seed);
            let mut total: BTreeMap<Exponent, f64> = BTreeMap::new();
            for alpha in support.iter() {
                let c = rng.positive_unit();
                for (e, v) in numeric_expansion(a, alpha) {
                    *total.entry(e).or_insert(0.0) += c * v;
                }
            }
            for (e, v) in total {
                if v.abs() > NUMERIC_ZERO {
                    out.insert(e)?;
                }
            }
        }
    }
    Ok(out)
}

/// Exponents of (Ax)^alpha over the nonzero pattern only. Empty when some
/// needed row of A is entirely zero (the whole product vanishes).
fn symbolic_expansion(rows: &[Vec<usize>], alpha: &Exponent) -> BTreeSet<Vec<u32>> {
    let n = rows.len();
    let mut acc: BTreeSet<Vec<u32>> = BTreeSet::new();
    acc.insert(vec![0u32; n]);
    for (j, &aj) in alpha.powers().iter().enumerate() {
        for _ in 0..aj {
            if rows[j].is_empty() {
                return BTreeSet::new();
            }
            let mut next = BTreeSet::new();
            for v in &acc {
                for &l in &rows[j] {
                    let mut w = v.clone();
                    w[l] += 1;
                    next.insert(w);
                }
            }
            acc = next;
        }
    }
    acc
}

/// Coefficient expansion of (Ax)^alpha by repeated multiplication with the
/// row linear forms of A.
fn numeric_expansion(a: &DMatrix<f64>, alpha: &Exponent) -> BTreeMap<Exponent, f64> {
    let n = a.nrows();
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    acc.insert(vec![0u32; n], 1.0);
    for (j, &aj) in alpha.powers().iter().enumerate() {
        for _ in 0..aj {
            let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (v, &coef) in &acc {
                for l in 0..n {
                    let w_coef = a[(j, l)];
                    if w_coef == 0.0 {
                        continue;
                    }
                    let mut w = v.clone();
                    w[l] += 1;
                    *next.entry(w).or_insert(0.0) += coef * w_coef;
                }
            }
            acc = next;
        }
    }
    acc.into_iter()
        .filter(|&(_, c)| c != 0.0)
        .map(|(v, c)| (Exponent::new(v), c))
        .collect()
}

/// The support chain of the iterated-substitution hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    /// Levels 0..=s; level 0 is {2d e_j}.
    pub levels: Vec<Support>,
    /// First level k with level k equal to level k-1, if any.
    pub stabilized_at: Option<u32>,
}

/// Level 0 is the support of sum_j c_j x_j^{2d}; each next level adds the
/// composed supports under every matrix. Once two consecutive levels agree
/// the chain has stabilized and later levels are copies.
pub fn support_hierarchy(
    mats: &[DMatrix<f64>],
    d: u32,
    s: u32,
    mode: ComposeMode,
) -> Result<Hierarchy, PolyError> {
    let n = mats.first().map_or(0, |a| a.nrows());
    let base = Support::from_exponents(
        n,
        2 * d,
        (0..n).map(|j| Exponent::unit(n, j, 2 * d)),
    )?;
    let mut levels = vec![base];
    let mut stabilized_at = None;
    for level in 1..=s {
        if stabilized_at.is_some() {
            let prev = levels.last().unwrap().clone();
            levels.push(prev);
            continue;
        }
        let prev = levels.last().unwrap().clone();
        let mut next = prev.clone();
        for (i, a) in mats.iter().enumerate() {
            let sub_mode = match mode {
                ComposeMode::Symbolic => ComposeMode::Symbolic,
                ComposeMode::Numeric { seed } => ComposeMode::Numeric {
                    seed: rng::mix(seed, (level as u64) * mats.len() as u64 + i as u64),
                },
            };
            next.union_with(&compose_support(&prev, a, sub_mode)?);
        }
        if next == prev {
            stabilized_at = Some(level);
        }
        levels.push(next);
    }
    Ok(Hierarchy {
        levels,
        stabilized_at,
    })
}

/// The linear map alpha-coefficients -> beta-coefficients realizing
/// p |-> p(Ax) on fixed source and target supports.
#[derive(Debug, Clone)]
pub struct SubstitutionMap {
    /// columns\[j\] lists (target row index, value), sorted by row; column j
    /// corresponds to the j-th exponent of the source support in order.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub source_len: usize,
    pub target_len: usize,
}

/// Expands (Ax)^alpha for each source exponent and records the coefficients
/// against the target ordering. Fails if a nonzero expansion term falls
/// outside the target.
pub fn substitution_map(
    p_support: &Support,
    a: &DMatrix<f64>,
    target: &Support,
) -> Result<SubstitutionMap, PolyError> {
    let n = p_support.n();
    if a.nrows() != n || a.ncols() != n {
        return Err(PolyError::DimensionMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            n,
        });
    }
    let index: BTreeMap<&Exponent, usize> =
        target.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut columns = Vec::with_capacity(p_support.len());
    let mut missing = BTreeSet::new();
    for alpha in p_support.iter() {
        let mut col = Vec::new();
        for (beta, coef) in numeric_expansion(a, alpha) {
            match index.get(&beta) {
                Some(&row) => col.push((row, coef)),
                None => {
                    missing.insert(beta);
                }
            }
        }
        col.sort_unstable_by_key(|&(row, _)| row);
        columns.push(col);
    }
    if !missing.is_empty() {
        return Err(PolyError::MissingExponents {
            missing: missing.into_iter().collect(),
        });
    }
    Ok(SubstitutionMap {
        columns,
        source_len: p_support.len(),
        target_len: target.len(),
    })
}

impl SubstitutionMap {
    /// y = L x with x over the source support, y over the target support.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.source_len);
        let mut y = vec![0.0; self.target_len];
        for (j, col) in self.columns.iter().enumerate() {
            for &(row, v) in col {
                y[row] += v * x[j];
            }
        }
        y
    }
}
