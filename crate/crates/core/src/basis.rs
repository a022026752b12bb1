//! Monomial bases indexing Gram matrices.
//!
//! The useful part of a basis is usually much smaller than all of N^n_d: a
//! monomial x^b can only matter if its square shows up in the target support
//! or can pair with another kept monomial. The pruning fixed point deletes
//! everything else; it is lossless because a PSD Gram matrix with a zero
//! diagonal entry has the whole row zero, so dropping the row changes no
//! representable polynomial. A half-Newton-polytope filter is available as
//! an optional pre-pass, and the unpruned basis is kept as a fallback.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::poly::{self, Exponent, Support};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("basis would have {size} monomials, over the cap {cap}")]
    TooLarge { size: u128, cap: usize },
}

/// Default cap on basis enumeration size.
pub const BASIS_CAP: usize = 1_000_000;

/// Ordered duplicate-free list of degree-d exponents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    d: u32,
    exponents: Vec<Exponent>,
}

impl MonomialBasis {
    /// Sorts and deduplicates.
    pub fn from_exponents(n: usize, d: u32, mut exponents: Vec<Exponent>) -> Self {
        debug_assert!(exponents.iter().all(|e| e.n() == n && e.degree() == d));
        exponents.sort();
        exponents.dedup();
        MonomialBasis { n, d, exponents }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Exponent] {
        &self.exponents
    }

    pub fn contains(&self, e: &Exponent) -> bool {
        self.exponents.binary_search(e).is_ok()
    }

    pub fn position(&self, e: &Exponent) -> Option<usize> {
        self.exponents.binary_search(e).ok()
    }

    pub fn is_subset(&self, other: &MonomialBasis) -> bool {
        self.exponents.iter().all(|e| other.contains(e))
    }
}

/// All of N^n_d, within the default size cap.
pub fn standard_basis(n: usize, d: u32) -> Result<MonomialBasis, BasisError> {
    standard_basis_capped(n, d, BASIS_CAP)
}

pub fn standard_basis_capped(n: usize, d: u32, cap: usize) -> Result<MonomialBasis, BasisError> {
    let size = poly::count_exponents(n, d).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(BasisError::TooLarge { size, cap });
    }
    Ok(MonomialBasis {
        n,
        d,
        exponents: poly::exponents_of_degree(n, d),
    })
}

/// Keeps candidates b whose double lies in the convex hull of the support,
/// decided per candidate by a small phase-1 LP. An LP that cannot be
/// classified keeps its candidate; dropping is only done on proof.
pub fn newton_filter(support: &Support, candidates: &MonomialBasis) -> MonomialBasis {
    let pts: Vec<&Exponent> = support.iter().collect();
    let n = candidates.n();
    let kept = candidates
        .exponents()
        .iter()
        .filter(|beta| {
            let target = beta.double();
            // Columns: one per support point, rows: n coordinates + the
            // convex-combination row of ones.
            let columns: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| {
                    let mut col: Vec<f64> =
                        p.powers().iter().map(|&v| v as f64).collect();
                    col.push(1.0);
                    col
                })
                .collect();
            let mut rhs: Vec<f64> = target.powers().iter().map(|&v| v as f64).collect();
            rhs.push(1.0);
            debug_assert_eq!(rhs.len(), n + 1);
            lp_feasible(&columns, &rhs, 1e-9).unwrap_or(true)
        })
        .cloned()
        .collect();
    MonomialBasis {
        n,
        d: candidates.d(),
        exponents: kept,
    }
}

/// Is there lambda >= 0 with sum_j lambda_j col_j = rhs? Phase-1 simplex
/// with Bland's rule; None when the iteration cap is hit.
fn lp_feasible(columns: &[Vec<f64>], rhs: &[f64], tol: f64) -> Option<bool> {
    let rows = rhs.len();
    let nvar = columns.len();
    // Tableau: nvar structural columns, `rows` artificial columns, rhs last.
    let width = nvar + rows + 1;
    let mut t = vec![vec![0.0f64; width]; rows];
    for (i, row) in t.iter_mut().enumerate() {
        let flip = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, col) in columns.iter().enumerate() {
            row[j] = flip * col[i];
        }
        row[nvar + i] = 1.0;
        row[width - 1] = flip * rhs[i];
    }
    // Phase-1 objective: minimize the artificial sum. Reduced-cost row =
    // sum of constraint rows over structural columns.
    let mut obj = vec![0.0f64; width];
    for row in &t {
        for j in 0..nvar {
            obj[j] += row[j];
        }
        obj[width - 1] += row[width - 1];
    }
    let mut basis: Vec<usize> = (nvar..nvar + rows).collect();

    let cap = 200 * (nvar + rows).max(50);
    for _ in 0..cap {
        // Bland: smallest-index improving column.
        let Some(enter) = (0..nvar + rows).find(|&j| obj[j] > tol) else {
            return Some(obj[width - 1].abs() <= tol);
        };
        // Ratio test; ties by smallest basic variable index (Bland).
        let mut pivot: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in t.iter().enumerate() {
            if row[enter] > tol {
                let ratio = row[width - 1] / row[enter];
                let better = match pivot {
                    None => true,
                    Some(pi) => {
                        ratio < best - 1e-15
                            || (ratio <= best + 1e-15 && basis[i] < basis[pi])
                    }
                };
                if better {
                    pivot = Some(i);
                    best = ratio;
                }
            }
        }
        let Some(pi) = pivot else {
            // Unbounded phase-1 cannot happen (objective bounded below by
            // zero); numeric breakdown, report indeterminate.
            return None;
        };
        let scale = t[pi][enter];
        for v in &mut t[pi] {
            *v /= scale;
        }
        for i in 0..rows {
            if i != pi && t[i][enter].abs() > 0.0 {
                let f = t[i][enter];
                for j in 0..width {
                    t[i][j] -= f * t[pi][j];
                }
            }
        }
        let f = obj[enter];
        if f.abs() > 0.0 {
            for j in 0..width {
                obj[j] -= f * t[pi][j];
            }
        }
        basis[pi] = enter;
    }
    None
}

/// The two-level basis chain: pruned then unpruned.
#[derive(Debug, Clone)]
pub struct BasisChain {
    pub b1: MonomialBasis,
    pub b2: MonomialBasis,
}

/// Deletes b from the working set whenever 2b is neither in the support nor
/// a sum of two other kept monomials, sweeping in order until stable. The
/// result never loses representable polynomials (see module docs); the
/// returned chain keeps the unpruned start as a safety net.
pub fn prune_basis(support: &Support, start: &MonomialBasis) -> BasisChain {
    let mut kept: BTreeSet<Exponent> = start.exponents().iter().cloned().collect();
    loop {
        let mut deleted = false;
        let sweep: Vec<Exponent> = kept.iter().cloned().collect();
        for beta in sweep {
            let doubled = beta.double();
            if support.contains(&doubled) {
                continue;
            }
            if !pair_sum_reachable(&kept, &beta, &doubled) {
                kept.remove(&beta);
                deleted = true;
            }
        }
        if !deleted {
            break;
        }
    }
    BasisChain {
        b1: MonomialBasis {
            n: start.n(),
            d: start.d(),
            exponents: kept.into_iter().collect(),
        },
        b2: start.clone(),
    }
}

/// Does 2b equal g1 + g2 for kept g1, g2 both different from b?
fn pair_sum_reachable(kept: &BTreeSet<Exponent>, beta: &Exponent, double: &Exponent) -> bool {
    for g1 in kept {
        if g1 == beta {
            continue;
        }
        if let Some(g2) = double.checked_sub(g1) {
            if g2 != *beta && kept.contains(&g2) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn exp(p: &[u32]) -> Exponent {
        Exponent::new(p.to_vec())
    }

    fn support_of(degree: u32, members: &[&[u32]]) -> Support {
        let n = members[0].len();
        Support::from_exponents(n, degree, members.iter().map(|p| exp(p))).unwrap()
    }

    #[test]
    fn standard_basis_small_cases() {
        let b = standard_basis(3, 2).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(
            b.exponents(),
            &[
                exp(&[2, 0, 0]),
                exp(&[1, 1, 0]),
                exp(&[1, 0, 1]),
                exp(&[0, 2, 0]),
                exp(&[0, 1, 1]),
                exp(&[0, 0, 2]),
            ]
        );
        assert_eq!(standard_basis(1, 5).unwrap().exponents(), &[exp(&[5])]);
        assert_eq!(standard_basis(4, 1).unwrap().len(), 4);
    }

    #[test]
    fn standard_basis_respects_the_cap() {
        assert!(standard_basis_capped(4, 5, 10).is_err());
        assert!(standard_basis_capped(4, 5, 56).is_ok());
        // C(39,10) is far over the default cap.
        assert!(matches!(
            standard_basis(30, 10),
            Err(BasisError::TooLarge { .. })
        ));
    }

    #[test]
    fn newton_filter_segment_keeps_midpoint() {
        let s = support_of(4, &[&[4, 0], &[0, 4]]);
        let cand = standard_basis(2, 2).unwrap();
        let f = newton_filter(&s, &cand);
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn newton_filter_single_point() {
        let s = support_of(4, &[&[4, 0]]);
        let cand = standard_basis(2, 2).unwrap();
        let f = newton_filter(&s, &cand);
        assert_eq!(f.exponents(), &[exp(&[2, 0])]);
    }

    #[test]
    fn newton_filter_full_support_is_identity() {
        let s = Support::from_exponents(2, 4, poly::exponents_of_degree(2, 4)).unwrap();
        let cand = standard_basis(2, 2).unwrap();
        let f = newton_filter(&s, &cand);
        assert_eq!(f, cand);
    }

    #[test]
    fn newton_filter_interior_point_in_triangle() {
        // conv{(4,0,0),(0,4,0),(0,0,4)} contains (2,1,1) doubled? 2b =
        // (2,2,0)... pick b = (1,1,0): 2b = (2,2,0) = midpoint of the first
        // two vertices: kept. b = (1,0,1), (0,1,1) likewise; all six stay.
        let s = support_of(4, &[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4]]);
        let cand = standard_basis(3, 2).unwrap();
        let f = newton_filter(&s, &cand);
        assert_eq!(f.len(), 6);
    }

    #[test]
    fn prune_drops_unreachable_squares() {
        let s = support_of(4, &[&[4, 0], &[2, 2]]);
        let start = standard_basis(2, 2).unwrap();
        let chain = prune_basis(&s, &start);
        assert_eq!(chain.b1.exponents(), &[exp(&[2, 0]), exp(&[1, 1])]);
        assert_eq!(chain.b2, start);
    }

    #[test]
    fn prune_keeps_everything_for_the_coupled_quartic() {
        // x1^4 + x2^4 + x3^4 + x1 x2 x3^2 + x1 x2^2 x3.
        let s = support_of(
            4,
            &[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4], &[1, 1, 2], &[1, 2, 1]],
        );
        let start = standard_basis(3, 2).unwrap();
        let chain = prune_basis(&s, &start);
        assert_eq!(chain.b1, start);
    }

    #[test]
    fn prune_single_term_support() {
        let s = support_of(4, &[&[4, 0, 0]]);
        let start = standard_basis(3, 2).unwrap();
        let chain = prune_basis(&s, &start);
        assert_eq!(chain.b1.exponents(), &[exp(&[2, 0, 0])]);
    }

    #[test]
    fn prune_is_idempotent_and_chains() {
        let mut rng = Rng::from_seed(21);
        for _ in 0..30 {
            let n = 2 + rng.below(2);
            let d = 1 + rng.below(2) as u32;
            let all = poly::exponents_of_degree(n, 2 * d);
            let picked: Vec<Exponent> = all
                .iter()
                .filter(|_| rng.next_f64() < 0.4)
                .cloned()
                .collect();
            if picked.is_empty() {
                continue;
            }
            let s = Support::from_exponents(n, 2 * d, picked).unwrap();
            let start = standard_basis(n, d).unwrap();
            let chain = prune_basis(&s, &start);
            assert!(chain.b1.is_subset(&chain.b2));
            let again = prune_basis(&s, &chain.b1);
            assert_eq!(again.b1, chain.b1);
        }
    }

    #[test]
    fn pruning_subsumes_the_newton_filter() {
        let mut rng = Rng::from_seed(33);
        for trial in 0..30 {
            let n = 2 + rng.below(2);
            let d = 1 + rng.below(2) as u32;
            let all = poly::exponents_of_degree(n, 2 * d);
            let picked: Vec<Exponent> = all
                .iter()
                .filter(|_| rng.next_f64() < 0.5)
                .cloned()
                .collect();
            if picked.is_empty() {
                continue;
            }
            let s = Support::from_exponents(n, 2 * d, picked).unwrap();
            let start = standard_basis(n, d).unwrap();
            let direct = prune_basis(&s, &start).b1;
            let filtered = newton_filter(&s, &start);
            let via_filter = prune_basis(&s, &filtered).b1;
            assert_eq!(direct, via_filter, "trial {trial}");
        }
    }
}
