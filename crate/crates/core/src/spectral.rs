//! Spectral radius of a single matrix and product-based lower bounds on the
//! joint spectral radius of a set.
//!
//! Eigenvalues are computed in-house: Householder reduction to Hessenberg
//! form followed by the Francis implicit double-shift QR iteration with
//! deflation. Keeping this routine self-contained lets the rest of the crate
//! (in particular the certificate verifier) cross-check PSD claims without
//! trusting the solver's own linear algebra.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

/// Machine epsilon for f64.
const EPS: f64 = 2.220446049250313e-16;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix must be square and nonempty, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("QR iteration hit the {limit}-step cap with {found}/{total} eigenvalues deflated")]
    NoConvergence {
        limit: usize,
        found: usize,
        total: usize,
        /// Eigenvalues deflated before the cap, as (re, im).
        partial: Vec<(f64, f64)>,
    },
    #[error("matrix set is empty")]
    EmptySet,
    #[error("maximum word length must be at least 1")]
    ZeroLength,
}

/// All eigenvalues of a real square matrix, as (re, im) pairs.
///
/// Accuracy is on the order of machine precision times the Frobenius norm;
/// the subdiagonal deflation threshold is 1e-12 * ||H||_F.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>, SpectralError> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(SpectralError::BadShape {
            rows: n,
            cols: a.ncols(),
        });
    }
    for j in 0..n {
        for i in 0..n {
            if !a[(i, j)].is_finite() {
                return Err(SpectralError::NonFinite { row: i, col: j });
            }
        }
    }
    let mut h = a.clone();
    hessenberg(&mut h);
    francis_qr(&mut h)
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64, SpectralError> {
    let eig = eigenvalues(a)?;
    Ok(eig
        .iter()
        .map(|&(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Householder similarity reduction to upper Hessenberg form, in place.
/// Entries below the first subdiagonal are zeroed on exit.
fn hessenberg(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n >= 3 {
        let high = n - 1;
        let mut ort = vec![0.0; n];
        for m in 1..high {
            let mut scale = 0.0;
            for i in m..=high {
                scale += h[(i, m - 1)].abs();
            }
            if scale == 0.0 {
                continue;
            }
            let mut hsum = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[(i, m - 1)] / scale;
                hsum += ort[i] * ort[i];
            }
            let mut g = hsum.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hsum -= ort[m] * g;
            ort[m] -= g;
            // Apply P = I - u u^T / hsum from the left, then the right.
            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i] * h[(i, j)];
                }
                f /= hsum;
                for i in m..=high {
                    h[(i, j)] -= f * ort[i];
                }
            }
            for i in 0..=high {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j] * h[(i, j)];
                }
                f /= hsum;
                for j in m..=high {
                    h[(i, j)] -= f * ort[j];
                }
            }
            h[(m, m - 1)] = scale * g;
        }
    }
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix; returns (re, im)
/// eigenvalue pairs. Total iteration budget is 30 * n.
fn francis_qr(h: &mut DMatrix<f64>) -> Result<Vec<(f64, f64)>, SpectralError> {
    let nn = h.nrows();
    let frob = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = (1e-12 * frob).max(f64::MIN_POSITIVE);
    let limit = 30 * nn;

    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let mut end = nn; // eigenvalues for indices >= end are done
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut iter_total = 0usize;

    while end > 0 {
        let nu = end - 1;
        // Find the start of the trailing unreduced block.
        let mut l = nu;
        while l > 0 {
            if h[(l, l - 1)].abs() <= tol {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == nu {
            // One real root.
            d[nu] = h[(nu, nu)] + exshift;
            e[nu] = 0.0;
            end -= 1;
            iter = 0;
        } else if l + 1 == nu {
            // A 2x2 block: real pair or complex conjugates.
            let w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            let p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            let q = p * p + w;
            let z = q.abs().sqrt();
            let x = h[(nu, nu)] + exshift;
            if q >= 0.0 {
                let z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = if z != 0.0 { x - w / z } else { d[nu - 1] };
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            end -= 2;
            iter = 0;
        } else {
            if iter_total >= limit {
                let found = nn - end;
                let partial = (end..nn).map(|i| (d[i], e[i])).collect();
                return Err(SpectralError::NoConvergence {
                    limit,
                    found,
                    total: nn,
                    partial,
                });
            }
            let mut x = h[(nu, nu)];
            let mut y = h[(nu - 1, nu - 1)];
            let mut w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            if iter == 10 || iter == 20 {
                // Exceptional shift to break cycling.
                exshift += x;
                for i in l..=nu {
                    h[(i, i)] -= x;
                }
                let s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            iter += 1;
            iter_total += 1;

            // Look for two consecutive small subdiagonals.
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = h[(m, m)];
                let r0 = x - z;
                let s0 = y - z;
                p = (r0 * s0 - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r0 - s0;
                r = h[(m + 2, m + 1)];
                let s1 = p.abs() + q.abs() + r.abs();
                p /= s1;
                q /= s1;
                r /= s1;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR sweep over the block.
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                let mut s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(k, k - 1)] = -s * x;
                } else if l != m {
                    h[(k, k - 1)] = -h[(k, k - 1)];
                }
                p += s;
                let x2 = p / s;
                let y2 = q / s;
                let z2 = r / s;
                q /= p;
                r /= p;
                for j in k..=nu {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if notlast {
                        pp += r * h[(k + 2, j)];
                    }
                    h[(k, j)] -= pp * x2;
                    h[(k + 1, j)] -= pp * y2;
                    if notlast {
                        h[(k + 2, j)] -= pp * z2;
                    }
                }
                let imax = nu.min(k + 3);
                for i in l..=imax {
                    let mut pp = x2 * h[(i, k)] + y2 * h[(i, k + 1)];
                    if notlast {
                        pp += z2 * h[(i, k + 2)];
                    }
                    h[(i, k)] -= pp;
                    h[(i, k + 1)] -= pp * q;
                    if notlast {
                        h[(i, k + 2)] -= pp * r;
                    }
                }
            }
        }
    }
    Ok(d.into_iter().zip(e).collect())
}

/// Options for the product enumeration lower bound.
#[derive(Debug, Clone)]
pub struct LowerOpts {
    /// Longest word of matrix indices to consider.
    pub max_length: usize,
    /// Cap on enumerated words; exceeding it truncates the search.
    pub budget: usize,
}

impl Default for LowerOpts {
    fn default() -> Self {
        LowerOpts {
            max_length: 6,
            budget: 1 << 20,
        }
    }
}

/// Best product-based lower bound found, with the word that achieved it.
#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub value: f64,
    /// Matrix indices of the maximizing product, left factor first.
    pub witness_word: Vec<usize>,
    pub max_length: usize,
    /// True when the enumeration budget ran out before all words were seen.
    pub truncated: bool,
}

/// Lower bound on the joint spectral radius: max over words w of length
/// 1..=max_length of rho(A_w)^(1/|w|). Words equal under cyclic rotation
/// give the same value, so only lexicographically minimal rotations are
/// evaluated. Products are rescaled by their max entry as they grow, with
/// the log of the scale carried separately, so long words cannot overflow.
pub fn product_lower_bound(
    set: &[DMatrix<f64>],
    opts: &LowerOpts,
) -> Result<LowerBoundReport, SpectralError> {
    if set.is_empty() {
        return Err(SpectralError::EmptySet);
    }
    if opts.max_length == 0 {
        return Err(SpectralError::ZeroLength);
    }
    let m = set.len();

    let mut words: Vec<Vec<u8>> = Vec::new();
    let mut visited = 0usize;
    let mut truncated = false;
    'lengths: for k in 1..=opts.max_length {
        let mut w = vec![0u8; k];
        loop {
            visited += 1;
            if visited > opts.budget {
                truncated = true;
                break 'lengths;
            }
            if is_minimal_rotation(&w) {
                words.push(w.clone());
            }
            if !next_word(&mut w, m as u8) {
                break;
            }
        }
    }

    let growths: Vec<f64> = words
        .par_iter()
        .map(|w| word_growth(set, w))
        .collect::<Result<_, _>>()?;

    let mut best = 0usize;
    for (i, &g) in growths.iter().enumerate() {
        if g > growths[best] {
            best = i;
        }
    }
    Ok(LowerBoundReport {
        value: growths[best],
        witness_word: words[best].iter().map(|&b| b as usize).collect(),
        max_length: opts.max_length,
        truncated,
    })
}

/// rho(A_w)^(1/|w|) with running max-entry normalization.
fn word_growth(set: &[DMatrix<f64>], w: &[u8]) -> Result<f64, SpectralError> {
    let mut log_scale = 0.0f64;
    let mut prod = set[w[0] as usize].clone();
    for &idx in &w[1..] {
        match rescale(&mut prod) {
            Some(ls) => log_scale += ls,
            None => return Ok(0.0),
        }
        prod = &prod * &set[idx as usize];
    }
    match rescale(&mut prod) {
        Some(ls) => log_scale += ls,
        None => return Ok(0.0),
    }
    let rho = spectral_radius(&prod)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok(((rho.ln() + log_scale) / w.len() as f64).exp())
}

/// Divide by the max absolute entry; None for an exactly zero matrix.
fn rescale(m: &mut DMatrix<f64>) -> Option<f64> {
    let mx = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if mx == 0.0 {
        return None;
    }
    *m /= mx;
    Some(mx.ln())
}

fn is_minimal_rotation(w: &[u8]) -> bool {
    let k = w.len();
    for r in 1..k {
        for i in 0..k {
            let a = w[(r + i) % k];
            let b = w[i];
            if a < b {
                return false;
            }
            if a > b {
                break;
            }
        }
    }
    true
}

/// Advance a base-m counter; false once it wraps to all zeros.
fn next_word(w: &mut [u8], m: u8) -> bool {
    for pos in (0..w.len()).rev() {
        w[pos] += 1;
        if w[pos] < m {
            return true;
        }
        w[pos] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn radius(rows: &[&[f64]]) -> f64 {
        let n = rows.len();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        spectral_radius(&a).unwrap()
    }

    #[test]
    fn fibonacci_step_matrix_radius_matches_closed_form() {
        // Largest root of x^2 - 3x + 1, i.e. (3 + sqrt 5)/2.
        let expected = (3.0 + 5f64.sqrt()) / 2.0;
        let got = radius(&[&[2.0, 1.0], &[1.0, 1.0]]);
        assert!((got - expected).abs() <= 1e-9, "got {got}, want {expected}");
    }

    #[test]
    fn rotation_has_unit_radius() {
        let got = radius(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((got - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn shear_is_handled_without_iteration() {
        let got = radius(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!((got - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn triangular_radius_is_max_abs_diagonal() {
        let got = radius(&[
            &[-3.0, 5.0, 1.0],
            &[0.0, 2.0, -7.0],
            &[0.0, 0.0, 0.5],
        ]);
        assert!((got - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_and_scalar_matrices() {
        assert_eq!(radius(&[&[0.0]]), 0.0);
        assert_eq!(radius(&[&[-0.5]]), 0.5);
        assert_eq!(radius(&[&[0.5, 0.0], &[0.0, -0.25]]), 0.5);
        let z = DMatrix::zeros(4, 4);
        assert_eq!(spectral_radius(&z).unwrap(), 0.0);
    }

    #[test]
    fn moderate_random_matrix_converges() {
        let mut rng = crate::rng::Rng::from_seed(11);
        let a = DMatrix::from_fn(50, 50, |_, _| rng.symmetric_unit());
        let rho = spectral_radius(&a).unwrap();
        assert!(rho.is_finite() && rho > 0.0);
    }

    #[test]
    fn similarity_and_scaling_invariance() {
        let mut rng = crate::rng::Rng::from_seed(5);
        for trial in 0..30 {
            let n = 2 + (trial % 5);
            let a = DMatrix::from_fn(n, n, |_, _| 2.0 * rng.symmetric_unit());
            let rho = spectral_radius(&a).unwrap();
            let tol = 1e-9 * 1f64.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());

            // Permutation similarity.
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            let pa = DMatrix::from_fn(n, n, |i, j| a[(perm[i], perm[j])]);
            assert!((spectral_radius(&pa).unwrap() - rho).abs() <= tol);

            // Scalar scaling.
            let c = 3.0 * rng.symmetric_unit();
            let ca = &a * c;
            assert!((spectral_radius(&ca).unwrap() - c.abs() * rho).abs() <= tol.max(3.0 * tol));
        }
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let rect = DMatrix::zeros(2, 3);
        assert!(matches!(
            spectral_radius(&rect),
            Err(SpectralError::BadShape { .. })
        ));
        let bad = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(
            spectral_radius(&bad),
            Err(SpectralError::NonFinite { row: 0, col: 1 })
        ));
    }

    fn golden_pair() -> Vec<DMatrix<f64>> {
        vec![dmatrix![1.0, 1.0; 0.0, 1.0], dmatrix![1.0, 0.0; 1.0, 1.0]]
    }

    #[test]
    fn golden_pair_lower_bound_at_length_two() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let rep = product_lower_bound(
            &golden_pair(),
            &LowerOpts {
                max_length: 2,
                ..LowerOpts::default()
            },
        )
        .unwrap();
        assert!((rep.value - phi).abs() <= 1e-9, "got {}", rep.value);
        assert_eq!(rep.witness_word, vec![0, 1]);
        assert!(!rep.truncated);
    }

    #[test]
    fn golden_pair_longer_words_do_not_beat_oscillation() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let rep = product_lower_bound(&golden_pair(), &LowerOpts::default()).unwrap();
        assert!((rep.value - phi).abs() <= 1e-9);
    }

    #[test]
    fn witness_value_is_reproducible_from_the_word() {
        let set = golden_pair();
        let rep = product_lower_bound(&set, &LowerOpts::default()).unwrap();
        let mut prod = set[rep.witness_word[0]].clone();
        for &i in &rep.witness_word[1..] {
            prod = &prod * &set[i];
        }
        let direct = spectral_radius(&prod)
            .unwrap()
            .powf(1.0 / rep.witness_word.len() as f64);
        assert!((rep.value - direct).abs() <= 1e-12);
    }

    #[test]
    fn single_matrix_lower_bound_is_its_radius() {
        let a = dmatrix![2.0, 1.0; 1.0, 1.0];
        let rep = product_lower_bound(&[a.clone()], &LowerOpts::default()).unwrap();
        let rho = spectral_radius(&a).unwrap();
        assert!((rep.value - rho).abs() <= 1e-9);

        let scalar = dmatrix![0.5];
        let rep = product_lower_bound(
            &[scalar],
            &LowerOpts {
                max_length: 3,
                ..LowerOpts::default()
            },
        )
        .unwrap();
        assert!((rep.value - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn lower_bound_scales_with_the_set() {
        let a = dmatrix![0.3, -1.2; 0.8, 0.1];
        let base = product_lower_bound(&[a.clone()], &LowerOpts::default()).unwrap();
        let scaled = product_lower_bound(&[&a * -2.5], &LowerOpts::default()).unwrap();
        assert!((scaled.value - 2.5 * base.value).abs() <= 1e-9 * scaled.value.max(1.0));
    }

    #[test]
    fn budget_truncation_is_flagged() {
        let rep = product_lower_bound(
            &golden_pair(),
            &LowerOpts {
                max_length: 6,
                budget: 3,
            },
        )
        .unwrap();
        assert!(rep.truncated);
        assert!(rep.value > 0.0);
    }

    #[test]
    fn long_word_normalization_survives_large_scales() {
        // Entries around 1e8; an 8-long product would overflow naive powers
        // of the spectral radius if not rescaled.
        let a = dmatrix![1.0e8, 0.0; 0.0, 1.0e7];
        let rep = product_lower_bound(
            &[a],
            &LowerOpts {
                max_length: 8,
                ..LowerOpts::default()
            },
        )
        .unwrap();
        assert!((rep.value - 1.0e8).abs() / 1.0e8 <= 1e-9);
    }
}
