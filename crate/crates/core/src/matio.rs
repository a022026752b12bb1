//! Matrix-set data model, benchmark generators, and JSON I/O.
//!
//! Sets are stored in coordinate form; positions absent from an entry list
//! are zero. Files write floats in scientific notation with 17 significant
//! digits, enough for every f64 to round-trip bitwise. Generators draw from
//! the pinned stream in a fixed documented order, so a parameter/seed pair
//! names one matrix set forever, on any platform.

use std::io;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{BoundReport, Mode, RunStatus};
use crate::rng::Rng;
use crate::spectral;

#[derive(Debug, Error)]
pub enum MatIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("declared m={stated} but the file lists {actual} matrices")]
    CountMismatch { stated: usize, actual: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("a set needs at least one matrix")]
    EmptySet,
    #[error("matrix {mat}: entry ({row},{col}) out of range for dimension {n}")]
    IndexOutOfRange {
        mat: usize,
        row: usize,
        col: usize,
        n: usize,
    },
    #[error("matrix {mat}: duplicate entry at ({row},{col})")]
    DuplicateEntry { mat: usize, row: usize, col: usize },
    #[error("matrix {mat}: non-finite value at ({row},{col})")]
    NonFiniteValue { mat: usize, row: usize, col: usize },
    #[error("edge count {edges} exceeds the {max} off-diagonal positions of a {n}x{n} matrix")]
    TooManyEdges { edges: usize, max: usize, n: usize },
    #[error("matrices must share one square dimension")]
    MixedDimensions,
    #[error("plant draw degenerate after {attempts} attempts")]
    PlantDrawFailed { attempts: usize },
    #[error("no stabilizing gain found in {attempts} draws")]
    GainSearchFailed { attempts: usize },
    #[error("bad report field: {0}")]
    Schema(String),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
}

/// One sparse matrix: (row, col, value) entries sorted by (row, col).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooMatrix {
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    /// Coordinate form of a dense matrix; exact zeros are dropped.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        CooMatrix { entries }
    }

    pub fn dense(&self, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            a[(i, j)] = v;
        }
        a
    }
}

/// The set whose joint spectral radius is being bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSet {
    pub n: usize,
    pub matrices: Vec<CooMatrix>,
}

/// On-disk mirror; `m` is stored explicitly and checked against the list.
#[derive(Serialize, Deserialize)]
struct SetFile {
    n: usize,
    m: usize,
    matrices: Vec<CooMatrix>,
}

impl MatrixSet {
    pub fn new(n: usize, matrices: Vec<CooMatrix>) -> Result<Self, MatIoError> {
        let mut set = MatrixSet { n, matrices };
        set.normalize_and_validate()?;
        Ok(set)
    }

    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn from_dense(mats: &[DMatrix<f64>]) -> Result<Self, MatIoError> {
        if mats.is_empty() {
            return Err(MatIoError::EmptySet);
        }
        let n = mats[0].nrows();
        for a in mats {
            if a.nrows() != n || a.ncols() != n {
                return Err(MatIoError::MixedDimensions);
            }
        }
        MatrixSet::new(n, mats.iter().map(CooMatrix::from_dense).collect())
    }

    pub fn dense(&self, i: usize) -> DMatrix<f64> {
        self.matrices[i].dense(self.n)
    }

    pub fn dense_all(&self) -> Vec<DMatrix<f64>> {
        (0..self.m()).map(|i| self.dense(i)).collect()
    }

    /// Sorts entry lists and checks every structural invariant.
    fn normalize_and_validate(&mut self) -> Result<(), MatIoError> {
        if self.n == 0 {
            return Err(MatIoError::ZeroDimension);
        }
        if self.matrices.is_empty() {
            return Err(MatIoError::EmptySet);
        }
        let n = self.n;
        for (mi, mat) in self.matrices.iter_mut().enumerate() {
            mat.entries
                .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            for w in 0..mat.entries.len() {
                let (r, c, v) = mat.entries[w];
                if r >= n || c >= n {
                    return Err(MatIoError::IndexOutOfRange {
                        mat: mi,
                        row: r,
                        col: c,
                        n,
                    });
                }
                if !v.is_finite() {
                    return Err(MatIoError::NonFiniteValue {
                        mat: mi,
                        row: r,
                        col: c,
                    });
                }
                if w > 0 {
                    let (pr, pc, _) = mat.entries[w - 1];
                    if (pr, pc) == (r, c) {
                        return Err(MatIoError::DuplicateEntry {
                            mat: mi,
                            row: r,
                            col: c,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MatIoError> {
        to_json_17(&SetFile {
            n: self.n,
            m: self.m(),
            matrices: self.matrices.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, MatIoError> {
        let file: SetFile = serde_json::from_str(text)?;
        if file.m != file.matrices.len() {
            return Err(MatIoError::CountMismatch {
                stated: file.m,
                actual: file.matrices.len(),
            });
        }
        MatrixSet::new(file.n, file.matrices)
    }

    pub fn save(&self, path: &Path) -> Result<(), MatIoError> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MatIoError> {
        MatrixSet::from_json(&std::fs::read_to_string(path)?)
    }
}

/// C\[i\]\[j\] = sum over k ascending of A\[i\]\[k\]*B\[k\]\[j\]. The fixed
/// summation order is part of the generator contract: regenerating a control
/// set must reproduce the same bits anywhere, so this deliberately bypasses
/// whatever blocked multiply the linear-algebra backend would pick.
pub fn mul_naive(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, inner, cols) = (a.nrows(), a.ncols(), b.ncols());
    assert_eq!(inner, b.nrows());
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Each matrix gets `edges` off-diagonal positions chosen uniformly among
/// ordered pairs (i, j), i != j, with values uniform in [-1, 1]. Diagonals
/// stay zero (directed graph without self-loops), so at most n(n-1) edges
/// fit. Positions are chosen by a partial shuffle of the pair list, then
/// values are drawn in sorted position order.
pub fn random_sparse_set(
    n: usize,
    m: usize,
    edges: usize,
    seed: u64,
) -> Result<MatrixSet, MatIoError> {
    if n == 0 {
        return Err(MatIoError::ZeroDimension);
    }
    if m == 0 {
        return Err(MatIoError::EmptySet);
    }
    let max = n * (n - 1);
    if edges > max {
        return Err(MatIoError::TooManyEdges { edges, max, n });
    }
    let mut rng = Rng::from_seed(seed);
    let all_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut matrices = Vec::with_capacity(m);
    for _ in 0..m {
        let mut pairs = all_pairs.clone();
        for t in 0..edges {
            let other = t + rng.below(pairs.len() - t);
            pairs.swap(t, other);
        }
        let mut chosen = pairs[..edges].to_vec();
        chosen.sort_unstable();
        let entries = chosen
            .into_iter()
            .map(|(r, c)| (r, c, rng.symmetric_unit()))
            .collect();
        matrices.push(CooMatrix { entries });
    }
    MatrixSet::new(n, matrices)
}

/// The generating pieces behind a control benchmark set.
#[derive(Debug, Clone)]
pub struct ControlParts {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub a_h: DMatrix<f64>,
    pub a_m: DMatrix<f64>,
}

/// Networked-control benchmark: a plant x+ = Fx + Gu with state feedback
/// u = Kx over a lossy link. On a delivered packet the closed loop applies
/// A_H; on a dropped one the actuator holds its last input, A_M. The set
/// {A_H * A_M^i : 0 <= i < m} covers runs with up to m-1 consecutive drops
/// before a delivery; its JSR below 1 certifies stability of that regime.
///
/// Construction: F is a dense [-1,1] draw rescaled to spectral radius 1.05
/// (slightly unstable, so control is actually needed), G a dense [-1,1]
/// draw, and K is redrawn (up to 200 times) until the augmented closed loop
/// z = (x, u_prev) is a contraction in spectrum:
///
///   A_H = [[F, G], [K F, K G]]    A_M = [[F, G], [0, I]]
///
/// The product chain uses `mul_naive` so regeneration is bit-reproducible.
pub fn control_set(n_plant: usize, m: usize, seed: u64) -> Result<MatrixSet, MatIoError> {
    control_set_with_parts(n_plant, m, seed).map(|(set, _)| set)
}

/// `control_set`, additionally exposing F, G, K, A_H, A_M.
pub fn control_set_with_parts(
    n_plant: usize,
    m: usize,
    seed: u64,
) -> Result<(MatrixSet, ControlParts), MatIoError> {
    if n_plant == 0 {
        return Err(MatIoError::ZeroDimension);
    }
    if m == 0 {
        return Err(MatIoError::EmptySet);
    }
    let mut rng = Rng::from_seed(seed);

    let mut f = None;
    for _ in 0..64 {
        let raw = draw_square(&mut rng, n_plant);
        let rho = spectral::spectral_radius(&raw)?;
        if rho > 0.0 {
            f = Some(raw * (1.05 / rho));
            break;
        }
    }
    let f = f.ok_or(MatIoError::PlantDrawFailed { attempts: 64 })?;
    let g = draw_square(&mut rng, n_plant);

    let mut accepted = None;
    for _ in 0..200 {
        let k = draw_square(&mut rng, n_plant);
        let kf = mul_naive(&k, &f);
        let kg = mul_naive(&k, &g);
        let a_h = stacked_blocks(&f, &g, &kf, &kg);
        if spectral::spectral_radius(&a_h)? < 1.0 {
            accepted = Some((k, a_h));
            break;
        }
    }
    let (k, a_h) = accepted.ok_or(MatIoError::GainSearchFailed { attempts: 200 })?;

    let np = n_plant;
    let mut a_m = DMatrix::zeros(2 * np, 2 * np);
    for i in 0..np {
        for j in 0..np {
            a_m[(i, j)] = f[(i, j)];
            a_m[(i, np + j)] = g[(i, j)];
        }
        a_m[(np + i, np + i)] = 1.0;
    }

    let mut prods = Vec::with_capacity(m);
    prods.push(a_h.clone());
    for i in 1..m {
        let next = mul_naive(&prods[i - 1], &a_m);
        prods.push(next);
    }
    let set = MatrixSet::from_dense(&prods)?;
    Ok((set, ControlParts { f, g, k, a_h, a_m }))
}

/// Dense n x n draw, entries uniform in [-1, 1), row-major order.
fn draw_square(rng: &mut Rng, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = rng.symmetric_unit();
        }
    }
    a
}

/// \[\[tl, tr\], \[bl, br\]\] of equally sized square blocks.
fn stacked_blocks(
    tl: &DMatrix<f64>,
    tr: &DMatrix<f64>,
    bl: &DMatrix<f64>,
    br: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = tl.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = tl[(i, j)];
            out[(i, n + j)] = tr[(i, j)];
            out[(n + i, j)] = bl[(i, j)];
            out[(n + i, n + j)] = br[(i, j)];
        }
    }
    out
}

/// On-disk mirror of a bound report.
#[derive(Serialize, Deserialize)]
struct ReportFile {
    mode: String,
    d: u32,
    s: Option<u32>,
    lb: Option<f64>,
    ub: f64,
    mb: usize,
    n: usize,
    m: usize,
    tol: f64,
    iterations: usize,
    time_s: Option<f64>,
    status: String,
}

pub fn report_to_json(r: &BoundReport) -> Result<String, MatIoError> {
    to_json_17(&ReportFile {
        mode: r.mode.as_str().to_owned(),
        d: r.d,
        s: r.s,
        lb: r.lb,
        ub: r.ub,
        mb: r.mb,
        n: r.n,
        m: r.m,
        tol: r.tol,
        iterations: r.iterations,
        time_s: r.time_s,
        status: r.status.as_str().to_owned(),
    })
}

pub fn report_from_json(text: &str) -> Result<BoundReport, MatIoError> {
    let f: ReportFile = serde_json::from_str(text)?;
    let mode =
        Mode::parse(&f.mode).ok_or_else(|| MatIoError::Schema(format!("mode {:?}", f.mode)))?;
    let status = RunStatus::parse(&f.status)
        .ok_or_else(|| MatIoError::Schema(format!("status {:?}", f.status)))?;
    // The file keeps only the headline numbers; the in-memory diagnostics
    // are reconstructed as their empty defaults.
    Ok(BoundReport {
        mode,
        d: f.d,
        s: f.s,
        lb: f.lb,
        ub: f.ub,
        mb: f.mb,
        n: f.n,
        m: f.m,
        tol: f.tol,
        iterations: f.iterations,
        time_s: f.time_s,
        status,
        gamma_interval_final: (f.ub - f.tol, f.ub),
        per_step_status: Vec::new(),
        fallback_used: false,
        stabilized: false,
        box_hit: false,
    })
}

pub fn save_report(r: &BoundReport, path: &Path) -> Result<(), MatIoError> {
    let mut text = report_to_json(r)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<BoundReport, MatIoError> {
    report_from_json(&std::fs::read_to_string(path)?)
}

/// Writes every f64 as `{:.16e}`: 17 significant digits, the shortest count
/// that makes text round-trips bitwise for all doubles.
struct SciFloats;

impl serde_json::ser::Formatter for SciFloats {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if !value.is_finite() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "non-finite float"));
        }
        write!(writer, "{value:.16e}")
    }
}

pub(crate) fn to_json_17<T: Serialize>(value: &T) -> Result<String, MatIoError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFloats);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serializer emits utf-8"))
}
