//! Feasibility decisions for block-diagonal SDPs with free scalar variables.
//!
//! The question "does a PSD assignment satisfying these rows exist" is
//! answered through a max-slack reformulation: maximize t such that the rows
//! hold, every Gram block dominates t*I, t <= 1, and the free coefficients
//! stay inside a large box. The cap and the box make the maximum finite (the
//! underlying feasible sets are cones, so an uncapped slack could escape),
//! and the sign of the optimal t answers the original question with a
//! quantitative margin the bisection driver can act on.
//!
//! Substituting X = Q - t*I turns the problem into a standard conic program
//! in PSD blocks plus nonnegative box slacks, with (c, t) free. It is solved
//! by an infeasible-start primal-dual predictor-corrector method under
//! Nesterov-Todd scaling. Two structural facts keep the linear algebra
//! cheap: rows of different constraint groups never share a PSD block, so
//! the Schur complement is block-diagonal by group, and the free variables
//! are few, so they are folded in through a small dense reduced system.
//!
//! Everything is deterministic: fixed starting point, no randomized
//! pivoting, parallel work only where results land in disjoint slots.

use std::cell::RefCell;
use std::ops::Range;

use nalgebra::linalg::LU;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::sosprog::SdpProblem;
use crate::spectral;

/// Box half-width for the free coefficients. A certificate that genuinely
/// needs larger coefficients shows up as a hit on this box, which callers
/// should treat as suspect rather than as clean infeasibility.
pub const VAR_CAP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Feasible,
    Infeasible,
    Indeterminate,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    pub max_eq_violation: f64,
    pub min_block_eig: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    /// Optimal uniform eigenvalue slack, capped at 1.
    pub t_star: f64,
    /// Gram blocks Q = X + t*I of the returned point.
    pub block_values: Vec<DMatrix<f64>>,
    pub free_values: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Some free variable ended within 0.1% of the box; infeasibility
    /// conclusions are then suspect.
    pub box_hit: bool,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Tols {
    pub feas_tol: f64,
    pub eq_tol: f64,
    pub max_iters: usize,
    /// Allow returning as soon as a verified certificate or a strong dual
    /// bound appears, without polishing t to optimality. The bisection
    /// driver enables this; leave off when the exact slack matters.
    pub early_exit: bool,
    pub log: bool,
}

impl Tols {
    /// Defaults scaled by the row right-hand sides, no environment lookups.
    pub fn defaults_for(p: &SdpProblem) -> Tols {
        Self::with_coeffs(p, 1e-8, 1e-8, 200, false)
    }

    /// Explicit coefficients in place of the 1e-8 defaults, still scaled by
    /// the row right-hand sides, no environment lookups.
    pub fn scaled_for(p: &SdpProblem, feas_coeff: f64, eq_coeff: f64, max_iters: usize) -> Tols {
        Self::with_coeffs(p, feas_coeff, eq_coeff, max_iters, false)
    }

    /// Defaults with `SPARSEJSR_FEASTOL`, `SPARSEJSR_EQTOL`,
    /// `SPARSEJSR_MAXITERS`, and `SPARSEJSR_IPM_LOG` applied. The two
    /// tolerance variables replace the 1e-8 scale coefficient, not the
    /// final absolute value.
    pub fn for_problem(p: &SdpProblem) -> Tols {
        let fc = env_f64("SPARSEJSR_FEASTOL").unwrap_or(1e-8);
        let ec = env_f64("SPARSEJSR_EQTOL").unwrap_or(1e-8);
        let mi = std::env::var("SPARSEJSR_MAXITERS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(200);
        let log = std::env::var("SPARSEJSR_IPM_LOG").is_ok_and(|v| v == "1");
        Self::with_coeffs(p, fc, ec, mi, log)
    }

    fn with_coeffs(p: &SdpProblem, fc: f64, ec: f64, max_iters: usize, log: bool) -> Tols {
        let scale = 1.0
            + p.rows
                .iter()
                .map(|r| r.rhs.abs())
                .fold(0.0_f64, f64::max);
        Tols {
            feas_tol: fc * scale,
            eq_tol: ec * scale,
            max_iters,
            early_exit: false,
            log,
        }
    }
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

/// Recomputes what a claimed solution actually achieves: the largest
/// equality violation over the problem rows and the smallest eigenvalue over
/// the symmetrized Gram blocks (through the eigenvalue machinery, not the
/// solver's own internals).
pub fn verify_certificate(p: &SdpProblem, blocks: &[DMatrix<f64>], free: &[f64]) -> Residuals {
    let mut max_eq = 0.0_f64;
    for row in &p.rows {
        let mut v = -row.rhs;
        for t in &row.blocks {
            v += t.w * blocks[t.block][(t.i, t.j)];
        }
        for &(var, w) in &row.vars {
            v += w * free[var];
        }
        max_eq = max_eq.max(v.abs());
    }
    let mut min_eig = f64::INFINITY;
    for q in blocks {
        if q.nrows() == 0 {
            continue;
        }
        let sym = (q + q.transpose()) * 0.5;
        match spectral::eigenvalues(&sym) {
            Ok(eigs) => {
                for (re, _) in eigs {
                    min_eig = min_eig.min(re);
                }
            }
            Err(_) => {
                min_eig = f64::NEG_INFINITY;
            }
        }
    }
    Residuals {
        max_eq_violation: max_eq,
        min_block_eig: min_eig,
    }
}

/// Projects candidate Gram blocks exactly onto the equality rows. Each Gram
/// entry belongs to exactly one row, so the least-squares correction is
/// closed-form and per-row; free variables are left untouched. A solution
/// whose only defect is roundoff amplified by large coefficients becomes
/// row-exact, at the price of an eigenvalue shift no larger than the
/// violation being removed, which a later PSD check still has to cover.
pub fn project_onto_rows(p: &SdpProblem, blocks: &mut [DMatrix<f64>], free: &[f64]) {
    for row in &p.rows {
        let mut viol = -row.rhs;
        for t in &row.blocks {
            viol += t.w * blocks[t.block][(t.i, t.j)];
        }
        for &(var, w) in &row.vars {
            viol += w * free[var];
        }
        if viol == 0.0 || !viol.is_finite() {
            continue;
        }
        let mut denom = 0.0;
        for t in &row.blocks {
            let cost = if t.i == t.j { 1.0 } else { 2.0 };
            denom += t.w * t.w / cost;
        }
        if denom <= 0.0 {
            continue;
        }
        for t in &row.blocks {
            let cost = if t.i == t.j { 1.0 } else { 2.0 };
            let delta = -viol * (t.w / cost) / denom;
            blocks[t.block][(t.i, t.j)] += delta;
            if t.i != t.j {
                blocks[t.block][(t.j, t.i)] += delta;
            }
        }
    }
}

/// Index layout of the augmented problem.
///
/// Row order: the problem's own rows first (t enters them with its trace
/// weight), then per free variable the two box rows c/CAP + u = 1 and
/// -c/CAP + w = 1, then the cap row t + r = 1. Cone order: the PSD blocks,
/// then the scalars u_0..u_{V-1}, w_0..w_{V-1}, r.
struct Layout {
    sizes: Vec<usize>,
    nscal: usize,
    nfree: usize,
    t_col: usize,
    r_jsr: usize,
    m_rows: usize,
    nu: f64,
    /// Per block: rows touching it, with that block's local terms.
    block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// Sparse free columns over all rows.
    fcols: Vec<Vec<(usize, f64)>>,
    b: DVector<f64>,
    bnorm: f64,
    /// Contiguous problem-row ranges whose blocks are disjoint.
    group_rows: Vec<Range<usize>>,
    group_blocks: Vec<Range<usize>>,
}

impl Layout {
    fn build(p: &SdpProblem) -> Result<Layout, String> {
        let sizes = p.block_sizes.clone();
        let nblocks = sizes.len();
        let nfree_c = p.num_free;
        let nfree = nfree_c + 1;
        let t_col = nfree_c;
        let r_jsr = p.rows.len();
        let nscal = 2 * nfree_c + 1;
        let m_rows = r_jsr + nscal;

        let mut block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> =
            vec![Vec::new(); nblocks];
        let mut fcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nfree];
        let mut b = DVector::zeros(m_rows);

        for (rho, row) in p.rows.iter().enumerate() {
            b[rho] = row.rhs;
            let mut tau = 0.0;
            let mut per_block: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
            for t in &row.blocks {
                if t.block >= nblocks || t.i > t.j || t.j >= sizes[t.block] {
                    return Err(format!("row {rho} references a bad block entry"));
                }
                if t.i == t.j {
                    tau += t.w;
                }
                match per_block.iter_mut().find(|(bk, _)| *bk == t.block) {
                    Some((_, terms)) => terms.push((t.i, t.j, t.w)),
                    None => per_block.push((t.block, vec![(t.i, t.j, t.w)])),
                }
            }
            if per_block.is_empty() {
                return Err(format!(
                    "row {rho} has no Gram entries; the slack formulation needs every row anchored to a block"
                ));
            }
            for (bk, terms) in per_block {
                block_rows[bk].push((rho, terms));
            }
            for &(var, w) in &row.vars {
                if var >= nfree_c {
                    return Err(format!("row {rho} references unknown variable {var}"));
                }
                fcols[var].push((rho, w));
            }
            if tau != 0.0 {
                fcols[t_col].push((rho, tau));
            }
        }
        for v in 0..nfree_c {
            let ru = r_jsr + 2 * v;
            fcols[v].push((ru, 1.0 / VAR_CAP));
            fcols[v].push((ru + 1, -1.0 / VAR_CAP));
            b[ru] = 1.0;
            b[ru + 1] = 1.0;
        }
        let cap = r_jsr + 2 * nfree_c;
        fcols[t_col].push((cap, 1.0));
        b[cap] = 1.0;

        // Group detection: contiguous runs of rows whose blocks are
        // contiguous and disjoint between runs. When the bookkeeping does
        // not line up, a single group covering everything is still correct.
        let mut group_rows = Vec::new();
        let mut group_blocks = Vec::new();
        let mut ok = true;
        {
            let mut row_start = 0;
            let mut blk_start = 0;
            let mut i = 0;
            while i < r_jsr && ok {
                let g = p.rows[i].group;
                let mut j = i;
                let mut max_blk = blk_start;
                while j < r_jsr && p.rows[j].group == g {
                    for t in &p.rows[j].blocks {
                        if t.block < blk_start {
                            ok = false;
                        }
                        max_blk = max_blk.max(t.block + 1);
                    }
                    j += 1;
                }
                group_rows.push(row_start..j);
                group_blocks.push(blk_start..max_blk);
                row_start = j;
                blk_start = max_blk;
                i = j;
            }
            if ok {
                // Later groups must not reach back into earlier blocks.
                for (gi, rr) in group_rows.iter().enumerate() {
                    for rho in rr.clone() {
                        for t in &p.rows[rho].blocks {
                            if !group_blocks[gi].contains(&t.block) {
                                ok = false;
                            }
                        }
                    }
                }
            }
        }
        if !ok || group_rows.is_empty() {
            group_rows = vec![0..r_jsr];
            group_blocks = vec![0..nblocks];
        }

        let nu = sizes.iter().sum::<usize>() as f64 + nscal as f64;
        let bnorm = b.amax();
        Ok(Layout {
            sizes,
            nscal,
            nfree,
            t_col,
            r_jsr,
            m_rows,
            nu,
            block_rows,
            fcols,
            b,
            bnorm,
            group_rows,
            group_blocks,
        })
    }

    /// A x over the cone variables (no free part).
    fn apply_a(&self, blocks: &[DMatrix<f64>], scal: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m_rows);
        for (bk, rows) in self.block_rows.iter().enumerate() {
            let x = &blocks[bk];
            for (rho, terms) in rows {
                let mut v = 0.0;
                for &(i, j, w) in terms {
                    v += w * x[(i, j)];
                }
                out[*rho] += v;
            }
        }
        for k in 0..self.nscal {
            out[self.r_jsr + k] += scal[k];
        }
        out
    }

    /// A' y back into cone space.
    fn apply_at(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let blocks: Vec<DMatrix<f64>> = self
            .block_rows
            .par_iter()
            .enumerate()
            .map(|(bk, rows)| {
                let nb = self.sizes[bk];
                let mut m = DMatrix::zeros(nb, nb);
                for (rho, terms) in rows {
                    let yv = y[*rho];
                    if yv == 0.0 {
                        continue;
                    }
                    for &(i, j, w) in terms {
                        if i == j {
                            m[(i, i)] += w * yv;
                        } else {
                            m[(i, j)] += 0.5 * w * yv;
                            m[(j, i)] += 0.5 * w * yv;
                        }
                    }
                }
                m
            })
            .collect();
        let mut scal = DVector::zeros(self.nscal);
        for k in 0..self.nscal {
            scal[k] = y[self.r_jsr + k];
        }
        (blocks, scal)
    }

    fn apply_f(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m_rows);
        for (col, terms) in self.fcols.iter().enumerate() {
            let fv = f[col];
            if fv == 0.0 {
                continue;
            }
            for &(row, w) in terms {
                out[row] += w * fv;
            }
        }
        out
    }

    /// b - A(x) - F(f), accumulated in compensated arithmetic: near the
    /// central path's end the summands dwarf the residual they cancel to.
    fn residual_p(
        &self,
        blocks: &[DMatrix<f64>],
        scal: &DVector<f64>,
        f: &DVector<f64>,
    ) -> DVector<f64> {
        let mut s = self.b.clone();
        let mut c = DVector::zeros(self.m_rows);
        for (bk, rows) in self.block_rows.iter().enumerate() {
            let x = &blocks[bk];
            for (rho, terms) in rows {
                for &(i, j, w) in terms {
                    let p = w * x[(i, j)];
                    let e = w.mul_add(x[(i, j)], -p);
                    two_sum(&mut s[*rho], &mut c[*rho], -p);
                    c[*rho] -= e;
                }
            }
        }
        for (col, terms) in self.fcols.iter().enumerate() {
            let fv = f[col];
            if fv == 0.0 {
                continue;
            }
            for &(row, w) in terms {
                let p = w * fv;
                let e = w.mul_add(fv, -p);
                two_sum(&mut s[row], &mut c[row], -p);
                c[row] -= e;
            }
        }
        for k in 0..self.nscal {
            two_sum(&mut s[self.r_jsr + k], &mut c[self.r_jsr + k], -scal[k]);
        }
        DVector::from_fn(self.m_rows, |i, _| s[i] + c[i])
    }

    /// q - F'y in compensated arithmetic, shared by the dual residual on
    /// the free columns and the step refinement's second residual.
    fn residual_ft(&self, q: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nfree);
        for (col, terms) in self.fcols.iter().enumerate() {
            let mut s = q[col];
            let mut c = 0.0;
            for &(row, w) in terms {
                let p = w * y[row];
                let e = w.mul_add(y[row], -p);
                two_sum(&mut s, &mut c, -p);
                c -= e;
            }
            out[col] = s + c;
        }
        out
    }

    /// rd - A'y entrywise with compensated products, for the dual step:
    /// the multipliers' step can carry magnitudes that would otherwise
    /// round away the residual the step must preserve.
    fn sub_at(
        &self,
        rdb: &[DMatrix<f64>],
        rds: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let blocks: Vec<DMatrix<f64>> = self
            .block_rows
            .par_iter()
            .enumerate()
            .map(|(bk, rows)| {
                let nb = self.sizes[bk];
                let mut s = rdb[bk].clone();
                let mut c = DMatrix::zeros(nb, nb);
                for (rho, terms) in rows {
                    let yv = y[*rho];
                    if yv == 0.0 {
                        continue;
                    }
                    for &(i, j, w) in terms {
                        if i == j {
                            let p = w * yv;
                            let e = w.mul_add(yv, -p);
                            two_sum(&mut s[(i, i)], &mut c[(i, i)], -p);
                            c[(i, i)] -= e;
                        } else {
                            let wh = 0.5 * w;
                            let p = wh * yv;
                            let e = wh.mul_add(yv, -p);
                            two_sum(&mut s[(i, j)], &mut c[(i, j)], -p);
                            c[(i, j)] -= e;
                            two_sum(&mut s[(j, i)], &mut c[(j, i)], -p);
                            c[(j, i)] -= e;
                        }
                    }
                }
                s.zip_apply(&c, |si, ci| *si += ci);
                s
            })
            .collect();
        let mut scal = DVector::zeros(self.nscal);
        for k in 0..self.nscal {
            scal[k] = rds[k] - y[self.r_jsr + k];
        }
        (blocks, scal)
    }
}

#[inline]
fn two_sum(s: &mut f64, c: &mut f64, v: f64) {
    let t = *s + v;
    *c += if s.abs() >= v.abs() {
        (*s - t) + v
    } else {
        (v - t) + *s
    };
    *s = t;
}

/// Nesterov-Todd scaling of one PSD block: factors r with X = r diag(lam) r'
/// and S = r^-T diag(lam) r^-1, so both map to the same diagonal scaled
/// point lam.
struct BlockScale {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    /// Quadratic form r r' applied as W M W.
    w: DMatrix<f64>,
    lam: DVector<f64>,
    lx: DMatrix<f64>,
    ls: DMatrix<f64>,
}

struct Scaling {
    blocks: Vec<BlockScale>,
    /// Scalar NT weights sqrt(x/s).
    wscal: DVector<f64>,
    lamscal: DVector<f64>,
}

fn nt_scaling(
    xb: &[DMatrix<f64>],
    sb: &[DMatrix<f64>],
    xs: &DVector<f64>,
    ss: &DVector<f64>,
) -> Result<Scaling, String> {
    let blocks: Result<Vec<BlockScale>, String> = xb
        .par_iter()
        .zip(sb.par_iter())
        .map(|(x, s)| {
            let n = x.nrows();
            let lx = Cholesky::new(x.clone())
                .ok_or("primal block left the cone")?
                .l();
            let ls = Cholesky::new(s.clone())
                .ok_or("dual block left the cone")?
                .l();
            let svd = (ls.transpose() * &lx).svd(true, true);
            let u = svd.u.as_ref().ok_or("scaling svd failed")?;
            let vt = svd.v_t.as_ref().ok_or("scaling svd failed")?;
            let _ = u;
            let mut lam = DVector::zeros(n);
            for i in 0..n {
                lam[i] = svd.singular_values[i].max(1e-154);
            }
            // r = Lx V lam^-1/2, r^-1 = lam^1/2 V' Lx^-1.
            let mut r = &lx * vt.transpose();
            for j in 0..n {
                let c = 1.0 / lam[j].sqrt();
                r.column_mut(j).scale_mut(c);
            }
            let lxi = lx
                .clone()
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or("singular Cholesky factor")?;
            let mut rinv = vt * lxi;
            for i in 0..n {
                let c = lam[i].sqrt();
                rinv.row_mut(i).scale_mut(c);
            }
            let w = &r * r.transpose();
            Ok(BlockScale {
                r,
                rinv,
                w,
                lam,
                lx,
                ls,
            })
        })
        .collect();
    let blocks = blocks?;
    let n = xs.len();
    let mut wscal = DVector::zeros(n);
    let mut lamscal = DVector::zeros(n);
    for i in 0..n {
        if xs[i] <= 0.0 || ss[i] <= 0.0 {
            return Err("scalar left the cone".into());
        }
        wscal[i] = (xs[i] / ss[i]).sqrt();
        lamscal[i] = (xs[i] * ss[i]).sqrt();
    }
    Ok(Scaling {
        blocks,
        wscal,
        lamscal,
    })
}

/// Schur complement A W A' factored per group plus the scalar diagonal.
/// The unfactored blocks are kept so solves can be refined against the
/// true matrix; the factors may carry a stabilising shift.
struct SchurFactor {
    chols: Vec<Cholesky<f64, Dyn>>,
    mats: Vec<DMatrix<f64>>,
    diag: DVector<f64>,
}

fn schur_factor(layout: &Layout, sc: &Scaling) -> Result<SchurFactor, String> {
    let pairs: Result<Vec<_>, String> = layout
        .group_rows
        .par_iter()
        .zip(layout.group_blocks.par_iter())
        .map(|(rows, blks)| {
            let g0 = rows.start;
            let gn = rows.len();
            let mut m = DMatrix::zeros(gn, gn);
            for bk in blks.clone() {
                let w = &sc.blocks[bk].w;
                let brows = &layout.block_rows[bk];
                for (ia, (ra, ta)) in brows.iter().enumerate() {
                    // t = W A_ra W restricted to this block, via rank-one
                    // pieces of W's columns.
                    let nb = layout.sizes[bk];
                    let mut t = DMatrix::zeros(nb, nb);
                    for &(i, j, wt) in ta {
                        if i == j {
                            t.ger(wt, &w.column(i), &w.column(i), 1.0);
                        } else {
                            t.ger(0.5 * wt, &w.column(i), &w.column(j), 1.0);
                            t.ger(0.5 * wt, &w.column(j), &w.column(i), 1.0);
                        }
                    }
                    for (rb, tb) in &brows[ia..] {
                        let mut v = 0.0;
                        for &(i, j, wt) in tb {
                            v += wt * t[(i, j)];
                        }
                        m[(ra - g0, rb - g0)] += v;
                        if rb != ra {
                            m[(rb - g0, ra - g0)] += v;
                        }
                    }
                }
            }
            let mut reg = 0.0;
            let base = 1e-13 * (1.0 + m.diagonal().amax());
            for _ in 0..4 {
                let mut mm = m.clone();
                if reg > 0.0 {
                    for i in 0..gn {
                        mm[(i, i)] += reg;
                    }
                }
                if let Some(c) = Cholesky::new(mm) {
                    return Ok((c, m));
                }
                reg = if reg == 0.0 { base } else { reg * 100.0 };
            }
            Err("Schur block is not positive definite".to_string())
        })
        .collect();
    let (chols, mats) = pairs?.into_iter().unzip();
    let mut diag = DVector::zeros(layout.nscal);
    for i in 0..layout.nscal {
        diag[i] = sc.wscal[i] * sc.wscal[i];
    }
    Ok(SchurFactor { chols, mats, diag })
}

impl SchurFactor {
    fn solve(&self, layout: &Layout, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for (g, rows) in layout.group_rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let seg = DVector::from(out.rows(rows.start, rows.len()).clone_owned());
            let mut sol = self.chols[g].solve(&seg);
            // Refine against the unshifted matrix; near the central path's
            // end the scaling spread eats most of the factor's accuracy.
            for _ in 0..2 {
                let r = &seg - &self.mats[g] * &sol;
                if r.amax() <= 1e-14 * (1.0 + seg.amax()) {
                    break;
                }
                sol += self.chols[g].solve(&r);
            }
            out.rows_mut(rows.start, rows.len()).copy_from(&sol);
        }
        for i in 0..layout.nscal {
            out[layout.r_jsr + i] /= self.diag[i];
        }
        out
    }

    fn apply(&self, layout: &Layout, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for (g, rows) in layout.group_rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let seg = DVector::from(v.rows(rows.start, rows.len()).clone_owned());
            out.rows_mut(rows.start, rows.len())
                .copy_from(&(&self.mats[g] * seg));
        }
        for i in 0..layout.nscal {
            out[layout.r_jsr + i] *= self.diag[i];
        }
        out
    }
}

/// Solver for the free-variable reduced system, with a clamped spectral
/// route for the iterations where roundoff swamps the assembled matrix.
enum GSolve {
    Chol(Cholesky<f64, Dyn>),
    Eig { q: DMatrix<f64>, inv: DVector<f64> },
}

impl GSolve {
    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            GSolve::Chol(c) => c.solve(v),
            GSolve::Eig { q, inv } => {
                let mut w = q.transpose() * v;
                for i in 0..w.len() {
                    w[i] *= inv[i];
                }
                q * w
            }
        }
    }
}

/// Largest step keeping x + alpha dx in the cone, through the Cholesky
/// factor of x.
fn max_step_block(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let y = match l.solve_lower_triangular(dx) {
        Some(y) => y,
        None => return 0.0,
    };
    let b = match l.solve_lower_triangular(&y.transpose()) {
        Some(b) => b.transpose(),
        None => return 0.0,
    };
    let bs = (&b + b.transpose()) * 0.5;
    let eigs = SymmetricEigen::new(bs).eigenvalues;
    let mn = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    if mn >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / mn
    }
}

fn max_step_scal(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            a = a.min(-x[i] / dx[i]);
        }
    }
    a
}

struct Direction {
    dxb: Vec<DMatrix<f64>>,
    dxs: DVector<f64>,
    dy: DVector<f64>,
    dsb: Vec<DMatrix<f64>>,
    dss: DVector<f64>,
    df: DVector<f64>,
}

/// Fallback certificate candidate: the interior iterate whose slack stands
/// furthest clear of its own equality violation.
struct Snapshot {
    score: f64,
    xb: Vec<DMatrix<f64>>,
    f: DVector<f64>,
}

pub fn solve_feasibility(p: &SdpProblem, tols: &Tols) -> SdpSolution {
    let empty = |status: Status, t: f64, msg: String| SdpSolution {
        status,
        t_star: t,
        block_values: p
            .block_sizes
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect(),
        free_values: vec![0.0; p.num_free],
        residuals: Residuals {
            max_eq_violation: f64::INFINITY,
            min_block_eig: f64::NEG_INFINITY,
        },
        iterations: 0,
        box_hit: false,
        message: msg,
    };
    if p.rows.is_empty() {
        let mut sol = empty(Status::Feasible, 1.0, "no rows".into());
        sol.residuals = Residuals {
            max_eq_violation: 0.0,
            min_block_eig: f64::INFINITY,
        };
        for q in &mut sol.block_values {
            q.fill_with_identity();
        }
        return sol;
    }
    let layout = match Layout::build(p) {
        Ok(l) => l,
        Err(e) => return empty(Status::Indeterminate, f64::NAN, e),
    };

    // Starting point: identity blocks, unit scalars except the cap slack,
    // zero duals, zero coefficients, t = -1. The box and cap rows hold
    // exactly at this point.
    let mut xb: Vec<DMatrix<f64>> = layout
        .sizes
        .iter()
        .map(|&n| DMatrix::identity(n, n))
        .collect();
    let mut sb = xb.clone();
    let mut xs = DVector::from_element(layout.nscal, 1.0);
    xs[layout.nscal - 1] = 2.0;
    let mut ss = DVector::from_element(layout.nscal, 1.0);
    let mut y = DVector::zeros(layout.m_rows);
    let mut f = DVector::zeros(layout.nfree);
    f[layout.t_col] = -1.0;

    let mut q = DVector::zeros(layout.nfree);
    q[layout.t_col] = -1.0;

    let finish = |status: Status,
                  xb: &[DMatrix<f64>],
                  f: &DVector<f64>,
                  iters: usize,
                  msg: String| {
        let t = f[layout.t_col];
        let mut qb: Vec<DMatrix<f64>> = xb.to_vec();
        for b in &mut qb {
            for i in 0..b.nrows() {
                b[(i, i)] += t;
            }
        }
        let free: Vec<f64> = (0..p.num_free).map(|v| f[v]).collect();
        // Large witnesses leave equality residuals far above what absolute
        // tolerances accept even at full convergence; snapping the blocks
        // onto the rows makes the reported certificate exact there, and the
        // verifier then judges only whether the PSD margin survived.
        project_onto_rows(p, &mut qb, &free);
        let residuals = verify_certificate(p, &qb, &free);
        let box_hit = free.iter().any(|c| c.abs() >= 0.999 * VAR_CAP);
        SdpSolution {
            status,
            t_star: t,
            block_values: qb,
            free_values: free,
            residuals,
            iterations: iters,
            box_hit,
            message: msg,
        }
    };

    // Classification thresholds per the module contract.
    let classify = |t: f64| {
        if t >= -tols.feas_tol {
            Status::Feasible
        } else if t <= -10.0 * tols.feas_tol {
            Status::Infeasible
        } else {
            Status::Indeterminate
        }
    };
    let certify = |xb: &[DMatrix<f64>], f: &DVector<f64>, iters: usize, note: &str| {
        let status = classify(f[layout.t_col]);
        let sol = finish(status, xb, f, iters, note.to_string());
        match status {
            Status::Feasible => {
                if sol.residuals.max_eq_violation <= tols.eq_tol
                    && sol.residuals.min_block_eig >= -tols.feas_tol
                {
                    sol
                } else {
                    SdpSolution {
                        status: Status::Indeterminate,
                        message: format!(
                            "certificate check disagreed (eq {:.3e}, eig {:.3e})",
                            sol.residuals.max_eq_violation, sol.residuals.min_block_eig
                        ),
                        ..sol
                    }
                }
            }
            _ => sol,
        }
    };
    // A numerical breakdown can strike while the iterate already carries a
    // positive slack; the projected point is then a complete certificate in
    // its own right, worth salvaging before giving up. Only a verified
    // Feasible outcome counts: a non-converged iterate proves nothing else.
    // When the current point is past saving, fall back to the best interior
    // iterate seen along the way (largest slack net of its row violation).
    let certify_or_snap = |xb: &[DMatrix<f64>],
                           f: &DVector<f64>,
                           iters: usize,
                           note: &str,
                           snap: Option<&Snapshot>| {
        let sol = certify(xb, f, iters, note);
        if sol.status == Status::Indeterminate {
            if let Some(s) = snap {
                let back = certify(
                    &s.xb,
                    &s.f,
                    iters,
                    &format!("{note}; recovered an earlier interior iterate"),
                );
                if back.status == Status::Feasible {
                    return back;
                }
            }
        }
        sol
    };
    let rescue = |xb: &[DMatrix<f64>],
                  f: &DVector<f64>,
                  iters: usize,
                  note: &str,
                  snap: Option<&Snapshot>| {
        let sol = certify_or_snap(xb, f, iters, note, snap);
        (sol.status == Status::Feasible).then_some(sol)
    };

    let mut best: Option<Snapshot> = None;
    let mut pres0 = f64::NAN;
    let mut stalls = 0usize;
    for iter in 0..tols.max_iters {
        // Residuals of the augmented system.
        let rp = layout.residual_p(&xb, &xs, &f);
        let (atyb, atys) = layout.apply_at(&y);
        let rdb: Vec<DMatrix<f64>> = sb.iter().zip(&atyb).map(|(s, a)| -s - a).collect();
        let rds = -&ss - atys;
        let rf = layout.residual_ft(&q, &y);

        let rp_inf = rp.amax();
        let rd_inf = rdb
            .iter()
            .map(|m| if m.is_empty() { 0.0 } else { m.amax() })
            .fold(rds.amax(), f64::max);
        let rf_inf = rf.amax();
        let gap = xb
            .iter()
            .zip(&sb)
            .map(|(a, b)| a.dot(b))
            .sum::<f64>()
            + xs.dot(&ss);
        let pobj = -f[layout.t_col];
        let dobj = layout.b.dot(&y);
        let pres = rp_inf / (1.0 + layout.bnorm);
        let dres = (rd_inf.max(rf_inf)) / 2.0;
        let relgap = gap / (1.0 + pobj.abs() + dobj.abs());
        let t_now = f[layout.t_col];

        if !pres.is_finite() || !dres.is_finite() || !relgap.is_finite() {
            return finish(
                Status::Indeterminate,
                &xb,
                &f,
                iter,
                "numerical breakdown: non-finite residuals".into(),
            );
        }
        if tols.log {
            eprintln!(
                "ipm iter {iter:3} pres {pres:9.3e} dres {dres:9.3e} relgap {relgap:9.3e} t {t_now:12.6e}"
            );
        }
        if iter == 0 {
            pres0 = pres;
        }

        // Remember the most promising interior point: the row-projection
        // polish shifts eigenvalues by about the violation, so a slack is
        // only bankable once it clears that shift with room to spare.
        let score = t_now - 10.0 * rp_inf;
        if score > 0.0 && best.as_ref().map_or(true, |b| score > b.score) {
            best = Some(Snapshot {
                score,
                xb: xb.clone(),
                f: f.clone(),
            });
        }

        // Once the primal residual has blown up by orders of magnitude the
        // endgame is lost; salvage what the trajectory already earned.
        if pres > 1e4 && pres > 1e3 * (1.0 + pres0) {
            let note = "salvaged certificate after the primal residual diverged";
            if let Some(sol) = rescue(&xb, &f, iter, note, best.as_ref()) {
                return sol;
            }
            return finish(
                Status::Indeterminate,
                &xb,
                &f,
                iter,
                format!("primal residual diverged (pres {pres:.3e})"),
            );
        }

        if pres <= 1e-10 && dres <= 1e-10 && relgap <= 1e-10 {
            return certify_or_snap(&xb, &f, iter, "converged", best.as_ref());
        }
        // Clearly infeasible instances end with growing multipliers pinning
        // the dual residual to a rounding floor, so the full trio above is
        // out of reach. Once the primal side is essentially feasible and
        // the slack's magnitude dwarfs every remaining error term, the
        // verdict cannot change any more.
        if pres <= 1e-6 {
            let slack_err = gap + 10.0 * (dres + pres);
            if t_now <= -(10.0 * tols.feas_tol + slack_err) {
                return finish(
                    Status::Infeasible,
                    &xb,
                    &f,
                    iter,
                    format!(
                        "converged to an infeasibility margin beyond the residual error \
                         ({slack_err:.3e})"
                    ),
                );
            }
        }
        if tols.early_exit {
            if t_now >= 10.0 * tols.feas_tol && rp_inf <= 0.1 * tols.eq_tol {
                let sol = certify(&xb, &f, iter, "early feasible exit");
                if sol.status == Status::Feasible {
                    return sol;
                }
            }
            if rd_inf.max(rf_inf) <= 1e-2 * tols.feas_tol && dobj >= 10.0 * tols.feas_tol {
                // Weak duality: any near-feasible dual point bounds the
                // optimal slack by -b'y.
                let mut sol = finish(Status::Infeasible, &xb, &f, iter, "early dual bound".into());
                sol.t_star = -dobj;
                return sol;
            }
        }

        let mu = gap / layout.nu;
        if mu <= 0.0 {
            return certify_or_snap(&xb, &f, iter, "complementarity collapsed", best.as_ref());
        }

        let sc = match nt_scaling(&xb, &sb, &xs, &ss) {
            Ok(s) => s,
            Err(e) => {
                let note = format!("salvaged certificate at a breakdown: {e}");
                if let Some(sol) = rescue(&xb, &f, iter, &note, best.as_ref()) {
                    return sol;
                }
                return finish(
                    Status::Indeterminate,
                    &xb,
                    &f,
                    iter,
                    format!("numerical breakdown: {e}"),
                );
            }
        };
        let schur = match schur_factor(&layout, &sc) {
            Ok(s) => s,
            Err(e) => {
                let note = format!("salvaged certificate at a breakdown: {e}");
                if let Some(sol) = rescue(&xb, &f, iter, &note, best.as_ref()) {
                    return sol;
                }
                return finish(
                    Status::Indeterminate,
                    &xb,
                    &f,
                    iter,
                    format!("numerical breakdown: {e}"),
                );
            }
        };

        // Reduced system for the free variables: Z = M^-1 F, G = F' Z.
        let zcols: Vec<DVector<f64>> = (0..layout.nfree)
            .into_par_iter()
            .map(|col| {
                let mut rhs = DVector::zeros(layout.m_rows);
                for &(row, w) in &layout.fcols[col] {
                    rhs[row] = w;
                }
                schur.solve(&layout, &rhs)
            })
            .collect();
        let mut g = DMatrix::zeros(layout.nfree, layout.nfree);
        for a in 0..layout.nfree {
            for &(row, w) in &layout.fcols[a] {
                for bcol in 0..layout.nfree {
                    g[(a, bcol)] += w * zcols[bcol][row];
                }
            }
        }
        let cholg = {
            let mut reg = 0.0;
            let base = 1e-13 * (1.0 + g.diagonal().amax());
            let mut found = None;
            for _ in 0..4 {
                let mut gg = g.clone();
                if reg > 0.0 {
                    for i in 0..layout.nfree {
                        gg[(i, i)] += reg;
                    }
                }
                if let Some(c) = Cholesky::new(gg) {
                    found = Some(c);
                    break;
                }
                reg = if reg == 0.0 { base } else { reg * 100.0 };
            }
            match found {
                Some(c) => GSolve::Chol(c),
                None => {
                    // The assembled system went error-dominated; a clamped
                    // spectral pseudo-inverse still yields a usable
                    // direction, and the refinement pass cleans it up.
                    let gs = (&g + g.transpose()) * 0.5;
                    let se = SymmetricEigen::new(gs);
                    let floor = 1e-13 * (1.0 + se.eigenvalues.amax());
                    let inv =
                        DVector::from_fn(layout.nfree, |i, _| 1.0 / se.eigenvalues[i].max(floor));
                    GSolve::Eig {
                        q: se.eigenvectors,
                        inv,
                    }
                }
            }
        };

        // W rd W per cone, fixed within the iteration.
        let erdb: Vec<DMatrix<f64>> = sc
            .blocks
            .par_iter()
            .zip(rdb.par_iter())
            .map(|(bs, rd)| &bs.w * rd * &bs.w)
            .collect();
        let erds = DVector::from_fn(layout.nscal, |i, _| {
            schur_diag_weight(&sc, i) * rds[i]
        });
        let a_of_e = layout.apply_a(&erdb, &erds);

        // Factored copy of the coupled system [M F; F' 0], built on demand
        // for iterations where the eliminated route cannot deliver an
        // accurate step. Pivoted LU on the full matrix skips the second
        // squaring through M's inverse that ruins the reduced system once
        // the scaling degenerates.
        let aug: RefCell<Option<Option<LU<f64, Dyn, Dyn>>>> = RefCell::new(None);

        let solve_dir = |gb: &[DMatrix<f64>], gs: &DVector<f64>| -> Direction {
            let a_of_g = layout.apply_a(gb, gs);
            let r1 = &rp - a_of_g + &a_of_e;
            let z0 = schur.solve(&layout, &r1);
            let mut rhsf = DVector::zeros(layout.nfree);
            for a in 0..layout.nfree {
                let mut v = 0.0;
                for &(row, w) in &layout.fcols[a] {
                    v += w * z0[row];
                }
                rhsf[a] = v - rf[a];
            }
            let mut df = cholg.solve(&rhsf);
            let mut dy = z0;
            for (col, z) in zcols.iter().enumerate() {
                if df[col] != 0.0 {
                    dy.axpy(-df[col], z, 1.0);
                }
            }
            // The eliminated system [M F; F' 0] inherits the scaling's
            // conditioning, and errors in df are amplified by coefficients
            // riding the box; refine the pair so the step keeps honouring
            // the primal equations.
            for _ in 0..2 {
                let mut res1 = r1.clone();
                res1 -= schur.apply(&layout, &dy);
                res1 -= layout.apply_f(&df);
                let res2 = layout.residual_ft(&rf, &dy);
                if res1.amax() <= 1e-13 * (1.0 + r1.amax())
                    && res2.amax() <= 1e-13 * (1.0 + rf.amax())
                {
                    break;
                }
                let z = schur.solve(&layout, &res1);
                let mut rh = DVector::zeros(layout.nfree);
                for a in 0..layout.nfree {
                    let mut v = -res2[a];
                    for &(row, w) in &layout.fcols[a] {
                        v += w * z[row];
                    }
                    rh[a] = v;
                }
                let ddf = cholg.solve(&rh);
                let mut ddy = z;
                for (col, zc) in zcols.iter().enumerate() {
                    if ddf[col] != 0.0 {
                        ddy.axpy(-ddf[col], zc, 1.0);
                    }
                }
                dy.axpy(1.0, &ddy, 1.0);
                df.axpy(1.0, &ddf, 1.0);
            }
            let mut res1 = r1.clone();
            res1 -= schur.apply(&layout, &dy);
            res1 -= layout.apply_f(&df);
            let res2 = layout.residual_ft(&rf, &dy);
            if res1.amax() > 1e-11 * (1.0 + r1.amax()) || res2.amax() > 1e-11 * (1.0 + rf.amax()) {
                let mr = layout.m_rows;
                let nf = layout.nfree;
                let mut cell = aug.borrow_mut();
                let lu = cell.get_or_insert_with(|| {
                    let mut a = DMatrix::zeros(mr + nf, mr + nf);
                    for (g, range) in layout.group_rows.iter().enumerate() {
                        a.view_mut((range.start, range.start), (range.len(), range.len()))
                            .copy_from(&schur.mats[g]);
                    }
                    for i in 0..layout.nscal {
                        let r = layout.r_jsr + i;
                        a[(r, r)] = schur.diag[i];
                    }
                    for (col, terms) in layout.fcols.iter().enumerate() {
                        for &(row, w) in terms {
                            a[(row, mr + col)] = w;
                            a[(mr + col, row)] = w;
                        }
                    }
                    Some(LU::new(a))
                });
                if let Some(lu) = lu.as_ref() {
                    let mut rhs = DVector::zeros(mr + nf);
                    rhs.rows_mut(0, mr).copy_from(&r1);
                    rhs.rows_mut(mr, nf).copy_from(&rf);
                    if let Some(sol0) = lu.solve(&rhs) {
                        let mut dy2 = sol0.rows(0, mr).clone_owned();
                        let mut df2 = sol0.rows(mr, nf).clone_owned();
                        let mut e1 = DVector::zeros(mr);
                        let mut e2 = DVector::zeros(nf);
                        for round in 0..4 {
                            e1.copy_from(&r1);
                            e1 -= schur.apply(&layout, &dy2);
                            e1 -= layout.apply_f(&df2);
                            e2 = layout.residual_ft(&rf, &dy2);
                            if round == 3
                                || (e1.amax() <= 1e-13 * (1.0 + r1.amax())
                                    && e2.amax() <= 1e-13 * (1.0 + rf.amax()))
                            {
                                break;
                            }
                            let mut er = DVector::zeros(mr + nf);
                            er.rows_mut(0, mr).copy_from(&e1);
                            er.rows_mut(mr, nf).copy_from(&e2);
                            match lu.solve(&er) {
                                Some(dd) => {
                                    dy2 += dd.rows(0, mr).clone_owned();
                                    df2 += dd.rows(mr, nf).clone_owned();
                                }
                                None => break,
                            }
                        }
                        let new_score = e1.amax() / (1.0 + r1.amax())
                            + e2.amax() / (1.0 + rf.amax());
                        let old_score = res1.amax() / (1.0 + r1.amax())
                            + res2.amax() / (1.0 + rf.amax());
                        if new_score < old_score {
                            dy = dy2;
                            df = df2;
                        }
                    }
                }
            }
            // Computed in compensated form: dy's entries can exceed the
            // slack step they produce by many orders, and the rounding of
            // a plain product would land permanently in the updated s.
            let (dsb, dss) = layout.sub_at(&rdb, &rds, &dy);
            let dxb: Vec<DMatrix<f64>> = sc
                .blocks
                .par_iter()
                .zip(gb.par_iter())
                .zip(dsb.par_iter())
                .map(|((bs, gbk), dsk)| gbk - &bs.w * dsk * &bs.w)
                .collect();
            let dxs = DVector::from_fn(layout.nscal, |i, _| {
                gs[i] - schur_diag_weight(&sc, i) * dss[i]
            });
            Direction {
                dxb,
                dxs,
                dy,
                dsb,
                dss,
                df,
            }
        };

        // Affine scouting pass: drive complementarity toward zero.
        let gb_aff: Vec<DMatrix<f64>> = xb.iter().map(|x| -x).collect();
        let gs_aff = -&xs;
        let aff = solve_dir(&gb_aff, &gs_aff);
        let axp = sc
            .blocks
            .iter()
            .zip(&aff.dxb)
            .map(|(bs, dx)| max_step_block(&bs.lx, dx))
            .fold(max_step_scal(&xs, &aff.dxs), f64::min);
        let axd = sc
            .blocks
            .iter()
            .zip(&aff.dsb)
            .map(|(bs, ds)| max_step_block(&bs.ls, ds))
            .fold(max_step_scal(&ss, &aff.dss), f64::min);
        let a_aff = axp.min(axd).min(1.0);
        let mut gap_aff = 0.0;
        for ((x, dx), (s, ds)) in xb.iter().zip(&aff.dxb).zip(sb.iter().zip(&aff.dsb)) {
            gap_aff += (x + dx.scale(a_aff)).dot(&(s + ds.scale(a_aff)));
        }
        gap_aff += (&xs + &aff.dxs * a_aff).dot(&(&ss + &aff.dss * a_aff));
        let mu_aff = (gap_aff / layout.nu).max(0.0);
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-10, 1.0 - 1e-10);

        // Corrector: recenter to sigma*mu and subtract the affine
        // second-order term, all in scaled coordinates where the scaled
        // point is diagonal.
        let gb_cc: Vec<DMatrix<f64>> = sc
            .blocks
            .par_iter()
            .zip(aff.dxb.par_iter())
            .zip(aff.dsb.par_iter())
            .map(|((bs, dxa), dsa)| {
                let n = bs.lam.len();
                let dxt = &bs.rinv * dxa * bs.rinv.transpose();
                let dst = bs.r.transpose() * dsa * &bs.r;
                let jp = (&dxt * &dst + &dst * &dxt) * 0.5;
                let mut c = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut v = -jp[(i, j)];
                        if i == j {
                            v += sigma * mu - bs.lam[i] * bs.lam[i];
                        }
                        c[(i, j)] = 2.0 * v / (bs.lam[i] + bs.lam[j]);
                    }
                }
                &bs.r * c * bs.r.transpose()
            })
            .collect();
        let gs_cc = DVector::from_fn(layout.nscal, |i, _| {
            let dxt = aff.dxs[i] / sc.wscal[i];
            let dst = sc.wscal[i] * aff.dss[i];
            let dcomp = sigma * mu - sc.lamscal[i] * sc.lamscal[i] - dxt * dst;
            sc.wscal[i] * dcomp / sc.lamscal[i]
        });
        let mut dir = solve_dir(&gb_cc, &gs_cc);

        let sxp = sc
            .blocks
            .iter()
            .zip(&dir.dxb)
            .map(|(bs, dx)| max_step_block(&bs.lx, dx))
            .fold(max_step_scal(&xs, &dir.dxs), f64::min);
        let sxd = sc
            .blocks
            .iter()
            .zip(&dir.dsb)
            .map(|(bs, ds)| max_step_block(&bs.ls, ds))
            .fold(max_step_scal(&ss, &dir.dss), f64::min);
        let mut alpha = (0.98 * sxp.min(sxd)).min(1.0);
        if tols.log {
            eprintln!(
                "        sigma {sigma:9.3e} alpha {alpha:9.3e} (primal {sxp:9.3e}, dual {sxd:9.3e})"
            );
        }

        if alpha <= 1e-8 {
            // A collapsed step still displaces the iterate by alpha times a
            // direction at reciprocal-clamp scale; applying it would wreck
            // an otherwise clean point. Retry once with a pure centering
            // direction, which restores the scaling's conditioning, and
            // give up at the untouched iterate if that collapses too.
            stalls += 1;
            let mut retry = None;
            if stalls < 2 {
                let gb_ct: Vec<DMatrix<f64>> = sc
                    .blocks
                    .par_iter()
                    .map(|bs| {
                        let n = bs.lam.len();
                        let mut c = DMatrix::zeros(n, n);
                        for i in 0..n {
                            c[(i, i)] = (mu - bs.lam[i] * bs.lam[i]) / bs.lam[i];
                        }
                        &bs.r * c * bs.r.transpose()
                    })
                    .collect();
                let gs_ct = DVector::from_fn(layout.nscal, |i, _| {
                    sc.wscal[i] * (mu - sc.lamscal[i] * sc.lamscal[i]) / sc.lamscal[i]
                });
                let ct = solve_dir(&gb_ct, &gs_ct);
                let cxp = sc
                    .blocks
                    .iter()
                    .zip(&ct.dxb)
                    .map(|(bs, dx)| max_step_block(&bs.lx, dx))
                    .fold(max_step_scal(&xs, &ct.dxs), f64::min);
                let cxd = sc
                    .blocks
                    .iter()
                    .zip(&ct.dsb)
                    .map(|(bs, ds)| max_step_block(&bs.ls, ds))
                    .fold(max_step_scal(&ss, &ct.dss), f64::min);
                let ca = (0.98 * cxp.min(cxd)).min(1.0);
                if tols.log {
                    eprintln!("        centering alpha {ca:9.3e}");
                }
                if ca > 1e-8 {
                    retry = Some((ct, ca));
                }
            }
            match retry {
                Some((d2, a2)) => {
                    dir = d2;
                    alpha = a2;
                }
                None => {
                    if pres <= 1e-8 && dres <= 1e-8 && relgap <= 1e-8 {
                        return certify_or_snap(
                            &xb,
                            &f,
                            iter,
                            "converged at reduced accuracy",
                            best.as_ref(),
                        );
                    }
                    if let Some(sol) = rescue(
                        &xb,
                        &f,
                        iter,
                        "salvaged certificate at a stall",
                        best.as_ref(),
                    ) {
                        return sol;
                    }
                    return finish(
                        Status::Indeterminate,
                        &xb,
                        &f,
                        iter,
                        format!(
                            "step length collapsed (pres {pres:.3e}, dres {dres:.3e}, relgap {relgap:.3e})"
                        ),
                    );
                }
            }
        } else {
            stalls = 0;
        }

        for (x, dx) in xb.iter_mut().zip(&dir.dxb) {
            x.zip_apply(dx, |xi, di| *xi += alpha * di);
        }
        xs.axpy(alpha, &dir.dxs, 1.0);
        for (s, ds) in sb.iter_mut().zip(&dir.dsb) {
            s.zip_apply(ds, |si, di| *si += alpha * di);
        }
        ss.axpy(alpha, &dir.dss, 1.0);
        y.axpy(alpha, &dir.dy, 1.0);
        f.axpy(alpha, &dir.df, 1.0);
    }

    // Iteration budget exhausted; accept only clearly converged points.
    let rp = layout.residual_p(&xb, &xs, &f);
    let pres = rp.amax() / (1.0 + layout.bnorm);
    let gap = xb.iter().zip(&sb).map(|(a, b)| a.dot(b)).sum::<f64>() + xs.dot(&ss);
    let relgap = gap / (1.0 + f[layout.t_col].abs());
    if pres <= 1e-8 && relgap <= 1e-8 {
        return certify_or_snap(
            &xb,
            &f,
            tols.max_iters,
            "converged at the iteration limit",
            best.as_ref(),
        );
    }
    if let Some(sol) = rescue(
        &xb,
        &f,
        tols.max_iters,
        "salvaged certificate at the iteration limit",
        best.as_ref(),
    ) {
        return sol;
    }
    finish(
        Status::Indeterminate,
        &xb,
        &f,
        tols.max_iters,
        format!("iteration limit reached (pres {pres:.3e}, relgap {relgap:.3e})"),
    )
}

fn schur_diag_weight(sc: &Scaling, i: usize) -> f64 {
    sc.wscal[i] * sc.wscal[i]
}
