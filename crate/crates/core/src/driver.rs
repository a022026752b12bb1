//! Bisection driver: turns per-gamma SOS feasibility tests into certified
//! upper bounds, attaches product-enumeration lower bounds, and packages the
//! result as a report.

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::matio::MatrixSet;
use crate::poly::ComposeMode;
use crate::sdpsolve::{self, Status, Tols};
use crate::sosprog::{self, BasisLevel, ProgramMode, ProgramTemplate, SosError, TemplateOpts};
use crate::spectral::{self, LowerOpts, SpectralError};

/// Which relaxation family produced a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Dense,
    SupportRestricted,
    Sparse,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dense => "dense",
            Mode::SupportRestricted => "support-restricted",
            Mode::Sparse => "sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "dense" => Some(Mode::Dense),
            "support-restricted" => Some(Mode::SupportRestricted),
            "sparse" => Some(Mode::Sparse),
            _ => None,
        }
    }
}

/// Overall outcome of a bound computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Every accepted feasibility claim was independently verified.
    Ok,
    /// The solver could not classify some gamma near the final bound; the
    /// reported ub is the smallest verified feasible gamma (still valid).
    SolverIndeterminate,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::SolverIndeterminate => "solver-indeterminate",
        }
    }

    pub fn parse(s: &str) -> Option<RunStatus> {
        match s {
            "ok" => Some(RunStatus::Ok),
            "solver-indeterminate" => Some(RunStatus::SolverIndeterminate),
            _ => None,
        }
    }
}

/// Final record of one bound computation. The first twelve fields are what
/// reports serialize; the rest is in-memory diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub mode: Mode,
    /// Relaxation half-degree (the certificate polynomial has degree 2d).
    pub d: u32,
    /// Sparsity hierarchy level; None for dense runs.
    pub s: Option<u32>,
    /// Product-enumeration lower bound, when one was requested.
    pub lb: Option<f64>,
    pub ub: f64,
    /// Largest PSD block side in the final certificate problem.
    pub mb: usize,
    pub n: usize,
    pub m: usize,
    /// Bisection interval width at termination.
    pub tol: f64,
    /// Number of feasibility subproblems solved.
    pub iterations: usize,
    pub time_s: Option<f64>,
    pub status: RunStatus,
    /// Bisection interval at termination.
    pub gamma_interval_final: (f64, f64),
    /// Every feasibility solve in order: (gamma, verdict).
    pub per_step_status: Vec<(f64, Status)>,
    /// A pruned basis was replaced by the full one during this run.
    pub fallback_used: bool,
    /// The support hierarchy repeated its predecessor at or below this
    /// run's level, so higher levels cannot change the answer.
    pub stabilized: bool,
    /// Some accepted solve pushed a coefficient against the solver's box;
    /// infeasibility verdicts in this run deserve suspicion.
    pub box_hit: bool,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(
        "no feasible contraction factor found up to {cap}; the set's growth rate exceeds the \
         search cap, rescale the matrices (divide by a known bound) and retry"
    )]
    CapExceeded { cap: f64 },
    #[error("bisection needs 0 <= lo < hi and tol > 0, got [{lo}, {hi}] at tol {tol}")]
    BadInterval { lo: f64, hi: f64, tol: f64 },
    #[error("relaxation order d must be at least 1")]
    BadDegree,
    #[error("sparse order s must be at least 1")]
    BadOrder,
    #[error(transparent)]
    Assembly(#[from] SosError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// How a bound run searches, certifies, and reports.
#[derive(Debug, Clone)]
pub struct BoundOpts {
    /// Bisection stops when the interval is at most this wide.
    pub tol: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Attach a product-enumeration lower bound to the report.
    pub with_lower: bool,
    pub lower_maxlen: usize,
    pub lower_budget: usize,
    pub newton: bool,
    pub compose: ComposeMode,
    /// Explicit solver tolerance coefficients (feas, eq, max_iters);
    /// None reads the environment overrides.
    pub solver: Option<(f64, f64, usize)>,
    /// Record wall time in the report.
    pub timing: bool,
    /// Test hook: sabotage pruned bases to force the fallback path.
    #[doc(hidden)]
    pub fault_drop_basis: bool,
}

impl Default for BoundOpts {
    fn default() -> Self {
        BoundOpts {
            tol: 1e-5,
            gamma_lo: 0.0,
            gamma_hi: 2.0,
            with_lower: true,
            lower_maxlen: 6,
            lower_budget: 1 << 20,
            newton: false,
            compose: ComposeMode::Symbolic,
            solver: None,
            timing: true,
            fault_drop_basis: false,
        }
    }
}

/// Everything bisect observed: verdicts per gamma, expansion count, and the
/// final interval. `hi` is the certified answer.
#[derive(Debug, Clone)]
pub struct BisectTrace {
    pub steps: Vec<(f64, Status)>,
    pub expansions: usize,
    pub lo: f64,
    pub hi: f64,
    pub saw_indeterminate: bool,
}

/// Bisection over a monotone feasibility oracle. The upper end is tested
/// first and doubled (up to 64x) until feasible; the returned `hi` was seen
/// Feasible by the oracle. Indeterminate answers shrink the interval like
/// Infeasible ones but are flagged, so the caller can re-examine them.
pub fn bisect<F: FnMut(f64) -> Status>(
    mut oracle: F,
    lo0: f64,
    hi0: f64,
    tol: f64,
) -> Result<BisectTrace, DriverError> {
    if !(lo0 >= 0.0 && lo0 < hi0 && tol > 0.0) || !hi0.is_finite() {
        return Err(DriverError::BadInterval {
            lo: lo0,
            hi: hi0,
            tol,
        });
    }
    let cap = 64.0 * hi0;
    let mut lo = lo0;
    let mut hi = hi0;
    let mut steps = Vec::new();
    let mut expansions = 0;
    let mut saw_indeterminate = false;
    loop {
        let st = oracle(hi);
        steps.push((hi, st));
        if st == Status::Feasible {
            break;
        }
        if st == Status::Indeterminate {
            saw_indeterminate = true;
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if hi > cap {
            return Err(DriverError::CapExceeded { cap });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let st = oracle(mid);
        steps.push((mid, st));
        if st == Status::Feasible {
            hi = mid;
        } else {
            if st == Status::Indeterminate {
                saw_indeterminate = true;
            }
            lo = mid;
        }
    }
    Ok(BisectTrace {
        steps,
        expansions,
        lo,
        hi,
        saw_indeterminate,
    })
}

fn make_tols(p: &sosprog::SdpProblem, opts: &BoundOpts) -> Tols {
    let mut t = match opts.solver {
        Some((f, e, mi)) => Tols::scaled_for(p, f, e, mi),
        None => Tols::for_problem(p),
    };
    t.early_exit = true;
    t
}

fn run_bound(
    set: &MatrixSet,
    d: u32,
    pmode: ProgramMode,
    mode_tag: Mode,
    opts: &BoundOpts,
) -> Result<BoundReport, DriverError> {
    if d == 0 {
        return Err(DriverError::BadDegree);
    }
    let start = Instant::now();
    let mats = set.dense_all();
    let build = |level: BasisLevel| -> Result<ProgramTemplate, SosError> {
        let mut t = TemplateOpts::new(pmode);
        t.basis_level = level;
        t.compose = opts.compose;
        t.newton = opts.newton;
        t.drop_basis_element = opts.fault_drop_basis && level == BasisLevel::Pruned;
        sosprog::build_template(&mats, d, &t)
    };
    let (mut template, mut fallback_used) = match build(BasisLevel::Pruned) {
        Ok(t) => (t, false),
        Err(SosError::Unrepresentable { .. }) => (build(BasisLevel::Full)?, true),
        Err(e) => return Err(e.into()),
    };

    let mut box_hit = false;
    let mut cache: HashMap<u64, Status> = HashMap::new();

    fn solve_at(
        template: &ProgramTemplate,
        gamma: f64,
        opts: &BoundOpts,
        box_hit: &mut bool,
    ) -> Status {
        let p = template.assemble(gamma);
        let tols = make_tols(&p, opts);
        let sol = sdpsolve::solve_feasibility(&p, &tols);
        if sol.box_hit {
            *box_hit = true;
        }
        sol.status
    }

    // A pruned basis can only err toward infeasibility. If the top of the
    // search range does not certify under it, give the full basis one shot
    // there and switch permanently when that changes the verdict.
    let st0 = solve_at(&template, opts.gamma_hi, opts, &mut box_hit);
    if st0 != Status::Feasible && !fallback_used {
        let full = build(BasisLevel::Full)?;
        let st_full = solve_at(&full, opts.gamma_hi, opts, &mut box_hit);
        if st_full == Status::Feasible {
            template = full;
            fallback_used = true;
            cache.insert(opts.gamma_hi.to_bits(), st_full);
        } else {
            cache.insert(opts.gamma_hi.to_bits(), st0);
        }
    } else {
        cache.insert(opts.gamma_hi.to_bits(), st0);
    }

    let trace = bisect(
        |g: f64| {
            if let Some(&st) = cache.get(&g.to_bits()) {
                return st;
            }
            let st = solve_at(&template, g, opts, &mut box_hit);
            cache.insert(g.to_bits(), st);
            st
        },
        opts.gamma_lo,
        opts.gamma_hi,
        opts.tol,
    )?;

    let mut ub = trace.hi;
    let mut lo_final = trace.lo;
    let mut status = RunStatus::Ok;
    if trace.saw_indeterminate {
        // The interval treated those gammas as infeasible without proof.
        // Ones inside the final resolution band cannot move the certified
        // bound by more than tol either way; only those materially below
        // it need settling. Re-examine the largest such gamma at tightened
        // tolerances; by monotonicity an infeasible answer speaks for all
        // below it.
        let g_ind = trace
            .steps
            .iter()
            .filter(|(g, st)| *st == Status::Indeterminate && *g <= ub - opts.tol)
            .map(|(g, _)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        if g_ind.is_finite() {
            let p = template.assemble(g_ind);
            let mut tols = make_tols(&p, opts);
            tols.feas_tol *= 1e-2;
            tols.eq_tol *= 1e-2;
            tols.max_iters *= 2;
            tols.early_exit = false;
            let sol = sdpsolve::solve_feasibility(&p, &tols);
            if sol.box_hit {
                box_hit = true;
            }
            match sol.status {
                Status::Feasible => {
                    if g_ind < ub {
                        ub = g_ind;
                        lo_final = trace
                            .steps
                            .iter()
                            .filter(|(g, st)| *st == Status::Infeasible && *g < g_ind)
                            .map(|(g, _)| *g)
                            .fold(opts.gamma_lo, f64::max);
                    }
                    // Smaller indeterminate gammas stay unproven when the
                    // bound moves down onto this one.
                    if trace
                        .steps
                        .iter()
                        .any(|(g, st)| *st == Status::Indeterminate && *g <= ub - opts.tol)
                    {
                        status = RunStatus::SolverIndeterminate;
                    }
                }
                Status::Infeasible => {}
                Status::Indeterminate => status = RunStatus::SolverIndeterminate,
            }
        }
    }

    let lb = if opts.with_lower {
        let report = spectral::product_lower_bound(
            &mats,
            &LowerOpts {
                max_length: opts.lower_maxlen,
                budget: opts.lower_budget,
            },
        )?;
        Some(report.value)
    } else {
        None
    };

    let stabilized = match (template.stabilized_at, template.s) {
        (Some(k), Some(s)) => k <= s,
        _ => false,
    };
    Ok(BoundReport {
        mode: mode_tag,
        d,
        s: template.s,
        lb,
        ub,
        mb: template.mb,
        n: set.n,
        m: set.m(),
        tol: opts.tol,
        iterations: trace.steps.len(),
        time_s: opts.timing.then(|| start.elapsed().as_secs_f64()),
        status,
        gamma_interval_final: (lo_final, ub),
        per_step_status: trace.steps,
        fallback_used,
        stabilized,
        box_hit,
    })
}

/// Full-basis, full-support relaxation at half-degree d.
pub fn dense_bound(set: &MatrixSet, d: u32, opts: &BoundOpts) -> Result<BoundReport, DriverError> {
    run_bound(set, d, ProgramMode::Dense, Mode::Dense, opts)
}

/// Coefficient support restricted to hierarchy level s, dense Gram cones.
pub fn support_restricted_bound(
    set: &MatrixSet,
    d: u32,
    s: u32,
    opts: &BoundOpts,
) -> Result<BoundReport, DriverError> {
    if s == 0 {
        return Err(DriverError::BadOrder);
    }
    run_bound(
        set,
        d,
        ProgramMode::SupportRestricted { s },
        Mode::SupportRestricted,
        opts,
    )
}

/// Level-s supports with clique-decomposed Gram cones.
pub fn sparse_bound(
    set: &MatrixSet,
    d: u32,
    s: u32,
    opts: &BoundOpts,
) -> Result<BoundReport, DriverError> {
    if s == 0 {
        return Err(DriverError::BadOrder);
    }
    run_bound(set, d, ProgramMode::Sparse { s }, Mode::Sparse, opts)
}

/// The sparse bounds for s = 1..s_max, stopping early once the support
/// hierarchy stabilizes (later levels would rebuild the same program).
pub fn sparsejsr(
    set: &MatrixSet,
    d: u32,
    s_max: u32,
    opts: &BoundOpts,
) -> Result<Vec<BoundReport>, DriverError> {
    if s_max == 0 {
        return Err(DriverError::BadOrder);
    }
    let mut out = Vec::new();
    for s in 1..=s_max {
        let r = sparse_bound(set, d, s, opts)?;
        let stop = r.stabilized;
        out.push(r);
        if stop {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matio::{control_set, random_sparse_set, CooMatrix, MatrixSet};
    use nalgebra::DMatrix;

    fn quick() -> BoundOpts {
        BoundOpts {
            solver: Some((1e-8, 1e-8, 200)),
            timing: false,
            ..BoundOpts::default()
        }
    }

    fn step_oracle(threshold: f64) -> impl FnMut(f64) -> Status {
        move |g: f64| {
            if g >= threshold {
                Status::Feasible
            } else {
                Status::Infeasible
            }
        }
    }

    #[test]
    fn bisection_brackets_a_step_oracle() {
        let t = bisect(step_oracle(0.5), 0.0, 2.0, 1e-5).unwrap();
        assert!(t.hi >= 0.5 && t.hi <= 0.5 + 1e-5, "hi = {}", t.hi);
        assert_eq!(t.expansions, 0);
        assert!(t.hi - t.lo <= 1e-5);
    }

    #[test]
    fn bisection_without_expansion_near_the_top() {
        let t = bisect(step_oracle(1.7), 0.0, 2.0, 1e-5).unwrap();
        assert!(t.hi >= 1.7 && t.hi <= 1.7 + 1e-5, "hi = {}", t.hi);
        assert_eq!(t.expansions, 0);
    }

    #[test]
    fn bisection_expands_past_the_initial_interval() {
        let t = bisect(step_oracle(3.0), 0.0, 2.0, 1e-5).unwrap();
        assert!(t.hi >= 3.0 && t.hi <= 3.0 + 1e-5, "hi = {}", t.hi);
        assert_eq!(t.expansions, 1);
    }

    #[test]
    fn hopeless_oracle_hits_the_cap() {
        let err = bisect(|_| Status::Infeasible, 0.0, 2.0, 1e-5).unwrap_err();
        match err {
            DriverError::CapExceeded { cap } => assert_eq!(cap, 128.0),
            other => panic!("wrong error: {other}"),
        }
        let msg = bisect(|_| Status::Infeasible, 0.0, 2.0, 1e-5)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("rescale"), "{msg}");
    }

    #[test]
    fn indeterminate_counts_as_infeasible_but_is_flagged() {
        let mut first = true;
        let t = bisect(
            move |g: f64| {
                if g >= 1.9 {
                    Status::Feasible
                } else if first && g < 1.0 {
                    first = false;
                    Status::Indeterminate
                } else if g >= 0.5 {
                    Status::Feasible
                } else {
                    Status::Infeasible
                }
            },
            0.0,
            2.0,
            1e-3,
        )
        .unwrap();
        assert!(t.saw_indeterminate);
        assert!(t.hi >= 0.5);
    }

    fn single(entries: Vec<Vec<f64>>) -> MatrixSet {
        MatrixSet::from_dense(&[DMatrix::from_fn(
            entries.len(),
            entries.len(),
            |i, j| entries[i][j],
        )])
        .unwrap()
    }

    #[test]
    fn scalar_set_bound_is_its_radius() {
        let set = single(vec![vec![0.5]]);
        let r = dense_bound(&set, 1, &quick()).unwrap();
        assert!((r.ub - 0.5).abs() <= 2e-5, "ub = {}", r.ub);
        assert_eq!(r.status, RunStatus::Ok);
        assert_eq!(r.mode, Mode::Dense);
        assert_eq!(r.s, None);
        assert_eq!(r.mb, 1);
        assert!((r.lb.unwrap() - 0.5).abs() <= 1e-12);
        assert_eq!(r.iterations, r.per_step_status.len());
        let (lo, hi) = r.gamma_interval_final;
        assert!(hi - lo <= 2.0 * r.tol && (hi - r.ub).abs() == 0.0);
    }

    #[test]
    fn diagonal_pair_bound_is_the_max_entry() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![0.9, 0.3]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.2, 0.8]);
        let set = MatrixSet::from_dense(&[a, b]).unwrap();
        let r = dense_bound(&set, 1, &quick()).unwrap();
        assert!((r.ub - 0.9).abs() <= 2e-5, "ub = {}", r.ub);
        assert!(r.lb.unwrap() <= r.ub + 2e-5);
    }

    #[test]
    fn single_matrix_modes_agree_with_the_spectral_radius() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.5, 0.0, 0.3, 0.2, 0.4, 0.0, 0.6, 0.1]);
        let rho = spectral::spectral_radius(&a).unwrap();
        assert!(rho > 0.3 && rho < 1.0);
        let set = MatrixSet::from_dense(&[a]).unwrap();
        for d in [1, 2] {
            let r = dense_bound(&set, d, &quick()).unwrap();
            assert!(
                (r.ub - rho).abs() <= 2e-5 * (1.0 + rho),
                "d = {d}: ub = {} vs rho = {rho}",
                r.ub
            );
        }
    }

    #[test]
    fn shear_pair_bound_sits_in_the_known_window() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let set = MatrixSet::from_dense(&[a, b]).unwrap();
        let opts = BoundOpts {
            gamma_hi: 2.0,
            ..quick()
        };
        let r = dense_bound(&set, 1, &opts).unwrap();
        let phi = 0.5 * (1.0 + 5.0_f64.sqrt());
        // AB has spectral radius phi^2, so the true value is at least phi;
        // the quadratic relaxation is known not to close that gap.
        assert!((r.lb.unwrap() - phi).abs() <= 1e-9, "lb = {:?}", r.lb);
        assert!(r.ub >= phi - 2e-5 && r.ub <= 1.93, "ub = {}", r.ub);
    }

    #[test]
    fn mode_chain_is_ordered() {
        let set = random_sparse_set(6, 2, 10, 21).unwrap();
        let opts = BoundOpts {
            tol: 1e-4,
            ..quick()
        };
        let dense = dense_bound(&set, 1, &opts).unwrap();
        let restricted = support_restricted_bound(&set, 1, 1, &opts).unwrap();
        let sparse = sparse_bound(&set, 1, 1, &opts).unwrap();
        assert!(dense.ub <= restricted.ub + 2.0 * opts.tol);
        assert!(restricted.ub <= sparse.ub + 2.0 * opts.tol);
        assert!(dense.lb.unwrap() <= dense.ub + 2.0 * opts.tol);
    }

    #[test]
    fn bounds_scale_with_the_set() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![0.9, 0.3]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.2, 0.8]);
        let set = MatrixSet::from_dense(&[a.clone(), b.clone()]).unwrap();
        let scaled = MatrixSet::from_dense(&[a * 3.0, b * 3.0]).unwrap();
        let r1 = dense_bound(&set, 1, &quick()).unwrap();
        let r3 = dense_bound(&scaled, 1, &quick()).unwrap();
        assert!(
            (r3.ub - 3.0 * r1.ub).abs() <= 2e-5 * 3.0,
            "{} vs {}",
            r3.ub,
            3.0 * r1.ub
        );
    }

    #[test]
    fn permutation_similarity_does_not_move_the_bound() {
        let set = random_sparse_set(5, 2, 8, 33).unwrap();
        let mats = set.dense_all();
        let mut p = DMatrix::zeros(5, 5);
        for (i, j) in [(0, 2), (1, 0), (2, 4), (3, 1), (4, 3)] {
            p[(i, j)] = 1.0;
        }
        let permuted: Vec<DMatrix<f64>> =
            mats.iter().map(|a| &p * a * p.transpose()).collect();
        let pset = MatrixSet::from_dense(&permuted).unwrap();
        let opts = BoundOpts {
            tol: 1e-4,
            ..quick()
        };
        let r1 = sparse_bound(&set, 1, 1, &opts).unwrap();
        let r2 = sparse_bound(&pset, 1, 1, &opts).unwrap();
        assert!((r1.ub - r2.ub).abs() <= 2.0 * opts.tol, "{} vs {}", r1.ub, r2.ub);
    }

    #[test]
    fn sabotaged_bases_fall_back_and_recover_the_bound() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![0.9, 0.3]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.2, 0.8]);
        let set = MatrixSet::from_dense(&[a, b]).unwrap();
        let clean = dense_bound(&set, 1, &quick()).unwrap();
        assert!(!clean.fallback_used);
        let faulted = dense_bound(
            &set,
            1,
            &BoundOpts {
                fault_drop_basis: true,
                ..quick()
            },
        )
        .unwrap();
        assert!(faulted.fallback_used);
        assert!(
            (faulted.ub - clean.ub).abs() <= 2e-5,
            "{} vs {}",
            faulted.ub,
            clean.ub
        );
    }

    #[test]
    fn diagonal_hierarchy_stabilizes_immediately() {
        let a = DMatrix::from_diagonal(&nalgebra::dvector![0.9, 0.3]);
        let b = DMatrix::from_diagonal(&nalgebra::dvector![0.2, 0.8]);
        let set = MatrixSet::from_dense(&[a, b]).unwrap();
        let seq = sparsejsr(&set, 1, 3, &quick()).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(seq[0].stabilized);
        assert!((seq[0].ub - 0.9).abs() <= 2e-5);
    }

    #[test]
    fn deeper_levels_never_worsen_the_sequence() {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.8, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.8, 0.8]);
        let set = MatrixSet::from_dense(&[a, b]).unwrap();
        let opts = BoundOpts {
            tol: 1e-4,
            ..quick()
        };
        let seq = sparsejsr(&set, 1, 3, &opts).unwrap();
        assert!(!seq.is_empty());
        for w in seq.windows(2) {
            assert!(w[1].ub <= w[0].ub + 2.0 * opts.tol);
            assert_eq!(w[1].s, w[0].s.map(|s| s + 1));
        }
        for r in &seq {
            assert!(r.lb.unwrap() <= r.ub + 2.0 * opts.tol);
        }
    }

    #[test]
    fn control_family_runs_end_to_end() {
        let set = control_set(2, 3, 5).unwrap();
        let opts = BoundOpts {
            tol: 1e-3,
            ..quick()
        };
        let r = sparse_bound(&set, 1, 1, &opts).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.m, 3);
        assert!(r.ub.is_finite() && r.ub > 0.0);
        assert!(r.lb.unwrap() <= r.ub + 2.0 * opts.tol);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let set = single(vec![vec![0.5]]);
        assert!(matches!(
            dense_bound(&set, 0, &quick()),
            Err(DriverError::BadDegree)
        ));
        assert!(matches!(
            sparse_bound(&set, 1, 0, &quick()),
            Err(DriverError::BadOrder)
        ));
        assert!(matches!(
            bisect(|_| Status::Feasible, 1.0, 0.5, 1e-5),
            Err(DriverError::BadInterval { .. })
        ));
    }

    #[test]
    fn coo_sets_round_through_the_driver() {
        // A sanity pass over the sparse input path: build from triplets,
        // bound, and check the report carries the set's shape.
        let set = MatrixSet::new(
            2,
            vec![
                CooMatrix {
                    entries: vec![(0, 0, 0.5), (0, 1, 0.25)],
                },
                CooMatrix {
                    entries: vec![(1, 0, 0.25), (1, 1, 0.5)],
                },
            ],
        )
        .unwrap();
        let r = sparse_bound(&set, 1, 1, &quick()).unwrap();
        assert_eq!((r.n, r.m), (2, 2));
        assert!(r.ub > 0.0 && r.ub < 2.0);
    }
}
