//! Assembly of sum-of-squares membership constraints into block-PSD
//! equality form, and of the whole gamma-parametric JSR feasibility program.
//!
//! A membership constraint "f is a sum of squares over this basis" becomes
//! one equality row per exponent: the Gram entries whose monomial pair sums
//! to that exponent must add up to f's coefficient there. With a clique
//! decomposition the Gram matrix splits into one PSD block per clique and
//! the same rows simply collect entries from every block whose clique can
//! reach the exponent. Rows are emitted for every reachable exponent, not
//! just the support: an absent row would silently relax the constraint.
//!
//! The JSR program for contraction factor gamma has one free coefficient
//! vector c (the candidate norm-like form p) and m+1 membership groups:
//! p - |x|^2d in SOS, and gamma^2d p - p(A_i x) in SOS for each matrix.
//! Everything except the scalar gamma^2d weight is independent of gamma, so
//! the expensive work (hierarchies, bases, graphs, substitution maps) is
//! done once per instance in a template and re-stamped per bisection step.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::basis::{self, BasisError, MonomialBasis};
use crate::poly::{self, ComposeMode, Exponent, PolyError, Support};
use crate::rng;
use crate::tsgraph::{self, CliqueDecomposition, TsGraphError};

#[derive(Debug, Error)]
pub enum SosError {
    #[error("constraint group {group}: exponent {exponent} has no representing pair in its basis")]
    Unrepresentable { group: usize, exponent: Exponent },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Graph(#[from] TsGraphError),
}

/// How one Gram matrix is blocked.
#[derive(Debug, Clone)]
pub enum Decomposition {
    /// Single block over the whole basis.
    Dense,
    Cliques(CliqueDecomposition),
}

/// A monomial basis together with its block structure: each block owns a
/// strictly increasing list of basis positions.
#[derive(Debug, Clone)]
pub struct GramStructure {
    pub basis: MonomialBasis,
    pub decomposition: Decomposition,
    pub block_index: Vec<Vec<usize>>,
}

impl GramStructure {
    pub fn dense(basis: MonomialBasis) -> Self {
        let block_index = if basis.is_empty() {
            Vec::new()
        } else {
            vec![(0..basis.len()).collect()]
        };
        GramStructure {
            basis,
            decomposition: Decomposition::Dense,
            block_index,
        }
    }

    pub fn from_cliques(basis: MonomialBasis, dec: CliqueDecomposition) -> Self {
        let block_index = dec.cliques.clone();
        GramStructure {
            basis,
            decomposition: Decomposition::Cliques(dec),
            block_index,
        }
    }

    /// Largest block side.
    pub fn mb(&self) -> usize {
        self.block_index.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// One addend w * Q\[i\]\[j\] (local indices, i <= j) of an equality row.
/// Off-diagonal pairs enter a symmetric Gram sum twice, so assembly stores
/// them once with w = 2.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTerm {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// sum of block terms + sum of w * c\[var\] = rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct EqRow {
    /// 0 is the positivity constraint, 1..=m the transition constraints.
    pub group: usize,
    /// The exponent whose coefficient this row matches.
    pub exponent: Exponent,
    pub blocks: Vec<BlockTerm>,
    pub vars: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Block-diagonal PSD feasibility problem with free scalar variables.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    /// Constraint group that created each block; rows only ever reference
    /// blocks of their own group, which the solver exploits.
    pub block_group: Vec<usize>,
    pub num_groups: usize,
    pub num_free: usize,
    pub var_names: Vec<String>,
    pub rows: Vec<EqRow>,
}

/// f's coefficient at one exponent, as an affine expression in the free
/// variables: sum of w * c\[var\] + constant.
#[derive(Debug, Clone, Default)]
pub struct CoeffExpr {
    pub vars: Vec<(usize, f64)>,
    pub constant: f64,
}

struct RowSpec {
    vars: Vec<(usize, f64)>,
    gamma_var: Option<usize>,
    rhs: f64,
}

impl RowSpec {
    fn zero() -> Self {
        RowSpec {
            vars: Vec::new(),
            gamma_var: None,
            rhs: 0.0,
        }
    }
}

struct RowSkeleton {
    group: usize,
    exponent: Exponent,
    blocks: Vec<BlockTerm>,
    vars: Vec<(usize, f64)>,
    /// Variable whose weight gains -gamma^2d when stamped.
    gamma_var: Option<usize>,
    rhs: f64,
}

/// All pair-sum rows of one structure: exponent -> Gram entries reaching it.
fn pair_rows(
    structure: &GramStructure,
    first_block: usize,
) -> BTreeMap<Exponent, Vec<BlockTerm>> {
    let mut map: BTreeMap<Exponent, Vec<BlockTerm>> = BTreeMap::new();
    let exps = structure.basis.exponents();
    for (bk, positions) in structure.block_index.iter().enumerate() {
        let block = first_block + bk;
        for (li, &pi) in positions.iter().enumerate() {
            for (ljoff, &pj) in positions[li..].iter().enumerate() {
                let eta = exps[pi].add(&exps[pj]);
                let w = if ljoff == 0 { 1.0 } else { 2.0 };
                map.entry(eta).or_default().push(BlockTerm {
                    block,
                    i: li,
                    j: li + ljoff,
                    w,
                });
            }
        }
    }
    map
}

fn skeleton_for_group(
    group: usize,
    structure: &GramStructure,
    support: &Support,
    first_block: usize,
    mut spec: impl FnMut(&Exponent) -> RowSpec,
) -> Result<Vec<RowSkeleton>, SosError> {
    let map = pair_rows(structure, first_block);
    for eta in support.iter() {
        if !map.contains_key(eta) {
            return Err(SosError::Unrepresentable {
                group,
                exponent: eta.clone(),
            });
        }
    }
    Ok(map
        .into_iter()
        .map(|(exponent, blocks)| {
            let s = if support.contains(&exponent) {
                spec(&exponent)
            } else {
                RowSpec::zero()
            };
            RowSkeleton {
                group,
                exponent,
                blocks,
                vars: s.vars,
                gamma_var: s.gamma_var,
                rhs: s.rhs,
            }
        })
        .collect())
}

/// Rows and blocks forcing "f is SOS over this structure", where f's
/// coefficient at each support exponent is the given affine expression
/// (absent exponents read as the zero expression). Returns the rows and the
/// added block sizes; block ids start at `first_block`.
pub fn assemble_membership(
    support: &Support,
    structure: &GramStructure,
    group: usize,
    first_block: usize,
    coeff_map: &BTreeMap<Exponent, CoeffExpr>,
) -> Result<(Vec<EqRow>, Vec<usize>), SosError> {
    let rows = skeleton_for_group(group, structure, support, first_block, |eta| {
        let expr = coeff_map.get(eta).cloned().unwrap_or_default();
        RowSpec {
            vars: expr.vars.into_iter().map(|(v, w)| (v, -w)).collect(),
            gamma_var: None,
            rhs: expr.constant,
        }
    })?;
    let sizes = structure.block_index.iter().map(Vec::len).collect();
    Ok((
        rows.into_iter()
            .map(|sk| EqRow {
                group: sk.group,
                exponent: sk.exponent,
                blocks: sk.blocks,
                vars: sk.vars,
                rhs: sk.rhs,
            })
            .collect(),
        sizes,
    ))
}

/// Which relaxation the template encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramMode {
    /// Full basis, full coefficient support.
    Dense,
    /// Coefficients restricted to hierarchy level s, dense Gram cones.
    SupportRestricted { s: u32 },
    /// Level-s supports and clique-decomposed cones.
    Sparse { s: u32 },
}

/// Which end of the basis chain to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisLevel {
    Pruned,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct TemplateOpts {
    pub mode: ProgramMode,
    pub basis_level: BasisLevel,
    pub compose: ComposeMode,
    /// Apply the half-Newton-polytope filter before pruning.
    pub newton: bool,
    /// Test hook: sabotage every pruned basis by dropping its last element,
    /// to exercise the driver's full-basis fallback.
    #[doc(hidden)]
    pub drop_basis_element: bool,
}

impl TemplateOpts {
    pub fn new(mode: ProgramMode) -> Self {
        TemplateOpts {
            mode,
            basis_level: BasisLevel::Pruned,
            compose: ComposeMode::Symbolic,
            newton: false,
            drop_basis_element: false,
        }
    }
}

/// The gamma-independent part of the feasibility program.
pub struct ProgramTemplate {
    pub n: usize,
    pub m: usize,
    pub d: u32,
    pub mode: ProgramMode,
    /// Hierarchy level, None for dense.
    pub s: Option<u32>,
    /// First hierarchy level that repeated its predecessor, if observed.
    pub stabilized_at: Option<u32>,
    /// Exponents carrying a free coefficient c_alpha, in variable order.
    pub p_support: Support,
    pub var_names: Vec<String>,
    /// Per group: 0 = positivity, then one per matrix.
    pub structures: Vec<GramStructure>,
    pub group_supports: Vec<Support>,
    pub block_sizes: Vec<usize>,
    pub block_group: Vec<usize>,
    pub num_groups: usize,
    /// Largest PSD block side.
    pub mb: usize,
    var_index: BTreeMap<Exponent, usize>,
    skeleton: Vec<RowSkeleton>,
}

/// Builds bases, graphs, supports, and substitution maps for a matrix set.
/// Everything here is reused across all gamma values of a bisection run.
pub fn build_template(
    mats: &[DMatrix<f64>],
    d: u32,
    opts: &TemplateOpts,
) -> Result<ProgramTemplate, SosError> {
    let n = mats.first().map_or(0, |a| a.nrows());
    let m = mats.len();
    let pn = poly::power_norm_form(n, d)?;
    let pn_support = pn.support();

    // Coefficient support, per-group constraint supports, stabilization.
    let (p_support, group_supports, s_used, stabilized_at) = match opts.mode {
        ProgramMode::Dense => {
            // Reuse the cap check; the "basis" here is just N^n_2d as a set.
            let full = basis::standard_basis(n, 2 * d)?;
            let full_support =
                Support::from_exponents(n, 2 * d, full.exponents().iter().cloned())?;
            let supports = vec![full_support.clone(); m + 1];
            (full_support, supports, None, None)
        }
        ProgramMode::SupportRestricted { s } | ProgramMode::Sparse { s } => {
            let h = poly::support_hierarchy(mats, d, s, opts.compose)?;
            let a_s = h.levels[s as usize].clone();
            let mut pos = a_s.clone();
            pos.union_with(&pn_support);
            let mut supports = vec![pos];
            for (i, a) in mats.iter().enumerate() {
                let mode_i = match opts.compose {
                    ComposeMode::Symbolic => ComposeMode::Symbolic,
                    ComposeMode::Numeric { seed } => ComposeMode::Numeric {
                        seed: rng::mix(seed, (s as u64 + 1) * m as u64 + i as u64),
                    },
                };
                let mut di = a_s.clone();
                di.union_with(&poly::compose_support(&a_s, a, mode_i)?);
                supports.push(di);
            }
            (a_s, supports, Some(s), h.stabilized_at)
        }
    };

    // One basis and block structure per group.
    let std_d = basis::standard_basis(n, d)?;
    let mut structures = Vec::with_capacity(m + 1);
    for support in &group_supports {
        let group_basis = match opts.basis_level {
            BasisLevel::Full => std_d.clone(),
            BasisLevel::Pruned => {
                let start = if opts.newton {
                    basis::newton_filter(support, &std_d)
                } else {
                    std_d.clone()
                };
                let mut pruned = basis::prune_basis(support, &start).b1;
                if opts.drop_basis_element && pruned.len() >= 2 {
                    let kept: Vec<Exponent> = pruned.exponents()[..pruned.len() - 1].to_vec();
                    pruned = MonomialBasis::from_exponents(n, d, kept);
                }
                pruned
            }
        };
        let structure = match opts.mode {
            ProgramMode::Dense | ProgramMode::SupportRestricted { .. } => {
                GramStructure::dense(group_basis)
            }
            ProgramMode::Sparse { .. } => {
                let g = tsgraph::tsp_graph(support, &group_basis);
                let ext = tsgraph::chordal_extension(&g);
                GramStructure::from_cliques(group_basis, tsgraph::maximal_cliques(&ext)?)
            }
        };
        structures.push(structure);
    }

    let var_index: BTreeMap<Exponent, usize> = p_support
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), i))
        .collect();
    let var_names = p_support.iter().map(|e| format!("c[{e}]")).collect();

    let mut block_sizes = Vec::new();
    let mut block_group = Vec::new();
    let mut skeleton = Vec::new();

    // Group 0: p - |x|^2d is SOS.
    {
        let structure = &structures[0];
        let first_block = block_sizes.len();
        let rows = skeleton_for_group(0, structure, &group_supports[0], first_block, |eta| {
            RowSpec {
                vars: var_index.get(eta).map(|&v| (v, -1.0)).into_iter().collect(),
                gamma_var: None,
                rhs: -pn.coefficient(eta),
            }
        })?;
        skeleton.extend(rows);
        for b in &structure.block_index {
            block_sizes.push(b.len());
            block_group.push(0);
        }
    }

    // Groups 1..=m: gamma^2d p - p(A_i x) is SOS.
    for (i, a) in mats.iter().enumerate() {
        let group = i + 1;
        let structure = &structures[group];
        let target = &group_supports[group];
        let lmap = poly::substitution_map(&p_support, a, target)?;
        // Invert columns into per-target-exponent variable lists.
        let target_exps: Vec<&Exponent> = target.iter().collect();
        let mut by_eta: BTreeMap<&Exponent, Vec<(usize, f64)>> = BTreeMap::new();
        for (var, col) in lmap.columns.iter().enumerate() {
            for &(row, v) in col {
                by_eta.entry(target_exps[row]).or_default().push((var, v));
            }
        }
        let first_block = block_sizes.len();
        let rows = skeleton_for_group(group, structure, target, first_block, |eta| RowSpec {
            vars: by_eta.get(eta).cloned().unwrap_or_default(),
            gamma_var: var_index.get(eta).copied(),
            rhs: 0.0,
        })?;
        skeleton.extend(rows);
        for b in &structure.block_index {
            block_sizes.push(b.len());
            block_group.push(group);
        }
    }

    let mb = block_sizes.iter().copied().max().unwrap_or(0);
    Ok(ProgramTemplate {
        n,
        m,
        d,
        mode: opts.mode,
        s: s_used,
        stabilized_at,
        p_support,
        var_names,
        structures,
        group_supports,
        block_sizes,
        block_group,
        num_groups: m + 1,
        mb,
        var_index,
        skeleton,
    })
}

impl ProgramTemplate {
    /// Stamps the contraction factor into the cached rows.
    pub fn assemble(&self, gamma: f64) -> SdpProblem {
        let gpow = gamma.powi(2 * self.d as i32);
        let rows = self
            .skeleton
            .iter()
            .map(|sk| {
                let mut vars = sk.vars.clone();
                if let Some(gv) = sk.gamma_var {
                    match vars.iter_mut().find(|(v, _)| *v == gv) {
                        Some(entry) => entry.1 -= gpow,
                        None => vars.push((gv, -gpow)),
                    }
                }
                vars.sort_unstable_by_key(|&(v, _)| v);
                EqRow {
                    group: sk.group,
                    exponent: sk.exponent.clone(),
                    blocks: sk.blocks.clone(),
                    vars,
                    rhs: sk.rhs,
                }
            })
            .collect();
        SdpProblem {
            block_sizes: self.block_sizes.clone(),
            block_group: self.block_group.clone(),
            num_groups: self.num_groups,
            num_free: self.var_names.len(),
            var_names: self.var_names.clone(),
            rows,
        }
    }

    pub fn var_position(&self, e: &Exponent) -> Option<usize> {
        self.var_index.get(e).copied()
    }
}

/// Sparse text dump: block table, then per row its group, exponent, Gram
/// terms "b <block> <i> <j> <w>" and variable terms "v <var> <w>".
pub fn dump_problem(p: &SdpProblem) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "blocks {}",
        p.block_sizes
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(out, "free {}", p.num_free);
    for (idx, row) in p.rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "row {idx} group {} exp {} rhs {:.16e}",
            row.group, row.exponent, row.rhs
        );
        for t in &row.blocks {
            let _ = writeln!(out, "  b {} {} {} {:.16e}", t.block, t.i, t.j, t.w);
        }
        for &(v, w) in &row.vars {
            let _ = writeln!(out, "  v {v} {w:.16e}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::standard_basis;
    use nalgebra::dmatrix;

    fn exp(p: &[u32]) -> Exponent {
        Exponent::new(p.to_vec())
    }

    fn support_of(degree: u32, members: &[&[u32]]) -> Support {
        let n = members[0].len();
        Support::from_exponents(n, degree, members.iter().map(|p| exp(p))).unwrap()
    }

    fn constant_map(entries: &[(&[u32], f64)]) -> BTreeMap<Exponent, CoeffExpr> {
        entries
            .iter()
            .map(|&(p, c)| {
                (
                    exp(p),
                    CoeffExpr {
                        vars: vec![],
                        constant: c,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn scalar_membership_is_one_entry() {
        let support = support_of(2, &[&[2]]);
        let structure = GramStructure::dense(standard_basis(1, 1).unwrap());
        let (rows, sizes) =
            assemble_membership(&support, &structure, 0, 0, &constant_map(&[(&[2], 1.0)]))
                .unwrap();
        assert_eq!(sizes, vec![1]);
        assert_eq!(rows.len(), 1);
        assert_eq!(
            rows[0].blocks,
            vec![BlockTerm {
                block: 0,
                i: 0,
                j: 0,
                w: 1.0
            }]
        );
        assert_eq!(rows[0].rhs, 1.0);
        assert!(rows[0].vars.is_empty());
    }

    #[test]
    fn rank_one_membership() {
        let support = support_of(4, &[&[2, 2]]);
        let b = MonomialBasis::from_exponents(2, 2, vec![exp(&[1, 1])]);
        let structure = GramStructure::dense(b);
        let (rows, sizes) =
            assemble_membership(&support, &structure, 0, 0, &constant_map(&[(&[2, 2], 2.0)]))
                .unwrap();
        assert_eq!(sizes, vec![1]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rhs, 2.0);
    }

    #[test]
    fn quartic_cliques_couple_in_one_row() {
        let support = support_of(
            4,
            &[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4], &[1, 1, 2], &[1, 2, 1]],
        );
        let b = standard_basis(3, 2).unwrap();
        let g = tsgraph::tsp_graph(&support, &b);
        let ext = tsgraph::chordal_extension(&g);
        let dec = tsgraph::maximal_cliques(&ext).unwrap();
        let structure = GramStructure::from_cliques(b, dec);
        let coeff = constant_map(&[
            (&[4, 0, 0], 1.0),
            (&[0, 4, 0], 1.0),
            (&[0, 0, 4], 1.0),
            (&[1, 1, 2], 1.0),
            (&[1, 2, 1], 1.0),
        ]);
        let (rows, sizes) = assemble_membership(&support, &structure, 0, 0, &coeff).unwrap();
        assert_eq!(sizes, vec![3, 3, 3, 3]);

        // The x1 x2 x3^2 row must pick up both realizing pairs, which live
        // in different cliques, merged into the single row.
        let row = rows.iter().find(|r| r.exponent == exp(&[1, 1, 2])).unwrap();
        assert_eq!(row.blocks.len(), 2);
        assert_ne!(row.blocks[0].block, row.blocks[1].block);
        assert!(row.blocks.iter().all(|t| t.w == 2.0));
        assert_eq!(row.rhs, 1.0);

        // Every support exponent has its row; reachable non-support rows
        // carry rhs 0.
        for (p, _) in coeff.iter() {
            assert!(rows.iter().any(|r| r.exponent == *p));
        }
        for r in &rows {
            if !support.contains(&r.exponent) {
                assert_eq!(r.rhs, 0.0);
            }
        }
    }

    #[test]
    fn unrepresentable_support_exponent_is_an_error() {
        // After pruning, nothing can pair up to x1 x2.
        let support = support_of(2, &[&[1, 1]]);
        let chain = crate::basis::prune_basis(&support, &standard_basis(2, 1).unwrap());
        assert!(chain.b1.is_empty());
        let structure = GramStructure::dense(chain.b1);
        let err = assemble_membership(&support, &structure, 3, 0, &BTreeMap::new()).unwrap_err();
        match err {
            SosError::Unrepresentable { group, exponent } => {
                assert_eq!(group, 3);
                assert_eq!(exponent, exp(&[1, 1]));
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn scalar_template_rows_read_as_hand_derived() {
        let a = 0.5;
        let mats = [dmatrix![a]];
        let t = build_template(&mats, 1, &TemplateOpts::new(ProgramMode::Dense)).unwrap();
        assert_eq!(t.num_groups, 2);
        assert_eq!(t.block_sizes, vec![1, 1]);
        assert_eq!(t.mb, 1);
        assert_eq!(t.var_names, vec!["c[x1^2]"]);

        let p = t.assemble(2.0);
        assert_eq!(p.rows.len(), 2);
        // Q0 - c = -1  (p - x^2 SOS).
        assert_eq!(p.rows[0].group, 0);
        assert_eq!(p.rows[0].vars, vec![(0, -1.0)]);
        assert_eq!(p.rows[0].rhs, -1.0);
        // Q1 + (a^2 - gamma^2) c = 0  (gamma^2 p - p(ax) SOS).
        assert_eq!(p.rows[1].group, 1);
        assert_eq!(p.rows[1].vars.len(), 1);
        let w = p.rows[1].vars[0].1;
        assert!((w - (a * a - 4.0)).abs() <= 1e-15, "weight {w}");
        assert_eq!(p.rows[1].rhs, 0.0);
    }

    #[test]
    fn sparse_on_a_dense_instance_degenerates_to_dense() {
        let a = dmatrix![0.3, 0.3; 0.3, 0.3];
        let mats = [a];
        let dense = build_template(&mats, 1, &TemplateOpts::new(ProgramMode::Dense)).unwrap();
        let sparse =
            build_template(&mats, 1, &TemplateOpts::new(ProgramMode::Sparse { s: 1 })).unwrap();
        assert_eq!(dense.block_sizes, sparse.block_sizes);
        assert_eq!(dense.var_names, sparse.var_names);
        let pd = dense.assemble(1.0);
        let ps = sparse.assemble(1.0);
        assert_eq!(pd.rows.len(), ps.rows.len());
    }

    #[test]
    fn benchmark_template_blocks_match_their_decompositions() {
        let set = crate::matio::random_sparse_set(20, 2, 30, 3).unwrap();
        let t = build_template(
            &set.dense_all(),
            1,
            &TemplateOpts::new(ProgramMode::Sparse { s: 1 }),
        )
        .unwrap();
        let mut expected_blocks = 0;
        let mut expected_mb = 0;
        for st in &t.structures {
            expected_blocks += st.block_index.len();
            expected_mb = expected_mb.max(st.mb());
            if let Decomposition::Cliques(dec) = &st.decomposition {
                assert_eq!(dec.mb, st.mb());
            } else {
                panic!("sparse template built a dense structure");
            }
        }
        assert_eq!(t.block_sizes.len(), expected_blocks);
        assert_eq!(t.mb, expected_mb);
        assert!(t.mb < 20);
    }

    #[test]
    fn gamma_touches_only_transition_weights() {
        let set = crate::matio::random_sparse_set(6, 2, 10, 11).unwrap();
        let t = build_template(
            &set.dense_all(),
            1,
            &TemplateOpts::new(ProgramMode::Sparse { s: 1 }),
        )
        .unwrap();
        let p1 = t.assemble(0.9);
        let p2 = t.assemble(1.1);
        assert_eq!(p1.rows.len(), p2.rows.len());
        for (r1, r2) in p1.rows.iter().zip(&p2.rows) {
            assert_eq!(r1.blocks, r2.blocks);
            assert_eq!(r1.rhs, r2.rhs);
            if r1.group == 0 {
                assert_eq!(r1.vars, r2.vars);
            }
        }
        // Re-stamping is deterministic.
        let p1b = t.assemble(0.9);
        assert_eq!(p1.rows, p1b.rows);
    }

    #[test]
    fn dump_lists_every_row() {
        let mats = [dmatrix![0.5]];
        let t = build_template(&mats, 1, &TemplateOpts::new(ProgramMode::Dense)).unwrap();
        let dump = dump_problem(&t.assemble(1.0));
        assert!(dump.starts_with("blocks 1 1\nfree 1\n"));
        assert_eq!(dump.matches("\nrow ").count() + 1, 1 + t.assemble(1.0).rows.len());
    }
}
