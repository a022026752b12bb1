//! Command-line front end: input loading and generation, the bound and
//! lower commands, benchmark table runs, and graph dumps.

use std::alloc::{GlobalAlloc, Layout as AllocLayout, System};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::driver::{self, BoundOpts, BoundReport, Mode, RunStatus};
use crate::matio::{self, MatrixSet};
use crate::rng;
use crate::sosprog::{self, BasisLevel, ProgramMode, SosError, TemplateOpts};
use crate::spectral::{self, LowerOpts};
use crate::tsgraph;

static MEM_CURRENT: AtomicUsize = AtomicUsize::new(0);
static MEM_PEAK: AtomicUsize = AtomicUsize::new(0);

/// System-allocator wrapper keeping live-byte and high-water counters, so
/// table cells can report a best-effort memory figure. The binary installs
/// it as the global allocator; library tests run without it and the
/// counters just stay at zero.
pub struct CountingAlloc;

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: AllocLayout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let cur = MEM_CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            MEM_PEAK.fetch_max(cur, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, p: *mut u8, layout: AllocLayout) {
        System.dealloc(p, layout);
        MEM_CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, p: *mut u8, layout: AllocLayout, new_size: usize) -> *mut u8 {
        let q = System.realloc(p, layout, new_size);
        if !q.is_null() {
            if new_size >= layout.size() {
                let grow = new_size - layout.size();
                let cur = MEM_CURRENT.fetch_add(grow, Ordering::Relaxed) + grow;
                MEM_PEAK.fetch_max(cur, Ordering::Relaxed);
            } else {
                MEM_CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        q
    }
}

pub fn mem_current() -> usize {
    MEM_CURRENT.load(Ordering::Relaxed)
}

pub fn mem_peak() -> usize {
    MEM_PEAK.load(Ordering::Relaxed)
}

/// Drops the high-water mark back to the current level. Concurrent cells
/// stomp each other's resets, which is why the memory figures are labeled
/// best-effort; with one worker they are exact.
pub fn mem_reset_peak() {
    MEM_PEAK.store(MEM_CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Validated settings shared by the bound-computing commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub d: u32,
    pub s: u32,
    pub mode: Mode,
    pub tol: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d < 1 {
            return Err("d must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return Err("tol must be positive".into());
        }
        if !(self.gamma_lo >= 0.0 && self.gamma_lo < self.gamma_hi) {
            return Err(format!(
                "need 0 <= gamma-lo < gamma-hi, got [{}, {}]",
                self.gamma_lo, self.gamma_hi
            ));
        }
        if self.mode != Mode::Dense && self.s < 1 {
            return Err("s must be at least 1 outside dense mode".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
enum CliFailure {
    /// Bad arguments, unreadable input, malformed spec: exit 2.
    Config(String),
    /// The computation ran but could not certify an answer: exit 3.
    Run(String),
}

use CliFailure::{Config, Run};

fn driver_failure(e: driver::DriverError) -> CliFailure {
    use driver::DriverError::*;
    match e {
        BadInterval { .. } | BadDegree | BadOrder => Config(e.to_string()),
        CapExceeded { .. } | Assembly(_) | Spectral(_) => Run(e.to_string()),
    }
}

#[derive(Parser)]
#[command(
    name = "sparsejsr",
    version,
    about = "Joint spectral radius bounds via sparse sum-of-squares relaxations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certified upper bound (plus optional lower bound) for a matrix set.
    Bound(BoundArgs),
    /// Product-enumeration lower bound only.
    Lower(LowerArgs),
    /// Write a generated matrix set to a JSON file.
    Generate(GenerateArgs),
    /// Run a suite of bound computations and print a benchmark table.
    Table(TableArgs),
    /// Dump term-sparsity graphs and clique decompositions as JSON.
    GraphDump(GraphDumpArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Matrix-set JSON file.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Generate a random sparse set: n,m,edges (seeded by --seed).
    #[arg(long, value_name = "N,M,EDGES")]
    random: Option<String>,
    /// Generate a control benchmark set: n_plant,m (seeded by --seed).
    #[arg(long, value_name = "NPLANT,M")]
    control: Option<String>,
    /// Seed for the generator inputs.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Relaxation half-degree.
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Relaxation family: dense, support-restricted, or sparse.
    #[arg(long, default_value = "sparse")]
    mode: String,
    /// Sparsity hierarchy level (ignored in dense mode).
    #[arg(long, default_value_t = 1)]
    s: u32,
    /// Bisection interval width at termination.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma_hi: f64,
    /// Apply the half-Newton-polytope basis filter.
    #[arg(long)]
    newton: bool,
    /// Skip the product-enumeration lower bound.
    #[arg(long)]
    no_lower: bool,
    /// Longest product word for the lower bound.
    #[arg(long, default_value_t = 6)]
    lower_maxlen: usize,
    /// Leave wall time out of the report (deterministic output).
    #[arg(long)]
    no_timing: bool,
    /// Write the report JSON here.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Write a text dump of the assembled feasibility problem here.
    #[arg(long, value_name = "FILE")]
    dump_problem: Option<PathBuf>,
    /// Contraction factor for --dump-problem (defaults to gamma-hi).
    #[arg(long)]
    dump_gamma: Option<f64>,
}

#[derive(Args)]
struct LowerArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Longest product word to consider.
    #[arg(long, default_value_t = 6)]
    maxlen: usize,
    /// Cap on enumerated words.
    #[arg(long, default_value_t = 1 << 20)]
    budget: usize,
    /// Write the result JSON here.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Random sparse set: n,m,edges.
    #[arg(long, value_name = "N,M,EDGES")]
    random: Option<String>,
    /// Control benchmark set: n_plant,m.
    #[arg(long, value_name = "NPLANT,M")]
    control: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Destination matrix-set JSON file.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    /// Instance family: random or control.
    #[arg(long, default_value = "random")]
    suite: String,
    /// Sizes (n for random, n_plant for control).
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    sizes: Vec<usize>,
    /// Seed labels; each cell derives its generator seed from (label, size).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Matrices per set.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Random suite: edges per matrix = n + this.
    #[arg(long, default_value_t = 10)]
    extra_edges: usize,
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Modes to run per instance.
    #[arg(long, value_delimiter = ',', default_value = "dense,sparse")]
    modes: Vec<String>,
    #[arg(long, default_value_t = 1)]
    s: u32,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Wall cap per cell in seconds; a breach prints as "-".
    #[arg(long, default_value_t = 3600.0)]
    timeout_s: f64,
    /// Best-effort memory cap per cell in MiB; a breach prints as "*".
    #[arg(long)]
    mem_cap_mb: Option<usize>,
    /// Concurrent cells (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Write the machine-readable table JSON here.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GraphDumpArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1)]
    d: u32,
    #[arg(long, default_value_t = 1)]
    s: u32,
    /// Apply the half-Newton-polytope basis filter.
    #[arg(long)]
    newton: bool,
    /// Destination JSON file (stdout when absent).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

/// Entry point behind the binary: parses, dispatches, and maps every
/// outcome onto the exit-code contract (0 ok, 2 config error, 3 the
/// computation could not certify an answer).
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Bound(a) => cmd_bound(&a),
        Command::Lower(a) => cmd_lower(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Table(a) => cmd_table(&a),
        Command::GraphDump(a) => cmd_graph_dump(&a),
    };
    match result {
        Ok(code) => code,
        Err(Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Run(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

fn parse_usize_list<const K: usize>(spec: &str, what: &str) -> Result<[usize; K], CliFailure> {
    let parts: Vec<_> = spec.split(',').collect();
    if parts.len() != K {
        return Err(Config(format!(
            "{what} wants {K} comma-separated numbers, got {spec:?}"
        )));
    }
    let mut out = [0usize; K];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| Config(format!("{what}: {part:?} is not a number")))?;
    }
    Ok(out)
}

fn load_set(inp: &InputArgs) -> Result<MatrixSet, CliFailure> {
    let picks =
        inp.input.is_some() as u8 + inp.random.is_some() as u8 + inp.control.is_some() as u8;
    if picks != 1 {
        return Err(Config(
            "give exactly one of --input, --random, --control".into(),
        ));
    }
    if let Some(path) = &inp.input {
        return MatrixSet::load(path)
            .map_err(|e| Config(format!("reading {}: {e}", path.display())));
    }
    if let Some(spec) = &inp.random {
        let [n, m, edges] = parse_usize_list::<3>(spec, "--random")?;
        return matio::random_sparse_set(n, m, edges, inp.seed).map_err(|e| Config(e.to_string()));
    }
    let spec = inp.control.as_ref().unwrap();
    let [n_plant, m] = parse_usize_list::<2>(spec, "--control")?;
    matio::control_set(n_plant, m, inp.seed).map_err(|e| Config(e.to_string()))
}

fn parse_mode(s: &str) -> Result<Mode, CliFailure> {
    Mode::parse(s).ok_or_else(|| {
        Config(format!(
            "unknown mode {s:?} (expected dense, support-restricted, or sparse)"
        ))
    })
}

fn run_one(
    set: &MatrixSet,
    cfg: &RunConfig,
    opts: &BoundOpts,
) -> Result<BoundReport, driver::DriverError> {
    match cfg.mode {
        Mode::Dense => driver::dense_bound(set, cfg.d, opts),
        Mode::SupportRestricted => driver::support_restricted_bound(set, cfg.d, cfg.s, opts),
        Mode::Sparse => driver::sparse_bound(set, cfg.d, cfg.s, opts),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => "-".into(),
    }
}

fn cmd_bound(a: &BoundArgs) -> Result<i32, CliFailure> {
    let cfg = RunConfig {
        d: a.d,
        s: a.s,
        mode: parse_mode(&a.mode)?,
        tol: a.tol,
        gamma_lo: a.gamma_lo,
        gamma_hi: a.gamma_hi,
    };
    cfg.validate().map_err(Config)?;
    let set = load_set(&a.input)?;
    let opts = BoundOpts {
        tol: cfg.tol,
        gamma_lo: cfg.gamma_lo,
        gamma_hi: cfg.gamma_hi,
        with_lower: !a.no_lower,
        lower_maxlen: a.lower_maxlen,
        newton: a.newton,
        timing: !a.no_timing,
        ..BoundOpts::default()
    };

    if let Some(path) = &a.dump_problem {
        let gamma = a.dump_gamma.unwrap_or(cfg.gamma_hi);
        let text = dump_problem_text(&set, &cfg, opts.newton, gamma)?;
        std::fs::write(path, text)
            .map_err(|e| Config(format!("writing {}: {e}", path.display())))?;
    }

    let report = run_one(&set, &cfg, &opts).map_err(driver_failure)?;
    println!(
        "mode={} d={} s={} n={} m={} lb={} ub={:.6} mb={} solves={} time={} status={}{}",
        report.mode.as_str(),
        report.d,
        report.s.map_or_else(|| "-".into(), |s| s.to_string()),
        report.n,
        report.m,
        fmt_opt(report.lb, 6),
        report.ub,
        report.mb,
        report.iterations,
        report
            .time_s
            .map_or_else(|| "-".into(), |t| format!("{t:.2}s")),
        report.status.as_str(),
        if report.fallback_used {
            " (full-basis fallback)"
        } else {
            ""
        },
    );
    if let Some(path) = &a.output {
        matio::save_report(&report, path)
            .map_err(|e| Config(format!("writing {}: {e}", path.display())))?;
    }
    Ok(match report.status {
        RunStatus::Ok => 0,
        RunStatus::SolverIndeterminate => 3,
    })
}

fn dump_problem_text(
    set: &MatrixSet,
    cfg: &RunConfig,
    newton: bool,
    gamma: f64,
) -> Result<String, CliFailure> {
    let pmode = match cfg.mode {
        Mode::Dense => ProgramMode::Dense,
        Mode::SupportRestricted => ProgramMode::SupportRestricted { s: cfg.s },
        Mode::Sparse => ProgramMode::Sparse { s: cfg.s },
    };
    let mut topts = TemplateOpts::new(pmode);
    topts.newton = newton;
    let template = match sosprog::build_template(&set.dense_all(), cfg.d, &topts) {
        Ok(t) => t,
        Err(SosError::Unrepresentable { .. }) => {
            topts.basis_level = BasisLevel::Full;
            sosprog::build_template(&set.dense_all(), cfg.d, &topts)
                .map_err(|e| Run(e.to_string()))?
        }
        Err(e) => return Err(Run(e.to_string())),
    };
    Ok(sosprog::dump_problem(&template.assemble(gamma)))
}

fn cmd_lower(a: &LowerArgs) -> Result<i32, CliFailure> {
    let set = load_set(&a.input)?;
    let report = spectral::product_lower_bound(
        &set.dense_all(),
        &LowerOpts {
            max_length: a.maxlen,
            budget: a.budget,
        },
    )
    .map_err(|e| Run(e.to_string()))?;
    let word: Vec<String> = report.witness_word.iter().map(|i| i.to_string()).collect();
    println!(
        "lb={:.6} word=[{}] maxlen={} truncated={}",
        report.value,
        word.join(" "),
        report.max_length,
        report.truncated
    );
    if let Some(path) = &a.output {
        #[derive(Serialize)]
        struct LowerFile<'a> {
            lb: f64,
            witness_word: &'a [usize],
            max_length: usize,
            truncated: bool,
        }
        let text = matio::to_json_17(&LowerFile {
            lb: report.value,
            witness_word: &report.witness_word,
            max_length: report.max_length,
            truncated: report.truncated,
        })
        .map_err(|e| Run(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Config(format!("writing {}: {e}", path.display())))?;
    }
    Ok(0)
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32, CliFailure> {
    let inp = InputArgs {
        input: None,
        random: a.random.clone(),
        control: a.control.clone(),
        seed: a.seed,
    };
    let set = load_set(&inp)?;
    set.save(&a.output)
        .map_err(|e| Config(format!("writing {}: {e}", a.output.display())))?;
    println!(
        "wrote n={} m={} seed={} to {}",
        set.n,
        set.m(),
        a.seed,
        a.output.display()
    );
    Ok(0)
}

/// One mode's result inside a table row.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum CellOutcome {
    Ok {
        ub: f64,
        mb: usize,
        time_s: f64,
        status: String,
    },
    Timeout,
    Memory {
        peak_mib: usize,
    },
    Error {
        message: String,
    },
}

/// One instance's worth of table cells.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub seed: u64,
    pub cell_seed: u64,
    pub lb: Option<f64>,
    pub cells: Vec<CellOutcome>,
}

/// Fixed-width text rendering of the benchmark table: per mode the columns
/// ub, time, mb; "-" marks a wall-cap breach, "*" a memory-cap breach, and
/// "err" a failed cell (details listed under the table). An ub followed by
/// "?" was classified solver-indeterminate.
pub fn render_table(rows: &[TableRow], modes: &[Mode]) -> String {
    let mut head = vec!["n".to_string(), "seed".to_string(), "lb".to_string()];
    for m in modes {
        head.push(format!("{} ub", m.as_str()));
        head.push("time(s)".to_string());
        head.push("mb".to_string());
    }
    let mut grid = vec![head];
    let mut notes = Vec::new();
    for row in rows {
        let mut line = vec![
            row.n.to_string(),
            row.seed.to_string(),
            fmt_opt(row.lb, 4),
        ];
        for (mode, cell) in modes.iter().zip(&row.cells) {
            match cell {
                CellOutcome::Ok {
                    ub,
                    mb,
                    time_s,
                    status,
                } => {
                    let mark = if status == RunStatus::SolverIndeterminate.as_str() {
                        "?"
                    } else {
                        ""
                    };
                    line.push(format!("{ub:.4}{mark}"));
                    line.push(format!("{time_s:.2}"));
                    line.push(mb.to_string());
                }
                CellOutcome::Timeout => {
                    line.extend(["-", "-", "-"].map(String::from));
                }
                CellOutcome::Memory { .. } => {
                    line.extend(["*", "*", "*"].map(String::from));
                }
                CellOutcome::Error { message } => {
                    line.extend(["err", "-", "-"].map(String::from));
                    notes.push(format!(
                        "cell n={} seed={} {}: {message}",
                        row.n,
                        row.seed,
                        mode.as_str()
                    ));
                }
            }
        }
        grid.push(line);
    }
    let cols = grid[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &grid {
        let mut parts = Vec::with_capacity(cols);
        for (cell, w) in line.iter().zip(&widths) {
            parts.push(format!("{cell:<w$}"));
        }
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    }
    for note in notes {
        out.push_str(&note);
        out.push('\n');
    }
    out
}

enum Suite {
    Random,
    Control,
}

fn cmd_table(a: &TableArgs) -> Result<i32, CliFailure> {
    let suite = match a.suite.as_str() {
        "random" => Suite::Random,
        "control" => Suite::Control,
        other => return Err(Config(format!("unknown suite {other:?}"))),
    };
    let modes = a
        .modes
        .iter()
        .map(|s| parse_mode(s))
        .collect::<Result<Vec<_>, _>>()?;
    if a.sizes.is_empty() || a.seeds.is_empty() || modes.is_empty() {
        return Err(Config("empty suite: need sizes, seeds, and modes".into()));
    }
    let cfg0 = RunConfig {
        d: a.d,
        s: a.s,
        mode: modes[0],
        tol: a.tol,
        gamma_lo: 0.0,
        gamma_hi: 2.0,
    };
    cfg0.validate().map_err(Config)?;
    if !(a.timeout_s > 0.0) {
        return Err(Config("timeout-s must be positive".into()));
    }

    let instances: Vec<(usize, u64)> = a
        .sizes
        .iter()
        .flat_map(|&n| a.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let workers = a
        .workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|x| x.get())
                .unwrap_or(1)
        })
        .max(1);

    let slots: Mutex<Vec<Option<TableRow>>> = Mutex::new(vec![None; instances.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(instances.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(size, seed)) = instances.get(idx) else {
                    break;
                };
                let row = run_table_instance(a, &suite, &modes, size, seed);
                slots.lock().unwrap()[idx] = Some(row);
            });
        }
    });
    let rows: Vec<TableRow> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every instance slot filled"))
        .collect();

    print!("{}", render_table(&rows, &modes));

    if let Some(path) = &a.output {
        #[derive(Serialize)]
        struct TableFile<'a> {
            suite: &'a str,
            d: u32,
            s: u32,
            tol: f64,
            m: usize,
            modes: Vec<&'static str>,
            rows: &'a [TableRow],
        }
        let text = matio::to_json_17(&TableFile {
            suite: &a.suite,
            d: a.d,
            s: a.s,
            tol: a.tol,
            m: a.m,
            modes: modes.iter().map(|m| m.as_str()).collect(),
            rows: &rows,
        })
        .map_err(|e| Run(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Config(format!("writing {}: {e}", path.display())))?;
    }

    let any_ok = rows
        .iter()
        .flat_map(|r| r.cells.iter())
        .any(|c| matches!(c, CellOutcome::Ok { .. }));
    Ok(if any_ok { 0 } else { 3 })
}

fn run_table_instance(
    a: &TableArgs,
    suite: &Suite,
    modes: &[Mode],
    size: usize,
    seed: u64,
) -> TableRow {
    // Documented cell-seed derivation: mix the seed label with the size, so
    // every (size, seed) cell draws an independent, reproducible instance.
    let cell_seed = rng::mix(seed, size as u64);
    let built = match suite {
        Suite::Random => matio::random_sparse_set(size, a.m, size + a.extra_edges, cell_seed),
        Suite::Control => matio::control_set(size, a.m, cell_seed),
    };
    let set = match built {
        Ok(s) => s,
        Err(e) => {
            return TableRow {
                n: size,
                seed,
                cell_seed,
                lb: None,
                cells: vec![
                    CellOutcome::Error {
                        message: format!("generator: {e}")
                    };
                    modes.len()
                ],
            }
        }
    };
    let lb = spectral::product_lower_bound(&set.dense_all(), &LowerOpts::default())
        .ok()
        .map(|r| r.value);
    let cells = modes
        .iter()
        .map(|&mode| {
            let cfg = RunConfig {
                d: a.d,
                s: a.s,
                mode,
                tol: a.tol,
                gamma_lo: 0.0,
                gamma_hi: 2.0,
            };
            run_timed_cell(
                set.clone(),
                cfg,
                Duration::from_secs_f64(a.timeout_s),
                a.mem_cap_mb.map(|mib| mib << 20),
            )
        })
        .collect();
    TableRow {
        n: set.n,
        seed,
        cell_seed,
        lb,
        cells,
    }
}

/// Runs one bound computation on its own thread under a wall deadline. On
/// a breach the cell is marked and abandoned; the orphan thread finishes
/// (or not) in the background and its result is discarded.
fn run_timed_cell(
    set: MatrixSet,
    cfg: RunConfig,
    timeout: Duration,
    mem_cap_bytes: Option<usize>,
) -> CellOutcome {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        mem_reset_peak();
        let base = mem_current();
        let start = Instant::now();
        let opts = BoundOpts {
            tol: cfg.tol,
            gamma_lo: cfg.gamma_lo,
            gamma_hi: cfg.gamma_hi,
            with_lower: false,
            timing: false,
            ..BoundOpts::default()
        };
        let res = run_one(&set, &cfg, &opts);
        let elapsed = start.elapsed().as_secs_f64();
        let peak = mem_peak().saturating_sub(base);
        let _ = tx.send((res, elapsed, peak));
    });
    match rx.recv_timeout(timeout) {
        Err(_) => CellOutcome::Timeout,
        Ok((Err(e), _, _)) => CellOutcome::Error {
            message: e.to_string(),
        },
        Ok((Ok(report), elapsed, peak)) => {
            if mem_cap_bytes.is_some_and(|cap| peak > cap) {
                CellOutcome::Memory {
                    peak_mib: peak >> 20,
                }
            } else {
                CellOutcome::Ok {
                    ub: report.ub,
                    mb: report.mb,
                    time_s: elapsed,
                    status: report.status.as_str().to_string(),
                }
            }
        }
    }
}

fn cmd_graph_dump(a: &GraphDumpArgs) -> Result<i32, CliFailure> {
    let cfg = RunConfig {
        d: a.d,
        s: a.s,
        mode: Mode::Sparse,
        tol: 1e-5,
        gamma_lo: 0.0,
        gamma_hi: 2.0,
    };
    cfg.validate().map_err(Config)?;
    let set = load_set(&a.input)?;
    let mut topts = TemplateOpts::new(ProgramMode::Sparse { s: a.s });
    topts.newton = a.newton;
    let mut basis_level = "pruned";
    let template = match sosprog::build_template(&set.dense_all(), a.d, &topts) {
        Ok(t) => t,
        Err(SosError::Unrepresentable { .. }) => {
            topts.basis_level = BasisLevel::Full;
            basis_level = "full";
            sosprog::build_template(&set.dense_all(), a.d, &topts)
                .map_err(|e| Run(e.to_string()))?
        }
        Err(e) => return Err(Run(e.to_string())),
    };

    #[derive(Serialize)]
    struct GroupDump {
        group: usize,
        kind: &'static str,
        matrix: Option<usize>,
        basis: Vec<Vec<u32>>,
        support: Vec<Vec<u32>>,
        tsp_edges: Vec<(usize, usize)>,
        decomposition: &'static str,
        fill_edges: Vec<(usize, usize)>,
        cliques: Vec<Vec<usize>>,
        block_sizes: Vec<usize>,
    }
    #[derive(Serialize)]
    struct GraphFile {
        n: usize,
        m: usize,
        d: u32,
        s: u32,
        basis_level: &'static str,
        stabilized_at: Option<u32>,
        mb: usize,
        groups: Vec<GroupDump>,
    }

    let mut groups = Vec::new();
    for (g, structure) in template.structures.iter().enumerate() {
        let support = &template.group_supports[g];
        let basis = &structure.basis;
        let graph = tsgraph::tsp_graph(support, basis);
        let (decomposition, fill_edges, cliques) = match &structure.decomposition {
            sosprog::Decomposition::Dense => ("dense", Vec::new(), Vec::new()),
            sosprog::Decomposition::Cliques(dec) => {
                ("cliques", dec.fill_edges.clone(), dec.cliques.clone())
            }
        };
        groups.push(GroupDump {
            group: g,
            kind: if g == 0 { "positivity" } else { "transition" },
            matrix: (g > 0).then(|| g - 1),
            basis: basis
                .exponents()
                .iter()
                .map(|e| e.powers().to_vec())
                .collect(),
            support: support.iter().map(|e| e.powers().to_vec()).collect(),
            tsp_edges: graph.edges(),
            decomposition,
            fill_edges,
            cliques,
            block_sizes: structure
                .block_index
                .iter()
                .map(|b| b.len())
                .collect(),
        });
    }
    let file = GraphFile {
        n: template.n,
        m: template.m,
        d: a.d,
        s: a.s,
        basis_level,
        stabilized_at: template.stabilized_at,
        mb: template.mb,
        groups,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Run(e.to_string()))?;
    match &a.output {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| Config(format!("writing {}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(parts: &[&str]) -> Vec<String> {
        std::iter::once("sparsejsr")
            .chain(parts.iter().copied())
            .map(String::from)
            .collect()
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("sparsejsr-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let good = RunConfig {
            d: 1,
            s: 1,
            mode: Mode::Sparse,
            tol: 1e-5,
            gamma_lo: 0.0,
            gamma_hi: 2.0,
        };
        assert!(good.validate().is_ok());
        assert!(RunConfig { d: 0, ..good.clone() }.validate().is_err());
        assert!(RunConfig { tol: 0.0, ..good.clone() }.validate().is_err());
        assert!(RunConfig {
            gamma_lo: 2.0,
            gamma_hi: 1.0,
            ..good.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig { s: 0, ..good.clone() }.validate().is_err());
        assert!(RunConfig {
            s: 0,
            mode: Mode::Dense,
            ..good
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn spec_lists_parse_or_complain() {
        assert_eq!(parse_usize_list::<3>("6,2,10", "x").unwrap(), [6, 2, 10]);
        assert_eq!(parse_usize_list::<2>(" 5 , 3 ", "x").unwrap(), [5, 3]);
        assert!(parse_usize_list::<3>("6,2", "x").is_err());
        assert!(parse_usize_list::<2>("a,3", "x").is_err());
    }

    #[test]
    fn unknown_flags_and_bad_modes_exit_two() {
        assert_eq!(run(argv(&["bound", "--nonsense"])), 2);
        assert_eq!(
            run(argv(&["bound", "--random", "2,1,2", "--mode", "quantum"])),
            2
        );
        assert_eq!(run(argv(&["bound"])), 2);
        assert_eq!(
            run(argv(&["bound", "--input", "/definitely/not/here.json"])),
            2
        );
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(argv(&["--help"])), 0);
        assert_eq!(run(argv(&["bound", "--help"])), 0);
    }

    #[test]
    fn generate_then_bound_matches_the_in_memory_driver() {
        let dir = temp_dir("roundtrip");
        let set_path = dir.join("set.json");
        let rep_path = dir.join("report.json");
        assert_eq!(
            run(argv(&[
                "generate",
                "--random",
                "4,2,6",
                "--seed",
                "7",
                "--output",
                set_path.to_str().unwrap(),
            ])),
            0
        );
        let code = run(argv(&[
            "bound",
            "--input",
            set_path.to_str().unwrap(),
            "--mode",
            "sparse",
            "--d",
            "1",
            "--s",
            "1",
            "--no-timing",
            "--output",
            rep_path.to_str().unwrap(),
        ]));
        assert!(code == 0 || code == 3, "exit {code}");

        let set = matio::random_sparse_set(4, 2, 6, 7).unwrap();
        let opts = BoundOpts {
            timing: false,
            ..BoundOpts::default()
        };
        let direct = driver::sparse_bound(&set, 1, 1, &opts).unwrap();
        let from_file = matio::load_report(&rep_path).unwrap();
        assert_eq!(from_file.ub.to_bits(), direct.ub.to_bits());
        assert_eq!(
            from_file.lb.map(f64::to_bits),
            direct.lb.map(f64::to_bits)
        );
        assert_eq!(from_file.mb, direct.mb);
        assert_eq!(from_file.iterations, direct.iterations);
        assert_eq!(from_file.status, direct.status);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unbounded_growth_exits_three() {
        let dir = temp_dir("cap");
        let set_path = dir.join("big.json");
        let set = MatrixSet::from_dense(&[nalgebra::dmatrix![200.0]]).unwrap();
        set.save(&set_path).unwrap();
        assert_eq!(
            run(argv(&[
                "bound",
                "--input",
                set_path.to_str().unwrap(),
                "--mode",
                "dense",
            ])),
            3
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn lower_command_writes_its_result() {
        let dir = temp_dir("lower");
        let set_path = dir.join("pair.json");
        let out_path = dir.join("lb.json");
        let a = nalgebra::dmatrix![1.0, 1.0; 0.0, 1.0];
        let b = nalgebra::dmatrix![1.0, 0.0; 1.0, 1.0];
        MatrixSet::from_dense(&[a, b]).unwrap().save(&set_path).unwrap();
        assert_eq!(
            run(argv(&[
                "lower",
                "--input",
                set_path.to_str().unwrap(),
                "--maxlen",
                "2",
                "--output",
                out_path.to_str().unwrap(),
            ])),
            0
        );
        let text = std::fs::read_to_string(&out_path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let phi = 0.5 * (1.0 + 5.0_f64.sqrt());
        assert!((v["lb"].as_f64().unwrap() - phi).abs() <= 1e-9);
        assert_eq!(v["witness_word"].as_array().unwrap().len(), 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn table_marks_follow_the_notation() {
        let rows = vec![
            TableRow {
                n: 10,
                seed: 1,
                cell_seed: 42,
                lb: Some(0.7967),
                cells: vec![
                    CellOutcome::Ok {
                        ub: 0.8192,
                        mb: 10,
                        time_s: 2.13,
                        status: "ok".into(),
                    },
                    CellOutcome::Timeout,
                ],
            },
            TableRow {
                n: 20,
                seed: 2,
                cell_seed: 43,
                lb: None,
                cells: vec![
                    CellOutcome::Memory { peak_mib: 900 },
                    CellOutcome::Error {
                        message: "boom".into(),
                    },
                ],
            },
        ];
        let text = render_table(&rows, &[Mode::Dense, Mode::Sparse]);
        assert!(text.contains("0.8192"), "{text}");
        assert!(text.lines().nth(1).unwrap().contains('-'), "{text}");
        assert!(text.lines().nth(2).unwrap().contains('*'), "{text}");
        assert!(text.contains("cell n=20 seed=2 sparse: boom"), "{text}");
    }

    #[test]
    fn tiny_table_runs_end_to_end() {
        let dir = temp_dir("table");
        let out = dir.join("table.json");
        let code = run(argv(&[
            "table",
            "--suite",
            "random",
            "--sizes",
            "3",
            "--seeds",
            "1,2",
            "--m",
            "2",
            "--extra-edges",
            "1",
            "--modes",
            "sparse",
            "--tol",
            "1e-3",
            "--workers",
            "1",
            "--output",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
        let cell = &v["rows"][0]["cells"][0];
        assert_eq!(cell["outcome"], "ok");
        assert!(cell["ub"].as_f64().unwrap() > 0.0);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_modes_make_an_empty_suite() {
        assert_eq!(
            run(argv(&["table", "--modes", "quantum", "--sizes", "3"])),
            2
        );
    }

    #[test]
    fn graph_dump_describes_every_group() {
        let dir = temp_dir("graphdump");
        let out = dir.join("graphs.json");
        let code = run(argv(&[
            "graph-dump",
            "--random",
            "4,2,6",
            "--seed",
            "9",
            "--d",
            "1",
            "--s",
            "1",
            "--output",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["groups"].as_array().unwrap().len(), 3);
        assert_eq!(v["groups"][0]["kind"], "positivity");
        assert_eq!(v["groups"][1]["matrix"], 0);
        assert!(v["mb"].as_u64().unwrap() >= 1);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bound_writes_a_problem_dump_when_asked() {
        let dir = temp_dir("dump");
        let dump = dir.join("problem.txt");
        let code = run(argv(&[
            "bound",
            "--random",
            "2,1,2",
            "--seed",
            "3",
            "--mode",
            "dense",
            "--tol",
            "1e-3",
            "--dump-problem",
            dump.to_str().unwrap(),
        ]));
        assert!(code == 0 || code == 3, "exit {code}");
        let text = std::fs::read_to_string(&dump).unwrap();
        assert!(text.contains("blocks"), "{text}");
        assert!(text.contains("row"), "{text}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
