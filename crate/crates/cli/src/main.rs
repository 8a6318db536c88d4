//! Command-line surface: generate instances, run the distributed algorithms,
//! verify colorings, analyze graph parameters, run the sinkless-orientation
//! reduction, query the Kneser homomorphism oracle, and benchmark matrices.
//!
//! Exit codes: 0 success, 1 verification failure or algorithm error, 2 usage
//! errors (malformed arguments or unreadable inputs).

use std::fs;
use std::io::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fracolor::algo_grid::run_grid;
use fracolor::algo_maxdeg::run_maxdeg;
use fracolor::algo_sparse::run_sparse;
use fracolor::coloring::{kneser_hom_exists, verify_set_coloring, HomSearch, SetColoring};
use fracolor::generators::{
    gen_bipartite_cubic, gen_cycle, gen_grid, gen_high_girth_sparse, gen_k4free_cubic,
    gen_kneser, gen_path, gen_tree,
};
use fracolor::graph::{
    girth, is_k_path_degenerate, mad_exact, petersen, Graph, GraphFile,
};
use fracolor::localsim::{assign_ids, IdScheme, RoundTrace, RunConfig};
use fracolor::primitives::{central_component_coloring, is_independent, random_min_id_is};
use fracolor::reduction::{extract_sinkless, verify_sinkless, OrientationVerdict};

#[derive(Parser)]
#[command(
    name = "fracolor",
    about = "Distributed fractional (p:q)-coloring toolkit on a LOCAL-model simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as graph JSON
    Gen(GenArgs),
    /// Run a distributed algorithm; emits coloring JSON and trace JSON
    Run(RunArgs),
    /// Check a coloring against a graph; exit 0 iff valid
    Verify(VerifyArgs),
    /// Report girth, maximum degree, exact mad, and k-path-degeneracy
    Analyze(AnalyzeArgs),
    /// Triangle-expand a cubic graph, 3-color centrally, extract and verify
    /// a sinkless orientation
    Reduce(ReduceArgs),
    /// Decide whether the graph admits a (p:q)-coloring by exhaustive search
    Oracle(OracleArgs),
    /// Run a benchmark matrix from a JSON spec and write CSV rows
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum GenKind {
    Grid,
    Path,
    Cycle,
    Tree,
    BipartiteCubic,
    K4freeCubic,
    HighGirthSparse,
    Kneser,
    Petersen,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Vertex count (side length per axis for grids, per side for
    /// bipartite-cubic and high-girth-sparse)
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Grid dimension
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Palette size (kneser)
    #[arg(long, default_value_t = 0)]
    p: u64,
    /// Subset size (kneser, high-girth-sparse)
    #[arg(long, default_value_t = 1)]
    q: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<String>,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum Alg {
    Maxdeg,
    Grid,
    Sparse,
    Baseline,
}

impl Alg {
    fn name(self) -> &'static str {
        match self {
            Alg::Maxdeg => "maxdeg",
            Alg::Grid => "grid",
            Alg::Sparse => "sparse",
            Alg::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum SchemeArg {
    Permutation,
    RandomRange,
    AdversarialBfs,
}

impl SchemeArg {
    fn to_scheme(self) -> IdScheme {
        match self {
            SchemeArg::Permutation => IdScheme::Permutation,
            SchemeArg::RandomRange => IdScheme::RandomRange,
            SchemeArg::AdversarialBfs => IdScheme::AdversarialBfs,
        }
    }
    fn name(self) -> &'static str {
        match self {
            SchemeArg::Permutation => "permutation",
            SchemeArg::RandomRange => "random-range",
            SchemeArg::AdversarialBfs => "adversarial-bfs",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    graph: String,
    #[arg(long, value_enum)]
    alg: Alg,
    #[arg(long, default_value_t = 1)]
    q: u64,
    /// Grid dimension (grid only)
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Degree bound Δ (maxdeg only; defaults to the true maximum degree)
    #[arg(long)]
    delta: Option<u64>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Permutation)]
    id_scheme: SchemeArg,
    #[arg(long, default_value_t = 0)]
    id_seed: u64,
    /// Seed for the algorithm's private randomness (baseline only; the other
    /// algorithms are deterministic)
    #[arg(long, default_value_t = 0)]
    run_seed: u64,
    /// Skip the central structural prechecks (sparse: girth and mad; grid:
    /// lattice recognition); invalid inputs may then abort mid-run
    #[arg(long, default_value_t = false)]
    skip_precheck: bool,
    /// Write the coloring JSON here (baseline: selected-set JSON)
    #[arg(long)]
    coloring_out: Option<String>,
    /// Write the round-trace JSON here
    #[arg(long)]
    trace_out: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    coloring: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    graph: String,
    /// Path length for the k-path-degeneracy check
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Args)]
struct ReduceArgs {
    /// Cubic base graph
    #[arg(long)]
    graph: String,
    /// Write the orientation JSON (list of arcs) here
    #[arg(long)]
    orientation_out: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    p: u64,
    #[arg(long)]
    q: u64,
    /// Backtracking node budget before giving up
    #[arg(long, default_value_t = 1_000_000_000)]
    budget: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON matrix spec: {"cells": [{"kind", "n", "d", "gen_seed", "alg",
    /// "q", "id_scheme", "id_seed", "run_seed"}, ...]}
    #[arg(long)]
    spec: String,
    /// Output CSV file; stdout when omitted
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn load_graph(path: &str) -> Result<GraphFile, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))?;
    GraphFile::from_json(&text).map_err(|e| format!("parsing {path}: {e}"))
}

fn write_out(out: &Option<String>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("writing {path}: {e}")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn build_instance(
    kind: GenKind,
    n: usize,
    d: u32,
    p: u64,
    q: u64,
    seed: u64,
) -> Result<GraphFile, String> {
    let need_n = |label: &str| {
        if n == 0 {
            Err(format!("--n is required for {label}"))
        } else {
            Ok(n)
        }
    };
    match kind {
        GenKind::Grid => Ok(gen_grid(&vec![need_n("grid")?; d as usize])),
        GenKind::Path => Ok(gen_path(need_n("path")?)),
        GenKind::Cycle => Ok(gen_cycle(need_n("cycle")?)),
        GenKind::Tree => Ok(gen_tree(need_n("tree")?, seed)),
        GenKind::BipartiteCubic => {
            gen_bipartite_cubic(need_n("bipartite-cubic")?, seed).map_err(|e| e.to_string())
        }
        GenKind::K4freeCubic => {
            gen_k4free_cubic(need_n("k4free-cubic")?, seed).map_err(|e| e.to_string())
        }
        GenKind::HighGirthSparse => {
            gen_high_girth_sparse(need_n("high-girth-sparse")?, q, seed).map_err(|e| e.to_string())
        }
        GenKind::Kneser => {
            if p == 0 {
                return Err("--p is required for kneser".into());
            }
            Ok(gen_kneser(p, q))
        }
        GenKind::Petersen => Ok(GraphFile {
            graph: petersen(),
            meta: Some(serde_json::json!({ "kind": "petersen" })),
        }),
    }
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode, String> {
    let gf = build_instance(a.kind, a.n, a.d, a.p, a.q, a.seed)?;
    write_out(&a.out, &gf.to_json())?;
    Ok(ExitCode::SUCCESS)
}

/// Outcome of one algorithm execution: the artifact to write plus its trace.
/// `coloring` is None for the baseline, which outputs an independent set.
struct RunOutcome {
    coloring: Option<SetColoring>,
    artifact: String,
    trace: RoundTrace,
}

fn execute(
    g: &Graph,
    alg: Alg,
    q: u64,
    d: u32,
    delta: Option<u64>,
    scheme: SchemeArg,
    id_seed: u64,
    run_seed: u64,
    precheck: bool,
) -> Result<RunOutcome, String> {
    let ids = assign_ids(g, scheme.to_scheme(), id_seed);
    let cfg = RunConfig { run_seed, ..RunConfig::default() };
    match alg {
        Alg::Maxdeg => {
            let delta = delta.unwrap_or_else(|| g.max_degree().max(1) as u64);
            let res = run_maxdeg(g, &ids, q, delta, &cfg).map_err(|e| e.to_string())?;
            Ok(RunOutcome {
                artifact: res.coloring.to_json(),
                coloring: Some(res.coloring),
                trace: res.trace,
            })
        }
        Alg::Grid => {
            let res = run_grid(g, &ids, q, d, precheck, &cfg).map_err(|e| e.to_string())?;
            Ok(RunOutcome {
                artifact: res.coloring.to_json(),
                coloring: Some(res.coloring),
                trace: res.trace,
            })
        }
        Alg::Sparse => {
            let res = run_sparse(g, &ids, q, precheck, &cfg).map_err(|e| e.to_string())?;
            Ok(RunOutcome {
                artifact: res.coloring.to_json(),
                coloring: Some(res.coloring),
                trace: res.trace,
            })
        }
        Alg::Baseline => {
            let (sel, trace) = random_min_id_is(g, &ids, &cfg).map_err(|e| e.to_string())?;
            let artifact = serde_json::to_string_pretty(&serde_json::json!({
                "selected": sel,
            }))
            .expect("selection serialization");
            Ok(RunOutcome { coloring: None, artifact, trace })
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, String> {
    let gf = load_graph(&a.graph)?;
    let out = execute(
        &gf.graph,
        a.alg,
        a.q,
        a.d,
        a.delta,
        a.id_scheme,
        a.id_seed,
        a.run_seed,
        !a.skip_precheck,
    )?;
    write_out(&a.coloring_out, &out.artifact)?;
    match &a.trace_out {
        Some(path) => fs::write(path, out.trace.to_json()).map_err(|e| e.to_string())?,
        None => eprintln!("trace: {}", out.trace.to_json()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, String> {
    let gf = load_graph(&a.graph)?;
    let text = fs::read_to_string(&a.coloring).map_err(|e| e.to_string())?;
    let coloring = SetColoring::from_json(&text).map_err(|e| e.to_string())?;
    let verdict = verify_set_coloring(&gf.graph, &coloring);
    println!("{verdict:?}");
    Ok(if verdict.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<ExitCode, String> {
    let gf = load_graph(&a.graph)?;
    let g = &gf.graph;
    let girth_str = match girth(g) {
        Some(c) => c.to_string(),
        None => "infinity".into(),
    };
    let mad = mad_exact(g);
    let pd = is_k_path_degenerate(g, a.k);
    println!("n: {}", g.n());
    println!("edges: {}", g.edge_count());
    println!("max_degree: {}", g.max_degree());
    println!("girth: {girth_str}");
    println!("mad: {}/{}", mad.numer(), mad.denom());
    println!("{}-path-degenerate: {}", a.k, pd.degenerate);
    if !pd.degenerate {
        println!("stuck_vertices: {:?}", pd.stuck);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_reduce(a: ReduceArgs) -> Result<ExitCode, String> {
    let gf = load_graph(&a.graph)?;
    let base = &gf.graph;
    let expanded =
        fracolor::reduction::triangle_expand(base).map_err(|e| e.to_string())?;
    // the expansion is cubic and K4-free, so a proper 3-coloring exists and
    // doubles as a (3:1) set coloring
    let proper = central_component_coloring(&expanded, 3)
        .ok_or("triangle expansion admitted no 3-coloring")?;
    let coloring = fracolor::coloring::lift_proper_coloring(&proper, 3, 1);
    let orientation = extract_sinkless(base, &coloring).map_err(|e| e.to_string())?;
    let verdict = verify_sinkless(base, &orientation);
    println!("{verdict:?}");
    if let Some(path) = &a.orientation_out {
        fs::write(path, orientation.to_json()).map_err(|e| e.to_string())?;
    }
    Ok(if verdict == OrientationVerdict::Valid { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_oracle(a: OracleArgs) -> Result<ExitCode, String> {
    let gf = load_graph(&a.graph)?;
    match kneser_hom_exists(&gf.graph, a.p, a.q, a.budget) {
        HomSearch::Found(_) => {
            println!("yes");
            Ok(ExitCode::SUCCESS)
        }
        HomSearch::NotFound => {
            println!("no");
            Ok(ExitCode::SUCCESS)
        }
        HomSearch::Unknown { nodes_spent } => {
            println!("unknown (budget of {nodes_spent} nodes exhausted)");
            Ok(ExitCode::from(1))
        }
    }
}

// ---------------------------------------------------------------------------
// Benchmark matrix
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct BenchSpec {
    cells: Vec<BenchCell>,
}

#[derive(Deserialize)]
struct BenchCell {
    kind: String,
    #[serde(default)]
    n: usize,
    #[serde(default = "one_u32")]
    d: u32,
    #[serde(default)]
    gen_seed: u64,
    alg: String,
    #[serde(default = "one_u64")]
    q: u64,
    #[serde(default)]
    delta: Option<u64>,
    #[serde(default = "default_scheme")]
    id_scheme: String,
    #[serde(default)]
    id_seed: u64,
    #[serde(default)]
    run_seed: u64,
}

fn one_u32() -> u32 {
    1
}
fn one_u64() -> u64 {
    1
}
fn default_scheme() -> String {
    "permutation".into()
}

const BENCH_HEADER: &str =
    "algorithm,n,d,q,p,rounds,output_bits_per_vertex,valid,id_scheme,seed,wall_time_ms";

fn parse_variant<T: ValueEnum + Copy>(s: &str, what: &str) -> Result<T, String> {
    T::from_str(s, true).map_err(|_| format!("unknown {what} {s:?}"))
}

fn bench_cell(cell: &BenchCell) -> Result<String, String> {
    let kind: GenKind = parse_variant(&cell.kind, "generator kind")?;
    let alg: Alg = parse_variant(&cell.alg, "algorithm")?;
    let scheme: SchemeArg = parse_variant(&cell.id_scheme, "id scheme")?;
    let gf = build_instance(kind, cell.n, cell.d, 0, cell.q, cell.gen_seed)?;
    let g = &gf.graph;
    let start = Instant::now();
    let out = execute(
        g, alg, cell.q, cell.d, cell.delta, scheme, cell.id_seed, cell.run_seed, true,
    )?;
    let wall_ms = start.elapsed().as_millis();
    // validity is recomputed from the artifacts here, never taken from the
    // algorithm's own claims
    let (p, valid) = match (&out.coloring, alg) {
        (Some(c), _) => (c.p, verify_set_coloring(g, c).is_valid()),
        (None, Alg::Baseline) => {
            let sel: Vec<bool> = serde_json::from_str::<serde_json::Value>(&out.artifact)
                .ok()
                .and_then(|v| serde_json::from_value(v["selected"].clone()).ok())
                .ok_or("baseline artifact did not round-trip")?;
            (0, is_independent(g, &sel))
        }
        _ => unreachable!("only the baseline omits a coloring"),
    };
    Ok(format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        alg.name(),
        g.n(),
        cell.d,
        cell.q,
        p,
        out.trace.rounds,
        out.trace.output_bits_per_vertex.map_or(String::new(), |b| b.to_string()),
        valid,
        scheme.name(),
        cell.id_seed,
        wall_ms
    ))
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode, String> {
    let text = fs::read_to_string(&a.spec).map_err(|e| e.to_string())?;
    let spec: BenchSpec = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut rows = vec![BENCH_HEADER.to_string()];
    let mut failures = 0usize;
    for (i, cell) in spec.cells.iter().enumerate() {
        match bench_cell(cell) {
            Ok(row) => rows.push(row),
            Err(e) => {
                // record the failure and keep going; the row stays diffable
                eprintln!("cell {i} failed: {e}");
                failures += 1;
                rows.push(format!(
                    "{},{},{},{},,,,false,{},{},",
                    cell.alg, cell.n, cell.d, cell.q, cell.id_scheme, cell.id_seed
                ));
            }
        }
    }
    let csv = rows.join("\n") + "\n";
    match &a.out {
        Some(path) => fs::write(path, &csv).map_err(|e| e.to_string())?,
        None => {
            std::io::stdout().write_all(csv.as_bytes()).map_err(|e| e.to_string())?;
        }
    }
    eprintln!("{} cells, {failures} failed", spec.cells.len());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
