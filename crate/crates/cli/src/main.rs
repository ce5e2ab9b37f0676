use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "irgraph", version, about = "Inhomogeneous random graphs: sampling, components, cut norms, survival")]
struct Cli {
    /// Root seed; every random draw derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for generated report files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Evaluate acceptance assertions and exit with status 3 if any fails.
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write it as an edge list.
    Gen(GenArgs),
    /// Component statistics of an edge-list graph.
    Components(ComponentsArgs),
    /// Cut norm of a kernel (or of a difference), or the cut distance of two matrices.
    Cutnorm(CutnormArgs),
    /// Survival probability of the branching process of a kernel.
    Rho(RhoArgs),
    /// Hyperkernel summaries, hypergraph sampling and projections.
    Hyper(HyperArgs),
    /// Run an experiment file and write CSV (and SVG) reports.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Bernoulli,
    Poisson,
    Multi,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false)]
struct SourceArgs {
    /// Step kernel document; vertex types are drawn iid from its masses.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Weight matrix document.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Polarity graph of the projective plane over GF(q), q prime.
    #[arg(long, value_name = "Q")]
    polarity: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Vertex count (kernel source only).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value = "bernoulli")]
    model: Model,
    /// Multiply the kernel or matrix by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Keep each sampled edge independently with this probability.
    #[arg(long, value_name = "P")]
    percolate: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComponentsArgs {
    graph: PathBuf,
    /// Also write the N_k table (all, tree and cyclic components) as CSV.
    #[arg(long, value_name = "FILE")]
    nk_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    Sets,
    Pm,
}

#[derive(Args)]
struct CutnormArgs {
    /// Kernel document (matrix document with --distance).
    first: PathBuf,
    /// Second document: the norm of `first - second` is reported.
    second: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sets")]
    norm: NormKind,
    /// Use the local-search heuristic (a lower bound) instead of enumeration.
    #[arg(long)]
    heuristic: bool,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    /// Treat both inputs as weight matrices and minimize over relabelings.
    #[arg(long, requires = "second")]
    distance: bool,
    /// Annealing steps for --distance (exhaustive search when n <= 8 and unset).
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Method {
    FixedPoint,
    Mc,
    Treesum,
    LowerBound,
    All,
}

#[derive(Args)]
struct RhoArgs {
    kernel: PathBuf,
    #[arg(long, value_enum, default_value = "fixed-point")]
    method: Method,
    /// Scale factors (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1")]
    scale: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Largest component order in the tree-sum law.
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    /// Branching process runs for the Monte Carlo estimate.
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 10_000)]
    pop_cap: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Clique,
    OneEdge,
}

#[derive(Args)]
#[group(id = "hyper_source", required = true, multiple = false)]
struct HyperSourceArgs {
    /// Hyperkernel document.
    #[arg(long)]
    hyperkernel: Option<PathBuf>,
    /// Hypermatrix file (`n R` header, then `r i_1 .. i_r value` lines).
    #[arg(long)]
    hypermatrix: Option<PathBuf>,
}

#[derive(Args)]
struct HyperArgs {
    #[command(flatten)]
    source: HyperSourceArgs,
    /// Write the edge kernel (or the marginal matrix for a hypermatrix) here.
    #[arg(long, value_name = "FILE")]
    edge_kernel: Option<PathBuf>,
    /// Sample a hypergraph: N vertices of iid types for a hyperkernel, or the
    /// hypermatrix itself (N must then equal its size).
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    #[arg(long, value_enum, default_value = "bernoulli")]
    model: Model,
    #[arg(long, value_enum, default_value = "clique")]
    project: Projection,
    /// Write the projected graph here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    runfile: PathBuf,
    /// Skip the SVG plot even if the run file asks for one.
    #[arg(long)]
    no_svg: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
