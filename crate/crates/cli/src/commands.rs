use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use irgraph::branching::{
    population_law_treesum, survival_fixed_point, survival_lower_bound, survival_mc, FixedPointResult,
};
use irgraph::components::analyze;
use irgraph::cutnorm::{cut_distance, cutnorm_exact, cutnorm_heuristic, CutNorm, CutNormResult, SearchBudget, Witness};
use irgraph::experiment::{Experiment, ModelName};
use irgraph::graphgen::{percolate, polarity_graph, sample_graph, sample_iid_types, EdgeModel};
use irgraph::hypergraph::{
    clique_projection, edge_kernel, hyper_cutnorm, hyper_survival_fixed_point, marginal_matrix, one_edge_projection,
    sample_hypergraph, HyperStepKernel, SparseHypermatrix,
};
use irgraph::io::{
    graph_to_string, kernel_to_string, read_graph, read_hyperkernel, read_hypermatrix, read_kernel, read_matrix,
    write_graph, write_matrix, DocFormat,
};
use irgraph::kernel::{decompose_irreducible, operator_norm, scale, DEFAULT_MAX_ITER, DEFAULT_TOL};
use irgraph::report::{emit_report, ReportFormat};
use irgraph::{Error, RngStream, SparseGraph};

use crate::{
    Cli, Command, ComponentsArgs, CutnormArgs, ExperimentArgs, GenArgs, HyperArgs, Method, Model, NormKind,
    Projection, RhoArgs,
};

/// A problem with the command line itself rather than with the computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// 2 for bad input or configuration, 1 for failures during a computation.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::NoConvergence { .. } | Error::BudgetExceeded(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let seed = cli.seed.unwrap_or(0);
    if cli.check && !matches!(cli.command, Command::Experiment(_)) {
        eprintln!("warning: --check only applies to `experiment`");
    }
    match &cli.command {
        Command::Gen(args) => gen(args, seed)?,
        Command::Components(args) => components(args)?,
        Command::Cutnorm(args) => cutnorm(args, seed)?,
        Command::Rho(args) => rho(args, seed)?,
        Command::Hyper(args) => hyper(args, seed)?,
        Command::Experiment(args) => return experiment(cli, args),
    }
    Ok(ExitCode::SUCCESS)
}

fn model_name(m: Model) -> ModelName {
    match m {
        Model::Bernoulli => ModelName::Bernoulli,
        Model::Poisson => ModelName::Poisson,
        Model::Multi => ModelName::Multi,
    }
}

fn emit_graph(g: &SparseGraph, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => Ok(write_graph(path, g)?),
        None => {
            print!("{}", graph_to_string(g));
            Ok(())
        }
    }
}

fn gen(args: &GenArgs, seed: u64) -> Result<()> {
    let mut rng = RngStream::new(seed, 0).rng();
    let model: EdgeModel = model_name(args.model).edge_model();
    let src = &args.source;
    if args.n.is_some() && src.kernel.is_none() {
        return Err(usage("--n only applies to --kernel"));
    }
    let mut g = if let Some(path) = &src.kernel {
        let n = args.n.ok_or_else(|| usage("--kernel needs --n"))?;
        let k = scale(&read_kernel(path)?, args.scale);
        let a = sample_iid_types(&k, n, &mut rng)?;
        sample_graph(&a, model, &mut rng)?
    } else if let Some(path) = &src.matrix {
        sample_graph(&read_matrix(path)?.scaled(args.scale), model, &mut rng)?
    } else {
        let q = src.polarity.expect("clap enforces one source");
        if args.scale != 1.0 {
            return Err(usage("--scale does not apply to --polarity; use --percolate"));
        }
        polarity_graph(q)?
    };
    if let Some(p) = args.percolate {
        g = percolate(&g, p, &mut rng)?;
    }
    eprintln!("n={} edges={}", g.n(), g.num_edges());
    emit_graph(&g, args.out.as_deref())
}

fn components(args: &ComponentsArgs) -> Result<()> {
    let g = read_graph(&args.graph)?;
    let s = analyze(&g);
    let n = s.n.max(1) as f64;
    println!("n={}", s.n);
    println!("edges={}", g.num_edges());
    println!("components={}", s.components);
    println!("c1={}", s.c1);
    println!("c2={}", s.c2);
    println!("c1_frac={}", s.c1 as f64 / n);
    println!("c2_frac={}", s.c2 as f64 / n);
    if let Some(path) = &args.nk_csv {
        let mut csv = String::from("k,n_k,n_k_tree,n_k_cyc\n");
        let get = |m: &std::collections::BTreeMap<usize, usize>, k| m.get(&k).copied().unwrap_or(0);
        for &k in s.nk.keys() {
            writeln!(csv, "{k},{},{},{}", get(&s.nk, k), get(&s.nk_tree, k), get(&s.nk_cyc, k))?;
        }
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn join(xs: impl IntoIterator<Item = impl ToString>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn print_cut(r: &CutNormResult) {
    println!("value={}", r.value);
    println!("exact={}", r.exact);
    match &r.witness {
        Witness::Sets { rows, cols } => {
            println!("rows={}", join(rows));
            println!("cols={}", join(cols));
        }
        Witness::Signs { f, g } => {
            println!("f={}", join(f));
            println!("g={}", join(g));
        }
    }
}

fn cutnorm(args: &CutnormArgs, seed: u64) -> Result<()> {
    let mut rng = RngStream::new(seed, 0).rng();
    if args.distance {
        let a = read_matrix(&args.first)?;
        let b = read_matrix(args.second.as_ref().expect("clap requires it"))?;
        let budget = match args.steps {
            Some(steps) => SearchBudget::Anneal { steps },
            None if a.n() <= 8 => SearchBudget::Exhaustive,
            None => SearchBudget::default(),
        };
        let d = cut_distance(&a, &b, budget, &mut rng)?;
        println!("distance={}", d.value);
        println!("exact={}", d.exact);
        println!("permutation={}", join(&d.permutation));
        return Ok(());
    }
    if args.steps.is_some() {
        return Err(usage("--steps only applies to --distance"));
    }
    let mut k = read_kernel(&args.first)?;
    if let Some(second) = &args.second {
        k = k.difference(&read_kernel(second)?)?;
    }
    let result = if args.heuristic {
        if matches!(args.norm, NormKind::Pm) {
            return Err(usage("--heuristic computes the set version only"));
        }
        cutnorm_heuristic(&k, args.restarts, &mut rng)?
    } else {
        let norm = match args.norm {
            NormKind::Sets => CutNorm::Sets,
            NormKind::Pm => CutNorm::Pm,
        };
        cutnorm_exact(&k, norm)?
    };
    print_cut(&result);
    Ok(())
}

fn push_fixed_point(out: &mut String, c: f64, fp: &FixedPointResult) -> Result<()> {
    writeln!(out, "{c},rho,{},", fp.rho)?;
    for (i, r) in fp.rho_by_type.iter().enumerate() {
        writeln!(out, "{c},rho_type_{i},{r},")?;
    }
    Ok(())
}

fn rho(args: &RhoArgs, seed: u64) -> Result<()> {
    let k = read_kernel(&args.kernel)?;
    let root = RngStream::new(seed, 0);
    let wants = |m: Method| args.method == m || args.method == Method::All;
    let mut out = String::from("c,quantity,value,std_error\n");
    for (p, &c) in args.scale.iter().enumerate() {
        if c < 0.0 {
            return Err(usage(format!("scale {c} is negative")));
        }
        let kc = scale(&k, c);
        writeln!(out, "{c},norm,{},", operator_norm(&kc, DEFAULT_TOL, DEFAULT_MAX_ITER)?)?;
        if wants(Method::FixedPoint) {
            push_fixed_point(&mut out, c, &survival_fixed_point(&kc, args.tol, args.max_iter)?)?;
        }
        if wants(Method::LowerBound) {
            writeln!(out, "{c},lower_bound,{},", survival_lower_bound(&kc)?)?;
        }
        if wants(Method::Mc) {
            let est = survival_mc(&kc, args.reps, args.pop_cap, root.child(p as u64))?;
            writeln!(out, "{c},gw_mc,{},{}", est.mean, est.std_error)?;
        }
        if wants(Method::Treesum) {
            let law = population_law_treesum(&kc, args.k_max)?;
            for j in 1..=law.k_max() {
                writeln!(out, "{c},rho_k_{j},{},", law.prob(j))?;
            }
            writeln!(out, "{c},tail,{},", law.tail)?;
        }
    }
    print!("{out}");
    Ok(())
}

fn describe_hyperkernel(k: &HyperStepKernel) -> Result<()> {
    let ek = edge_kernel(k)?;
    println!("types={}", k.num_types());
    println!("max_arity={}", k.max_arity());
    println!("integral={}", k.integral());
    println!("edge_kernel_norm={}", operator_norm(&ek, DEFAULT_TOL, DEFAULT_MAX_ITER)?);
    println!("irreducible={}", decompose_irreducible(&ek).is_irreducible());
    match hyper_cutnorm(k) {
        Ok(v) => println!("cut_norm={v}"),
        Err(Error::BudgetExceeded(_)) => println!("cut_norm=unavailable"),
        Err(e) => return Err(e.into()),
    }
    match hyper_survival_fixed_point(k, DEFAULT_TOL, DEFAULT_MAX_ITER) {
        Ok(fp) => println!("rho={}", fp.rho),
        Err(Error::NoConvergence { .. }) => println!("rho=unconverged"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn hyper(args: &HyperArgs, seed: u64) -> Result<()> {
    let mut rng = RngStream::new(seed, 0).rng();
    let h = if let Some(path) = &args.source.hyperkernel {
        let k = read_hyperkernel(path)?;
        describe_hyperkernel(&k)?;
        if let Some(out) = &args.edge_kernel {
            let text = kernel_to_string(&edge_kernel(&k)?, DocFormat::from_path(out))?;
            std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
        }
        match args.sample {
            Some(n) => Some(SparseHypermatrix::sample_types(&k, n, &mut rng)?),
            None => None,
        }
    } else {
        let path = args.source.hypermatrix.as_ref().expect("clap enforces one source");
        let h = read_hypermatrix(path)?;
        println!("n={}", h.n());
        println!("max_arity={}", h.max_arity());
        if let Some(out) = &args.edge_kernel {
            write_matrix(out, &marginal_matrix(&h)?)?;
        }
        if args.sample.is_some_and(|n| n != h.n()) {
            return Err(usage(format!("--sample must equal the hypermatrix size {}", h.n())));
        }
        args.sample.map(|_| h)
    };
    let Some(h) = h else {
        if args.out.is_some() {
            return Err(usage("--out needs --sample"));
        }
        return Ok(());
    };
    let hg = sample_hypergraph(&h, model_name(args.model).hyper_model()?, &mut rng)?;
    let g = match args.project {
        Projection::Clique => clique_projection(&hg),
        Projection::OneEdge => one_edge_projection(&hg, &mut rng),
    };
    let s = analyze(&g);
    println!("hyperedges={}", hg.num_hyperedges());
    println!("edges={}", g.num_edges());
    println!("c1_frac={}", s.c1 as f64 / s.n.max(1) as f64);
    println!("c2_frac={}", s.c2 as f64 / s.n.max(1) as f64);
    if let Some(out) = &args.out {
        write_graph(out, &g)?;
    }
    Ok(())
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<ExitCode> {
    let mut exp = Experiment::load(&args.runfile)?;
    if let Some(seed) = cli.seed {
        exp.config.seed = seed;
    }
    let out = exp.run()?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let mut formats = vec![ReportFormat::Csv];
    if exp.config.output.svg && !args.no_svg {
        formats.push(ReportFormat::Svg);
    }
    for path in emit_report(&out, &cli.out_dir, &exp.stem(), &formats)? {
        println!("wrote {}", path.display());
    }
    if !cli.check {
        return Ok(ExitCode::SUCCESS);
    }
    let results = exp.check(&out)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("check: {} passed, {failed} failed", results.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
