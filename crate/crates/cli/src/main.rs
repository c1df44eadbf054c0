use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cgmot::oracles::{analytic_wb_line, WbLineSolution};
use cgmot::{
    interpolate_path, noisy_ot_solve, sinkhorn_plan, solve_tree, CostMatrix, PathInterpolationProblem, PathKernel,
    SolverOptions,
};
use cgmot_cli::experiments::{
    generate_day, line_table_tsv, mape_hourly_tsv, mape_summary_tsv, run_grid_mape, run_synthetic_line,
    GridMapeConfig, Method, SyntheticLineConfig,
};
use cgmot_cli::io::{
    format_value, histogram_to_csv, load_histogram, load_matrix, load_tree, save_histogram, save_matrix, write_text,
    GridDoc,
};
use cgmot_cli::noise::parse_noise;
use cgmot_cli::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "cgmot", version, about = "Optimal transport and histogram interpolation via collective graphical models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Convergence threshold (marginal violation relative to the mass).
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long = "max-iters", global = true, default_value_t = 10_000)]
    max_iters: usize,
    /// Iterate on log-scalings (for small epsilon).
    #[arg(long = "log-domain", global = true)]
    log_domain: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-dir", global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Upper bound on worker threads.
    #[arg(long, global = true, env = "CGMOT_THREADS", hide = true)]
    threads: Option<usize>,
}

impl Global {
    fn options(&self) -> CliResult<SolverOptions> {
        let opts = SolverOptions::default()
            .with_tolerance(self.tolerance)
            .with_max_iterations(self.max_iters)
            .with_log_domain(self.log_domain);
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Entropic OT value between two histograms.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Cost matrix CSV.
        #[arg(long, conflicts_with = "kernel", required_unless_present = "kernel")]
        cost: Option<PathBuf>,
        /// Kernel CSV; the cost is `-log` of it.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// Also write the plan as a dense CSV.
        #[arg(long = "plan-out")]
        plan_out: Option<PathBuf>,
    },
    /// OT between noisy histograms.
    NoisyDistance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        cost: PathBuf,
        /// `gaussian:sigma=<s>`, `poisson` or `exact`.
        #[arg(long = "noise-a", default_value = "exact")]
        noise_a: String,
        #[arg(long = "noise-b", default_value = "exact")]
        noise_b: String,
        /// Number of samples F (defaults to the mass of `a`).
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long = "plan-out")]
        plan_out: Option<PathBuf>,
    },
    /// Histogram at an intermediate point between two observations.
    Interpolate(InterpolateArgs),
    /// Closed-form barycenter of the two end cells of a line.
    BarycenterLine {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        mass: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproducible experiments.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Write synthetic input files.
    #[command(subcommand)]
    GenData(GenData),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum InterpMethod {
    Path,
    Ctmc,
    Tree,
}

#[derive(Args, Debug)]
struct InterpolateArgs {
    #[arg(long, value_enum)]
    method: InterpMethod,
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    /// Edge potential of the path (path method).
    #[arg(long)]
    psi: Option<PathBuf>,
    /// Number of path vertices (path method).
    #[arg(long = "nodes", alias = "N")]
    nodes: Option<usize>,
    /// Interior vertex, 1-based (path method); derived from `--t` if absent.
    #[arg(long)]
    k: Option<usize>,
    /// Rate matrix (ctmc method).
    #[arg(long = "rates", alias = "Q")]
    rates: Option<PathBuf>,
    #[arg(long)]
    t: Option<f64>,
    /// Tree document (tree method).
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Output histogram (defaults to `<out-dir>/c.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write both transport plans.
    #[arg(long)]
    plans: bool,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Ten-cell line: proposed interpolation against closed-form barycenters.
    SyntheticLine {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
    /// Leave-one-hour-out MAPE on a synthetic grid population.
    GridMape(GridArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 14)]
    rows: usize,
    #[arg(long, default_value_t = 14)]
    cols: usize,
    #[arg(long, default_value_t = 24)]
    hours: usize,
    #[arg(long = "generator-q", default_value_t = 0.5)]
    generator_q: f64,
    /// Interpolation rates to evaluate (repeatable).
    #[arg(long = "q", default_values_t = [0.5, 5.0])]
    qs: Vec<f64>,
    /// Skip the midpoint baseline.
    #[arg(long = "no-midpoint")]
    no_midpoint: bool,
    #[arg(long, default_value_t = 100_000.0)]
    population: f64,
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    noise_sigma: f64,
    /// Score the truth against itself (harness check).
    #[arg(long = "inject-truth", hide = true)]
    inject_truth: bool,
}

impl GridArgs {
    fn config(&self, g: &Global) -> CliResult<GridMapeConfig> {
        let mut methods: Vec<Method> = self.qs.iter().map(|&q| Method::Ctmc { q }).collect();
        if !self.no_midpoint {
            methods.push(Method::Midpoint);
        }
        Ok(GridMapeConfig {
            rows: self.rows,
            cols: self.cols,
            hours: self.hours,
            generator_q: self.generator_q,
            methods,
            population: self.population,
            noise_sigma: self.noise_sigma,
            seed: g.seed,
            options: g.options()?,
            threads: g.threads,
            inject_truth: self.inject_truth,
        })
    }
}

#[derive(Subcommand, Debug)]
enum GenData {
    /// Hourly grid histograms plus the grid document.
    Grid(GridArgs),
    /// The two end-point histograms and rate matrix of the line scenario.
    Line {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
    },
}

fn need<T: Clone>(v: &Option<T>, flag: &str, method: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::Config(format!("--{flag} is required for --method {method}")))
}

fn not_converged(report: &cgmot::SolveReport) -> CliError {
    cgmot::Error::NotConverged { iterations: report.iterations, residual: report.residual }.into()
}

fn interpolate(args: &InterpolateArgs, g: &Global) -> CliResult<()> {
    let opts = g.options()?;
    let out = args.out.clone().unwrap_or_else(|| g.out_dir.join("c.csv"));
    if args.method == InterpMethod::Tree {
        let tree = load_tree(&need(&args.tree, "tree", "tree")?)?;
        let sol = solve_tree(&tree, &opts)?;
        for (pos, id) in tree.node_ids().iter().enumerate() {
            if tree.observation(pos).is_none() {
                save_histogram(&g.out_dir.join(format!("node_{id}.csv")), &sol.node_marginals[pos])?;
            }
        }
        println!("objective\t{}", format_value(sol.report.objective));
        return if sol.report.converged { Ok(()) } else { Err(not_converged(&sol.report)) };
    }
    let a = load_histogram(&need(&args.a, "a", "path/ctmc")?)?;
    let b = load_histogram(&need(&args.b, "b", "path/ctmc")?)?;
    let kernel = match args.method {
        InterpMethod::Path => {
            let psi = load_matrix(&need(&args.psi, "psi", "path")?)?.to_kernel()?;
            let nodes = need(&args.nodes, "nodes", "path")?;
            let k = match (args.k, args.t) {
                (Some(k), _) => k,
                (None, Some(t)) if nodes >= 3 => (1 + (t * (nodes - 1) as f64).round() as usize).clamp(2, nodes - 1),
                (None, Some(_)) => return Err(CliError::Config("path needs at least 3 nodes".into())),
                (None, None) => return Err(CliError::Config("--k or --t is required for --method path".into())),
            };
            PathKernel::Undirected { psi, nodes, k }
        }
        InterpMethod::Ctmc => {
            let q = load_matrix(&need(&args.rates, "rates", "ctmc")?)?.to_rate_matrix()?;
            PathKernel::Ctmc { q, t: need(&args.t, "t", "ctmc")? }
        }
        InterpMethod::Tree => unreachable!(),
    };
    let problem = PathInterpolationProblem::new(a, b, kernel, opts)?;
    let result = interpolate_path(&problem)?;
    save_histogram(&out, &result.c)?;
    if args.plans {
        let (t1, t2) = result.plans(&problem)?;
        save_matrix(&g.out_dir.join("T1.csv"), t1.entries())?;
        save_matrix(&g.out_dir.join("T2.csv"), t2.entries())?;
    }
    println!("realized_time\t{}", result.realized_time);
    if result.report.converged {
        Ok(())
    } else {
        Err(not_converged(&result.report))
    }
}

fn write_plan(path: &Option<PathBuf>, plan: &cgmot::TransportPlan) -> CliResult<()> {
    match path {
        Some(p) => save_matrix(p, plan.entries()),
        None => Ok(()),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Distance { a, b, cost, kernel, epsilon, plan_out } => {
            let a = load_histogram(a)?;
            let b = load_histogram(b)?;
            let cost: CostMatrix = match (cost, kernel) {
                (Some(c), _) => load_matrix(c)?.to_cost()?,
                (None, Some(k)) => cgmot::cost_from_kernel(&load_matrix(k)?.to_kernel()?)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let (plan, report) = sinkhorn_plan(&a, &b, &cost, *epsilon, &g.options()?)?;
            write_plan(plan_out, &plan)?;
            println!("{}", format_value(report.objective));
            if !report.converged {
                return Err(not_converged(&report));
            }
        }
        Command::NoisyDistance { a, b, cost, noise_a, noise_b, mass, plan_out } => {
            let a = load_histogram(a)?;
            let b = load_histogram(b)?;
            let cost = load_matrix(cost)?.to_cost()?;
            let mass = mass.unwrap_or(a.mass());
            let (tau, report) =
                noisy_ot_solve(&a, &b, &cost, parse_noise(noise_a)?, parse_noise(noise_b)?, mass, &g.options()?)?;
            write_plan(plan_out, &tau)?;
            println!("{}", format_value(report.objective));
            if !report.converged {
                return Err(not_converged(&report));
            }
        }
        Command::Interpolate(args) => interpolate(args, g)?,
        Command::BarycenterLine { n, mass, t, epsilon, out } => match analytic_wb_line(*n, *mass, *t, *epsilon)? {
            WbLineSolution::Unique(h) => match out {
                Some(p) => save_histogram(p, &h)?,
                None => print!("{}", histogram_to_csv(&h)),
            },
            WbLineSolution::NonUnique => println!("nonunique"),
        },
        Command::Experiment(Experiment::SyntheticLine { n, mass, q, epsilon }) => {
            let cfg = SyntheticLineConfig { n: *n, mass: *mass, q: *q, epsilon: *epsilon, options: g.options()?, ..Default::default() };
            let rows = run_synthetic_line(&cfg)?;
            let path = g.out_dir.join("synthetic_line.tsv");
            write_text(&path, &line_table_tsv(&rows))?;
            println!("{}", path.display());
        }
        Command::Experiment(Experiment::GridMape(args)) => {
            let report = run_grid_mape(&args.config(g)?)?;
            let summary = mape_summary_tsv(&report);
            write_text(&g.out_dir.join("grid_mape_summary.tsv"), &summary)?;
            write_text(&g.out_dir.join("grid_mape_hourly.tsv"), &mape_hourly_tsv(&report))?;
            print!("{summary}");
        }
        Command::GenData(GenData::Grid(args)) => {
            let cfg = args.config(g)?;
            for (hour, h) in generate_day(&cfg)?.iter().enumerate() {
                save_histogram(&g.out_dir.join(format!("hour_{hour:02}.csv")), h)?;
            }
            let doc = GridDoc { rows: cfg.rows, cols: cfg.cols, q: cfg.generator_q };
            let json = serde_json::to_string_pretty(&doc).expect("grid document serializes");
            write_text(&g.out_dir.join("grid.json"), &(json + "\n"))?;
        }
        Command::GenData(GenData::Line { n, mass, q }) => {
            if *n < 2 {
                return Err(CliError::Config("line needs at least 2 cells".into()));
            }
            save_histogram(&g.out_dir.join("a.csv"), &cgmot::Histogram::point_mass(*n, 0, *mass)?)?;
            save_histogram(&g.out_dir.join("b.csv"), &cgmot::Histogram::point_mass(*n, n - 1, *mass)?)?;
            let rates = cgmot::build_grid_rate_matrix(1, *n, *q)?;
            save_matrix(&g.out_dir.join("rates.csv"), &rates.to_dense())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.global.threads {
        // an already-initialized pool is fine; the cap is best effort
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

