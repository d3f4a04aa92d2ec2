use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lie_tangent::groups::{GroupKind, Sim3Jacobian};
use lie_tangent::ik::{self, IkConfig};
use lie_tangent::io_g2o::{self, PoseGraph, SynthKind, SynthNoise};
use lie_tangent::numcheck::{self, GradcheckConfig, OpName};
use lie_tangent::optim::{GnConfig, LinearSolver};
use lie_tangent::pgo::{self, PgoConfig};

const THREADS_ENV: &str = "LIE_TANGENT_THREADS";

#[derive(Parser)]
#[command(
    name = "lie-tangent",
    version,
    about = "Tangent-space autodiff on 3D transformation groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients of group ops against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run a batch of random inverse kinematics problems.
    IkBench(IkBenchArgs),
    /// Optimize a pose graph: rotation initialization, then Gauss-Newton.
    Pgo(PgoArgs),
    /// Convert a g2o pose graph to TUM or g2o text.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    So3,
    Se3,
    Sim3,
    Rxso3,
    All,
}

impl GroupArg {
    fn kinds(self) -> Vec<GroupKind> {
        match self {
            GroupArg::So3 => vec![GroupKind::SO3],
            GroupArg::Se3 => vec![GroupKind::SE3],
            GroupArg::Sim3 => vec![GroupKind::Sim3],
            GroupArg::Rxso3 => vec![GroupKind::RxSO3],
            GroupArg::All => vec![
                GroupKind::SO3,
                GroupKind::SE3,
                GroupKind::Sim3,
                GroupKind::RxSO3,
            ],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum JointArg {
    So3,
    Rxso3,
}

#[derive(Clone)]
struct OpSelection(Vec<OpName>);

fn parse_ops(s: &str) -> Result<OpSelection, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(OpSelection(OpName::ALL.to_vec()))
    } else {
        s.parse().map(|op| OpSelection(vec![op]))
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    group: GroupArg,
    /// Operation name, or `all`.
    #[arg(long, value_parser = parse_ops, default_value = "all")]
    op: OpSelection,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sim3 left-Jacobian series order (1 to 5).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=5))]
    order: u64,
    /// Use the exact Sim3 left Jacobian instead of the series.
    #[arg(long, conflicts_with = "order")]
    exact: bool,
    #[arg(long, default_value_t = numcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value_t = numcheck::DEFAULT_STEP)]
    step: f64,
}

#[derive(Args)]
struct IkBenchArgs {
    #[arg(long, value_enum, default_value = "so3")]
    kind: JointArg,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    joints: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// CSV file for per-run results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PgoArgs {
    /// g2o pose graph.
    #[arg(
        long = "in",
        conflicts_with = "synth",
        required_unless_present = "synth"
    )]
    input: Option<PathBuf>,
    /// Synthetic graph as `kind:n:sigma_rot:sigma_trans:seed`.
    #[arg(long, value_parser = parse_synth)]
    synth: Option<SynthSpec>,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(1..))]
    gn_iters: u64,
    /// Rotation-stage gradient steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Rotation-stage initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, value_enum, default_value = "sparse")]
    solver: SolverArg,
    /// Optimized trajectory in TUM format.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimized graph in g2o format.
    #[arg(long)]
    out_g2o: Option<PathBuf>,
    /// Cost traces of both stages as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sparse,
    Dense,
    Cg,
}

impl From<SolverArg> for LinearSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Sparse => LinearSolver::SparseBlockCholesky,
            SolverArg::Dense => LinearSolver::DenseCholesky,
            SolverArg::Cg => LinearSolver::ConjugateGradient,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct SynthSpec {
    kind: SynthKind,
    n: usize,
    noise: SynthNoise,
    seed: u64,
}

fn parse_synth(s: &str) -> Result<SynthSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 5 {
        return Err("expected kind:n:sigma_rot:sigma_trans:seed".into());
    }
    let num = |k: usize| {
        parts[k]
            .parse::<f64>()
            .map_err(|e| format!("'{}': {e}", parts[k]))
    };
    let spec = SynthSpec {
        kind: parts[0].parse()?,
        n: parts[1]
            .parse()
            .map_err(|e| format!("'{}': {e}", parts[1]))?,
        noise: SynthNoise {
            rotation: num(2)?,
            translation: num(3)?,
        },
        seed: parts[4]
            .parse()
            .map_err(|e| format!("'{}': {e}", parts[4]))?,
    };
    if spec.n < 3 {
        return Err("synthetic graphs need at least 3 vertices".into());
    }
    if !(spec.noise.rotation >= 0.0 && spec.noise.translation >= 0.0) {
        return Err("noise levels must be non-negative".into());
    }
    Ok(spec)
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tum,
    G2o,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the output extension, TUM otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

type CmdResult = Result<bool, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let outcome = match cli.command {
        Command::Gradcheck(a) => gradcheck(a),
        Command::IkBench(a) => ik_bench(a),
        Command::Pgo(a) => run_pgo(a),
        Command::Convert(a) => convert(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={raw}: expected a positive integer"),
    }
}

fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let sim3 = if a.exact {
        Sim3Jacobian::Exact
    } else {
        Sim3Jacobian::series(a.order as usize)?
    };
    let cfg = GradcheckConfig {
        trials: a.trials as usize,
        step: a.step,
        tolerance: a.tolerance,
        seed: a.seed,
        sim3,
    };
    let mut all_passed = true;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for kind in a.group.kinds() {
        for op in &a.op.0 {
            let report = numcheck::gradcheck(*op, kind, &cfg)?;
            all_passed &= report.passed();
            writeln!(out, "{report}")?;
        }
    }
    Ok(all_passed)
}

fn ik_bench(a: IkBenchArgs) -> CmdResult {
    let kind = match a.kind {
        JointArg::So3 => GroupKind::SO3,
        JointArg::Rxso3 => GroupKind::RxSO3,
    };
    let mut cfg = IkConfig::default();
    if let Some(lr) = a.lr {
        cfg.sgd.lr = lr;
    }
    if let Some(m) = a.momentum {
        cfg.sgd.momentum = m;
    }
    let runs = ik::run_benchmark(kind, a.runs as usize, a.joints as usize, a.seed, &cfg)?;
    let converged = runs.iter().filter(|r| r.converged).count();
    println!(
        "kind={kind} joints={} converged={converged}/{} fraction={:.3}",
        a.joints,
        runs.len(),
        converged as f64 / runs.len() as f64
    );
    if let Some(path) = a.out {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["seed", "kind", "iterations", "final_error", "converged"])?;
        for r in &runs {
            w.write_record([
                r.seed.to_string(),
                r.kind.to_string(),
                r.iterations.to_string(),
                format!("{:e}", r.final_error),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(true)
}

fn read_graph(path: &Path) -> Result<PoseGraph, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    io_g2o::parse_g2o(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn run_pgo(a: PgoArgs) -> CmdResult {
    let (graph, truth) = match (&a.input, &a.synth) {
        (Some(path), _) => (read_graph(path)?, None),
        (None, Some(s)) => {
            let (g, t) = io_g2o::synth_graph(s.kind, s.n, s.noise, s.seed)?;
            (g, Some(t))
        }
        (None, None) => unreachable!("clap requires a graph source"),
    };
    let mut cfg = PgoConfig {
        gn: GnConfig {
            iterations: a.gn_iters as usize,
            solver: a.solver.into(),
            ..GnConfig::default()
        },
        ..PgoConfig::default()
    };
    if let Some(steps) = a.steps {
        cfg.rotation.sgd.steps = steps;
    }
    if let Some(lr) = a.lr {
        cfg.rotation.sgd.lr = lr;
    }
    if let Some(b) = a.b {
        cfg.rotation.b = b;
    }

    let result = pgo::solve_pgo(&graph, &cfg)?;
    println!(
        "vertices={} edges={} initial_chi2={:.6e} final_chi2={:.6e} termination={:?}",
        graph.vertices.len(),
        graph.edges.len(),
        result.gn_trace[0].chi2,
        result.final_chi2(),
        result.termination
    );
    println!(
        "rotation_cost={:.6e} -> {:.6e}",
        result.rotation_trace[0],
        result.rotation_trace.last().copied().unwrap_or(f64::NAN)
    );
    println!(
        "time_rotation_s={:.3} time_translation_s={:.3} time_gn_s={:.3}",
        result.rotation_seconds, result.translation_seconds, result.gn_seconds
    );
    if let Some(truth) = truth {
        let mut from_truth: Vec<_> = truth.vertices.values().cloned().collect();
        let oracle = pgo::refine(&graph, &mut from_truth, &cfg.gn)?;
        println!("truth_initialized_chi2={:.6e}", oracle.final_chi2());
    }

    if let Some(path) = &a.out {
        fs::write(path, io_g2o::write_tum(&result.vertices))?;
    }
    if let Some(path) = &a.out_g2o {
        let optimized = PoseGraph {
            vertices: result.vertices.clone(),
            edges: graph.edges.clone(),
        };
        fs::write(path, io_g2o::serialize_g2o(&optimized))?;
    }
    if let Some(path) = &a.trace {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["stage", "iteration", "cost", "elapsed_ms"])?;
        for (k, c) in result.rotation_trace.iter().enumerate() {
            w.write_record([
                "rotation".to_string(),
                k.to_string(),
                format!("{c:e}"),
                String::new(),
            ])?;
        }
        for r in &result.gn_trace {
            w.write_record([
                "gauss-newton".to_string(),
                r.iteration.to_string(),
                format!("{:e}", r.chi2),
                format!("{:.3}", r.elapsed_ms),
            ])?;
        }
        w.flush()?;
    }
    Ok(true)
}

fn convert(a: ConvertArgs) -> CmdResult {
    let graph = read_graph(&a.input)?;
    let format = a
        .format
        .unwrap_or_else(|| match a.out.as_ref().and_then(|p| p.extension()) {
            Some(ext) if ext.eq_ignore_ascii_case("g2o") => FormatArg::G2o,
            _ => FormatArg::Tum,
        });
    let text = match format {
        FormatArg::Tum => io_g2o::write_tum(&graph.vertices),
        FormatArg::G2o => io_g2o::serialize_g2o(&graph),
    };
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(true)
}
