use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flowstab::assess::EvalCache;
use flowstab::config::{ExperimentConfig, SurrogateKind};
use flowstab::experiment::{self, with_workers};
use flowstab::ns::{FlowState, NavierStokes, TraceEntry};
use flowstab::simulator::Simulator;
use flowstab::stability::{build_problem, rightmost, EigenSummary};
use flowstab::{Error, Result};

#[derive(Parser)]
#[command(name = "flowstab", version, about = "Stability of channel flows with stochastic viscosity")]
struct Cli {
    /// Worker threads (overrides the config; 0 = all logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, short)]
    config: PathBuf,
    /// Coefficient of variation; defaults to every entry of the config.
    #[arg(long)]
    cov: Option<f64>,
    /// Skip the on-disk cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Steady flow and rightmost eigenvalue at one parameter point.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated xi; the mean point when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues with largest real part at the mean viscosity.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulator runs at the collocation grid and surrogate training.
    Train {
        #[command(flatten)]
        common: Common,
        /// Surrogates to train, e.g. `sc,gp`.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        only: Option<Vec<SurrogateKind>>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Monte Carlo validation of trained surrogates.
    Assess {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        only: Option<Vec<SurrogateKind>>,
        /// Report the Monte Carlo column only.
        #[arg(long)]
        mc_only: bool,
    },
    /// Simulator result cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Inspect(CacheTarget),
    Clear(CacheTarget),
}

#[derive(Args)]
struct CacheTarget {
    #[arg(long, short, conflicts_with = "path", required_unless_present = "path")]
    config: Option<PathBuf>,
    #[arg(long)]
    path: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<SurrogateKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown surrogate `{s}` (expected sc, gp or nn)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Cache { action } => cache(action),
        Command::Solve { common, xi, out } => {
            let cfg = load(&common.config, cli.workers)?;
            with_workers(cfg.workers, || solve(&cfg, &common, xi, out))?
        }
        Command::Spectrum { common, k, out } => {
            let cfg = load(&common.config, cli.workers)?;
            with_workers(cfg.workers, || spectrum(&cfg, &common, k, out))?
        }
        Command::Train { common, only, stride } => {
            let cfg = load(&common.config, cli.workers)?;
            with_workers(cfg.workers, || train(&cfg, &common, only, stride))?
        }
        Command::Assess { common, only, mc_only } => {
            let cfg = load(&common.config, cli.workers)?;
            with_workers(cfg.workers, || assess(&cfg, &common, only, mc_only))?
        }
    }
}

fn load(path: &Path, workers: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn covs(cfg: &ExperimentConfig, common: &Common) -> Vec<f64> {
    common.cov.map_or_else(|| cfg.viscosity.cov.clone(), |c| vec![c])
}

fn cache_for(cfg: &ExperimentConfig, common: &Common) -> Result<EvalCache> {
    experiment::open_cache((!common.no_cache).then_some(cfg.output.cache.as_path()))
}

fn simulator(cfg: &ExperimentConfig, cov: f64) -> Result<Simulator> {
    if !(cov >= 0.0) {
        return Err(Error::Config(format!("cov must be nonnegative, got {cov}")));
    }
    Simulator::new(cfg.simulator_spec(cov))
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    config: &'a ExperimentConfig,
    cov: f64,
    xi: &'a [f64],
    #[serde(flatten)]
    body: Body,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Body {
    State { state: FlowState, trace: Vec<TraceEntry> },
    Trace { error: String, residuals: Vec<f64> },
    Eigen { eigen: EigenSummary },
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn solve(cfg: &ExperimentConfig, common: &Common, xi: Option<Vec<f64>>, out: Option<PathBuf>) -> Result<()> {
    let cov = covs(cfg, common)[0];
    let sim = simulator(cfg, cov)?;
    let xi = xi.unwrap_or_else(|| sim.mean_point());
    if xi.len() != sim.dim() {
        return Err(Error::Config(format!("xi has {} entries, expected {}", xi.len(), sim.dim())));
    }
    let dir = out.unwrap_or_else(|| cfg.cov_dir(cov).join("solve"));
    let doc = |body| SolveDocument {
        config: cfg,
        cov,
        xi: &xi,
        body,
    };
    let nu = sim.viscosity(&xi)?;
    let ns = NavierStokes::new(&sim.space, &nu)?;
    let t0 = Instant::now();
    let sol = match ns.solve_steady(&cfg.solver) {
        Ok(s) => s,
        Err(e) => {
            if let Error::Convergence { trace, .. } = &e {
                let body = Body::Trace {
                    error: e.to_string(),
                    residuals: trace.clone(),
                };
                write_json(&dir.join("trace.json"), &doc(body))?;
            }
            return Err(e);
        }
    };
    println!("steady solve: {} steps, {:.3} s", sol.trace.len(), t0.elapsed().as_secs_f64());
    let body = Body::State {
        state: sol.state.clone(),
        trace: sol.trace.clone(),
    };
    write_json(&dir.join("state.json"), &doc(body))?;
    let t1 = Instant::now();
    let problem = build_problem(&ns, &sol.state, cfg.eigen.delta)?;
    let eig = rightmost(&problem, &cfg.eigen.settings())?;
    println!("eigensolve: {:.3} s", t1.elapsed().as_secs_f64());
    println!("rightmost: {:.10e} {:+.10e}i", eig.lambda.re, eig.lambda.im);
    write_json(&dir.join("eigen.json"), &doc(Body::Eigen { eigen: eig.summary() }))
}

fn spectrum(cfg: &ExperimentConfig, common: &Common, k: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cov = covs(cfg, common)[0];
    let sim = simulator(cfg, cov)?;
    let mut settings = cfg.eigen.settings();
    if let Some(k) = k {
        settings.k = k;
    }
    let t0 = Instant::now();
    let (_, eig) = sim.eigen_for_field(&sim.mean_viscosity()?, &settings)?;
    println!("spectrum: {} eigenvalues in {:.3} s", eig.ritz.len(), t0.elapsed().as_secs_f64());
    println!("rightmost: {:.10e} {:+.10e}i", eig.lambda.re, eig.lambda.im);
    let path = out.unwrap_or_else(|| cfg.output.dir.join("spectrum.csv"));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let csv = eig.ritz_csv();
    let keep = 1 + settings.k.min(eig.ritz.len());
    let text: String = csv.lines().take(keep).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    let cfg_path = path.with_extension("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?)?;
    println!("wrote {}", cfg_path.display());
    Ok(())
}

fn kinds(cfg: &ExperimentConfig, only: Option<Vec<SurrogateKind>>) -> Vec<SurrogateKind> {
    only.unwrap_or_else(|| cfg.surrogates.kinds.clone())
}

fn train(cfg: &ExperimentConfig, common: &Common, only: Option<Vec<SurrogateKind>>, stride: Option<usize>) -> Result<()> {
    let cache = cache_for(cfg, common)?;
    let kinds = kinds(cfg, only);
    let stride = stride.unwrap_or(cfg.surrogates.stride);
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    for cov in covs(cfg, common) {
        let sim = simulator(cfg, cov)?;
        let trained = experiment::train(cfg, &sim, &cache, &kinds, stride)?;
        let dir = cfg.cov_dir(cov);
        println!("cov {cov}: {} grid nodes", trained.grid.len());
        for line in trained.timings.lines() {
            println!("  {line}");
        }
        for path in experiment::write_models(cfg, &trained, &dir)? {
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}

fn assess(cfg: &ExperimentConfig, common: &Common, only: Option<Vec<SurrogateKind>>, mc_only: bool) -> Result<()> {
    let cache = cache_for(cfg, common)?;
    let kinds = if mc_only { Vec::new() } else { kinds(cfg, only) };
    for cov in covs(cfg, common) {
        let sim = simulator(cfg, cov)?;
        let dir = cfg.cov_dir(cov);
        let models = experiment::load_models(&dir, &kinds)?;
        let a = experiment::assess(cfg, &sim, &cache, &models)?;
        println!("cov {cov}: {} samples, {} failed", a.report.n_mc, a.report.n_failed);
        for line in a.timings.lines() {
            println!("  {line}");
        }
        print!("{}", a.report.table_csv());
        for path in experiment::write_assessment(cfg, &a, &dir)? {
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}

fn cache(action: CacheAction) -> Result<()> {
    let path = |t: &CacheTarget| -> Result<PathBuf> {
        match (&t.path, &t.config) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(c)) => Ok(ExperimentConfig::load(c)?.output.cache),
            (None, None) => Err(Error::Config("give --config or --path".into())),
        }
    };
    match action {
        CacheAction::Inspect(t) => {
            let s = EvalCache::inspect(&path(&t)?)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        CacheAction::Clear(t) => {
            let p = path(&t)?;
            if EvalCache::clear(&p)? {
                println!("removed {}", p.display());
            } else {
                println!("no cache at {}", p.display());
            }
        }
    }
    Ok(())
}
