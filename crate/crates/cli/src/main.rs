//! `luglab`: batch front end for equilibrium analysis, simulation,
//! estimation and bootstrap inference.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use luglab_core::behavioral::{BehavioralParams, ModelKind};
use luglab_core::bootstrap::{self, BootstrapConfig, WildNoise};
use luglab_core::dataset::{self, Dataset, PercentMode, Sample, UseKind};
use luglab_core::game::{self, GameParams, COST_EPS};
use luglab_core::kernel::{self, KernelConfig};
use luglab_core::nls::{self, FitConfig, Form};
use luglab_core::population::{self, Recorder, SimConfig};
use luglab_core::replicator::{self, IntegratorConfig};
use luglab_core::report::{self, ArtifactWriter, RunInfo};
use luglab_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "luglab",
    version,
    about = "Language use game: equilibria, dynamics and estimation"
)]
struct Cli {
    /// Worker threads for bootstrap replicates.
    #[arg(long, global = true, env = "LUGLAB_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stable share of revealers, rest points and matching comparison.
    Equilibrium(EquilibriumArgs),
    /// Replicator trajectory and agent-based simulation.
    Simulate(SimulateArgs),
    /// Nonlinear least-squares fit only.
    Fit(FitArgs),
    /// Wild-bootstrap specification test.
    Test(BootArgs),
    /// Uniform confidence bands.
    Bands(BootArgs),
    /// Fit, test, bands, nonparametric fit and figure.
    Report(BootArgs),
    /// Load and lint a dataset.
    Validate(DataArgs),
    /// Write a synthetic dataset drawn from a prediction model.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct EquilibriumArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    n: f64,
    #[arg(long)]
    c: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// JSON simulation config; flags below are ignored when given.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 3.0)]
    m: f64,
    #[arg(long, default_value_t = 2.0)]
    n: f64,
    #[arg(long, default_value_t = 0.3)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long = "agents", default_value_t = 20_000)]
    n_total: usize,
    #[arg(long, default_value_t = 3_000)]
    rounds: u64,
    #[arg(long, default_value_t = 0.1)]
    x0: f64,
    #[arg(long, default_value = "strong")]
    recorder: Recorder,
    #[arg(long)]
    seed: Option<u64>,
    /// Rounds discarded before averaging.
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value = "luglab-out")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    percent_mode: PercentMode,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    year: Option<i32>,
    #[arg(long)]
    use_kind: Option<UseKind>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    #[arg(long, default_value = "PKE2")]
    model: ModelKind,
    #[arg(long, default_value = "level")]
    form: Form,
    /// Restrict the search to beta2 > 0.
    #[arg(long)]
    positive_beta2: bool,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "luglab-out")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BootArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "replicates", short = 'B', default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value = "standard_normal")]
    noise: WildNoise,
    /// Coverage level of the uniform bands.
    #[arg(long, default_value_t = 0.99)]
    level: f64,
    #[arg(long, default_value_t = 0.25)]
    nn_fraction: f64,
    #[arg(long, default_value_t = 3)]
    min_points: usize,
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    #[arg(long, default_value = "luglab-out")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value = "PKE2")]
    model: ModelKind,
    #[arg(long, default_value_t = 0.890)]
    beta1: f64,
    #[arg(long, default_value_t = 0.030, allow_hyphen_values = true)]
    beta2: f64,
    #[arg(long, default_value_t = 0.089)]
    beta3: f64,
    #[arg(long = "size", default_value_t = 100)]
    size: usize,
    #[arg(long, default_value_t = 0.01)]
    noise_sd: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(0) => Err(Error::Parameter("--jobs must be positive".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Equilibrium(a) => cmd_equilibrium(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Test(a) => cmd_boot(&a, Mode::Test),
        Command::Bands(a) => cmd_boot(&a, Mode::Bands),
        Command::Report(a) => cmd_boot(&a, Mode::Report),
        Command::Validate(a) => cmd_validate(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Explicit seed, or a clock-derived one that is reported on stderr.
fn seed_or_clock(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        eprintln!("note: no --seed given; using seed {s}");
        s
    })
}

#[derive(Serialize)]
struct EquilibriumOutput {
    params: GameParams,
    validation: game::ValidationReport,
    equilibrium: game::Equilibrium,
    rest_points: Vec<replicator::RestPoint>,
    matching: game::MatchingComparison,
}

fn cmd_equilibrium(a: &EquilibriumArgs) -> Result<()> {
    let p = GameParams::new(a.alpha, a.m, a.n, a.c);
    p.check_basic()?;
    let validation = game::validate_assumptions(&p, COST_EPS);
    let zero_cost = a.c == 0.0;
    let blocking: Vec<_> = validation
        .failures()
        .filter(|c| !(zero_cost && c.name == "c > 0"))
        .map(|c| format!("{} fails ({} vs {})", c.name, c.lhs, c.rhs))
        .collect();
    if !blocking.is_empty() {
        return Err(Error::Parameter(format!(
            "payoff assumptions violated: {}",
            blocking.join("; ")
        )));
    }
    let equilibrium = game::interior_equilibrium(&p)?;
    let rest_points = replicator::classify_rest_points(&p)?;
    let matching = game::a_use_dominates(equilibrium.x_star)?;
    let out = EquilibriumOutput {
        params: p,
        validation,
        equilibrium,
        rest_points,
        matching,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let mut s = String::new();
    let _ = writeln!(s, "x* = {}", out.equilibrium.x_star);
    let _ = writeln!(s, "kind = {:?}", out.equilibrium.kind);
    if let Some(d) = &out.equilibrium.diagnostic {
        let _ = writeln!(s, "boundary: {d}");
    }
    let _ = writeln!(
        s,
        "weighted benefit b(alpha) = {}",
        out.validation.weighted_benefit
    );
    if out.validation.majority_warning {
        let _ = writeln!(s, "warning: alpha >= 0.5, bilinguals are not a minority");
    }
    let _ = writeln!(s, "rest points:");
    for r in &out.rest_points {
        let stab = match r.stability {
            replicator::Stability::AsymptoticallyStable => "stable",
            replicator::Stability::Unstable => "unstable",
        };
        let _ = writeln!(s, "  x = {:<22} {stab}", r.x);
    }
    let _ = writeln!(
        s,
        "a_use_dominates = {} (both hide {:.6}, at least one reveals {:.6})",
        out.matching.a_dominates, out.matching.a_mass, out.matching.b_mass
    );
    print!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    config: SimConfig,
    x_star: f64,
    ode_terminal: f64,
    ode_status: replicator::Terminal,
    abm_terminal: Option<f64>,
    burn_in: u64,
    abm_mean_x: Option<f64>,
    ke_strong: Option<f64>,
    ke_weak: Option<f64>,
    files: Vec<String>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            SimConfig::from_json(&text)?
        }
        None => {
            let cfg = SimConfig {
                seed: seed_or_clock(a.seed),
                n_total: a.n_total,
                alpha: a.alpha,
                m: a.m,
                n: a.n,
                c: a.c,
                mu: a.mu,
                rounds: a.rounds,
                recorder: a.recorder,
                x0: a.x0,
            };
            cfg.validate()?;
            cfg
        }
    };
    let p = cfg.game();
    let eq = game::interior_equilibrium(&p)?;

    let ode_x0 = cfg.x0.clamp(1e-6, 1.0 - 1e-6);
    let traj = replicator::integrate(ode_x0, &p, &IntegratorConfig::default())?;
    let sim = population::simulate(&cfg)?;
    let burn_in = a.burn_in.unwrap_or(cfg.rounds / 2);

    let mut ode_csv = String::from("t,x\n");
    for s in &traj.samples {
        let _ = writeln!(ode_csv, "{},{}", s.t, s.x);
    }
    let mut abm_csv = String::from("round,x,ke_strong,ke_weak\n");
    for r in &sim.rows {
        let _ = writeln!(abm_csv, "{},{},{},{}", r.round, r.x, r.ke_strong, r.ke_weak);
    }

    let mut w = ArtifactWriter::new(&a.out, RunInfo::new(&cfg, Some(cfg.seed)))?;
    w.write_text("trajectory.csv", &ode_csv)?;
    w.write_text("abm.csv", &abm_csv)?;
    let summary = SimulateSummary {
        x_star: eq.x_star,
        ode_terminal: traj.last().x,
        ode_status: traj.terminal,
        abm_terminal: (cfg.rounds > 0).then(|| sim.final_population.reveal_share()),
        burn_in,
        abm_mean_x: sim.mean_share_after(burn_in),
        ke_strong: sim.mean_street_use_after(burn_in, Recorder::Strong),
        ke_weak: sim.mean_street_use_after(burn_in, Recorder::Weak),
        files: vec!["trajectory.csv".into(), "abm.csv".into()],
        config: cfg,
    };
    w.write_json("simulate.json", "simulate", &summary)?;
    w.finish()?;

    println!(
        "x* = {}  ode terminal = {} ({:?})",
        summary.x_star, summary.ode_terminal, summary.ode_status
    );
    match (summary.abm_terminal, summary.abm_mean_x) {
        (Some(t), Some(m)) => println!(
            "abm terminal x = {t}  mean x after round {burn_in} = {m}  |mean - x*| = {:.6}",
            (m - summary.x_star).abs()
        ),
        (Some(t), None) => println!("abm terminal x = {t}"),
        _ => println!("abm: no rounds"),
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn load_selected(d: &DataArgs) -> Result<(Dataset, Sample)> {
    let ds = dataset::load_csv(&d.data, d.percent_mode)?;
    let ds = if d.language.is_some() || d.year.is_some() || d.use_kind.is_some() {
        ds.filter(d.language.as_deref(), d.year, d.use_kind)?
    } else {
        ds
    };
    let sample = Sample::from_dataset(&ds);
    Ok((ds, sample))
}

fn fit_config(m: &ModelArgs) -> FitConfig {
    let mut cfg = FitConfig::new(m.model, m.form);
    cfg.positive_beta2 = m.positive_beta2;
    cfg
}

fn print_fit(fit: &nls::FitResult) {
    let b = &fit.beta;
    println!(
        "{} {:?}: beta1 = {}  beta2 = {}  beta3 = {}",
        b.model, fit.form, b.beta1, b.beta2, b.beta3
    );
    println!(
        "ssr = {}  n = {}  converged = {}",
        fit.ssr, fit.n_obs, fit.converged
    );
    if fit.out_of_range() {
        println!("note: some fitted values lie outside [0,1]");
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let (_, sample) = load_selected(&a.data)?;
    let cfg = fit_config(&a.model);
    let fit = nls::fit(&sample, &cfg)?;
    print_fit(&fit);
    let mut w = ArtifactWriter::new(&a.out, RunInfo::new(&(a, &cfg), None))?;
    w.write_json("fit.json", "fit", &fit)?;
    w.finish()?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Test,
    Bands,
    Report,
}

#[derive(Serialize)]
struct TestOutput {
    #[serde(rename = "T_obs")]
    t_obs: f64,
    p_value: f64,
    #[serde(rename = "B")]
    b: usize,
    failures: usize,
    noise: WildNoise,
    dataset_hash: String,
}

fn cmd_boot(a: &BootArgs, mode: Mode) -> Result<()> {
    let seed = match (mode, a.seed) {
        (_, Some(s)) => s,
        (Mode::Test, None) => return Err(Error::Parameter("test requires an explicit --seed".into())),
        (_, None) => seed_or_clock(None),
    };
    let (ds, sample) = load_selected(&a.data)?;
    let fit_cfg = fit_config(&a.model);
    let kernel_cfg = KernelConfig {
        nn_fraction: a.nn_fraction,
        min_points: a.min_points,
        grid_points: a.grid_points,
    };
    let boot_cfg = BootstrapConfig {
        replicates: a.replicates,
        noise: a.noise,
        seed,
        level: a.level,
    };
    boot_cfg.validate()?;
    kernel_cfg.validate()?;

    let fit = nls::fit(&sample, &fit_cfg)?;
    print_fit(&fit);
    let (summary, _) = bootstrap::run(&sample, &fit, &fit_cfg, &kernel_cfg, &boot_cfg)?;
    println!(
        "T_obs = {}  p_value = {}  (B = {}, failed refits = {})",
        summary.t_obs, summary.p_value, summary.b, summary.failures
    );
    let run = RunInfo::new(&(a, &fit_cfg, &kernel_cfg, &boot_cfg), Some(seed));

    match mode {
        Mode::Test => {
            let mut w = ArtifactWriter::new(&a.out, run)?;
            w.write_json("fit.json", "fit", &fit)?;
            w.write_json(
                "test.json",
                "test",
                &TestOutput {
                    t_obs: summary.t_obs,
                    p_value: summary.p_value,
                    b: summary.b,
                    failures: summary.failures,
                    noise: summary.noise,
                    dataset_hash: summary.dataset_hash.clone(),
                },
            )?;
            w.finish()?;
        }
        Mode::Bands => {
            let nonpar = kernel::fit_sample(&sample, &kernel_cfg)?;
            println!("q_T = {}  level = {}", summary.q_t, summary.level);
            let mut w = ArtifactWriter::new(&a.out, run)?;
            w.write_json("fit.json", "fit", &fit)?;
            w.write_json("bootstrap.json", "bootstrap", &summary)?;
            w.write_text("bands.csv", &report::bands_csv(&summary, &nonpar)?)?;
            w.finish()?;
        }
        Mode::Report => {
            let nonpar = kernel::fit_sample(&sample, &kernel_cfg)?;
            println!("q_T = {}  level = {}", summary.q_t, summary.level);
            let title = format!("{} ({} observations)", fit.beta.model, ds.len());
            report::export_report(&a.out, run, &sample, &fit, &summary, &nonpar, &title)?;
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_validate(a: &DataArgs) -> Result<()> {
    let (ds, _) = load_selected(a)?;
    let mut groups: Vec<(String, i32, UseKind, usize)> = Vec::new();
    for o in &ds.observations {
        match groups
            .iter_mut()
            .find(|g| g.0 == o.language && g.1 == o.year && g.2 == o.use_kind)
        {
            Some(g) => g.3 += 1,
            None => groups.push((o.language.clone(), o.year, o.use_kind, 1)),
        }
    }
    println!(
        "{}: {} observations, sha256 {}",
        path_str(&a.data),
        ds.len(),
        ds.hash()
    );
    for (lang, year, kind, n) in groups {
        let note = if n < nls::MIN_OBSERVATIONS {
            "  (too few to fit)"
        } else {
            ""
        };
        println!("  {lang} {year} {kind}: {n}{note}");
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let seed = seed_or_clock(a.seed);
    let beta = BehavioralParams::new(a.beta1, a.beta2, a.beta3, a.model)?;
    if a.size == 0 {
        return Err(Error::Parameter("--size must be positive".into()));
    }
    if !(a.noise_sd >= 0.0 && a.noise_sd.is_finite()) {
        return Err(Error::Parameter("--noise-sd must be non-negative".into()));
    }
    let ds = dataset::synthetic_dataset(&beta, a.size, a.noise_sd, seed)?;
    dataset::write_csv(&ds, &a.out)?;
    println!(
        "wrote {} ({} rows, sha256 {})",
        path_str(&a.out),
        ds.len(),
        ds.hash()
    );
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}
