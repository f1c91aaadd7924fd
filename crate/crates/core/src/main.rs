use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use hydrolimit::checks::{run_invariant_suite, InvariantConfig};
use hydrolimit::config::{KappaMode, ProfileKind, StudyConfig, KEY_HELP};
use hydrolimit::entropy::{fit_rate, wellprepared_check};
use hydrolimit::grid::{build_phase_grid, TorusGrid};
use hydrolimit::hydro::{run_macro, MacroConfig};
use hydrolimit::kinetic::snapshot::{write_binary, Snapshot};
use hydrolimit::kinetic::{run_kinetic, KineticConfig, NoObserver, TransportLimiter};
use hydrolimit::output::{emit_results, read_study_csv, summary_text};
use hydrolimit::study::{build_initial_data, run_limit_study, Profile, TORUS_LENGTH};
use hydrolimit::weight::WeightParams;
use hydrolimit::{Error, Result};

#[derive(Parser)]
#[command(name = "hydrolimit", version, about = "BGK-alignment hydrodynamic-limit solvers and diagnostics")]
#[command(after_long_help = KEY_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One kinetic run at a single epsilon.
    KineticRun {
        #[command(flatten)]
        common: Common,
        /// Relaxation parameter; defaults to the first entry of `epsilons`.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// One macro (Euler-alignment) run with the singular weight.
    MacroRun {
        #[command(flatten)]
        common: Common,
    },
    /// The epsilon sweep against the macro reference.
    LimitStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Property suite: weight gap, equilibrium moments, minimization, lower bound, conservation.
    CheckInvariants {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Log-log fit of sup relative entropy against epsilon from a study CSV.
    RateFit {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        beta: f64,
    },
}

#[derive(Args)]
#[command(after_long_help = KEY_HELP)]
struct Common {
    /// Flat TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_v: Option<usize>,
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_parser = ["sine", "consensus", "counter-stream"])]
    profile: Option<String>,
    #[arg(long, value_parser = ["cd", "one"])]
    kappa_mode: Option<String>,
    #[arg(long, value_parser = ["minmod", "mc"])]
    limiter: Option<String>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    snapshot_stride: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<StudyConfig> {
        let mut cfg = match &self.config {
            Some(p) => StudyConfig::load(p)?,
            None => StudyConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(n_x, n_v, alpha, beta, epsilons, t_end, cfl, snapshot_stride);
        if self.v_max.is_some() {
            cfg.v_max = self.v_max;
        }
        if let Some(p) = self.profile.as_deref() {
            cfg.profile = match p {
                "sine" => ProfileKind::Sine,
                "consensus" => ProfileKind::Consensus,
                _ => ProfileKind::CounterStream,
            };
        }
        if let Some(k) = self.kappa_mode.as_deref() {
            cfg.kappa_mode = if k == "cd" { KappaMode::Cd } else { KappaMode::One };
        }
        if let Some(l) = self.limiter.as_deref() {
            cfg.limiter = if l == "mc" { TransportLimiter::Mc } else { TransportLimiter::Minmod };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process outcome: `Ok(true)` when every check passed.
type Outcome = Result<bool>;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn kinetic_run(common: &Common, epsilon: Option<f64>) -> Outcome {
    let cfg = common.resolve()?;
    let eps = epsilon.unwrap_or(cfg.epsilons[0]);
    let profile = Profile::from_config(&cfg);
    let v_max = cfg.v_max.unwrap_or_else(|| profile.default_v_max());
    let grid = build_phase_grid(cfg.n_x, cfg.n_v, TORUS_LENGTH, v_max)?;
    let (f0, u0) = build_initial_data(&profile, &grid, cfg.kappa())?;
    let mut kcfg = KineticConfig::new(cfg.alpha, cfg.beta, eps, TORUS_LENGTH, cfg.t_end);
    kcfg.cfl = cfg.cfl;
    kcfg.limiter = cfg.limiter;
    kcfg.boundary_mass_tol = cfg.boundary_mass_tol;
    kcfg.budget_tol = cfg.budget_tol;
    kcfg.validate()?;
    let run = run_kinetic(&f0, &kcfg, &mut NoObserver)?;
    create_dir(&common.out)?;
    run.ledger.write_csv(&common.out.join("ledger.csv"))?;
    write_binary(
        &common.out.join("final.bin"),
        &Snapshot {
            time: cfg.t_end,
            field: run.final_state.clone(),
        },
    )?;
    let residual = run.ledger.budget_residual();
    let ok = residual <= cfg.budget_tol;
    println!(
        "eps {eps} steps {} dt {:.4e} mass {:.15} momentum {:.3e} budget residual {residual:.3e}",
        run.steps,
        run.dt,
        run.final_state.mass(),
        run.final_state.momentum()
    );
    if matches!(cfg.profile, ProfileKind::Sine | ProfileKind::Consensus) {
        let wp = wellprepared_check(&f0, &u0, eps, cfg.c_tol)?;
        println!("well-prepared h1 {:.3e} h2 {:.3e}", wp.h1, wp.h2);
    }
    Ok(ok)
}

fn macro_run(common: &Common) -> Outcome {
    let cfg = common.resolve()?;
    if cfg.profile == ProfileKind::CounterStream {
        return Err(Error::Config("the counter-stream profile has no macro counterpart".into()));
    }
    let profile = Profile::from_config(&cfg);
    let grid = TorusGrid::new(cfg.n_x, TORUS_LENGTH)?;
    let mut mcfg = MacroConfig::new(Some(WeightParams::singular(cfg.alpha, TORUS_LENGTH)), cfg.t_end);
    mcfg.cfl = cfg.macro_cfl;
    let traj = run_macro(&profile.macro_state(&grid, cfg.kappa())?, &mcfg)?;
    create_dir(&common.out)?;
    traj.write_ledger_csv(&common.out.join("macro_ledger.csv"))?;
    traj.write_trajectory_csv(&common.out.join("macro_final.csv"))?;
    let residual = traj.budget_residual();
    println!(
        "steps {} free-energy budget residual {residual:.3e} shock warning {}",
        traj.steps, traj.shock_warning
    );
    Ok(residual <= cfg.budget_tol && !traj.shock_warning)
}

fn limit_study(common: &Common) -> Outcome {
    let cfg = common.resolve()?;
    let outcome = run_limit_study(&cfg)?;
    let files = emit_results(&outcome, &common.out)?;
    info!("wrote {} files to {}", files.len(), common.out.display());
    print!("{}", summary_text(&outcome));
    let budgets = outcome.runs.iter().all(|r| r.record.energy_residual <= cfg.budget_tol);
    let bounds = outcome
        .runs
        .iter()
        .all(|r| r.entropy.iter().all(|e| e.lower_bound_margin >= -1e-12));
    Ok(outcome.well_prepared.ok && budgets && bounds)
}

fn check_invariants(seed: u64, samples: usize) -> Outcome {
    let cfg = InvariantConfig {
        seed,
        samples,
        ..InvariantConfig::default()
    };
    let results = run_invariant_suite(&cfg)?;
    for r in &results {
        println!("{r}");
    }
    Ok(results.iter().all(|r| r.passed))
}

fn rate_fit(csv: &Path, alpha: f64, beta: f64) -> Outcome {
    // an unreadable input file is a usage error, not a failed check
    let records = read_study_csv(csv).map_err(|e| Error::Config(e.to_string()))?;
    let eps_min = records.iter().map(|r| r.epsilon).fold(1.0, f64::min);
    let fit = fit_rate(&records, &WeightParams::regularized(alpha, beta, eps_min, TORUS_LENGTH))?;
    println!(
        "slope {:.4} lambda_theory {:.4} meets theory {}",
        fit.slope, fit.lambda_theory, fit.meets_theory
    );
    Ok(fit.meets_theory)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::KineticRun { common, epsilon } => kinetic_run(common, *epsilon),
        Command::MacroRun { common } => macro_run(common),
        Command::LimitStudy { common } => limit_study(common),
        Command::CheckInvariants { seed, samples } => check_invariants(*seed, *samples),
        Command::RateFit { csv, alpha, beta } => rate_fit(csv, *alpha, *beta),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let config_like = e.is_config() || matches!(e, Error::Format { .. });
            ExitCode::from(if config_like { 2 } else { 1 })
        }
    }
}
