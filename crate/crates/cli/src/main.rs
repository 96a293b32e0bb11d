mod run_dir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rarl_core::config::ExperimentConfig;
use rarl_core::dynamics::AircraftModel;
use rarl_core::environment::{write_trace_csv, AdversaryMode};
use rarl_core::evaluation::{
    aggregate, run_trial, run_trials, write_results_csv, AdversarySpec, Controller, TrialResult,
};
use rarl_core::nn::ActorCritic;
use rarl_core::ppo::{rarl_train, write_metrics_csv, IterationRecord, TrainCallbacks, TrainState};
use rarl_core::reference::PathCatalog;
use rarl_core::trim::{solve_trim, TrimSpec};

use run_dir::RunDir;

#[derive(Parser)]
#[command(name = "rarl", version, about = "Fixed-wing path following with adversarial PPO")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Path catalog written by `gen-paths`; built from the config otherwise.
    #[arg(long, global = true)]
    paths: Option<PathBuf>,
    #[arg(long, global = true)]
    no_noise: bool,
    #[arg(long, global = true)]
    no_wind: bool,
    #[arg(long, global = true)]
    no_gust: bool,
    /// Steady-wind speed range (m/s).
    #[arg(long, global = true, num_args = 2, value_names = ["MIN", "MAX"])]
    wind_range: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one trim point and print it as JSON.
    Trim {
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long)]
        airspeed: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the reference path catalog.
    GenPaths {
        #[arg(long, default_value = "paths.json")]
        out: PathBuf,
    },
    /// Fly one episode and write its trace.
    Simulate {
        /// Protagonist checkpoint, or `zero` / `random`.
        #[arg(long, default_value = "zero")]
        checkpoint: String,
        /// `none`, `stochastic`, or an adversary checkpoint.
        #[arg(long, default_value = "none")]
        adversary: String,
        #[arg(long, default_value_t = 0)]
        path_id: usize,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Alternating protagonist/adversary training.
    Train {
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        envs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// `policy`, `stochastic` or `none`.
        #[arg(long)]
        adversary: Option<AdversaryMode>,
        /// Run-directory suffix.
        #[arg(long, default_value = "train")]
        tag: String,
        /// Resume from a training state file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run evaluation trials and write per-trial metrics.
    Evaluate {
        /// Protagonist checkpoint, or `zero` / `random`.
        #[arg(long)]
        checkpoint: String,
        /// `none`, `stochastic`, or an adversary checkpoint.
        #[arg(long, default_value = "none")]
        adversary: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_json_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if g.no_noise {
        cfg.env.noise.enabled = false;
    }
    if g.no_wind {
        cfg.env.wind.steady = false;
    }
    if g.no_gust {
        cfg.env.wind.gusts = false;
    }
    if let Some(r) = &g.wind_range {
        cfg.env.wind.min_speed = r[0];
        cfg.env.wind.max_speed = r[1];
    }
    cfg.rarl.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn load_catalog(g: &Global, cfg: &ExperimentConfig, model: &AircraftModel) -> Result<Arc<PathCatalog>> {
    let catalog = match &g.paths {
        Some(path) => PathCatalog::from_json_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => PathCatalog::build(model, &cfg.paths).context("building the path catalog")?,
    };
    Ok(Arc::new(catalog))
}

fn controller(spec: &str) -> Result<Controller> {
    Ok(match spec {
        "zero" => Controller::Zero,
        "random" => Controller::Random,
        path => Controller::Policy(Arc::new(
            ActorCritic::load(path).with_context(|| format!("loading protagonist checkpoint {path}"))?,
        )),
    })
}

fn adversary(spec: &str) -> Result<AdversarySpec> {
    Ok(match spec {
        "none" => AdversarySpec::None,
        "stochastic" => AdversarySpec::Stochastic,
        path => AdversarySpec::Policy(Arc::new(
            ActorCritic::load(path).with_context(|| format!("loading adversary checkpoint {path}"))?,
        )),
    })
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

struct Checkpointer {
    dir: RunDir,
}

impl TrainCallbacks for Checkpointer {
    fn on_iteration(&mut self, state: &TrainState, records: &[IterationRecord]) -> Result<(), rarl_core::error::TrainError> {
        let it = state.iteration;
        let ckpt = self.dir.checkpoints();
        state.save(ckpt.join(format!("state_{it:04}.json")))?;
        ActorCritic::from_checkpoint(&state.protagonist.policy)?.save(ckpt.join(format!("protagonist_{it:04}.json")))?;
        ActorCritic::from_checkpoint(&state.adversary.policy)?.save(ckpt.join(format!("adversary_{it:04}.json")))?;
        write_metrics_csv(&state.history, self.dir.logs().join("metrics.csv"))?;
        for r in records {
            eprintln!(
                "iter {:>4} {:<11} reward {:>10.3} ± {:<8.3} episodes {:>3} value loss {:.4}",
                r.iteration,
                r.role.as_str(),
                r.mean_episode_reward,
                r.std_episode_reward,
                r.episodes,
                r.value_loss
            );
        }
        Ok(())
    }
}

fn summarize(label: &str, results: &[TrialResult]) -> Result<()> {
    let report = aggregate(&[(label.to_string(), results.to_vec())]);
    let summary: Vec<_> = report
        .groups
        .iter()
        .map(|g| {
            serde_json::json!({
                "label": g.label,
                "trials": g.trials,
                "faults": g.faults,
                "mean_mpe_m": g.mean_mpe,
                "median_mpe_m": g.median_mpe,
                "mean_maxpe_m": g.mean_maxpe,
                "mean_effort": g.mean_effort,
            })
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let cfg = load_config(&cli.global)?;
    let model = Arc::new(cfg.model.clone());

    match cli.command {
        Command::Trim { kappa, gamma, airspeed, out } => {
            let spec = TrimSpec { airspeed: airspeed.unwrap_or(cfg.paths.airspeed), ..TrimSpec::new(kappa, gamma) };
            let trim = solve_trim(&model, &spec, &cfg.paths.trim)
                .with_context(|| format!("no trim for kappa {kappa}, gamma {gamma}"))?;
            let text = serde_json::to_string_pretty(&trim)?;
            println!("{text}");
            eprintln!("residual {:e} after {} iterations", trim.residual, trim.iterations);
            if let Some(out) = out {
                write_json(&trim, &out)?;
            }
        }
        Command::GenPaths { out } => {
            let catalog = PathCatalog::build(&model, &cfg.paths).context("building the path catalog")?;
            catalog.to_json_file(&out)?;
            for p in &catalog.paths {
                eprintln!("path {:>2}: kappa {:+.3} gamma {:+.2} steps {}", p.id, p.kappa, p.gamma, p.horizon());
            }
        }
        Command::Simulate { checkpoint, adversary: adv, path_id, out } => {
            let catalog = load_catalog(&cli.global, &cfg, &model)?;
            if path_id >= catalog.len() {
                bail!("path id {path_id} outside the catalog of {}", catalog.len());
            }
            let ctrl = controller(&checkpoint)?;
            let adv = adversary(&adv)?;
            let (result, rows) = run_trial(&model, &catalog, &cfg.env, &ctrl, &adv, 0, cfg.seed, path_id)?;
            write_trace_csv(&rows, &out)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Train { iters, envs, steps, adversary: mode, tag, resume } => {
            let mut cfg = cfg;
            if let Some(i) = iters {
                cfg.rarl.iterations = i;
            }
            if let Some(e) = envs {
                cfg.ppo.n_envs = e;
            }
            if let Some(s) = steps {
                cfg.ppo.n_steps = s;
            }
            if let Some(m) = mode {
                cfg.env.adversary = m;
            }
            cfg.validate()?;
            let catalog = load_catalog(&cli.global, &cfg, &model)?;
            let state = resume
                .map(|p| TrainState::load(&p).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let dir = RunDir::create(&cfg, &tag)?;
            println!("{}", dir.root().display());
            let mut cb = Checkpointer { dir };
            let outcome = rarl_train(model, catalog, &cfg.env, &cfg.ppo, &cfg.rarl, state, &mut cb)?;
            write_metrics_csv(&outcome.history, cb.dir.logs().join("metrics.csv"))?;
            outcome.protagonist.save(cb.dir.checkpoints().join("protagonist_final.json"))?;
            outcome.adversary.save(cb.dir.checkpoints().join("adversary_final.json"))?;
        }
        Command::Evaluate { checkpoint, adversary: adv, trials, out } => {
            let catalog = load_catalog(&cli.global, &cfg, &model)?;
            let ctrl = controller(&checkpoint)?;
            let adv = adversary(&adv)?;
            let results = run_trials(&model, &catalog, &cfg.env, &ctrl, &adv, trials, cfg.seed)?;
            write_results_csv(&results, &out)?;
            summarize(ctrl.label(), &results)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
