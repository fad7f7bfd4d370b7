//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bayesopt::{elementary_effects, optimize, screening, IterationRecord, Observation, OptResult};
use crate::config::Config;
use crate::controller::MpcParams;
use crate::error::{Error, Result};
use crate::report::compare;
use crate::scenarios::{describe, generate_movements, MovementSet};
use crate::sim::{append_eval_log, evaluate_params, EvalResult, Scene};
use crate::teleop::{serve, TeleopContext};

#[derive(Debug, Parser)]
#[command(name = "sctune", version, about = "Bayesian tuning of an MPC shared controller in simulation")]
pub struct Cli {
    /// Config file (JSON) or the preset name `default`.
    #[arg(long, global = true, default_value = "default")]
    pub config: String,
    /// Seed for corpus generation and the optimizer.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory; defaults to runs/<command>-seed<seed>.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CorpusArgs {
    /// Movement corpus (JSON). Generated from --seed when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Number of movements to generate, or to keep from --corpus.
    #[arg(long)]
    pub n_mov: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or describe movement corpora.
    #[command(subcommand)]
    Scenarios(ScenarioCommand),
    /// Evaluate one parameter set on a corpus.
    Evaluate {
        /// Parameter file (JSON) or `baseline`.
        #[arg(long, default_value = "baseline")]
        params: String,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Tune the parameters with Bayesian optimization.
    Optimize {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Acquisition iterations after the initial design.
        #[arg(long)]
        n_max: Option<usize>,
        /// Resume from a history.jsonl of an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare two parameter sets on the same corpus.
    Compare {
        #[arg(long, default_value = "baseline")]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value = "baseline")]
        label_a: String,
        #[arg(long, default_value = "optimized")]
        label_b: String,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Elementary-effects screening of the tuning parameters.
    Screen {
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Run the teleoperation WebSocket service.
    Serve {
        #[arg(long)]
        address: Option<String>,
        /// Parameters for the `optimized` condition (file or `baseline`).
        #[arg(long, default_value = "baseline")]
        optimized: String,
        /// One control cycle per received command.
        #[arg(long)]
        lockstep: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    Generate {
        #[arg(long)]
        n_mov: Option<usize>,
        /// Output file; defaults to <run-dir>/corpus.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Describe {
        #[arg(long)]
        corpus: PathBuf,
    },
}

pub fn load_params(spec: &str) -> Result<MpcParams> {
    let p = if spec == "baseline" {
        MpcParams::baseline()
    } else {
        let text = std::fs::read_to_string(spec).map_err(|e| Error::InvalidParams(format!("cannot read {spec}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("{spec}: {e}")))?
    };
    p.validate()?;
    Ok(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

struct Context {
    cfg: Config,
    seed: u64,
    run_dir: PathBuf,
}

impl Context {
    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.run_dir)?;
        write_json(&self.run_dir.join("config.json"), &self.cfg)
    }

    fn corpus(&self, scene: &Scene, args: &CorpusArgs) -> Result<MovementSet> {
        let set = match &args.corpus {
            Some(path) => {
                let set = MovementSet::load(path)?;
                match args.n_mov {
                    Some(n) => set.truncated(n),
                    None => set,
                }
            }
            None => {
                let mut g = self.cfg.scenarios;
                if let Some(n) = args.n_mov {
                    g.n_mov = n;
                }
                generate_movements(self.seed, &g, &self.cfg.environment.name, &scene.esdf, &scene.geometry, &self.cfg.eval.controller.limits)?
            }
        };
        if set.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        set.save(&self.run_dir.join("corpus.json"))?;
        Ok(set)
    }
}

fn summary_text(r: &EvalResult) -> String {
    let m = r.mean_metrics();
    format!(
        "movements {}  succeeded {}  J {:.6}  (raw {:.6})\nmean d_ob {:.4} m  t_ob {:.3} %  f_ps {:.3e} m  f_cc {:.3} rad/m  f_vs {:.4}  t_C {:.3} ms\nmin sd {:.4} m  max infeasible fraction {:.4}\n",
        r.movements.len(),
        r.n_succ,
        r.objective,
        r.raw_objective,
        m.d_ob,
        m.t_ob,
        m.f_ps,
        m.f_cc,
        m.f_vs,
        m.t_c,
        r.min_sd(),
        r.max_infeasible_fraction()
    )
}

fn read_history(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Runs the CLI with already-parsed arguments; output goes to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = Config::load(&cli.config)?;
    let default_dir = |name: &str| PathBuf::from("runs").join(format!("{name}-seed{}", cli.seed));
    let name = match &cli.command {
        Command::Scenarios(_) => "scenarios",
        Command::Evaluate { .. } => "evaluate",
        Command::Optimize { .. } => "optimize",
        Command::Compare { .. } => "compare",
        Command::Screen { .. } => "screen",
        Command::Serve { .. } => "serve",
    };
    let ctx = Context { cfg, seed: cli.seed, run_dir: cli.run_dir.clone().unwrap_or_else(|| default_dir(name)) };

    match cli.command {
        Command::Scenarios(ScenarioCommand::Describe { corpus }) => {
            let set = MovementSet::load(&corpus)?;
            write!(out, "{}", describe(&set, &ctx.cfg.geometry))?;
        }
        Command::Scenarios(ScenarioCommand::Generate { n_mov, out: path }) => {
            let scene = ctx.cfg.scene()?;
            let mut g = ctx.cfg.scenarios;
            if let Some(n) = n_mov {
                g.n_mov = n;
            }
            let set = generate_movements(ctx.seed, &g, &ctx.cfg.environment.name, &scene.esdf, &scene.geometry, &ctx.cfg.eval.controller.limits)?;
            let path = match path {
                Some(p) => p,
                None => {
                    ctx.prepare()?;
                    ctx.run_dir.join("corpus.json")
                }
            };
            set.save(&path)?;
            writeln!(out, "wrote {} movements to {}", set.len(), path.display())?;
        }
        Command::Evaluate { params, corpus } => {
            let params = load_params(&params)?;
            ctx.prepare()?;
            let scene = ctx.cfg.scene()?;
            let set = ctx.corpus(&scene, &corpus)?;
            let r = evaluate_params(&params, &set, &scene, &ctx.cfg.eval)?;
            let log = ctx.run_dir.join("eval.jsonl");
            let _ = std::fs::remove_file(&log);
            append_eval_log(&log, &r)?;
            write_json(&ctx.run_dir.join("params.json"), &params)?;
            write_json(&ctx.run_dir.join("result.json"), &r)?;
            let text = summary_text(&r);
            std::fs::write(ctx.run_dir.join("report.txt"), &text)?;
            write!(out, "{text}")?;
        }
        Command::Optimize { corpus, n_max, resume } => {
            ctx.prepare()?;
            let scene = ctx.cfg.scene()?;
            let set = ctx.corpus(&scene, &corpus)?;
            let mut bo = ctx.cfg.bo.clone();
            bo.seed = ctx.seed;
            if let Some(n) = n_max {
                bo.n_max = n;
            }
            let space = &ctx.cfg.space;
            let previous = match &resume {
                Some(p) => read_history(p)?,
                None => Vec::new(),
            };
            let history_path = ctx.run_dir.join("history.jsonl");
            let log_path = ctx.run_dir.join("eval.jsonl");
            let mut history_file = std::fs::File::create(&history_path)?;
            let _ = std::fs::remove_file(&log_path);
            let seeded = vec![space.from_params(&MpcParams::baseline())?];
            let eval_cfg = &ctx.cfg.eval;
            let mut persist_error: Option<Error> = None;
            let result = optimize(
                &bo,
                space,
                &seeded,
                &previous,
                |x| {
                    let params = space.to_params(x)?;
                    let r = evaluate_params(&params, &set, &scene, eval_cfg)?;
                    append_eval_log(&log_path, &r)?;
                    Ok(Observation { objective: r.objective, feasible: r.feasible })
                },
                |rec| {
                    let line = serde_json::to_string(rec).expect("records serialize");
                    if let Err(e) = writeln!(history_file, "{line}") {
                        persist_error.get_or_insert(e.into());
                    }
                    let _ = writeln!(out, "[{:>3}] {:?} J {:.6} best {:.6}", rec.index, rec.source, rec.objective, rec.incumbent);
                },
            );
            if let Some(e) = persist_error {
                return Err(e);
            }
            let result: OptResult = result?;
            let best = space.to_params(&result.best_point)?;
            write_json(&ctx.run_dir.join("history.json"), &result)?;
            write_json(&ctx.run_dir.join("best_params.json"), &best)?;
            let baseline_j = result.history.first().map_or(f64::NAN, |r| r.objective);
            let text = format!(
                "baseline J {:.6}\nbest J {:.6}\nbest params {}\n",
                baseline_j,
                result.best_objective,
                serde_json::to_string(&best)?
            );
            std::fs::write(ctx.run_dir.join("report.txt"), &text)?;
            write!(out, "{text}")?;
        }
        Command::Compare { a, b, label_a, label_b, corpus } => {
            let pa = load_params(&a)?;
            let pb = load_params(&b)?;
            ctx.prepare()?;
            let scene = ctx.cfg.scene()?;
            let set = ctx.corpus(&scene, &corpus)?;
            let (report, [ra, rb]) = compare([&label_a, &label_b], [&pa, &pb], &set, &scene, &ctx.cfg.eval)?;
            for (name, r) in [("eval-a.jsonl", &ra), ("eval-b.jsonl", &rb)] {
                let p = ctx.run_dir.join(name);
                let _ = std::fs::remove_file(&p);
                append_eval_log(&p, r)?;
            }
            let text = report.to_text();
            std::fs::write(ctx.run_dir.join("report.txt"), &text)?;
            write_json(&ctx.run_dir.join("report.json"), &report)?;
            write!(out, "{text}")?;
        }
        Command::Screen { trajectories, levels, corpus } => {
            ctx.prepare()?;
            let scene = ctx.cfg.scene()?;
            let set = ctx.corpus(&scene, &corpus)?;
            let mut m = ctx.cfg.screening;
            m.seed = ctx.seed;
            if let Some(r) = trajectories {
                m.trajectories = r;
            }
            if let Some(p) = levels {
                m.levels = p;
            }
            let space = &ctx.cfg.space;
            let effects = elementary_effects(space, &m, |x| {
                let params = space.to_params(x)?;
                Ok(evaluate_params(&params, &set, &scene, &ctx.cfg.eval)?.objective)
            })?;
            write_json(&ctx.run_dir.join("effects.json"), &effects)?;
            let mut text = String::from("parameter      mu*          sigma\n");
            for e in &effects {
                text.push_str(&format!("{:<12}{:>12.5}{:>12.5}\n", e.name, e.mu_star, e.sigma));
            }
            text.push_str(&format!("ranking: {}\n", screening::ranking(&effects).join(" > ")));
            std::fs::write(ctx.run_dir.join("report.txt"), &text)?;
            write!(out, "{text}")?;
        }
        Command::Serve { address, optimized, lockstep } => {
            let mut teleop = ctx.cfg.teleop.clone();
            if let Some(a) = address {
                teleop.address = a;
            }
            teleop.lockstep |= lockstep;
            let address = teleop.address.clone();
            let tctx = Arc::new(TeleopContext {
                scene: ctx.cfg.scene()?,
                eval: ctx.cfg.eval.clone(),
                baseline: MpcParams::baseline(),
                optimized: load_params(&optimized)?,
                teleop,
            });
            let listener = std::net::TcpListener::bind(&address)?;
            writeln!(out, "listening on ws://{}", listener.local_addr()?)?;
            out.flush()?;
            serve(listener, tctx)?;
        }
    }
    Ok(())
}
