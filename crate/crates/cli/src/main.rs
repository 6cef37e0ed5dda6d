use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use optrlsvi::agent::{Agent, AgentCheckpoint};
use optrlsvi::experiment::{RunConfig, SweepConfig};
use optrlsvi::harness::{self, eta_diagnostic, xi_norms};
use optrlsvi::mdp::{generate_hard_chain, generate_mixture_mdp, read_mdp, validate, write_mdp, LowRankMdp};
use optrlsvi::{write_atomic, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "optrlsvi", version, about = "opt-RLSVI experiments on finite-horizon low-rank MDPs")]
struct Cli {
    /// Default directory for outputs not given an explicit path.
    #[arg(long, env = "OPTRLSVI_OUTPUT_ROOT", default_value = "results", global = true)]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Mixture,
    Chain,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an MDP and write it with its validation report.
    Generate {
        #[arg(long, value_enum)]
        kind: Generator,
        #[arg(long = "S")]
        states: Option<usize>,
        #[arg(long = "A")]
        actions: Option<usize>,
        #[arg(long = "H")]
        horizon: usize,
        #[arg(long)]
        d: Option<usize>,
        /// Chain length (the chain has N + 1 states).
        #[arg(long = "N")]
        length: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play one configured run and write its CSVs.
    Run {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also save the final opt-RLSVI agent state.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Play every seed of a configuration grid and write a summary CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-run structural validation on an MDP file.
    Validate { mdp: PathBuf },
    /// Recompute eta and xi norm diagnostics from a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mdp: PathBuf,
        /// Seed for the pseudonoise if the checkpoint holds no plan.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Configuration and data problems exit with 2; IO and numerical failures with 3.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Numeric(_) | Error::ProtocolViolation(_) => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> optrlsvi::Result<u8> {
    let root = cli.output_root;
    match cli.command {
        Command::Generate {
            kind,
            states,
            actions,
            horizon,
            d,
            length,
            seed,
            out,
        } => {
            let (mdp, name) = match kind {
                Generator::Mixture => {
                    let (s, a, d) = match (states, actions, d) {
                        (Some(s), Some(a), Some(d)) => (s, a, d),
                        _ => return usage("mixture needs --S, --A and --d"),
                    };
                    (
                        generate_mixture_mdp::<f64>(s, a, horizon, d, seed)?,
                        format!("mixture-S{s}-A{a}-H{horizon}-d{d}-seed{seed}.mdp"),
                    )
                }
                Generator::Chain => {
                    let Some(n) = length else {
                        return usage("chain needs --N");
                    };
                    (
                        generate_hard_chain::<f64>(n, horizon, seed)?,
                        format!("chain-N{n}-H{horizon}-seed{seed}.mdp"),
                    )
                }
            };
            let out = out.unwrap_or_else(|| root.join(name));
            cmd_generate(&mdp, &out)
        }
        Command::Run {
            config,
            out_dir,
            checkpoint,
        } => cmd_run(&config, out_dir, &root, checkpoint.as_deref()),
        Command::Sweep {
            config,
            out_dir,
            threads,
        } => cmd_sweep(&config, out_dir, &root, threads),
        Command::Validate { mdp } => {
            let mdp: LowRankMdp<f64> = read_mdp(&mdp)?;
            let report = validate(&mdp);
            print!("{report}");
            Ok(if report.is_clean() { 0 } else { EXIT_VALIDATION })
        }
        Command::Diagnose { checkpoint, mdp, seed } => cmd_diagnose(&checkpoint, &mdp, seed),
    }
}

fn usage(msg: &str) -> optrlsvi::Result<u8> {
    eprintln!("error: {msg}");
    Ok(EXIT_USAGE)
}

fn cmd_generate(mdp: &LowRankMdp<f64>, out: &Path) -> optrlsvi::Result<u8> {
    write_mdp(out, mdp)?;
    let report = validate(mdp);
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".validation.txt");
    write_atomic(Path::new(&report_path), report.to_string().as_bytes())?;
    println!("wrote {} (S={}, A={}, H={}, d={})", out.display(), mdp.num_states(), mdp.num_actions(), mdp.horizon(), mdp.dim());
    if report.is_clean() {
        Ok(0)
    } else {
        eprint!("{report}");
        Ok(EXIT_VALIDATION)
    }
}

fn output_dir(flag: Option<PathBuf>, config: Option<&PathBuf>, root: &Path) -> PathBuf {
    flag.or_else(|| config.cloned()).unwrap_or_else(|| root.to_path_buf())
}

fn cmd_run(path: &Path, out_dir: Option<PathBuf>, root: &Path, checkpoint: Option<&Path>) -> optrlsvi::Result<u8> {
    let cfg = RunConfig::load(path)?;
    cfg.check()?;
    let dir = output_dir(out_dir, cfg.output_dir.as_ref(), root);
    let mdp = cfg.mdp.build()?;
    let mut agent = cfg.agent.build(&mdp, cfg.episodes)?;
    let out = harness::run(&mdp, agent.as_mut(), &cfg.options()?)?;
    harness::write_run_outputs(&dir, &cfg.stem()?, &out.records, &out.summary)?;
    if let Some(ckpt) = checkpoint {
        let opt = agent
            .as_opt_rlsvi()
            .ok_or_else(|| Error::InvalidConfiguration("checkpoints are only written for opt_rlsvi agents".into()))?;
        AgentCheckpoint::from_agent(opt).write(ckpt)?;
    }
    let s = &out.summary;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("cumulative_regret = {}", s.final_regret());
    println!("optimism_rate = {}", show(s.optimism_rate));
    println!("warmup_total = {}", s.warmup_total);
    Ok(0)
}

fn cmd_sweep(path: &Path, out_dir: Option<PathBuf>, root: &Path, threads: Option<usize>) -> optrlsvi::Result<u8> {
    let cfg = SweepConfig::load(path)?;
    let dir = output_dir(out_dir, cfg.base.output_dir.as_ref(), root);
    let rows = cfg.execute(threads, Some(&dir))?;
    let digest = cfg.digest()?;
    write_atomic(&dir.join(format!("sweep-{digest}.csv")), &harness::sweep_csv(&rows, &digest)?)?;
    for r in &rows {
        println!(
            "{}: regret {:.3} ± {:.3}, optimism {:.3}, warmup {:.1}",
            r.label, r.regret_mean, r.regret_stderr, r.optimism_mean, r.warmup_mean
        );
    }
    Ok(0)
}

fn cmd_diagnose(checkpoint: &Path, mdp_path: &Path, seed: u64) -> optrlsvi::Result<u8> {
    let mdp: LowRankMdp<f64> = read_mdp(mdp_path)?;
    let mut agent = AgentCheckpoint::read(checkpoint)?.into_agent(mdp.features().clone())?;
    agent.check_compatible(&mdp)?;
    if agent.current_plan().is_none() {
        agent.plan(&mut ChaCha8Rng::seed_from_u64(seed))?;
    }
    let sched = agent.current_plan().map(|p| p.schedule).expect("planned above");
    let xi = xi_norms(&agent)?;
    println!("episode = {}", agent.core().episode());
    println!("sqrt_beta = {:e}", sched.beta.sqrt());
    println!("xi_radius = {:e}", sched.xi_radius);
    println!("t,eta_norm,xi_norm,good_event_xi");
    for (t, x) in xi.iter().enumerate() {
        let eta = eta_diagnostic(&agent, &mdp, t)?;
        println!("{t},{eta:e},{x:e},{}", *x <= sched.xi_radius);
    }
    Ok(0)
}
