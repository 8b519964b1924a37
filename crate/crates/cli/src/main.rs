use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nextfocus::pipeline::{self, Approach, RunConfig};
use nextfocus::Error;

#[derive(Parser)]
#[command(name = "nextfocus", version, about = "Next-focus prediction for model completion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed applied to every component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Gen,
    /// Build splits, labeled pairs and co-change counts.
    Prepare,
    /// Train the ranker.
    Train,
    /// Evaluate one approach (or `all`) on the test diffs.
    Eval {
        #[arg(long, default_value = "nextfocus")]
        approach: String,
        /// Restrict candidates to this many hops from the anchor.
        #[arg(long)]
        tau: Option<usize>,
        /// Also sweep the configured radii and write plot data.
        #[arg(long)]
        plot_data: bool,
    },
    /// Print the top-k focus nodes for an anchor, one per line.
    Rank {
        #[arg(long)]
        project: String,
        #[arg(long)]
        anchor: String,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
}

fn print_json<T: serde::Serialize>(v: &T) -> nextfocus::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> nextfocus::Result<bool> {
    let g = &cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref(), &g.set, g.seed, g.out.as_deref())?;
    match cli.command {
        Command::Gen => print_json(&pipeline::cmd_gen(&cfg)?)?,
        Command::Prepare => print_json(&pipeline::cmd_prepare(&cfg)?)?,
        Command::Train => print_json(&pipeline::cmd_train(&cfg)?)?,
        Command::Eval { approach, tau, plot_data } => {
            if tau.is_some() {
                cfg.eval.tau = tau;
            }
            cfg.eval.plot_data |= plot_data;
            let approaches = if approach == "all" {
                Approach::ALL.to_vec()
            } else {
                vec![approach.parse()?]
            };
            for a in approaches {
                for r in pipeline::cmd_eval(&cfg, a)? {
                    let tau = r.tau.map_or_else(|| "inf".to_owned(), |t| t.to_string());
                    println!(
                        "{:<10} tau={:<4} anchors={:<3} mean P@1..{}={:.4} prevalence={:.4}",
                        r.approach, tau, r.summary.anchors, r.k_max, r.summary.mean_precision, r.summary.prevalence
                    );
                }
            }
        }
        Command::Rank { project, anchor, k } => {
            for s in pipeline::cmd_rank(&cfg, &project, &anchor, k)? {
                println!("{}", s.id);
            }
        }
        Command::Gradcheck => {
            let r = pipeline::cmd_gradcheck(&cfg)?;
            print_json(&r)?;
            return Ok(r.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if Error::is_validation(&e) { 1 } else { 2 })
        }
    }
}
