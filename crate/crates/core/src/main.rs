use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pbrs::envs::{benchmark, compile_grid, standard_benchmarks};
use pbrs::harness::experiment::{RESOLVED_CONFIG_FILE, SUMMARY_FILE};
use pbrs::harness::{
    run_experiment, summarize, summarize_dir, verify, write_mean_curves, ComparisonSummary,
    ExperimentConfig, VerifyOptions,
};
use pbrs::oracle::optimal_episode_reward;

#[derive(Parser)]
#[command(
    name = "pbrs",
    version,
    about = "Episode-reward shaping experiments on tabular benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment config and summarize the results.
    Run {
        config: PathBuf,
        /// Output directory (default: results/<config name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary of a result directory.
    Summarize {
        dir: PathBuf,
        /// Also write mean learning curves with this trailing-mean window.
        #[arg(long)]
        curves_window: Option<usize>,
    },
    /// Run the verification suite and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 100)]
        sweep_size: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
    },
    /// Inspect the built-in benchmarks.
    Envs {
        #[command(subcommand)]
        command: EnvsCommand,
    },
}

#[derive(Subcommand)]
enum EnvsCommand {
    List,
    Show { name: String },
}

fn print_summary(summary: &ComparisonSummary) {
    println!("config digest {}", summary.config_digest);
    for t in &summary.tasks {
        println!(
            "\n{} / {}  (optimal {}, threshold {})",
            t.group, t.task, t.optimal_episode_reward, t.threshold
        );
        for a in &t.arms {
            let ci = a.auc_ci.map_or("n/a".to_owned(), |ci| {
                format!("[{:.1}, {:.1}]", ci.lower, ci.upper)
            });
            let ett = a
                .median_episodes_to_threshold
                .map_or("never".to_owned(), |e| format!("{e}"));
            println!(
                "  {:<20} seeds {:>3}  auc {:>12.1} {ci:<24} median to threshold {ett:>7}  final policy {:.3}",
                a.arm, a.n_seeds, a.auc_mean, a.final_policy_mean
            );
        }
        for c in &t.comparisons {
            if let Some(d) = &c.auc_difference {
                println!(
                    "  {} - {}: auc diff {:.1}, 95% lower bound {:.1}",
                    c.candidate, c.baseline, d.mean, d.lower_95
                );
            }
        }
    }
}

fn run(config_path: &Path, out: Option<PathBuf>) -> pbrs::Result<ExitCode> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let config = ExperimentConfig::load(config_path)?.resolve(base)?;
    let out = out.unwrap_or_else(|| PathBuf::from("results").join(&config.name));
    let results = run_experiment(&config, &out)?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    for r in results.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "run {}/{}/seed {} failed: {}",
            r.group,
            r.arm,
            r.seed_index,
            r.error.as_deref().unwrap_or("")
        );
    }
    let summary = summarize(&config, &results)?;
    std::fs::write(
        out.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    print_summary(&summary);
    println!(
        "\nresults in {} ({RESOLVED_CONFIG_FILE}, runs/, {SUMMARY_FILE})",
        out.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Summarize { dir, curves_window } => summarize_dir(&dir).and_then(|summary| {
            print_summary(&summary);
            if let Some(w) = curves_window {
                println!(
                    "\ncurves written to {}",
                    write_mean_curves(&dir, w)?.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::Verify {
            sweep_size,
            master_seed,
        } => {
            let options = VerifyOptions {
                sweep_size,
                master_seed,
                ..VerifyOptions::default()
            };
            verify(&options).and_then(|report| {
                println!("{}", serde_json::to_string_pretty(&report)?);
                if report.pass {
                    Ok(ExitCode::SUCCESS)
                } else {
                    eprintln!("failing claims: {}", report.failing().join(", "));
                    Ok(ExitCode::FAILURE)
                }
            })
        }
        Command::Envs {
            command: EnvsCommand::List,
        } => {
            for b in standard_benchmarks() {
                println!("{:<18} {:>5} states  {}", b.name, b.n_states, b.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Envs {
            command: EnvsCommand::Show { name },
        } => benchmark(&name).and_then(|b| {
            let mdp = compile_grid(&b.spec, b.spec.gamma)?;
            println!("# {} ({} states)", b.name, mdp.n_states());
            println!("# {}", b.description);
            println!(
                "# episode reward range [{}, {}]",
                b.reward_bounds.0, b.reward_bounds.1
            );
            println!(
                "# optimal episode reward {}",
                optimal_episode_reward(&mdp, b.spec.max_steps)?
            );
            print!("{}", b.spec.to_map_text());
            Ok(ExitCode::SUCCESS)
        }),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
