use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poison_harness::datasets::fetch_check;
use poison_harness::output::{write_ablation, write_curve, write_landscape, write_timing};
use poison_harness::{
    run_ablation_prototypes, run_landscape, run_poisoning_curve, run_timing_comparison, DataContext, ExperimentSpec,
    HarnessError, LandscapeConfig, Result,
};

#[derive(Parser)]
#[command(name = "poison", version, about = "Run poisoning experiments and write their tables")]
struct Cli {
    /// Dataset root (defaults to $POISON_DATA_DIR, then ./data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (defaults to runs/<spec name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (all cores by default).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy under poisoning for every C, fraction and repetition of a spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Replace the spec's fraction list (repeatable).
        #[arg(long)]
        fraction: Vec<f64>,
        /// Fixed poison count for every positive fraction.
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Attack wall time of two specs that share dataset, model and budget.
    Timing {
        #[arg(long)]
        spec_a: PathBuf,
        #[arg(long)]
        spec_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prototype-count sweep at about 15% poison.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
        /// `2..30` (inclusive range) or a comma list such as `2,5,10,15,30`.
        #[arg(long, value_parser = parse_k)]
        k: KList,
        #[command(flatten)]
        common: Common,
    },
    /// Bilevel-objective and density surfaces on the two-Gaussian toy.
    Landscape {
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/landscape")]
        out: PathBuf,
    },
    /// Dataset utilities.
    Datasets {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Check that dataset files exist and decode.
    FetchCheck {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::All)]
        only: Which,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    All,
    Mnist,
    Cifar,
}

#[derive(Clone, Debug)]
struct KList(Vec<usize>);

fn parse_k(s: &str) -> std::result::Result<KList, String> {
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|e| format!("bad k {t:?}: {e}"))).collect::<std::result::Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err("k values must be a non-empty list of positive counts".into());
    }
    Ok(KList(ks))
}

fn out_dir(out: Option<PathBuf>, spec: &ExperimentSpec) -> PathBuf {
    out.unwrap_or_else(|| Path::new("runs").join(&spec.name))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = match cli.data_dir {
        Some(d) => DataContext::new(d),
        None => DataContext::from_env(),
    };
    match cli.command {
        Command::Run { spec, fraction, count, common } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if !fraction.is_empty() {
                spec.fractions = fraction;
            }
            if count.is_some() {
                spec.count = count;
            }
            spec.validate()?;
            let record = run_poisoning_curve(&spec, &ctx, common.jobs)?;
            for &c in &spec.reg_c {
                for &f in &spec.fractions {
                    let a = record.accuracy_at(c, f);
                    println!("C={c} fraction={f} accuracy={:.4}±{:.4}", a.mean, a.std);
                }
            }
            for flag in &record.flags {
                println!("note: {flag}");
            }
            report(&write_curve(&record, &out_dir(common.out, &spec))?);
        }
        Command::Timing { spec_a, spec_b, out } => {
            let a = ExperimentSpec::load(&spec_a)?;
            let b = ExperimentSpec::load(&spec_b)?;
            let table = run_timing_comparison(&a, &b, &ctx)?;
            for r in &table.rows {
                println!(
                    "C={} count={}: {} {:.3}±{:.3} s, {} {:.3}±{:.3} s, speedup {:.1}x",
                    r.reg_c, r.count, table.name_a, r.a.mean, r.a.std, table.name_b, r.b.mean, r.b.std, r.speedup
                );
            }
            let dir = out.unwrap_or_else(|| Path::new("runs").join(format!("timing_{}_{}", a.name, b.name)));
            report(&write_timing(&table, &dir)?);
        }
        Command::Ablate { spec, k, common } => {
            let spec = ExperimentSpec::load(&spec)?;
            let record = run_ablation_prototypes(&spec, &k.0, &ctx, common.jobs)?;
            for &c in &spec.reg_c {
                for &kk in &k.0 {
                    let s = record.surrogate_at_k(c, kk);
                    println!("C={c} k={kk} surrogate accuracy={:.4}±{:.4}", s.mean, s.std);
                }
            }
            report(&write_ablation(&record, &out_dir(common.out, &spec))?);
        }
        Command::Landscape { resolution, seed, out } => {
            let l = run_landscape(&LandscapeConfig::new(seed, resolution), &ctx)?;
            let s = &l.summary;
            println!("oracle argmax {:?} loss {:.4}", s.oracle_argmax, s.oracle_max);
            println!("density argmax {:?} ({:.2} sigma from the class mean)", s.kde_argmax, s.kde_argmax_sigmas_from_mean);
            println!("bilevel attack loss {:.4} ({:.3} of the grid maximum)", s.bilevel_loss, s.bilevel_over_oracle);
            report(&write_landscape(&l, &out)?);
        }
        Command::Datasets { action: DatasetAction::FetchCheck { dir, only } } => {
            let statuses = fetch_check(&dir, only != Which::Cifar, only != Which::Mnist);
            let mut failed = Vec::new();
            for s in &statuses {
                match &s.outcome {
                    Ok(n) => println!("{}: ok, {n} rows", s.name),
                    Err(e) => {
                        println!("{}: {e}", s.name);
                        failed.push(s.name);
                    }
                }
            }
            if !failed.is_empty() {
                return Err(HarnessError::Data(format!(
                    "unavailable under {}: {}; see scripts/fetch-mnist.sh for MNIST",
                    dir.display(),
                    failed.join(", ")
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
