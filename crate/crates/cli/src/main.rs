//! `gmipc`: run closed-loop suites and write tables, record logs and plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmipc::harness::report::{
    ablation_csv, confidence_rows, confidence_summary_csv, navigation_csv, run_grid, summary_csv, to_csv,
    validity_csv, write_common,
};
use gmipc::harness::{emit_plot, Model, RunConfig, SuiteResult, TrialLog};
use gmipc::simworld::ScenarioKind;
use gmipc::{selftest, GmIpcError, Result};

#[derive(Parser)]
#[command(name = "gmipc", version, about = "Gaussian-mixture perception contracts for barrier-constrained navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// chair, sofa, multi_sofa, mixed or empty
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// gmm, ellip1, ellip2, gmm_no_nll or gmm_no_empty
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; trial scenarios derive from it and the trial index
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with [run], [fit], [mpc] and [sensor] sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and model from the config
    Simulate(Common),
    /// Inclusion, stepwise validity and compactness (chair, sofa)
    Validity(Common),
    /// Confidence level at which each union matches the obstacle footprint
    Confidence(Common),
    /// Success rate and path efficiency (multi_sofa)
    Navigate(Common),
    /// Loss-term ablations (sofa)
    Ablate(Common),
    /// Render trial record logs as SVG
    Plot {
        /// Record files written under <out>/logs
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "out/plots")]
        out: PathBuf,
    },
    /// Run the randomized oracle checks
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.run.scenario = s;
        }
        if let Some(m) = self.model {
            cfg.run.model = m;
        }
        if let Some(n) = self.trials {
            cfg.run.n_trials = n;
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flags narrow a command's default grid.
    fn grid(&self, scenarios: &[ScenarioKind], models: &[Model]) -> (Vec<ScenarioKind>, Vec<Model>) {
        (
            self.scenario.map_or_else(|| scenarios.to_vec(), |s| vec![s]),
            self.model.map_or_else(|| models.to_vec(), |m| vec![m]),
        )
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_tables(
    c: &Common,
    scenarios: &[ScenarioKind],
    models: &[Model],
    tables: &[(&str, fn(&[SuiteResult]) -> Result<String>)],
) -> Result<Vec<SuiteResult>> {
    let cfg = c.config()?;
    let (scenarios, models) = c.grid(scenarios, models);
    let suites = run_grid(&cfg, &scenarios, &models);
    write_common(&c.out, &suites)?;
    for (name, f) in tables {
        write(&c.out, name, &f(&suites)?)?;
    }
    for s in &suites {
        for e in s.logs.iter().filter_map(|r| r.as_ref().err()) {
            eprintln!("{} {}: {e}", s.row.scenario, s.row.model);
        }
    }
    print!("{}", summary_csv(&suites)?);
    Ok(suites)
}

fn run(cli: Cli) -> Result<bool> {
    use ScenarioKind::*;
    let baselines = [Model::Gmm, Model::Ellip1, Model::Ellip2];
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.config()?;
            run_tables(&c, &[cfg.run.scenario], &[cfg.run.model], &[("summary.csv", summary_csv)])?;
        }
        Command::Validity(c) => {
            run_tables(&c, &[Chair, Sofa], &baselines, &[("validity.csv", validity_csv)])?;
        }
        Command::Navigate(c) => {
            run_tables(&c, &[MultiSofa], &baselines, &[("navigation.csv", navigation_csv)])?;
        }
        Command::Ablate(c) => {
            let models = [Model::Gmm, Model::GmmNoNll, Model::GmmNoEmpty];
            run_tables(&c, &[Sofa], &models, &[("ablation.csv", ablation_csv)])?;
        }
        Command::Confidence(c) => {
            let suites = run_tables(&c, &[MultiSofa], &baselines, &[])?;
            let rows = confidence_rows(&suites)?;
            write(&c.out, "confidence_trials.csv", &to_csv(&rows)?)?;
            let summary = confidence_summary_csv(&rows)?;
            write(&c.out, "confidence.csv", &summary)?;
            print!("{summary}");
        }
        Command::Plot { logs, out } => {
            std::fs::create_dir_all(&out)?;
            for path in logs {
                let log = TrialLog::from_jsonl(&std::fs::read_to_string(&path)?)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
                let target = out.join(format!("{stem}.svg"));
                emit_plot(&log, &target)?;
                println!("wrote {}", target.display());
            }
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if let GmIpcError::Config(_) = e {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
