//! `omm`: synthetic panels, training, forecasting, scoring and backtests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use omm_core::benchmarks::{run_benchmark, BenchmarkKind, BenchmarkSpec};
use omm_core::config::{ArtifactMeta, RunConfig};
use omm_core::draws::{draws_summary, write_summary_csv, ForecastDraws};
use omm_core::markov::FittedModelSet;
use omm_core::metrics::{report_table, write_report};
use omm_core::panel::{synth_panel, write_panel, PanelDataset};
use omm_core::pipeline;
use omm_core::{Error, ErrorKind, Result};

const SUMMARY_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Parser)]
#[command(name = "omm", version, about = "Observed Markov model conflict forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the feature pipeline, transition and outcome models.
    Train {
        #[command(flatten)]
        common: Common,
        /// Panel CSV, overriding `paths.panel`.
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Simulate draws for the configured forecast window.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Model archive, overriding `paths.model`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write draws for the four benchmarks.
        #[arg(long)]
        benchmarks: bool,
    },
    /// Score draw files against the panel's actuals.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Draw CSVs; each is named by its file stem in the report.
        #[arg(required = true)]
        draws: Vec<PathBuf>,
    },
    /// Rolling-origin evaluation of the model and the benchmarks.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        panel: Option<PathBuf>,
    },
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        let out = common
            .out
            .clone()
            .or_else(|| cfg.paths.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        Ok(Self { cfg, out })
    }

    fn panel_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.cfg.paths.panel.clone())
            .ok_or_else(|| Error::Config("no panel given (use --panel or paths.panel)".into()))
    }

    fn panel(&self, flag: &Option<PathBuf>) -> Result<PanelDataset> {
        pipeline::load_configured_panel(&self.cfg, &self.panel_path(flag)?)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn meta(&self, command: &str, artifact: &Path) -> Result<()> {
        ArtifactMeta::new(command, &self.cfg).write_sidecar(artifact)?;
        Ok(())
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let r = Run::new(&common)?;
            let panel = synth_panel(&r.cfg.synth, r.cfg.seed)?;
            let path = r.file("panel.csv");
            write_panel(&panel, &path)?;
            r.meta("synth", &path)?;
            println!(
                "wrote {} ({} units, {} rows)",
                path.display(),
                panel.n_units(),
                panel.n_rows()
            );
        }
        Command::Train { common, panel } => {
            let r = Run::new(&common)?;
            let data = r.panel(&panel)?;
            let models = pipeline::train(&data, &r.cfg)?;
            let path = r.file("model.json");
            models.save(&path)?;
            r.meta("train", &path)?;
            println!("wrote {}", path.display());
            for flag in &models.metadata.flags {
                eprintln!("note: {flag}");
            }
        }
        Command::Forecast {
            common,
            panel,
            model,
            benchmarks,
        } => {
            let r = Run::new(&common)?;
            let model_path = model
                .or_else(|| r.cfg.paths.model.clone())
                .ok_or_else(|| Error::Config("no model archive given (use --model or paths.model)".into()))?;
            let models = FittedModelSet::load(&model_path)?;
            let data = r.panel(&panel)?;
            let fd = pipeline::forecast(&models, &data, &r.cfg)?;
            let path = r.file("omm.csv");
            fd.write_csv(&path)?;
            r.meta("forecast", &path)?;
            let summary = r.file("omm_summary.csv");
            write_summary_csv(&draws_summary(&fd, &SUMMARY_LEVELS)?, &SUMMARY_LEVELS, &summary)?;
            r.meta("forecast", &summary)?;
            println!("wrote {} ({} cells x {} draws)", path.display(), fd.cells.len(), fd.n_draws);
            if benchmarks {
                let split = r.cfg.split()?;
                let history = data.through(split.train_end_month);
                for kind in BenchmarkKind::ALL {
                    let spec = BenchmarkSpec {
                        kind,
                        n_draws: r.cfg.simulation.n_draws,
                        seed: r.cfg.seed,
                    };
                    let bd = run_benchmark(&spec, &history, &pipeline::window_of(&split))?;
                    let path = r.file(&format!("{}.csv", kind.name()));
                    bd.write_csv(&path)?;
                    r.meta("forecast", &path)?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Evaluate {
            common,
            panel,
            draws,
        } => {
            let r = Run::new(&common)?;
            let actuals = r.panel(&panel)?;
            let forecasts = draws
                .iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    Ok((name, ForecastDraws::read_csv(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let reports = pipeline::compare(&forecasts, &actuals, &r.cfg)?;
            let rows = pipeline::report_rows(&reports);
            write_report(&rows, &r.out, "report")?;
            r.meta("evaluate", &r.file("report.csv"))?;
            print!("{}", report_table(&rows));
        }
        Command::Backtest { common, panel } => {
            let r = Run::new(&common)?;
            let data = r.panel(&panel)?;
            let bt = pipeline::backtest(&data, &r.cfg)?;
            let path = r.file("backtest.csv");
            write(&path, &bt.to_csv())?;
            r.meta("backtest", &path)?;
            write_report(&bt.pooled, &r.out, "backtest_pooled")?;
            print!("{}", report_table(&bt.pooled));
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Data => 3,
        ErrorKind::Model => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
