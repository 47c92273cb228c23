use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mmie_data::{generate, parse_corpus, write_corpus};
use mmie_metrics::EvalReport;
use mmie_model::{ModelError, PairMode};
use mmie_train::render::{eval_csv, eval_table, sweep_csv, sweep_table};
use mmie_train::run::write_json;
use mmie_train::{
    evaluate, evaluation_corpus, execute, fixture, full_model_gradcheck, Checkpoint, RunConfig, RunReport, SweepAxis,
    SweepReport, TrainError,
};

#[derive(Parser)]
#[command(name = "mmie", version, about = "Multimodal document information extraction: train, evaluate, sweep")]
struct Cli {
    /// TOML run configuration; unspecified keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the run seed and the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory, for `train`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    GoldPairs,
    PredictedPairs,
}

impl From<Mode> for PairMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::GoldPairs => PairMode::GoldPairs,
            Mode::PredictedPairs => PairMode::PredictedPairs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (JSON Lines).
    Gen {
        /// Overrides `gen.docs`.
        #[arg(long)]
        docs: Option<usize>,
    },
    /// Train, then evaluate on the held-out corpus. With `--out DIR`, writes
    /// DIR/model.ckpt, DIR/report.json and DIR/train_log.jsonl unless the
    /// config names those paths.
    Train,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus to score; defaults to the held-out corpus of the
        /// checkpoint's run configuration.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Finite-difference check of the full model gradient.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Train and evaluate over one axis, several seeds per value.
    Sweep {
        #[arg(long, value_parser = SweepAxis::parse)]
        axis: Option<SweepAxis>,
        /// Comma-separated values, e.g. `0,0.5,1`.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Render a run, evaluation or sweep report as a table; `--out` receives
    /// the plot-data CSV.
    Report { input: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut run = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        run.seed = s;
        run.gen.seed = s;
    }
    run.validate()?;
    Ok(run)
}

fn emit_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    match out {
        Some(p) => Ok(write_json(p, value)?),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn cmd_gen(cli: &Cli, docs: Option<usize>) -> Result<()> {
    let mut run = load_config(cli)?;
    if let Some(n) = docs {
        run.gen.docs = n;
    }
    let corpus = generate(&run.gen)?;
    match cli.out.as_ref().or(run.paths.corpus.as_ref()) {
        Some(p) => {
            write_corpus(p, &corpus)?;
            eprintln!("wrote {} documents to {}", corpus.len(), p.display());
        }
        None => print!("{}", mmie_data::to_jsonl(&corpus.documents)),
    }
    Ok(())
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let mut run = load_config(cli)?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = &mut run.paths;
        p.checkpoint.get_or_insert_with(|| dir.join("model.ckpt"));
        p.report.get_or_insert_with(|| dir.join("report.json"));
        p.log.get_or_insert_with(|| dir.join("train_log.jsonl"));
        run.validate()?;
    }
    let start = Instant::now();
    let (mut epoch, mut sum, mut n) = (0usize, 0.0, 0usize);
    let outcome = execute(&run, |s| {
        if s.epoch != epoch {
            eprintln!("epoch {epoch}: mean loss {:.4}", sum / n.max(1) as f64);
            (epoch, sum, n) = (s.epoch, 0.0, 0);
        }
        sum += s.losses.total;
        n += 1;
    })?;
    if n > 0 {
        eprintln!("epoch {epoch}: mean loss {:.4}", sum / n as f64);
    }
    let r = &outcome.report;
    eprintln!("{} steps in {:.1?}", r.steps, start.elapsed());
    print!("{}", eval_table(&r.eval));
    if run.paths.report.is_none() {
        emit_json(None, r)?;
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, checkpoint: &Path, corpus: Option<&Path>, mode: Option<Mode>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let corpus = match corpus {
        Some(p) => parse_corpus(p)?,
        None => evaluation_corpus(&ckpt.run)?,
    };
    let mode = mode.map(PairMode::from).unwrap_or(ckpt.run.data.eval_mode);
    let report = evaluate(&ckpt.params, &ckpt.model, &corpus, mode)?;
    eprint!("{}", eval_table(&report));
    emit_json(cli.out.as_deref(), &report)
}

fn cmd_gradcheck(cli: &Cli, samples: usize, eps: f64, tol: f64) -> Result<()> {
    let run = load_config(cli)?;
    let model = run.model_config(run.gen.relation_label_names());
    let doc = fixture(6, 2)?;
    let start = Instant::now();
    let report = full_model_gradcheck(&model, &doc, run.seed, samples, eps, run.seed)?;
    let worst = report.worst().context("no coordinates sampled")?;
    eprintln!(
        "max relative error {:.3e} at {}[{}] over {} coordinates ({} kink draws replaced) in {:.1?}",
        report.max_rel_error,
        worst.name,
        worst.index,
        report.samples.len(),
        report.skipped.len(),
        start.elapsed()
    );
    emit_json(cli.out.as_deref(), &report)?;
    if !(report.max_rel_error < tol) {
        return Err(GradcheckFailed(report.max_rel_error, tol).into());
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, axis: Option<SweepAxis>, values: Option<Vec<f64>>, seeds: Option<usize>) -> Result<()> {
    let mut run = load_config(cli)?;
    if let Some(a) = axis {
        run.sweep.axis = a;
    }
    if values.is_some() {
        run.sweep.values = values;
    }
    if let Some(s) = seeds {
        run.sweep.seeds = s;
    }
    run.validate()?;
    let report = mmie_train::sweep(&run, |v, s, e| eprintln!("{}={v} seed {s}: avg {:.4}", run.sweep.axis.as_str(), e.avg))?;
    eprint!("{}", sweep_table(&report));
    emit_json(cli.out.as_deref(), &report)
}

fn cmd_report(cli: &Cli, input: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    let (table, csv) = if value.get("points").is_some() {
        let r: SweepReport = serde_json::from_value(value)?;
        (sweep_table(&r), sweep_csv(&r))
    } else if value.get("eval").is_some() {
        let r: RunReport = serde_json::from_value(value)?;
        (eval_table(&r.eval), eval_csv(&r.eval))
    } else if value.get("avg").is_some() {
        let r: EvalReport = serde_json::from_value(value)?;
        (eval_table(&r), eval_csv(&r))
    } else {
        bail!(Invalid(format!("{} is not a run, evaluation or sweep report", input.display())));
    };
    print!("{table}");
    match &cli.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("\n{csv}"),
    }
    Ok(())
}

#[derive(Debug)]
struct GradcheckFailed(f64, f64);

impl std::fmt::Display for GradcheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gradient check failed: max relative error {:.3e} exceeds {:.1e}", self.0, self.1)
    }
}

impl std::error::Error for GradcheckFailed {}

#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// 2 for numeric failures (non-finite values, failed gradient checks),
/// 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        e.downcast_ref::<TrainError>().is_some_and(TrainError::is_numeric)
            || e.downcast_ref::<ModelError>().is_some_and(ModelError::is_numeric)
            || e.downcast_ref::<GradcheckFailed>().is_some()
            || matches!(e.downcast_ref::<mmie_core::NumericError>(), Some(mmie_core::NumericError::NonFinite { .. }))
    });
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen { docs } => cmd_gen(&cli, *docs),
        Command::Train => cmd_train(&cli),
        Command::Eval { checkpoint, corpus, mode } => cmd_eval(&cli, checkpoint, corpus.as_deref(), *mode),
        Command::Gradcheck { samples, eps, tol } => cmd_gradcheck(&cli, *samples, *eps, *tol),
        Command::Sweep { axis, values, seeds } => cmd_sweep(&cli, *axis, values.clone(), *seeds),
        Command::Report { input } => cmd_report(&cli, input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
