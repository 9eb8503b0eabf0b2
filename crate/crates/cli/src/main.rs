use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use uaeval_core::attrib::write_attribution_dump;
use uaeval_core::metrics::all_components;
use uaeval_core::pipeline::evaluate::{collect_attributions, evaluate_prepared, prepare};
use uaeval_core::pipeline::report::{read_report, REPORT_JSON};
use uaeval_core::pipeline::{emit_report, EvaluationConfig, EvaluationReport, ReportFormat};
use uaeval_core::sanity::SanityReport;

/// Evaluate uncertainty attributions of MC dropout / dropconnect ensembles
/// on a tabular dataset.
#[derive(Parser, Debug)]
#[command(name = "uaeval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network per fold and UQ kind and write checkpoints.
    Train(RunArgs),
    /// Dump every ensemble member's attribution as JSON lines.
    Attribute {
        #[command(flatten)]
        run: RunArgs,
        /// Output file (default: <out>/attributions.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full evaluation and write the report files.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Formats to write.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Json, Format::Flat, Format::Plots])]
        format: Vec<Format>,
    },
    /// Recompute the sanity checks of an existing report.
    Sanity {
        /// Path to report.json.
        report: PathBuf,
        /// Also compute every check over all folds pooled.
        #[arg(long)]
        pooled: bool,
        /// Write the updated report and sanity tables here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write CSV exports from an existing report.
    Report {
        /// Path to report.json.
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Flat, Format::Plots])]
        format: Vec<Format>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Test samples per fold.
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated method labels (`mcd+ig`) or explainer labels (`ig`).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Output directory, overriding the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Checkpoint directory: networks are loaded from here when present and
    /// written otherwise.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Flat,
    Plots,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Flat => ReportFormat::Flat,
            Format::Plots => ReportFormat::Plots,
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<EvaluationConfig> {
        let mut cfg = EvaluationConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.folds {
            cfg.folds = k;
            cfg.fold_subset = None;
        }
        if let Some(n) = self.samples {
            cfg.samples_per_fold = n;
        }
        if let Some(m) = &self.methods {
            cfg.method_subset = Some(m.clone());
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn formats(f: &[Format]) -> Vec<ReportFormat> {
    f.iter().map(|&x| x.into()).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn print_summary(report: &EvaluationReport) {
    let comps = all_components();
    print!("{:<14}", "method");
    for c in &comps {
        print!(" {c:>22}");
    }
    println!();
    for m in &report.methods {
        print!("{m:<14}");
        for c in &comps {
            let a = report.aggregate(m, c);
            print!(" {:>22}", fmt_opt(a.and_then(|a| a.mean)));
        }
        println!();
    }
}

fn print_sanity(s: &SanityReport) {
    for e in &s.checks {
        println!(
            "{:<26} {:<36} fold_mean={} pooled={}",
            e.metric,
            e.check.label(),
            fmt_opt(e.fold_mean),
            fmt_opt(e.pooled)
        );
    }
    for e in &s.internal_consistency {
        println!(
            "{} vs {:<16} {:<14} fold_mean={} pooled={}",
            e.metric_a,
            e.metric_b,
            e.method,
            fmt_opt(e.fold_mean),
            fmt_opt(e.pooled)
        );
    }
}

fn write_written(paths: &[PathBuf]) {
    for p in paths {
        info!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let dir = args
                .checkpoints
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join("checkpoints"));
            let run = prepare(&cfg, Some(&dir))?;
            println!(
                "{} networks in {}",
                run.folds.iter().map(|f| f.networks.len()).sum::<usize>(),
                dir.display()
            );
        }
        Command::Attribute { run: args, output } => {
            let cfg = args.load()?;
            let run = prepare(&cfg, args.checkpoints.as_deref())?;
            let records = collect_attributions(&cfg, &run)?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("attributions.jsonl"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_attribution_dump(&mut w, &records)?;
            w.flush()?;
            println!("{} member attributions in {}", records.len(), path.display());
        }
        Command::Evaluate { run: args, format } => {
            let cfg = args.load()?;
            let run = prepare(&cfg, args.checkpoints.as_deref())?;
            let report = evaluate_prepared(&cfg, &run)?;
            let written = emit_report(&report, &cfg.output_dir, &formats(&format))?;
            write_written(&written);
            print_summary(&report);
        }
        Command::Sanity {
            report,
            pooled,
            out,
        } => {
            let mut r = read_report(&report)?;
            r.sanity = r.compute_sanity(pooled)?;
            print_sanity(&r.sanity);
            if let Some(dir) = out {
                let written = emit_report(&r, &dir, &[ReportFormat::Json, ReportFormat::Plots])?;
                write_written(&written);
            }
        }
        Command::Report {
            report,
            out,
            format,
        } => {
            let r = read_report(&report)?;
            if format.is_empty() {
                bail!("no format requested");
            }
            let same = out.join(REPORT_JSON) == report;
            let mut fmts = formats(&format);
            if same {
                fmts.retain(|f| *f != ReportFormat::Json);
            }
            write_written(&emit_report(&r, Path::new(&out), &fmts)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
