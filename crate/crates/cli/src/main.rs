use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use leakscan_core::fixes::unified_diff;
use leakscan_core::report::{render_error_json, render_error_text, ErrorReport};
use leakscan_core::{
    analyze, discover_sources, fix_unit, load_taxonomy, load_unit, render_json, render_text,
    score_corpus, Report, Taxonomy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FailOn {
    Any,
    None,
}

/// Find data leakage in machine-learning Python scripts and notebooks.
#[derive(Debug, Parser)]
#[command(name = "leakscan", version)]
struct Args {
    /// Files or directories; directories are searched for *.py and *.ipynb.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Apply quick fixes and rewrite files in place.
    #[arg(long)]
    fix: bool,
    /// Show the fixes as unified diffs without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Taxonomy file with `role: keyword, ...` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Score each directory against its `.expected` sidecar files.
    #[arg(long, conflicts_with_all = ["fix", "dry_run"])]
    corpus: bool,
    /// Whether found leakage makes the exit status 1.
    #[arg(long, value_enum, default_value_t = FailOn::Any)]
    fail_on: FailOn,
}

const EXIT_LEAKAGE: u8 = 1;
const EXIT_ERROR: u8 = 2;

/// What one input produced, printed in path order.
#[derive(Default)]
struct Outcome {
    stdout: String,
    stderr: String,
    leaks: usize,
    failed: bool,
}

impl Outcome {
    fn error(path: &str, error: impl ToString, format: Format) -> Self {
        let report = ErrorReport::new(path, error);
        let (stdout, stderr) = match format {
            Format::Json => (render_error_json(&report), String::new()),
            Format::Text => (String::new(), render_error_text(&report)),
        };
        Outcome {
            stdout,
            stderr,
            leaks: 0,
            failed: true,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let tax = match load_taxonomy(args.config.as_deref()) {
        Ok(tax) => tax,
        Err(e) => {
            eprintln!("leakscan: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let outcomes = if args.corpus {
        args.paths
            .iter()
            .map(|dir| run_corpus(dir, &tax, args.format))
            .collect()
    } else {
        run_files(&args, &tax)
    };

    let mut failed = false;
    let mut leaks = 0;
    for outcome in &outcomes {
        print!("{}", outcome.stdout);
        eprint!("{}", outcome.stderr);
        failed |= outcome.failed;
        leaks += outcome.leaks;
    }
    if failed {
        ExitCode::from(EXIT_ERROR)
    } else if leaks > 0 && args.fail_on == FailOn::Any {
        ExitCode::from(EXIT_LEAKAGE)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_corpus(dir: &std::path::Path, tax: &Taxonomy, format: Format) -> Outcome {
    let name = dir.display().to_string();
    match score_corpus(dir, tax) {
        Ok(score) => Outcome {
            stdout: match format {
                Format::Text => score.render_text(),
                Format::Json => score.render_json(),
            },
            stderr: String::new(),
            leaks: usize::from(!score.is_exact()),
            failed: false,
        },
        Err(e) => Outcome::error(&name, e, format),
    }
}

fn run_files(args: &Args, tax: &Taxonomy) -> Vec<Outcome> {
    let mut outcomes = Vec::new();
    let mut files = Vec::new();
    for path in &args.paths {
        match discover_sources(path) {
            Ok(found) => files.extend(found),
            Err(e) => outcomes.push(Outcome::error(&path.display().to_string(), e, args.format)),
        }
    }
    files.sort();
    files.dedup();
    let analyzed: Vec<Outcome> = files
        .par_iter()
        .map(|path| run_file(path, args, tax))
        .collect();
    outcomes.extend(analyzed);
    outcomes
}

fn run_file(path: &std::path::Path, args: &Args, tax: &Taxonomy) -> Outcome {
    let name = path.display().to_string();
    let unit = match load_unit(path) {
        Ok(unit) => unit,
        Err(e) => return Outcome::error(&name, e, args.format),
    };
    let analysis = match analyze(&unit, tax) {
        Ok(a) => a,
        Err(e) => return Outcome::error(&name, e, args.format),
    };
    let fixing = args.fix || args.dry_run;
    let report = Report::new(
        &unit,
        &analysis,
        args.dry_run && args.format == Format::Json,
    );
    let mut outcome = Outcome {
        stdout: match args.format {
            Format::Text => render_text(&report),
            Format::Json => render_json(&report),
        },
        leaks: report.summary.total(),
        ..Outcome::default()
    };
    if !fixing || analysis.instances.iter().all(|i| !i.fixable) {
        return outcome;
    }

    let fixed = match fix_unit(&unit, tax) {
        Ok(fixed) => fixed,
        Err(e) => return Outcome::error(&name, e, args.format),
    };
    if fixed.applied.is_empty() {
        return outcome;
    }
    if args.dry_run {
        if args.format == Format::Text {
            outcome.stdout.push_str(&unified_diff(&unit, &fixed.unit));
        }
        return outcome;
    }
    if let Err(e) = std::fs::write(path, fixed.unit.to_file_text()) {
        return Outcome::error(&name, format!("cannot write fixes: {e}"), args.format);
    }
    outcome.stderr = format!("{name}: applied {} fix(es)\n", fixed.applied.len());
    outcome
}
