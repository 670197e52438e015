//! Static detection of data leakage in machine-learning Python code.
//!
//! The pipeline is `ingest -> syntax -> flow -> detectors`, with `fixes`
//! producing quick-fix patches and `report` rendering the results.
//!
//! ```
//! use leakscan_core::{analyze, SourceUnit, Taxonomy};
//!
//! let unit = SourceUnit::from_script(
//!     "train.py",
//!     "X_new, y_new = SMOTE().fit_resample(X, y)\n\
//!      X_train, X_test, y_train, y_test = train_test_split(X_new, y_new)\n",
//! );
//! let analysis = analyze(&unit, &Taxonomy::default()).unwrap();
//! assert_eq!(analysis.instances.len(), 1);
//! ```

use std::collections::HashSet;

use thiserror::Error;

pub mod detectors;
pub mod fixes;
pub mod flow;
pub mod ingest;
pub mod report;
pub mod syntax;
pub mod taxonomy;

pub use detectors::{detect_all, Cause, LeakageInstance, LeakageKind};
pub use fixes::{apply_patch, synthesize_fix, Edit, EditKind, FixError, Patch};
pub use flow::{build_flow, FlowGraph};
pub use ingest::{discover_sources, load_unit, IngestError, LineLocation, SourceUnit, UnitKind};
pub use report::{render_json, render_text, score_corpus, CorpusScore, Report};
pub use syntax::{parse, ParseError, ProgramModel, Span};
pub use taxonomy::{load_taxonomy, CallRole, ConfigError, Taxonomy};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Fix {
        path: String,
        #[source]
        source: FixError,
    },
    #[error("missing sidecar {path}")]
    MissingSidecar { path: String },
    #[error("{path}:{line}: {message}")]
    Sidecar {
        path: String,
        line: usize,
        message: String,
    },
}

/// Everything derived from one unit.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: ProgramModel,
    pub flow: FlowGraph,
    pub instances: Vec<LeakageInstance>,
}

pub fn analyze(unit: &SourceUnit, tax: &Taxonomy) -> Result<Analysis, Error> {
    let model = parse(unit).map_err(|source| Error::Parse {
        path: unit.id.clone(),
        source,
    })?;
    let flow = build_flow(&model);
    let instances = detect_all(&model, &flow, tax);
    Ok(Analysis {
        model,
        flow,
        instances,
    })
}

/// Result of fixing a unit until no fixable instance is left.
#[derive(Debug, Clone)]
pub struct FixOutcome {
    pub unit: SourceUnit,
    /// Patches in the order they were applied, each against the unit
    /// produced by the previous one.
    pub applied: Vec<Patch>,
    /// Instances still present in the final unit.
    pub remaining: Vec<LeakageInstance>,
}

const MAX_FIX_ROUNDS: usize = 256;

/// Applies fixes one instance at a time, re-analyzing between applications.
/// Stops when nothing fixable is left, when a patch would revisit an earlier
/// state of the unit, or after a bounded number of rounds.
pub fn fix_unit(unit: &SourceUnit, tax: &Taxonomy) -> Result<FixOutcome, Error> {
    let mut current = unit.clone();
    let mut applied = Vec::new();
    let mut seen: HashSet<String> = HashSet::from([current.flat_text()]);
    for _ in 0..MAX_FIX_ROUNDS {
        let analysis = analyze(&current, tax)?;
        let mut next = None;
        for inst in analysis.instances.iter().filter(|i| i.fixable) {
            let patch = match synthesize_fix(inst, &analysis.model, &current) {
                Ok(patch) => patch,
                Err(FixError::NotFixable { .. }) => continue,
                Err(source) => {
                    return Err(Error::Fix {
                        path: current.id.clone(),
                        source,
                    })
                }
            };
            let patched = apply_patch(&current, &patch).map_err(|source| Error::Fix {
                path: current.id.clone(),
                source,
            })?;
            if seen.insert(patched.flat_text()) {
                next = Some((patch, patched));
                break;
            }
        }
        let Some((patch, patched)) = next else {
            return Ok(FixOutcome {
                unit: current,
                applied,
                remaining: analysis.instances,
            });
        };
        applied.push(patch);
        current = patched;
    }
    let remaining = analyze(&current, tax)?.instances;
    Ok(FixOutcome {
        unit: current,
        applied,
        remaining,
    })
}
