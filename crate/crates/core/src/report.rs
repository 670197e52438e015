//! Text and JSON reports, and scoring against annotated corpora.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::detectors::{Cause, LeakageInstance, LeakageKind};
use crate::fixes::synthesize_fix;
use crate::ingest::{discover_sources, load_unit, LineLocation, SourceUnit};
use crate::taxonomy::Taxonomy;
use crate::{analyze, Analysis, Error};

pub const TOOL_NAME: &str = "leakscan";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Tool {
            name: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportedInstance {
    pub kind: LeakageKind,
    pub cause: Cause,
    pub line: usize,
    pub sink_lines: Vec<usize>,
    /// Cell index and line within the cell, for notebooks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<(usize, usize)>,
    pub variables: Vec<String>,
    pub fixable: bool,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_preview: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub overlap: usize,
    pub preprocessing: usize,
    pub multitest: usize,
}

impl Summary {
    pub fn total(&self) -> usize {
        self.overlap + self.preprocessing + self.multitest
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub tool: Tool,
    pub unit: String,
    pub instances: Vec<ReportedInstance>,
    pub summary: Summary,
}

impl Report {
    /// Builds the report for an analyzed unit. With `previews`, every fixable
    /// instance carries the diff its fix would produce on the unchanged unit.
    pub fn new(unit: &SourceUnit, analysis: &Analysis, previews: bool) -> Self {
        let line_of = |stmt: usize| analysis.model.statement(stmt).span.start_line;
        let mut instances: Vec<ReportedInstance> = analysis
            .instances
            .iter()
            .map(|inst| {
                let line = line_of(inst.source_stmt);
                let cell = match unit.map_line(line) {
                    Ok(LineLocation::Cell { cell, line }) => Some((cell, line)),
                    _ => None,
                };
                let fix_preview = (previews && inst.fixable)
                    .then(|| synthesize_fix(inst, &analysis.model, unit).ok())
                    .flatten()
                    .map(|p| p.preview);
                ReportedInstance {
                    kind: inst.kind,
                    cause: inst.cause,
                    line,
                    sink_lines: inst.sink_stmts.iter().map(|&s| line_of(s)).collect(),
                    cell,
                    variables: inst.variables.clone(),
                    fixable: inst.fixable,
                    message: inst.message.clone(),
                    fix_preview,
                }
            })
            .collect();
        instances.sort_by_key(|i| (i.line, i.kind));
        Report {
            tool: Tool::default(),
            unit: unit.id.clone(),
            summary: summarize(&analysis.instances),
            instances,
        }
    }
}

pub fn summarize(instances: &[LeakageInstance]) -> Summary {
    let count = |k| instances.iter().filter(|i| i.kind == k).count();
    Summary {
        overlap: count(LeakageKind::Overlap),
        preprocessing: count(LeakageKind::Preprocessing),
        multitest: count(LeakageKind::MultiTest),
    }
}

/// A unit that could not be analyzed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorReport {
    pub tool: Tool,
    pub unit: String,
    pub error: String,
}

impl ErrorReport {
    pub fn new(unit: impl Into<String>, error: impl ToString) -> Self {
        ErrorReport {
            tool: Tool::default(),
            unit: unit.into(),
            error: error.to_string(),
        }
    }
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string(value).expect("report types always serialize");
    out.push('\n');
    out
}

pub fn render_json(report: &Report) -> String {
    to_json_line(report)
}

pub fn render_error_json(report: &ErrorReport) -> String {
    to_json_line(report)
}

pub fn render_text(report: &Report) -> String {
    if report.instances.is_empty() {
        return format!("{}: no data leakage detected\n", report.unit);
    }
    let mut out = String::new();
    for inst in &report.instances {
        let location = match inst.cell {
            Some((cell, line)) => LineLocation::Cell { cell, line },
            None => LineLocation::Script(inst.line),
        };
        let _ = writeln!(
            out,
            "{}:{}: {} leakage ({}) — {}",
            report.unit, location, inst.kind, inst.cause, inst.message
        );
    }
    out
}

pub fn render_error_text(report: &ErrorReport) -> String {
    format!("{}: error: {}\n", report.unit, report.error)
}

/// One annotated instance from a `.expected` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Expected {
    pub kind: LeakageKind,
    pub cause: Cause,
    pub line: usize,
    pub sink_lines: Vec<usize>,
}

impl Expected {
    fn key(&self) -> (LeakageKind, Cause, usize) {
        (self.kind, self.cause, self.line)
    }
}

/// Parses `kind cause source_line [sink_line...]` lines. `#` starts a comment.
pub fn parse_sidecar(text: &str) -> Result<Vec<Expected>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = raw
            .split('#')
            .next()
            .unwrap_or("")
            .split_whitespace()
            .collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err((
                line_no,
                "expected `kind cause source_line [sink_line...]`".into(),
            ));
        }
        let kind = LeakageKind::from_key(fields[0])
            .ok_or_else(|| (line_no, format!("unknown kind `{}`", fields[0])))?;
        let cause = Cause::from_name(fields[1])
            .ok_or_else(|| (line_no, format!("unknown cause `{}`", fields[1])))?;
        if cause.kind() != kind {
            return Err((
                line_no,
                format!("cause {cause} does not belong to kind {}", kind.key()),
            ));
        }
        let numbers = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| (line_no, format!("`{f}` is not a line number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Expected {
            kind,
            cause,
            line: numbers[0],
            sink_lines: numbers[1..].to_vec(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct KindScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileScore {
    pub path: String,
    pub matched: bool,
    /// Annotated but not detected.
    pub missing: Vec<Expected>,
    /// Detected but not annotated.
    pub unexpected: Vec<Expected>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusScore {
    pub kinds: BTreeMap<LeakageKind, KindScore>,
    pub files: Vec<FileScore>,
}

impl CorpusScore {
    pub fn kind(&self, kind: LeakageKind) -> KindScore {
        self.kinds.get(&kind).copied().unwrap_or_default()
    }

    pub fn is_exact(&self) -> bool {
        self.files.iter().all(|f| f.matched)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for kind in LeakageKind::ALL {
            let s = self.kind(kind);
            let _ = writeln!(
                out,
                "{:<14} tp={} fp={} fn={}",
                kind.key(),
                s.true_positives,
                s.false_positives,
                s.false_negatives
            );
        }
        for file in self.files.iter().filter(|f| !f.matched) {
            for e in &file.missing {
                let _ = writeln!(
                    out,
                    "{}:{}: missed {} ({})",
                    file.path,
                    e.line,
                    e.kind.key(),
                    e.cause
                );
            }
            for e in &file.unexpected {
                let _ = writeln!(
                    out,
                    "{}:{}: unexpected {} ({})",
                    file.path,
                    e.line,
                    e.kind.key(),
                    e.cause
                );
            }
        }
        let matched = self.files.iter().filter(|f| f.matched).count();
        let _ = writeln!(out, "{matched}/{} files matched", self.files.len());
        out
    }

    pub fn render_json(&self) -> String {
        to_json_line(self)
    }
}

/// Compares one unit's detections with its annotations.
pub fn score_file(path: &str, found: Vec<Expected>, expected: Vec<Expected>) -> FileScore {
    let mut unexpected = found;
    let mut missing = Vec::new();
    for e in expected {
        match unexpected.iter().position(|f| f.key() == e.key()) {
            Some(i) => {
                unexpected.remove(i);
            }
            None => missing.push(e),
        }
    }
    FileScore {
        path: path.to_string(),
        matched: missing.is_empty() && unexpected.is_empty(),
        missing,
        unexpected,
    }
}

/// Detections in sidecar form.
pub fn as_expected(unit_analysis: &Analysis) -> Vec<Expected> {
    let line_of = |stmt: usize| unit_analysis.model.statement(stmt).span.start_line;
    unit_analysis
        .instances
        .iter()
        .map(|inst| Expected {
            kind: inst.kind,
            cause: inst.cause,
            line: line_of(inst.source_stmt),
            sink_lines: inst.sink_stmts.iter().map(|&s| line_of(s)).collect(),
        })
        .collect()
}

/// Scores every source file under `dir` against its `<file>.expected` sidecar.
pub fn score_corpus(dir: &Path, tax: &Taxonomy) -> Result<CorpusScore, Error> {
    let mut kinds: BTreeMap<LeakageKind, KindScore> = LeakageKind::ALL
        .into_iter()
        .map(|k| (k, KindScore::default()))
        .collect();
    let mut files = Vec::new();
    for path in discover_sources(dir)? {
        let mut sidecar = path.clone().into_os_string();
        sidecar.push(".expected");
        let sidecar = Path::new(&sidecar);
        let sidecar_name = sidecar.display().to_string();
        let text = std::fs::read_to_string(sidecar).map_err(|_| Error::MissingSidecar {
            path: sidecar_name.clone(),
        })?;
        let expected = parse_sidecar(&text).map_err(|(line, message)| Error::Sidecar {
            path: sidecar_name,
            line,
            message,
        })?;
        let unit = load_unit(&path)?;
        let found = as_expected(&analyze(&unit, tax)?);

        let total_expected: Vec<LeakageKind> = expected.iter().map(|e| e.kind).collect();
        let score = score_file(&unit.id, found, expected);
        for kind in LeakageKind::ALL {
            let entry = kinds.get_mut(&kind).expect("all kinds are present");
            let fn_ = score.missing.iter().filter(|e| e.kind == kind).count();
            entry.false_negatives += fn_;
            entry.true_positives += total_expected.iter().filter(|&&k| k == kind).count() - fn_;
            entry.false_positives += score.unexpected.iter().filter(|e| e.kind == kind).count();
        }
        files.push(score);
    }
    Ok(CorpusScore { kinds, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OVERLAP: &str = "\
X_new, y_new =  SMOTE().fit_resample (X,y)
X_train, X_test, y_train, y_test = train_test_split(
X_new, y_new, test_size =0.2, random_state = 42)
";

    fn report_for(unit: &SourceUnit) -> Report {
        Report::new(unit, &analyze(unit, &Taxonomy::default()).unwrap(), false)
    }

    #[test]
    fn empty_report_shapes() {
        let report = report_for(&SourceUnit::from_script("clean.py", "x = 1\n"));
        let version = TOOL_VERSION;
        assert_eq!(
            render_json(&report),
            format!(
                "{{\"tool\":{{\"name\":\"leakscan\",\"version\":\"{version}\"}},\"unit\":\"clean.py\",\"instances\":[],\"summary\":{{\"overlap\":0,\"preprocessing\":0,\"multitest\":0}}}}\n"
            )
        );
        assert_eq!(render_text(&report), "clean.py: no data leakage detected\n");
    }

    #[test]
    fn overlap_json_instance() {
        let report = report_for(&SourceUnit::from_script("l1.py", OVERLAP));
        let doc: serde_json::Value = serde_json::from_str(&render_json(&report)).unwrap();
        let inst = &doc["instances"][0];
        assert_eq!(inst["kind"], "overlap");
        assert_eq!(inst["cause"], "SplitBeforeSample");
        assert_eq!(inst["line"], 1);
        assert_eq!(inst["sink_lines"], serde_json::json!([2]));
        assert_eq!(inst["variables"], serde_json::json!(["X_new", "y_new"]));
        assert!(inst.get("cell").is_none());
        assert!(inst.get("fix_preview").is_none());
        let keys: Vec<&str> = inst
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        assert_eq!(
            keys,
            [
                "kind",
                "cause",
                "line",
                "sink_lines",
                "variables",
                "fixable",
                "message"
            ]
        );
        assert_eq!(doc["summary"]["overlap"], 1);
        assert_eq!(
            render_json(&report),
            render_json(&report_for(&SourceUnit::from_script("l1.py", OVERLAP)))
        );
    }

    #[test]
    fn text_lines_name_kind_cause_and_location() {
        let report = report_for(&SourceUnit::from_script("l1.py", OVERLAP));
        let text = render_text(&report);
        assert!(
            text.starts_with("l1.py:1: Overlap leakage (SplitBeforeSample) — "),
            "{text}"
        );
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn multitest_message_names_variable_and_count() {
        let src = "a = m.score(X_test, y)\nb = m.score(X_test, y)\nc = m.score(X_test, y)\nd = m.score(X_test, y)\ne = m.score(X_test, y)\n";
        let report = report_for(&SourceUnit::from_script("m.py", src));
        let inst = &report.instances[0];
        assert_eq!(inst.sink_lines.len(), 4);
        assert!(inst.message.contains("`X_test`"));
        assert!(inst.message.contains("5 evaluations"));
        assert!(inst.message.contains("4 later"));
    }

    #[test]
    fn notebook_locations_use_cells() {
        let nb = r#"{"cells":[
            {"cell_type":"markdown","source":["intro"],"metadata":{}},
            {"cell_type":"code","source":["import x\n","X_new, y_new = SMOTE().fit_resample(X, y)"],"metadata":{},"outputs":[]},
            {"cell_type":"code","source":["parts = train_test_split(X_new, y_new)"],"metadata":{},"outputs":[]}
        ],"metadata":{},"nbformat":4,"nbformat_minor":5}"#;
        let unit = SourceUnit::from_notebook("n.ipynb", nb).unwrap();
        let report = report_for(&unit);
        assert_eq!(report.instances[0].cell, Some((1, 2)));
        assert!(render_text(&report).starts_with("n.ipynb:cell 1, line 2: Overlap"));
        let doc: serde_json::Value = serde_json::from_str(&render_json(&report)).unwrap();
        assert_eq!(doc["instances"][0]["cell"], serde_json::json!([1, 2]));
    }

    #[test]
    fn previews_are_unified_diffs() {
        let unit = SourceUnit::from_script("l1.py", OVERLAP);
        let report = Report::new(&unit, &analyze(&unit, &Taxonomy::default()).unwrap(), true);
        let preview = report.instances[0].fix_preview.as_deref().unwrap();
        assert!(preview.starts_with("--- l1.py\n+++ l1.py\n@@ "));
        assert!(preview.contains("+#TODO: Check the arguments provided to the call to split.\n"));
    }

    #[test]
    fn sidecar_grammar() {
        let parsed = parse_sidecar("# header\noverlap SplitBeforeSample 1 2\n\nmultitest RepeatedEvaluation 3 4 5 # tail\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].sink_lines, [2]);
        assert_eq!(parsed[1].line, 3);
        assert_eq!(parse_sidecar("overlap NoSplit 1").unwrap_err().0, 1);
        assert_eq!(
            parse_sidecar("\noverlap SplitBeforeSample x")
                .unwrap_err()
                .0,
            2
        );
        assert!(parse_sidecar("bogus NoSplit 1").is_err());
    }

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn corpus_scoring_counts() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.py", OVERLAP);
        write(
            dir.path(),
            "a.py.expected",
            "overlap SplitBeforeSample 1 2\n",
        );
        write(dir.path(), "clean.py", "x = 1\n");
        write(dir.path(), "clean.py.expected", "# clean\n");
        let score = score_corpus(dir.path(), &Taxonomy::default()).unwrap();
        assert!(score.is_exact());
        assert_eq!(score.kind(LeakageKind::Overlap).true_positives, 1);

        write(dir.path(), "clean.py.expected", "preprocessing NoSplit 1\n");
        write(dir.path(), "b.py", OVERLAP);
        write(dir.path(), "b.py.expected", "");
        let score = score_corpus(dir.path(), &Taxonomy::default()).unwrap();
        assert_eq!(score.kind(LeakageKind::Preprocessing).false_negatives, 1);
        assert_eq!(score.kind(LeakageKind::Overlap).false_positives, 1);
        assert_eq!(score.kind(LeakageKind::Overlap).true_positives, 1);
        assert_eq!(score.files.iter().filter(|f| !f.matched).count(), 2);

        std::fs::remove_file(dir.path().join("b.py.expected")).unwrap();
        assert!(matches!(
            score_corpus(dir.path(), &Taxonomy::default()),
            Err(Error::MissingSidecar { .. })
        ));
    }
}
