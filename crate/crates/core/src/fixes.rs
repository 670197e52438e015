//! Quick-fix synthesis and application.
//!
//! A [`Patch`] is a list of line-level edits resolved against the unit it was
//! synthesized from. Fixes are skeletons: they reorder or rename code and
//! leave a TODO line for the user to finish the job.

use std::collections::BTreeMap;

use similar::TextDiff;
use thiserror::Error;

use crate::detectors::{Cause, LeakageInstance, LeakageKind};
use crate::ingest::SourceUnit;
use crate::syntax::{fingerprint, ProgramModel, Span, Statement};

pub const SPLIT_TODO: &str = "#TODO: Check the arguments provided to the call to split.";
pub const SPLIT_PLACEHOLDER: &str = "split()";

pub fn multitest_todo(renamed: &str) -> String {
    format!("#TODO: Load new test data into {renamed}.")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    /// Removes the whole lines of a statement. Non-empty `text` replaces them
    /// with a single line.
    DeleteStmt,
    /// Inserts one line above the first line of `target`.
    InsertLine,
    /// Replaces the single-line token at `target`.
    RenameToken,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub kind: EditKind,
    pub target: Span,
    /// Statement the target belongs to.
    pub stmt: Option<usize>,
    pub text: String,
    /// Statement whose leading whitespace an inserted line copies.
    pub indent_from: Option<usize>,
    /// That whitespace, resolved at synthesis time.
    pub indent: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceRef {
    pub kind: LeakageKind,
    pub cause: Cause,
    pub source_stmt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub instance: InstanceRef,
    pub edits: Vec<Edit>,
    /// Unified diff of the flat text before and after the patch.
    pub preview: String,
    source_hash: u64,
}

impl Patch {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixError {
    #[error("{cause} leakage at statement {stmt} has no automatic fix")]
    NotFixable { cause: &'static str, stmt: usize },
    #[error("the unit changed since it was analyzed")]
    StaleModel,
    #[error("patch edits conflict: {0}")]
    OverlapConflict(String),
    #[error("patch target is stale: {0}")]
    SpanStale(String),
}

/// Builds the patch for one fixable instance.
pub fn synthesize_fix(
    inst: &LeakageInstance,
    model: &ProgramModel,
    unit: &SourceUnit,
) -> Result<Patch, FixError> {
    if model.source_hash != fingerprint(unit.lines()) {
        return Err(FixError::StaleModel);
    }
    let not_fixable = || FixError::NotFixable {
        cause: inst.cause.name(),
        stmt: inst.source_stmt,
    };
    if !inst.fixable {
        return Err(not_fixable());
    }
    let stmt = |i: usize| model.statements.get(i).ok_or_else(not_fixable);

    let mut edits = Vec::new();
    match inst.cause {
        Cause::SplitBeforeSample | Cause::SplitAfterTransform => {
            let split = stmt(*inst.sink_stmts.first().ok_or_else(not_fixable)?)?;
            let anchor = stmt(inst.fix_anchor.unwrap_or(inst.source_stmt))?;
            if !split.is_movable() || anchor.index >= split.index {
                return Err(not_fixable());
            }
            edits.push(insert(anchor, SPLIT_TODO.to_string()));
            let first = split.span.start_line;
            for line_no in first..=split.span.end_line {
                let line = &unit.lines()[line_no - 1];
                let body = if line_no == first {
                    &line[split.indent.len()..]
                } else {
                    line.strip_prefix(split.indent.as_str()).unwrap_or(line)
                };
                edits.push(insert(anchor, body.to_string()));
            }
            let alone = split.parent.is_some()
                && !model
                    .statements
                    .iter()
                    .any(|s| s.parent == split.parent && s.index != split.index);
            edits.push(Edit {
                kind: EditKind::DeleteStmt,
                target: line_span(split, unit),
                stmt: Some(split.index),
                text: if alone {
                    "pass".to_string()
                } else {
                    String::new()
                },
                indent_from: Some(split.index),
                indent: split.indent.clone(),
            });
        }
        Cause::NoSplit => {
            let anchor = stmt(inst.fix_anchor.unwrap_or(inst.source_stmt))?;
            edits.push(insert(anchor, SPLIT_TODO.to_string()));
            edits.push(insert(anchor, SPLIT_PLACEHOLDER.to_string()));
        }
        Cause::RepeatedEvaluation => {
            let var = inst.variables.first().ok_or_else(not_fixable)?;
            if inst.usages.len() < 2 {
                return Err(not_fixable());
            }
            for (i, &(stmt_index, span)) in inst.usages.iter().enumerate().skip(1) {
                let renamed = format!("{var}_{i}");
                let usage_stmt = stmt(stmt_index)?;
                edits.push(insert(usage_stmt, multitest_todo(&renamed)));
                edits.push(Edit {
                    kind: EditKind::RenameToken,
                    target: span,
                    stmt: Some(stmt_index),
                    text: renamed,
                    indent_from: None,
                    indent: String::new(),
                });
            }
        }
    }

    let mut patch = Patch {
        instance: InstanceRef {
            kind: inst.kind,
            cause: inst.cause,
            source_stmt: inst.source_stmt,
        },
        edits,
        preview: String::new(),
        source_hash: model.source_hash,
    };
    let patched = apply_patch(unit, &patch)?;
    patch.preview = unified_diff(unit, &patched);
    Ok(patch)
}

fn insert(anchor: &Statement, text: String) -> Edit {
    Edit {
        kind: EditKind::InsertLine,
        target: anchor.span,
        stmt: Some(anchor.index),
        text,
        indent_from: Some(anchor.index),
        indent: anchor.indent.clone(),
    }
}

/// The statement's span widened to whole lines.
fn line_span(stmt: &Statement, unit: &SourceUnit) -> Span {
    let end_col = unit
        .line(stmt.span.end_line)
        .map_or(stmt.span.end_col, str::len);
    Span {
        start_line: stmt.span.start_line,
        start_col: 0,
        end_line: stmt.span.end_line,
        end_col,
    }
}

/// Unified diff of the flat text, with the unit path in both headers.
pub fn unified_diff(before: &SourceUnit, after: &SourceUnit) -> String {
    let old = before.flat_text();
    let new = after.flat_text();
    TextDiff::from_lines(&old, &new)
        .unified_diff()
        .context_radius(3)
        .header(&before.id, &after.id)
        .to_string()
}

/// Applies a patch synthesized against `unit`. Lines not targeted by an edit
/// are copied unchanged; in notebooks each new line lands in the cell of the
/// line it was inserted above.
pub fn apply_patch(unit: &SourceUnit, patch: &Patch) -> Result<SourceUnit, FixError> {
    if patch.edits.is_empty() {
        return Ok(unit.clone());
    }
    if patch.source_hash != fingerprint(unit.lines()) {
        return Err(FixError::SpanStale(
            "the unit changed since the patch was built".into(),
        ));
    }
    let n = unit.len();
    let in_range = |span: &Span| {
        span.start_line >= 1 && span.end_line <= n && span.start_line <= span.end_line
    };

    let mut deleted: Vec<Option<usize>> = vec![None; n + 1];
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut renames: BTreeMap<usize, Vec<(usize, usize, &str)>> = BTreeMap::new();

    for (i, edit) in patch.edits.iter().enumerate() {
        if !in_range(&edit.target) {
            return Err(FixError::SpanStale(format!(
                "edit {i} targets lines outside 1..={n}"
            )));
        }
        match edit.kind {
            EditKind::DeleteStmt => {
                let span = edit.target.start_line..=edit.target.end_line;
                let taken = deleted[span.clone()]
                    .iter()
                    .zip(span.clone())
                    .find_map(|(d, l)| d.map(|o| (o, l)));
                if let Some((other, line)) = taken {
                    return Err(FixError::OverlapConflict(format!(
                        "edits {other} and {i} both delete line {line}"
                    )));
                }
                deleted[span].fill(Some(i));
            }
            EditKind::InsertLine => {
                if edit.text.contains('\n') {
                    return Err(FixError::OverlapConflict(format!(
                        "edit {i} inserts text containing a newline"
                    )));
                }
                inserts
                    .entry(edit.target.start_line)
                    .or_default()
                    .push(format!("{}{}", edit.indent, edit.text));
            }
            EditKind::RenameToken => {
                let span = edit.target;
                let line = &unit.lines()[span.start_line - 1];
                if span.start_line != span.end_line
                    || span.start_col >= span.end_col
                    || line.get(span.start_col..span.end_col).is_none()
                {
                    return Err(FixError::SpanStale(format!(
                        "edit {i} renames an invalid token span"
                    )));
                }
                let on_line = renames.entry(span.start_line).or_default();
                if on_line
                    .iter()
                    .any(|&(s, e, _)| s < span.end_col && span.start_col < e)
                {
                    return Err(FixError::OverlapConflict(format!(
                        "edit {i} renames a token another edit already renames"
                    )));
                }
                on_line.push((span.start_col, span.end_col, &edit.text));
            }
        }
    }
    for (i, edit) in patch.edits.iter().enumerate() {
        let line = edit.target.start_line;
        let clash = match edit.kind {
            EditKind::DeleteStmt => false,
            EditKind::InsertLine => {
                deleted[line].is_some_and(|d| patch.edits[d].target.start_line != line)
            }
            EditKind::RenameToken => deleted[line].is_some(),
        };
        if clash {
            return Err(FixError::OverlapConflict(format!(
                "edit {i} targets line {line} inside a deleted statement"
            )));
        }
    }

    let mut lines = Vec::with_capacity(n + patch.edits.len());
    let mut cells = Vec::with_capacity(n + patch.edits.len());
    for line_no in 1..=n {
        let slot = unit.cell_slot(line_no).unwrap_or(0);
        for text in inserts.remove(&line_no).unwrap_or_default() {
            lines.push(text);
            cells.push(slot);
        }
        if let Some(d) = deleted.get(line_no).copied().flatten() {
            let edit = &patch.edits[d];
            if edit.target.start_line == line_no && !edit.text.is_empty() {
                lines.push(format!("{}{}", edit.indent, edit.text));
                cells.push(slot);
            }
            continue;
        }
        let mut text = unit.lines()[line_no - 1].clone();
        if let Some(mut on_line) = renames.remove(&line_no) {
            on_line.sort_by_key(|r| std::cmp::Reverse(r.0));
            for (start, end, new) in on_line {
                text.replace_range(start..end, new);
            }
        }
        lines.push(text);
        cells.push(slot);
    }
    Ok(unit.with_lines(lines, &cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::detect_all;
    use crate::flow::build_flow;
    use crate::syntax::parse;
    use crate::taxonomy::Taxonomy;

    fn analyze(unit: &SourceUnit) -> (ProgramModel, Vec<LeakageInstance>) {
        let model = parse(unit).unwrap();
        let flow = build_flow(&model);
        let found = detect_all(&model, &flow, &Taxonomy::default());
        (model, found)
    }

    fn fix_first(src: &str) -> (Patch, SourceUnit) {
        let unit = SourceUnit::from_script("t.py", src);
        let (model, found) = analyze(&unit);
        let patch = synthesize_fix(&found[0], &model, &unit).unwrap();
        let patched = apply_patch(&unit, &patch).unwrap();
        (patch, patched)
    }

    const OVERLAP: &str = "\
X_new, y_new =  SMOTE().fit_resample (X,y)
X_train, X_test, y_train, y_test = train_test_split(
X_new, y_new, test_size =0.2, random_state = 42)
";

    const NO_SPLIT: &str = "\
wordsVectorizer = CountVectorizer().fit(journalsFinal['text'])
wordsVector = wordsVectorizer.transform(journalsFinal['text'])
";

    #[test]
    fn overlap_fix_moves_split_above_sample() {
        let (patch, patched) = fix_first(OVERLAP);
        assert_eq!(
            patched.to_file_text(),
            "#TODO: Check the arguments provided to the call to split.\n\
             X_train, X_test, y_train, y_test = train_test_split(\n\
             X_new, y_new, test_size =0.2, random_state = 42)\n\
             X_new, y_new =  SMOTE().fit_resample (X,y)\n"
        );
        assert!(patch.preview.starts_with("--- t.py\n+++ t.py\n@@"));
        assert!(analyze(&patched).1.is_empty());
    }

    #[test]
    fn no_split_fix_inserts_split() {
        let (_, patched) = fix_first(NO_SPLIT);
        assert_eq!(
            patched.to_file_text(),
            format!("{SPLIT_TODO}\nsplit()\n{NO_SPLIT}")
        );
        assert!(analyze(&patched).1.is_empty());
    }

    #[test]
    fn multitest_renames_with_one_fewer_suffix() {
        let src = "X_train, X_test, y_train, y_test = train_test_split(X, y)\n\
                   a = m.score(X_test, y_test)\n\
                   b = m.score(X_test, y)\n\
                   c = m.score(X_test, y)\n\
                   d = m.score(X_test, y)\n\
                   e = m.score(X_test, y)\n";
        let unit = SourceUnit::from_script("t.py", src);
        let (model, found) = analyze(&unit);
        let inst = found.iter().find(|i| i.variables == ["X_test"]).unwrap();
        let patched = apply_patch(&unit, &synthesize_fix(inst, &model, &unit).unwrap()).unwrap();
        let text = patched.to_file_text();
        assert!(text.contains("a = m.score(X_test, y_test)\n"));
        for k in 1..=4 {
            assert!(text.contains(&format!("#TODO: Load new test data into X_test_{k}.\n")));
            assert!(text.contains(&format!("m.score(X_test_{k}, y)")));
        }
        assert!(!text.contains("X_test_5"));
        assert!(!analyze(&patched)
            .1
            .iter()
            .any(|i| i.variables == ["X_test"]));
    }

    #[test]
    fn split_after_transform_moves_split_to_destination_indent() {
        let src = "def run(df):\n    X = TfidfVectorizer().fit_transform(df)\n    a, b = train_test_split(X)\n    return a\n";
        let (_, patched) = fix_first(src);
        assert_eq!(
            patched.to_file_text(),
            format!("def run(df):\n    {SPLIT_TODO}\n    a, b = train_test_split(X)\n    X = TfidfVectorizer().fit_transform(df)\n    return a\n")
        );
        parse(&patched).unwrap();
    }

    #[test]
    fn emptied_block_gets_pass() {
        let src = "X_res, y_res = SMOTE().fit_resample(X, y)\nif ok:\n    parts = train_test_split(X_res, y_res)\n";
        let (_, patched) = fix_first(src);
        assert_eq!(
            patched.to_file_text(),
            format!("{SPLIT_TODO}\nparts = train_test_split(X_res, y_res)\nX_res, y_res = SMOTE().fit_resample(X, y)\nif ok:\n    pass\n")
        );
        parse(&patched).unwrap();
    }

    #[test]
    fn untouched_lines_are_identical() {
        let src = format!("import numpy as np\n\n# comment\n{OVERLAP}print('done')\n");
        let (_, patched) = fix_first(&src);
        let lines = patched.lines();
        assert_eq!(&lines[..3], ["import numpy as np", "", "# comment"]);
        assert_eq!(lines.last().unwrap(), "print('done')");
    }

    #[test]
    fn empty_patch_is_identity() {
        let unit = SourceUnit::from_script("t.py", "x = 1\r\ny = 2");
        let patch = Patch {
            instance: InstanceRef {
                kind: LeakageKind::Overlap,
                cause: Cause::SplitBeforeSample,
                source_stmt: 0,
            },
            edits: Vec::new(),
            preview: String::new(),
            source_hash: 0,
        };
        assert_eq!(
            apply_patch(&unit, &patch).unwrap().to_file_text(),
            "x = 1\r\ny = 2"
        );
    }

    #[test]
    fn stale_inputs_are_rejected() {
        let unit = SourceUnit::from_script("t.py", OVERLAP);
        let (model, found) = analyze(&unit);
        let patch = synthesize_fix(&found[0], &model, &unit).unwrap();
        let changed = SourceUnit::from_script("t.py", &format!("{OVERLAP}z = 1\n"));
        assert_eq!(
            synthesize_fix(&found[0], &model, &changed),
            Err(FixError::StaleModel)
        );
        assert!(matches!(
            apply_patch(&changed, &patch),
            Err(FixError::SpanStale(_))
        ));
    }

    #[test]
    fn conflicting_edits_are_rejected() {
        let unit = SourceUnit::from_script("t.py", OVERLAP);
        let (model, found) = analyze(&unit);
        let mut patch = synthesize_fix(&found[0], &model, &unit).unwrap();
        let delete = patch.edits.last().unwrap().clone();
        patch.edits.push(delete);
        assert!(matches!(
            apply_patch(&unit, &patch),
            Err(FixError::OverlapConflict(_))
        ));
    }

    #[test]
    fn unfixable_instance_is_reported() {
        let src = "X_res, y_res = SMOTE().fit_resample(X, y)\nparts = train_test_split(X_res, y_res); z = 1\n";
        let unit = SourceUnit::from_script("t.py", src);
        let (model, found) = analyze(&unit);
        assert!(!found[0].fixable);
        assert!(matches!(
            synthesize_fix(&found[0], &model, &unit),
            Err(FixError::NotFixable { .. })
        ));
    }

    #[test]
    fn notebook_edits_land_in_owning_cells() {
        let nb = r#"{"cells":[
            {"cell_type":"code","source":["import x\n","X_new, y_new = SMOTE().fit_resample(X, y)"],"metadata":{},"outputs":[],"execution_count":null},
            {"cell_type":"markdown","source":["notes"],"metadata":{}},
            {"cell_type":"code","source":["parts = train_test_split(X_new, y_new)\n","print(1)"],"metadata":{},"outputs":[],"execution_count":null}
        ],"metadata":{},"nbformat":4,"nbformat_minor":5}"#;
        let unit = SourceUnit::from_notebook("n.ipynb", nb).unwrap();
        let (model, found) = analyze(&unit);
        let patched =
            apply_patch(&unit, &synthesize_fix(&found[0], &model, &unit).unwrap()).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&patched.to_file_text()).unwrap();
        assert_eq!(
            doc["cells"][0]["source"],
            serde_json::json!([
                "import x\n",
                format!("{SPLIT_TODO}\n"),
                "parts = train_test_split(X_new, y_new)\n",
                "X_new, y_new = SMOTE().fit_resample(X, y)"
            ])
        );
        assert_eq!(doc["cells"][1]["source"], serde_json::json!(["notes"]));
        assert_eq!(doc["cells"][2]["source"], serde_json::json!(["print(1)"]));
        assert!(analyze(&patched).1.is_empty());
    }
}
