use std::path::PathBuf;

use leakscan_core::report::{as_expected, Expected};
use leakscan_core::{
    analyze, apply_patch, discover_sources, load_unit, parse, render_json, score_corpus,
    synthesize_fix, Cause, LeakageKind, Report, SourceUnit, Taxonomy,
};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus_units() -> Vec<SourceUnit> {
    discover_sources(&corpus_dir())
        .unwrap()
        .iter()
        .map(|p| load_unit(p).unwrap())
        .collect()
}

#[test]
fn corpus_has_the_required_mix() {
    let tax = Taxonomy::default();
    let units = corpus_units();
    assert!(units.len() >= 15);
    assert!(units.iter().any(|u| u.is_notebook()));
    let mut files_per_cause = std::collections::BTreeMap::new();
    let mut clean = 0;
    for unit in &units {
        let found = analyze(unit, &tax).unwrap().instances;
        if found.is_empty() {
            clean += 1;
        }
        let mut causes: Vec<Cause> = found.iter().map(|i| i.cause).collect();
        causes.dedup();
        for c in causes {
            *files_per_cause.entry(c).or_insert(0) += 1;
        }
    }
    assert!(clean >= 3);
    for cause in Cause::ALL {
        assert!(
            files_per_cause.get(&cause).copied().unwrap_or(0) >= 3,
            "{cause}"
        );
    }
}

#[test]
fn corpus_scores_exactly() {
    let score = score_corpus(&corpus_dir(), &Taxonomy::default()).unwrap();
    assert!(score.is_exact(), "{}", score.render_text());
    for kind in LeakageKind::ALL {
        let s = score.kind(kind);
        assert_eq!((s.false_positives, s.false_negatives), (0, 0), "{kind}");
        assert!(s.true_positives >= 3, "{kind}");
    }
}

/// Identity of an instance that survives statement renumbering.
fn identity(
    unit: &SourceUnit,
    inst: &leakscan_core::LeakageInstance,
    model: &leakscan_core::ProgramModel,
) -> (LeakageKind, Cause, Vec<String>, String) {
    let text = model
        .statement(inst.source_stmt)
        .span
        .text(unit)
        .unwrap()
        .into_owned();
    (inst.kind, inst.cause, inst.variables.clone(), text)
}

#[test]
fn every_fixable_instance_is_removed_by_its_patch() {
    let tax = Taxonomy::default();
    let mut fixed = 0;
    for unit in corpus_units() {
        let before = analyze(&unit, &tax).unwrap();
        for inst in before.instances.iter().filter(|i| i.fixable) {
            let patch = synthesize_fix(inst, &before.model, &unit).unwrap();
            let patched = apply_patch(&unit, &patch).unwrap();
            parse(&patched).unwrap_or_else(|e| panic!("{}: {e}", unit.id));
            let after = analyze(&patched, &tax).unwrap();

            let target = identity(&unit, inst, &before.model);
            let mut others: Vec<_> = before
                .instances
                .iter()
                .filter(|i| !std::ptr::eq(*i, inst))
                .map(|i| (i.kind, i.cause, i.variables.clone()))
                .collect();
            let mut remaining: Vec<_> = after
                .instances
                .iter()
                .map(|i| (i.kind, i.cause, i.variables.clone()))
                .collect();
            others.sort();
            remaining.sort();
            assert_eq!(remaining, others, "{}: {:?}", unit.id, target);
            assert!(
                !after
                    .instances
                    .iter()
                    .any(|i| identity(&patched, i, &after.model) == target),
                "{}: {:?}",
                unit.id,
                target
            );
            fixed += 1;
        }
    }
    assert!(fixed >= 15, "{fixed}");
}

#[test]
fn fixing_a_fixed_unit_changes_nothing() {
    let tax = Taxonomy::default();
    for unit in corpus_units() {
        let once = leakscan_core::fix_unit(&unit, &tax).unwrap();
        assert!(once.remaining.iter().all(|i| !i.fixable), "{}", unit.id);
        let twice = leakscan_core::fix_unit(&once.unit, &tax).unwrap();
        assert!(twice.applied.is_empty(), "{}", unit.id);
        assert_eq!(twice.unit.to_file_text(), once.unit.to_file_text());
    }
}

#[test]
fn json_reports_are_deterministic() {
    let tax = Taxonomy::default();
    let render = || -> String {
        corpus_units()
            .iter()
            .map(|u| render_json(&Report::new(u, &analyze(u, &tax).unwrap(), true)))
            .collect()
    };
    assert_eq!(render(), render());
}

#[test]
fn sidecars_also_agree_on_sink_lines() {
    let tax = Taxonomy::default();
    for path in discover_sources(&corpus_dir()).unwrap() {
        let unit = load_unit(&path).unwrap();
        let mut found = as_expected(&analyze(&unit, &tax).unwrap());
        let sidecar = std::fs::read_to_string(format!("{}.expected", path.display())).unwrap();
        let mut expected: Vec<Expected> = leakscan_core::report::parse_sidecar(&sidecar).unwrap();
        found.sort();
        expected.sort();
        assert_eq!(found, expected, "{}", path.display());
    }
}
