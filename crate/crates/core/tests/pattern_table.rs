mod common;

use common::*;
use spdc_cascade::cascade::{emit_pattern_table, DETECTOR_MODES, OUTER_MODES};
use spdc_cascade::detection::ClickPattern;

#[test]
fn fixture_is_self_consistent() {
    let rows = load_fixture();
    assert_eq!(rows.len(), 41);
    for r in &rows {
        assert_eq!(r.output.modes(), 8);
        assert_eq!(r.source1.concat(&r.source2).total(), r.output.total());
        assert_eq!(r.pattern.0, r.output.select(&[2, 3, 4, 5]).occupations());
        assert_eq!(r.heralded, r.output.select(&OUTER_MODES));
    }
    for (input, terms) in group_fixture(&rows) {
        let norm: f64 = terms.values().map(|c| c * c).sum();
        assert!((norm - 1.0).abs() < 1e-12, "{input:?} norm {norm}");
    }
}

#[test]
fn oracle_matches_fixture_up_to_gauge() {
    let rows = load_fixture();
    for ((s1, s2), terms) in group_fixture(&rows) {
        let oracle = oracle_bsm(s1.concat(&s2).occupations());
        assert!(equal_up_to_gauge(&terms, &oracle, 1e-12), "{s1} {s2}: {terms:?} vs {oracle:?}");
    }
}

#[test]
fn emitted_table_matches_oracle_exactly() {
    let rows = emit_pattern_table(2).unwrap();
    for ((s1, s2), terms) in group_emitted(&rows) {
        let oracle = oracle_bsm(s1.concat(&s2).occupations());
        assert_eq!(terms.len(), oracle.len(), "{s1} {s2}");
        for (k, c) in &terms {
            assert!((c - oracle[k]).abs() < 1e-12, "{s1} {s2} {k}");
        }
    }
}

#[test]
fn emitted_table_matches_fixture() {
    let rows = emit_pattern_table(2).unwrap();
    let fixture = load_fixture();
    assert_eq!(rows.len(), fixture.len());
    let emitted = group_emitted(&rows);
    let expected = group_fixture(&fixture);
    assert_eq!(emitted.len(), 15);
    assert_eq!(emitted.keys().collect::<Vec<_>>(), expected.keys().collect::<Vec<_>>());
    for (input, terms) in &expected {
        assert!(equal_up_to_gauge(terms, &emitted[input], 1e-12), "{input:?}");
    }
    for f in &fixture {
        let r = rows
            .iter()
            .find(|r| r.source1 == f.source1 && r.source2 == f.source2 && r.output == f.output)
            .unwrap();
        assert_eq!(r.pattern, fixture_pattern_to_bank(&f.pattern));
        assert_eq!(r.pattern, ClickPattern(r.output.select(&DETECTOR_MODES).occupations().to_vec()));
        assert_eq!(r.heralded, f.heralded);
    }
}
