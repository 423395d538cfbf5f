//! Random curation sessions replayed against the in-memory workspace, the
//! SQLite database and the day-by-day oracle.

use std::collections::BTreeMap;

use proptest::prelude::*;
use tempocurate_core::{CellKey, Curation, Database, Date, ProvenanceSource, TemporalTable, Workspace};
use tempocurate_testkit::{check, fixtures, probe_dates, random_session, Oracle, SessionLimits, Step};

fn replay(steps: &[Step]) -> Result<(), String> {
    let probes = probe_dates(steps);
    let mut oracle = Oracle::new();
    let mut ws = Workspace::new();
    let mut db = Database::open_in_memory().map_err(|e| e.to_string())?;
    for (i, step) in steps.iter().enumerate() {
        let want = step.apply_to_oracle(&mut oracle);
        let got_ws = step.apply(&mut ws);
        let got_db = step.apply(&mut db);
        if want.is_ok() != got_ws.is_ok() || want.is_ok() != got_db.is_ok() {
            return Err(format!("step {i} {step:?}: oracle {want:?}, workspace {got_ws:?}, database {got_db:?}"));
        }
        let bad = ws.table().invariant_violations();
        if !bad.is_empty() {
            return Err(format!("step {i}: workspace invariants: {bad:?}"));
        }
        let db_table = TemporalTable::from_rows(db.rows().map_err(|e| e.to_string())?).map_err(|e| format!("step {i}: database rows: {e}"))?;
        let bad = db_table.invariant_violations();
        if !bad.is_empty() {
            return Err(format!("step {i}: database invariants: {bad:?}"));
        }
        if db_table.rows() != ws.table().rows() {
            return Err(format!("step {i}: database rows differ from workspace"));
        }
        check::state(&ws, &oracle, &probes).map_err(|e| format!("step {i}: {e}"))?;
    }
    check::queries(&ws, &oracle, &probes, 1e-9)?;
    check::queries(&db, &oracle, &probes, 1e-9)?;
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sessions_match_oracle(seed in any::<u64>()) {
        let steps = random_session(seed, SessionLimits { max_cells: 20, max_uploads: 6 });
        prop_assert_eq!(replay(&steps), Ok(()));
    }

    /// Accepting an update never changes what any cell held before the
    /// effective date.
    #[test]
    fn accept_preserves_past(seed in any::<u64>()) {
        let steps = random_session(seed, SessionLimits { max_cells: 15, max_uploads: 5 });
        let mut ws = Workspace::new();
        for step in &steps {
            if let Step::Accept { ids, effective, now } = step {
                let before = ws.clone();
                let Ok(decided) = ws.accept(ids, *effective, *now) else { continue };
                let uploads = before.uploads().unwrap();
                // Earliest effective date per touched cell within this batch.
                let mut earliest: BTreeMap<CellKey, Date> = BTreeMap::new();
                for p in &decided {
                    let from = effective.unwrap_or_else(|| {
                        uploads.iter().find(|u| u.file_id == p.new_file_id).unwrap().release_date
                    });
                    let e = earliest.entry(p.cell.clone()).or_insert(from);
                    *e = (*e).min(from);
                }
                for d in probe_dates(&steps) {
                    let (b, a) = (before.snapshot(d).unwrap(), ws.snapshot(d).unwrap());
                    for (cell, value) in &b {
                        let untouched = earliest.get(cell).is_none_or(|&from| d < from);
                        if untouched {
                            prop_assert_eq!(Some(value), a.get(cell));
                        }
                    }
                    prop_assert_eq!(b.len(), a.len());
                }
                // The last decided proposal for a cell wins from its date on.
                let mut last: BTreeMap<CellKey, (Date, i64)> = BTreeMap::new();
                for p in &decided {
                    let from = effective.unwrap_or_else(|| {
                        uploads.iter().find(|u| u.file_id == p.new_file_id).unwrap().release_date
                    });
                    last.insert(p.cell.clone(), (from, p.new_value));
                }
                for (cell, (from, value)) in last {
                    let later = decided.iter().filter(|q| q.cell == cell).count() == 1;
                    for d in [from, from.add_days(1), from.add_days(40)] {
                        if let (true, Some(after)) = (later, ws.snapshot(d).unwrap().get(&cell)) {
                            prop_assert_eq!(after.count, value);
                        }
                    }
                }
            } else {
                let _ = step.apply(&mut ws);
            }
        }
    }
}

#[test]
fn fixtures_match_oracle() {
    assert_eq!(replay(&fixtures::f1()), Ok(()));
    assert_eq!(replay(&fixtures::f3()), Ok(()));
}

#[test]
fn far_future_probe_uses_tail() {
    let mut oracle = Oracle::new();
    for step in fixtures::f1() {
        step.apply_to_oracle(&mut oracle).unwrap();
    }
    let far: Date = "2525-01-01".parse().unwrap();
    assert_eq!(oracle.snapshot(far), oracle.snapshot("2021-06-01".parse().unwrap()));
}
