//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `TEMPOCURATE_BLESS=1` to rewrite the golden files from the oracle.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempocurate_core::ingest::check_consistency;
use tempocurate_core::period::coalesce;
use tempocurate_core::provenance::update_correlation;
use tempocurate_core::{forever, Curation, Database, Date, Dimension, Period, Predicate, ProvenanceSource, Workspace};
use tempocurate_testkit::{check, fixtures, golden, probe_dates, random_session, Oracle, SessionLimits, Step};

const SEQUENCES: u64 = 1000;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "store snapshots match day-by-day replay over 1000 random sequences",
            budget: Some(Duration::from_secs(60)),
            run: store_vs_oracle,
        },
        Criterion {
            name: "SQLite rewriter matches the reference store on the same sequences",
            budget: Some(Duration::from_secs(120)),
            run: rewriter_vs_store,
        },
        Criterion {
            name: "provenance queries 1-7 match the brute-force oracle on F1 and F3",
            budget: Some(Duration::from_secs(5)),
            run: queries_vs_oracle,
        },
        Criterion {
            name: "temporal invariants hold after every step of every sequence",
            budget: None,
            run: invariants,
        },
        Criterion {
            name: "consistency checker: F2 yields exactly (2020-04-20, Sex, 28, 29); F1/U2 yields none",
            budget: None,
            run: consistency,
        },
        Criterion {
            name: "coalesce laws over 10,000 random version lists",
            budget: None,
            run: coalesce_laws,
        },
        Criterion {
            name: "end-to-end CLI F1 script matches oracle-generated golden JSON",
            budget: None,
            run: cli_script,
        },
    ];

    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS [{}] {} ({detail}; {elapsed:.2?})", i + 1, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {}: {why}", i + 1, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn sessions() -> impl Iterator<Item = (u64, Vec<Step>)> {
    (0..SEQUENCES).map(|seed| (seed, random_session(seed, SessionLimits::default())))
}

fn store_vs_oracle() -> Outcome {
    let (mut steps_run, mut snapshots) = (0usize, 0usize);
    for (seed, steps) in sessions() {
        let probes = probe_dates(&steps);
        let mut oracle = Oracle::new();
        let mut ws = Workspace::new();
        for (i, step) in steps.iter().enumerate() {
            let want = step.apply_to_oracle(&mut oracle);
            let got = step.apply(&mut ws);
            if want.is_ok() != got.is_ok() {
                return Err(format!("seed {seed} step {i}: oracle {want:?}, store {got:?}"));
            }
            for &t in &probes {
                let got: Vec<_> = ws.snapshot(t).unwrap().into_iter().map(|(k, v)| (k, (v.count, v.file_id))).collect();
                let want: Vec<_> = oracle.snapshot(t).into_iter().collect();
                if got != want {
                    return Err(format!("seed {seed} step {i}: snapshot at {t} differs"));
                }
                snapshots += 1;
            }
            steps_run += 1;
        }
    }
    Ok(format!("{steps_run} steps, {snapshots} snapshots compared"))
}

fn sorted_rows(mut rows: Vec<tempocurate_core::VersionedCount>) -> Vec<tempocurate_core::VersionedCount> {
    rows.sort_by(|a, b| (&a.cell, a.period.start()).cmp(&(&b.cell, b.period.start())));
    rows
}

fn rewriter_vs_store() -> Outcome {
    let mut compared = 0usize;
    for (seed, steps) in sessions() {
        let probes = probe_dates(&steps);
        let mut ws = Workspace::new();
        let mut db = Database::open_in_memory().map_err(|e| e.to_string())?;
        for (i, step) in steps.iter().enumerate() {
            let a = step.apply(&mut ws);
            let b = step.apply(&mut db);
            if a.is_ok() != b.is_ok() {
                return Err(format!("seed {seed} step {i}: store {a:?}, sqlite {b:?}"));
            }
            if sorted_rows(db.rows().map_err(|e| e.to_string())?) != sorted_rows(ws.table().rows()) {
                return Err(format!("seed {seed} step {i}: row multisets differ"));
            }
            compared += 1;
        }
        for &t in &probes {
            if db.snapshot(t).map_err(|e| e.to_string())? != ws.snapshot(t).unwrap() {
                return Err(format!("seed {seed}: snapshot query at {t} differs"));
            }
        }
        let mut predicates = vec![Predicate::True, Predicate::False];
        predicates.extend(Dimension::ALL.into_iter().map(Predicate::Dimension));
        for cell in ws.table().cells().take(3) {
            predicates.push(Predicate::cell(cell));
            predicates.push(Predicate::Or(vec![Predicate::Week(cell.week), Predicate::Subcategory(cell.subcategory.clone())]));
        }
        for p in &predicates {
            if db.scan(p).map_err(|e| e.to_string())? != ws.scan(p).unwrap() {
                return Err(format!("seed {seed}: nonsequenced query {p:?} differs"));
            }
        }
        if db.proposals().map_err(|e| e.to_string())? != ws.proposals().unwrap() {
            return Err(format!("seed {seed}: decision logs differ"));
        }
    }
    Ok(format!("{compared} row-multiset comparisons"))
}

fn queries_vs_oracle() -> Outcome {
    let mut notes = Vec::new();
    for (name, steps) in [("F1", fixtures::f1()), ("F3", fixtures::f3())] {
        let probes = probe_dates(&steps);
        let mut oracle = Oracle::new();
        let mut ws = Workspace::new();
        let mut db = Database::open_in_memory().map_err(|e| e.to_string())?;
        for step in &steps {
            step.apply_to_oracle(&mut oracle).map_err(|e| format!("{name}: oracle {e}"))?;
            step.apply(&mut ws).map_err(|e| format!("{name}: store {e}"))?;
            step.apply(&mut db).map_err(|e| format!("{name}: sqlite {e}"))?;
        }
        check::queries(&ws, &oracle, &probes, 1e-9).map_err(|e| format!("{name} store: {e}"))?;
        check::queries(&db, &oracle, &probes, 1e-9).map_err(|e| format!("{name} sqlite: {e}"))?;
        let r = update_correlation(&db, (Dimension::Sex, "Female"), (Dimension::Total, "All")).map_err(|e| e.to_string())?;
        notes.push(format!("{name} r(Female,Total) = {:.6}", r.correlation));
    }
    Ok(notes.join(", "))
}

fn invariants() -> Outcome {
    let mut checked = 0usize;
    for (seed, steps) in sessions().take(SEQUENCES as usize) {
        let mut ws = Workspace::new();
        let mut db = Database::open_in_memory().map_err(|e| e.to_string())?;
        for (i, step) in steps.iter().enumerate() {
            let _ = step.apply(&mut ws);
            let _ = step.apply(&mut db);
            let bad = ws.table().invariant_violations();
            if !bad.is_empty() {
                return Err(format!("seed {seed} step {i} (store): {bad:?}"));
            }
            let rows = db.rows().map_err(|e| e.to_string())?;
            let bad = independent_invariant_check(&rows);
            if !bad.is_empty() {
                return Err(format!("seed {seed} step {i} (sqlite): {bad:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} states, 0 violations"))
}

/// Per cell: non-empty periods, sorted, each meeting the next, the last
/// ending at the sentinel.
fn independent_invariant_check(rows: &[tempocurate_core::VersionedCount]) -> Vec<String> {
    let mut out = Vec::new();
    let rows = sorted_rows(rows.to_vec());
    for (i, r) in rows.iter().enumerate() {
        if r.period.start() >= r.period.end() {
            out.push(format!("{}: empty period", r.cell.address()));
        }
        let last_of_cell = rows.get(i + 1).is_none_or(|n| n.cell != r.cell);
        if last_of_cell {
            if r.period.end() != forever() {
                out.push(format!("{}: final period ends at {}", r.cell.address(), r.period.end()));
            }
        } else if rows[i + 1].period.start() != r.period.end() {
            out.push(format!("{}: gap or overlap at {}", r.cell.address(), r.period.end()));
        }
    }
    out
}

fn consistency() -> Outcome {
    let f2 = check_consistency(&fixtures::f2_u2());
    let tuples: Vec<_> = f2
        .iter()
        .map(|v| (v.week.to_string(), v.dimension, v.reported_total, v.computed_sum))
        .collect();
    if tuples != vec![("2020-04-20".to_string(), Dimension::Sex, 28, 29)] {
        return Err(format!("F2 violations {tuples:?}"));
    }
    let f1 = check_consistency(&fixtures::f1_u2());
    if !f1.is_empty() {
        return Err(format!("F1/U2 violations {f1:?}"));
    }
    // The ingest report carries the same result.
    let mut ws = Workspace::new();
    ws.ingest(fixtures::f1_u1()).map_err(|e| e.to_string())?;
    let report = ws.ingest(fixtures::f2_u2()).map_err(|e| e.to_string())?;
    if report.violations != f2 {
        return Err(format!("ingest report violations {:?}", report.violations));
    }
    Ok("1 violation on F2, 0 on F1/U2".into())
}

fn coalesce_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0A1);
    let base: Date = "2020-01-01".parse().unwrap();
    for case in 0..10_000 {
        let n = rng.random_range(0..8);
        let mut list: Vec<(u8, Period)> = Vec::new();
        let mut cursor = rng.random_range(0..5i64);
        for k in 0..n {
            cursor += rng.random_range(0..3i64);
            let len = rng.random_range(1..6i64);
            let start = base.add_days(cursor);
            let end = if k == n - 1 && rng.random_bool(0.3) { forever() } else { base.add_days(cursor + len) };
            list.push((rng.random_range(0..3), Period::new(start, end).unwrap()));
            cursor += len;
        }
        let mut shuffled = list.clone();
        shuffled.shuffle(&mut rng);
        let once = coalesce(list.clone()).map_err(|e| format!("case {case}: {e}"))?;
        if coalesce(once.clone()).unwrap() != once {
            return Err(format!("case {case}: not idempotent on {list:?}"));
        }
        if coalesce(shuffled).unwrap() != once {
            return Err(format!("case {case}: order-sensitive on {list:?}"));
        }
        let value_on = |xs: &[(u8, Period)], d: Date| xs.iter().find(|(_, p)| p.start() <= d && d < p.end()).map(|(v, _)| *v);
        for day in -1..cursor + 3 {
            let d = base.add_days(day);
            if value_on(&list, d) != value_on(&once, d) {
                return Err(format!("case {case}: valuation changed on {d} for {list:?}"));
            }
        }
        for w in once.windows(2) {
            if w[0].1.end() == w[1].1.start() && w[0].0 == w[1].0 {
                return Err(format!("case {case}: unmerged neighbours in {once:?}"));
            }
        }
    }
    Ok("idempotent, order-insensitive, valuation-preserving, maximal".into())
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/f1")
}

fn cli_script() -> Outcome {
    let samples = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples");
    let samples = samples.canonicalize().map_err(|e| format!("samples: {e}"))?;
    let script = golden::f1_script(samples.to_str().unwrap());

    if std::env::var_os("TEMPOCURATE_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        for s in &script {
            if let Some(v) = &s.expected {
                std::fs::write(golden_dir().join(format!("{}.json", s.name)), format!("{v:#}\n")).map_err(|e| e.to_string())?;
            }
        }
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = tmp.path().join("f1.db");
    let bin = env!("CARGO_BIN_EXE_tempocurate");
    let mut compared = 0;
    for s in &script {
        let out = Command::new(bin)
            .args(&s.args)
            .arg("--db")
            .arg(&db)
            .arg("--json")
            .env_remove("TEMPOCURATE_URL")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} exited {:?}: {}", s.name, out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        let Some(expected) = &s.expected else { continue };
        let got: Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("{}: stdout is not JSON: {e}", s.name))?;
        let path = golden_dir().join(format!("{}.json", s.name));
        let file: Value = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        // Generator check: the committed file is what the oracle produces now.
        if &file != expected {
            return Err(format!("{}: golden file is stale relative to the oracle", s.name));
        }
        if &got != expected {
            return Err(format!("{}: output\n{got:#}\ndiffers from golden\n{expected:#}", s.name));
        }
        compared += 1;
    }

    // Table mode reports the upload summary line.
    let db2 = tmp.path().join("plain.db");
    let out = Command::new(bin)
        .args(["upload", "--file"])
        .arg(samples.join("f1_u1.csv"))
        .args(["--file-id", "U1", "--release", "2020-04-29", "--db"])
        .arg(&db2)
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() || !text.starts_with("5 new cells, 0 proposals") {
        return Err(format!("table-mode upload printed {text:?}"));
    }
    Ok(format!("{} steps exited 0, {compared} golden files matched", script.len()))
}
