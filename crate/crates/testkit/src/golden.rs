//! Expected `--json` outputs for the scripted F1 curation session, derived
//! step by step from the oracle rather than from the implementation.

use serde_json::{json, Value};
use tempocurate_core::{CellKey, Dimension, Status};

use crate::fixtures::{date, f1_u1, f1_u2};
use crate::{Oracle, OracleProposal, Step};

/// One CLI invocation: name of its golden file, arguments after the global
/// flags, and the expected JSON body.
#[derive(Debug, Clone)]
pub struct ScriptStep {
    pub name: &'static str,
    pub args: Vec<String>,
    pub expected: Option<Value>,
}

fn cell_json(c: &CellKey) -> Value {
    json!({ "week": c.week, "dimension": c.dimension, "subcategory": c.subcategory })
}

fn proposal_json(p: &OracleProposal) -> Value {
    json!({
        "id": p.id,
        "cell": cell_json(&p.cell),
        "old_value": p.old_value,
        "new_value": p.new_value,
        "old_file_id": p.old_file_id,
        "new_file_id": p.new_file_id,
        "status": p.status.as_str(),
        "decided_at": p.decided_at.map(|t| t.to_string()),
    })
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn upload_json(oracle: &mut Oracle, upload: &tempocurate_core::Upload) -> Value {
    let outcome = oracle.ingest(upload).expect("fixture ingests");
    let proposals: Vec<Value> = outcome
        .proposal_ids
        .iter()
        .map(|id| proposal_json(&oracle.proposals()[*id as usize - 1]))
        .collect();
    json!({
        "file_id": upload.file_id,
        "release_date": upload.release_date,
        "new_cells": outcome.new_cells.iter().map(|(c, n)| json!({ "cell": cell_json(c), "count": n })).collect::<Vec<_>>(),
        "proposals": proposals,
        "violations": [],
    })
}

fn decided_json(oracle: &Oracle, ids: &[i64]) -> Vec<Value> {
    ids.iter().map(|id| proposal_json(&oracle.proposals()[*id as usize - 1])).collect()
}

fn history_json(oracle: &Oracle, c: &CellKey) -> Value {
    let versions: Vec<Value> = oracle
        .value_runs(c)
        .into_iter()
        .map(|(count, file, from, to)| {
            json!({
                "week": c.week, "dimension": c.dimension, "subcategory": c.subcategory,
                "count": count, "file_id": file, "valid_from": from, "valid_to": to,
            })
        })
        .collect();
    json!({ "cell": cell_json(c), "versions": versions })
}

/// The F1 script. `samples` is the directory holding the fixture CSVs.
pub fn f1_script(samples: &str) -> Vec<ScriptStep> {
    let mut oracle = Oracle::new();
    let mut out = Vec::new();
    let mut step = |name, a: Vec<String>, expected| out.push(ScriptStep { name, args: a, expected });

    step("init", args(&["init"]), None);

    let u1 = f1_u1();
    let u1_json = upload_json(&mut oracle, &u1);
    step(
        "upload_u1",
        args(&["upload", "--file", &format!("{samples}/f1_u1.csv"), "--file-id", "U1", "--release", "2020-04-29"]),
        Some(u1_json),
    );
    let u2 = f1_u2();
    let u2_json = upload_json(&mut oracle, &u2);
    step(
        "upload_u2",
        args(&["upload", "--file", &format!("{samples}/f1_u2.csv"), "--file-id", "U2", "--release", "2020-05-06"]),
        Some(u2_json),
    );

    let pending = oracle.pending_ids();
    let (accept, reject) = (pending[..3].to_vec(), pending[3..].to_vec());
    let accept_step = Step::Accept {
        ids: accept.clone(),
        effective: Some(date("2020-05-06")),
        now: crate::fixtures::at("2020-05-07T10:00:00Z"),
    };
    accept_step.apply_to_oracle(&mut oracle).expect("accept");
    step(
        "accept",
        args(&["accept", "--ids", "1,2,3", "--effective", "2020-05-06", "--now", "2020-05-07T10:00:00Z"]),
        Some(json!({ "accepted": decided_json(&oracle, &accept) })),
    );
    Step::Reject {
        ids: reject.clone(),
        now: crate::fixtures::at("2020-05-07T10:05:00Z"),
    }
    .apply_to_oracle(&mut oracle)
    .expect("reject");
    step(
        "reject",
        args(&["reject", "--ids", "4", "--now", "2020-05-07T10:05:00Z"]),
        Some(json!({ "rejected": decided_json(&oracle, &reject) })),
    );

    for (name, c) in [
        ("history_female", "2020-04-20/Sex/Female"),
        ("history_male", "2020-04-20/Sex/Male"),
        ("history_total", "2020-04-20/Total/All"),
        ("history_lothian", "2020-04-20/HealthBoard/Lothian"),
        ("history_edinburgh", "2020-04-20/LocalAuthority/Edinburgh"),
    ] {
        let key = CellKey::parse_address(c).unwrap();
        step(name, args(&["history", "--cell", c]), Some(history_json(&oracle, &key)));
    }

    let mut by_week = std::collections::BTreeMap::<_, Vec<&OracleProposal>>::new();
    for p in oracle.proposals().iter().filter(|p| p.status == Status::Accepted) {
        by_week.entry(p.cell.week).or_default().push(p);
    }
    let groups: Vec<Value> = by_week
        .into_iter()
        .map(|(week, mut ps)| {
            ps.sort_by(|a, b| (&a.cell, a.id).cmp(&(&b.cell, b.id)));
            json!({ "week": week, "proposals": ps.into_iter().map(proposal_json).collect::<Vec<_>>() })
        })
        .collect();
    step(
        "accepted_by_week",
        args(&["pending", "--status", "accepted", "--by-week"]),
        Some(json!({ "status": "accepted", "groups": groups })),
    );
    step(
        "pending_empty",
        args(&["pending"]),
        Some(json!({ "status": "pending", "updates": [] })),
    );

    for asof in ["2020-05-01", "2020-05-06"] {
        let cells: Vec<Value> = oracle
            .snapshot(date(asof))
            .into_iter()
            .map(|(c, (count, file))| {
                json!({ "week": c.week, "dimension": c.dimension, "subcategory": c.subcategory, "count": count, "file_id": file })
            })
            .collect();
        let name = if asof == "2020-05-01" { "snapshot_before" } else { "snapshot_after" };
        step(name, args(&["snapshot", "--asof", asof]), Some(json!({ "asof": asof, "cells": cells })));
    }

    for (suffix, c) in [("female", "2020-04-20/Sex/Female"), ("edinburgh", "2020-04-20/LocalAuthority/Edinburgh")] {
        let key = CellKey::parse_address(c).unwrap();
        let (count, file, from) = oracle.first_value(&key).unwrap();
        step(
            if suffix == "female" { "first_female" } else { "first_edinburgh" },
            args(&["query", "first", "--cell", c]),
            Some(json!({ "cell": cell_json(&key), "first": { "count": count, "file_id": file, "valid_from": from } })),
        );
        let (count, file) = oracle.value_at(&key, date("2020-05-06")).unwrap();
        step(
            if suffix == "female" { "current_female" } else { "current_edinburgh" },
            args(&["query", "current", "--cell", c, "--asof", "2020-05-06"]),
            Some(json!({ "cell": cell_json(&key), "asof": "2020-05-06", "value": { "count": count, "file_id": file } })),
        );
        let (min, max, n) = oracle.value_range(&key).unwrap();
        step(
            if suffix == "female" { "range_female" } else { "range_edinburgh" },
            args(&["query", "range", "--cell", c]),
            Some(json!({ "cell": cell_json(&key), "range": { "min": min, "max": max, "n_versions": n } })),
        );
    }

    let rejected: Vec<Value> = oracle.rejected(|_| true).iter().map(proposal_json).collect();
    step("rejected", args(&["query", "rejected"]), Some(json!({ "rejected": rejected })));

    let (from, to) = (date("2020-04-01"), date("2020-10-01"));
    let window = json!({ "from": from, "to": to });
    let subs: Vec<String> = vec!["Female".into(), "Male".into()];
    step(
        "counts_sex",
        args(&["query", "counts", "--dimension", "Sex", "--subcategories", "Female,Male", "--from", "2020-04-01", "--to", "2020-10-01"]),
        Some(json!({ "dimension": "Sex", "window": window, "counts": oracle.update_counts(Dimension::Sex, &subs, from, to) })),
    );
    let best = oracle.most_updated(Dimension::HealthBoard, from, to);
    step(
        "most_updated_healthboard",
        args(&["query", "most-updated", "--dimension", "HealthBoard", "--from", "2020-04-01", "--to", "2020-10-01"]),
        Some(json!({
            "dimension": "HealthBoard",
            "window": window,
            "subcategory": best.as_ref().map(|b| b.0.clone()),
            "count": best.map_or(0, |b| b.1),
        })),
    );
    let r = oracle
        .correlation((Dimension::Sex, "Female"), (Dimension::Total, "All"))
        .expect("defined on F1");
    step(
        "correlation_female_total",
        args(&["query", "correlation", "--a", "Sex/Female", "--b", "Total/All"]),
        Some(json!({
            "a": { "dimension": "Sex", "subcategory": "Female", "updates": oracle.per_upload(Dimension::Sex, "Female") },
            "b": { "dimension": "Total", "subcategory": "All", "updates": oracle.per_upload(Dimension::Total, "All") },
            "uploads": oracle.uploads().iter().map(|u| u.file_id.clone()).collect::<Vec<_>>(),
            "correlation": r,
        })),
    );
    out
}
