//! Comparisons between an implementation and the oracle. Each returns the
//! first discrepancy found as a human-readable message.

use tempocurate_core::period::coalesce;
use tempocurate_core::provenance::{
    current_value, first_value, most_updated, rejected_log, update_correlation, update_counts_all, value_range,
};
use tempocurate_core::{CategoryScheme, Date, Dimension, Predicate, ProvenanceSource, Window};

use crate::Oracle;

fn mismatch<T: std::fmt::Debug, U: std::fmt::Debug>(what: impl std::fmt::Display, got: T, want: U) -> String {
    format!("{what}: implementation {got:?}, oracle {want:?}")
}

/// Snapshots at every probe date, per-cell histories and the decision log.
pub fn state<S: ProvenanceSource + ?Sized>(src: &S, oracle: &Oracle, probes: &[Date]) -> Result<(), String> {
    for &d in probes {
        let got: Vec<_> = src
            .snapshot(d)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|(k, v)| (k, (v.count, v.file_id)))
            .collect();
        let want: Vec<_> = oracle.snapshot(d).into_iter().collect();
        if got != want {
            return Err(mismatch(format!("snapshot at {d}"), got, want));
        }
    }
    let rows = src.scan(&Predicate::True).map_err(|e| e.to_string())?;
    let mut cells: Vec<_> = rows.iter().map(|r| r.cell.clone()).collect();
    cells.dedup();
    if cells != oracle.cells() {
        return Err(mismatch("cell set", cells, oracle.cells()));
    }
    for cell in &cells {
        let history: Vec<_> = rows
            .iter()
            .filter(|r| &r.cell == cell)
            .map(|r| ((r.count, r.file_id.clone()), r.period))
            .collect();
        let got: Vec<_> = coalesce(history)
            .map_err(|e| format!("{}: {e}", cell.address()))?
            .into_iter()
            .map(|((c, f), p)| (c, f, p.start(), p.end()))
            .collect();
        let want = oracle.value_runs(cell);
        if got != want {
            return Err(mismatch(format!("history of {}", cell.address()), got, want));
        }
    }
    let got: Vec<_> = src
        .proposals()
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| (p.id, p.cell, p.old_value, p.new_value, p.old_file_id, p.new_file_id, p.status, p.decided_at))
        .collect();
    let want: Vec<_> = oracle
        .proposals()
        .iter()
        .cloned()
        .map(|p| (p.id, p.cell, p.old_value, p.new_value, p.old_file_id, p.new_file_id, p.status, p.decided_at))
        .collect();
    if got != want {
        return Err(mismatch("decision log", got, want));
    }
    Ok(())
}

/// The provenance query family evaluated over every cell, dimension and
/// probe window.
pub fn queries<S: ProvenanceSource + ?Sized>(src: &S, oracle: &Oracle, probes: &[Date], tolerance: f64) -> Result<(), String> {
    let cells = oracle.cells();
    for cell in &cells {
        let got = first_value(src, cell).map(|f| (f.count, f.file_id, f.valid_from)).ok();
        let want = oracle.first_value(cell);
        if got != want {
            return Err(mismatch(format!("first value of {}", cell.address()), got, want));
        }
        let got = value_range(src, cell).map(|r| (r.min, r.max, r.n_versions)).ok();
        let want = oracle.value_range(cell);
        if got != want {
            return Err(mismatch(format!("range of {}", cell.address()), got, want));
        }
        for &d in probes {
            let got = current_value(src, cell, d).map(|v| (v.count, v.file_id)).ok();
            let want = oracle.value_at(cell, d);
            if got != want {
                return Err(mismatch(format!("value of {} at {d}", cell.address()), got, want));
            }
        }
    }

    let got: Vec<_> = rejected_log(src, &Predicate::True)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| p.id)
        .collect();
    let want: Vec<_> = oracle.rejected(|_| true).into_iter().map(|p| p.id).collect();
    if got != want {
        return Err(mismatch("rejected log", got, want));
    }

    let mut windows = vec![Window::all_time()];
    for pair in probes.windows(2) {
        windows.push(Window::new(pair[0], pair[1]));
    }
    if let (Some(&first), Some(&last)) = (probes.first(), probes.last()) {
        windows.push(Window::new(last, first));
    }
    let scheme = CategoryScheme::default();
    for dim in Dimension::ALL {
        let got: Vec<_> = rejected_log(src, &Predicate::Dimension(dim))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| p.id)
            .collect();
        let want: Vec<_> = oracle.rejected(|c| c.dimension == dim).into_iter().map(|p| p.id).collect();
        if got != want {
            return Err(mismatch(format!("rejected log for {dim}"), got, want));
        }
        for w in &windows {
            let (from, to) = (w.from, w.to);
            let got = update_counts_all(src, dim, *w).map_err(|e| e.to_string())?;
            let want = oracle.update_counts(dim, scheme.subcategories(dim), from, to);
            if got != want {
                return Err(mismatch(format!("update counts for {dim} in {w:?}"), got, want));
            }
            let got = most_updated(src, dim, *w).map_err(|e| e.to_string())?;
            let got = got.subcategory.map(|s| (s, got.count));
            let want = oracle.most_updated(dim, from, to);
            if got != want {
                return Err(mismatch(format!("most updated {dim} in {w:?}"), got, want));
            }
        }
    }

    let mut series: Vec<(Dimension, String)> = cells.iter().map(|c| (c.dimension, c.subcategory.clone())).collect();
    series.sort();
    series.dedup();
    for a in &series {
        for b in &series {
            let got = update_correlation(src, (a.0, &a.1), (b.0, &b.1)).map(|c| c.correlation).ok();
            let want = oracle.correlation((a.0, &a.1), (b.0, &b.1));
            let ok = match (got, want) {
                (Some(x), Some(y)) => (x - y).abs() <= tolerance,
                (None, None) => true,
                _ => false,
            };
            if !ok {
                return Err(mismatch(format!("correlation {}/{} vs {}/{}", a.0, a.1, b.0, b.1), got, want));
            }
        }
    }
    Ok(())
}
