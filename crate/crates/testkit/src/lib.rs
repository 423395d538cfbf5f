//! Test support: a naive day-by-day replay oracle, canonical fixtures and a
//! seeded random session generator.
//!
//! The oracle shares only plain data types (dates, cell keys, uploads) with
//! the implementation. It stores every cell's full valuation as one slot per
//! day over a fixed horizon and answers every query by scanning those slots.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempocurate_core::ingest::{parse_csv, UploadRow};
use tempocurate_core::{CategoryScheme, CellKey, Date, Dimension, Status, Timestamp, Upload};

pub mod check;
pub mod fixtures;
pub mod golden;

/// First day the oracle tracks.
pub fn horizon_start() -> Date {
    "2020-01-01".parse().unwrap()
}

/// Number of tracked days; every operation date must fall inside.
pub const HORIZON_DAYS: usize = 3 * 366;

type Slot = Option<(i64, String)>;

#[derive(Debug, Clone)]
struct Valuation {
    days: Vec<Slot>,
    /// Value on every day after the horizon up to the sentinel.
    tail: Slot,
}

impl Valuation {
    fn new() -> Self {
        Valuation {
            days: vec![None; HORIZON_DAYS],
            tail: None,
        }
    }
}

fn day_index(d: Date) -> usize {
    let i = horizon_start().days_until(d);
    assert!(i >= 0 && (i as usize) < HORIZON_DAYS, "date {d} outside oracle horizon");
    i as usize
}

fn day_at(i: usize) -> Date {
    horizon_start().add_days(i as i64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleProposal {
    pub id: i64,
    pub cell: CellKey,
    pub old_value: i64,
    pub new_value: i64,
    pub old_file_id: String,
    pub new_file_id: String,
    pub status: Status,
    pub decided_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEvent {
    pub cell: CellKey,
    pub from_value: i64,
    pub to_value: i64,
    pub effective: Date,
    pub file_id: String,
}

/// Outcome of an upload as the oracle sees it: ids of new cells and
/// proposals, in row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleIngest {
    pub new_cells: Vec<(CellKey, i64)>,
    pub proposal_ids: Vec<i64>,
}

#[derive(Debug, Clone, Default)]
pub struct Oracle {
    cells: BTreeMap<CellKey, Valuation>,
    uploads: Vec<Upload>,
    receipts: Vec<OracleIngest>,
    proposals: Vec<OracleProposal>,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value_at(&self, cell: &CellKey, d: Date) -> Option<(i64, String)> {
        let v = self.cells.get(cell)?;
        let i = horizon_start().days_until(d);
        if i < 0 {
            None
        } else if (i as usize) < HORIZON_DAYS {
            v.days[i as usize].clone()
        } else {
            v.tail.clone()
        }
    }

    pub fn snapshot(&self, d: Date) -> BTreeMap<CellKey, (i64, String)> {
        self.cells
            .keys()
            .filter_map(|c| self.value_at(c, d).map(|v| (c.clone(), v)))
            .collect()
    }

    pub fn cells(&self) -> Vec<CellKey> {
        self.cells.keys().cloned().collect()
    }

    pub fn proposals(&self) -> &[OracleProposal] {
        &self.proposals
    }

    pub fn pending_ids(&self) -> Vec<i64> {
        self.proposals.iter().filter(|p| p.status == Status::Pending).map(|p| p.id).collect()
    }

    pub fn uploads(&self) -> &[Upload] {
        &self.uploads
    }

    fn set_from(&mut self, cell: &CellKey, value: (i64, String), from: Date, only_present: bool) {
        let v = self.cells.entry(cell.clone()).or_insert_with(Valuation::new);
        for slot in &mut v.days[day_index(from)..] {
            if !only_present || slot.is_some() {
                *slot = Some(value.clone());
            }
        }
        if !only_present || v.tail.is_some() {
            v.tail = Some(value);
        }
    }

    /// Mirrors the ingestion contract; `Err` carries a short reason.
    pub fn ingest(&mut self, upload: &Upload) -> Result<OracleIngest, String> {
        if let Some(idx) = self.uploads.iter().position(|u| u.file_id == upload.file_id) {
            return if self.uploads[idx] == *upload {
                Ok(self.receipts[idx].clone())
            } else {
                Err("duplicate_upload".into())
            };
        }
        if upload.file_id.is_empty() {
            return Err("empty_file_id".into());
        }
        if self.uploads.iter().any(|u| u.release_date > upload.release_date) {
            return Err("release_out_of_order".into());
        }
        let mut out = OracleIngest {
            new_cells: Vec::new(),
            proposal_ids: Vec::new(),
        };
        for row in &upload.rows {
            match self.value_at(&row.cell, upload.release_date) {
                None => {
                    self.set_from(&row.cell, (row.count, upload.file_id.clone()), upload.release_date, false);
                    out.new_cells.push((row.cell.clone(), row.count));
                }
                Some((count, file)) if count != row.count => {
                    let id = self.proposals.len() as i64 + 1;
                    self.proposals.push(OracleProposal {
                        id,
                        cell: row.cell.clone(),
                        old_value: count,
                        new_value: row.count,
                        old_file_id: file,
                        new_file_id: upload.file_id.clone(),
                        status: Status::Pending,
                        decided_at: None,
                    });
                    out.proposal_ids.push(id);
                }
                Some(_) => {}
            }
        }
        self.uploads.push(upload.clone());
        self.receipts.push(out.clone());
        Ok(out)
    }

    fn check_pending(&self, ids: &[i64]) -> Result<Vec<usize>, String> {
        let mut seen = Vec::new();
        for &id in ids {
            let Some(idx) = self.proposals.iter().position(|p| p.id == id) else {
                return Err("unknown_update".into());
            };
            if self.proposals[idx].status != Status::Pending {
                return Err("not_pending".into());
            }
            if !seen.contains(&idx) {
                seen.push(idx);
            }
        }
        Ok(seen)
    }

    pub fn accept(&mut self, ids: &[i64], effective: Option<Date>, now: Timestamp) -> Result<(), String> {
        let chosen = self.check_pending(ids)?;
        for idx in chosen {
            let p = self.proposals[idx].clone();
            let from = effective.unwrap_or_else(|| {
                self.uploads
                    .iter()
                    .find(|u| u.file_id == p.new_file_id)
                    .expect("proposal from known upload")
                    .release_date
            });
            self.set_from(&p.cell, (p.new_value, p.new_file_id.clone()), from, true);
            let p = &mut self.proposals[idx];
            p.status = Status::Accepted;
            p.decided_at = Some(now);
        }
        Ok(())
    }

    pub fn reject(&mut self, ids: &[i64], now: Timestamp) -> Result<(), String> {
        let chosen = self.check_pending(ids)?;
        for idx in chosen {
            let p = &mut self.proposals[idx];
            p.status = Status::Rejected;
            p.decided_at = Some(now);
        }
        Ok(())
    }

    /// Maximal runs of identical (count, file) values: (count, file, start, end).
    pub fn value_runs(&self, cell: &CellKey) -> Vec<(i64, String, Date, Date)> {
        self.runs(cell, |a, b| a == b)
    }

    /// Maximal runs of identical counts, labelled with the file at run start.
    pub fn count_runs(&self, cell: &CellKey) -> Vec<(i64, String, Date, Date)> {
        self.runs(cell, |a, b| a.0 == b.0)
    }

    fn runs(&self, cell: &CellKey, same: impl Fn(&(i64, String), &(i64, String)) -> bool) -> Vec<(i64, String, Date, Date)> {
        let Some(v) = self.cells.get(cell) else {
            return Vec::new();
        };
        let mut out: Vec<(i64, String, Date, Date)> = Vec::new();
        let mut current: Option<((i64, String), usize)> = None;
        for (i, slot) in v.days.iter().enumerate() {
            match (slot, &current) {
                (Some(val), Some((cur, _))) if same(cur, val) => {}
                (Some(val), _) => {
                    if let Some((cur, start)) = current.take() {
                        out.push((cur.0, cur.1, day_at(start), day_at(i)));
                    }
                    current = Some((val.clone(), i));
                }
                (None, _) => {
                    if let Some((cur, start)) = current.take() {
                        out.push((cur.0, cur.1, day_at(start), day_at(i)));
                    }
                }
            }
        }
        if let Some((cur, start)) = current {
            assert!(v.tail.as_ref().is_some_and(|t| same(&cur, t)), "tail differs from last horizon day");
            out.push((cur.0, cur.1, day_at(start), tempocurate_core::forever()));
        }
        out
    }

    /// Days on which a cell's count differs from the previous day's.
    pub fn events(&self) -> Vec<OracleEvent> {
        let mut out = Vec::new();
        for (cell, v) in &self.cells {
            for i in 1..HORIZON_DAYS {
                if let (Some((a, _)), Some((b, file))) = (&v.days[i - 1], &v.days[i]) {
                    if a != b {
                        out.push(OracleEvent {
                            cell: cell.clone(),
                            from_value: *a,
                            to_value: *b,
                            effective: day_at(i),
                            file_id: file.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn first_value(&self, cell: &CellKey) -> Option<(i64, String, Date)> {
        let v = self.cells.get(cell)?;
        v.days
            .iter()
            .enumerate()
            .find_map(|(i, s)| s.as_ref().map(|(c, f)| (*c, f.clone(), day_at(i))))
    }

    /// (min, max, number of count runs).
    pub fn value_range(&self, cell: &CellKey) -> Option<(i64, i64, usize)> {
        let v = self.cells.get(cell)?;
        let counts: Vec<i64> = v.days.iter().flatten().map(|(c, _)| *c).collect();
        let min = *counts.iter().min()?;
        let max = *counts.iter().max()?;
        let mut runs = 0;
        let mut prev: Option<i64> = None;
        for s in &v.days {
            match s {
                Some((c, _)) if prev != Some(*c) => {
                    runs += 1;
                    prev = Some(*c);
                }
                Some(_) => {}
                None => prev = None,
            }
        }
        Some((min, max, runs))
    }

    /// Rejected proposals matching `filter`, by (decided_at, id).
    pub fn rejected(&self, filter: impl Fn(&CellKey) -> bool) -> Vec<OracleProposal> {
        let mut out: Vec<_> = self
            .proposals
            .iter()
            .filter(|p| p.status == Status::Rejected && filter(&p.cell))
            .cloned()
            .collect();
        out.sort_by_key(|p| (p.decided_at, p.id));
        out
    }

    pub fn update_counts(&self, dimension: Dimension, subcategories: &[String], from: Date, to: Date) -> BTreeMap<String, u64> {
        let events = self.events();
        subcategories
            .iter()
            .map(|s| {
                let n = events
                    .iter()
                    .filter(|e| e.cell.dimension == dimension && &e.cell.subcategory == s && from <= e.effective && e.effective < to)
                    .count() as u64;
                (s.clone(), n)
            })
            .collect()
    }

    /// Brute force over every subcategory seen: (name, count) or None.
    pub fn most_updated(&self, dimension: Dimension, from: Date, to: Date) -> Option<(String, u64)> {
        let events = self.events();
        let mut names: Vec<String> = events
            .iter()
            .filter(|e| e.cell.dimension == dimension && from <= e.effective && e.effective < to)
            .map(|e| e.cell.subcategory.clone())
            .collect();
        names.sort();
        names.dedup();
        let mut best: Option<(String, u64)> = None;
        for name in names {
            let n = events
                .iter()
                .filter(|e| e.cell.dimension == dimension && e.cell.subcategory == name && from <= e.effective && e.effective < to)
                .count() as u64;
            match &best {
                Some((_, m)) if *m >= n => {}
                _ => best = Some((name, n)),
            }
        }
        best
    }

    pub fn per_upload(&self, dimension: Dimension, subcategory: &str) -> Vec<u64> {
        let mut uploads: Vec<&Upload> = self.uploads.iter().collect();
        uploads.sort_by_key(|u| u.release_date);
        let events = self.events();
        uploads
            .iter()
            .map(|u| {
                events
                    .iter()
                    .filter(|e| e.cell.dimension == dimension && e.cell.subcategory == subcategory && e.file_id == u.file_id)
                    .count() as u64
            })
            .collect()
    }

    /// Pearson correlation from raw integer sums; None when undefined.
    pub fn correlation(&self, a: (Dimension, &str), b: (Dimension, &str)) -> Option<f64> {
        let xs = self.per_upload(a.0, a.1);
        let ys = self.per_upload(b.0, b.1);
        if xs.len() < 2 {
            return None;
        }
        let n = xs.len() as i128;
        let sx: i128 = xs.iter().map(|&x| x as i128).sum();
        let sy: i128 = ys.iter().map(|&y| y as i128).sum();
        let sxx: i128 = xs.iter().map(|&x| (x * x) as i128).sum();
        let syy: i128 = ys.iter().map(|&y| (y * y) as i128).sum();
        let sxy: i128 = xs.iter().zip(&ys).map(|(&x, &y)| (x * y) as i128).sum();
        let vx = n * sxx - sx * sx;
        let vy = n * syy - sy * sy;
        if vx == 0 || vy == 0 {
            return None;
        }
        Some((n * sxy - sx * sy) as f64 / ((vx as f64) * (vy as f64)).sqrt())
    }
}

/// One scripted curation action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Upload(Upload),
    Accept {
        ids: Vec<i64>,
        effective: Option<Date>,
        now: Timestamp,
    },
    Reject {
        ids: Vec<i64>,
        now: Timestamp,
    },
}

impl Step {
    pub fn apply_to_oracle(&self, oracle: &mut Oracle) -> Result<(), String> {
        match self {
            Step::Upload(u) => oracle.ingest(u).map(|_| ()),
            Step::Accept { ids, effective, now } => oracle.accept(ids, *effective, *now),
            Step::Reject { ids, now } => oracle.reject(ids, *now),
        }
    }

    pub fn apply<C: tempocurate_core::Curation + ?Sized>(&self, target: &mut C) -> tempocurate_core::Result<()> {
        match self {
            Step::Upload(u) => target.ingest(u.clone()).map(|_| ()),
            Step::Accept { ids, effective, now } => target.accept(ids, *effective, *now).map(|_| ()),
            Step::Reject { ids, now } => target.reject(ids, *now).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SessionLimits {
    pub max_cells: usize,
    pub max_uploads: usize,
}

impl Default for SessionLimits {
    fn default() -> Self {
        SessionLimits {
            max_cells: 50,
            max_uploads: 10,
        }
    }
}

/// A seeded random curation session. Decisions are drawn from the proposals
/// pending at that point; some steps are deliberately invalid (re-deciding a
/// decided proposal, unknown ids, duplicate file ids) and must fail without
/// side effects.
pub fn random_session(seed: u64, limits: SessionLimits) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = CategoryScheme::default();
    let weeks: Vec<Date> = (0..6).map(|i| "2020-03-30".parse::<Date>().unwrap().add_days(7 * i)).collect();
    let mut universe: Vec<CellKey> = Vec::new();
    for dim in Dimension::ALL {
        let subs = scheme.subcategories(dim);
        for sub in subs.iter().take(4) {
            for w in &weeks {
                universe.push(CellKey::new(*w, dim, sub.clone()).unwrap());
            }
        }
    }
    universe.shuffle(&mut rng);
    let n_cells = rng.random_range(1..=limits.max_cells);
    let cells: Vec<CellKey> = universe.into_iter().take(n_cells).collect();
    let n_uploads = rng.random_range(1..=limits.max_uploads);

    let mut oracle = Oracle::new();
    let mut steps = Vec::new();
    let mut last: BTreeMap<CellKey, i64> = BTreeMap::new();
    let mut release: Date = "2020-04-06".parse().unwrap();
    let mut clock: Timestamp = "2020-04-06T09:00:00Z".parse().unwrap();
    let mut tick = |rng: &mut ChaCha8Rng| {
        let secs = rng.random_range(1..7200);
        clock = clock.add_seconds(secs);
        clock
    };

    let push = |steps: &mut Vec<Step>, oracle: &mut Oracle, step: Step| {
        let _ = step.apply_to_oracle(oracle);
        steps.push(step);
    };

    for u in 0..n_uploads {
        release = release.add_days(*[0i64, 3, 7, 7, 7, 14].choose(&mut rng).unwrap());
        let mut rows = Vec::new();
        for cell in &cells {
            if rng.random_bool(0.75) {
                let prev = last.get(cell).copied();
                let count = match prev {
                    Some(p) if rng.random_bool(0.5) => p,
                    Some(p) => (p + rng.random_range(-3i64..=5)).max(0),
                    None => rng.random_range(0..60),
                };
                last.insert(cell.clone(), count);
                rows.push(UploadRow {
                    cell: cell.clone(),
                    count,
                });
            }
        }
        let upload = Upload {
            file_id: format!("U{}", u + 1),
            release_date: release,
            rows,
        };
        push(&mut steps, &mut oracle, Step::Upload(upload.clone()));
        if rng.random_bool(0.1) {
            // Same file id: identical content is idempotent, altered content fails.
            let mut again = upload.clone();
            if rng.random_bool(0.5) && !again.rows.is_empty() {
                again.rows[0].count += 1;
            }
            push(&mut steps, &mut oracle, Step::Upload(again));
        }

        let pending = oracle.pending_ids();
        let mut accept = Vec::new();
        let mut reject = Vec::new();
        for id in pending {
            if rng.random_bool(0.65) {
                if rng.random_bool(0.7) {
                    accept.push(id);
                } else {
                    reject.push(id);
                }
            }
        }
        if rng.random_bool(0.15) {
            let decided: Vec<i64> = oracle.proposals().iter().filter(|p| p.status != Status::Pending).map(|p| p.id).collect();
            let bad = decided.choose(&mut rng).copied().unwrap_or(10_000);
            let mut ids = accept.clone();
            ids.insert(rng.random_range(0..=ids.len()), bad);
            let now = tick(&mut rng);
            push(&mut steps, &mut oracle, Step::Accept { ids, effective: None, now });
        }
        accept.shuffle(&mut rng);
        while !accept.is_empty() {
            let take = rng.random_range(1..=accept.len());
            let ids: Vec<i64> = accept.drain(..take).collect();
            let effective = if rng.random_bool(0.15) {
                Some(release.add_days(rng.random_range(-20..=10)))
            } else {
                None
            };
            let now = tick(&mut rng);
            push(&mut steps, &mut oracle, Step::Accept { ids, effective, now });
        }
        if !reject.is_empty() {
            let now = tick(&mut rng);
            push(&mut steps, &mut oracle, Step::Reject { ids: reject, now });
        }
    }
    steps
}

/// Dates worth probing for a session: every release and effective date, the
/// day either side, and points before and after all activity.
pub fn probe_dates(steps: &[Step]) -> Vec<Date> {
    let mut out: Vec<Date> = vec!["2020-01-01".parse().unwrap(), "2525-01-01".parse().unwrap()];
    for step in steps {
        let d = match step {
            Step::Upload(u) => Some(u.release_date),
            Step::Accept { effective, .. } => *effective,
            Step::Reject { .. } => None,
        };
        if let Some(d) = d {
            out.extend([d.add_days(-1), d, d.succ()]);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Parses a CSV fixture; panics on malformed input.
pub fn upload_from_csv(csv: &str, file_id: &str, release: &str) -> Upload {
    parse_csv(csv.as_bytes(), file_id, release.parse().unwrap()).expect("fixture CSV parses")
}
