//! Command-line front end. Exit status: 0 on success, 1 when the operation
//! fails, 2 for usage errors.

use std::fmt::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tempocurate_core::cell::{percent_decode, percent_encode};
use tempocurate_core::{CellKey, Database, Date, Timestamp};

use crate::api::{AcceptBody, RejectBody, Request, Response};
use crate::client::Backend;
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "tempocurate", version, about = "Curate weekly count releases in a valid-time table")]
pub struct Cli {
    /// SQLite database file (direct mode)
    #[arg(long, global = true, env = "TEMPOCURATE_DB", default_value = "tempocurate.db")]
    pub db: PathBuf,
    /// Base URL of a running service; overrides --db
    #[arg(long, global = true, env = "TEMPOCURATE_URL")]
    pub url: Option<String>,
    /// Print raw JSON responses
    #[arg(long, global = true)]
    pub json: bool,
    /// Decision timestamp (RFC 3339) instead of the wall clock
    #[arg(long, global = true)]
    pub now: Option<Timestamp>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the database schema
    Init,
    /// Ingest a weekly CSV release
    Upload {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        file_id: String,
        #[arg(long, alias = "release-date")]
        release: Date,
    },
    /// List ingested uploads
    Uploads,
    /// List proposed updates
    Pending {
        #[arg(long, default_value = "pending")]
        status: String,
        /// Group by week
        #[arg(long)]
        by_week: bool,
    },
    /// Accept proposed updates as sequenced updates
    Accept {
        /// Comma-separated proposal ids
        #[arg(long, required = true, value_delimiter = ',')]
        ids: Vec<i64>,
        /// Effective date; defaults to each update's release date
        #[arg(long)]
        effective: Option<Date>,
    },
    /// Reject proposed updates
    Reject {
        /// Comma-separated proposal ids
        #[arg(long, required = true, value_delimiter = ',')]
        ids: Vec<i64>,
    },
    /// Full version history of one cell (WEEK/DIMENSION/SUBCATEGORY)
    History {
        #[arg(long)]
        cell: String,
    },
    /// Every cell's value on a date
    Snapshot {
        #[arg(long)]
        asof: Option<Date>,
    },
    /// Provenance queries
    #[command(subcommand)]
    Query(Query),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum Query {
    /// First value ever recorded for a cell
    First {
        #[arg(long)]
        cell: String,
    },
    /// Value of a cell on a date
    Current {
        #[arg(long)]
        cell: String,
        #[arg(long)]
        asof: Option<Date>,
    },
    /// Minimum, maximum and number of distinct runs of a cell's count
    Range {
        #[arg(long)]
        cell: String,
    },
    /// Rejected proposals, oldest decision first
    Rejected {
        #[arg(long)]
        week: Option<Date>,
        #[arg(long)]
        dimension: Option<String>,
        #[arg(long)]
        subcategory: Option<String>,
    },
    /// Update counts per subcategory
    Counts {
        #[arg(long)]
        dimension: String,
        /// Comma-separated; defaults to every registered subcategory
        #[arg(long)]
        subcategories: Option<String>,
        #[arg(long)]
        from: Option<Date>,
        #[arg(long)]
        to: Option<Date>,
    },
    /// Subcategory with the most updates
    MostUpdated {
        #[arg(long)]
        dimension: String,
        #[arg(long)]
        from: Option<Date>,
        #[arg(long)]
        to: Option<Date>,
    },
    /// Pearson correlation of per-upload update counts
    Correlation {
        /// First series as DIMENSION/SUBCATEGORY
        #[arg(long)]
        a: String,
        /// Second series as DIMENSION/SUBCATEGORY
        #[arg(long)]
        b: String,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory served under /ui
    #[arg(long)]
    pub ui: Option<PathBuf>,
    /// Honour the decision clock header
    #[arg(long)]
    pub test_mode: bool,
}

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// What a command printed and how it ended.
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn usage(message: impl Into<String>) -> Self {
        Outcome {
            stdout: String::new(),
            stderr: format!("error: {}\n", message.into()),
            code: EXIT_USAGE,
        }
    }

    fn failure(message: impl Into<String>) -> Self {
        Outcome {
            code: EXIT_FAILURE,
            ..Outcome::usage(message)
        }
    }
}

pub fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Serve(args) => return serve(&cli, args),
        Command::Init => {
            if cli.url.is_some() {
                return Outcome::usage("init works on a local database; drop --url");
            }
            return match Database::open(&cli.db) {
                Ok(_) => Outcome {
                    stdout: if cli.json {
                        format!("{}\n", json!({ "database": cli.db }))
                    } else {
                        format!("initialized {}\n", cli.db.display())
                    },
                    stderr: String::new(),
                    code: 0,
                },
                Err(e) => Outcome::failure(e.to_string()),
            };
        }
        _ => {}
    }
    let req = match build_request(&cli) {
        Ok(r) => r,
        Err(o) => return o,
    };
    let mut backend = match &cli.url {
        Some(url) => Backend::remote(url),
        None => match Backend::open(&cli.db) {
            Ok(b) => b,
            Err(e) => return Outcome::failure(e.to_string()),
        },
    };
    match backend.call(&req) {
        Ok(resp) => present(&cli, &resp),
        Err(e) => Outcome::failure(e.to_string()),
    }
}

fn cell(s: &str) -> Result<CellKey, Outcome> {
    CellKey::parse_address(s).map_err(|e| Outcome::usage(format!("bad cell {s:?}: {e}")))
}

fn series(s: &str) -> Result<(String, String), Outcome> {
    let (dim, sub) = s
        .split_once('/')
        .ok_or_else(|| Outcome::usage(format!("series {s:?} is not DIMENSION/SUBCATEGORY")))?;
    let sub = percent_decode(sub).ok_or_else(|| Outcome::usage(format!("bad percent-encoding in {s:?}")))?;
    Ok((dim.to_string(), sub))
}

fn build_request(cli: &Cli) -> Result<Request, Outcome> {
    let req = match &cli.command {
        Command::Upload { file, file_id, release } => {
            let body = std::fs::read(file).map_err(|e| Outcome::failure(format!("cannot read {}: {e}", file.display())))?;
            Request::post("/uploads", body)
                .param("file_id", file_id.clone())
                .param("release_date", release.to_string())
        }
        Command::Uploads => Request::get("/uploads"),
        Command::Pending { status, by_week } => Request::get("/updates")
            .param("status", status.clone())
            .opt_param("group", by_week.then_some("week")),
        Command::Accept { ids, effective } => {
            let body = AcceptBody { ids: ids.clone(), effective: *effective };
            Request::post("/updates/accept", serde_json::to_vec(&body).expect("serializable"))
        }
        Command::Reject { ids } => {
            let body = RejectBody { ids: ids.clone() };
            Request::post("/updates/reject", serde_json::to_vec(&body).expect("serializable"))
        }
        Command::History { cell: c } => {
            let c = cell(c)?;
            Request::get(format!(
                "/cells/{}/{}/{}/history",
                c.week,
                c.dimension,
                percent_encode(&c.subcategory)
            ))
        }
        Command::Snapshot { asof } => Request::get("/snapshot").opt_param("asof", asof.map(|d| d.to_string())),
        Command::Query(q) => match q {
            Query::First { cell: c } => Request::get("/provenance/first").param("cell", cell(c)?.address()),
            Query::Current { cell: c, asof } => Request::get("/provenance/current")
                .param("cell", cell(c)?.address())
                .opt_param("asof", asof.map(|d| d.to_string())),
            Query::Range { cell: c } => Request::get("/provenance/range").param("cell", cell(c)?.address()),
            Query::Rejected { week, dimension, subcategory } => Request::get("/provenance/rejected")
                .opt_param("week", week.map(|d| d.to_string()))
                .opt_param("dimension", dimension.clone())
                .opt_param("subcategory", subcategory.clone()),
            Query::Counts { dimension, subcategories, from, to } => Request::get("/provenance/update-counts")
                .param("dimension", dimension.clone())
                .opt_param("subcategories", subcategories.clone())
                .opt_param("from", from.map(|d| d.to_string()))
                .opt_param("to", to.map(|d| d.to_string())),
            Query::MostUpdated { dimension, from, to } => Request::get("/provenance/most-updated")
                .param("dimension", dimension.clone())
                .opt_param("from", from.map(|d| d.to_string()))
                .opt_param("to", to.map(|d| d.to_string())),
            Query::Correlation { a, b } => {
                let (a_dim, a_sub) = series(a)?;
                let (b_dim, b_sub) = series(b)?;
                Request::get("/provenance/correlation")
                    .param("a_dim", a_dim)
                    .param("a_sub", a_sub)
                    .param("b_dim", b_dim)
                    .param("b_sub", b_sub)
            }
        },
        Command::Init | Command::Serve(_) => unreachable!("handled before dispatch"),
    };
    Ok(Request { now: cli.now, ..req })
}

fn serve(cli: &Cli, args: &ServeArgs) -> Outcome {
    if cli.url.is_some() {
        return Outcome::usage("serve works on a local database; drop --url");
    }
    let db = match Database::open(&cli.db) {
        Ok(db) => db,
        Err(e) => return Outcome::failure(e.to_string()),
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return Outcome::failure(e.to_string()),
    };
    let config = service::Config {
        test_mode: args.test_mode,
        ui_dir: args.ui.clone(),
    };
    match runtime.block_on(service::serve(db, SocketAddr::new(args.host, args.port), config)) {
        Ok(()) => Outcome {
            stdout: String::new(),
            stderr: String::new(),
            code: 0,
        },
        Err(e) => Outcome::failure(e.to_string()),
    }
}

fn present(cli: &Cli, resp: &Response) -> Outcome {
    if !resp.is_success() {
        let err = &resp.body["error"];
        return Outcome {
            stdout: if cli.json { format!("{:#}\n", resp.body) } else { String::new() },
            stderr: format!(
                "error [{}]: {}\n",
                err["code"].as_str().unwrap_or("unknown"),
                err["message"].as_str().unwrap_or("request failed")
            ),
            code: EXIT_FAILURE,
        };
    }
    let stdout = if cli.json {
        format!("{:#}\n", resp.body)
    } else {
        render(&cli.command, &resp.body)
    };
    Outcome {
        stdout,
        stderr: String::new(),
        code: 0,
    }
}

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn address(cell: &Value) -> String {
    format!("{}/{}/{}", s(&cell["week"]), s(&cell["dimension"]), s(&cell["subcategory"]))
}

fn proposal_table(out: &mut String, proposals: &[Value]) {
    let _ = writeln!(out, "{:>4}  {:<45} {:>6} {:>6}  {:<8} {:<8} {:<9}", "ID", "CELL", "OLD", "NEW", "FROM", "BY", "STATUS");
    for p in proposals {
        let _ = writeln!(
            out,
            "{:>4}  {:<45} {:>6} {:>6}  {:<8} {:<8} {:<9}",
            s(&p["id"]),
            address(&p["cell"]),
            s(&p["old_value"]),
            s(&p["new_value"]),
            s(&p["old_file_id"]),
            s(&p["new_file_id"]),
            s(&p["status"]),
        );
    }
}

fn items(v: &Value) -> &[Value] {
    v.as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn render(cmd: &Command, body: &Value) -> String {
    let mut out = String::new();
    match cmd {
        Command::Upload { .. } => {
            let new = items(&body["new_cells"]).len();
            let proposals = items(&body["proposals"]);
            let _ = writeln!(out, "{new} new cells, {} proposals", proposals.len());
            for v in items(&body["violations"]) {
                let _ = writeln!(
                    out,
                    "warning: week {} {} breakdown sums to {} but Total is {}",
                    s(&v["week"]),
                    s(&v["dimension"]),
                    s(&v["computed_sum"]),
                    s(&v["reported_total"])
                );
            }
            if !proposals.is_empty() {
                proposal_table(&mut out, proposals);
            }
        }
        Command::Uploads => {
            let _ = writeln!(out, "{:<12} {:<10} {:>5}", "FILE", "RELEASE", "ROWS");
            for u in items(&body["uploads"]) {
                let _ = writeln!(out, "{:<12} {:<10} {:>5}", s(&u["file_id"]), s(&u["release_date"]), s(&u["row_count"]));
            }
        }
        Command::Pending { .. } => {
            if let Some(groups) = body["groups"].as_array() {
                if groups.is_empty() {
                    out.push_str("no proposals\n");
                }
                for g in groups {
                    let _ = writeln!(out, "week {}", s(&g["week"]));
                    proposal_table(&mut out, items(&g["proposals"]));
                }
            } else if items(&body["updates"]).is_empty() {
                out.push_str("no proposals\n");
            } else {
                proposal_table(&mut out, items(&body["updates"]));
            }
        }
        Command::Accept { .. } | Command::Reject { .. } => {
            let (verb, list) = match cmd {
                Command::Accept { .. } => ("accepted", items(&body["accepted"])),
                _ => ("rejected", items(&body["rejected"])),
            };
            let ids: Vec<String> = list.iter().map(|p| s(&p["id"])).collect();
            let _ = writeln!(out, "{verb} {} update(s): {}", ids.len(), ids.join(", "));
        }
        Command::History { .. } => {
            let _ = writeln!(out, "{}", address(&body["cell"]));
            let _ = writeln!(out, "{:<10}  {:<10}  {:>6}  FILE", "FROM", "TO", "COUNT");
            for v in items(&body["versions"]) {
                let _ = writeln!(out, "{:<10}  {:<10}  {:>6}  {}", s(&v["valid_from"]), s(&v["valid_to"]), s(&v["count"]), s(&v["file_id"]));
            }
        }
        Command::Snapshot { .. } => {
            let _ = writeln!(out, "as of {}", s(&body["asof"]));
            for c in items(&body["cells"]) {
                let _ = writeln!(out, "{:<45} {:>6}  {}", address(c), s(&c["count"]), s(&c["file_id"]));
            }
        }
        Command::Query(q) => match q {
            Query::First { .. } => {
                let f = &body["first"];
                let _ = writeln!(out, "{} (file {}, valid from {})", s(&f["count"]), s(&f["file_id"]), s(&f["valid_from"]));
            }
            Query::Current { .. } => {
                let v = &body["value"];
                let _ = writeln!(out, "{} (file {}) as of {}", s(&v["count"]), s(&v["file_id"]), s(&body["asof"]));
            }
            Query::Range { .. } => {
                let r = &body["range"];
                let _ = writeln!(out, "min {}, max {}, {} version(s)", s(&r["min"]), s(&r["max"]), s(&r["n_versions"]));
            }
            Query::Rejected { .. } => {
                let list = items(&body["rejected"]);
                if list.is_empty() {
                    out.push_str("no rejected proposals\n");
                } else {
                    proposal_table(&mut out, list);
                }
            }
            Query::Counts { .. } => {
                if let Some(counts) = body["counts"].as_object() {
                    for (sub, n) in counts {
                        let _ = writeln!(out, "{sub:<40} {}", s(n));
                    }
                }
            }
            Query::MostUpdated { .. } => match &body["subcategory"] {
                Value::Null => out.push_str("no updates in window\n"),
                sub => {
                    let _ = writeln!(out, "{} ({} updates)", s(sub), s(&body["count"]));
                }
            },
            Query::Correlation { .. } => {
                let _ = writeln!(
                    out,
                    "r = {} over {} uploads (a = {}, b = {})",
                    s(&body["correlation"]),
                    items(&body["uploads"]).len(),
                    body["a"]["updates"],
                    body["b"]["updates"]
                );
            }
        },
        Command::Init | Command::Serve(_) => {}
    }
    out
}
