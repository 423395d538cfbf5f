//! Compiles temporal statements into plain parameterized SQL over a table
//! with explicit `valid_from` / `valid_to` columns.
//!
//! Dates are stored as ISO-8601 text, so string comparison in SQL is
//! chronological comparison.

use rusqlite::types::{ToSqlOutput, Value, ValueRef};
use rusqlite::{Connection, ToSql};
use thiserror::Error;

use crate::cell::{CellKey, Dimension};
use crate::period::{forever, Date, Period};
use crate::store::VersionedCount;

pub const TEMPORAL_TABLE: &str = "covid_deaths";

const COLUMNS: &str = "week, dimension, subcategory, count, file_id, valid_from, valid_to";

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("malformed statement: {0}")]
    Malformed(String),
    #[error("backend error: {0}")]
    Backend(#[from] rusqlite::Error),
    #[error("backend returned an unreadable row: {0}")]
    Decode(String),
}

/// A selection over cell keys, compilable to a SQL condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    True,
    False,
    Week(Date),
    Dimension(Dimension),
    Subcategory(String),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn cell(cell: &CellKey) -> Self {
        Predicate::And(vec![
            Predicate::Week(cell.week),
            Predicate::Dimension(cell.dimension),
            Predicate::Subcategory(cell.subcategory.clone()),
        ])
    }

    pub fn matches(&self, cell: &CellKey) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Week(w) => cell.week == *w,
            Predicate::Dimension(d) => cell.dimension == *d,
            Predicate::Subcategory(s) => cell.subcategory == *s,
            Predicate::And(ps) => ps.iter().all(|p| p.matches(cell)),
            Predicate::Or(ps) => ps.iter().any(|p| p.matches(cell)),
        }
    }

    fn compile(&self, dialect: &dyn Dialect, params: &mut Vec<SqlValue>) -> String {
        let bind = |v: SqlValue, column: &str, params: &mut Vec<SqlValue>| {
            params.push(v);
            format!("{column} = {}", dialect.placeholder(params.len()))
        };
        match self {
            Predicate::True => "1 = 1".to_string(),
            Predicate::False => "1 = 0".to_string(),
            Predicate::Week(w) => bind(SqlValue::from(*w), "week", params),
            Predicate::Dimension(d) => bind(SqlValue::Text(d.as_str().into()), "dimension", params),
            Predicate::Subcategory(s) => bind(SqlValue::Text(s.clone()), "subcategory", params),
            Predicate::And(ps) if ps.is_empty() => "1 = 1".to_string(),
            Predicate::Or(ps) if ps.is_empty() => "1 = 0".to_string(),
            Predicate::And(ps) => join(ps, " AND ", dialect, params),
            Predicate::Or(ps) => join(ps, " OR ", dialect, params),
        }
    }
}

fn join(ps: &[Predicate], sep: &str, dialect: &dyn Dialect, params: &mut Vec<SqlValue>) -> String {
    let parts: Vec<String> = ps.iter().map(|p| format!("({})", p.compile(dialect, params))).collect();
    parts.join(sep)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemporalStatement {
    SnapshotQuery {
        asof: Date,
        predicate: Predicate,
    },
    NonsequencedQuery {
        predicate: Predicate,
    },
    SequencedUpdate {
        cell: CellKey,
        new_count: i64,
        new_file_id: String,
        from: Date,
    },
    InsertCurrent {
        cell: CellKey,
        count: i64,
        file_id: String,
        from: Date,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Text(String),
}

impl From<Date> for SqlValue {
    fn from(d: Date) -> Self {
        SqlValue::Text(d.to_string())
    }
}

impl From<&str> for SqlValue {
    fn from(s: &str) -> Self {
        SqlValue::Text(s.to_string())
    }
}

impl From<i64> for SqlValue {
    fn from(n: i64) -> Self {
        SqlValue::Integer(n)
    }
}

impl<T: Into<SqlValue>> From<Option<T>> for SqlValue {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(SqlValue::Null)
    }
}

impl ToSql for SqlValue {
    fn to_sql(&self) -> rusqlite::Result<ToSqlOutput<'_>> {
        Ok(match self {
            SqlValue::Null => ToSqlOutput::Owned(Value::Null),
            SqlValue::Integer(n) => ToSqlOutput::Owned(Value::Integer(*n)),
            SqlValue::Text(s) => ToSqlOutput::Borrowed(ValueRef::Text(s.as_bytes())),
        })
    }
}

impl SqlValue {
    fn from_ref(v: ValueRef<'_>) -> Result<Self, RewriteError> {
        match v {
            ValueRef::Null => Ok(SqlValue::Null),
            ValueRef::Integer(n) => Ok(SqlValue::Integer(n)),
            ValueRef::Text(t) => std::str::from_utf8(t)
                .map(|s| SqlValue::Text(s.to_string()))
                .map_err(|e| RewriteError::Decode(e.to_string())),
            other => Err(RewriteError::Decode(format!("unsupported column type {:?}", other.data_type()))),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            SqlValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            SqlValue::Integer(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlStatement {
    pub sql: String,
    pub params: Vec<SqlValue>,
}

/// Statements executed in order inside one transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SqlBatch {
    pub statements: Vec<SqlStatement>,
}

impl SqlBatch {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    fn push(&mut self, sql: String, params: Vec<SqlValue>) {
        self.statements.push(SqlStatement { sql, params });
    }
}

/// Placeholder syntax of the target backend.
pub trait Dialect {
    fn placeholder(&self, index: usize) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sqlite;

impl Dialect for Sqlite {
    fn placeholder(&self, index: usize) -> String {
        format!("?{index}")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Postgres;

impl Dialect for Postgres {
    fn placeholder(&self, index: usize) -> String {
        format!("${index}")
    }
}

pub const DDL_COVID_DEATHS: &str = "CREATE TABLE IF NOT EXISTS covid_deaths (\
week TEXT NOT NULL, \
dimension TEXT NOT NULL, \
subcategory TEXT NOT NULL, \
count INTEGER NOT NULL CHECK (count >= 0), \
file_id TEXT NOT NULL, \
valid_from TEXT NOT NULL, \
valid_to TEXT NOT NULL, \
CHECK (valid_from < valid_to), \
PRIMARY KEY (week, dimension, subcategory, valid_from))";

pub const DDL_UPLOADS: &str = "CREATE TABLE IF NOT EXISTS uploads (\
file_id TEXT PRIMARY KEY, \
release_date TEXT NOT NULL, \
row_count INTEGER NOT NULL)";

pub const DDL_PROPOSED_UPDATES: &str = "CREATE TABLE IF NOT EXISTS proposed_updates (\
id INTEGER PRIMARY KEY, \
week TEXT NOT NULL, \
dimension TEXT NOT NULL, \
subcategory TEXT NOT NULL, \
old_value INTEGER NOT NULL, \
new_value INTEGER NOT NULL, \
old_file_id TEXT NOT NULL, \
new_file_id TEXT NOT NULL, \
status TEXT NOT NULL CHECK (status IN ('pending', 'accepted', 'rejected')), \
decided_at TEXT NULL)";

/// Schema for the temporal table, the upload register and the decision log.
pub fn ddl() -> SqlBatch {
    let mut batch = SqlBatch::default();
    for sql in [DDL_COVID_DEATHS, DDL_UPLOADS, DDL_PROPOSED_UPDATES] {
        batch.push(sql.to_string(), Vec::new());
    }
    batch
}

pub fn rewrite(stmt: &TemporalStatement) -> Result<SqlBatch, RewriteError> {
    rewrite_for(stmt, &Sqlite)
}

pub fn rewrite_for(stmt: &TemporalStatement, dialect: &dyn Dialect) -> Result<SqlBatch, RewriteError> {
    let ph = |i| dialect.placeholder(i);
    let mut batch = SqlBatch::default();
    match stmt {
        TemporalStatement::SnapshotQuery { asof, predicate } => {
            let mut params = Vec::new();
            let cond = predicate.compile(dialect, &mut params);
            params.push(SqlValue::from(*asof));
            let at = ph(params.len());
            batch.push(
                format!(
                    "SELECT {COLUMNS} FROM {TEMPORAL_TABLE} WHERE ({cond}) AND valid_from <= {at} AND {at} < valid_to \
                     ORDER BY week, dimension, subcategory, valid_from"
                ),
                params,
            );
        }
        TemporalStatement::NonsequencedQuery { predicate } => {
            let mut params = Vec::new();
            let cond = predicate.compile(dialect, &mut params);
            batch.push(
                format!("SELECT {COLUMNS} FROM {TEMPORAL_TABLE} WHERE {cond} ORDER BY week, dimension, subcategory, valid_from"),
                params,
            );
        }
        TemporalStatement::SequencedUpdate {
            cell,
            new_count,
            new_file_id,
            from,
        } => {
            check_count(*new_count)?;
            check_start(*from)?;
            let params = vec![
                SqlValue::from(cell.week),
                SqlValue::Text(cell.dimension.as_str().into()),
                SqlValue::Text(cell.subcategory.clone()),
                SqlValue::from(*from),
                SqlValue::Integer(*new_count),
                SqlValue::Text(new_file_id.clone()),
            ];
            let key = format!("week = {} AND dimension = {} AND subcategory = {}", ph(1), ph(2), ph(3));
            let (from, count, file) = (ph(4), ph(5), ph(6));
            // Continuation rows first: their valid_from = :from differs from
            // every truncated row's key, so the primary key never collides.
            batch.push(
                format!(
                    "INSERT INTO {TEMPORAL_TABLE} ({COLUMNS}) \
                     SELECT week, dimension, subcategory, {count}, {file}, {from}, valid_to FROM {TEMPORAL_TABLE} \
                     WHERE {key} AND valid_from < {from} AND {from} < valid_to"
                ),
                params.clone(),
            );
            batch.push(
                format!(
                    "UPDATE {TEMPORAL_TABLE} SET valid_to = {from} \
                     WHERE {key} AND valid_from < {from} AND {from} < valid_to"
                ),
                params[..4].to_vec(),
            );
            batch.push(
                format!(
                    "UPDATE {TEMPORAL_TABLE} SET count = {count}, file_id = {file} \
                     WHERE {key} AND valid_from >= {from}"
                ),
                params,
            );
        }
        TemporalStatement::InsertCurrent {
            cell,
            count,
            file_id,
            from,
        } => {
            check_count(*count)?;
            check_start(*from)?;
            batch.push(
                format!(
                    "INSERT INTO {TEMPORAL_TABLE} ({COLUMNS}) VALUES ({}, {}, {}, {}, {}, {}, '{}')",
                    ph(1),
                    ph(2),
                    ph(3),
                    ph(4),
                    ph(5),
                    ph(6),
                    forever()
                ),
                vec![
                    SqlValue::from(cell.week),
                    SqlValue::Text(cell.dimension.as_str().into()),
                    SqlValue::Text(cell.subcategory.clone()),
                    SqlValue::Integer(*count),
                    SqlValue::Text(file_id.clone()),
                    SqlValue::from(*from),
                ],
            );
        }
    }
    Ok(batch)
}

fn check_count(n: i64) -> Result<(), RewriteError> {
    if n < 0 {
        return Err(RewriteError::Malformed(format!("negative count {n}")));
    }
    Ok(())
}

fn check_start(from: Date) -> Result<(), RewriteError> {
    if from >= forever() {
        return Err(RewriteError::Malformed(format!("start {from} is not before {}", forever())));
    }
    Ok(())
}

pub type Row = Vec<SqlValue>;

/// Runs the batch in its own transaction, rolling back on any failure.
/// Returns the rows of the last query in the batch.
pub fn execute(batch: &SqlBatch, conn: &mut Connection) -> Result<Vec<Row>, RewriteError> {
    let tx = conn.transaction()?;
    let rows = execute_within(batch, &tx)?;
    tx.commit()?;
    Ok(rows)
}

/// Runs the batch on a connection whose transaction the caller owns.
pub fn execute_within(batch: &SqlBatch, conn: &Connection) -> Result<Vec<Row>, RewriteError> {
    let mut result = Vec::new();
    for stmt in &batch.statements {
        let mut prepared = conn.prepare(&stmt.sql)?;
        let params = rusqlite::params_from_iter(stmt.params.iter());
        if prepared.column_count() == 0 {
            prepared.execute(params)?;
            continue;
        }
        let ncols = prepared.column_count();
        let mut rows = prepared.query(params)?;
        let mut collected = Vec::new();
        while let Some(row) = rows.next()? {
            let values = (0..ncols)
                .map(|i| SqlValue::from_ref(row.get_ref(i)?))
                .collect::<Result<Row, RewriteError>>()?;
            collected.push(values);
        }
        result = collected;
    }
    Ok(result)
}

/// Decodes rows shaped like the temporal table's column list.
pub fn decode_versions(rows: &[Row]) -> Result<Vec<VersionedCount>, RewriteError> {
    rows.iter().map(|r| decode_version(r)).collect()
}

fn decode_version(row: &[SqlValue]) -> Result<VersionedCount, RewriteError> {
    let bad = |what: &str| RewriteError::Decode(format!("{what} in row {row:?}"));
    let [week, dim, sub, count, file, from, to] = row else {
        return Err(bad("wrong column count"));
    };
    let text = |v: &SqlValue, what: &str| v.as_text().map(str::to_string).ok_or_else(|| bad(what));
    let date = |v: &SqlValue, what: &str| -> Result<Date, RewriteError> { text(v, what)?.parse().map_err(|_| bad(what)) };
    let dimension: Dimension = text(dim, "dimension")?.parse().map_err(|_| bad("dimension"))?;
    let cell = CellKey::new(date(week, "week")?, dimension, text(sub, "subcategory")?).map_err(|e| bad(&e.to_string()))?;
    let period = Period::new(date(from, "valid_from")?, date(to, "valid_to")?).map_err(|e| bad(&e.to_string()))?;
    Ok(VersionedCount {
        cell,
        count: count.as_integer().ok_or_else(|| bad("count"))?,
        file_id: text(file, "file_id")?,
        period,
    })
}
