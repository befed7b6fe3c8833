//! Flat `key = value` config files and the CSV formats read and written by
//! the command-line tool.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a value
//! read back from any CSV here is bit-identical to the one written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::distfit::{FitError, Histogram};
use crate::dynamics::{CityTracePoint, LvPoint};
use crate::params::AggregatePoint;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("unknown config key{}: {}", if .0.len() > 1 { "s" } else { "" }, .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("config key '{key}': {msg}")]
    BadValue { key: String, msg: String },
    #[error(transparent)]
    Histogram(#[from] FitError),
}

/// Parsed `key = value` file. Keys are consumed with the `take_*` methods;
/// [`Config::finish`] then rejects whatever was not recognised.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(IoError::Parse {
                    line: i + 1,
                    msg: format!("expected 'key = value', got '{line}'"),
                });
            };
            let key = k.trim().to_ascii_lowercase().replace('-', "_");
            if key.is_empty() {
                return Err(IoError::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            let value = v.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), (i + 1, value)).is_some() {
                return Err(IoError::Parse {
                    line: i + 1,
                    msg: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_file(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, IoError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take_str(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| IoError::BadValue {
                key: key.to_string(),
                msg: format!("'{v}': {e}"),
            }),
        }
    }

    pub fn finish(self) -> Result<(), IoError> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            Err(IoError::UnknownKeys(self.entries.into_keys().collect()))
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let wrap = |source| IoError::File {
        path: path.display().to_string(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(wrap)
}

/// `rank,wealth,income`, richest first.
pub fn wealth_csv(wealth: &[f64], income: &[f64]) -> String {
    let mut order: Vec<usize> = (0..wealth.len()).collect();
    order.sort_by(|&a, &b| wealth[b].total_cmp(&wealth[a]).then(a.cmp(&b)));
    let mut out = String::from("rank,wealth,income\n");
    for (rank, &i) in order.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", rank + 1, wealth[i], income[i]);
    }
    out
}

pub fn aggregates_csv(series: &[AggregatePoint]) -> String {
    let mut out = String::from("iteration,total_wealth,total_consumption,total_income,profit_rate,floor_events\n");
    for p in series {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.iteration, p.total_wealth, p.total_consumption, p.total_income, p.profit_rate, p.floor_events
        );
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", h.bin_edges[i], h.bin_edges[i + 1], c);
    }
    out
}

pub fn lv_csv(points: &[LvPoint]) -> String {
    let mut out = String::from("t,x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.t, p.x, p.y);
    }
    out
}

pub fn city_trace_csv(trace: &[CityTracePoint]) -> String {
    let mut out = String::from("t,mean_pop,max_pop\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.t, p.mean_pop, p.max_pop);
    }
    out
}

/// One value per line under a single header.
pub fn column_csv(header: &str, values: &[f64]) -> String {
    let mut out = String::with_capacity(20 * (values.len() + 1));
    out.push_str(header);
    out.push('\n');
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// A header-first CSV of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, head)) = lines.next() else {
            return Err(IoError::Parse {
                line: 1,
                msg: "empty file".into(),
            });
        };
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| IoError::Parse {
                        line: i + 1,
                        msg: format!("'{}': {e}", s.trim()),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if row.len() != header.len() {
                return Err(IoError::Parse {
                    line: i + 1,
                    msg: format!("expected {} fields, got {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, IoError> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Histogram from a `bin_lo,bin_hi,count` CSV. Bins must be contiguous.
pub fn read_histogram_csv(text: &str, assumed_error: f64) -> Result<Histogram, IoError> {
    let t = Table::parse(text)?;
    let lo = t.column("bin_lo")?;
    let hi = t.column("bin_hi")?;
    let counts = t.column("count")?;
    if lo.is_empty() {
        return Err(IoError::Parse {
            line: 2,
            msg: "no bins".into(),
        });
    }
    for i in 1..lo.len() {
        if lo[i] != hi[i - 1] {
            return Err(IoError::Parse {
                line: i + 2,
                msg: format!("bin starts at {} but previous ends at {}", lo[i], hi[i - 1]),
            });
        }
    }
    let mut edges = lo;
    edges.push(*hi.last().unwrap());
    Ok(Histogram::new(edges, counts, assumed_error)?)
}
