//! On-disk observation logs. A log is a small CSV with a version line,
//! one row per deployed prediction, written so that reading it back
//! reproduces the exact floats that were written.

use crate::estimator::ObservationSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const LOG_VERSION_LINE: &str = "# feedback-probe observation-log v1";
const COLUMNS: &str = "id,period,prior,noise,deployed,next";

/// A row's deployed value must reproduce prior + noise this tightly.
pub const DEPLOYED_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot access log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("log malformed at line {line}: {context}")]
    Format { line: usize, context: String },
    #[error("log integrity violated at row {row}: {context}")]
    Integrity { row: usize, context: String },
}

fn malformed(line: usize, context: impl Into<String>) -> LogError {
    LogError::Format {
        line,
        context: context.into(),
    }
}

/// Observations plus the 1-based period each row was collected in.
#[derive(Debug, Clone)]
pub struct ObservationLog {
    pub observations: ObservationSet,
    pub period: Vec<u32>,
}

impl ObservationLog {
    pub fn new(observations: ObservationSet, period: Vec<u32>) -> Result<Self, LogError> {
        if observations.len() != period.len() {
            return Err(LogError::Integrity {
                row: 0,
                context: format!(
                    "{} observations but {} period labels",
                    observations.len(),
                    period.len()
                ),
            });
        }
        check_periods(&period)?;
        Ok(ObservationLog {
            observations,
            period,
        })
    }

    pub fn single_period(observations: ObservationSet) -> Self {
        let period = vec![1; observations.len()];
        ObservationLog {
            observations,
            period,
        }
    }

    pub fn max_period(&self) -> u32 {
        self.period.last().copied().unwrap_or(0)
    }
}

// Periods are 1-based, nondecreasing, and gap-free.
fn check_periods(period: &[u32]) -> Result<(), LogError> {
    let mut previous = 1u32;
    for (row, &p) in period.iter().enumerate() {
        if row == 0 && p != 1 {
            return Err(LogError::Integrity {
                row,
                context: format!("first period is {p}, expected 1"),
            });
        }
        if p != previous && p != previous + 1 {
            return Err(LogError::Integrity {
                row,
                context: format!("period jumps from {previous} to {p}"),
            });
        }
        previous = p;
    }
    Ok(())
}

/// Write a log. Floats use the shortest decimal form that parses back
/// to the identical value, so a write/read cycle is exact.
pub fn write_log(path: &Path, log: &ObservationLog) -> Result<(), LogError> {
    let io_err = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "{LOG_VERSION_LINE}")?;
        writeln!(out, "{COLUMNS}")?;
        let obs = &log.observations;
        for i in 0..obs.len() {
            let prior = obs.prior()[i];
            let noise = obs.noise()[i];
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i,
                log.period[i],
                prior,
                noise,
                prior + noise,
                obs.next()[i]
            )?;
        }
        out.flush()
    };
    emit().map_err(io_err)
}

/// Read a log back, enforcing the format version, per-row consistency
/// of the deployed column, and contiguous period labels.
pub fn read_log(path: &Path) -> Result<ObservationLog, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == LOG_VERSION_LINE => {}
        Some((_, line)) => {
            return Err(malformed(
                1,
                format!("expected {LOG_VERSION_LINE:?}, found {line:?}"),
            ));
        }
        None => return Err(malformed(1, "file is empty")),
    }
    match lines.next() {
        Some((_, line)) if line == COLUMNS => {}
        other => {
            return Err(malformed(
                2,
                format!(
                    "expected columns {COLUMNS:?}, found {:?}",
                    other.map(|o| o.1)
                ),
            ));
        }
    }

    let mut prior = Vec::new();
    let mut noise = Vec::new();
    let mut next = Vec::new();
    let mut period = Vec::new();
    let mut last_id: Option<u64> = None;
    for (index, line) in lines {
        let line_no = index + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(malformed(
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad id {:?}", fields[0])))?;
        if let Some(prev) = last_id {
            if id <= prev {
                return Err(malformed(
                    line_no,
                    format!("id {id} does not increase past {prev}"),
                ));
            }
        }
        last_id = Some(id);
        let p: u32 = fields[1]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad period {:?}", fields[1])))?;
        let mut values = [0.0f64; 4];
        for (slot, field) in values.iter_mut().zip(&fields[2..]) {
            *slot = field
                .parse()
                .map_err(|_| malformed(line_no, format!("bad number {field:?}")))?;
        }
        let [y, v, deployed, z] = values;
        let row = prior.len();
        for (name, value) in [
            ("prior", y),
            ("noise", v),
            ("deployed", deployed),
            ("next", z),
        ] {
            if !value.is_finite() {
                return Err(LogError::Integrity {
                    row,
                    context: format!("{name} is not finite"),
                });
            }
        }
        if (deployed - (y + v)).abs() > DEPLOYED_TOLERANCE {
            return Err(LogError::Integrity {
                row,
                context: format!(
                    "deployed = {deployed} but prior + noise = {} (difference {:e})",
                    y + v,
                    deployed - (y + v)
                ),
            });
        }
        prior.push(y);
        noise.push(v);
        next.push(z);
        period.push(p);
    }
    if prior.is_empty() {
        return Err(malformed(3, "log has no rows"));
    }
    let observations =
        ObservationSet::new(prior, noise, next).map_err(|e| LogError::Integrity {
            row: 0,
            context: e.to_string(),
        })?;
    ObservationLog::new(observations, period)
}
