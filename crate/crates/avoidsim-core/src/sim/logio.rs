//! Closed-loop log CSV format.
//!
//! Fixed column order `t,x,y,psi,vx,vy,r,delta_f,a_lat,beta,plan_offset,
//! j_all,comfort_class`, values at 9 significant digits. Metadata
//! (config hash, seed, version) rides in leading `#` comment lines; no
//! timestamps, so identical runs produce identical bytes.

use super::{LogMeta, LogRow, SimLog};
use crate::comfort::ComfortClass;
use thiserror::Error;

pub const LOG_HEADER: &str = "t,x,y,psi,vx,vy,r,delta_f,a_lat,beta,plan_offset,j_all,comfort_class";

#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("log parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn to_csv(log: &SimLog) -> String {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={}\n", log.meta.config_hash));
    out.push_str(&format!("# seed={}\n", log.meta.seed));
    out.push_str(&format!("# version={}\n", log.meta.version));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in &log.rows {
        let nums = [
            r.t, r.x, r.y, r.psi, r.vx, r.vy, r.r, r.delta_f, r.a_lat, r.beta, r.plan_offset,
            r.j_all,
        ];
        let joined: Vec<String> = nums.iter().map(|v| fmt9(*v)).collect();
        out.push_str(&joined.join(","));
        out.push(',');
        out.push_str(r.comfort_class.label());
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str) -> Result<SimLog, LogIoError> {
    let mut meta = LogMeta { config_hash: String::new(), seed: 0, version: String::new() };
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((k, v)) = comment.split_once('=') {
                match k.trim() {
                    "config_hash" => meta.config_hash = v.trim().to_string(),
                    "seed" => {
                        meta.seed = v.trim().parse().map_err(|e| LogIoError::Parse {
                            line: lineno,
                            message: format!("bad seed: {e}"),
                        })?
                    }
                    "version" => meta.version = v.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if line != LOG_HEADER {
                return Err(LogIoError::Parse {
                    line: lineno,
                    message: format!("expected header `{LOG_HEADER}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(LogIoError::Parse {
                line: lineno,
                message: format!("expected 13 fields, got {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 12];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|e| LogIoError::Parse {
                line: lineno,
                message: format!("bad number `{field}`: {e}"),
            })?;
        }
        let comfort_class = ComfortClass::from_label(fields[12]).ok_or(LogIoError::Parse {
            line: lineno,
            message: format!("unknown comfort class `{}`", fields[12]),
        })?;
        rows.push(LogRow {
            t: nums[0],
            x: nums[1],
            y: nums[2],
            psi: nums[3],
            vx: nums[4],
            vy: nums[5],
            r: nums[6],
            delta_f: nums[7],
            a_lat: nums[8],
            beta: nums[9],
            plan_offset: nums[10],
            j_all: nums[11],
            comfort_class,
        });
    }
    if !saw_header {
        return Err(LogIoError::Parse { line: 1, message: "missing header".into() });
    }
    Ok(SimLog { rows, meta })
}

pub fn write_csv(log: &SimLog, path: &std::path::Path) -> Result<(), LogIoError> {
    Ok(std::fs::write(path, to_csv(log))?)
}

pub fn read_csv(path: &std::path::Path) -> Result<SimLog, LogIoError> {
    from_csv(&std::fs::read_to_string(path)?)
}
