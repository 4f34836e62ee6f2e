use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::domain::{seed, EapId, Request, ServiceId, SimConfig};

/// One CSV row: `arrival_ms,service,deadline_ms,work,eap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub arrival_ms: u64,
    pub service: u32,
    pub deadline_ms: u64,
    pub work: f64,
    pub eap: Option<u32>,
}

pub fn parse_trace(path: &Path, config: &SimConfig) -> Result<Vec<Request>, TraceError> {
    let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_reader(file, config)
}

pub fn parse_trace_str(text: &str, config: &SimConfig) -> Result<Vec<Request>, TraceError> {
    parse_reader(text.as_bytes(), config)
}

/// Rows without an eAP are assigned one uniformly at random, seeded from
/// the config seed.
fn parse_reader<R: Read>(reader: R, config: &SimConfig) -> Result<Vec<Request>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let w = config.num_services();
    let b = config.topology.num_eaps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, seed::TRACE));
    let mut out: Vec<Request> = Vec::new();
    let mut last_ms = 0;
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| TraceError::Malformed {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: TraceRow =
            record
                .deserialize(Some(&headers))
                .map_err(|e| TraceError::Malformed {
                    line,
                    message: e.to_string(),
                })?;
        if row.service == 0 || row.service as usize > w {
            return Err(TraceError::ServiceOutOfRange {
                line,
                service: row.service,
                max: w,
            });
        }
        if row.arrival_ms < last_ms {
            return Err(TraceError::NonMonotone { line });
        }
        last_ms = row.arrival_ms;
        if !(row.work.is_finite() && row.work > 0.0) {
            return Err(TraceError::Malformed {
                line,
                message: format!("work must be a positive number, got {}", row.work),
            });
        }
        let eap = match row.eap {
            Some(e) if e == 0 || e as usize > b => {
                return Err(TraceError::EapOutOfRange {
                    line,
                    eap: e,
                    max: b,
                })
            }
            Some(e) => EapId(e),
            None => EapId::from_index(rng.random_range(0..b)),
        };
        out.push(Request {
            id: out.len() as u64,
            service: ServiceId(row.service),
            arrival_time: row.arrival_ms as f64 / 1000.0,
            deadline: row.deadline_ms as f64 / 1000.0,
            work: row.work,
            admitting_eap: eap,
        });
    }
    Ok(out)
}

/// Writes requests in the trace CSV format, always including the eAP.
pub fn write_trace_csv<W: Write>(writer: W, requests: &[Request]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in requests {
        wtr.serialize(TraceRow {
            arrival_ms: (r.arrival_time * 1000.0).round() as u64,
            service: r.service.0,
            deadline_ms: (r.deadline * 1000.0).round() as u64,
            work: r.work,
            eap: Some(r.admitting_eap.0),
        })?;
    }
    wtr.flush()?;
    Ok(())
}
