//! Run logs as JSON lines: a header, one line per block, then realignments,
//! zones and the closing drift state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{BlockRecord, DriftState, Realignment, RunLog, Zone};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header { block_length: f64, blocks: usize },
    Block(BlockRecord),
    Realignment(Realignment),
    Zone(Zone),
    End { final_drift: DriftState },
}

pub fn runlog_to_string(log: &RunLog) -> Result<String> {
    let mut out = String::new();
    let mut push = |line: &Line| -> Result<()> {
        out.push_str(&serde_json::to_string(line)?);
        out.push('\n');
        Ok(())
    };
    push(&Line::Header {
        block_length: log.block_length,
        blocks: log.blocks.len(),
    })?;
    for b in &log.blocks {
        push(&Line::Block(b.clone()))?;
    }
    for r in &log.realignments {
        push(&Line::Realignment(r.clone()))?;
    }
    for z in &log.zones {
        push(&Line::Zone(z.clone()))?;
    }
    push(&Line::End {
        final_drift: log.final_drift,
    })?;
    Ok(out)
}

pub fn write_runlog(path: &Path, log: &RunLog) -> Result<()> {
    super::write_atomic(path, runlog_to_string(log)?.as_bytes())
}

pub fn parse_runlog(text: &str) -> Result<RunLog> {
    let mut header = None;
    let mut log = RunLog {
        block_length: 0.0,
        blocks: Vec::new(),
        zones: Vec::new(),
        realignments: Vec::new(),
        final_drift: DriftState::default(),
    };
    let mut ended = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        if ended {
            return Err(err("content after the end record".into()));
        }
        let rec: Line = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        match (rec, header.is_some()) {
            (Line::Header { block_length, blocks }, false) => {
                log.block_length = block_length;
                header = Some(blocks);
            }
            (Line::Header { .. }, true) => return Err(err("duplicate header".into())),
            (_, false) => return Err(err("first record must be the header".into())),
            (Line::Block(b), true) => {
                if b.index != log.blocks.len() {
                    return Err(err(format!("block {} out of order", b.index)));
                }
                log.blocks.push(b);
            }
            (Line::Realignment(r), true) => log.realignments.push(r),
            (Line::Zone(z), true) => log.zones.push(z),
            (Line::End { final_drift }, true) => {
                log.final_drift = final_drift;
                ended = true;
            }
        }
    }
    if !ended {
        return Err(Error::invalid("run log is truncated (no end record)"));
    }
    if header != Some(log.blocks.len()) {
        return Err(Error::invalid(format!(
            "header announces {} blocks, found {}",
            header.unwrap_or(0),
            log.blocks.len()
        )));
    }
    Ok(log)
}

pub fn read_runlog(path: &Path) -> Result<RunLog> {
    parse_runlog(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_protocol, CircuitConfig};

    fn sample_log() -> RunLog {
        let mut c = CircuitConfig::default();
        c.drift_sigma = 0.08;
        c.stabilizer.tracking = false;
        c.stabilizer.settle_blocks = 2;
        c.success_window_blocks = 2;
        run_protocol(&c, 6.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let log = sample_log();
        assert!(!log.realignments.is_empty());
        let text = runlog_to_string(&log).unwrap();
        assert_eq!(text.lines().count(), 2 + log.blocks.len() + log.realignments.len() + log.zones.len());
        let back = parse_runlog(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(runlog_to_string(&back).unwrap(), text);
    }

    #[test]
    fn damaged_logs_are_rejected() {
        let text = runlog_to_string(&sample_log()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // truncated
        assert!(parse_runlog(&lines[..lines.len() - 1].join("\n")).is_err());
        // garbage on line 3
        let mut bad = lines.clone();
        bad[2] = "{\"kind\": \"block\", \"index\": \"x\"}";
        match parse_runlog(&bad.join("\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        // missing header
        assert!(parse_runlog(&lines[1..].join("\n")).is_err());
    }
}
