//! Long-format agent-semester records on disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SemesterRecord, TerminalEvent};
use crate::policy::{parse_scenario_id, PolicyScenario};
use crate::population::Group;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: record {line}: {message}")]
    Malformed { path: String, line: u64, message: String },
    #[error("record file name {0:?} is not <scenario>_<replication>.csv[.gz]")]
    BadName(String),
}

pub const HEADER: [&str; 21] = [
    "scenario_id",
    "replication",
    "agent_id",
    "semester",
    "archetype",
    "group",
    "n_enrolled",
    "n_passed_cw",
    "n_approved_new",
    "n_failed",
    "n_approved_total",
    "stress",
    "belonging",
    "backbone_completion",
    "blocked_credits",
    "distance_to_graduation",
    "bottleneck_approval_ratio",
    "prerequisites_met_ratio",
    "mean_in_degree_approved",
    "mean_out_degree_approved",
    "terminal_event",
];

/// One row of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub scenario_id: String,
    pub replication: u32,
    pub agent_id: u32,
    pub semester: u32,
    pub archetype: String,
    pub group: String,
    pub n_enrolled: u32,
    pub n_passed_cw: u32,
    pub n_approved_new: u32,
    pub n_failed: u32,
    pub n_approved_total: u32,
    pub stress: f64,
    pub belonging: f64,
    pub backbone_completion: f64,
    pub blocked_credits: u32,
    pub distance_to_graduation: f64,
    pub bottleneck_approval_ratio: f64,
    pub prerequisites_met_ratio: f64,
    pub mean_in_degree_approved: f64,
    pub mean_out_degree_approved: f64,
    pub terminal_event: String,
}

impl LongRow {
    pub fn from_record(rec: &SemesterRecord<f64>, archetype_id: &str) -> Self {
        let s = &rec.snapshot;
        LongRow {
            scenario_id: rec.scenario.id(),
            replication: rec.replication,
            agent_id: rec.agent_id,
            semester: rec.semester,
            archetype: archetype_id.to_string(),
            group: rec.group.as_str().to_string(),
            n_enrolled: rec.enrolled.len() as u32,
            n_passed_cw: rec.passed_coursework.len() as u32,
            n_approved_new: rec.approved_by_exam.len() as u32,
            n_failed: rec.failed.len() as u32,
            n_approved_total: rec.n_approved_total,
            stress: rec.stress,
            belonging: rec.belonging,
            backbone_completion: s.backbone_completion,
            blocked_credits: s.blocked_credits,
            distance_to_graduation: s.distance_to_graduation,
            bottleneck_approval_ratio: s.bottleneck_approval_ratio,
            prerequisites_met_ratio: s.prerequisites_met_ratio,
            mean_in_degree_approved: s.mean_in_degree_approved,
            mean_out_degree_approved: s.mean_out_degree_approved,
            terminal_event: rec.terminal_event.as_str().to_string(),
        }
    }

    pub fn event(&self) -> Option<TerminalEvent> {
        TerminalEvent::parse(&self.terminal_event)
    }

    pub fn group(&self) -> Option<Group> {
        self.group.parse().ok()
    }
}

/// `<dir>/<scenario>_<rep>.csv` or `.csv.gz`.
pub fn record_path(dir: &Path, scenario: PolicyScenario, replication: u32, compress: bool) -> PathBuf {
    let ext = if compress { "csv.gz" } else { "csv" };
    dir.join(format!("{}_{replication}.{ext}", scenario.id()))
}

/// Parses a record file name back into its (scenario, replication) key.
pub fn parse_record_name(name: &str) -> Option<(PolicyScenario, u32)> {
    let stem = name.strip_suffix(".csv.gz").or_else(|| name.strip_suffix(".csv"))?;
    let (scenario, rep) = stem.split_once('_')?;
    Some((parse_scenario_id(scenario).ok()?, rep.parse().ok()?))
}

/// Record files in `dir`, sorted by (scenario index, replication).
pub fn list_record_files(dir: &Path) -> Result<Vec<(PolicyScenario, u32, PathBuf)>, RecordError> {
    let io = |e: std::io::Error| RecordError::Io { path: dir.display().to_string(), message: e.to_string() };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if !(name.ends_with(".csv") || name.ends_with(".csv.gz")) {
            continue;
        }
        let (s, r) = parse_record_name(&name).ok_or(RecordError::BadName(name))?;
        out.push((s, r, path));
    }
    out.sort_by_key(|(s, r, _)| (s.index(), *r));
    Ok(out)
}

/// Serialises rows to CSV bytes, gzip-compressed when asked. The gzip
/// header carries no timestamp or file name, so output is reproducible.
pub fn encode(rows: &[LongRow], compress: bool) -> Vec<u8> {
    let mut csv_bytes = Vec::with_capacity(rows.len() * 160);
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut csv_bytes);
        w.write_record(HEADER).expect("in-memory write");
        for row in rows {
            w.serialize(row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    if !compress {
        return csv_bytes;
    }
    let mut enc: GzEncoder<Vec<u8>> = GzBuilder::new().mtime(0).write(Vec::new(), Compression::new(6));
    enc.write_all(&csv_bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

pub fn write_rows(path: &Path, rows: &[LongRow], compress: bool) -> Result<(), RecordError> {
    let io = |e: std::io::Error| RecordError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&encode(rows, compress)).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_rows(path: &Path) -> Result<Vec<LongRow>, RecordError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| RecordError::Io { path: name.clone(), message: e.to_string() })?;
    let reader: Box<dyn Read> = if name.ends_with(".gz") {
        Box::new(MultiGzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| malformed(&name, 1, e))?;
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(RecordError::Malformed { path: name, line: 1, message: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize::<LongRow>().enumerate() {
        rows.push(row.map_err(|e| malformed(&name, i as u64 + 2, e))?);
    }
    Ok(rows)
}

fn malformed(path: &str, line: u64, e: csv::Error) -> RecordError {
    RecordError::Malformed { path: path.into(), line, message: e.to_string() }
}
