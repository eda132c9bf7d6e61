//! File formats: networks, location pools, results CSV, violation logs and TSPLIB export.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, LocationPool, Network, NodeId, Point};
use crate::mesh::Violation;
use crate::metrics::MetricsRecord;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return IoError::Io(e.into());
        }
        IoError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        IoError::Csv {
            line,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub environment_index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkDocument {
    nodes: Vec<Point>,
    links: Vec<[NodeId; 2]>,
    #[serde(default)]
    meta: NetworkMeta,
}

/// Nodes by id, links with the smaller id first in lexicographic order.
pub fn network_to_json(net: &Network, meta: NetworkMeta) -> String {
    let doc = NetworkDocument {
        nodes: net.nodes().copied().collect(),
        links: net.link_keys().into_iter().map(|k| [k.0, k.1]).collect(),
        meta,
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

pub fn parse_network(text: &str) -> Result<(Network, NetworkMeta), IoError> {
    let doc: NetworkDocument = serde_json::from_str(text)?;
    let mut net = Network::with_nodes(doc.nodes)?;
    for [a, b] in doc.links {
        net.add_link(a, b)?;
    }
    Ok((net, doc.meta))
}

pub fn pool_to_json(pool: &LocationPool) -> String {
    serde_json::to_string_pretty(pool).expect("plain data serializes")
}

/// Pool validation failures (duplicates, points outside the region) are reported with their position too.
pub fn parse_pool(text: &str) -> Result<LocationPool, IoError> {
    Ok(serde_json::from_str(text)?)
}

/// Appends one violation record as a JSON line.
pub fn append_violation<W: Write>(out: &mut W, violation: &Violation) -> Result<(), IoError> {
    serde_json::to_writer(&mut *out, violation)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, rows: &[MetricsRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(MetricsRecord::COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<MetricsRecord>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(MetricsRecord::COLUMNS) {
        return Err(IoError::Csv {
            line: 1,
            message: format!("unexpected header, expected {}", MetricsRecord::COLUMNS.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(IoError::from)).collect()
}

/// Generic CSV writer for serializable rows.
pub fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// TSPLIB instance with Euclidean 2D weights; nodes are numbered from 1 in input order.
pub fn export_tsplib(name: &str, points: &[Point]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "NAME: {name}");
    let _ = writeln!(s, "TYPE: TSP");
    let _ = writeln!(s, "DIMENSION: {}", points.len());
    let _ = writeln!(s, "EDGE_WEIGHT_TYPE: EUC_2D");
    let _ = writeln!(s, "NODE_COORD_SECTION");
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(s, "{} {} {}", i + 1, p.x, p.y);
    }
    s.push_str("EOF\n");
    s
}
