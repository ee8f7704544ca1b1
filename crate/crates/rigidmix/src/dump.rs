//! Versioned state dumps, one JSON record per line.
//!
//! The first line is a header
//! `{"format_version": 1, "seed": .., "clusters": .., "particles": .., "hyper": {..}}`
//! holding the hyperparameters actually used. Each following line is one frame
//! `{"t": .., "used_indices": [..], "state": {..}}`, where `used_indices` lists
//! the observations of that frame the state's point assignments refer to.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rigidmix_core::model::{HyperParams, ModelState};
use serde::{Deserialize, Serialize};

use crate::dto::{HyperDto, StateDto};
use crate::error::{io_error, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    seed: u64,
    clusters: usize,
    particles: usize,
    hyper: HyperDto,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    t: usize,
    used_indices: Vec<usize>,
    state: StateDto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpFrame {
    pub t: usize,
    pub used_indices: Vec<usize>,
    pub state: ModelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDump {
    pub seed: u64,
    pub hyper: HyperParams,
    pub frames: Vec<DumpFrame>,
}

impl StateDump {
    pub fn clusters(&self) -> usize {
        self.hyper.cluster_concentration.len()
    }

    pub fn particles(&self) -> usize {
        self.hyper.particle_concentration.len()
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format_version: FORMAT_VERSION,
            seed: self.seed,
            clusters: self.clusters(),
            particles: self.particles(),
            hyper: (&self.hyper).into(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for f in &self.frames {
            let line = FrameLine {
                t: f.t,
                used_indices: f.used_indices.clone(),
                state: (&f.state).into(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let malformed = |line: usize, e: &dyn std::fmt::Display| Error::Malformed {
            line,
            message: e.to_string(),
        };
        let (i, first) = lines.next().ok_or_else(|| Error::Dump("missing header line".into()))?;
        let first = first.map_err(|e| malformed(i + 1, &e))?;
        let version: serde_json::Value = serde_json::from_str(&first).map_err(|e| malformed(i + 1, &e))?;
        match version.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Dump(format!("unsupported format_version {v}"))),
            None => return Err(Error::Dump("header lacks format_version".into())),
        }
        let header: Header = serde_json::from_value(version).map_err(|e| malformed(i + 1, &e))?;
        let hyper = header.hyper.to_core()?;
        hyper.validate(header.clusters, header.particles)?;
        let mut frames = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| malformed(i + 1, &e))?;
            let rec: FrameLine = serde_json::from_str(&line).map_err(|e| malformed(i + 1, &e))?;
            if rec.used_indices.len() != rec.state.point_to_particle.len() {
                return Err(malformed(i + 1, &"used_indices and point assignments differ in length"));
            }
            let state = rec.state.to_core().map_err(|e| malformed(i + 1, &e))?;
            if state.num_clusters() != header.clusters || state.num_particles() != header.particles {
                return Err(malformed(i + 1, &"state size disagrees with the header"));
            }
            frames.push(DumpFrame {
                t: rec.t,
                used_indices: rec.used_indices,
                state,
            });
        }
        Ok(Self {
            seed: header.seed,
            hyper,
            frames,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = BufWriter::new(file);
        self.to_writer(&mut w)?;
        w.flush().map_err(|e| io_error(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
        Self::from_reader(BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rigidmix_core::model::{sample_forward, Dim};

    fn dump() -> StateDump {
        let hyper = HyperParams::defaults(Dim::Two, 2, 6);
        let (s, _) = sample_forward(&hyper, 2, 6, 25, 3).unwrap();
        StateDump {
            seed: 3,
            hyper,
            frames: vec![DumpFrame {
                t: 0,
                used_indices: (0..25).collect(),
                state: s,
            }],
        }
    }

    #[test]
    fn dump_round_trips() {
        let d = dump();
        let mut buf = Vec::new();
        d.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"format_version\":1,"));
        assert_eq!(text.lines().count(), 2);
        assert_eq!(StateDump::from_reader(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut buf = Vec::new();
        dump().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(StateDump::from_reader(text.as_bytes()), Err(Error::Dump(m)) if m.contains('2')));
    }

    #[test]
    fn corrupted_frame_reports_its_line() {
        let mut buf = Vec::new();
        dump().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"particle_weights\":[", "\"particle_weights\":[7.0,", 1);
        assert!(matches!(StateDump::from_reader(text.as_bytes()), Err(Error::Malformed { line: 2, .. })));
    }
}
