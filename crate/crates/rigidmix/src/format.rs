//! Newline-delimited JSON for observations and ground-truth labels.
//!
//! Observation records look like
//! `{"t": 0, "points": [{"x": [..], "v": [..], "f": [..]}]}` with `f`
//! optional; label records like `{"t": 0, "labels": [0, 1, -1]}` where `-1`
//! marks noise. Records are numbered `t = 0, 1, 2, ...` in file order and
//! blank lines are ignored. The spatial dimension is fixed by the first point
//! in the file.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rigidmix_core::model::PointObservation;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRecord {
    x: Vec<f64>,
    v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: usize,
    points: Vec<PointRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    t: usize,
    labels: Vec<i64>,
}

/// Parse JSON lines into `(line number, record)` pairs, checking that the
/// records are numbered consecutively from zero.
fn records<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R, frame_of: impl Fn(&T) -> usize) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let t = frame_of(&rec);
        if t != out.len() {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("frame index {t} out of order, expected {}", out.len()),
            });
        }
        out.push((line_no, rec));
    }
    Ok(out)
}

pub fn parse_observations<R: BufRead>(reader: R) -> Result<Vec<Vec<PointObservation>>> {
    let recs = records::<_, FrameRecord>(reader, |r| r.t)?;
    let mut dim: Option<usize> = None;
    let mut frames = Vec::with_capacity(recs.len());
    for (line, rec) in recs {
        let frame = rec.t;
        let mut feature_len: Option<Option<usize>> = None;
        let mut points = Vec::with_capacity(rec.points.len());
        for p in rec.points {
            let d = *dim.get_or_insert(p.x.len());
            for (what, len) in [("position", p.x.len()), ("velocity", p.v.len())] {
                if len != d {
                    return Err(Error::Dimension {
                        line,
                        frame,
                        what,
                        expected: d,
                        found: len,
                    });
                }
            }
            let f_len = p.f.as_ref().map(Vec::len);
            match feature_len {
                None => feature_len = Some(f_len),
                Some(expected) if expected != f_len => {
                    return Err(Error::Dimension {
                        line,
                        frame,
                        what: "feature",
                        expected: expected.unwrap_or(0),
                        found: f_len.unwrap_or(0),
                    })
                }
                _ => {}
            }
            let mut o = PointObservation::new(&p.x, &p.v);
            if let Some(f) = &p.f {
                o = o.with_feature(f);
            }
            points.push(o);
        }
        if let Some(d) = dim {
            let dim = rigidmix_core::model::Dim::from_value(d).map_err(|e| Error::Malformed {
                line,
                message: e.to_string(),
            })?;
            rigidmix_core::model::validate_observations(&points, dim).map_err(|e| Error::Malformed {
                line,
                message: format!("frame {frame}: {e}"),
            })?;
        }
        frames.push(points);
    }
    Ok(frames)
}

pub fn read_observations(path: &Path) -> Result<Vec<Vec<PointObservation>>> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    parse_observations(BufReader::new(file))
}

pub fn write_observations_to<W: Write>(mut w: W, frames: &[Vec<PointObservation>]) -> Result<()> {
    for (t, frame) in frames.iter().enumerate() {
        let rec = FrameRecord {
            t,
            points: frame
                .iter()
                .map(|o| PointRecord {
                    x: o.position.iter().copied().collect(),
                    v: o.velocity.iter().copied().collect(),
                    f: o.feature.as_ref().map(|f| f.iter().copied().collect()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_observations(path: &Path, frames: &[Vec<PointObservation>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    write_observations_to(&mut w, frames)?;
    w.flush().map_err(|e| io_error(path, e))
}

pub fn parse_labels<R: BufRead>(reader: R) -> Result<Vec<Vec<i64>>> {
    let recs = records::<_, LabelRecord>(reader, |r| r.t)?;
    for (line, rec) in &recs {
        if let Some(bad) = rec.labels.iter().find(|&&l| l < -1) {
            return Err(Error::Malformed {
                line: *line,
                message: format!("label {bad} is below -1"),
            });
        }
    }
    Ok(recs.into_iter().map(|(_, r)| r.labels).collect())
}

pub fn read_labels(path: &Path) -> Result<Vec<Vec<i64>>> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    parse_labels(BufReader::new(file))
}

pub fn write_labels(path: &Path, labels: &[Vec<i64>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    for (t, l) in labels.iter().enumerate() {
        serde_json::to_writer(&mut w, &LabelRecord { t, labels: l.clone() })?;
        w.write_all(b"\n").map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Vec<PointObservation>>> {
        parse_observations(text.as_bytes())
    }

    #[test]
    fn two_point_fixture() {
        let text = r#"{"t": 0, "points": [{"x": [1.5, -2.0], "v": [0.25, 0.0]}, {"x": [0.0, 3.0], "v": [-1.0, 0.5]}]}"#;
        let frames = parse(text).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0][0].position.as_slice(), &[1.5, -2.0]);
        assert_eq!(frames[0][0].velocity.as_slice(), &[0.25, 0.0]);
        assert_eq!(frames[0][1].position.as_slice(), &[0.0, 3.0]);
        assert_eq!(frames[0][1].velocity.as_slice(), &[-1.0, 0.5]);
        assert!(frames[0].iter().all(|o| o.feature.is_none()));
    }

    #[test]
    fn empty_input_is_no_frames() {
        assert!(parse("").unwrap().is_empty());
        let mut buf = Vec::new();
        write_observations_to(&mut buf, &[]).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn malformed_record_reports_its_line() {
        let text = "{\"t\": 0, \"points\": []}\n\n{\"t\": 1, \"points\": [{\"x\": [1]]}\n";
        match parse(text) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_names_the_frame() {
        let text = concat!(
            "{\"t\": 0, \"points\": [{\"x\": [0, 0], \"v\": [0, 0]}]}\n",
            "{\"t\": 1, \"points\": [{\"x\": [0, 0, 1], \"v\": [0, 0, 0]}]}\n"
        );
        let err = parse(text).unwrap_err();
        assert!(matches!(err, Error::Dimension { frame: 1, line: 2, expected: 2, found: 3, .. }));
        assert!(err.to_string().contains("frame 1"));
        let text = "{\"t\": 0, \"points\": [{\"x\": [0, 0], \"v\": [0]}]}\n";
        assert!(matches!(parse(text).unwrap_err(), Error::Dimension { frame: 0, what: "velocity", .. }));
    }

    #[test]
    fn frames_must_be_consecutive() {
        let text = "{\"t\": 1, \"points\": []}\n";
        assert!(matches!(parse(text), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn features_must_be_consistent() {
        let text = "{\"t\": 0, \"points\": [{\"x\": [0, 0], \"v\": [0, 0], \"f\": [1]}, {\"x\": [0, 0], \"v\": [0, 0]}]}\n";
        assert!(matches!(parse(text), Err(Error::Dimension { what: "feature", .. })));
    }

    #[test]
    fn labels_parse_and_reject_garbage() {
        let labels = parse_labels("{\"t\": 0, \"labels\": [0, 1, -1]}\n".as_bytes()).unwrap();
        assert_eq!(labels, vec![vec![0, 1, -1]]);
        assert!(parse_labels("{\"t\": 0, \"labels\": [-2]}\n".as_bytes()).is_err());
    }
}
