//! Segmented point-cloud frames and their line-based text format.
//!
//! ```text
//! FRAME <frame_id> <point_count> <segment_count>
//! <x> <y> <z> <segment_id>            (point_count lines)
//! GT_CLASS <segment_id> <class_label> (optional)
//! GT_REL <src_seg> <dst_seg> <label>  (optional)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub frame_id: u64,
    pub points: Vec<Point3>,
    pub segment_ids: Vec<u32>,
    pub gt_class: BTreeMap<u32, String>,
    pub gt_relations: Vec<(u32, u32, String)>,
}

impl Frame {
    pub fn segments(&self) -> BTreeSet<u32> {
        self.segment_ids.iter().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.segment_ids.len() {
            return Err(Error::Geometry(format!(
                "{} points but {} segment ids",
                self.points.len(),
                self.segment_ids.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Geometry(format!("point {i} is not finite")));
        }
        let segs = self.segments();
        let referenced = self
            .gt_class
            .keys()
            .chain(self.gt_relations.iter().flat_map(|(a, b, _)| [a, b]));
        for s in referenced {
            if !segs.contains(s) {
                return Err(Error::Geometry(format!(
                    "ground truth references unknown segment {s}"
                )));
            }
        }
        for label in self
            .gt_class
            .values()
            .chain(self.gt_relations.iter().map(|r| &r.2))
        {
            if label.is_empty() || label.contains(char::is_whitespace) {
                return Err(Error::Geometry(format!("invalid label `{label}`")));
            }
        }
        Ok(())
    }

    /// Renders the frame in the text format. Coordinates use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 32 + 64);
        let _ = writeln!(
            out,
            "FRAME {} {} {}",
            self.frame_id,
            self.points.len(),
            self.segments().len()
        );
        for (p, s) in self.points.iter().zip(&self.segment_ids) {
            let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, s);
        }
        for (s, c) in &self.gt_class {
            let _ = writeln!(out, "GT_CLASS {s} {c}");
        }
        for (a, b, r) in &self.gt_relations {
            let _ = writeln!(out, "GT_REL {a} {b} {r}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_frame(BufReader::new(file), path)
}

pub fn parse_frame(reader: impl BufRead, path: &Path) -> Result<Frame> {
    let mut lines = reader.lines().enumerate();
    let perr = |line: usize, msg: String| Error::parse(path, line + 1, msg);

    let (_, header) = lines
        .next()
        .ok_or_else(|| perr(0, "missing FRAME header".into()))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != "FRAME" {
        return Err(perr(0, format!("malformed header `{header}`")));
    }
    let num = |s: &str, what: &str| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|_| perr(0, format!("invalid {what} `{s}`")))
    };
    let frame_id = num(fields[1], "frame id")?;
    let point_count = num(fields[2], "point count")? as usize;
    let segment_count = num(fields[3], "segment count")? as usize;

    let mut frame = Frame {
        frame_id,
        points: Vec::with_capacity(point_count),
        segment_ids: Vec::with_capacity(point_count),
        ..Frame::default()
    };

    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        if frame.points.len() < point_count {
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 4 {
                return Err(perr(
                    lineno,
                    format!("expected `x y z segment`, got `{line}`"),
                ));
            }
            let coord = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .parse()
                    .map_err(|_| perr(lineno, format!("non-numeric coordinate `{s}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(perr(lineno, format!("non-finite coordinate `{s}`")))
                }
            };
            let p = Point3::new(coord(f[0])?, coord(f[1])?, coord(f[2])?);
            let seg: u32 = f[3]
                .parse()
                .map_err(|_| perr(lineno, format!("invalid segment id `{}`", f[3])))?;
            frame.points.push(p);
            frame.segment_ids.push(seg);
            continue;
        }
        let f: Vec<&str> = line.split(' ').collect();
        let seg = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| perr(lineno, format!("invalid segment id `{s}`")))
        };
        match f.as_slice() {
            ["GT_CLASS", s, label] => {
                frame.gt_class.insert(seg(s)?, (*label).to_string());
            }
            ["GT_REL", a, b, label] => {
                frame
                    .gt_relations
                    .push((seg(a)?, seg(b)?, (*label).to_string()));
            }
            _ if f.len() == 4 && f[0].parse::<f64>().is_ok() => {
                return Err(perr(
                    lineno,
                    format!("more point lines than the declared {point_count}"),
                ));
            }
            _ => return Err(perr(lineno, format!("unrecognized line `{line}`"))),
        }
    }

    if frame.points.len() != point_count {
        return Err(perr(
            0,
            format!(
                "header declares {point_count} points, file has {}",
                frame.points.len()
            ),
        ));
    }
    let distinct = frame.segments().len();
    if distinct != segment_count {
        return Err(perr(
            0,
            format!("header declares {segment_count} segments, file has {distinct}"),
        ));
    }
    frame.validate().map_err(|e| perr(0, e.to_string()))?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn parse(text: &str) -> Result<Frame> {
        parse_frame(Cursor::new(text), Path::new("test.frame"))
    }

    #[test]
    fn empty_frame() {
        let f = parse("FRAME 3 0 0\n").unwrap();
        assert_eq!(f.frame_id, 3);
        assert!(f.points.is_empty() && f.segment_ids.is_empty());
    }

    #[test]
    fn count_mismatch_is_error() {
        assert!(parse("FRAME 0 2 1\n0 0 0 1\n").is_err());
        assert!(parse("FRAME 0 1 1\n0 0 0 1\n1 1 1 1\n").is_err());
        assert!(parse("FRAME 0 1 2\n0 0 0 1\n").is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(parse("FRAMES 0 0 0\n").is_err());
        assert!(parse("FRAME 0 1 1\n0 abc 0 1\n").is_err());
        assert!(parse("FRAME 0 1 1\n0 NaN 0 1\n").is_err());
        assert!(parse("FRAME 0 1 1\n0 0 0 1\nGT_CLASS 2 cup\n").is_err());
        assert!(parse("FRAME 0 1 1\n0 0 0 1\nBOGUS\n").is_err());
    }

    #[test]
    fn trailer_parsed() {
        let f = parse("FRAME 1 2 2\n0 0 0 4\n1 0.5 -2 7\nGT_CLASS 4 table\nGT_REL 4 7 supports\n")
            .unwrap();
        assert_eq!(f.gt_class[&4], "table");
        assert_eq!(f.gt_relations, vec![(4, 7, "supports".to_string())]);
        assert_eq!(f.points[1], Point3::new(1.0, 0.5, -2.0));
    }

    #[test]
    fn text_round_trip() {
        let frame = Frame {
            frame_id: 9,
            points: vec![
                Point3::new(0.1, 0.2 + 1e-17, -3.3),
                Point3::new(1.0 / 3.0, 2e-9, 5.0),
                Point3::new(-0.0, 7.25, 1e10),
            ],
            segment_ids: vec![2, 5, 2],
            gt_class: [(2, "cup".to_string())].into(),
            gt_relations: vec![(5, 2, "supports".into())],
        };
        assert_eq!(parse(&frame.to_text()).unwrap(), frame);
    }
}
