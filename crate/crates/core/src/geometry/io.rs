use std::fmt::Write as _;

use super::cloud::{LabeledPointCloud, PointCloud};
use super::vec3::Point3;
use super::GeometryError;

/// Supported ASCII cloud formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// One point per line, 3 (or 4 with label) whitespace-separated decimal
    /// fields; `#` comment lines ignored.
    XyzText,
    /// Minimal ascii PLY: `element vertex N`, properties x y z [label].
    PlyAscii,
}

/// Result of parsing: labeled when a 4th column is present.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedCloud {
    Plain(PointCloud),
    Labeled(LabeledPointCloud),
}

impl ParsedCloud {
    pub fn cloud(&self) -> PointCloud {
        match self {
            ParsedCloud::Plain(pc) => pc.clone(),
            ParsedCloud::Labeled(lc) => lc.cloud(),
        }
    }
}

pub fn parse_pointcloud(bytes: &[u8], format: CloudFormat) -> Result<ParsedCloud, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GeometryError::MalformedLine {
        row: 0,
        reason: format!("not utf-8: {e}"),
    })?;
    match format {
        CloudFormat::XyzText => parse_xyz(text),
        CloudFormat::PlyAscii => parse_ply(text),
    }
}

/// Parses xyz-text. The first data line fixes the column count (3 or 4);
/// later lines must match.
pub fn parse_xyz(text: &str) -> Result<ParsedCloud, GeometryError> {
    let mut points: Vec<Point3> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut arity: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let want = *arity.get_or_insert(fields.len());
        if fields.len() != want || !(want == 3 || want == 4) {
            return Err(GeometryError::MalformedLine {
                row,
                reason: format!("expected 3 or 4 fields, got {}", fields.len()),
            });
        }
        let mut coord = [0.0; 3];
        for (a, f) in fields[..3].iter().enumerate() {
            coord[a] = f.parse::<f64>().map_err(|e| GeometryError::MalformedLine {
                row,
                reason: format!("bad coordinate {f:?}: {e}"),
            })?;
        }
        points.push(coord);
        if want == 4 {
            let l = fields[3]
                .parse::<usize>()
                .map_err(|e| GeometryError::MalformedLine {
                    row,
                    reason: format!("bad label {:?}: {e}", fields[3]),
                })?;
            labels.push(l);
        }
    }
    build_parsed(points, labels)
}

fn parse_ply(text: &str) -> Result<ParsedCloud, GeometryError> {
    let mut lines = text.lines().enumerate();
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut header_end = 0usize;

    let (_, first) = lines.next().ok_or(GeometryError::EmptyCloud)?;
    if first.trim() != "ply" {
        return Err(GeometryError::MalformedLine {
            row: 1,
            reason: "missing ply magic".into(),
        });
    }
    for (i, line) in lines.by_ref() {
        let row = i + 1;
        let line = line.trim();
        if line.starts_with("comment") {
            continue;
        }
        if line.starts_with("format") {
            if !line.contains("ascii") {
                return Err(GeometryError::MalformedLine {
                    row,
                    reason: "only ascii ply supported".into(),
                });
            }
        } else if let Some(rest) = line.strip_prefix("element vertex ") {
            vertex_count = Some(rest.trim().parse().map_err(|e| GeometryError::MalformedLine {
                row,
                reason: format!("bad vertex count: {e}"),
            })?);
        } else if line.starts_with("element ") {
            return Err(GeometryError::MalformedLine {
                row,
                reason: "only vertex elements supported".into(),
            });
        } else if line.starts_with("property") {
            let name = line.split_whitespace().last().unwrap_or("").to_string();
            properties.push(name);
        } else if line == "end_header" {
            header_end = row;
            break;
        }
    }
    let n = vertex_count.ok_or(GeometryError::MalformedLine {
        row: header_end,
        reason: "missing element vertex".into(),
    })?;
    let has_label = match properties.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "label"] => true,
        _ => {
            return Err(GeometryError::MalformedLine {
                row: header_end,
                reason: format!("unsupported property layout {properties:?}"),
            })
        }
    };

    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        if points.len() == n {
            break;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let want = if has_label { 4 } else { 3 };
        if fields.len() != want {
            return Err(GeometryError::MalformedLine {
                row,
                reason: format!("expected {want} fields, got {}", fields.len()),
            });
        }
        let mut coord = [0.0; 3];
        for (a, f) in fields[..3].iter().enumerate() {
            coord[a] = f.parse().map_err(|e| GeometryError::MalformedLine {
                row,
                reason: format!("bad coordinate {f:?}: {e}"),
            })?;
        }
        points.push(coord);
        if has_label {
            labels.push(fields[3].parse().map_err(|e| GeometryError::MalformedLine {
                row,
                reason: format!("bad label: {e}"),
            })?);
        }
    }
    if points.len() != n {
        return Err(GeometryError::MalformedLine {
            row: 0,
            reason: format!("expected {n} vertices, found {}", points.len()),
        });
    }
    build_parsed(points, labels)
}

fn build_parsed(points: Vec<Point3>, labels: Vec<usize>) -> Result<ParsedCloud, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    if labels.is_empty() {
        Ok(ParsedCloud::Plain(PointCloud { points }))
    } else {
        let label_count = labels.iter().copied().max().unwrap_or(0) + 1;
        Ok(ParsedCloud::Labeled(LabeledPointCloud::new(
            points,
            labels,
            label_count,
        )?))
    }
}

/// 9-significant-digit decimal used by both writers; values representable at
/// this precision round-trip bit-exactly through parse.
fn fmt_coord(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_xyz(pc: &PointCloud, labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", fmt_coord(p[0]), fmt_coord(p[1]), fmt_coord(p[2]));
        if let Some(ls) = labels {
            let _ = write!(out, " {}", ls[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_ply(pc: &PointCloud, labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", pc.points.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if labels.is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in pc.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", fmt_coord(p[0]), fmt_coord(p[1]), fmt_coord(p[2]));
        if let Some(ls) = labels {
            let _ = write!(out, " {}", ls[i]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_point_cloud() {
        let parsed = parse_xyz("0 0 0\n1 0 0").unwrap();
        assert_eq!(
            parsed,
            ParsedCloud::Plain(PointCloud {
                points: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
            })
        );
    }

    #[test]
    fn empty_input_is_empty_cloud() {
        assert_eq!(parse_xyz("").unwrap_err(), GeometryError::EmptyCloud);
        assert_eq!(
            parse_xyz("# just a comment\n").unwrap_err(),
            GeometryError::EmptyCloud
        );
    }

    #[test]
    fn fourth_column_becomes_labels() {
        // expected labels derived by hand from the raw file
        let parsed = parse_xyz("0 0 0 2\n1 1 1 0").unwrap();
        match parsed {
            ParsedCloud::Labeled(lc) => {
                assert_eq!(lc.labels, vec![2, 0]);
                assert_eq!(lc.label_count, 3);
            }
            _ => panic!("expected labels"),
        }
    }

    #[test]
    fn malformed_line_reports_row() {
        let err = parse_xyz("0 0 0\nnot a point\n").unwrap_err();
        assert!(matches!(err, GeometryError::MalformedLine { row: 2, .. }));
    }

    #[test]
    fn mixed_arity_rejected() {
        let err = parse_xyz("0 0 0\n1 1 1 4\n").unwrap_err();
        assert!(matches!(err, GeometryError::MalformedLine { row: 2, .. }));
    }

    #[test]
    fn ply_round_trip_with_labels() {
        let pc = PointCloud {
            points: vec![[0.25, -1.5, 3.0], [1.0, 2.0, -0.125]],
        };
        let labels = vec![1usize, 0];
        let text = write_ply(&pc, Some(&labels));
        let parsed = parse_pointcloud(text.as_bytes(), CloudFormat::PlyAscii).unwrap();
        match parsed {
            ParsedCloud::Labeled(lc) => {
                assert_eq!(lc.points, pc.points);
                assert_eq!(lc.labels, labels);
            }
            _ => panic!("expected labels"),
        }
    }

    #[test]
    fn serialize_parse_idempotent_after_first_round() {
        // values representable at 9 significant digits round-trip bit-exactly
        let pc = PointCloud {
            points: vec![[0.123456789, -9.87654321e-3, 1.0e8]],
        };
        let once = parse_xyz(&write_xyz(&pc, None)).unwrap().cloud();
        let twice = parse_xyz(&write_xyz(&once, None)).unwrap().cloud();
        assert_eq!(write_xyz(&once, None), write_xyz(&twice, None));
        for (a, b) in once.points.iter().zip(&twice.points) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }
}
