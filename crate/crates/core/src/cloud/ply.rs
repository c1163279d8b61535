//! PLY reader/writer for coloured point clouds.
//!
//! Accepted dialects are `ascii 1.0` and `binary_little_endian 1.0`. The vertex
//! element must carry `x y z` (float or double) and `red green blue` (uchar);
//! further scalar vertex properties are skipped on read. The writer always
//! emits `float x,y,z` followed by `uchar red,green,blue`, so positions are
//! rounded to `f32` on save. A `comment frame_index <t>` header line carries the
//! frame index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Point, PointCloudFrame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    count: usize,
    frame_index: usize,
    props: Vec<Scalar>,
    // property slot for x, y, z, red, green, blue
    slots: [usize; 6],
    header_lines: usize,
}

const REQUIRED: [&str; 6] = ["x", "y", "z", "red", "green", "blue"];

fn parse_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut format = None;
    let mut count = None;
    let mut frame_index = 0;
    let mut props: Vec<(Scalar, String)> = Vec::new();
    let mut in_vertex = false;

    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        lineno += 1;
        if read == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: "unexpected end of file before end_header".into(),
            });
        }
        let text = line.trim_end_matches(['\n', '\r']);
        let mut tok = text.split_whitespace();
        let head = tok.next().unwrap_or("");
        let bad = |msg: &str| Error::Parse {
            line: lineno,
            msg: format!("{msg}: `{text}`"),
        };
        if lineno == 1 {
            if text.trim() != "ply" {
                return Err(bad("missing `ply` magic"));
            }
            continue;
        }
        match head {
            "format" => {
                let kind = tok.next().ok_or_else(|| bad("format line without type"))?;
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(Error::UnsupportedFormat(
                            "binary_big_endian PLY is not supported".into(),
                        ))
                    }
                    _ => return Err(bad("unknown PLY format")),
                });
            }
            "comment" => {
                if tok.next() == Some("frame_index") {
                    frame_index = tok
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("invalid frame_index comment"))?;
                }
            }
            "obj_info" | "" => {}
            "element" => {
                let name = tok.next().ok_or_else(|| bad("element without name"))?;
                let n: usize = tok
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("element without a valid count"))?;
                if name == "vertex" {
                    if count.is_some() {
                        return Err(bad("duplicate vertex element"));
                    }
                    count = Some(n);
                    in_vertex = true;
                } else if n == 0 {
                    in_vertex = false;
                } else {
                    return Err(Error::UnsupportedFormat(format!(
                        "element `{name}` is not supported"
                    )));
                }
            }
            "property" => {
                let ty = tok.next().ok_or_else(|| bad("property without type"))?;
                if ty == "list" {
                    if in_vertex {
                        return Err(Error::UnsupportedFormat(
                            "list properties on vertices are not supported".into(),
                        ));
                    }
                    continue;
                }
                let scalar = Scalar::parse(ty).ok_or_else(|| bad("unknown property type"))?;
                let name = tok.next().ok_or_else(|| bad("property without name"))?;
                if in_vertex {
                    props.push((scalar, name.to_string()));
                }
            }
            "end_header" => break,
            _ => return Err(bad("unrecognised header line")),
        }
    }

    let format = format.ok_or_else(|| Error::Parse {
        line: lineno,
        msg: "header has no format line".into(),
    })?;
    let count = count.ok_or_else(|| Error::Parse {
        line: lineno,
        msg: "header has no vertex element".into(),
    })?;
    let mut slots = [0usize; 6];
    for (s, want) in REQUIRED.iter().enumerate() {
        let pos = props
            .iter()
            .position(|(_, name)| name == want)
            .ok_or_else(|| {
                Error::UnsupportedFormat(format!("vertex property `{want}` is missing"))
            })?;
        let ty = props[pos].0;
        let ok = if s < 3 {
            matches!(ty, Scalar::F32 | Scalar::F64)
        } else {
            ty == Scalar::U8
        };
        if !ok {
            return Err(Error::UnsupportedFormat(format!(
                "vertex property `{want}` has type {ty:?}"
            )));
        }
        slots[s] = pos;
    }
    Ok(Header {
        format,
        count,
        frame_index,
        props: props.into_iter().map(|(t, _)| t).collect(),
        slots,
        header_lines: lineno,
    })
}

fn point_from_values(values: &[f64], slots: &[usize; 6]) -> Point {
    Point {
        position: [values[slots[0]], values[slots[1]], values[slots[2]]],
        color: [
            values[slots[3]] as u8,
            values[slots[4]] as u8,
            values[slots[5]] as u8,
        ],
    }
}

/// Parses a PLY stream.
pub fn read_ply<R: Read>(reader: R) -> Result<PointCloudFrame> {
    let mut reader = BufReader::new(reader);
    let header = parse_header(&mut reader)?;
    let mut points = Vec::with_capacity(header.count);
    let mut values = vec![0.0; header.props.len()];

    match header.format {
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = header.props.iter().map(|s| s.size()).sum();
            let mut buf = vec![0u8; stride];
            for i in 0..header.count {
                reader.read_exact(&mut buf).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        Error::CorruptFile(format!(
                            "body truncated: header declares {} vertices, found {i}",
                            header.count
                        ))
                    } else {
                        Error::Io(e)
                    }
                })?;
                let mut off = 0;
                for (v, s) in values.iter_mut().zip(&header.props) {
                    *v = s.read_le(&buf[off..]);
                    off += s.size();
                }
                points.push(point_from_values(&values, &header.slots));
            }
        }
        PlyFormat::Ascii => {
            let mut line = String::new();
            let mut lineno = header.header_lines;
            while points.len() < header.count {
                line.clear();
                lineno += 1;
                if reader.read_line(&mut line)? == 0 {
                    return Err(Error::CorruptFile(format!(
                        "body truncated: header declares {} vertices, found {}",
                        header.count,
                        points.len()
                    )));
                }
                if line.trim().is_empty() {
                    continue;
                }
                let mut n = 0;
                for tok in line.split_whitespace() {
                    if n == values.len() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "too many values on vertex line".into(),
                        });
                    }
                    let parsed = match header.props[n] {
                        Scalar::F32 => tok.parse::<f32>().map(f64::from).ok(),
                        _ => tok.parse::<f64>().ok(),
                    };
                    values[n] = parsed.ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: format!("invalid number `{tok}`"),
                    })?;
                    n += 1;
                }
                if n != values.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected {} values, found {n}", values.len()),
                    });
                }
                for &s in &header.slots[3..] {
                    let c = values[s];
                    if !(0.0..=255.0).contains(&c) || c.fract() != 0.0 {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("color value {c} is not a uchar"),
                        });
                    }
                }
                points.push(point_from_values(&values, &header.slots));
            }
        }
    }
    if let Some(p) = points
        .iter()
        .position(|p| p.position.iter().any(|c| !c.is_finite()))
    {
        return Err(Error::CorruptFile(format!("vertex {p} has a non-finite coordinate")));
    }
    Ok(PointCloudFrame::new(header.frame_index, points))
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloudFrame> {
    let path = path.as_ref();
    let file = File::open(path).map_err(Error::with_path(path))?;
    read_ply(file)
}

/// Writes a frame; positions are stored as `f32`.
pub fn write_ply<W: Write>(writer: W, frame: &PointCloudFrame, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt} 1.0\ncomment frame_index {}\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        frame.frame_index,
        frame.points.len()
    )?;
    for p in &frame.points {
        let [x, y, z] = p.position.map(|c| c as f32);
        match format {
            PlyFormat::Ascii => {
                let [r, g, b] = p.color;
                writeln!(w, "{x} {y} {z} {r} {g} {b}")?;
            }
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&x.to_le_bytes())?;
                w.write_all(&y.to_le_bytes())?;
                w.write_all(&z.to_le_bytes())?;
                w.write_all(&p.color)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_ply(path: impl AsRef<Path>, frame: &PointCloudFrame, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(Error::with_path(path))?;
    write_ply(file, frame, format)
}
