//! Point cloud PLY reader/writer: x, y, z as float32 with an optional
//! uint16 semantic label. Supports ascii and binary_little_endian.

use nalgebra::Vector3;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, SplatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply(
    points: &[Vector3<f64>],
    labels: Option<&[u16]>,
    path: &Path,
    format: PlyFormat,
) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(SplatError::LengthMismatch {
                expected: points.len(),
                got: l.len(),
            });
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(f, "ply\nformat {fmt} 1.0\nelement vertex {}\n", points.len())?;
    write!(f, "property float x\nproperty float y\nproperty float z\n")?;
    if labels.is_some() {
        write!(f, "property ushort label\n")?;
    }
    write!(f, "end_header\n")?;
    for (i, p) in points.iter().enumerate() {
        match format {
            PlyFormat::Ascii => {
                write!(f, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
                if let Some(l) = labels {
                    write!(f, " {}", l[i])?;
                }
                writeln!(f)?;
            }
            PlyFormat::BinaryLittleEndian => {
                f.write_all(&(p.x as f32).to_le_bytes())?;
                f.write_all(&(p.y as f32).to_le_bytes())?;
                f.write_all(&(p.z as f32).to_le_bytes())?;
                if let Some(l) = labels {
                    f.write_all(&l[i].to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<(Vec<Vector3<f64>>, Option<Vec<u16>>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(SplatError::Malformed("missing ply magic".into()));
    }
    let mut format = None;
    let mut count = 0usize;
    let mut props: Vec<(String, String)> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(SplatError::Malformed("truncated header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, _] => {
                return Err(SplatError::Malformed(format!("unsupported format {other}")))
            }
            ["element", "vertex", n] => {
                count = n
                    .parse()
                    .map_err(|_| SplatError::Malformed("bad vertex count".into()))?
            }
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            ["end_header"] => break,
            ["comment", ..] | ["element", ..] => {}
            _ => {}
        }
    }
    let format = format.ok_or_else(|| SplatError::Malformed("missing format line".into()))?;
    let has_label = props.iter().any(|(_, n)| n == "label");
    let mut points = Vec::with_capacity(count);
    let mut labels = if has_label { Some(Vec::with_capacity(count)) } else { None };
    match format {
        PlyFormat::Ascii => {
            for _ in 0..count {
                line.clear();
                if r.read_line(&mut line)? == 0 {
                    return Err(SplatError::Malformed("truncated vertex data".into()));
                }
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() < 3 {
                    return Err(SplatError::Malformed("short vertex line".into()));
                }
                let parse = |s: &str| -> Result<f64> {
                    s.parse::<f32>()
                        .map(|v| v as f64)
                        .map_err(|_| SplatError::Malformed("bad float".into()))
                };
                points.push(Vector3::new(parse(vals[0])?, parse(vals[1])?, parse(vals[2])?));
                if let Some(l) = &mut labels {
                    let idx = props.iter().position(|(_, n)| n == "label").unwrap();
                    l.push(
                        vals.get(idx)
                            .and_then(|s| s.parse::<u16>().ok())
                            .ok_or_else(|| SplatError::Malformed("bad label".into()))?,
                    );
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride = 12 + if has_label { 2 } else { 0 };
            let mut buf = vec![0u8; stride];
            for _ in 0..count {
                r.read_exact(&mut buf)
                    .map_err(|_| SplatError::Malformed("truncated vertex data".into()))?;
                let g = |o: usize| f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]]);
                points.push(Vector3::new(g(0) as f64, g(4) as f64, g(8) as f64));
                if let Some(l) = &mut labels {
                    l.push(u16::from_le_bytes([buf[12], buf[13]]));
                }
            }
        }
    }
    Ok((points, labels))
}
