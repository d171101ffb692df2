//! Binary PPM (P6) image output, PNG export, and the raw float depth-map
//! format (`SPLATDEPTH` header + little-endian f32 samples).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, SplatError};
use crate::image::Image;

pub fn write_ppm(img: &Image, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.to_rgb8())?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    // magic, width, height, maxval separated by whitespace
    let mut tok = String::new();
    while header.len() < 4 {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        let c = byte[0] as char;
        if c == '#' {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_whitespace() {
            if !tok.is_empty() {
                header.push(tok.clone());
                tok.clear();
            }
        } else {
            tok.push(c);
        }
    }
    if header[0] != "P6" {
        return Err(SplatError::Malformed("not a P6 PPM".into()));
    }
    let width: usize = header[1].parse().map_err(|_| SplatError::Malformed("bad width".into()))?;
    let height: usize = header[2].parse().map_err(|_| SplatError::Malformed("bad height".into()))?;
    let mut buf = vec![0u8; width * height * 3];
    r.read_exact(&mut buf)
        .map_err(|_| SplatError::Malformed("truncated pixel data".into()))?;
    let mut img = Image::new(width, height);
    for (d, s) in img.data.iter_mut().zip(&buf) {
        *d = *s as f64 / 255.0;
    }
    Ok(img)
}

pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let buf = img.to_rgb8();
    image::save_buffer(
        path,
        &buf,
        img.width as u32,
        img.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|e| SplatError::Malformed(format!("png encode: {e}")))
}

pub fn read_png(path: &Path) -> Result<Image> {
    let decoded = image::open(path)
        .map_err(|e| SplatError::Malformed(format!("png decode: {e}")))?
        .to_rgb8();
    let mut img = Image::new(decoded.width() as usize, decoded.height() as usize);
    for (d, s) in img.data.iter_mut().zip(decoded.as_raw()) {
        *d = *s as f64 / 255.0;
    }
    Ok(img)
}

/// Reads a PPM or PNG image by extension.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_png(path),
        _ => read_ppm(path),
    }
}

pub fn write_depth_raw(depth: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if depth.len() != width * height {
        return Err(SplatError::LengthMismatch {
            expected: width * height,
            got: depth.len(),
        });
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "SPLATDEPTH {width} {height}\n")?;
    for v in depth {
        f.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_depth_raw(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "SPLATDEPTH" {
        return Err(SplatError::Malformed("bad depth header".into()));
    }
    let width: usize = toks[1].parse().map_err(|_| SplatError::Malformed("bad width".into()))?;
    let height: usize = toks[2].parse().map_err(|_| SplatError::Malformed("bad height".into()))?;
    let mut buf = vec![0u8; width * height * 4];
    r.read_exact(&mut buf)
        .map_err(|_| SplatError::Malformed("truncated depth data".into()))?;
    let depth = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((depth, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(9, 4);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        let p = dir.path().join("x.ppm");
        write_ppm(&img, &p).unwrap();
        let back = read_ppm(&p).unwrap();
        assert!(img.max_abs_diff(&back).unwrap() < 1.0 / 255.0);
    }

    #[test]
    fn depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let depth: Vec<f64> = (0..12).map(|i| i as f64 * 1.5).collect();
        let p = dir.path().join("d.raw");
        write_depth_raw(&depth, 4, 3, &p).unwrap();
        let (back, w, h) = read_depth_raw(&p).unwrap();
        assert_eq!((w, h), (4, 3));
        for (a, b) in depth.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
