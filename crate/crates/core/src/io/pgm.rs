//! PGM (P5) reader/writer. 8-bit files carry binary masks (nonzero =
//! inside); 16-bit files carry semantic label images.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, SplatError};

/// Grayscale image with up to 16-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }
}

fn read_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => {
                if tok.is_empty() {
                    return Err(SplatError::Io(e));
                }
                return Ok(tok);
            }
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
    }
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "P5" {
        return Err(SplatError::Malformed(format!("not a P5 PGM (magic {magic})")));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| SplatError::Malformed("bad width".into()))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| SplatError::Malformed("bad height".into()))?;
    let maxval: u32 = read_token(&mut r)?
        .parse()
        .map_err(|_| SplatError::Malformed("bad maxval".into()))?;
    let mut img = GrayImage::new(width, height);
    if maxval < 256 {
        let mut buf = vec![0u8; width * height];
        r.read_exact(&mut buf)?;
        for (d, s) in img.data.iter_mut().zip(&buf) {
            *d = *s as u16;
        }
    } else {
        let mut buf = vec![0u8; width * height * 2];
        r.read_exact(&mut buf)?;
        for (d, s) in img.data.iter_mut().zip(buf.chunks_exact(2)) {
            *d = u16::from_be_bytes([s[0], s[1]]);
        }
    }
    Ok(img)
}

pub fn write_pgm(img: &GrayImage, path: &Path, sixteen_bit: bool) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let maxval = if sixteen_bit { 65535 } else { 255 };
    write!(f, "P5\n{} {}\n{}\n", img.width, img.height, maxval)?;
    if sixteen_bit {
        for v in &img.data {
            f.write_all(&v.to_be_bytes())?;
        }
    } else {
        let bytes: Vec<u8> = img.data.iter().map(|&v| v.min(255) as u8).collect();
        f.write_all(&bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = GrayImage::new(7, 5);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 37 % 250) as u16;
        }
        let p8 = dir.path().join("a.pgm");
        write_pgm(&img, &p8, false).unwrap();
        assert_eq!(read_pgm(&p8).unwrap(), img);

        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 1337 % 60000) as u16;
        }
        let p16 = dir.path().join("b.pgm");
        write_pgm(&img, &p16, true).unwrap();
        assert_eq!(read_pgm(&p16).unwrap(), img);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        std::fs::write(&p, b"P6\n1 1\n255\nxyz").unwrap();
        assert!(read_pgm(&p).is_err());
    }
}
