//! Image quality metrics: PSNR and SSIM (11×11 Gaussian window, σ = 1.5,
//! K1 = 0.01, K2 = 0.03, averaged over channels).

use crate::error::{Result, SplatError};
use crate::image::Image;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// 10·log10(1/MSE) for images in [0,1]; identical images yield +∞.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Extracts one channel as a plane.
fn channel(img: &Image, ch: usize) -> Vec<f64> {
    img.data.iter().skip(ch).step_by(3).copied().collect()
}

/// Separable Gaussian filter, "valid" output (no padding):
/// output size (w - WINDOW + 1) × (h - WINDOW + 1).
fn filter_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    // Horizontal pass over full rows.
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * plane[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let oh = h - WINDOW + 1;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean local SSIM over valid window positions, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(SplatError::InvalidArgument(format!(
            "ssim needs images at least {WINDOW}x{WINDOW}"
        )));
    }
    let kernel = gaussian_kernel();
    let c1 = (K1 * K1) as f64;
    let c2 = (K2 * K2) as f64;
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    for ch in 0..3 {
        let pa = channel(a, ch);
        let pb = channel(b, ch);
        let mu_a = filter_valid(&pa, w, h, &kernel);
        let mu_b = filter_valid(&pb, w, h, &kernel);
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let e_aa = filter_valid(&aa, w, h, &kernel);
        let e_bb = filter_valid(&bb, w, h, &kernel);
        let e_ab = filter_valid(&ab, w, h, &kernel);
        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}
