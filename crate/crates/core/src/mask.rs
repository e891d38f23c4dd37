//! 64x64 grayscale masks: reading external masks as particle clouds, and
//! writing observations and particle densities as PGM images.
//!
//! Image row 0 is the far edge of the table (largest `y`); image column `c`
//! is pixel index `i = c` along `x`.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageBuffer, ImageEncoder, Luma};
use rand::Rng;

use crate::env::{pixel_of, Observation, OBS_RES};
use crate::error::{Error, Result};
use crate::sde::{ParticleCloud, TableGeometry};

/// Thresholds a 64x64 grayscale image at half its range.
pub fn mask_from_image_bytes(bytes: &[u8]) -> Result<Observation> {
    let img = image::load_from_memory(bytes)?.to_luma16();
    if img.width() as usize != OBS_RES || img.height() as usize != OBS_RES {
        return Err(Error::config(format!(
            "mask must be {OBS_RES}x{OBS_RES}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut obs = Observation::zeros();
    for (c, r, px) in img.enumerate_pixels() {
        if f64::from(px.0[0]) > 0.5 * f64::from(u16::MAX) {
            obs.set(c as usize, OBS_RES - 1 - r as usize, 1.0);
        }
    }
    Ok(obs)
}

pub fn read_mask(path: &Path) -> Result<Observation> {
    mask_from_image_bytes(&std::fs::read(path)?)
}

/// Sets every pixel within `radius` pixels (Chebyshev) of a set pixel.
pub fn dilate(mask: &Observation, radius: usize) -> Observation {
    let mut out = Observation::zeros();
    let r = radius as isize;
    for (i, j, _) in mask.set_pixels() {
        for di in -r..=r {
            for dj in -r..=r {
                let (a, b) = (i as isize + di, j as isize + dj);
                if (0..OBS_RES as isize).contains(&a) && (0..OBS_RES as isize).contains(&b) {
                    out.set(a as usize, b as usize, 1.0);
                }
            }
        }
    }
    out
}

/// Places `ceil(particle_count / set_pixels)` uniform particles in each set
/// pixel's cell.
pub fn cloud_from_mask<R: Rng + ?Sized>(
    mask: &Observation,
    table: &TableGeometry,
    particle_count: usize,
    rng: &mut R,
) -> Result<ParticleCloud> {
    let set = mask.set_count();
    if set == 0 {
        return Err(Error::Degenerate("mask has no set pixels".into()));
    }
    let per_pixel = particle_count.div_ceil(set);
    let cw = table.width_m / OBS_RES as f64;
    let ch = table.height_m / OBS_RES as f64;
    let mut xs = Vec::with_capacity(per_pixel * set);
    let mut ys = Vec::with_capacity(per_pixel * set);
    for (i, j, _) in mask.set_pixels() {
        for _ in 0..per_pixel {
            xs.push((i as f64 + rng.random::<f64>()) * cw);
            ys.push((j as f64 + rng.random::<f64>()) * ch);
        }
    }
    ParticleCloud::new(xs, ys)
}

fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)?;
    Ok(buf.into_inner())
}

/// Binary PGM of an observation, set pixels white.
pub fn observation_pgm(obs: &Observation) -> Result<Vec<u8>> {
    let n = OBS_RES as u32;
    let img = GrayImage::from_fn(n, n, |c, r| {
        let v = obs.get(c as usize, OBS_RES - 1 - r as usize);
        Luma([if v > 0.0 { 255 } else { 0 }])
    });
    encode_pgm(&img)
}

pub fn write_observation_pgm(obs: &Observation, path: &Path) -> Result<()> {
    std::fs::write(path, observation_pgm(obs)?)?;
    Ok(())
}

/// Gaussian-blurred histogram of dirty on-table particles, scaled to 0..=255.
pub fn density_pgm(cloud: &ParticleCloud, table: &TableGeometry, sigma_px: f64) -> Result<Vec<u8>> {
    let n = OBS_RES as u32;
    let mut hist: ImageBuffer<Luma<f32>, Vec<f32>> = ImageBuffer::new(n, n);
    for (x, y) in cloud.dirty_on_table(table) {
        let (i, j) = pixel_of(x, y, table);
        hist.get_pixel_mut(i as u32, (OBS_RES - 1 - j) as u32).0[0] += 1.0;
    }
    let blurred = image::imageops::blur(&hist, sigma_px as f32);
    let max = blurred.pixels().map(|p| p.0[0]).fold(0.0f32, f32::max);
    let img = GrayImage::from_fn(n, n, |c, r| {
        let v = blurred.get_pixel(c, r).0[0];
        Luma([if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 }])
    });
    encode_pgm(&img)
}
