//! Binary greyscale PGM (P5) images of density fields, one pixel per
//! element: solid black, void white, row 0 at the top.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

/// Pixel `(row, col)` holds `round(255 (1 - rho))` of element `col * ny + row`.
pub fn density_pixels(density: &[f64], nx: usize, ny: usize) -> Result<Vec<u8>> {
    ensure!(density.len() == nx * ny, "{} densities for a {nx}x{ny} image", density.len());
    let mut pixels = Vec::with_capacity(nx * ny);
    for row in 0..ny {
        for col in 0..nx {
            let rho = density[col * ny + row];
            ensure!((0.0..=1.0).contains(&rho), "density {rho} outside [0, 1]");
            pixels.push((255.0 * (1.0 - rho)).round() as u8);
        }
    }
    Ok(pixels)
}

pub fn encode(pixels: &[u8], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn write_density(path: &Path, density: &[f64], nx: usize, ny: usize) -> Result<()> {
    let pixels = density_pixels(density, nx, ny)?;
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(&encode(&pixels, nx, ny))
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub pixels: Vec<u8>,
}

/// Parses an 8-bit P5 file (comments allowed in the header).
pub fn decode(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PGM header");
        }
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    ensure!(fields[0] == "P5", "not a binary PGM (magic {})", fields[0]);
    let width: usize = fields[1].parse()?;
    let height: usize = fields[2].parse()?;
    let max_value: u16 = fields[3].parse()?;
    ensure!(max_value > 0 && max_value < 256, "only 8-bit PGM supported");
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let pixels = bytes.get(pos..pos + width * height).context("truncated PGM raster")?.to_vec();
    Ok(Pgm {
        width,
        height,
        max_value,
        pixels,
    })
}

pub fn read(path: &Path) -> Result<Pgm> {
    decode(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}
