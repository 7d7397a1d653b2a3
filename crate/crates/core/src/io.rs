//! PFM (float) and PNG (8-bit preview) image files, plus material-set bundles.
//!
//! PFM files are written little-endian (negative scale) with rows stored
//! bottom-to-top as the format requires. PNG previews apply the sRGB transfer
//! curve only for color data (albedo, lit renders); data maps are stored linearly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid, RgbGrid, ScalarGrid};
use crate::material::{pack_rm, unpack_rm, MaterialSet, PackedRm};

#[derive(Debug, Clone, PartialEq)]
pub enum PfmImage {
    Gray(ScalarGrid),
    Color(RgbGrid),
}

pub fn write_pfm_rgb(path: &Path, img: &RgbGrid) -> Result<()> {
    write_pfm(path, img.width(), img.height(), 3, |x, y, c| img[(x, y)][c])
}

pub fn write_pfm_gray(path: &Path, img: &ScalarGrid) -> Result<()> {
    write_pfm(path, img.width(), img.height(), 1, |x, y, _| img[(x, y)])
}

fn write_pfm(path: &Path, w: usize, h: usize, channels: usize, value: impl Fn(usize, usize, usize) -> f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut buf = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    buf.reserve(w * h * channels * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for c in 0..channels {
                buf.extend_from_slice(&(value(x, y, c) as f32).to_le_bytes());
            }
        }
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = BufReader::new(file);
    let mut next_token_line = |what: &str| -> Result<String> {
        let mut line = String::new();
        loop {
            line.clear();
            let n = rd.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                return Err(Error::Format(format!("{}: truncated PFM header ({what})", path.display())));
            }
            if !line.trim().is_empty() {
                return Ok(line.trim().to_string());
            }
        }
    };
    let tag = next_token_line("tag")?;
    let channels = match tag.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("{}: bad PFM tag '{other}'", path.display()))),
    };
    let dims = next_token_line("dimensions")?;
    let mut it = dims.split_whitespace().map(|t| t.parse::<usize>());
    let (w, h) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::Format(format!("{}: bad PFM dimensions '{dims}'", path.display()))),
    };
    let scale: f64 = next_token_line("scale")?
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad PFM scale", path.display())))?;
    let little = scale < 0.0;
    drop(next_token_line);
    let mut raw = vec![0u8; w * h * channels * 4];
    rd.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let value = |i: usize| -> f64 {
        let b = [raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]];
        (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
    };
    let file_row = |y: usize| h - 1 - y;
    Ok(if channels == 3 {
        PfmImage::Color(Grid::from_fn(w, h, |x, y| {
            let base = (file_row(y) * w + x) * 3;
            [value(base), value(base + 1), value(base + 2)]
        }))
    } else {
        PfmImage::Gray(Grid::from_fn(w, h, |x, y| value(file_row(y) * w + x)))
    })
}

pub fn read_pfm_rgb(path: &Path) -> Result<RgbGrid> {
    match read_pfm(path)? {
        PfmImage::Color(g) => Ok(g),
        PfmImage::Gray(g) => Ok(g.map(|&v| [v, v, v])),
    }
}

pub fn read_pfm_gray(path: &Path) -> Result<ScalarGrid> {
    match read_pfm(path)? {
        PfmImage::Gray(g) => Ok(g),
        PfmImage::Color(_) => Err(Error::Format(format!("{}: expected a grayscale PFM", path.display()))),
    }
}

#[inline]
pub fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB PNG. `srgb` selects whether values are color (encoded with the sRGB
/// curve after clamping) or data (stored linearly).
pub fn write_png_rgb(path: &Path, img: &RgbGrid, srgb: bool) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.len() * 3);
    for px in img.iter() {
        for &c in px {
            bytes.push(quantize(if srgb { linear_to_srgb(c) } else { c }));
        }
    }
    write_png_bytes(path, img.width(), img.height(), png::ColorType::Rgb, &bytes)
}

pub fn write_png_gray(path: &Path, img: &ScalarGrid) -> Result<()> {
    let bytes: Vec<u8> = img.iter().map(|&v| quantize(v)).collect();
    write_png_bytes(path, img.width(), img.height(), png::ColorType::Grayscale, &bytes)
}

pub fn write_png_mask(path: &Path, mask: &Grid<bool>) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png_bytes(path, mask.width(), mask.height(), png::ColorType::Grayscale, &bytes)
}

fn write_png_bytes(path: &Path, w: usize, h: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(to_err)?;
    writer.write_image_data(bytes).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// Reads an 8-bit grayscale PNG mask (non-zero = true).
pub fn read_png_mask(path: &Path) -> Result<Grid<bool>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(BufReader::new(file));
    let to_err = |e: png::DecodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(to_err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(to_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let samples = info.color_type.samples();
    Grid::from_vec(
        w,
        h,
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| buf[y * stride + x * samples] != 0)
            .collect(),
    )
}

/// File paths of a material set stored as `<stem>_albedo.pfm`, `<stem>_rm.pfm`, `<stem>_bump.pfm`.
pub fn material_paths(dir: &Path, stem: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{stem}_albedo.pfm")),
        dir.join(format!("{stem}_rm.pfm")),
        dir.join(format!("{stem}_bump.pfm")),
    ]
}

pub fn write_material_set(dir: &Path, stem: &str, m: &MaterialSet) -> Result<[PathBuf; 3]> {
    let paths = material_paths(dir, stem);
    write_pfm_rgb(&paths[0], &m.albedo)?;
    write_pfm_rgb(&paths[1], &m.packed_rm().grid)?;
    write_pfm_rgb(&paths[2], &m.bump)?;
    Ok(paths)
}

pub fn read_material_set(dir: &Path, stem: &str) -> Result<MaterialSet> {
    let paths = material_paths(dir, stem);
    read_material_files(&paths[0], &paths[1], &paths[2])
}

pub fn read_material_files(albedo: &Path, rm: &Path, bump: &Path) -> Result<MaterialSet> {
    let albedo = read_pfm_rgb(albedo)?;
    // f32 storage keeps R = 1.0 exact, so the strict tolerance applies
    let (roughness, metallic) = unpack_rm(&PackedRm { grid: read_pfm_rgb(rm)? })?;
    let bump = read_pfm_rgb(bump)?;
    MaterialSet::new(albedo, roughness, metallic, bump)
}

/// 8-bit previews of a material set (`_albedo.png` in sRGB, `_rm.png`/`_bump.png` linear).
pub fn write_material_previews(dir: &Path, stem: &str, m: &MaterialSet) -> Result<()> {
    write_png_rgb(&dir.join(format!("{stem}_albedo.png")), &m.albedo, true)?;
    let rm = pack_rm(&m.roughness.map(|v| v.clamp(0.0, 1.0)), &m.metallic.map(|v| v.clamp(0.0, 1.0)))?;
    write_png_rgb(&dir.join(format!("{stem}_rm.png")), &rm.grid, false)?;
    write_png_rgb(&dir.join(format!("{stem}_bump.png")), &m.bump, false)
}
