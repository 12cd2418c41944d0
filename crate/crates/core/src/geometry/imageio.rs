//! PNG encodings for the image grids.
//!
//! * RGB: 8-bit, `round(v * 255)`.
//! * Depth: 16-bit gray in millimeters (scene units are meters).
//! * Normals: 8-bit RGB, `round((n + 1) / 2 * 255)`; `(128,128,128)` decodes to zero.
//! * NOCS: 8-bit RGB, `round(n * 255)`, background `(255,255,255)`.
//! * Masks: 8-bit gray `{0, 255}`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::grid::{Grid, Mask, RgbImage};
use super::types::{DepthMap, NocsMap, NormalMap};
use crate::error::{Error, Result};

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(path: &Path, w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .finish()
        .map_err(|e| Error::format(path, e.to_string()))
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn read_png(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data: buf,
    })
}

fn expect(d: &Decoded, path: &Path, color: png::ColorType, depth: png::BitDepth) -> Result<()> {
    if d.color == color && d.depth == depth {
        Ok(())
    } else {
        Err(Error::format(
            path,
            format!("expected {color:?}/{depth:?}, found {:?}/{:?}", d.color, d.depth),
        ))
    }
}

fn rgb_bytes(img: &Grid<[f32; 3]>, f: impl Fn(f32) -> u8) -> Vec<u8> {
    img.as_slice()
        .iter()
        .flat_map(|p| [f(p[0]), f(p[1]), f(p[2])])
        .collect()
}

fn read_rgb8(path: &Path) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let d = read_png(path)?;
    expect(&d, path, png::ColorType::Rgb, png::BitDepth::Eight)?;
    let px = d.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((d.width, d.height, px))
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let bytes = rgb_bytes(img, quantize);
    write_png(path, img.width(), img.height(), png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let (w, h, px) = read_rgb8(path)?;
    let data = px
        .into_iter()
        .map(|p| p.map(|c| c as f32 / 255.0))
        .collect();
    Grid::from_vec(w, h, data)
}

/// Depth in meters is stored as 16-bit millimeters; values beyond 65.535 m saturate.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let bytes: Vec<u8> = depth
        .as_slice()
        .iter()
        .flat_map(|&z| ((z as f64 * 1000.0).round().clamp(0.0, 65535.0) as u16).to_be_bytes())
        .collect();
    write_png(path, depth.width(), depth.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let d = read_png(path)?;
    expect(&d, path, png::ColorType::Grayscale, png::BitDepth::Sixteen)?;
    let data = d
        .data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 1000.0)
        .collect();
    Grid::from_vec(d.width, d.height, data)
}

pub fn write_normals(path: &Path, normals: &NormalMap) -> Result<()> {
    let bytes = rgb_bytes(normals, |v| (((v + 1.0) / 2.0).clamp(0.0, 1.0) * 255.0).round() as u8);
    write_png(path, normals.width(), normals.height(), png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

pub fn read_normals(path: &Path) -> Result<NormalMap> {
    let (w, h, px) = read_rgb8(path)?;
    let data = px
        .into_iter()
        .map(|p| {
            if p == [128, 128, 128] {
                return [0.0; 3];
            }
            let n = p.map(|c| c as f32 / 255.0 * 2.0 - 1.0);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if len > 1e-6 {
                n.map(|c| c / len)
            } else {
                [0.0; 3]
            }
        })
        .collect();
    Grid::from_vec(w, h, data)
}

pub fn write_nocs(path: &Path, nocs: &NocsMap) -> Result<()> {
    let bytes: Vec<u8> = nocs
        .values()
        .as_slice()
        .iter()
        .zip(nocs.mask().as_slice())
        .flat_map(|(p, &m)| if m { p.map(quantize) } else { [255; 3] })
        .collect();
    write_png(path, nocs.width(), nocs.height(), png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

/// The foreground comes from `mask`, never from pixel color.
pub fn read_nocs(path: &Path, mask: &Mask) -> Result<NocsMap> {
    let (w, h, px) = read_rgb8(path)?;
    let values = Grid::from_vec(w, h, px.into_iter().map(|p| p.map(|c| c as f32 / 255.0)).collect())?;
    NocsMap::new(values, mask.clone()).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path, mask.width(), mask.height(), png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let d = read_png(path)?;
    expect(&d, path, png::ColorType::Grayscale, png::BitDepth::Eight)?;
    Grid::from_vec(d.width, d.height, d.data.iter().map(|&b| b >= 128).collect())
}
