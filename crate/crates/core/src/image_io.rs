//! 8-bit PNG reading and writing for `C x H x W` tensors in `[0, 1]`.
//!
//! Encoder settings are fixed so identical tensors always produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Compression, Filter, Transformations};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn decode_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Reads an 8-bit PNG as `C x H x W` with `C = 3` (gray and RGB) or `C = 4`
/// (inputs with alpha). Palette and sub-byte images are expanded.
pub fn png_read(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e))?;
    if reader.info().bit_depth == BitDepth::Sixteen {
        return Err(Error::Unsupported(format!(
            "{}: 16-bit PNGs are not supported",
            path.display()
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = info.color_type.samples();
    let out_channels = match info.color_type {
        ColorType::Grayscale | ColorType::Rgb => 3,
        ColorType::GrayscaleAlpha | ColorType::Rgba => 4,
        ColorType::Indexed => return Err(decode_err(path, "palette was not expanded")),
    };
    let bytes = &buf[..info.buffer_size()];
    let plane = h * w;
    let mut data = vec![0f32; out_channels * plane];
    for (i, px) in bytes.chunks_exact(src_channels).take(plane).enumerate() {
        let value = |c: usize| px[c] as f32 / 255.0;
        let (rgb, alpha) = match src_channels {
            1 => ([value(0); 3], None),
            2 => ([value(0); 3], Some(value(1))),
            3 => ([value(0), value(1), value(2)], None),
            _ => ([value(0), value(1), value(2)], Some(value(3))),
        };
        for (c, v) in rgb.into_iter().enumerate() {
            data[c * plane + i] = v;
        }
        if let Some(a) = alpha {
            data[3 * plane + i] = a;
        }
    }
    Tensor::new(&[out_channels, h, w], data)
}

/// Reads a PNG as RGB. An alpha channel is dropped (not composited) with a
/// warning.
pub fn png_read_rgb(path: &Path) -> Result<Tensor> {
    let t = png_read(path)?;
    if t.shape()[0] == 3 {
        return Ok(t);
    }
    log::warn!("{}: dropping alpha channel", path.display());
    Ok(t.split(0, &[3, 1])?.swap_remove(0))
}

/// Reads a PNG as a `1 x H x W` binary mask: a pixel is set when its first
/// channel is at least one half.
pub fn png_read_mask(path: &Path) -> Result<Tensor> {
    let t = png_read(path)?;
    let (h, w) = (t.shape()[1], t.shape()[2]);
    Tensor::from_fn(&[1, h, w], |i| if t.data()[i] >= 0.5 { 1.0 } else { 0.0 })
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Snaps every value to the level `png_write` would store, so that reading
/// the written file back reproduces the result exactly.
pub fn quantize_8bit(image: &Tensor) -> Tensor {
    image.map(|v| quantize(v) as f32 / 255.0)
}

/// Writes a `C x H x W` tensor with `C` in {1, 3, 4}; values are clamped to
/// `[0, 1]` and rounded to the nearest 8-bit level.
pub fn png_write(path: &Path, image: &Tensor) -> Result<()> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] if matches!(c, 1 | 3 | 4) => (c, h, w),
        _ => return Err(Error::shape("png_write", image.shape(), &[3, 0, 0])),
    };
    if !image.all_finite() {
        return Err(Error::Numeric(format!("image for {}", path.display())));
    }
    let plane = h * w;
    let mut bytes = Vec::with_capacity(c * plane);
    for i in 0..plane {
        for ch in 0..c {
            bytes.push(quantize(image.data()[ch * plane + i]));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(match c {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        _ => ColorType::Rgba,
    });
    encoder.set_depth(BitDepth::Eight);
    encoder.set_compression(Compression::Balanced);
    encoder.set_filter(Filter::Adaptive);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(&bytes).map_err(to_io)?;
    writer.finish().map_err(to_io)
}
