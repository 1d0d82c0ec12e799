use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::{Image, Kernel};
use crate::error::{Error, Result};

/// Reads a binary PGM (P5, 8- or 16-bit) or a PNG. Color PNGs are reduced by
/// averaging their color channels; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)?
    } else {
        decode_png(&bytes)?
    };
    Ok(img.clamped())
}

/// Writes an 8-bit grayscale image. The format follows the extension:
/// `.pgm` gives P5, anything else PNG. Values are clamped to `[0, 1]`.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    if is_pgm(path) {
        let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
        out.extend_from_slice(&bytes);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    } else {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .expect("buffer length matches dimensions");
        write_png(DynamicImage::ImageLuma8(buf), path)
    }
}

/// 16-bit variant of [`save_image`] (PGM maxval 65535 or 16-bit PNG).
pub fn save_image_16bit(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let words: Vec<u16> = img.data().iter().map(|&v| quantize(v, 65535.0) as u16).collect();
    if is_pgm(path) {
        let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
        for w in &words {
            out.extend_from_slice(&w.to_be_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    } else {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(img.width() as u32, img.height() as u32, words)
                .expect("buffer length matches dimensions");
        write_png(DynamicImage::ImageLuma16(buf), path)
    }
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn write_png(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Format("image has zero dimensions".into()));
    }
    let data: Vec<f64> = match dynimg {
        DynamicImage::ImageLuma8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| mean3(p.0.map(f64::from)) / 255.0).collect(),
        DynamicImage::ImageRgba8(b) => b
            .pixels()
            .map(|p| mean3([p.0[0], p.0[1], p.0[2]].map(f64::from)) / 255.0)
            .collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| mean3(p.0.map(f64::from)) / 65535.0).collect(),
        DynamicImage::ImageRgba16(b) => b
            .pixels()
            .map(|p| mean3([p.0[0], p.0[1], p.0[2]].map(f64::from)) / 65535.0)
            .collect(),
        other => other.to_rgb32f().pixels().map(|p| mean3(p.0.map(f64::from))).collect(),
    };
    Image::new(w, h, data)
}

fn mean3(c: [f64; 3]) -> f64 {
    (c[0] + c[1] + c[2]) / 3.0
}

/// Binary PGM reader. Header fields may be separated by any whitespace and
/// interleaved with `#` comments.
fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PGM header value out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;

    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::Format("image has zero dimensions".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let n = w * h;
    let raster = &bytes[pos..];
    let max = maxval as f64;
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        raster[..n].iter().map(|&v| v as f64 / max).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / max)
            .collect()
    };
    Image::new(w, h, data)
}

/// Plain-text kernel: a `side side` line followed by `side` rows of weights.
/// Weights use the shortest representation that parses back to the same
/// `f64`.
pub fn save_kernel(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    write_kernel(k, &mut out).map_err(|e| Error::io(path, e))?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_kernel<W: Write>(k: &Kernel, mut out: W) -> std::io::Result<()> {
    let s = k.side();
    write!(out, "{s} {s}")?;
    for u in 0..s {
        writeln!(out)?;
        let row: Vec<String> = (0..s).map(|v| format!("{:?}", k.get(u, v))).collect();
        write!(out, "{}", row.join(" "))?;
    }
    writeln!(out)
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = text.split_ascii_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format("kernel file needs a 'side side' header".into()))
    };
    let (rows, cols) = (dim()?, dim()?);
    if rows != cols {
        return Err(Error::Format(format!("kernel must be square, got {rows}x{cols}")));
    }
    let weights: Vec<f64> = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad kernel weight {t:?}")))
        })
        .collect::<Result<_>>()?;
    if weights.len() != rows * cols {
        return Err(Error::Format(format!(
            "kernel file has {} weights, header says {}",
            weights.len(),
            rows * cols
        )));
    }
    Kernel::from_weights(rows, weights)
}

/// Kernel visualisation, scaled so the largest weight is white.
pub fn save_kernel_png(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    let max = k.max_weight();
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let img = Image::from_raw(k.side(), k.side(), k.weights().iter().map(|w| w * scale).collect());
    save_image(&img, path)
}
