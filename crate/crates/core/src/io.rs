//! Image file interchange: 8-bit PNG (RGB or grayscale, non-interlaced) and
//! binary PPM (P6). Loading sniffs the magic bytes, so extensions are only a
//! hint for the save direction.
//!
//! Quantization is pinned: saving maps a float sample to
//! `round(v * 255)` (half away from zero), loading maps a byte back to
//! `b / 255.0`. Values already on the 1/255 grid round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageTensor;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn quantize(v: f32) -> u8 {
    (v * 255.0).round() as u8
}

fn dequantize(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Saves to PNG or PPM depending on the file extension (`.png`, `.ppm`).
pub fn save_image(path: &Path, img: &ImageTensor) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => save_png(path, img),
        Some(ext) if ext.eq_ignore_ascii_case("ppm") => save_ppm(path, img),
        _ => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            detail: "unknown extension; use .png or .ppm".to_string(),
        }),
    }
}

/// Loads a PNG or PPM, dispatching on the magic bytes.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(path, &bytes)
    } else {
        Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            detail: "unrecognized magic bytes; expected png or ppm (P6)".to_string(),
        })
    }
}

fn save_png(path: &Path, img: &ImageTensor) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(match img.channels() {
        1 => png::ColorType::Grayscale,
        _ => png::ColorType::Rgb,
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::PngEncode {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::PngEncode {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<ImageTensor> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info().map_err(|e| Error::PngDecode {
        path: path.to_path_buf(),
        source: e,
    })?;
    let unsupported = |detail: String| Error::UnsupportedImage {
        path: path.to_path_buf(),
        detail,
    };
    {
        let info = reader.info();
        if info.interlaced {
            return Err(unsupported("interlaced png".to_string()));
        }
        if info.bit_depth != png::BitDepth::Eight {
            return Err(unsupported(format!("bit depth {:?}, only 8-bit supported", info.bit_depth)));
        }
        match info.color_type {
            png::ColorType::Rgb | png::ColorType::Grayscale => {}
            other => {
                return Err(unsupported(format!(
                    "color type {other:?}, only rgb and grayscale supported"
                )))
            }
        }
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::PngDecode {
        path: path.to_path_buf(),
        source: e,
    })?;
    let channels = match frame.color_type {
        png::ColorType::Rgb => 3,
        _ => 1,
    };
    let n = frame.width as usize * frame.height as usize * channels;
    let data: Vec<f32> = buf[..n].iter().map(|&b| dequantize(b)).collect();
    ImageTensor::new(frame.height as usize, frame.width as usize, channels, data)
}

fn save_ppm(path: &Path, img: &ImageTensor) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            detail: "ppm p6 holds rgb; save grayscale as png".to_string(),
        });
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&bytes))
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<ImageTensor> {
    let bad = |detail: &str| Error::UnsupportedImage {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut pos = 2usize; // past the "P6" magic

    let next_token = |bytes: &[u8], pos: &mut usize| -> Result<u64> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("malformed ppm header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed ppm header"))
    };

    let width = next_token(bytes, &mut pos)? as usize;
    let height = next_token(bytes, &mut pos)? as usize;
    let maxval = next_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(bad("ppm maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from the pixel data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing separator after ppm header"));
    }
    pos += 1;
    let n = height
        .checked_mul(width)
        .and_then(|hw| hw.checked_mul(3))
        .ok_or_else(|| bad("ppm dimensions overflow"))?;
    let pixels = bytes
        .get(pos..pos + n)
        .ok_or_else(|| bad("truncated ppm pixel data"))?;
    let data: Vec<f32> = pixels.iter().map(|&b| dequantize(b)).collect();
    ImageTensor::new(height, width, 3, data)
}
