//! PNG and PGM reading/writing.
//!
//! 8-bit samples map to `v / 255`, 16-bit samples to `v / 65535`. Encoders
//! return bytes so callers can decide how the file lands on disk.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::Image;
use crate::{Error, Result};

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

/// Decodes PGM (P2/P5, 8 or 16 bit) or PNG bytes, sniffing the magic number.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        return decode_pgm(bytes);
    }
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    Ok(from_dynamic(dynamic))
}

fn from_dynamic(img: DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    let sixteen = matches!(
        img.color(),
        image::ColorType::L16
            | image::ColorType::La16
            | image::ColorType::Rgb16
            | image::ColorType::Rgba16
    );
    let data: Vec<f64> = match (gray, sixteen) {
        (true, false) => img.to_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        (true, true) => img.to_luma16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        (false, false) => img.to_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        (false, true) => img.to_rgb16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
    };
    Image::new(w, h, if gray { 1 } else { 3 }, data).expect("decoded dimensions")
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// 8-bit PNG, grayscale or RGB depending on the channel count.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("sized buffer"))
    };
    let mut out = Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Binary 8-bit PGM of a single-channel image.
pub fn encode_pgm8(img: &Image) -> Result<Vec<u8>> {
    img.require_gray("pgm image")?;
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v, 255.0) as u8));
    Ok(out)
}

/// Binary 16-bit (big-endian) PGM of a single-channel image in `[0, 1]`.
pub fn encode_pgm16(img: &Image) -> Result<Vec<u8>> {
    img.require_gray("pgm image")?;
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for &v in img.data() {
        out.extend_from_slice(&(quantize(v, 65535.0) as u16).to_be_bytes());
    }
    Ok(out)
}

/// Picks PNG or PGM from the file extension (`.pgm` → 8-bit PGM,
/// `.pgm16` → 16-bit PGM, anything else → PNG).
pub fn encode_for_path(img: &Image, path: impl AsRef<Path>) -> Result<Vec<u8>> {
    match path.as_ref().extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => encode_pgm8(img),
        Some(ext) if ext.eq_ignore_ascii_case("pgm16") => encode_pgm16(img),
        _ => encode_png(img),
    }
}

pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_for_path(img, path)?;
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::format("pgm", "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("pgm", "bad header field"))?;
    }
    // Exactly one whitespace byte separates the header from binary data.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("pgm", "missing header terminator"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format("pgm", format!("bad header {width}x{height} max {maxval}")));
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let header = parse_pgm_header(bytes)?;
    let n = header.width * header.height;
    let max = header.maxval as f64;
    let data: Vec<f64> = if bytes.starts_with(b"P2") {
        let text = std::str::from_utf8(&bytes[header.data_start..])
            .map_err(|_| Error::format("pgm", "non-ascii plain data"))?;
        let values: Vec<f64> = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().map(|v| v / max))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("pgm", "bad sample"))?;
        values
    } else if header.maxval < 256 {
        let body = bytes
            .get(header.data_start..header.data_start + n)
            .ok_or_else(|| Error::format("pgm", "truncated data"))?;
        body.iter().map(|&v| v as f64 / max).collect()
    } else {
        let body = bytes
            .get(header.data_start..header.data_start + 2 * n)
            .ok_or_else(|| Error::format("pgm", "truncated data"))?;
        body.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / max)
            .collect()
    };
    if data.len() != n {
        return Err(Error::format("pgm", "sample count mismatch"));
    }
    Image::new(header.width, header.height, 1, data)
}
