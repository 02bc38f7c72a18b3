//! Binary PGM (P5) and PPM (P6) decoding.

use crate::features::GrayImage;
use crate::{Error, Result, Scalar};

/// Luminance weights for RGB input.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => {
            return Err(Error::UnsupportedFormat(format!(
                "magic {:?}; only binary P5/P6 are supported",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(Error::Truncated("missing PNM magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Truncated("PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::UnsupportedFormat("non-numeric PNM header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::UnsupportedFormat("PNM header field out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(Error::UnsupportedFormat("malformed PNM header".into())),
        None => return Err(Error::Truncated("PNM pixel data".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("zero image extent".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}")));
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos,
    })
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<GrayImage<T>> {
    let h = parse_header(bytes)?;
    let sample_bytes = if h.maxval > 255 { 2 } else { 1 };
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels * sample_bytes))
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let data = &bytes[h.data_start..];
    if data.len() < need {
        return Err(Error::Truncated(format!(
            "pixel data: need {need} bytes, have {}",
            data.len()
        )));
    }
    let max = h.maxval as f64;
    let sample = |i: usize| -> f64 {
        let v = if sample_bytes == 2 {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
        } else {
            data[i] as f64
        };
        (v / max).min(1.0)
    };
    let n = h.width * h.height;
    let pixels = (0..n)
        .map(|p| {
            if h.channels == 1 {
                T::lit(sample(p))
            } else {
                let y = LUMA[0] * sample(3 * p) + LUMA[1] * sample(3 * p + 1) + LUMA[2] * sample(3 * p + 2);
                T::lit(y.min(1.0))
            }
        })
        .collect();
    GrayImage::new(h.width, h.height, pixels)
}

/// Encodes an 8-bit P5 image.
pub fn encode_pgm<T: Scalar>(image: &GrayImage<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|&p| (p.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}
