//! Binary PGM (`P5`) and PPM (`P6`) with 8-bit samples.

use std::path::Path;

use thiserror::Error;

use crate::image::ImageFrame;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PNM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported PNM variant: {0}")]
    Unsupported(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PnmError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(PnmError::Unsupported(format!("P{} (only binary P5/P6 are read)", *d as char)))
        }
        _ => return Err(PnmError::MalformedHeader("missing P5/P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and `#` comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][i];
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text
            .parse()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| PnmError::MalformedHeader(format!("bad {name} field")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PnmError::MalformedHeader("no whitespace after maxval".into())),
    }
    if fields[2] != 255 {
        return Err(PnmError::Unsupported(format!("maxval {} (only 8-bit 255 is supported)", fields[2])));
    }
    Ok(Header {
        channels,
        width: fields[0],
        height: fields[1],
        data_offset: pos,
    })
}

/// Decodes a P5/P6 image; samples are scaled by 1/255. Bytes after the
/// payload are ignored.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageFrame, PnmError> {
    let h = parse_header(bytes)?;
    let plane = h.width * h.height;
    let expected = plane * h.channels;
    let payload = &bytes[h.data_offset..];
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    // interleaved RGB on disk, planar in memory
    let mut pixels = vec![0.0f32; expected];
    for (i, &b) in payload[..expected].iter().enumerate() {
        let (p, c) = (i / h.channels, i % h.channels);
        pixels[c * plane + p] = b as f32 / 255.0;
    }
    ImageFrame::new(h.width, h.height, h.channels, pixels).map_err(|e| PnmError::MalformedHeader(e.to_string()))
}

/// Quantizes one sample: clamp to `[0, 1]`, scale by 255, round half away
/// from zero.
pub fn quantize(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    ((v.clamp(0.0, 1.0) as f64) * 255.0).round() as u8
}

pub fn encode_pnm(frame: &ImageFrame) -> Vec<u8> {
    let (w, h, c) = frame.dims();
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = w * h;
    out.reserve(plane * c);
    for p in 0..plane {
        for ch in 0..c {
            out.push(quantize(frame.pixels()[ch * plane + p]));
        }
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageFrame, PnmError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| PnmError::Io(path.display().to_string(), e))?;
    decode_pnm(&bytes)
}

/// Writes PGM for single-channel frames and PPM for colour frames.
pub fn write_image(frame: &ImageFrame, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(frame)).map_err(|e| PnmError::Io(path.display().to_string(), e))
}
