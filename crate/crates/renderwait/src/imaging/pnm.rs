//! Binary PGM (P5) / PPM (P6) frame files, maxval 255.
//!
//! Screencast directories hold one file per frame named
//! `frame_<timestamp_ms:010>.pgm` (or `.ppm` for RGB); the capture timestamp
//! lives in the file name.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

/// Canonical file name for a frame inside a screencast directory.
pub fn frame_filename(frame: &Frame) -> String {
    let ext = if frame.channels() == 1 { "pgm" } else { "ppm" };
    format!("frame_{:010}.{ext}", frame.timestamp_ms())
}

/// Write a frame as binary PGM/PPM.
pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut bytes =
        format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend_from_slice(frame.pixels());
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a binary PGM/PPM frame. The timestamp is recovered from the
/// `frame_<ms>` file name when present, otherwise 0.
pub fn read_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path)?;
    let (frame, _) = parse_pnm(&bytes, timestamp_from_name(path))?;
    Ok(frame)
}

fn timestamp_from_name(path: &Path) -> u64 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("frame_"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn parse_pnm(bytes: &[u8], timestamp_ms: u64) -> Result<(Frame, usize)> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1u8,
        "P6" => 3u8,
        other => return Err(Error::format(format!("unsupported pnm magic {other:?}"))),
    };
    let width: u32 = parse_field(bytes, &mut pos, "width")?;
    let height: u32 = parse_field(bytes, &mut pos, "height")?;
    let maxval: u32 = parse_field(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from raster data.
    pos += 1;
    let len = width as usize * height as usize * channels as usize;
    if bytes.len() < pos + len {
        return Err(Error::format("truncated pnm raster"));
    }
    let frame = Frame::new(
        width,
        height,
        channels,
        bytes[pos..pos + len].to_vec(),
        timestamp_ms,
    )
    .map_err(|e| Error::format(e.to_string()))?;
    Ok((frame, pos + len))
}

fn parse_field<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    next_token(bytes, pos)?
        .parse()
        .map_err(|_| Error::format(format!("bad pnm {what}")))
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    // Skip whitespace and `#` comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("unexpected end of pnm header"));
    }
    String::from_utf8(bytes[start..*pos].to_vec())
        .map_err(|_| Error::format("non-utf8 pnm header"))
}
