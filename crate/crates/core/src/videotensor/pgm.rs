//! Binary PGM (P5) frame sequences, one file per frame named `frame_%05d.pgm`.
//!
//! Pixel values map to reals without rescaling. Export rounds to the nearest
//! integer; 16-bit samples are big-endian as the format requires.

use std::fs;
use std::path::{Path, PathBuf};

use super::VideoTensor;
use crate::error::{Error, Result};

pub(crate) fn frame_name(tau: usize) -> String {
    format!("frame_{tau:05}.pgm")
}

struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

fn parse(path: &Path, bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
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
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P5" {
        return Err(Error::format(path, "not a binary PGM (P5) file"));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        token(pos)?
            .parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad {what} in PGM header")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::NonPositiveDimension(width, height, 1));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bytes_per;
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() >= need)
        .ok_or_else(|| Error::format(path, "truncated PGM raster"))?;
    let pixels = if bytes_per == 1 {
        raster[..need].iter().map(|&b| b as f64).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Ok(Frame {
        width,
        height,
        pixels,
    })
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let is_frame = name.len() == "frame_00000.pgm".len()
            && name.starts_with("frame_")
            && name.ends_with(".pgm")
            && name[6..11].bytes().all(|b| b.is_ascii_digit());
        if is_frame {
            paths.push(entry.path());
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no frame_%05d.pgm files found"));
    }
    for (tau, p) in paths.iter().enumerate() {
        if p.file_name().map(|n| n.to_string_lossy().into_owned()) != Some(frame_name(tau)) {
            return Err(Error::format(dir, format!("missing {}", frame_name(tau))));
        }
    }
    Ok(paths)
}

pub(super) fn load_sequence(dir: &Path) -> Result<VideoTensor> {
    let paths = frame_paths(dir)?;
    let mut data = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for p in &paths {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let frame = parse(p, &bytes)?;
        match dims {
            None => dims = Some((frame.width, frame.height)),
            Some(d) if d != (frame.width, frame.height) => {
                return Err(Error::format(
                    p,
                    format!(
                        "dimension mismatch across frames: {}x{} vs {}x{}",
                        frame.width, frame.height, d.0, d.1
                    ),
                ))
            }
            Some(_) => {}
        }
        data.extend(frame.pixels);
    }
    let (w, h) = dims.expect("at least one frame");
    VideoTensor::new(w, h, paths.len(), data)
}

pub(super) fn save_sequence(v: &VideoTensor, dir: &Path) -> Result<()> {
    let mut quantized = Vec::with_capacity(v.len());
    for (index, &x) in v.data().iter().enumerate() {
        let q = x.round();
        if !(0.0..=65535.0).contains(&q) {
            return Err(Error::PgmRange { index, value: x });
        }
        quantized.push(q as u16);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fl = v.frame_len();
    for tau in 0..v.frames() {
        let frame = &quantized[tau * fl..(tau + 1) * fl];
        let wide = frame.iter().any(|&q| q > 255);
        let maxval = if wide { 65535 } else { 255 };
        let mut bytes = format!("P5\n{} {}\n{}\n", v.width(), v.height(), maxval).into_bytes();
        for &q in frame {
            if wide {
                bytes.extend_from_slice(&q.to_be_bytes());
            } else {
                bytes.push(q as u8);
            }
        }
        let p = dir.join(frame_name(tau));
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
