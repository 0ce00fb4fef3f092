//! On-disk sample formats.
//!
//! Waveforms and ADC captures are stored as little-endian `f32` samples
//! interleaved `[Ix, Qx, Iy, Qy]`, with a `key = value` text sidecar at
//! `<path>.hdr`. Symbol dumps use interleaved complex `f32` pairs per
//! polarisation with the same sidecar convention.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

use crate::txdsp::Waveform;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Free-form sidecar entries. `sample_rate` and `center_offset` are always
/// written by [`write_waveform`].
pub type Header = BTreeMap<String, String>;

pub fn encode_waveform(w: &Waveform) -> Vec<u8> {
    let mut out = Vec::with_capacity(w.len() * 16);
    for (x, y) in w.pol_x.iter().zip(&w.pol_y) {
        for v in [x.re, x.im, y.re, y.im] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_waveform(bytes: &[u8], sample_rate: f64, center_offset: f64) -> Result<Waveform, String> {
    if !bytes.len().is_multiple_of(16) {
        return Err(format!("length {} is not a multiple of 16 bytes", bytes.len()));
    }
    let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    let mut pol_x = Vec::with_capacity(bytes.len() / 16);
    let mut pol_y = Vec::with_capacity(bytes.len() / 16);
    for s in bytes.chunks_exact(16) {
        pol_x.push(Complex64::new(f(&s[0..4]), f(&s[4..8])));
        pol_y.push(Complex64::new(f(&s[8..12]), f(&s[12..16])));
    }
    Ok(Waveform { pol_x, pol_y, sample_rate, center_offset })
}

fn render_header(h: &Header) -> String {
    h.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn parse_header(text: &str) -> Header {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).collect()
}

pub fn write_waveform(path: &Path, w: &Waveform, extra: &Header) -> Result<(), FileError> {
    let mut h = extra.clone();
    h.insert("format".into(), "f32le interleaved Ix,Qx,Iy,Qy".into());
    h.insert("samples".into(), w.len().to_string());
    h.insert("sample_rate".into(), format!("{:e}", w.sample_rate));
    h.insert("center_offset".into(), format!("{:e}", w.center_offset));
    fs::write(path, encode_waveform(w)).map_err(io_err(path))?;
    let hp = header_path(path);
    fs::write(&hp, render_header(&h)).map_err(io_err(&hp))
}

pub fn read_waveform(path: &Path) -> Result<(Waveform, Header), FileError> {
    let hp = header_path(path);
    let header = parse_header(&fs::read_to_string(&hp).map_err(io_err(&hp))?);
    let num = |key: &str| -> Result<f64, FileError> {
        header
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FileError::Format { path: hp.clone(), msg: format!("missing or invalid `{key}`") })
    };
    let rate = num("sample_rate")?;
    let offset = num("center_offset")?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let w = decode_waveform(&bytes, rate, offset).map_err(|msg| FileError::Format { path: path.to_path_buf(), msg })?;
    Ok((w, header))
}

/// Complex symbol dump: `f32le` re/im pairs, X polarisation then Y.
pub fn write_symbols(path: &Path, x: &[Complex64], y: &[Complex64], extra: &Header) -> Result<(), FileError> {
    let mut out = Vec::with_capacity((x.len() + y.len()) * 8);
    for s in x.iter().chain(y) {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut h = extra.clone();
    h.insert("format".into(), "complex64 pairs, pol X block then pol Y block".into());
    h.insert("count_x".into(), x.len().to_string());
    h.insert("count_y".into(), y.len().to_string());
    fs::write(path, out).map_err(io_err(path))?;
    let hp = header_path(path);
    fs::write(&hp, render_header(&h)).map_err(io_err(&hp))
}
