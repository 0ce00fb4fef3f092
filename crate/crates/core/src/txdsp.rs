//! Transmit chain: pilot framing, RRC pulse shaping, digital up-conversion
//! and the DAC model.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError};
use crate::rng::{stream_rng, Stream};
use crate::types::DualPol;

#[derive(Debug, Error, PartialEq)]
pub enum TxError {
    #[error("no data symbols to frame")]
    EmptyData,
    #[error("polarisations carry different numbers of symbols ({0} vs {1})")]
    PolLengthMismatch(usize, usize),
    #[error("only a 1:1 pilot/data interleave is supported, got pilot ratio {0}")]
    UnsupportedPilotRatio(f64),
    #[error("frame length must be a positive even number of symbols, got {0}")]
    InvalidFrameLength(usize),
    #[error("DAC resolution must lie in 4..=16 bits, got {0}")]
    InvalidBits(u32),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Pilot/data interleave description shared by transmitter and receiver.
///
/// Even symbol slots carry pilots, odd slots carry quantum data. Pilot
/// symbols are unit-modulus QPSK scaled by
/// `reference_rms · 10^(pilot_gain_db / 20)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub pilot_ratio: f64,
    pub pilot_gain_db: f64,
    /// Unit-modulus QPSK pilots, one per pilot slot of a frame.
    pub pilot_sequence: DualPol<Vec<Complex64>>,
    /// Symbols per frame, pilots included.
    pub frame_length: usize,
    /// RMS amplitude of the data stream the pilot boost refers to.
    pub reference_rms: f64,
    pub pilot_seed: u64,
}

impl FrameLayout {
    pub fn new(frame_length: usize, pilot_gain_db: f64, reference_rms: f64, pilot_seed: u64) -> Result<Self, TxError> {
        if frame_length == 0 || !frame_length.is_multiple_of(2) {
            return Err(TxError::InvalidFrameLength(frame_length));
        }
        let slots = frame_length / 2;
        let pilot_sequence = DualPol::new(qpsk_sequence(slots, pilot_seed, 0), qpsk_sequence(slots, pilot_seed, 1));
        Ok(Self { pilot_ratio: 0.5, pilot_gain_db, pilot_sequence, frame_length, reference_rms, pilot_seed })
    }

    pub fn pilot_amplitude(&self) -> f64 {
        self.reference_rms * 10f64.powf(self.pilot_gain_db / 20.0)
    }

    pub fn pilots_per_frame(&self) -> usize {
        self.frame_length / 2
    }

    pub fn is_pilot_slot(&self, symbol_index: usize) -> bool {
        symbol_index.is_multiple_of(2)
    }

    /// Scaled reference pilot for polarisation `pol` (0 = X) and pilot slot `i`.
    pub fn pilot(&self, pol: usize, i: usize) -> Complex64 {
        let seq = if pol == 0 { &self.pilot_sequence.x } else { &self.pilot_sequence.y };
        seq[i % seq.len()] * self.pilot_amplitude()
    }

    fn check_ratio(&self) -> Result<(), TxError> {
        if (self.pilot_ratio - 0.5).abs() > 1e-12 {
            return Err(TxError::UnsupportedPilotRatio(self.pilot_ratio));
        }
        Ok(())
    }
}

fn qpsk_sequence(len: usize, seed: u64, pol: u64) -> Vec<Complex64> {
    let mut rng = stream_rng(seed, Stream::Pilots, pol);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let b: u8 = rng.random_range(0..4);
            Complex64::new(if b & 1 == 0 { s } else { -s }, if b & 2 == 0 { s } else { -s })
        })
        .collect()
}

/// Interleave pilots and data symbol-wise: `out[2i]` is a pilot, `out[2i+1]` data.
pub fn build_frame(data: &DualPol<Vec<Complex64>>, layout: &FrameLayout) -> Result<DualPol<Vec<Complex64>>, TxError> {
    layout.check_ratio()?;
    if data.x.is_empty() || data.y.is_empty() {
        return Err(TxError::EmptyData);
    }
    if data.x.len() != data.y.len() {
        return Err(TxError::PolLengthMismatch(data.x.len(), data.y.len()));
    }
    let interleave = |pol: usize, d: &[Complex64]| {
        let mut out = Vec::with_capacity(2 * d.len());
        for (i, s) in d.iter().enumerate() {
            out.push(layout.pilot(pol, i));
            out.push(*s);
        }
        out
    };
    Ok(DualPol::new(interleave(0, &data.x), interleave(1, &data.y)))
}

/// Dual-polarisation complex sample streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub pol_x: Vec<Complex64>,
    pub pol_y: Vec<Complex64>,
    pub sample_rate: f64,
    /// Digital carrier offset currently applied, in Hz.
    pub center_offset: f64,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.pol_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pol_x.is_empty()
    }

    pub fn pols(&self) -> DualPol<&[Complex64]> {
        DualPol::new(&self.pol_x, &self.pol_y)
    }

    /// RMS over all four real components.
    pub fn real_rms(&self) -> f64 {
        let n = (self.pol_x.len() + self.pol_y.len()) * 2;
        if n == 0 {
            return 0.0;
        }
        let e: f64 = self.pol_x.iter().chain(&self.pol_y).map(|s| s.norm_sqr()).sum();
        (e / n as f64).sqrt()
    }
}

/// Samples of the transmit pulse for one symbol: unit-energy RRC scaled by
/// `√sps`, so a unit-energy matched filter at any rate returns the symbol value.
pub fn tx_pulse(rolloff: f64, sps: usize, span: usize) -> Result<Vec<f64>, TxError> {
    let g = (sps as f64).sqrt();
    Ok(dsp::rrc_taps(rolloff, sps, span)?.into_iter().map(|t| t * g).collect())
}

/// Upsample, RRC-shape and shift the framed symbols to `shift` Hz.
///
/// Symbol `k` peaks at sample `k·sps + span·sps/2`.
pub fn pulse_shape_upconvert(
    symbols: &DualPol<Vec<Complex64>>,
    rolloff: f64,
    span: usize,
    dac_rate: f64,
    symbol_rate: f64,
    shift: f64,
) -> Result<Waveform, TxError> {
    let sps = dsp::integer_ratio(dac_rate, symbol_rate)?;
    let pulse = tx_pulse(rolloff, sps, span)?;
    let shape = |s: &[Complex64]| {
        let mut up = vec![Complex64::new(0.0, 0.0); s.len() * sps];
        for (i, v) in s.iter().enumerate() {
            up[i * sps] = *v;
        }
        let mut full = dsp::convolve(&up, &pulse);
        // Drop the trailing zero-insertion padding beyond the last pulse tail.
        full.truncate(s.len() * sps + span * sps);
        dsp::mix(&full, shift, dac_rate)
    };
    Ok(Waveform { pol_x: shape(&symbols.x), pol_y: shape(&symbols.y), sample_rate: dac_rate, center_offset: shift })
}

/// Uniform mid-tread quantiser with `2^bits` levels over `±full_scale`.
pub fn quantize(value: f64, bits: u32, full_scale: f64) -> f64 {
    let half_levels = (1i64 << (bits - 1)) as f64;
    let step = 2.0 * full_scale / (1u64 << bits) as f64;
    let clipped = value.clamp(-full_scale, full_scale);
    let idx = (clipped / step).round().clamp(-half_levels, half_levels - 1.0);
    idx * step
}

/// Clip each real component to `±clip_scale·RMS` and quantise to `bits` bits.
pub fn dac_model(w: &Waveform, bits: u32, clip_scale: f64) -> Result<Waveform, TxError> {
    if !(4..=16).contains(&bits) {
        return Err(TxError::InvalidBits(bits));
    }
    let rms = w.real_rms();
    if rms == 0.0 {
        return Ok(w.clone());
    }
    let fs = clip_scale * rms;
    Ok(quantize_waveform(w, bits, fs))
}

pub(crate) fn quantize_waveform(w: &Waveform, bits: u32, full_scale: f64) -> Waveform {
    let q = |s: &[Complex64]| {
        s.iter().map(|c| Complex64::new(quantize(c.re, bits, full_scale), quantize(c.im, bits, full_scale))).collect()
    };
    Waveform { pol_x: q(&w.pol_x), pol_y: q(&w.pol_y), sample_rate: w.sample_rate, center_offset: w.center_offset }
}
