//! Minimal RIFF/WAVE reader and writer for mono audio.
//!
//! Supports 32-bit float (default) and 16-bit integer payloads. The reader
//! accepts files written by this module and by common tools, skipping
//! chunks it does not understand.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization target: one decibel below full scale.
pub const PEAK_TARGET: f64 = 0.8912509381337456;

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFormat {
    Float32,
    Int16,
}

impl Default for SampleFormat {
    fn default() -> Self {
        SampleFormat::Float32
    }
}

/// Scales `samples` in place so the peak magnitude equals [`PEAK_TARGET`]
/// and returns the gain applied. Silent input is left untouched and
/// reports a gain of 1.
pub fn normalize_peak(samples: &mut [f64]) -> f64 {
    let peak = samples.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if peak <= 0.0 || !peak.is_finite() {
        return 1.0;
    }
    let gain = PEAK_TARGET / peak;
    for v in samples.iter_mut() {
        *v *= gain;
    }
    gain
}

/// Writes mono `samples` to `path` in the requested encoding.
pub fn write_wav(
    path: &Path,
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_stream(&mut out, samples, sample_rate, format)?;
    out.flush()?;
    Ok(())
}

/// Encodes mono `samples` to complete WAV file bytes.
pub fn encode_wav(samples: &[f64], sample_rate: u32, format: SampleFormat) -> Result<Vec<u8>> {
    let bytes_per = match format {
        SampleFormat::Float32 => 4,
        SampleFormat::Int16 => 2,
    };
    let mut out = Vec::with_capacity(64 + bytes_per * samples.len());
    write_stream(&mut out, samples, sample_rate, format)?;
    Ok(out)
}

fn write_stream(
    out: &mut impl Write,
    samples: &[f64],
    sample_rate: u32,
    format: SampleFormat,
) -> Result<()> {
    let (format_code, bits, data_len) = match format {
        SampleFormat::Float32 => (3u16, 32u16, 4 * samples.len()),
        SampleFormat::Int16 => (1u16, 16u16, 2 * samples.len()),
    };
    let data_len = u32::try_from(data_len)
        .map_err(|_| Error::Wav("sample data exceeds 4 GiB".into()))?;
    // Float files carry a fact chunk announcing the frame count.
    let fact_len: u32 = match format {
        SampleFormat::Float32 => 12,
        SampleFormat::Int16 => 0,
    };
    let riff_len = 4 + 24 + fact_len + 8 + data_len;
    out.write_all(b"RIFF")?;
    out.write_all(&riff_len.to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&format_code.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&sample_rate.to_le_bytes())?;
    let block_align = u32::from(bits / 8);
    out.write_all(&(sample_rate * block_align).to_le_bytes())?;
    out.write_all(&(bits / 8).to_le_bytes())?;
    out.write_all(&bits.to_le_bytes())?;
    if format == SampleFormat::Float32 {
        out.write_all(b"fact")?;
        out.write_all(&4u32.to_le_bytes())?;
        out.write_all(&(samples.len() as u32).to_le_bytes())?;
    }
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    match format {
        SampleFormat::Float32 => {
            for &v in samples {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        SampleFormat::Int16 => {
            for &v in samples {
                let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                out.write_all(&q.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact_array(r)?))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    Ok(u16::from_le_bytes(read_exact_array(r)?))
}

/// Reads a mono WAV file, returning samples as f64 along with the sample
/// rate and the encoding found on disk.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32, SampleFormat)> {
    let mut inp = BufReader::new(File::open(path)?);
    if &read_exact_array::<4>(&mut inp)? != b"RIFF" {
        return Err(Error::Wav("missing RIFF header".into()));
    }
    let _riff_len = read_u32(&mut inp)?;
    if &read_exact_array::<4>(&mut inp)? != b"WAVE" {
        return Err(Error::Wav("not a WAVE file".into()));
    }
    let mut fmt: Option<(u16, u16, u32)> = None;
    loop {
        let tag = match read_exact_array::<4>(&mut inp) {
            Ok(t) => t,
            Err(_) => return Err(Error::Wav("no data chunk".into())),
        };
        let len = read_u32(&mut inp)?;
        match &tag {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let format_code = read_u16(&mut inp)?;
                let channels = read_u16(&mut inp)?;
                let sample_rate = read_u32(&mut inp)?;
                let _byte_rate = read_u32(&mut inp)?;
                let _block_align = read_u16(&mut inp)?;
                let bits = read_u16(&mut inp)?;
                if channels != 1 {
                    return Err(Error::Wav(format!(
                        "expected mono, found {channels} channels"
                    )));
                }
                let mut rest = vec![0u8; (len - 16) as usize + (len % 2) as usize];
                inp.read_exact(&mut rest)?;
                fmt = Some((format_code, bits, sample_rate));
            }
            b"data" => {
                let (format_code, bits, sample_rate) =
                    fmt.ok_or_else(|| Error::Wav("data chunk before fmt".into()))?;
                let mut raw = vec![0u8; len as usize];
                inp.read_exact(&mut raw)?;
                return match (format_code, bits) {
                    (3, 32) => {
                        let samples = raw
                            .chunks_exact(4)
                            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                            .collect();
                        Ok((samples, sample_rate, SampleFormat::Float32))
                    }
                    (1, 16) => {
                        let samples = raw
                            .chunks_exact(2)
                            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32767.0)
                            .collect();
                        Ok((samples, sample_rate, SampleFormat::Int16))
                    }
                    _ => Err(Error::Wav(format!(
                        "unsupported encoding: format {format_code}, {bits} bits"
                    ))),
                };
            }
            _ => {
                // Skip unknown chunks, honoring RIFF word alignment.
                let skip = u64::from(len) + u64::from(len % 2);
                std::io::copy(&mut inp.by_ref().take(skip), &mut std::io::sink())?;
            }
        }
    }
}
