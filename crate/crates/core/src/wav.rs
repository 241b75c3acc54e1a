//! RIFF WAV input/output (16-bit PCM and 32-bit float).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Read a WAV file. When `expected_rate` is given, a different file rate is
/// an error; nothing is resampled.
pub fn read_wav(path: impl AsRef<Path>, expected_rate: Option<u32>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if let Some(expected) = expected_rate {
        if spec.sample_rate != expected {
            return Err(Error::SampleRateMismatch {
                file: spec.sample_rate,
                expected,
            });
        }
    }
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1_i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
        (fmt, bits) => {
            return Err(Error::InvalidWaveform(format!(
                "{}: unsupported sample format {fmt:?}/{bits}",
                path.display()
            )))
        }
    };
    let len = interleaved.len() / nch;
    let mut channels = vec![Vec::with_capacity(len); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Waveform::new(channels, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for n in 0..w.len() {
        for ch in w.channels() {
            let v = ch[n];
            match format {
                WavFormat::Pcm16 => {
                    let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                    writer.write_sample(q).map_err(wav_err(path))?;
                }
                WavFormat::Float32 => writer.write_sample(v as f32).map_err(wav_err(path))?,
            }
        }
    }
    writer.finalize().map_err(wav_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_and_rate_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![vec![0.25, -0.5, 0.125], vec![0.0, 1.0, -1.0]], 8000).unwrap();
        write_wav(&p, &w, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p, Some(8000)).unwrap(), w);
        assert!(matches!(
            read_wav(&p, Some(16000)),
            Err(Error::SampleRateMismatch {
                file: 8000,
                expected: 16000
            })
        ));
    }

    #[test]
    fn pcm16_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let w = Waveform::mono(vec![0.5, -0.25, 0.0], 16000).unwrap();
        write_wav(&p, &w, WavFormat::Pcm16).unwrap();
        let r = read_wav(&p, None).unwrap();
        for (a, b) in r.channel(0).iter().zip(w.channel(0)) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
