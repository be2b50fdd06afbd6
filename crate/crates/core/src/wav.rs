//! Multichannel WAV input/output used by the simulator and the CLI.
//!
//! Scenes are written as 32-bit float WAV; reading accepts 32-bit float or
//! 16-bit PCM (scaled to [-1, 1)).

use std::path::Path;

use crate::{Error, Real, Result};

/// Writes channel-major samples as an interleaved float32 WAV file.
pub fn write_wav(path: &Path, channels: &[Vec<Real>], sample_rate: u32) -> Result<()> {
    let first = channels.first().ok_or(Error::NoChannels)?;
    let len = first.len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::DimensionMismatch(
            "channels differ in length".into(),
        ));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for i in 0..len {
        for channel in channels {
            writer.write_sample(channel[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Reads an interleaved WAV file into channel-major samples.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<Real>>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_channels = spec.channels as usize;
    if n_channels == 0 {
        return Err(Error::NoChannels);
    }
    let mut channels = vec![Vec::new(); n_channels];
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => {
            for (i, sample) in reader.samples::<f32>().enumerate() {
                channels[i % n_channels].push(sample? as Real);
            }
        }
        (hound::SampleFormat::Int, 16) => {
            let scale = 1.0 / 32768.0;
            for (i, sample) in reader.samples::<i16>().enumerate() {
                channels[i % n_channels].push(sample? as Real * scale);
            }
        }
        (format, bits) => {
            return Err(Error::Config(format!(
                "unsupported WAV format {format:?} at {bits} bits; expected float32 or pcm16"
            )));
        }
    }
    Ok((channels, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("gsrp-wav-{}-{name}", std::process::id()))
    }

    #[test]
    fn float_roundtrip_multichannel() {
        let path = temp_path("f32.wav");
        let channels: Vec<Vec<Real>> = (0..3)
            .map(|c| (0..100).map(|i| ((i + c * 7) as Real * 0.01).sin()).collect())
            .collect();
        write_wav(&path, &channels, 16000).unwrap();
        let (back, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 16000);
        assert_eq!(back.len(), 3);
        for (a, b) in channels.iter().zip(&back) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-7);
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn pcm16_read() {
        let path = temp_path("i16.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -16384, 32767] {
            writer.write_sample(v).unwrap();
        }
        writer.finalize().unwrap();
        let (channels, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 8000);
        assert_eq!(channels.len(), 1);
        assert!((channels[0][1] - 0.5).abs() < 1e-6);
        assert!((channels[0][2] + 0.5).abs() < 1e-6);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn mismatched_channels_rejected() {
        let path = temp_path("bad.wav");
        let channels = vec![vec![0.0; 10], vec![0.0; 9]];
        assert!(write_wav(&path, &channels, 16000).is_err());
        assert!(write_wav(&path, &[], 16000).is_err());
    }
}
