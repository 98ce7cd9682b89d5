use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Mono 16-bit linear PCM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioSignal {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty audio signal".into()));
        }
        Ok(AudioSignal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples scaled to [-1, 1).
    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| f64::from(s) / 32768.0).collect()
    }
}

pub fn read_audio(path: &Path) -> Result<AudioSignal> {
    let fmt_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut reader = WavReader::open(path).map_err(fmt_err)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int {
        return Err(Error::UnsupportedEncoding(format!("{}: floating-point samples", path.display())));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: {}-bit samples",
            path.display(),
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedEncoding(format!("{}: {} channels, expected mono", path.display(), spec.channels)));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, format!("truncated data: {e}")))?;
    if samples.len() != declared {
        return Err(Error::format(
            path,
            format!("truncated data: header declares {declared} samples, found {}", samples.len()),
        ));
    }
    AudioSignal::new(samples, spec.sample_rate).map_err(|_| Error::format(path, "no samples"))
}

pub fn write_audio(signal: &AudioSignal, path: &Path) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let hound_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(hound_err)?;
    for &s in &signal.samples {
        writer.write_sample(s).map_err(hound_err)?;
    }
    writer.finalize().map_err(hound_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_audio(&AudioSignal::new(vec![0; 16_000], 16_000).unwrap(), &p).unwrap();
        let back = read_audio(&p).unwrap();
        assert_eq!(back.samples.len(), 16_000);
        assert!(back.samples.iter().all(|&s| s == 0));
        assert_eq!(back.sample_rate, 16_000);
    }

    #[test]
    fn float_wav_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        let err = read_audio(&p).unwrap_err();
        assert!(err.to_string().contains("unsupported encoding"), "{err}");
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(1i16).unwrap();
        w.write_sample(1i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_audio(&p), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn truncated_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_audio(&AudioSignal::new((0..1000).map(|i| i as i16).collect(), 16_000).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 101]).unwrap();
        assert!(read_audio(&p).is_err());
    }
}
