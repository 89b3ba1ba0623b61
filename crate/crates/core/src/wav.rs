//! RIFF/WAVE file I/O. Reads PCM-16 and IEEE float-32, writes float-32.

use std::io::{Error as IoError, ErrorKind};
use std::path::Path;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Load a WAV file as an [`AudioClip`].
///
/// Accepts PCM-16 (sample `q` maps to `q / 32768`) and IEEE float-32 (read
/// verbatim), 1 or 2 channels. Anything else is a format error; a file that
/// ends mid-chunk is an I/O error.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|e| match e {
        ParseError::Format(msg) => Error::WavFormat(msg),
        ParseError::Truncated(what) => Error::io(
            path,
            IoError::new(ErrorKind::UnexpectedEof, format!("truncated WAV: {what}")),
        ),
        ParseError::Audio(err) => err,
    })
}

/// Write `clip` as an IEEE float-32 WAV. `load_wav(save_wav(x))` reproduces
/// `x` bitwise whenever the samples are 32-bit representable; amplitudes
/// outside [-1, 1] are written unclipped.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(clip);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

enum ParseError {
    Format(String),
    Truncated(&'static str),
    Audio(Error),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], ParseError> {
        if self.pos + n > self.bytes.len() {
            return Err(ParseError::Truncated(what));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, ParseError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, ParseError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    audio_format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn parse_wav(bytes: &[u8]) -> std::result::Result<AudioClip, ParseError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "RIFF tag")? != b"RIFF" {
        return Err(ParseError::Format("missing RIFF tag".into()));
    }
    let _riff_size = cur.u32("RIFF size")?;
    if cur.take(4, "WAVE tag")? != b"WAVE" {
        return Err(ParseError::Format("missing WAVE tag".into()));
    }

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while cur.pos < bytes.len() {
        let id: [u8; 4] = cur.take(4, "chunk id")?.try_into().unwrap();
        let size = cur.u32("chunk size")? as usize;
        let body = cur.take(size, "chunk body")?;
        if size % 2 == 1 && cur.pos < bytes.len() {
            cur.pos += 1; // chunks are word-aligned
        }
        match &id {
            b"fmt " => {
                let mut f = Cursor { bytes: body, pos: 0 };
                format = Some(Format {
                    audio_format: f.u16("fmt audio format")?,
                    channels: f.u16("fmt channels")?,
                    sample_rate: {
                        let sr = f.u32("fmt sample rate")?;
                        let _byte_rate = f.u32("fmt byte rate")?;
                        let _block_align = f.u16("fmt block align")?;
                        sr
                    },
                    bits_per_sample: f.u16("fmt bits per sample")?,
                });
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {} // skip unknown chunks (fact, LIST, ...)
        }
    }

    let fmt = format.ok_or_else(|| ParseError::Format("missing fmt chunk".into()))?;
    let data = data.ok_or(ParseError::Truncated("missing data chunk"))?;

    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(ParseError::Format(format!(
            "{} channels unsupported (need 1 or 2)",
            fmt.channels
        )));
    }
    let channels = fmt.channels as usize;

    let samples: Vec<f64> = match (fmt.audio_format, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (f, b) => {
            return Err(ParseError::Format(format!(
                "audio format {f} at {b} bits unsupported (need PCM-16 or float-32)"
            )))
        }
    };

    let frames = samples.len() / channels;
    if frames == 0 {
        return Err(ParseError::Format("empty data chunk".into()));
    }
    let mut per_channel = vec![Vec::with_capacity(frames); channels];
    for frame in samples.chunks_exact(channels) {
        for (ch, &s) in per_channel.iter_mut().zip(frame.iter()) {
            ch.push(s);
        }
    }
    AudioClip::new(per_channel, fmt.sample_rate).map_err(ParseError::Audio)
}

fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let channels = clip.channel_count() as u16;
    let sample_rate = clip.sample_rate();
    let frames = clip.len() as u32;
    let block_align = channels as u32 * 4;
    let data_size = frames * block_align;
    // RIFF body: WAVE + fmt(8+16) + fact(8+4) + data(8+size)
    let riff_size = 4 + 24 + 12 + 8 + data_size;

    let mut out = Vec::with_capacity(riff_size as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_size.to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());

    // fact chunk is customary for non-PCM formats
    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for i in 0..clip.len() {
        for ch in clip.channels() {
            out.extend_from_slice(&(ch[i] as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // keep the dir alive by leaking it; tests are short-lived
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn float32_round_trip_is_bitwise() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut make = || -> Vec<f64> {
            (0..1000)
                .map(|_| rng.random_range(-1.0_f32..1.0) as f64)
                .collect()
        };
        let left = make();
        let right = make();
        let clip = AudioClip::new(vec![left, right], 44100).unwrap();
        let path = temp_path("rt.wav");
        save_wav(&clip, &path).unwrap();
        let loaded = load_wav(&path).unwrap();
        assert_eq!(clip, loaded);
    }

    #[test]
    fn one_sample_mono_round_trips() {
        let clip = AudioClip::new(vec![vec![0.25]], 8000).unwrap();
        let path = temp_path("one.wav");
        save_wav(&clip, &path).unwrap();
        assert_eq!(load_wav(&path).unwrap(), clip);
    }

    #[test]
    fn amplitudes_outside_unit_range_survive() {
        let clip = AudioClip::new(vec![vec![1.5, -2.0, 0.0]], 44100).unwrap();
        let path = temp_path("loud.wav");
        save_wav(&clip, &path).unwrap();
        assert_eq!(load_wav(&path).unwrap(), clip);
    }

    #[test]
    fn pcm16_scaling() {
        // Hand-built PCM-16 mono file with samples 16384 and -32768.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
        bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&88200u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&16384i16.to_le_bytes());
        bytes.extend_from_slice(&(-32768i16).to_le_bytes());
        let path = temp_path("pcm.wav");
        std::fs::write(&path, &bytes).unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.channel(0), &[0.5, -1.0]);
    }

    #[test]
    fn pcm24_is_a_format_error() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 6).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&132300u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&24u16.to_le_bytes()); // 24-bit: unsupported
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&6u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 6]);
        let path = temp_path("pcm24.wav");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_wav(&path), Err(Error::WavFormat(_))));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let clip = AudioClip::new(vec![vec![0.1; 100]], 44100).unwrap();
        let path = temp_path("trunc.wav");
        save_wav(&clip, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 37]).unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let clip = AudioClip::new(vec![vec![0.0; 4]], 44100).unwrap();
        assert!(matches!(
            save_wav(&clip, "/nonexistent-dir/x.wav"),
            Err(Error::Io { .. })
        ));
    }
}
