//! Multi-head delay pattern over RVQ token grids.
//!
//! Codebook row `k` is shifted right by `k` frames so that a single
//! autoregressive step emits one token per codebook:
//!
//! ```text
//! a0 a1 P  P
//! P  b0 b1 P
//! P  P  c0 c1
//! ```
//!
//! Grids are stored row-major. The binary file format is
//! `"TGRD" | u32 K | u32 T | u32 V | f64 rate | K*T u32` (little-endian) for
//! plain grids and `"TGDL" | u32 K | u32 T | u32 V | f64 rate | u32 pad |
//! K*(T+K-1) u32` for delayed grids, where `T` is the undelayed frame count.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FRAME_RATE_HZ: f64 = 12.5;
/// Inferred from 2 kbps = 16 layers x 12.5 Hz x log2(V); keep configurable.
pub const DEFAULT_VOCAB_SIZE: u32 = 1024;
pub const DEFAULT_LAYERS: usize = 16;

pub const GRID_MAGIC: &[u8; 4] = b"TGRD";
pub const DELAYED_MAGIC: &[u8; 4] = b"TGDL";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("pad token {pad} collides with vocabulary of size {vocab}")]
    PadInVocab { pad: u32, vocab: u32 },
    #[error("malformed delay layout at row {row}, column {col}: {reason}")]
    MalformedDelay {
        row: usize,
        col: usize,
        reason: &'static str,
    },
    #[error("requested {requested} layers but grid has {available}")]
    LayerCountExceeded { requested: usize, available: usize },
    #[error("layer count must be at least 1")]
    NoLayers,
    #[error("token {value} at row {row}, column {col} is outside vocabulary of size {vocab}")]
    TokenOutOfRange {
        row: usize,
        col: usize,
        value: u32,
        vocab: u32,
    },
    #[error("grid shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("truncated grid file")]
    Truncated,
    #[error("trailing bytes after grid payload")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// K x T matrix of codebook indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenGrid {
    codebooks: usize,
    frames: usize,
    vocab_size: u32,
    frame_rate_hz: f64,
    values: Vec<u32>,
}

impl TokenGrid {
    pub fn new(
        codebooks: usize,
        frames: usize,
        vocab_size: u32,
        frame_rate_hz: f64,
        values: Vec<u32>,
    ) -> Result<Self, CodecError> {
        if codebooks == 0 {
            return Err(CodecError::NoLayers);
        }
        if vocab_size == 0 {
            return Err(CodecError::InvalidGrid("vocabulary size must be positive"));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(CodecError::InvalidGrid("frame rate must be positive"));
        }
        let expected = codebooks * frames;
        if values.len() != expected {
            return Err(CodecError::ShapeMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|&v| v >= vocab_size) {
            return Err(CodecError::TokenOutOfRange {
                row: pos / frames,
                col: pos % frames,
                value: values[pos],
                vocab: vocab_size,
            });
        }
        Ok(Self {
            codebooks,
            frames,
            vocab_size,
            frame_rate_hz,
            values,
        })
    }

    /// Builds a grid from per-codebook rows.
    pub fn from_rows(rows: &[Vec<u32>], vocab_size: u32, frame_rate_hz: f64) -> Result<Self, CodecError> {
        let frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != frames) {
            return Err(CodecError::InvalidGrid("rows have different lengths"));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), frames, vocab_size, frame_rate_hz, values)
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[u32] {
        &self.values[k * self.frames..(k + 1) * self.frames]
    }

    pub fn get(&self, k: usize, t: usize) -> u32 {
        self.values[k * self.frames + t]
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.frame_rate_hz
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CodecError> {
        w.write_all(GRID_MAGIC)?;
        write_header(&mut w, self.codebooks, self.frames, self.vocab_size, self.frame_rate_hz)?;
        write_tokens(&mut w, &self.values)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CodecError> {
        expect_magic(&mut r, GRID_MAGIC)?;
        let (k, t, v, rate) = read_header(&mut r)?;
        let values = read_tokens(&mut r, k * t)?;
        ensure_eof(&mut r)?;
        Self::new(k, t, v, rate, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + 4 * self.values.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// A [`TokenGrid`] after [`apply_delay`]: `K` rows of width `T + K - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedGrid {
    codebooks: usize,
    frames: usize,
    vocab_size: u32,
    frame_rate_hz: f64,
    pad_token: u32,
    values: Vec<u32>,
}

impl DelayedGrid {
    /// Wraps raw delayed values. Layout is checked lazily by [`revert_delay`].
    pub fn from_raw(
        codebooks: usize,
        frames: usize,
        vocab_size: u32,
        frame_rate_hz: f64,
        pad_token: u32,
        values: Vec<u32>,
    ) -> Result<Self, CodecError> {
        if codebooks == 0 {
            return Err(CodecError::NoLayers);
        }
        if pad_token < vocab_size {
            return Err(CodecError::PadInVocab {
                pad: pad_token,
                vocab: vocab_size,
            });
        }
        let expected = codebooks * (frames + codebooks - 1);
        if values.len() != expected {
            return Err(CodecError::ShapeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            codebooks,
            frames,
            vocab_size,
            frame_rate_hz,
            pad_token,
            values,
        })
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    /// Frame count of the undelayed grid.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.frames + self.codebooks - 1
    }

    pub fn pad_token(&self) -> u32 {
        self.pad_token
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[u32] {
        let w = self.width();
        &self.values[k * w..(k + 1) * w]
    }

    pub fn pad_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == self.pad_token).count()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CodecError> {
        w.write_all(DELAYED_MAGIC)?;
        write_header(&mut w, self.codebooks, self.frames, self.vocab_size, self.frame_rate_hz)?;
        w.write_all(&self.pad_token.to_le_bytes())?;
        write_tokens(&mut w, &self.values)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CodecError> {
        expect_magic(&mut r, DELAYED_MAGIC)?;
        let (k, t, v, rate) = read_header(&mut r)?;
        if k == 0 {
            return Err(CodecError::NoLayers);
        }
        let pad = read_u32(&mut r)?;
        let values = read_tokens(&mut r, k * (t + k - 1))?;
        ensure_eof(&mut r)?;
        Self::from_raw(k, t, v, rate, pad, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(28 + 4 * self.values.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Shifts row `k` right by `k` frames, filling the gaps with `pad_token`.
pub fn apply_delay(grid: &TokenGrid, pad_token: u32) -> Result<DelayedGrid, CodecError> {
    if pad_token < grid.vocab_size {
        return Err(CodecError::PadInVocab {
            pad: pad_token,
            vocab: grid.vocab_size,
        });
    }
    let (k_count, t_count) = (grid.codebooks, grid.frames);
    let width = t_count + k_count - 1;
    let mut values = vec![pad_token; k_count * width];
    for k in 0..k_count {
        let dst = k * width + k;
        values[dst..dst + t_count].copy_from_slice(grid.row(k));
    }
    Ok(DelayedGrid {
        codebooks: k_count,
        frames: t_count,
        vocab_size: grid.vocab_size,
        frame_rate_hz: grid.frame_rate_hz,
        pad_token,
        values,
    })
}

/// Exact inverse of [`apply_delay`], validating the pad layout.
pub fn revert_delay(delayed: &DelayedGrid) -> Result<TokenGrid, CodecError> {
    let (k_count, t_count) = (delayed.codebooks, delayed.frames);
    let width = delayed.width();
    let pad = delayed.pad_token;
    let mut values = Vec::with_capacity(k_count * t_count);
    for k in 0..k_count {
        let row = delayed.row(k);
        for (col, &v) in row.iter().enumerate() {
            let in_payload = col >= k && col < k + t_count;
            if in_payload {
                if v == pad {
                    return Err(CodecError::MalformedDelay {
                        row: k,
                        col,
                        reason: "pad token inside payload",
                    });
                }
                if v >= delayed.vocab_size {
                    return Err(CodecError::TokenOutOfRange {
                        row: k,
                        col,
                        value: v,
                        vocab: delayed.vocab_size,
                    });
                }
            } else if v != pad {
                return Err(CodecError::MalformedDelay {
                    row: k,
                    col,
                    reason: "token where a pad is required",
                });
            }
        }
        debug_assert_eq!(row.len(), width);
        values.extend_from_slice(&row[k..k + t_count]);
    }
    TokenGrid::new(k_count, t_count, delayed.vocab_size, delayed.frame_rate_hz, values)
}

/// Keeps the first `n` (coarsest) codebooks.
pub fn select_layers(grid: &TokenGrid, n: usize) -> Result<TokenGrid, CodecError> {
    if n == 0 {
        return Err(CodecError::NoLayers);
    }
    if n > grid.codebooks {
        return Err(CodecError::LayerCountExceeded {
            requested: n,
            available: grid.codebooks,
        });
    }
    Ok(TokenGrid {
        codebooks: n,
        frames: grid.frames,
        vocab_size: grid.vocab_size,
        frame_rate_hz: grid.frame_rate_hz,
        values: grid.values[..n * grid.frames].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBudget {
    pub duration_s: f64,
    pub bits_per_second: f64,
}

/// Bits needed to address one of `vocab_size` entries: `ceil(log2 V)`.
pub fn bits_per_token(vocab_size: u64) -> u32 {
    if vocab_size <= 1 {
        0
    } else {
        u64::BITS - (vocab_size - 1).leading_zeros()
    }
}

/// Duration and bitrate of a `layers x frames` token stream.
pub fn frame_accounting(frames: u64, layers: u64, vocab_size: u64, rate_hz: f64) -> FrameBudget {
    FrameBudget {
        duration_s: frames as f64 / rate_hz,
        bits_per_second: layers as f64 * rate_hz * bits_per_token(vocab_size) as f64,
    }
}

fn write_header<W: Write>(w: &mut W, k: usize, t: usize, v: u32, rate: f64) -> Result<(), CodecError> {
    let k = u32::try_from(k).map_err(|_| CodecError::InvalidGrid("too many codebooks"))?;
    let t = u32::try_from(t).map_err(|_| CodecError::InvalidGrid("too many frames"))?;
    w.write_all(&k.to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&v.to_le_bytes())?;
    w.write_all(&rate.to_le_bytes())?;
    Ok(())
}

fn write_tokens<W: Write>(w: &mut W, values: &[u32]) -> Result<(), CodecError> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CodecError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CodecError::Truncated,
        _ => CodecError::Io(e),
    })
}

fn expect_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<(), CodecError> {
    let mut found = [0u8; 4];
    read_exact_or_truncated(r, &mut found)?;
    if &found != expected {
        return Err(CodecError::BadMagic {
            found,
            expected: *expected,
        });
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CodecError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, usize, u32, f64), CodecError> {
    let k = read_u32(r)? as usize;
    let t = read_u32(r)? as usize;
    let v = read_u32(r)?;
    let mut b = [0u8; 8];
    read_exact_or_truncated(r, &mut b)?;
    Ok((k, t, v, f64::from_le_bytes(b)))
}

fn read_tokens<R: Read>(r: &mut R, count: usize) -> Result<Vec<u32>, CodecError> {
    let mut bytes = Vec::new();
    r.take(count as u64 * 4).read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(CodecError::Truncated);
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn ensure_eof<R: Read>(r: &mut R) -> Result<(), CodecError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(CodecError::TrailingBytes),
    }
}
