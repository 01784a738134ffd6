//! Byte-granularity lossy truncation of `f32` weight arrays.
//!
//! Packing keeps the `r` most-significant bytes of every 32-bit word and
//! drops the rest; unpacking restores a full word by zero-filling the low
//! `(4 - r) * 8` bits. The wire layout stores each weight's retained bytes
//! most-significant-first, so the payload does not depend on host byte order.
//!
//! Three pack paths are provided and all of them produce identical bytes:
//!
//! - [`pack`]: the scalar reference loop.
//! - [`pack_vectorized`]: 8-weight register groups (AVX2 byte shuffles on
//!   x86_64, scalar fallback elsewhere) with a scalar tail.
//! - [`pack_parallel`]: contiguous per-worker chunks, each worker running the
//!   vectorized kernel over its own disjoint span of the payload.

mod container;
mod scalar;
mod simd;

use std::fmt;

use thiserror::Error;

pub use container::{decode_container, encode_container, HEADER_LEN, MAGIC, VERSION};

/// Weights per register group in the vectorized kernel.
pub const GROUP_SIZE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("round_to must be in 1..=4, got {0}")]
    InvalidRoundTo(u32),
    #[error("bit width must be in 1..=32, got {0}")]
    InvalidBitWidth(u32),
    #[error("malformed block: payload is {payload_len} bytes, expected {expected} ({weight_count} weights x {round_to} bytes)")]
    MalformedBlock {
        weight_count: u64,
        round_to: u8,
        payload_len: usize,
        expected: u64,
    },
    #[error("bad magic {found:02x?} at offset 0, expected \"ADT1\"")]
    BadMagic { found: [u8; 4] },
    #[error("round_to byte {value} at offset 5 is outside 1..=4")]
    BadRoundToByte { value: u8 },
    #[error("unsupported container version {0} at offset 4")]
    UnsupportedVersion(u8),
    #[error("container truncated at offset {offset}: need {needed} bytes, file has {available}")]
    Truncated {
        offset: usize,
        needed: u64,
        available: usize,
    },
    #[error("container has {extra} trailing bytes after payload end at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

/// Number of most-significant bytes kept per weight, always in `1..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoundTo(u8);

impl RoundTo {
    pub const ONE: RoundTo = RoundTo(1);
    pub const TWO: RoundTo = RoundTo(2);
    pub const THREE: RoundTo = RoundTo(3);
    pub const FOUR: RoundTo = RoundTo(4);

    pub const ALL: [RoundTo; 4] = [Self::ONE, Self::TWO, Self::THREE, Self::FOUR];

    pub fn new(bytes_kept: u32) -> Result<Self, CodecError> {
        match bytes_kept {
            1..=4 => Ok(RoundTo(bytes_kept as u8)),
            other => Err(CodecError::InvalidRoundTo(other)),
        }
    }

    /// Smallest byte count that holds `bits` bits: `ceil(bits / 8)`.
    pub fn from_bits(bits: u32) -> Result<Self, CodecError> {
        if bits == 0 || bits > 32 {
            return Err(CodecError::InvalidBitWidth(bits));
        }
        Ok(RoundTo(bits.div_ceil(8) as u8))
    }

    #[inline]
    pub fn bytes(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn get(self) -> u8 {
        self.0
    }

    pub fn bits(self) -> u32 {
        self.0 as u32 * 8
    }
}

impl fmt::Display for RoundTo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `ceil(bits / 8)` as a [`RoundTo`]. 14 bits round up to 2 bytes.
pub fn bits_to_round_to(bits: u32) -> Result<RoundTo, CodecError> {
    RoundTo::from_bits(bits)
}

/// High mask with `r * 8` one bits, the part of a word that survives a
/// pack/unpack roundtrip.
#[inline]
pub fn truncation_mask(round_to: RoundTo) -> u32 {
    // r = 4 would shift by 32, so go through u64.
    (u64::from(u32::MAX) << ((4 - round_to.bytes()) * 8)) as u32
}

/// A packed layer payload plus the framing needed to unpack it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBlock {
    round_to: RoundTo,
    weight_count: usize,
    payload: Vec<u8>,
}

impl PackedBlock {
    /// Builds a block from raw parts, checking the payload length.
    pub fn from_parts(
        round_to: RoundTo,
        weight_count: usize,
        payload: Vec<u8>,
    ) -> Result<Self, CodecError> {
        let block = PackedBlock {
            round_to,
            weight_count,
            payload,
        };
        block.validate()?;
        Ok(block)
    }

    fn validate(&self) -> Result<(), CodecError> {
        let expected = self.weight_count as u64 * self.round_to.bytes() as u64;
        if self.payload.len() as u64 != expected {
            return Err(CodecError::MalformedBlock {
                weight_count: self.weight_count as u64,
                round_to: self.round_to.get(),
                payload_len: self.payload.len(),
                expected,
            });
        }
        Ok(())
    }

    pub fn round_to(&self) -> RoundTo {
        self.round_to
    }

    pub fn weight_count(&self) -> usize {
        self.weight_count
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    /// Size of the uncompressed word stream.
    pub fn raw_bytes(&self) -> usize {
        self.weight_count * 4
    }

    /// Bytes of this block when framed in the container format.
    pub fn framed_bytes(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

/// Scalar reference pack.
pub fn pack(weights: &[f32], round_to: RoundTo) -> PackedBlock {
    let mut payload = vec![0u8; weights.len() * round_to.bytes()];
    scalar::pack_into(weights, round_to, &mut payload);
    PackedBlock {
        round_to,
        weight_count: weights.len(),
        payload,
    }
}

/// Pack through the 8-weight register-group kernel. Falls back to the scalar
/// loop when the host has no usable vector unit.
pub fn pack_vectorized(weights: &[f32], round_to: RoundTo) -> PackedBlock {
    let mut payload = vec![0u8; weights.len() * round_to.bytes()];
    simd::pack_into(weights, round_to, &mut payload);
    PackedBlock {
        round_to,
        weight_count: weights.len(),
        payload,
    }
}

/// Pack with `worker_count` threads. Weights are split into contiguous
/// chunks of `ceil(len / worker_count)` weights; chunk `k` writes payload
/// bytes `[k * chunk * r, ...)` and nothing else.
///
/// # Panics
///
/// Panics if `worker_count` is zero.
pub fn pack_parallel(weights: &[f32], round_to: RoundTo, worker_count: usize) -> PackedBlock {
    assert!(worker_count >= 1, "worker_count must be positive");
    let r = round_to.bytes();
    let mut payload = vec![0u8; weights.len() * r];
    let chunk = weights.len().div_ceil(worker_count).max(1);

    if worker_count == 1 || weights.len() <= chunk {
        simd::pack_into(weights, round_to, &mut payload);
    } else {
        std::thread::scope(|scope| {
            for (src, dst) in weights.chunks(chunk).zip(payload.chunks_mut(chunk * r)) {
                scope.spawn(move || simd::pack_into(src, round_to, dst));
            }
        });
    }

    PackedBlock {
        round_to,
        weight_count: weights.len(),
        payload,
    }
}

/// Restores 32-bit floats from a block, zero-filling the dropped low bytes.
pub fn unpack(block: &PackedBlock) -> Result<Vec<f32>, CodecError> {
    block.validate()?;
    let mut out = vec![0f32; block.weight_count];
    scalar::unpack_into(&block.payload, block.round_to, &mut out);
    Ok(out)
}

/// Like [`unpack`] but writes into an existing buffer of exactly
/// `weight_count` floats.
pub fn unpack_into(block: &PackedBlock, out: &mut [f32]) -> Result<(), CodecError> {
    block.validate()?;
    if out.len() != block.weight_count {
        return Err(CodecError::MalformedBlock {
            weight_count: out.len() as u64,
            round_to: block.round_to.get(),
            payload_len: block.payload.len(),
            expected: out.len() as u64 * block.round_to.bytes() as u64,
        });
    }
    scalar::unpack_into(&block.payload, block.round_to, out);
    Ok(())
}

/// Whether [`pack_vectorized`] runs the vector kernel on this host.
pub fn vector_path_available() -> bool {
    simd::available()
}
