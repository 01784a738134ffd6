//! `ADT1` stream container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ADT1"
//! 4       1     version (0x01)
//! 5       1     round_to (1..=4)
//! 6       8     weight_count, u64 little-endian
//! 14      n*r   payload
//! ```

use super::{CodecError, PackedBlock, RoundTo};

pub const MAGIC: [u8; 4] = *b"ADT1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 14;

pub fn encode_container(block: &PackedBlock) -> Vec<u8> {
    let mut out = Vec::with_capacity(block.framed_bytes());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(block.round_to().get());
    out.extend_from_slice(&(block.weight_count() as u64).to_le_bytes());
    out.extend_from_slice(block.payload());
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<PackedBlock, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated {
            offset: bytes.len(),
            needed: HEADER_LEN as u64,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CodecError::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(CodecError::UnsupportedVersion(bytes[4]));
    }
    let round_to = RoundTo::new(bytes[5] as u32)
        .map_err(|_| CodecError::BadRoundToByte { value: bytes[5] })?;
    let weight_count = u64::from_le_bytes(bytes[6..14].try_into().unwrap());

    let payload = &bytes[HEADER_LEN..];
    let needed = weight_count
        .checked_mul(round_to.bytes() as u64)
        .and_then(|p| p.checked_add(HEADER_LEN as u64))
        .unwrap_or(u64::MAX);
    if (bytes.len() as u64) < needed {
        return Err(CodecError::Truncated {
            offset: bytes.len(),
            needed,
            available: bytes.len(),
        });
    }
    if (bytes.len() as u64) > needed {
        return Err(CodecError::TrailingBytes {
            offset: needed as usize,
            extra: bytes.len() - needed as usize,
        });
    }
    PackedBlock::from_parts(round_to, weight_count as usize, payload.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::pack;

    #[test]
    fn header_layout() {
        let block = pack(&[1.0, -2.0], RoundTo::TWO);
        let bytes = encode_container(&block);
        assert_eq!(bytes.len(), HEADER_LEN + 4);
        assert_eq!(&bytes[..4], b"ADT1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..14], &2u64.to_le_bytes());
        assert_eq!(&bytes[14..], &[0x3F, 0x80, 0xC0, 0x00]);
        assert_eq!(decode_container(&bytes).unwrap(), block);
    }

    #[test]
    fn empty_container() {
        let bytes = encode_container(&pack(&[], RoundTo::THREE));
        assert_eq!(bytes.len(), HEADER_LEN);
        let block = decode_container(&bytes).unwrap();
        assert_eq!(block.weight_count(), 0);
    }

    #[test]
    fn corrupt_containers() {
        let good = encode_container(&pack(&[1.0, 2.0, 3.0], RoundTo::THREE));

        let err = decode_container(&good[..good.len() - 1]).unwrap_err();
        assert!(matches!(
            err,
            CodecError::Truncated {
                offset: 22,
                needed: 23,
                ..
            }
        ));

        assert!(matches!(
            decode_container(&good[..7]),
            Err(CodecError::Truncated { .. })
        ));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_container(&bad),
            Err(CodecError::BadMagic { .. })
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(
            decode_container(&bad),
            Err(CodecError::UnsupportedVersion(2))
        );

        let mut bad = good.clone();
        bad[5] = 5;
        assert_eq!(
            decode_container(&bad),
            Err(CodecError::BadRoundToByte { value: 5 })
        );

        let mut bad = good.clone();
        bad[6] = 2;
        assert!(matches!(
            decode_container(&bad),
            Err(CodecError::TrailingBytes {
                offset: 20,
                extra: 3
            })
        ));

        let mut bad = good;
        bad[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            decode_container(&bad),
            Err(CodecError::Truncated { .. })
        ));
    }
}
