//! Register-group pack kernel.
//!
//! Per group of 8 weights (one 256-bit register):
//!
//! 1. load the 8 words,
//! 2. `shuffle_epi8` compacts the kept bytes of the 4 words in each 128-bit
//!    lane to the bottom of that lane, most-significant byte first,
//! 3. `permutevar8x32` moves the `r` occupied dwords of the high lane next to
//!    the `r` dwords of the low lane,
//! 4. `maskstore_epi32` writes exactly `2r` dwords (`8r` bytes).
//!
//! Four kept bytes of four words fill exactly `r` dwords, which is why the
//! cross-lane step can work at dword granularity. Lengths that are not a
//! multiple of 8 finish with the scalar loop.

use super::{scalar, RoundTo, GROUP_SIZE};

pub(super) fn available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

pub(super) fn pack_into(weights: &[f32], round_to: RoundTo, out: &mut [u8]) {
    debug_assert_eq!(out.len(), weights.len() * round_to.bytes());
    #[cfg(target_arch = "x86_64")]
    {
        if available() {
            // SAFETY: avx2 support was checked at runtime just above.
            unsafe { x86::pack_avx2(weights, round_to, out) };
            return;
        }
    }
    scalar::pack_into(weights, round_to, out);
}

/// In-lane shuffle control: for word `j` of a lane and kept byte `k`, output
/// byte `j*r + k` takes source byte `4j + 3 - k` (little-endian words, so
/// byte 3 is the most significant). Unused positions are zeroed (0x80).
const fn shuffle_control(r: usize) -> [u8; 32] {
    let mut ctl = [0x80u8; 32];
    let mut lane = 0;
    while lane < 2 {
        let mut j = 0;
        while j < 4 {
            let mut k = 0;
            while k < r {
                ctl[lane * 16 + j * r + k] = (4 * j + 3 - k) as u8;
                k += 1;
            }
            j += 1;
        }
        lane += 1;
    }
    ctl
}

/// Cross-lane dword gather: dwords `0..r` of the low lane then `4..4+r` of
/// the high lane.
const fn permute_control(r: usize) -> [u32; 8] {
    let mut idx = [0u32; 8];
    let mut i = 0;
    while i < r {
        idx[i] = i as u32;
        idx[r + i] = (4 + i) as u32;
        i += 1;
    }
    idx
}

const fn store_mask(r: usize) -> [i32; 8] {
    let mut mask = [0i32; 8];
    let mut i = 0;
    while i < 2 * r {
        mask[i] = -1;
        i += 1;
    }
    mask
}

const SHUFFLE: [[u8; 32]; 4] = [
    shuffle_control(1),
    shuffle_control(2),
    shuffle_control(3),
    shuffle_control(4),
];
const PERMUTE: [[u32; 8]; 4] = [
    permute_control(1),
    permute_control(2),
    permute_control(3),
    permute_control(4),
];
const STORE_MASK: [[i32; 8]; 4] = [store_mask(1), store_mask(2), store_mask(3), store_mask(4)];

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    use super::{scalar, RoundTo, GROUP_SIZE, PERMUTE, SHUFFLE, STORE_MASK};

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn pack_avx2(weights: &[f32], round_to: RoundTo, out: &mut [u8]) {
        let r = round_to.bytes();
        let groups = weights.len() / GROUP_SIZE;
        let shuffle = _mm256_loadu_si256(SHUFFLE[r - 1].as_ptr() as *const __m256i);
        let permute = _mm256_loadu_si256(PERMUTE[r - 1].as_ptr() as *const __m256i);
        let mask = _mm256_loadu_si256(STORE_MASK[r - 1].as_ptr() as *const __m256i);

        let src = weights.as_ptr();
        let dst = out.as_mut_ptr();
        for g in 0..groups {
            let v = _mm256_loadu_si256(src.add(g * GROUP_SIZE) as *const __m256i);
            let v = _mm256_shuffle_epi8(v, shuffle);
            let v = _mm256_permutevar8x32_epi32(v, permute);
            // masked-off dwords are neither written nor faulted on
            _mm256_maskstore_epi32(dst.add(g * GROUP_SIZE * r) as *mut i32, mask, v);
        }

        let done = groups * GROUP_SIZE;
        scalar::pack_into(&weights[done..], round_to, &mut out[done * r..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controls_for_three_bytes() {
        let ctl = shuffle_control(3);
        assert_eq!(&ctl[..12], &[3, 2, 1, 7, 6, 5, 11, 10, 9, 15, 14, 13]);
        assert!(ctl[12..16].iter().all(|&b| b == 0x80));
        assert_eq!(&ctl[16..28], &ctl[..12]);
        assert_eq!(permute_control(3), [0, 1, 2, 4, 5, 6, 0, 0]);
        assert_eq!(store_mask(3), [-1, -1, -1, -1, -1, -1, 0, 0]);
    }

    #[test]
    fn four_byte_controls_are_full_byteswap() {
        assert_eq!(permute_control(4), [0, 1, 2, 3, 4, 5, 6, 7]);
        assert!(store_mask(4).iter().all(|&m| m == -1));
        assert_eq!(&shuffle_control(4)[..4], &[3, 2, 1, 0]);
    }

    #[test]
    fn group_and_tail_match_scalar() {
        let ws: Vec<f32> = (0..9).map(|i| (i as f32 + 0.37) * -1.713e3).collect();
        for r in RoundTo::ALL {
            let mut a = vec![0u8; ws.len() * r.bytes()];
            let mut b = vec![0u8; ws.len() * r.bytes()];
            pack_into(&ws, r, &mut a);
            scalar::pack_into(&ws, r, &mut b);
            assert_eq!(a, b, "r={r}");
        }
    }
}
