use super::RoundTo;

/// `out.len()` must equal `weights.len() * r`.
pub(super) fn pack_into(weights: &[f32], round_to: RoundTo, out: &mut [u8]) {
    debug_assert_eq!(out.len(), weights.len() * round_to.bytes());
    match round_to.bytes() {
        1 => pack_n::<1>(weights, out),
        2 => pack_n::<2>(weights, out),
        3 => pack_n::<3>(weights, out),
        _ => pack_n::<4>(weights, out),
    }
}

#[inline]
fn pack_n<const R: usize>(weights: &[f32], out: &mut [u8]) {
    for (w, dst) in weights.iter().zip(out.chunks_exact_mut(R)) {
        let be = w.to_bits().to_be_bytes();
        dst.copy_from_slice(&be[..R]);
    }
}

/// `payload.len()` must equal `out.len() * r`.
pub(super) fn unpack_into(payload: &[u8], round_to: RoundTo, out: &mut [f32]) {
    debug_assert_eq!(payload.len(), out.len() * round_to.bytes());
    match round_to.bytes() {
        1 => unpack_n::<1>(payload, out),
        2 => unpack_n::<2>(payload, out),
        3 => unpack_n::<3>(payload, out),
        _ => unpack_n::<4>(payload, out),
    }
}

#[inline]
fn unpack_n<const R: usize>(payload: &[u8], out: &mut [f32]) {
    for (src, w) in payload.chunks_exact(R).zip(out.iter_mut()) {
        let mut be = [0u8; 4];
        be[..R].copy_from_slice(src);
        *w = f32::from_bits(u32::from_be_bytes(be));
    }
}
