mod oracle;

use a2dtwp_core::codec::{
    decode_container, encode_container, pack, pack_parallel, pack_vectorized, truncation_mask,
    unpack, unpack_into, PackedBlock, RoundTo, HEADER_LEN,
};
use proptest::prelude::*;

fn round_to() -> impl Strategy<Value = RoundTo> {
    (1u32..=4).prop_map(|r| RoundTo::new(r).unwrap())
}

fn words() -> impl Strategy<Value = Vec<f32>> {
    let word = prop_oneof![
        4 => any::<u32>(),
        1 => prop::sample::select(oracle::special_patterns()),
    ];
    prop::collection::vec(word.prop_map(f32::from_bits), 0..300)
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn unpack_restores_masked_bits(w in words(), r in round_to()) {
        let back = unpack(&pack(&w, r)).unwrap();
        let expected: Vec<u32> = w.iter().map(|x| oracle::masked(x.to_bits(), r.get())).collect();
        prop_assert_eq!(bits(&back), expected);
    }

    #[test]
    fn mask_matches_shift_oracle(x in any::<u32>(), r in round_to()) {
        prop_assert_eq!(x & truncation_mask(r), oracle::masked(x, r.get()));
    }

    #[test]
    fn payload_is_big_endian_prefix(w in words(), r in round_to()) {
        prop_assert_eq!(pack(&w, r).into_payload(), oracle::packed_bytes(&w, r.get()));
    }

    #[test]
    fn truncation_is_idempotent(w in words(), r in round_to()) {
        let once = unpack(&pack(&w, r)).unwrap();
        let twice = unpack(&pack(&once, r)).unwrap();
        prop_assert_eq!(bits(&once), bits(&twice));
        prop_assert_eq!(pack(&once, r), pack(&w, r));
    }

    #[test]
    fn narrower_after_wider_equals_narrower(w in words(), a in round_to(), b in round_to()) {
        let (wide, narrow) = if a >= b { (a, b) } else { (b, a) };
        let via_wide = unpack(&pack(&unpack(&pack(&w, wide)).unwrap(), narrow)).unwrap();
        let direct = unpack(&pack(&w, narrow)).unwrap();
        prop_assert_eq!(bits(&via_wide), bits(&direct));
    }

    #[test]
    fn all_pack_paths_agree(w in words(), r in round_to(), workers in 1usize..9) {
        let reference = pack(&w, r);
        prop_assert_eq!(&pack_vectorized(&w, r), &reference);
        prop_assert_eq!(&pack_parallel(&w, r, workers), &reference);
    }

    #[test]
    fn size_law(w in words(), r in round_to()) {
        let block = pack(&w, r);
        prop_assert_eq!(block.payload().len(), w.len() * r.bytes());
        prop_assert_eq!(block.weight_count(), w.len());
        prop_assert_eq!(block.framed_bytes(), HEADER_LEN + w.len() * r.bytes());
        prop_assert_eq!(encode_container(&block).len(), block.framed_bytes());
    }

    #[test]
    fn container_roundtrip(w in words(), r in round_to()) {
        let block = pack(&w, r);
        let decoded = decode_container(&encode_container(&block)).unwrap();
        prop_assert_eq!(decoded, block);
    }

    #[test]
    fn any_truncation_of_a_container_is_rejected(w in prop::collection::vec(any::<f32>(), 1..50), r in round_to(), cut in any::<prop::sample::Index>()) {
        let framed = encode_container(&pack(&w, r));
        let keep = cut.index(framed.len());
        prop_assert!(decode_container(&framed[..keep]).is_err());
    }

    #[test]
    fn unpack_into_matches_unpack(w in words(), r in round_to()) {
        let block = pack(&w, r);
        let mut out = vec![f32::NAN; w.len()];
        unpack_into(&block, &mut out).unwrap();
        prop_assert_eq!(bits(&out), bits(&unpack(&block).unwrap()));
    }
}

#[test]
fn group_boundaries() {
    for n in [0usize, 1, 7, 8, 9, 15, 16, 17, 63, 64, 65] {
        let w: Vec<f32> = (0..n)
            .map(|i| f32::from_bits(0x9e37_79b9u32.wrapping_mul(i as u32 + 1)))
            .collect();
        for r in RoundTo::ALL {
            let reference = pack(&w, r);
            assert_eq!(
                reference.payload(),
                &oracle::packed_bytes(&w, r.get())[..],
                "n={n} r={r}"
            );
            assert_eq!(pack_vectorized(&w, r), reference, "n={n} r={r}");
            for k in [1, 2, 3, 8, 64] {
                assert_eq!(pack_parallel(&w, r, k), reference, "n={n} r={r} k={k}");
            }
        }
    }
}

#[test]
fn block_rejects_wrong_payload_length() {
    assert!(PackedBlock::from_parts(RoundTo::TWO, 3, vec![0; 5]).is_err());
    assert!(PackedBlock::from_parts(RoundTo::TWO, 3, vec![0; 6]).is_ok());
}
