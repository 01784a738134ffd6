//! `bench-codec`: equivalence precheck followed by pack/unpack timings.
//!
//! CSV columns: `op,path,weights,round_to,workers,best_s,gb_per_s`, where
//! throughput counts raw (uncompressed) bytes. A `copy,memcpy` row per size
//! gives the memory-bandwidth reference.

use std::path::PathBuf;
use std::time::Instant;

use a2dtwp_core::codec::{self, truncation_mask, PackedBlock, RoundTo};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Failure, EXIT_MISMATCH, EXIT_RUNTIME, EXIT_USAGE};

pub const CSV_HEADER: &str = "op,path,weights,round_to,workers,best_s,gb_per_s";

#[derive(Args)]
pub struct BenchArgs {
    /// Array lengths in weights.
    #[arg(long, value_delimiter = ',', default_values_t = [1_048_576usize])]
    sizes: Vec<usize>,
    #[arg(long = "round-tos", value_delimiter = ',', default_values_t = [1u8, 2, 3, 4])]
    round_tos: Vec<u8>,
    /// Thread counts for the parallel pack path.
    #[arg(long = "worker-counts", value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    worker_counts: Vec<usize>,
    /// Timed repetitions per cell; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Length of the equivalence precheck array.
    #[arg(long, default_value_t = 1_000_000)]
    check_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn random_words(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| f32::from_bits(rng.random())).collect()
}

/// Every pack path must produce the scalar bytes, and unpack must equal the
/// masked input, before anything is timed.
fn precheck(a: &BenchArgs, round_tos: &[RoundTo]) -> Result<(), String> {
    let w = random_words(a.check_len, a.seed);
    check_paths(
        &w,
        round_tos,
        &a.worker_counts,
        codec::pack_vectorized,
        codec::pack_parallel,
    )
}

fn check_paths(
    w: &[f32],
    round_tos: &[RoundTo],
    worker_counts: &[usize],
    vectorized: impl Fn(&[f32], RoundTo) -> PackedBlock,
    parallel: impl Fn(&[f32], RoundTo, usize) -> PackedBlock,
) -> Result<(), String> {
    for &r in round_tos {
        let reference = codec::pack(w, r);
        if vectorized(w, r) != reference {
            return Err(format!(
                "vectorized pack differs from scalar at round_to {r}"
            ));
        }
        for &k in worker_counts {
            if parallel(w, r, k) != reference {
                return Err(format!(
                    "parallel pack ({k} workers) differs from scalar at round_to {r}"
                ));
            }
        }
        let back = codec::unpack(&reference).map_err(|e| e.to_string())?;
        let mask = truncation_mask(r);
        if let Some(i) = (0..w.len()).find(|&i| back[i].to_bits() != w[i].to_bits() & mask) {
            return Err(format!(
                "unpack of weight {i} violates the truncation mask at round_to {r}"
            ));
        }
    }
    Ok(())
}

fn best_of(repeats: usize, mut f: impl FnMut()) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn run(a: &BenchArgs) -> Result<(), Failure> {
    let round_tos = a
        .round_tos
        .iter()
        .map(|&r| RoundTo::new(r as u32))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::new(EXIT_USAGE, e))?;
    if a.worker_counts.contains(&0) {
        return Err(Failure::new(EXIT_USAGE, "worker counts must be positive"));
    }
    precheck(a, &round_tos)
        .map_err(|e| Failure::new(EXIT_MISMATCH, format!("equivalence precheck failed: {e}")))?;
    eprintln!(
        "equivalence precheck passed ({} weights, round_to {:?}, vector path {})",
        a.check_len,
        a.round_tos,
        if codec::vector_path_available() {
            "avx2"
        } else {
            "scalar fallback"
        }
    );

    let mut rows = vec![CSV_HEADER.to_string()];
    let mut row = |op: &str, path: &str, n: usize, r: &str, k: usize, s: f64| {
        let gbps = (n * 4) as f64 / s / 1e9;
        rows.push(format!("{op},{path},{n},{r},{k},{s:.9},{gbps:.3}"));
        gbps
    };
    for &n in &a.sizes {
        let w = random_words(n, a.seed.wrapping_add(n as u64));
        let mut dst = vec![0f32; n];
        let s = best_of(a.repeats, || dst.copy_from_slice(std::hint::black_box(&w)));
        row("copy", "memcpy", n, "", 1, s);
        for &r in &round_tos {
            let rs = r.to_string();
            let scalar = row(
                "pack",
                "scalar",
                n,
                &rs,
                1,
                best_of(a.repeats, || drop(codec::pack(&w, r))),
            );
            let vector = row(
                "pack",
                "vectorized",
                n,
                &rs,
                1,
                best_of(a.repeats, || drop(codec::pack_vectorized(&w, r))),
            );
            for &k in &a.worker_counts {
                let s = best_of(a.repeats, || drop(codec::pack_parallel(&w, r, k)));
                row("pack", "parallel", n, &rs, k, s);
            }
            let block = codec::pack(&w, r);
            let s = best_of(a.repeats, || {
                codec::unpack_into(&block, &mut dst).expect("valid block")
            });
            row("unpack", "scalar", n, &rs, 1, s);
            if n * 4 >= 4 << 20 && vector < scalar {
                eprintln!(
                    "warning: vectorized pack slower than scalar at {n} weights, round_to {r} ({vector:.2} vs {scalar:.2} GB/s)"
                );
            }
        }
    }

    let mut text = rows.join("\n");
    text.push('\n');
    match &a.output {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", p.display())))?,
        None => crate::write_stdout(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precheck_catches_a_diverging_path() {
        let w = random_words(1000, 1);
        let all = RoundTo::ALL;
        assert!(check_paths(
            &w,
            &all,
            &[1, 3],
            codec::pack_vectorized,
            codec::pack_parallel
        )
        .is_ok());

        let flipped = |w: &[f32], r: RoundTo| {
            let mut p = codec::pack(w, r).into_payload();
            p[5] ^= 1;
            PackedBlock::from_parts(r, w.len(), p).unwrap()
        };
        let err = check_paths(&w, &all, &[1], flipped, codec::pack_parallel).unwrap_err();
        assert!(err.contains("vectorized"), "{err}");
        let err = check_paths(&w, &all, &[2], codec::pack_vectorized, |w, r, _| {
            flipped(w, r)
        })
        .unwrap_err();
        assert!(err.contains("2 workers"), "{err}");
    }
}
