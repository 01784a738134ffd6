//! Fixed-shape pairwise reduction.
//!
//! A range `[lo, hi)` is always split at `lo + len / 2`. Worker partitions
//! use the same rule on the worker count, so when the number of workers is
//! a power of two every worker range is a node of the per-sample tree and
//! the gathered sum is bit-identical to a single-worker sum.

use std::ops::Range;

/// Something that can be summed in place.
pub trait Accumulate {
    fn accumulate(&mut self, other: &Self);
}

/// Splits `0..len` into `workers` contiguous ranges along the halving tree.
/// Ranges may be empty when `len < workers`.
pub fn partition(len: usize, workers: usize) -> Vec<Range<usize>> {
    assert!(workers >= 1);
    let mut out = Vec::with_capacity(workers);
    split(0, len, workers, &mut out);
    out
}

fn split(lo: usize, hi: usize, workers: usize, out: &mut Vec<Range<usize>>) {
    if workers == 1 {
        out.push(lo..hi);
        return;
    }
    let left = workers / 2;
    let mid = lo + (hi - lo) * left / workers;
    split(lo, mid, left, out);
    split(mid, hi, workers - left, out);
}

/// Number of scratch buffers [`reduce_range`] needs for `len` leaves.
pub fn scratch_depth(len: usize) -> usize {
    let mut depth = 0;
    let mut n = len;
    while n > 1 {
        n = n.div_ceil(2);
        depth += 1;
    }
    depth
}

/// Pairwise sum over `range`, leaves produced by `leaf(i, out)` which must
/// overwrite `out` entirely. `scratch` needs [`scratch_depth`] entries shaped
/// like `out`. `range` must be non-empty.
pub fn reduce_range<T, F>(range: Range<usize>, out: &mut T, scratch: &mut [T], leaf: &mut F)
where
    T: Accumulate,
    F: FnMut(usize, &mut T),
{
    let len = range.end - range.start;
    debug_assert!(len >= 1);
    if len == 1 {
        leaf(range.start, out);
        return;
    }
    let mid = range.start + len / 2;
    let (mine, deeper) = scratch
        .split_first_mut()
        .expect("scratch shallower than reduction tree");
    reduce_range(range.start..mid, out, deeper, leaf);
    reduce_range(mid..range.end, mine, deeper, leaf);
    out.accumulate(mine);
}

/// Combines per-worker partial sums with the same halving tree used by
/// [`partition`]. `None` marks a worker that had no samples.
pub fn reduce_partials<T: Accumulate + Clone>(parts: &[Option<&T>]) -> Option<T> {
    match parts.len() {
        0 => None,
        1 => parts[0].cloned(),
        n => {
            let left = n / 2;
            match (
                reduce_partials(&parts[..left]),
                reduce_partials(&parts[left..]),
            ) {
                (Some(mut a), Some(b)) => {
                    a.accumulate(&b);
                    Some(a)
                }
                (a, b) => a.or(b),
            }
        }
    }
}
