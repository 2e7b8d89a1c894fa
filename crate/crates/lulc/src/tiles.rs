//! Row-band tiling over scoped threads.
//!
//! Work is cut into contiguous row bands and the per-band results are
//! returned in band order, so any thread count yields the same output as one
//! thread as long as the caller's merge is associative.

use std::ops::Range;

/// Splits `0..height` into at most `parts` contiguous, non-empty bands.
pub fn row_bands(height: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, height.max(1));
    let base = height / parts;
    let extra = height % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out.retain(|r| !r.is_empty());
    out
}

/// Runs `f` on each band of `0..height` with up to `threads` workers and
/// returns the results in band order.
pub fn map_bands<T, F>(height: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let bands = row_bands(height, threads);
    if bands.len() <= 1 {
        return bands.into_iter().map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = bands.into_iter().map(|r| s.spawn(|| f(r))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Worker count when none is configured.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_cover_rows_in_order() {
        for h in 0..40 {
            for parts in 1..9 {
                let bands = row_bands(h, parts);
                let flat: Vec<usize> = bands.iter().flat_map(|r| r.clone()).collect();
                assert_eq!(flat, (0..h).collect::<Vec<_>>());
                assert!(bands.len() <= parts);
            }
        }
    }

    #[test]
    fn map_preserves_order() {
        let out = map_bands(100, 7, |r| r.start);
        let mut sorted = out.clone();
        sorted.sort_unstable();
        assert_eq!(out, sorted);
        assert_eq!(out.len(), 7);
    }
}
