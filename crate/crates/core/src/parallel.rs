//! Tiny fork-join helper for fanning pure per-item work across threads.
//!
//! Results come back in input order regardless of the thread count, so a
//! reduction over them is bit-identical to a serial run.

/// Environment variable capping the worker count. Unset, `0`, or an
/// unparsable value means single-threaded (the deterministic default).
pub const THREADS_ENV: &str = "ERASURE_LAB_THREADS";

/// Reads the worker cap from the environment.
pub fn threads_from_env() -> usize {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => 1,
            Ok(n) => n,
        },
        Err(_) => 1,
    }
}

/// Applies `f` to every item, using up to `threads` workers.
///
/// Items are split into contiguous chunks, one per worker; outputs are
/// reassembled in input order.
pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out = Vec::with_capacity(items.len());
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (ci, slice) in items.chunks(chunk).enumerate() {
            let f = &f;
            let base = ci * chunk;
            handles.push(scope.spawn(move || {
                slice
                    .iter()
                    .enumerate()
                    .map(|(i, t)| f(base + i, t))
                    .collect::<Vec<R>>()
            }));
        }
        for h in handles {
            out.extend(h.join().expect("worker panicked"));
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_output_matches_serial() {
        let items: Vec<u64> = (0..103).collect();
        let serial = map_ordered(&items, 1, |i, v| i as u64 * 1000 + v * v);
        let parallel = map_ordered(&items, 4, |i, v| i as u64 * 1000 + v * v);
        assert_eq!(serial, parallel);
    }

    #[test]
    fn empty_input() {
        let out: Vec<u8> = map_ordered(&[] as &[u8], 8, |_, v| *v);
        assert!(out.is_empty());
    }
}
