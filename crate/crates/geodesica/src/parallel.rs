//! Deterministic chunk parallelism.
//!
//! Work is split into chunks of a fixed size and the per-chunk results are
//! combined in chunk order, so the floating-point result is identical for
//! any thread count. `GEODESICA_THREADS` caps the worker count.

/// Worker-thread cap: `GEODESICA_THREADS` if set, else the machine's
/// available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("GEODESICA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        })
}

/// Apply `f` to each index-range chunk of `0..len` and return the results in
/// chunk order. The chunk grid depends only on `len` and `chunk`, never on
/// the thread count.
pub fn map_chunks<R, F>(len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync,
{
    assert!(chunk >= 1);
    let ranges: Vec<_> = (0..len)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(len))
        .collect();
    let workers = thread_cap().min(ranges.len()).max(1);
    if workers <= 1 || ranges.len() <= 1 {
        return ranges.into_iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = Vec::with_capacity(ranges.len());
    slots.resize_with(ranges.len(), || None);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= ranges.len() {
                    break;
                }
                let out = f(ranges[i].clone());
                slots_mutex.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("chunk completed")).collect()
}
