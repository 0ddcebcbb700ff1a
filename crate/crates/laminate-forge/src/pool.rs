use std::sync::OnceLock;

use rayon::{ThreadPool, ThreadPoolBuilder};

static POOL: OnceLock<ThreadPool> = OnceLock::new();

/// Thread cap from `LAMINATE_FORGE_THREADS`; rayon's default when unset or invalid.
pub fn thread_cap() -> Option<usize> {
    std::env::var("LAMINATE_FORGE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

/// Run `f` inside the crate's shared worker pool.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let pool = POOL.get_or_init(|| {
        let mut b = ThreadPoolBuilder::new();
        if let Some(n) = thread_cap() {
            b = b.num_threads(n);
        }
        b.build().expect("thread pool")
    });
    pool.install(f)
}
