//! Byte accounting for buffers that are alive during streamed execution.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Tracks the number of live buffer bytes and the high-water mark.
///
/// Shared between the executor, filters and the reader thread; updates are
/// lock-free.
#[derive(Debug, Default)]
pub struct MemoryTracker {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemoryTracker {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Registers `bytes` as live until the returned guard is dropped.
    pub fn hold(self: &Arc<Self>, bytes: usize) -> Allocation {
        let now = self.current.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(now, Ordering::SeqCst);
        Allocation {
            tracker: Arc::clone(self),
            bytes,
        }
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn reset_peak(&self) {
        self.peak.store(self.current(), Ordering::SeqCst);
    }
}

/// RAII guard for a tracked allocation.
#[derive(Debug)]
pub struct Allocation {
    tracker: Arc<MemoryTracker>,
    bytes: usize,
}

impl Allocation {
    pub fn bytes(&self) -> usize {
        self.bytes
    }
}

impl Drop for Allocation {
    fn drop(&mut self) {
        self.tracker.current.fetch_sub(self.bytes, Ordering::SeqCst);
    }
}
