//! Live-tensor byte accounting.
//!
//! Every activation buffer (float or int8) is a [`TrackedBuf`]. While a
//! tracking scope is installed on the current thread, each buffer created
//! inside it adds its byte size to the scope's live tally and removes it
//! again on drop. The scope's high-water mark is the peak live tensor bytes,
//! the CPU stand-in for GPU memory-under-inference.

use std::cell::RefCell;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_SCOPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub peak_live_tensor_bytes: usize,
    pub current_live_tensor_bytes: usize,
    pub allocation_count: usize,
}

#[derive(Debug)]
struct Scope {
    id: u64,
    stats: MemoryStats,
}

thread_local! {
    static ACTIVE: RefCell<Option<Scope>> = const { RefCell::new(None) };
}

fn register(bytes: usize) -> u64 {
    ACTIVE.with(|a| match a.borrow_mut().as_mut() {
        Some(scope) => {
            let s = &mut scope.stats;
            s.current_live_tensor_bytes += bytes;
            s.peak_live_tensor_bytes = s.peak_live_tensor_bytes.max(s.current_live_tensor_bytes);
            s.allocation_count += 1;
            scope.id
        }
        None => 0,
    })
}

fn release(scope_id: u64, bytes: usize) {
    if scope_id == 0 {
        return;
    }
    // `try_with` because buffers may be dropped during thread teardown.
    let _ = ACTIVE.try_with(|a| {
        if let Some(scope) = a.borrow_mut().as_mut() {
            if scope.id == scope_id {
                scope.stats.current_live_tensor_bytes -= bytes;
            }
        }
    });
}

/// Stats of the scope installed on this thread.
pub fn current_stats() -> Result<MemoryStats> {
    ACTIVE.with(|a| a.borrow().as_ref().map(|s| s.stats).ok_or(Error::TrackerNotInstalled))
}

/// Runs `action` inside a fresh tracking scope and returns its result along
/// with the scope's statistics. Buffers allocated before the call are not
/// counted, nor is their release. Scopes nest: the outer scope is restored
/// afterwards and does not see the inner scope's allocations.
pub fn track_memory<T>(action: impl FnOnce() -> T) -> (T, MemoryStats) {
    let id = NEXT_SCOPE.fetch_add(1, Ordering::Relaxed);
    let outer = ACTIVE.with(|a| a.borrow_mut().replace(Scope { id, stats: MemoryStats::default() }));
    let out = action();
    let inner = ACTIVE.with(|a| std::mem::replace(&mut *a.borrow_mut(), outer));
    let stats = inner.map(|s| s.stats).unwrap_or_default();
    (out, stats)
}

/// A heap buffer whose byte size is reported to the active tracking scope.
pub struct TrackedBuf<T> {
    data: Vec<T>,
    scope: u64,
}

impl<T> TrackedBuf<T> {
    pub fn new(data: Vec<T>) -> Self {
        let scope = register(std::mem::size_of_val(data.as_slice()));
        Self { data, scope }
    }

    pub fn byte_len(&self) -> usize {
        std::mem::size_of_val(self.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<T>
    where
        T: Clone,
    {
        self.data.clone()
    }
}

impl<T> Drop for TrackedBuf<T> {
    fn drop(&mut self) {
        release(self.scope, std::mem::size_of_val(self.data.as_slice()));
    }
}

impl<T: Clone> Clone for TrackedBuf<T> {
    fn clone(&self) -> Self {
        Self::new(self.data.clone())
    }
}

impl<T> Deref for TrackedBuf<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for TrackedBuf<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for TrackedBuf<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.data.iter().take(16)).finish()
    }
}

impl<T: PartialEq> PartialEq for TrackedBuf<T> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}
