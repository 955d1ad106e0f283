//! Baseline for comparison: one mutex around a linked list.

use std::collections::LinkedList;
use std::sync::Mutex;

#[derive(Debug, Default)]
pub struct LockedQueue<T> {
    inner: Mutex<LinkedList<T>>,
}

impl<T> LockedQueue<T> {
    pub fn new() -> Self {
        LockedQueue {
            inner: Mutex::new(LinkedList::new()),
        }
    }

    pub fn enqueue(&self, item: T) {
        self.lock().push_back(item);
    }

    pub fn dequeue(&self) -> Option<T> {
        self.lock().pop_front()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LinkedList<T>> {
        // A panicking holder cannot leave the list half-updated.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}
