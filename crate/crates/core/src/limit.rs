//! A counting semaphore bounding concurrent in-flight operations.

use std::sync::{Condvar, Mutex};

#[derive(Debug)]
pub(crate) struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl Limiter {
    pub(crate) fn new(max: usize) -> Self {
        Self { in_flight: Mutex::new(0), freed: Condvar::new(), max: max.max(1) }
    }

    pub(crate) fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        LimiterGuard(self)
    }
}

pub(crate) struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}
