use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight requests per backend.
#[derive(Debug)]
pub struct Gate {
    available: Mutex<usize>,
    released: Condvar,
    capacity: usize,
}

pub struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Gate {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            available: Mutex::new(capacity),
            released: Condvar::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.released.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        GatePermit { gate: self }
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut available = self.gate.available.lock().unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.gate.released.notify_one();
    }
}
