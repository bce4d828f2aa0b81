//! Blocking concurrency limiters for the client: a counting semaphore that
//! bounds in-flight requests and a token bucket that paces request starts.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Counting semaphore. `acquire` blocks until a permit is free and returns a
/// guard that releases on drop.
pub struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        assert!(permits > 0, "semaphore needs at least one permit");
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

pub struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// Token bucket refilled continuously at `rate_per_sec`, holding at most
/// `capacity` tokens. `take` blocks until one token is available.
pub struct TokenBucket {
    state: Mutex<BucketState>,
    rate_per_sec: f64,
    capacity: f64,
}

struct BucketState {
    tokens: f64,
    refilled_at: Instant,
}

impl TokenBucket {
    /// A bucket paced at `per_minute` requests per minute, starting full with
    /// a one-request burst.
    pub fn per_minute(per_minute: f64) -> Self {
        assert!(per_minute > 0.0, "rate must be positive");
        TokenBucket {
            state: Mutex::new(BucketState {
                tokens: 1.0,
                refilled_at: Instant::now(),
            }),
            rate_per_sec: per_minute / 60.0,
            capacity: 1.0,
        }
    }

    pub fn take(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(state.refilled_at).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.rate_per_sec).min(self.capacity);
                state.refilled_at = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                (1.0 - state.tokens) / self.rate_per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait.min(0.05)));
        }
    }
}
