use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket shared by every thread that talks to one provider.
///
/// Refills at `requests_per_minute / 60` tokens per second and holds at most
/// one second's worth of tokens (never less than one).
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    refreshed: Instant,
}

impl RateLimiter {
    pub fn per_minute(requests_per_minute: u32) -> Self {
        let per_second = f64::from(requests_per_minute.max(1)) / 60.0;
        let capacity = per_second.max(1.0);
        RateLimiter {
            capacity,
            per_second,
            state: Mutex::new(Bucket {
                tokens: capacity,
                refreshed: Instant::now(),
            }),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut b = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let elapsed = now.duration_since(b.refreshed).as_secs_f64();
                b.tokens = (b.tokens + elapsed * self.per_second).min(self.capacity);
                b.refreshed = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                (1.0 - b.tokens) / self.per_second
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}
