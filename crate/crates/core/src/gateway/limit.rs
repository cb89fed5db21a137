use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{CompletionRequest, CompletionResult, GatewayError, LanguageModel};

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Token-bucket rate limit plus a cap on concurrent requests.
pub struct Limited<M> {
    inner: M,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    per_second: Option<f64>,
    burst: f64,
    bucket: Mutex<Bucket>,
}

impl<M: LanguageModel> Limited<M> {
    pub fn new(inner: M, max_in_flight: usize, per_second: Option<f64>) -> Self {
        let burst = per_second.map_or(1.0, |r| r.max(1.0));
        Self {
            inner,
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            per_second,
            burst,
            bucket: Mutex::new(Bucket {
                tokens: burst,
                last: Instant::now(),
            }),
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn take_token(&self) {
        let Some(rate) = self.per_second else { return };
        loop {
            let wait = {
                let mut b = self.bucket.lock().unwrap();
                let now = Instant::now();
                b.tokens = (b.tokens + now.duration_since(b.last).as_secs_f64() * rate).min(self.burst);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / rate)
            };
            std::thread::sleep(wait);
        }
    }
}

struct SlotGuard<'a> {
    count: &'a Mutex<usize>,
    freed: &'a Condvar,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.count.lock().unwrap() -= 1;
        self.freed.notify_one();
    }
}

impl<M: LanguageModel> LanguageModel for Limited<M> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        {
            let mut n = self.in_flight.lock().unwrap();
            while *n >= self.max_in_flight {
                n = self.slot_freed.wait(n).unwrap();
            }
            *n += 1;
        }
        let _slot = SlotGuard {
            count: &self.in_flight,
            freed: &self.slot_freed,
        };
        self.take_token();
        self.inner.complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockModel;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn in_flight_bound_holds() {
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, p) = (current.clone(), peak.clone());
        let mock = MockModel::from_fn(move |_| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            c.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        });
        let limited = Limited::new(mock, 2, None);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| limited.complete(&CompletionRequest::new("m", "s", "u", 1)).unwrap());
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(limited.inner().calls(), 8);
    }

    #[test]
    fn rate_limit_spaces_requests() {
        let limited = Limited::new(MockModel::constant("x"), 4, Some(50.0));
        let start = Instant::now();
        for _ in 0..60 {
            limited.complete(&CompletionRequest::new("m", "s", "u", 1)).unwrap();
        }
        // burst of 50 then 10 more at 50/s
        assert!(start.elapsed() >= Duration::from_millis(150));
    }
}
