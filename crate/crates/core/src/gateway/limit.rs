use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Milliseconds since an arbitrary fixed origin.
    fn now_ms(&self) -> u64;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
}

#[derive(Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manual clock for tests. Sleeping on it advances time instantly and the
/// total slept time is recorded.
#[derive(Default)]
pub struct FakeClock {
    now: AtomicU64,
    slept: Mutex<Vec<Duration>>,
}

impl FakeClock {
    pub fn new() -> Arc<Self> {
        Arc::new(FakeClock::default())
    }

    pub fn advance(&self, d: Duration) {
        self.now.fetch_add(d.as_millis() as u64, Ordering::SeqCst);
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("sleep log").clone()
    }
}

impl Clock for FakeClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

impl Sleeper for FakeClock {
    fn sleep(&self, d: Duration) {
        self.slept.lock().expect("sleep log").push(d);
        self.advance(d);
    }
}

const WINDOW_MS: u64 = 60_000;

/// Sliding one-minute window limiter shared by all callers of a backend.
pub struct RateLimiter {
    per_minute: usize,
    clock: Arc<dyn Clock>,
    sleeper: Arc<dyn Sleeper>,
    issued: Mutex<VecDeque<u64>>,
}

impl RateLimiter {
    pub fn new(per_minute: usize, clock: Arc<dyn Clock>, sleeper: Arc<dyn Sleeper>) -> Self {
        assert!(per_minute >= 1, "rate limit must allow at least one request per minute");
        RateLimiter { per_minute, clock, sleeper, issued: Mutex::new(VecDeque::new()) }
    }

    pub fn system(per_minute: usize) -> Self {
        RateLimiter::new(per_minute, Arc::new(SystemClock::default()), Arc::new(ThreadSleeper))
    }

    pub fn per_minute(&self) -> usize {
        self.per_minute
    }

    /// Blocks until a request may be issued and returns its timestamp.
    pub fn acquire(&self) -> u64 {
        loop {
            let wait = {
                let mut issued = self.issued.lock().expect("limiter lock");
                let now = self.clock.now_ms();
                while issued.front().is_some_and(|&t| t + WINDOW_MS <= now) {
                    issued.pop_front();
                }
                if issued.len() < self.per_minute {
                    issued.push_back(now);
                    return now;
                }
                issued.front().expect("window full") + WINDOW_MS - now
            };
            self.sleeper.sleep(Duration::from_millis(wait.max(1)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_never_exceeds_limit_under_concurrency() {
        let clock = FakeClock::new();
        let limiter = Arc::new(RateLimiter::new(7, clock.clone(), clock.clone()));
        let stamps = Arc::new(Mutex::new(Vec::new()));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let limiter = limiter.clone();
                let stamps = stamps.clone();
                let clock = clock.clone();
                std::thread::spawn(move || {
                    for _ in 0..10 {
                        let t = limiter.acquire();
                        stamps.lock().unwrap().push(t);
                        clock.advance(Duration::from_millis(500));
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let mut stamps = stamps.lock().unwrap().clone();
        stamps.sort_unstable();
        assert_eq!(stamps.len(), 80);
        for (i, &t) in stamps.iter().enumerate() {
            let in_window = stamps[i..].iter().take_while(|&&u| u < t + WINDOW_MS).count();
            assert!(in_window <= 7, "{in_window} requests within a minute from t = {t}");
        }
    }

    #[test]
    fn waits_for_oldest_to_expire() {
        let clock = FakeClock::new();
        let limiter = RateLimiter::new(2, clock.clone(), clock.clone());
        assert_eq!(limiter.acquire(), 0);
        clock.advance(Duration::from_millis(10_000));
        assert_eq!(limiter.acquire(), 10_000);
        assert_eq!(limiter.acquire(), 60_000);
        assert_eq!(clock.sleeps(), vec![Duration::from_millis(50_000)]);
    }
}
