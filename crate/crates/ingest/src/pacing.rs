use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::transport::{Request, Response, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchPolicy {
    pub max_parallel: usize,
    /// Minimum spacing between requests to one host, in milliseconds.
    pub per_host_interval: u64,
    pub max_retries: u32,
    /// First retry delay in milliseconds; doubles per attempt.
    pub backoff_base: u64,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            max_parallel: 4,
            per_host_interval: 1_000,
            max_retries: 3,
            backoff_base: 500,
        }
    }
}

impl FetchPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_parallel == 0 || self.per_host_interval == 0 || self.max_retries == 0 || self.backoff_base == 0 {
            return Err(format!("every fetch policy field must be positive: {self:?}"));
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`
    /// plus up to `base` of jitter.
    pub fn backoff(&self, attempt: u32, jitter: f64) -> Duration {
        let exp = self.backoff_base.saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16));
        let jitter_ms = (self.backoff_base as f64 * jitter.clamp(0.0, 1.0)) as u64;
        Duration::from_millis(exp + jitter_ms)
    }
}

/// Monotonic time source; tests inject a manual clock.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Sleeping advances time instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Per-host spacing. Each caller reserves the next free slot for its host
/// under the lock and sleeps outside it, so concurrent callers queue up
/// without holding the lock while waiting.
pub struct Pacer {
    interval: Duration,
    clock: Arc<dyn Clock>,
    next_slot: Mutex<HashMap<String, Duration>>,
}

impl Pacer {
    pub fn new(interval: Duration, clock: Arc<dyn Clock>) -> Self {
        Pacer {
            interval,
            clock,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    /// Blocks until a request to `host` may be sent; returns the send time.
    pub fn wait(&self, host: &str) -> Duration {
        let (slot, now) = {
            let mut slots = self.next_slot.lock().expect("pacer lock");
            let now = self.clock.now();
            let slot = slots.get(host).copied().unwrap_or(now).max(now);
            slots.insert(host.to_string(), slot + self.interval);
            (slot, now)
        };
        if slot > now {
            self.clock.sleep(slot - now);
        }
        slot
    }
}

/// Live-network wrapper adding per-host pacing and retry with backoff.
pub struct PacedTransport<T> {
    inner: T,
    policy: FetchPolicy,
    pacer: Pacer,
    clock: Arc<dyn Clock>,
    /// Send times per host, for auditing the pacing contract.
    log: Mutex<Vec<(String, Duration)>>,
}

impl<T: Transport> PacedTransport<T> {
    pub fn new(inner: T, policy: FetchPolicy, clock: Arc<dyn Clock>) -> Self {
        PacedTransport {
            inner,
            pacer: Pacer::new(Duration::from_millis(policy.per_host_interval), clock.clone()),
            policy,
            clock,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn send_log(&self) -> Vec<(String, Duration)> {
        self.log.lock().unwrap().clone()
    }
}

impl<T: Transport> Transport for PacedTransport<T> {
    fn execute(&self, request: &Request) -> Result<Response, TransportError> {
        let host = request.host();
        let attempts = 1 + self.policy.max_retries;
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            let at = self.pacer.wait(&host);
            self.log.lock().unwrap().push((host.clone(), at));
            match self.inner.execute(request) {
                Ok(resp) if !resp.is_transient() => return Ok(resp),
                Ok(resp) => last_err = format!("HTTP {}", resp.status),
                Err(TransportError::Network { message, .. }) => last_err = message,
                Err(other) => return Err(other),
            }
            if attempt < attempts {
                let delay = self.policy.backoff(attempt, rand::rng().random::<f64>());
                tracing::warn!(%host, attempt, ?delay, error = %last_err, "retrying request");
                self.clock.sleep(delay);
            }
        }
        Err(TransportError::Network {
            host,
            attempts,
            message: last_err,
        })
    }
}

/// Runs `f` over `items` on at most `max_parallel` threads; results keep
/// input order.
pub fn run_bounded<T, R, F>(items: &[T], max_parallel: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = max_parallel.max(1).min(items.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every item ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: AtomicU32,
    }

    impl Transport for Flaky {
        fn execute(&self, request: &Request) -> Result<Response, TransportError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Ok(Response {
                    status: 503,
                    headers: Default::default(),
                    body: String::new(),
                    recorded_at: None,
                });
            }
            Ok(Response {
                status: 200,
                headers: Default::default(),
                body: request.url.clone(),
                recorded_at: None,
            })
        }
    }

    fn policy() -> FetchPolicy {
        FetchPolicy {
            max_parallel: 4,
            per_host_interval: 250,
            max_retries: 2,
            backoff_base: 100,
        }
    }

    #[test]
    fn spacing_per_host_is_respected() {
        let clock = Arc::new(ManualClock::default());
        let t = Arc::new(PacedTransport::new(Flaky { failures: AtomicU32::new(0) }, policy(), clock.clone()));
        let urls: Vec<String> = (0..24)
            .map(|i| format!("https://{}/item/{i}", if i % 2 == 0 { "a.example" } else { "b.example" }))
            .collect();
        run_bounded(&urls, 4, |u| t.execute(&Request::get(u.clone())).unwrap());
        let log = t.send_log();
        for host in ["a.example", "b.example"] {
            let mut times: Vec<Duration> = log.iter().filter(|(h, _)| h == host).map(|(_, t)| *t).collect();
            times.sort();
            assert_eq!(times.len(), 12);
            for w in times.windows(2) {
                assert!(w[1] - w[0] >= Duration::from_millis(250), "{:?}", w);
            }
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let clock = Arc::new(ManualClock::default());
        let t = PacedTransport::new(Flaky { failures: AtomicU32::new(2) }, policy(), clock);
        let r = t.execute(&Request::get("https://a.example/x")).unwrap();
        assert_eq!(r.status, 200);
        assert_eq!(t.send_log().len(), 3);
    }

    #[test]
    fn gives_up_with_host_and_attempts() {
        let clock = Arc::new(ManualClock::default());
        let t = PacedTransport::new(Flaky { failures: AtomicU32::new(10) }, policy(), clock);
        match t.execute(&Request::get("https://a.example/x")).unwrap_err() {
            TransportError::Network { host, attempts, message } => {
                assert_eq!(host, "a.example");
                assert_eq!(attempts, 3);
                assert!(message.contains("503"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backoff_grows() {
        let p = policy();
        assert_eq!(p.backoff(1, 0.0), Duration::from_millis(100));
        assert_eq!(p.backoff(3, 0.0), Duration::from_millis(400));
        assert_eq!(p.backoff(3, 1.0), Duration::from_millis(500));
        assert!(FetchPolicy { max_parallel: 0, ..p }.validate().is_err());
    }

    #[test]
    fn bounded_keeps_order() {
        let items: Vec<u32> = (0..100).collect();
        assert_eq!(run_bounded(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(run_bounded(&Vec::<u32>::new(), 3, |x| *x).is_empty());
    }
}
