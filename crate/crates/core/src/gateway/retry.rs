use std::thread;
use std::time::Duration;

use rand::Rng;

use super::GatewayError;

/// Exponential backoff: `base_delay * 2^attempt`, scaled by a uniform
/// jitter factor in `1 ± jitter`, capped at `max_delay`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    pub fn with_max_retries(max_retries: u32) -> Self {
        Self {
            max_retries,
            ..Self::default()
        }
    }

    /// No sleeping between attempts. For scripted backends and tests.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            jitter: 0.0,
        }
    }

    /// Delay before retry number `attempt + 1` (0-based attempt that failed).
    pub fn delay_for(&self, attempt: u32) -> Duration {
        if self.base_delay.is_zero() {
            return Duration::ZERO;
        }
        let exp = 2f64.powi(attempt.min(30) as i32);
        let factor = if self.jitter > 0.0 {
            1.0 + rand::rng().random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        let secs = self.base_delay.as_secs_f64() * exp * factor;
        Duration::from_secs_f64(secs.max(0.0)).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or
    /// `max_retries + 1` attempts have been made.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let mut delay = self.delay_for(attempt);
                    if let GatewayError::RateLimited {
                        retry_after: Some(after),
                    } = &e
                    {
                        delay = delay.max((*after).min(self.max_delay));
                    }
                    log::debug!("attempt {} failed ({e}); retrying in {delay:?}", attempt + 1);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_within_jitter() {
        let p = RetryPolicy::default();
        for attempt in 0..4 {
            let nominal = 0.5 * 2f64.powi(attempt as i32);
            for _ in 0..50 {
                let d = p.delay_for(attempt).as_secs_f64();
                assert!(d >= nominal * 0.8 - 1e-9 && d <= nominal * 1.2 + 1e-9, "{d}");
            }
        }
        assert_eq!(p.delay_for(20), Duration::from_secs(30));
    }

    #[test]
    fn attempt_budget() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::immediate(3).run(|| {
            calls += 1;
            Err(GatewayError::Transport("x".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 4);

        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::immediate(0).run(|| {
            calls += 1;
            Err(GatewayError::Transport("x".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }
}
