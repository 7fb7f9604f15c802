use std::time::Duration;

use rand::Rng;

/// Bounded exponential backoff: waits `base`, `2·base`, `4·base`, ... between
/// attempts, each scaled by a random factor in `[1 - jitter, 1 + jitter]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_secs(1), jitter: 0.25 }
    }
}

impl RetryPolicy {
    /// No waiting between attempts.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, jitter: 0.0 }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base_delay.saturating_mul(1u32 << retry.min(16));
        if self.jitter <= 0.0 || nominal.is_zero() {
            return nominal;
        }
        let factor = 1.0 + rand::thread_rng().gen_range(-self.jitter..=self.jitter);
        nominal.mul_f64(factor.max(0.0))
    }

    /// Run `op` until it succeeds, fails permanently, or attempts run out.
    /// Returns the value with the number of attempts used, or the last error
    /// with the attempt count.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut() -> Result<T, E>,
        is_transient: impl Fn(&E) -> bool,
    ) -> Result<(T, u32), (E, u32)> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => return Ok((v, attempt)),
                Err(e) if attempt < attempts && is_transient(&e) => {
                    tracing::debug!(attempt, "transient failure, backing off");
                    let wait = self.delay(attempt - 1);
                    if !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}
