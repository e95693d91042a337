use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ProviderError;

/// Bounded retries with exponential backoff for provider calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff_ms: 50,
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(attempts: u32) -> Self {
        Self {
            attempts,
            backoff_ms: 0,
        }
    }

    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let attempts = self.attempts.max(1);
        let mut delay = self.backoff_ms;
        for attempt in 1..=attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if !e.retryable || attempt == attempts => return Err(e),
                Err(_) => {
                    if delay > 0 {
                        thread::sleep(Duration::from_millis(delay));
                    }
                    delay = delay.saturating_mul(2);
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retries_until_success() {
        let calls = Cell::new(0);
        let out = RetryPolicy::no_wait(3).run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(ProviderError::retryable("flaky"))
            } else {
                Ok(7)
            }
        });
        assert_eq!(out, Ok(7));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn gives_up_after_budget_and_on_fatal() {
        let calls = Cell::new(0);
        let out: Result<(), _> = RetryPolicy::no_wait(2).run(|| {
            calls.set(calls.get() + 1);
            Err(ProviderError::retryable("down"))
        });
        assert!(out.is_err());
        assert_eq!(calls.get(), 2);

        calls.set(0);
        let out: Result<(), _> = RetryPolicy::no_wait(5).run(|| {
            calls.set(calls.get() + 1);
            Err(ProviderError::fatal("bad request"))
        });
        assert!(out.is_err());
        assert_eq!(calls.get(), 1);
    }
}
