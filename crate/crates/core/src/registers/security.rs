//! Password privileges and lockout.

use serde::{Deserialize, Serialize};

use super::RegisterError;
use crate::time::Timestamp;

pub const DEFAULT_MAX_FAILURES: u32 = 5;
pub const DEFAULT_LOCKOUT_SECONDS: i64 = 3_600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Privilege {
    Zeroing,
    Programming,
    ParameterSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passwords {
    pub zeroing: u32,
    pub programming: u32,
    pub parameter_setting: u32,
}

impl Default for Passwords {
    fn default() -> Self {
        Self {
            zeroing: 0x0000_0002,
            programming: 0x0000_0004,
            parameter_setting: 0x0000_0003,
        }
    }
}

impl Passwords {
    fn get(&self, p: Privilege) -> u32 {
        match p {
            Privilege::Zeroing => self.zeroing,
            Privilege::Programming => self.programming,
            Privilege::ParameterSetting => self.parameter_setting,
        }
    }

    fn matches_any(&self, pw: u32) -> bool {
        [self.zeroing, self.programming, self.parameter_setting].contains(&pw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityState {
    pub passwords: Passwords,
    pub failed_attempts: u32,
    pub lockout_until: Option<Timestamp>,
    pub max_failures: u32,
    pub lockout_seconds: i64,
}

impl Default for SecurityState {
    fn default() -> Self {
        Self {
            passwords: Passwords::default(),
            failed_attempts: 0,
            lockout_until: None,
            max_failures: DEFAULT_MAX_FAILURES,
            lockout_seconds: DEFAULT_LOCKOUT_SECONDS,
        }
    }
}

impl SecurityState {
    pub fn is_locked(&self, now: Timestamp) -> bool {
        self.lockout_until.is_some_and(|until| now < until)
    }

    /// Checks `password` against `privilege`. A password that belongs to a
    /// different privilege is refused without counting as a failure; any
    /// other mismatch counts, and the `max_failures`-th starts a lockout.
    pub fn authenticate(&mut self, privilege: Privilege, password: u32, now: Timestamp) -> Result<(), RegisterError> {
        if let Some(until) = self.lockout_until {
            if now < until {
                return Err(RegisterError::LockedOut { until });
            }
            self.lockout_until = None;
        }
        if password == self.passwords.get(privilege) {
            self.failed_attempts = 0;
            return Ok(());
        }
        if self.passwords.matches_any(password) {
            return Err(RegisterError::PrivilegeRequired(privilege));
        }
        self.failed_attempts += 1;
        if self.failed_attempts >= self.max_failures {
            self.failed_attempts = 0;
            self.lockout_until = Some(now + self.lockout_seconds);
        }
        Err(RegisterError::AuthFailure)
    }
}
