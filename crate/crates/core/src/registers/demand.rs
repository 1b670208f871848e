//! Maximum demand: average power over a demand window, evaluated either on
//! disjoint blocks (interval mode) or on windows advancing by the slip
//! period (sliding mode).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::RegisterError;
use crate::time::{Timestamp, MINUTE};

pub const DEFAULT_WINDOW_MINUTES: u32 = 15;
pub const DEFAULT_SLIP_MINUTES: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandMode {
    Interval,
    #[default]
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandRecord {
    pub kw: f64,
    /// End of the window that produced the maximum.
    pub at: Timestamp,
}

/// Demand computation for one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTracker {
    pub mode: DemandMode,
    pub window_minutes: u32,
    pub slip_minutes: u32,
    /// Average power of the most recent minutes, oldest first.
    recent: VecDeque<f64>,
    last_tick: Option<i64>,
    pub max: Option<DemandRecord>,
}

impl DemandTracker {
    pub fn new(mode: DemandMode, window_minutes: u32, slip_minutes: u32) -> Result<Self, RegisterError> {
        if window_minutes == 0 || slip_minutes == 0 || !window_minutes.is_multiple_of(slip_minutes) {
            return Err(RegisterError::InvalidConfig(format!(
                "slip {slip_minutes} min must divide window {window_minutes} min"
            )));
        }
        Ok(Self {
            mode,
            window_minutes,
            slip_minutes,
            recent: VecDeque::with_capacity(window_minutes as usize),
            last_tick: None,
            max: None,
        })
    }

    pub fn max_kw(&self) -> f64 {
        self.max.map_or(0.0, |r| r.kw)
    }

    /// Feeds the average power of minute `minute_tick` (minutes since the
    /// epoch). Minutes skipped since the previous call count as zero load;
    /// stale or repeated ticks are ignored. Returns every window demand
    /// completed by this call as `(kW, window end)`.
    pub fn update(&mut self, avg_power_kw: f64, minute_tick: i64) -> Vec<(f64, Timestamp)> {
        let mut completed = Vec::new();
        let w = i64::from(self.window_minutes);
        let ticks: Vec<i64> = match self.last_tick {
            Some(last) if minute_tick <= last => return completed,
            // past one window of zeros every window is all-zero; skip ahead
            Some(last) if minute_tick - last > 2 * w => {
                (last + 1..=last + w).chain(minute_tick - w..=minute_tick).collect()
            }
            Some(last) => (last + 1..=minute_tick).collect(),
            None => vec![minute_tick],
        };
        for tick in ticks {
            let value = if tick == minute_tick { avg_power_kw } else { 0.0 };
            if let Some(d) = self.push(value, tick) {
                completed.push(d);
            }
        }
        self.last_tick = Some(minute_tick);
        completed
    }

    fn push(&mut self, kw: f64, tick: i64) -> Option<(f64, Timestamp)> {
        let window = self.window_minutes as usize;
        if self.recent.len() == window {
            self.recent.pop_front();
        }
        self.recent.push_back(kw);
        let end = tick + 1;
        let period = match self.mode {
            DemandMode::Interval => i64::from(self.window_minutes),
            DemandMode::Sliding => i64::from(self.slip_minutes),
        };
        if self.recent.len() < window || end.rem_euclid(period) != 0 {
            return None;
        }
        let demand = self.recent.iter().sum::<f64>() / window as f64;
        let at = end * MINUTE;
        if self.max.is_none_or(|m| demand > m.kw) {
            self.max = Some(DemandRecord { kw: demand, at });
        }
        Some((demand, at))
    }

    pub fn clear_max(&mut self) {
        self.max = None;
    }

    pub fn reset(&mut self) {
        self.recent.clear();
        self.last_tick = None;
        self.max = None;
    }
}

/// Pure form of [`DemandTracker::update`].
pub fn update_demand(state: &DemandTracker, avg_power_kw: f64, minute_tick: i64) -> DemandTracker {
    let mut next = state.clone();
    next.update(avg_power_kw, minute_tick);
    next
}

/// Demand bookkeeping of a meter: forward and reverse active demand plus
/// per-rate forward maxima, fed with energy over arbitrary intervals and
/// folded into one-minute averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandState {
    pub forward: DemandTracker,
    pub reverse: DemandTracker,
    pub per_rate_max: Vec<Option<DemandRecord>>,
    minute: Option<i64>,
    minute_wh_fwd: f64,
    minute_wh_rev: f64,
}

impl DemandState {
    pub fn new(
        mode: DemandMode,
        window_minutes: u32,
        slip_minutes: u32,
        rate_count: usize,
    ) -> Result<Self, RegisterError> {
        Ok(Self {
            forward: DemandTracker::new(mode, window_minutes, slip_minutes)?,
            reverse: DemandTracker::new(mode, window_minutes, slip_minutes)?,
            per_rate_max: vec![None; rate_count],
            minute: None,
            minute_wh_fwd: 0.0,
            minute_wh_rev: 0.0,
        })
    }

    pub fn mode(&self) -> DemandMode {
        self.forward.mode
    }

    /// Reconfigures the window; pending minutes and maxima are discarded.
    pub fn reconfigure(
        &mut self,
        mode: DemandMode,
        window_minutes: u32,
        slip_minutes: u32,
    ) -> Result<(), RegisterError> {
        *self = Self::new(mode, window_minutes, slip_minutes, self.per_rate_max.len())?;
        Ok(())
    }

    /// Spreads `wh` (signed: forward ≥ 0) uniformly over `(start, end]`
    /// seconds and closes every minute that ends before `end`'s minute.
    pub fn feed(&mut self, wh: f64, start: f64, end: Timestamp, rate_at: impl Fn(Timestamp) -> usize) {
        let end_f = end as f64;
        let span = end_f - start;
        if span <= 0.0 {
            return;
        }
        let mut t = start;
        while t < end_f {
            let tick = (t / MINUTE as f64).floor() as i64;
            let minute_end = ((tick + 1) * MINUTE) as f64;
            let seg_end = minute_end.min(end_f);
            let share = wh * (seg_end - t) / span;
            self.roll_to(tick, &rate_at);
            if share >= 0.0 {
                self.minute_wh_fwd += share;
            } else {
                self.minute_wh_rev -= share;
            }
            t = seg_end;
        }
        // a step ending exactly on a minute boundary completes that minute
        if end % MINUTE == 0 {
            self.roll_to(end / MINUTE, &rate_at);
        }
    }

    fn roll_to(&mut self, tick: i64, rate_at: &impl Fn(Timestamp) -> usize) {
        match self.minute {
            Some(m) if m == tick => {}
            Some(m) if m > tick => {}
            Some(m) => {
                let fwd_kw = self.minute_wh_fwd * 60.0 / 1000.0;
                let rev_kw = self.minute_wh_rev * 60.0 / 1000.0;
                for (kw, at) in self.forward.update(fwd_kw, m) {
                    let rate = rate_at(at - 1);
                    if let Some(slot) = self.per_rate_max.get_mut(rate) {
                        if slot.is_none_or(|r| kw > r.kw) {
                            *slot = Some(DemandRecord { kw, at });
                        }
                    }
                }
                self.reverse.update(rev_kw, m);
                self.minute = Some(tick);
                self.minute_wh_fwd = 0.0;
                self.minute_wh_rev = 0.0;
            }
            None => self.minute = Some(tick),
        }
    }

    pub fn clear_max(&mut self) {
        self.forward.clear_max();
        self.reverse.clear_max();
        self.per_rate_max.iter_mut().for_each(|r| *r = None);
    }

    pub fn reset(&mut self) {
        self.forward.reset();
        self.reverse.reset();
        self.per_rate_max.iter_mut().for_each(|r| *r = None);
        self.minute = None;
        self.minute_wh_fwd = 0.0;
        self.minute_wh_rev = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(mode: DemandMode, profile: &[f64]) -> f64 {
        let mut t = DemandTracker::new(mode, 15, 1).unwrap();
        for (tick, &kw) in profile.iter().enumerate() {
            t.update(kw, tick as i64);
        }
        t.max_kw()
    }

    fn brute_force_sliding(profile: &[f64], window: usize) -> f64 {
        profile
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_load() {
        let p = vec![10.0; 30];
        assert!((run(DemandMode::Sliding, &p) - 10.0).abs() < 1e-12);
        assert!((run(DemandMode::Interval, &p) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_block() {
        let mut p = vec![0.0; 14];
        p.extend([15.0; 15]);
        p.extend([0.0; 16]);
        assert!((run(DemandMode::Sliding, &p) - 15.0).abs() < 1e-12);
        let interval = run(DemandMode::Interval, &p);
        assert!((interval - 14.0).abs() < 1e-12);
    }

    #[test]
    fn random_profile_matches_exhaustive_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..240).map(|_| rng.gen_range(0.0..50.0)).collect();
        assert_eq!(p.windows(15).count(), 226);
        let brute = brute_force_sliding(&p, 15);
        assert!((run(DemandMode::Sliding, &p) - brute).abs() < 1e-9);
        assert!(run(DemandMode::Interval, &p) <= brute + 1e-12);
    }

    #[test]
    fn slip_must_divide_window() {
        assert!(DemandTracker::new(DemandMode::Sliding, 15, 4).is_err());
        assert!(DemandTracker::new(DemandMode::Sliding, 15, 5).is_ok());
        assert!(DemandTracker::new(DemandMode::Sliding, 0, 1).is_err());
    }

    #[test]
    fn gaps_count_as_zero() {
        let mut t = DemandTracker::new(DemandMode::Sliding, 15, 1).unwrap();
        for tick in 0..15 {
            t.update(6.0, tick);
        }
        assert!((t.max_kw() - 6.0).abs() < 1e-12);
        t.update(30.0, 40);
        // window ending at minute 41 holds 14 zero minutes and one 30 kW minute
        assert!((t.max_kw() - 6.0).abs() < 1e-12);
        let pure = update_demand(&t, 0.0, 41);
        assert_eq!(pure.max, t.max);
    }

    #[test]
    fn energy_feed_folds_into_minutes() {
        let mut d = DemandState::new(DemandMode::Sliding, 15, 1, 2).unwrap();
        // 10 kW for 30 minutes in 1 s steps
        let wh_per_s = 10_000.0 / 3600.0;
        for s in 1..=1800 {
            d.feed(wh_per_s, (s - 1) as f64, s, |t| usize::from(t >= 1200));
        }
        assert!((d.forward.max_kw() - 10.0).abs() < 1e-9);
        assert!(d.per_rate_max[0].is_some() && d.per_rate_max[1].is_some());
        assert!(d.reverse.max.is_none_or(|r| r.kw == 0.0));
    }

    #[test]
    fn one_long_step_spreads_over_minutes() {
        let mut d = DemandState::new(DemandMode::Interval, 15, 1, 1).unwrap();
        d.feed(5_000.0, 0.0, 3600, |_| 0);
        assert!((d.forward.max_kw() - 5.0).abs() < 1e-9);
    }
}
