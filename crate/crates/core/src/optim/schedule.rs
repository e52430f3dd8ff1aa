use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the run spent ramping up in the one-cycle policy.
pub const DEFAULT_PEAK_FRACTION: f64 = 0.3;

/// Learning-rate schedules, stepped once per optimizer update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Cosine ramp `initial → max` up to the peak step, then cosine decay
    /// `max → final` ending exactly on the last step.
    OneCycle {
        initial_lr: f64,
        max_lr: f64,
        final_lr: f64,
        #[serde(default = "default_peak")]
        peak_fraction: f64,
    },
    /// Cosine annealing `max → min` restarted every cycle; each cycle is
    /// `cycle_mult` times longer than the previous one.
    CosineRestarts {
        max_lr: f64,
        min_lr: f64,
        first_cycle: usize,
        #[serde(default = "default_mult")]
        cycle_mult: usize,
    },
    Constant {
        lr: f64,
    },
}

fn default_peak() -> f64 {
    DEFAULT_PEAK_FRACTION
}

fn default_mult() -> usize {
    1
}

impl Default for ScheduleKind {
    fn default() -> Self {
        ScheduleKind::OneCycle {
            initial_lr: 1e-4,
            max_lr: 1e-3,
            final_lr: 1e-6,
            peak_fraction: DEFAULT_PEAK_FRACTION,
        }
    }
}

/// Half-cosine interpolation from `from` (at `t = 0`) to `to` (at `t = len`).
#[inline]
pub fn cosine_interp(from: f64, to: f64, t: f64, len: f64) -> f64 {
    // Exact endpoints; the formula is off by an ulp at t = 0.
    if t <= 0.0 {
        return from;
    }
    if t >= len {
        return to;
    }
    to + 0.5 * (from - to) * (1.0 + (PI * t / len).cos())
}

impl ScheduleKind {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi.is_finite();
        let valid = match *self {
            ScheduleKind::OneCycle {
                initial_lr,
                max_lr,
                final_lr,
                peak_fraction,
            } => {
                ok(initial_lr, max_lr)
                    && ok(final_lr, max_lr)
                    && (0.0..=1.0).contains(&peak_fraction)
            }
            ScheduleKind::CosineRestarts {
                max_lr,
                min_lr,
                first_cycle,
                cycle_mult,
            } => ok(min_lr, max_lr) && first_cycle >= 1 && cycle_mult >= 1,
            ScheduleKind::Constant { lr } => ok(lr, lr),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::param(format!(
                "invalid learning-rate schedule {self:?}"
            )))
        }
    }

    /// Peak step of a one-cycle run with `total` steps.
    pub fn peak_step(peak_fraction: f64, total: usize) -> usize {
        let last = total.saturating_sub(1);
        ((peak_fraction * total as f64).round() as usize).min(last)
    }

    /// Learning rate at `step` (0-based) of a run with `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match *self {
            ScheduleKind::OneCycle {
                initial_lr,
                max_lr,
                final_lr,
                peak_fraction,
            } => {
                let last = total.saturating_sub(1);
                let peak = Self::peak_step(peak_fraction, total);
                if step <= peak {
                    if peak == 0 {
                        max_lr
                    } else {
                        cosine_interp(initial_lr, max_lr, step as f64, peak as f64)
                    }
                } else if step >= last {
                    final_lr
                } else {
                    cosine_interp(max_lr, final_lr, (step - peak) as f64, (last - peak) as f64)
                }
            }
            ScheduleKind::CosineRestarts { .. } => {
                let (t, len) = self.cycle_position(step);
                self.lr_in_cycle(t, len)
            }
            ScheduleKind::Constant { lr } => lr,
        }
    }

    /// Cosine-restart rate at position `t` of a cycle of length `len`.
    /// `t = 0` is the restart (max); `t = len` is the cycle's closing edge
    /// (min), which coincides with the next restart step.
    pub fn lr_in_cycle(&self, t: usize, len: usize) -> f64 {
        match *self {
            ScheduleKind::CosineRestarts { max_lr, min_lr, .. } => {
                cosine_interp(max_lr, min_lr, t as f64, len as f64)
            }
            _ => self.lr_at(t, len),
        }
    }

    /// Cycle lengths of a cosine-restart schedule for the cycles starting
    /// below `limit`.
    pub fn cycle_lengths(&self, limit: usize) -> Vec<usize> {
        self.restart_steps(limit)
            .iter()
            .map(|&s| self.cycle_position(s).1)
            .collect()
    }

    /// For cosine restarts: `(step within cycle, cycle length)`.
    /// Other schedules are treated as a single cycle.
    pub fn cycle_position(&self, step: usize) -> (usize, usize) {
        match *self {
            ScheduleKind::CosineRestarts {
                first_cycle,
                cycle_mult,
                ..
            } => {
                let mut t = step;
                let mut len = first_cycle.max(1);
                while t >= len {
                    t -= len;
                    len = len.saturating_mul(cycle_mult.max(1));
                }
                (t, len)
            }
            _ => (step, usize::MAX),
        }
    }

    /// Restart steps strictly below `limit` (the first is always 0).
    pub fn restart_steps(&self, limit: usize) -> Vec<usize> {
        match *self {
            ScheduleKind::CosineRestarts {
                first_cycle,
                cycle_mult,
                ..
            } => {
                let mut out = Vec::new();
                let (mut s, mut len) = (0usize, first_cycle.max(1));
                while s < limit {
                    out.push(s);
                    s = s.saturating_add(len);
                    len = len.saturating_mul(cycle_mult.max(1));
                }
                out
            }
            _ => vec![0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cycle() -> ScheduleKind {
        ScheduleKind::default()
    }

    #[test]
    fn one_cycle_endpoints() {
        let s = one_cycle();
        let total = 1000;
        assert_eq!(s.lr_at(0, total), 1e-4);
        assert_eq!(s.lr_at(300, total), 1e-3);
        assert_eq!(s.lr_at(999, total), 1e-6);
        assert_eq!(s.lr_at(5000, total), 1e-6);
    }

    #[test]
    fn one_cycle_is_continuous_and_bounded() {
        let s = one_cycle();
        let total = 777;
        let lrs: Vec<f64> = (0..total).map(|k| s.lr_at(k, total)).collect();
        let max = lrs.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1e-3).abs() < 1e-12);
        let jump = lrs
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(jump < 1e-3 * PI / 233.0);
    }

    #[test]
    fn cosine_restart_midpoint() {
        let s = ScheduleKind::CosineRestarts {
            max_lr: 1e-3,
            min_lr: 1e-5,
            first_cycle: 100,
            cycle_mult: 1,
        };
        assert!((s.lr_at(50, 0) - 5.05e-4).abs() < 1e-15);
        assert_eq!(s.lr_at(0, 0), 1e-3);
        assert_eq!(s.lr_at(100, 0), 1e-3);
    }

    #[test]
    fn cosine_restart_cycles_grow() {
        let s = ScheduleKind::CosineRestarts {
            max_lr: 1.0,
            min_lr: 0.1,
            first_cycle: 10,
            cycle_mult: 2,
        };
        assert_eq!(s.restart_steps(100), vec![0, 10, 30, 70]);
        assert_eq!(s.cycle_position(35), (5, 40));
        for r in s.restart_steps(100) {
            assert_eq!(s.lr_at(r, 0), 1.0);
        }
        assert_eq!(s.cycle_lengths(100), vec![10, 20, 40, 80]);
        for len in s.cycle_lengths(100) {
            assert_eq!(s.lr_in_cycle(len, len), 0.1);
            assert!(s.lr_in_cycle(len - 1, len) > 0.1);
        }
    }

    #[test]
    fn validation() {
        assert!(one_cycle().validate().is_ok());
        assert!(ScheduleKind::Constant { lr: 0.0 }.validate().is_err());
        assert!(ScheduleKind::OneCycle {
            initial_lr: 2.0,
            max_lr: 1.0,
            final_lr: 0.1,
            peak_fraction: 0.3
        }
        .validate()
        .is_err());
        assert!(ScheduleKind::CosineRestarts {
            max_lr: 1.0,
            min_lr: 0.1,
            first_cycle: 0,
            cycle_mult: 1
        }
        .validate()
        .is_err());
    }

    #[test]
    fn serde_defaults() {
        let s: ScheduleKind = serde_json::from_str(
            r#"{"kind":"one_cycle","initial_lr":1e-4,"max_lr":1e-3,"final_lr":1e-6}"#,
        )
        .unwrap();
        assert_eq!(s, one_cycle());
    }
}
