//! Learning-rate schedules: constant, poly decay, and step decay.
//!
//! Poly is `base * (1 - iter/max_iter)^power` with the conventional power 0.9;
//! step decay multiplies by a factor (typically 0.1) at each milestone. All
//! schedules are immutable values, queried per optimization step.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant {
        base_lr: f64,
    },
    Poly {
        base_lr: f64,
        power: f64,
        max_iter: u64,
    },
    Step {
        base_lr: f64,
        decay_factor: f64,
        milestones: Vec<u64>,
    },
}

fn check_base_lr(base_lr: f64) -> Result<()> {
    if !(base_lr.is_finite() && base_lr > 0.0) {
        return Err(Error::invalid(format!(
            "base_lr must be finite and > 0, got {base_lr}"
        )));
    }
    Ok(())
}

impl Schedule {
    pub fn constant(base_lr: f64) -> Result<Self> {
        check_base_lr(base_lr)?;
        Ok(Schedule::Constant { base_lr })
    }

    pub fn poly(base_lr: f64, power: f64, max_iter: u64) -> Result<Self> {
        check_base_lr(base_lr)?;
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::invalid(format!(
                "poly power must be finite and > 0, got {power}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::invalid("poly max_iter must be >= 1"));
        }
        Ok(Schedule::Poly {
            base_lr,
            power,
            max_iter,
        })
    }

    pub fn step(base_lr: f64, decay_factor: f64, milestones: Vec<u64>) -> Result<Self> {
        check_base_lr(base_lr)?;
        if !(decay_factor.is_finite() && 0.0 < decay_factor && decay_factor < 1.0) {
            return Err(Error::invalid(format!(
                "step decay_factor must lie in (0,1), got {decay_factor}"
            )));
        }
        if milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("step milestones must be strictly ascending"));
        }
        Ok(Schedule::Step {
            base_lr,
            decay_factor,
            milestones,
        })
    }

    pub fn base_lr(&self) -> f64 {
        match *self {
            Schedule::Constant { base_lr }
            | Schedule::Poly { base_lr, .. }
            | Schedule::Step { base_lr, .. } => base_lr,
        }
    }

    /// Learning rate at iteration `iter`.
    ///
    /// Errors for the poly kind when `iter > max_iter` (the policy is defined
    /// on `[0, max_iter]` only; it reaches exactly 0 at the endpoint).
    pub fn lr_at(&self, iter: u64) -> Result<f64> {
        match self {
            Schedule::Constant { base_lr } => Ok(*base_lr),
            Schedule::Poly {
                base_lr,
                power,
                max_iter,
            } => {
                if iter > *max_iter {
                    return Err(Error::invalid(format!(
                        "poly schedule queried at iter {iter} > max_iter {max_iter}"
                    )));
                }
                let frac = 1.0 - iter as f64 / *max_iter as f64;
                Ok(base_lr * crate::math::powf(frac, *power))
            }
            Schedule::Step {
                base_lr,
                decay_factor,
                milestones,
            } => {
                let passed = milestones.iter().filter(|&&m| m <= iter).count();
                let mut lr = *base_lr;
                for _ in 0..passed {
                    lr *= decay_factor;
                }
                Ok(lr)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_endpoints_are_exact() {
        let s = Schedule::poly(0.01, 0.9, 5000).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.01);
        assert_eq!(s.lr_at(5000).unwrap(), 0.0);
    }

    #[test]
    fn poly_halfway_with_power_09() {
        // 0.01 * 0.5^0.9, frozen from an independent high-precision evaluation.
        let s = Schedule::poly(0.01, 0.9, 5000).unwrap();
        let lr = s.lr_at(2500).unwrap();
        let expected = 0.005358867312681466;
        assert!(
            (lr - expected).abs() / expected < 1e-12,
            "got {lr}, expected {expected}"
        );
    }

    #[test]
    fn poly_rejects_iter_past_max() {
        let s = Schedule::poly(0.01, 0.9, 100).unwrap();
        assert!(s.lr_at(101).is_err());
    }

    #[test]
    fn step_decay_hand_values() {
        let s = Schedule::step(0.1, 0.1, vec![100, 200]).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.1);
        assert_eq!(s.lr_at(99).unwrap(), 0.1);
        assert!((s.lr_at(150).unwrap() - 0.01).abs() < 1e-12);
        assert!((s.lr_at(100).unwrap() - 0.01).abs() < 1e-12);
        assert!((s.lr_at(5000).unwrap() - 0.001).abs() < 1e-13);
    }

    #[test]
    fn step_has_milestone_count_plus_one_distinct_values() {
        let s = Schedule::step(1.0, 0.5, vec![10, 20, 30]).unwrap();
        let mut values: Vec<u64> = (0..50).map(|i| s.lr_at(i).unwrap().to_bits()).collect();
        values.sort_unstable();
        values.dedup();
        assert_eq!(values.len(), 4);
    }

    #[test]
    fn all_kinds_are_non_increasing() {
        let schedules = [
            Schedule::constant(0.3).unwrap(),
            Schedule::poly(0.3, 0.9, 500).unwrap(),
            Schedule::poly(0.3, 2.0, 500).unwrap(),
            Schedule::step(0.3, 0.1, vec![50, 300, 400]).unwrap(),
        ];
        for s in &schedules {
            let mut prev = f64::INFINITY;
            for iter in 0..=500 {
                let lr = s.lr_at(iter).unwrap();
                assert!(lr <= prev, "{s:?} increased at iter {iter}");
                prev = lr;
            }
        }
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(Schedule::constant(0.0).is_err());
        assert!(Schedule::constant(-0.1).is_err());
        assert!(Schedule::poly(0.1, 0.0, 100).is_err());
        assert!(Schedule::poly(0.1, 0.9, 0).is_err());
        assert!(Schedule::step(0.1, 1.0, vec![10]).is_err());
        assert!(Schedule::step(0.1, 0.0, vec![10]).is_err());
        assert!(Schedule::step(0.1, 0.5, vec![10, 10]).is_err());
        assert!(Schedule::step(0.1, 0.5, vec![20, 10]).is_err());
    }
}
