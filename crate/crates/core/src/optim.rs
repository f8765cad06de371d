//! Optimizer update rules: SGD, SGD with momentum, and Adam.
//!
//! All three consume a gradient that has already been multiplied by the
//! step's loss scale (the scale is applied at the backward root, not here).
//! L2 weight decay is coupled: the decay term `weight_decay * w` is added to
//! the incoming gradient before momentum/Adam accumulation, and is therefore
//! *not* multiplied by the loss scale — it enters at the optimizer, after
//! backward has run.
//!
//! Steps are validate-then-commit: a non-finite gradient entry rejects the
//! step with params and optimizer state left bitwise unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::param::{Gradient, ParamVector};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd {
        weight_decay: f64,
    },
    Momentum {
        alpha: f64,
        weight_decay: f64,
        /// The velocity buffer v: v <- alpha*v - lr*(g + wd*w), w <- w + v.
        velocity: Vec<f64>,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
        m: Vec<f64>,
        v2: Vec<f64>,
        /// Number of committed steps; drives bias correction.
        t: u64,
    },
}

fn check_weight_decay(weight_decay: f64) -> Result<()> {
    if !(weight_decay.is_finite() && weight_decay >= 0.0) {
        return Err(Error::invalid(format!(
            "weight_decay must be finite and >= 0, got {weight_decay}"
        )));
    }
    Ok(())
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && (0.0..1.0).contains(&x)) {
        return Err(Error::invalid(format!("{name} must lie in [0,1), got {x}")));
    }
    Ok(())
}

impl OptimizerState {
    pub fn sgd(weight_decay: f64) -> Result<Self> {
        check_weight_decay(weight_decay)?;
        Ok(OptimizerState::Sgd { weight_decay })
    }

    pub fn momentum(alpha: f64, weight_decay: f64, dim: usize) -> Result<Self> {
        check_unit_interval("momentum alpha", alpha)?;
        check_weight_decay(weight_decay)?;
        if dim == 0 {
            return Err(Error::invalid("momentum needs dim >= 1"));
        }
        Ok(OptimizerState::Momentum {
            alpha,
            weight_decay,
            velocity: vec![0.0; dim],
        })
    }

    pub fn adam(
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
        dim: usize,
    ) -> Result<Self> {
        check_unit_interval("adam beta1", beta1)?;
        check_unit_interval("adam beta2", beta2)?;
        check_weight_decay(weight_decay)?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "adam epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("adam needs dim >= 1"));
        }
        Ok(OptimizerState::Adam {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            m: vec![0.0; dim],
            v2: vec![0.0; dim],
            t: 0,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimizerState::Sgd { .. } => "sgd",
            OptimizerState::Momentum { .. } => "momentum",
            OptimizerState::Adam { .. } => "adam",
        }
    }

    /// Velocity buffer (momentum kind only); for inspection and tests.
    pub fn velocity(&self) -> Option<&[f64]> {
        match self {
            OptimizerState::Momentum { velocity, .. } => Some(velocity),
            _ => None,
        }
    }

    fn state_dim(&self) -> Option<usize> {
        match self {
            OptimizerState::Sgd { .. } => None,
            OptimizerState::Momentum { velocity, .. } => Some(velocity.len()),
            OptimizerState::Adam { m, .. } => Some(m.len()),
        }
    }

    /// Apply one update in place.
    ///
    /// `grad` is the batch-mean gradient already multiplied by the step's
    /// scale. On any validation failure — non-finite gradient entry, bad lr,
    /// dimension mismatch — the step is rejected and `params` and `self` are
    /// left bitwise unchanged.
    pub fn step(&mut self, params: &mut ParamVector, grad: &Gradient, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and > 0, got {lr}"
            )));
        }
        if grad.dim() != params.dim() {
            return Err(Error::DimMismatch {
                expected: params.dim(),
                got: grad.dim(),
            });
        }
        if let Some(dim) = self.state_dim() {
            if dim != params.dim() {
                return Err(Error::DimMismatch {
                    expected: params.dim(),
                    got: dim,
                });
            }
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(
                "gradient has a non-finite entry; step rejected".into(),
            ));
        }

        let g = grad.as_slice();
        match self {
            OptimizerState::Sgd { weight_decay } => {
                let wd = *weight_decay;
                for (w, &gi) in params.as_mut_slice().iter_mut().zip(g) {
                    *w -= lr * (gi + wd * *w);
                }
            }
            OptimizerState::Momentum {
                alpha,
                weight_decay,
                velocity,
            } => {
                let (a, wd) = (*alpha, *weight_decay);
                let w = params.as_mut_slice();
                for i in 0..w.len() {
                    let v = a * velocity[i] - lr * (g[i] + wd * w[i]);
                    velocity[i] = v;
                    w[i] += v;
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                weight_decay,
                m,
                v2,
                t,
            } => {
                let (b1, b2, eps, wd) = (*beta1, *beta2, *epsilon, *weight_decay);
                *t += 1;
                let bc1 = 1.0 - pow_int(b1, *t);
                let bc2 = 1.0 - pow_int(b2, *t);
                let w = params.as_mut_slice();
                for i in 0..w.len() {
                    let gi = g[i] + wd * w[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v2[i] = b2 * v2[i] + (1.0 - b2) * gi * gi;
                    let m_hat = m[i] / bc1;
                    let v_hat = v2[i] / bc2;
                    w[i] -= lr * m_hat / (crate::math::sqrt(v_hat) + eps);
                }
            }
        }
        Ok(())
    }
}

/// Exact-ish integer power by binary exponentiation (deterministic, no libm).
fn pow_int(base: f64, exp: u64) -> f64 {
    let mut result = 1.0;
    let mut b = base;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= b;
        }
        b *= b;
        e >>= 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(values: &[f64]) -> ParamVector {
        ParamVector::new(values.to_vec()).unwrap()
    }

    fn grad(values: &[f64]) -> Gradient {
        Gradient::new(values.to_vec())
    }

    #[test]
    fn sgd_hand_value() {
        let mut opt = OptimizerState::sgd(0.0).unwrap();
        let mut p = params(&[1.0]);
        opt.step(&mut p, &grad(&[2.0]), 0.1).unwrap();
        assert_eq!(p.as_slice(), &[0.8]);
    }

    #[test]
    fn sgd_zero_grad_is_a_fixed_point() {
        let mut opt = OptimizerState::sgd(0.0).unwrap();
        let mut p = params(&[1.0, -2.5]);
        opt.step(&mut p, &grad(&[0.0, 0.0]), 0.1).unwrap();
        assert_eq!(p.as_slice(), &[1.0, -2.5]);
    }

    #[test]
    fn sgd_weight_decay_hand_value() {
        // w=1, g=0, lr=0.1, decay 5e-4 -> w - 0.1*5e-4*w = 0.99995.
        let mut opt = OptimizerState::sgd(0.0005).unwrap();
        let mut p = params(&[1.0]);
        opt.step(&mut p, &grad(&[0.0]), 0.1).unwrap();
        assert!((p[0] - 0.99995).abs() < 1e-15);
    }

    #[test]
    fn momentum_velocity_unroll() {
        // v0=0, alpha=0.9, lr=0.1, constant grad 1: v1=-0.1, v2=-0.19.
        let mut opt = OptimizerState::momentum(0.9, 0.0, 1).unwrap();
        let mut p = params(&[0.0]);
        let g = grad(&[1.0]);
        opt.step(&mut p, &g, 0.1).unwrap();
        assert!((opt.velocity().unwrap()[0] + 0.1).abs() < 1e-16);
        opt.step(&mut p, &g, 0.1).unwrap();
        assert!((opt.velocity().unwrap()[0] + 0.19).abs() < 1e-15);
    }

    #[test]
    fn momentum_geometric_limit() {
        // Constant gradient: |v| -> lr*|g|/(1-alpha) within 1% by t=100.
        let (lr, alpha, g0) = (0.1, 0.9, 1.0);
        let mut opt = OptimizerState::momentum(alpha, 0.0, 1).unwrap();
        let mut p = params(&[0.0]);
        let g = grad(&[g0]);
        for _ in 0..100 {
            opt.step(&mut p, &g, lr).unwrap();
        }
        let limit = lr * g0 / (1.0 - alpha);
        let v = opt.velocity().unwrap()[0].abs();
        assert!((v - limit).abs() / limit < 0.01, "v={v}, limit={limit}");
    }

    #[test]
    fn momentum_closed_form_at_every_step() {
        // v_t = -lr*g*(1-alpha^t)/(1-alpha) for constant g.
        for alpha in [0.0, 0.5, 0.9, 0.95] {
            let (lr, g0) = (0.05, 2.0);
            let mut opt = OptimizerState::momentum(alpha, 0.0, 1).unwrap();
            let mut p = params(&[0.0]);
            let g = grad(&[g0]);
            let mut alpha_t = 1.0;
            for t in 1..=100u32 {
                opt.step(&mut p, &g, lr).unwrap();
                alpha_t *= alpha;
                let expected = -lr * g0 * (1.0 - alpha_t) / (1.0 - alpha);
                let v = opt.velocity().unwrap()[0];
                assert!(
                    (v - expected).abs() <= 1e-10 * expected.abs().max(1e-30),
                    "alpha={alpha} t={t}: v={v}, expected={expected}"
                );
            }
        }
    }

    #[test]
    fn momentum_alpha_zero_matches_sgd_bitwise() {
        let mut sgd = OptimizerState::sgd(0.0005).unwrap();
        let mut mom = OptimizerState::momentum(0.0, 0.0005, 2).unwrap();
        let mut p_sgd = params(&[1.0, -0.5]);
        let mut p_mom = params(&[1.0, -0.5]);
        for k in 0..10 {
            let g = grad(&[0.3 * k as f64 - 1.0, 0.7 + 0.1 * k as f64]);
            sgd.step(&mut p_sgd, &g, 0.05).unwrap();
            mom.step(&mut p_mom, &g, 0.05).unwrap();
            for (a, b) in p_sgd.as_slice().iter().zip(p_mom.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits(), "step {k}");
            }
        }
    }

    #[test]
    fn sgd_scale_lr_bilinearity() {
        // scale-c gradient at lr eta == unscaled gradient at lr c*eta.
        let (c, eta) = (0.37, 0.01);
        let g0 = grad(&[1.25, -3.5, 0.004]);
        let mut a = OptimizerState::sgd(0.0).unwrap();
        let mut b = OptimizerState::sgd(0.0).unwrap();
        let mut pa = params(&[1.0, 2.0, 3.0]);
        let mut pb = params(&[1.0, 2.0, 3.0]);
        for _ in 0..25 {
            a.step(&mut pa, &g0.scaled(c), eta).unwrap();
            b.step(&mut pb, &g0, c * eta).unwrap();
        }
        for (x, y) in pa.as_slice().iter().zip(pb.as_slice()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn adam_first_step_magnitude_is_near_lr() {
        let lr = 0.001;
        let mut opt = OptimizerState::adam(0.9, 0.999, 1e-8, 0.0, 3).unwrap();
        let mut p = params(&[1.0, 1.0, 1.0]);
        let g = grad(&[1.0, -0.037, 250.0]);
        opt.step(&mut p, &g, lr).unwrap();
        for (i, (&w, &gi)) in p.as_slice().iter().zip(g.as_slice()).enumerate() {
            let update = (w - 1.0).abs();
            let expected = lr * gi.abs() / (gi.abs() + 1e-8);
            assert!(
                (update - expected).abs() < 1e-15,
                "component {i}: {update} vs {expected}"
            );
            assert!((update - lr).abs() < 1e-6 * lr.max(1.0), "component {i}");
        }
    }

    #[test]
    fn adam_zero_gradient_never_moves() {
        let mut opt = OptimizerState::adam(0.5, 0.999, 1e-8, 0.0, 2).unwrap();
        let mut p = params(&[0.3, -0.7]);
        for _ in 0..50 {
            opt.step(&mut p, &grad(&[0.0, 0.0]), 0.0002).unwrap();
        }
        assert_eq!(p.as_slice(), &[0.3, -0.7]);
    }

    #[test]
    fn adam_accepts_low_beta1_settings() {
        let mut opt = OptimizerState::adam(0.5, 0.999, 1e-8, 0.0, 1).unwrap();
        let mut p = params(&[1.0]);
        opt.step(&mut p, &grad(&[0.5]), 0.0002).unwrap();
        assert!(p[0] < 1.0);
    }

    #[test]
    fn adam_t_increments_only_on_committed_steps() {
        let mut opt = OptimizerState::adam(0.9, 0.999, 1e-8, 0.0, 1).unwrap();
        let mut p = params(&[1.0]);
        opt.step(&mut p, &grad(&[1.0]), 0.01).unwrap();
        assert!(opt.step(&mut p, &grad(&[f64::NAN]), 0.01).is_err());
        opt.step(&mut p, &grad(&[1.0]), 0.01).unwrap();
        match &opt {
            OptimizerState::Adam { t, .. } => assert_eq!(*t, 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejected_step_leaves_params_and_state_bitwise_unchanged() {
        let mut opt = OptimizerState::momentum(0.9, 0.0005, 2).unwrap();
        let mut p = params(&[1.0, 2.0]);
        opt.step(&mut p, &grad(&[0.1, -0.2]), 0.05).unwrap();
        let p_before = p.clone();
        let opt_before = opt.clone();

        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            let err = opt.step(&mut p, &grad(&[0.1, bad]), 0.05).unwrap_err();
            assert!(matches!(err, Error::NonFinite(_)));
            assert_eq!(p, p_before);
            assert_eq!(opt, opt_before);
        }

        // Dim mismatch is likewise rejected cleanly.
        assert!(opt.step(&mut p, &grad(&[0.1]), 0.05).is_err());
        assert_eq!(p, p_before);
        assert_eq!(opt, opt_before);
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(OptimizerState::sgd(-0.1).is_err());
        assert!(OptimizerState::momentum(1.0, 0.0, 2).is_err());
        assert!(OptimizerState::momentum(-0.1, 0.0, 2).is_err());
        assert!(OptimizerState::momentum(0.9, 0.0, 0).is_err());
        assert!(OptimizerState::adam(1.0, 0.999, 1e-8, 0.0, 2).is_err());
        assert!(OptimizerState::adam(0.9, 1.0, 1e-8, 0.0, 2).is_err());
        assert!(OptimizerState::adam(0.9, 0.999, 0.0, 0.0, 2).is_err());
        assert!(OptimizerState::adam(0.9, 0.999, 1e-8, -1.0, 2).is_err());
    }

    #[test]
    fn step_rejects_bad_lr() {
        let mut opt = OptimizerState::sgd(0.0).unwrap();
        let mut p = params(&[1.0]);
        for lr in [0.0, -0.1, f64::NAN, f64::INFINITY] {
            assert!(opt.step(&mut p, &grad(&[1.0]), lr).is_err());
            assert_eq!(p.as_slice(), &[1.0]);
        }
    }
}
