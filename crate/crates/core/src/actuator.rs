//! Dead-zone nonlinearity between the commanded value and the delivered
//! torque, per channel:
//!
//! ```text
//!          ⎧ v − r_b   v > r_b
//! core(v) = ⎨ 0         ℓ_b ≤ v ≤ r_b
//!          ⎩ v − ℓ_b   v < ℓ_b
//! ```
//!
//! with `r_b > 0 > ℓ_b`. An asymmetric dead-zone adds a constant vertical
//! shift `β` to the output, so `apply(v) = core(v) + β`. The exact inverse of
//! the core jumps across the band; [`DeadZone::smooth_inverse_term`] is the
//! bounded `k·tanh(μ·)` approximation of that jump used by the compensating
//! controller.

use nalgebra::DVector;

use crate::{is_finite, Error, Real, Result};

/// Per-channel dead-zone geometry: break points `(r_b, ℓ_b)` and output
/// offset `β` (zero for a symmetric dead-zone).
#[derive(Debug, Clone, PartialEq)]
pub struct DeadZone<T: Real> {
    right_break: DVector<T>,
    left_break: DVector<T>,
    offset: DVector<T>,
}

impl<T: Real> DeadZone<T> {
    /// Requires `r_bi > 0` and `ℓ_bi < 0` on every channel.
    pub fn new(
        right_break: DVector<T>,
        left_break: DVector<T>,
        offset: DVector<T>,
    ) -> Result<Self> {
        let n = right_break.len();
        if left_break.len() != n || offset.len() != n {
            return Err(Error::DimensionMismatch {
                what: "dead-zone parameters",
                expected: n,
                got: left_break.len().max(offset.len()),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter {
                what: "dead-zone dimension",
                why: "must be at least 1",
            });
        }
        if right_break
            .iter()
            .any(|&r| !(r > T::zero()) || !is_finite(r))
        {
            return Err(Error::InvalidParameter {
                what: "right break points",
                why: "must be strictly positive",
            });
        }
        if left_break
            .iter()
            .any(|&l| !(l < T::zero()) || !is_finite(l))
        {
            return Err(Error::InvalidParameter {
                what: "left break points",
                why: "must be strictly negative",
            });
        }
        if offset.iter().any(|&b| !is_finite(b)) {
            return Err(Error::NonFinite("dead-zone offset"));
        }
        Ok(Self {
            right_break,
            left_break,
            offset,
        })
    }

    /// Symmetric dead-zone with `r_b = −ℓ_b = half_width` and zero offset.
    pub fn symmetric(half_width: DVector<T>) -> Result<Self> {
        let left = -half_width.clone();
        let offset = DVector::zeros(half_width.len());
        Self::new(half_width, left, offset)
    }

    pub fn dim(&self) -> usize {
        self.right_break.len()
    }

    pub fn right_break(&self) -> &DVector<T> {
        &self.right_break
    }

    pub fn left_break(&self) -> &DVector<T> {
        &self.left_break
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.offset
    }

    /// Half band widths `k_i = (r_bi − ℓ_bi) / 2`.
    pub fn half_widths(&self) -> DVector<T> {
        (&self.right_break - &self.left_break) / (T::one() + T::one())
    }

    fn check_dim(&self, v: &DVector<T>, what: &'static str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Delivered torque for a command `v`: the piecewise-linear core shifted
    /// by the output offset. Continuous and monotone non-decreasing per
    /// channel, slope 0 inside the band and 1 outside.
    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        self.check_dim(v, "dead-zone command")?;
        let mut tau = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let core = if v[i] > self.right_break[i] {
                v[i] - self.right_break[i]
            } else if v[i] < self.left_break[i] {
                v[i] - self.left_break[i]
            } else {
                T::zero()
            };
            tau[i] = core + self.offset[i];
        }
        Ok(tau)
    }

    /// Exact inverse of [`apply`](Self::apply) away from the jump: with
    /// `τ' = τ_des − β`, returns `τ' + r_b` for `τ' > 0`, `τ' + ℓ_b` for
    /// `τ' < 0`, and the band midpoint 0 at `τ' = 0`. Satisfies
    /// `apply(hard_inverse(τ)) = τ` whenever `τ' ≠ 0`.
    pub fn hard_inverse(&self, tau_des: &DVector<T>) -> Result<DVector<T>> {
        self.check_dim(tau_des, "desired torque")?;
        let mut v = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let shifted = tau_des[i] - self.offset[i];
            v[i] = if shifted > T::zero() {
                shifted + self.right_break[i]
            } else if shifted < T::zero() {
                shifted + self.left_break[i]
            } else {
                T::zero()
            };
        }
        Ok(v)
    }

    /// Smooth approximation of the inverse's jump: component-wise
    /// `k_i · tanh(μ_i e_i)` with `k` the half widths. Odd in `e`, bounded by
    /// `±k_i`, slope `k_i μ_i` at the origin; sharpness `μ_i > 0` required.
    pub fn smooth_inverse_term(&self, mu: &DVector<T>, error: &DVector<T>) -> Result<DVector<T>> {
        self.check_dim(mu, "sharpness")?;
        self.check_dim(error, "position error")?;
        if mu.iter().any(|&m| !(m > T::zero())) {
            return Err(Error::InvalidParameter {
                what: "sharpness",
                why: "all entries must be strictly positive",
            });
        }
        let k = self.half_widths();
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            out[i] = k[i] * (mu[i] * error[i]).tanh();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn case_one_band() -> DeadZone<f64> {
        DeadZone::symmetric(dvector![0.13]).unwrap()
    }

    #[test]
    fn construction_checks_side_conditions() {
        assert!(DeadZone::new(dvector![0.0], dvector![-1.0], dvector![0.0]).is_err());
        assert!(DeadZone::new(dvector![1.0], dvector![0.0], dvector![0.0]).is_err());
        assert!(DeadZone::new(dvector![1.0], dvector![-1.0], dvector![f64::NAN]).is_err());
        assert!(DeadZone::new(dvector![1.0, 1.0], dvector![-1.0], dvector![0.0]).is_err());
    }

    #[test]
    fn apply_inside_band_is_zero() {
        let dz = case_one_band();
        assert_eq!(dz.apply(&dvector![0.0]).unwrap(), dvector![0.0]);
        assert_eq!(dz.apply(&dvector![0.13]).unwrap(), dvector![0.0]);
        assert_eq!(dz.apply(&dvector![-0.13]).unwrap(), dvector![0.0]);
    }

    #[test]
    fn apply_unit_slope_outside_band() {
        let dz = DeadZone::symmetric(dvector![0.5]).unwrap();
        assert_eq!(dz.apply(&dvector![1.5]).unwrap(), dvector![1.0]);
        // Left branch with the 0.13 half width: v = -0.2 lands 0.07 past the edge.
        let dz = case_one_band();
        let tau = dz.apply(&dvector![-0.2]).unwrap();
        assert!((tau[0] - (-0.07)).abs() < 1e-15);
    }

    #[test]
    fn offset_shifts_output_vertically() {
        let dz = DeadZone::<f64>::new(
            dvector![0.13, 0.35],
            dvector![-0.13, -0.35],
            dvector![-0.016, -0.2],
        )
        .unwrap();
        let tau = dz.apply(&dvector![0.0, 0.0]).unwrap();
        assert_eq!(tau, dvector![-0.016, -0.2]);
        let tau = dz.apply(&dvector![0.2, -0.4]).unwrap();
        assert!((tau[0] - (0.07 - 0.016)).abs() < 1e-15);
        assert!((tau[1] - (-0.05 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn hard_inverse_branches() {
        let dz = case_one_band();
        assert_eq!(dz.hard_inverse(&dvector![0.0]).unwrap(), dvector![0.0]);
        let v = dz.hard_inverse(&dvector![0.5]).unwrap();
        assert!((v[0] - 0.63).abs() < 1e-15);
        let v = dz.hard_inverse(&dvector![-0.5]).unwrap();
        assert!((v[0] - (-0.63)).abs() < 1e-15);
    }

    #[test]
    fn hard_inverse_respects_offset() {
        let dz = DeadZone::new(dvector![0.3], dvector![-0.2], dvector![0.1]).unwrap();
        // tau' = tau - beta = 0 maps to the band midpoint.
        assert_eq!(dz.hard_inverse(&dvector![0.1]).unwrap(), dvector![0.0]);
        let tau = dvector![0.4];
        let v = dz.hard_inverse(&tau).unwrap();
        assert!((dz.apply(&v).unwrap() - tau).abs().max() < 1e-15);
    }

    #[test]
    fn smooth_inverse_term_values() {
        let dz = case_one_band();
        let mu = dvector![10.0];
        assert_eq!(
            dz.smooth_inverse_term(&mu, &dvector![0.0]).unwrap(),
            dvector![0.0]
        );
        // Saturation limit.
        let far = dz.smooth_inverse_term(&mu, &dvector![1e3]).unwrap();
        assert!((far[0] - 0.13).abs() < 1e-12);
        // Direct evaluation at 0.3: k tanh(3).
        let mid = dz.smooth_inverse_term(&mu, &dvector![0.3]).unwrap();
        let expected = 0.13 * 3.0_f64.tanh();
        assert!((mid[0] - expected).abs() < 1e-15);
        assert!((expected - 0.12935).abs() < 1e-5);
    }

    #[test]
    fn smooth_inverse_rejects_nonpositive_sharpness() {
        let dz = case_one_band();
        assert!(dz
            .smooth_inverse_term(&dvector![0.0], &dvector![0.1])
            .is_err());
        assert!(dz
            .smooth_inverse_term(&dvector![-2.0], &dvector![0.1])
            .is_err());
    }

    #[test]
    fn large_sharpness_approaches_hard_inverse_shape() {
        // sup over |e| >= 0.01 of |k tanh(mu e) - k sign(e)| for mu = 1e4.
        let dz = case_one_band();
        let mu = dvector![1e4];
        let k = 0.13;
        let bound = 1e-8 * k + k * (1.0 - (1e4_f64 * 0.01).tanh());
        let mut worst = 0.0_f64;
        let mut e = 0.01;
        while e <= 2.0 {
            for s in [-1.0, 1.0] {
                let val = dz.smooth_inverse_term(&mu, &dvector![s * e]).unwrap()[0];
                worst = worst.max((val - s * k).abs());
            }
            e += 0.013;
        }
        assert!(worst <= bound, "worst {worst} exceeds bound {bound}");
    }

    #[test]
    fn band_grid_is_exactly_zero() {
        let dz = DeadZone::symmetric(dvector![0.35]).unwrap();
        let mut v = -0.35;
        while v <= 0.35 {
            assert_eq!(dz.apply(&dvector![v]).unwrap(), dvector![0.0]);
            v += 0.35 / 128.0;
        }
    }

    proptest! {
        #[test]
        fn apply_monotone_and_continuous(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            r in 0.01f64..2.0,
            l in -2.0f64..-0.01,
            beta in -1.0f64..1.0,
        ) {
            let dz = DeadZone::new(dvector![r], dvector![l], dvector![beta]).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t_lo = dz.apply(&dvector![lo]).unwrap()[0];
            let t_hi = dz.apply(&dvector![hi]).unwrap()[0];
            prop_assert!(t_lo <= t_hi + 1e-12);
            // Slope never exceeds 1: Lipschitz with constant 1.
            prop_assert!((t_hi - t_lo) <= (hi - lo) + 1e-12);
        }

        #[test]
        fn hard_inverse_round_trip(
            tau in -3.0f64..3.0,
            r in 0.01f64..2.0,
            l in -2.0f64..-0.01,
            beta in -1.0f64..1.0,
        ) {
            let dz = DeadZone::new(dvector![r], dvector![l], dvector![beta]).unwrap();
            prop_assume!((tau - beta).abs() >= 1e-9);
            let v = dz.hard_inverse(&dvector![tau]).unwrap();
            let back = dz.apply(&v).unwrap();
            prop_assert!((back[0] - tau).abs() < 1e-12);
        }

        #[test]
        fn smooth_term_is_odd_and_bounded(e in -10.0f64..10.0, mu in 0.1f64..100.0) {
            let dz = DeadZone::new(dvector![0.4], dvector![-0.2], dvector![0.05]).unwrap();
            let k = dz.half_widths()[0];
            let plus = dz.smooth_inverse_term(&dvector![mu], &dvector![e]).unwrap()[0];
            let minus = dz.smooth_inverse_term(&dvector![mu], &dvector![-e]).unwrap()[0];
            prop_assert!((plus + minus).abs() < 1e-12);
            prop_assert!(plus.abs() <= k + 1e-12);
        }
    }
}
