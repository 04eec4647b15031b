//! Entropy function, its bounded logarithmic cutoff, and the regularized
//! FENE spring factor.
//!
//! The cutoff `g_eps` truncates `ln` into a bounded Lipschitz function of a
//! real argument; `e_eps(z) = z * g_eps(z)` is the matching truncation of
//! `z ln z`. Both are total on the real line for `eps` in (0, 1).

use crate::error::{Error, Result};

/// `y ln y` extended by continuity with value 0 at `y = 0`.
///
/// Rejects negative input.
pub fn entropy(y: f64) -> Result<f64> {
    if y < 0.0 || !y.is_finite() {
        return Err(Error::InvalidParameter {
            name: "y",
            reason: format!("entropy requires y >= 0, got {y}"),
        });
    }
    if y == 0.0 {
        Ok(0.0)
    } else {
        Ok(y * y.ln())
    }
}

/// Validated cutoff parameter, `0 < eps < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    eps: f64,
}

impl RegularizationParams {
    /// `eps` must lie strictly inside (0, 1) so the four branches of the
    /// cutoff partition the real line (`1/ln eps < 0 < eps < 1/eps`).
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("required 0 < eps < 1, got {eps}"),
            });
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Branch breakpoints of the cutoff, in increasing order:
    /// `1/ln(eps)`, `eps`, `1/eps`.
    pub fn breakpoints(&self) -> [f64; 3] {
        [1.0 / self.eps.ln(), self.eps, 1.0 / self.eps]
    }
}

/// Bounded cutoff of `ln`:
///
/// ```text
///            ln(1/eps)   z >= 1/eps
///            ln(z)       eps <= z <= 1/eps
/// g_eps(z) = ln(eps)     1/ln(eps) <= z <= eps
///            1/z         z <= 1/ln(eps)
/// ```
///
/// The branch values coincide at the breakpoints, so the function is
/// continuous; ties are assigned deterministically to the branch covering
/// larger arguments. `|g_eps(z)| <= |ln eps|` for every real `z`.
pub fn g_eps(z: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0 && eps < 1.0);
    if z >= 1.0 / eps {
        (1.0 / eps).ln()
    } else if z >= eps {
        z.ln()
    } else if z >= 1.0 / eps.ln() {
        eps.ln()
    } else {
        1.0 / z
    }
}

/// Truncated entropy `e_eps(z) = z * g_eps(z)`.
pub fn e_eps(z: f64, eps: f64) -> f64 {
    z * g_eps(z, eps)
}

/// Smallest constant `c(delta)` (over a scanned grid) such that
/// `|e_eps(z)| <= c(delta) + |z|^(1+delta)` holds for all real `z`,
/// uniformly in `eps`.
///
/// The value 1 covers all z < 0 (`|z * g_eps(z)| <= 1` there) and the
/// positive axis is scanned numerically since `|e_eps| <= |E|` for z >= 0.
/// Diagnostic only; plays no role in the solve.
pub fn c_delta(delta: f64) -> f64 {
    assert!(delta > 0.0, "c_delta requires delta > 0");
    let mut c: f64 = 1.0;
    // sup over (0, 1] of -z ln z - z^(1+delta)
    let n = 20_000;
    for i in 1..=n {
        let z = i as f64 / n as f64;
        c = c.max(-z * z.ln() - z.powf(1.0 + delta));
    }
    // sup over (1, inf) of z ln z - z^(1+delta); the maximand tends to
    // -inf, so a log-spaced scan up to where it is clearly negative suffices
    let mut z: f64 = 1.0;
    while z < 1e12 {
        let v = z * z.ln() - z.powf(1.0 + delta);
        c = c.max(v);
        if v < -10.0 * c.abs() - 1.0 {
            break;
        }
        z *= 1.01;
    }
    c
}

/// Regularized FENE factor `1 / (eps + 1 - |q|^2)`.
///
/// `eps = 0` is permitted away from the sphere `|q| = 1`; on it the
/// unregularized factor is singular and the call is rejected.
pub fn fene_factor(q: &[f64], eps: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("fene_factor requires eps >= 0, got {eps}"),
        });
    }
    let norm_sq: f64 = q.iter().map(|v| v * v).sum();
    let denom = eps + 1.0 - norm_sq;
    if denom <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: format!(
                "singular FENE factor: eps + 1 - |q|^2 = {denom} (|q|^2 = {norm_sq}, eps = {eps})"
            ),
        });
    }
    Ok(1.0 / denom)
}

/// Unchecked FENE factor for assembly hot loops. Quadrature points of the
/// masked mesh lie strictly inside the unit ball, so the denominator is
/// positive there for any `eps >= 0`.
#[inline]
pub fn fene_factor_unchecked(q_norm_sq: f64, eps: f64) -> f64 {
    1.0 / (eps + 1.0 - q_norm_sq)
}

/// Continuity gaps `|g(b^-) - g(b^+)|` at the three breakpoints, computed
/// from the closed-form branch expressions on either side.
pub fn branch_continuity_gaps(eps: f64) -> [f64; 3] {
    let b0 = 1.0 / eps.ln();
    // left of b0: 1/z; right: ln(eps)
    let g0 = (1.0 / b0 - eps.ln()).abs();
    // left of eps: ln(eps); right: ln(z)
    let g1 = (eps.ln() - eps.ln()).abs();
    // left of 1/eps: ln(z); right: ln(1/eps)
    let g2 = ((1.0 / eps).ln() - (1.0f64 / eps).ln()).abs();
    [g0, g1, g2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_pinned_values() {
        assert_eq!(entropy(0.0).unwrap(), 0.0);
        assert_eq!(entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            entropy(std::f64::consts::E).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
        assert!(entropy(-1.0).is_err());
    }

    #[test]
    fn entropy_continuous_at_zero() {
        // y ln y -> 0 as y -> 0+
        for k in 1..=12 {
            let y = 10f64.powi(-k);
            assert!(entropy(y).unwrap().abs() < 10.0 * y * (k as f64) * std::f64::consts::LN_10);
        }
        assert!(entropy(1e-300).unwrap().abs() < 1e-296);
    }

    #[test]
    fn g_eps_pinned_values() {
        // first branch: 20 >= 1/0.1
        assert_abs_diff_eq!(g_eps(20.0, 0.1), 10f64.ln(), epsilon = 1e-15);
        // middle branch at 1
        assert_eq!(g_eps(1.0, 0.1), 0.0);
        // fourth branch: 1/ln(0.1) ~ -0.434 > -2
        assert_abs_diff_eq!(g_eps(-2.0, 0.1), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn g_eps_branch_continuity() {
        for eps in [1e-1, 1e-2, 1e-3] {
            for gap in branch_continuity_gaps(eps) {
                assert!(gap <= 1e-12, "eps={eps}: gap {gap}");
            }
            // straddle the breakpoints with nearby evaluations too
            for b in RegularizationParams::new(eps).unwrap().breakpoints() {
                let lo = g_eps(b * (1.0 - 1e-13) - 1e-300, eps);
                let hi = g_eps(b * (1.0 + 1e-13) + 1e-300, eps);
                assert!((lo - hi).abs() <= 1e-12, "eps={eps} b={b}: {lo} vs {hi}");
            }
        }
    }

    /// Log-spaced scan of both signs, 1e4 points: |g_eps| <= |ln eps|.
    #[test]
    fn g_eps_bounded_by_abs_ln_eps() {
        for eps in [1e-1f64, 1e-2, 1e-3] {
            let bound = eps.ln().abs();
            for i in 0..10_000 {
                let mag = 10f64.powf(-8.0 + 16.0 * (i as f64) / 9_999.0);
                for z in [mag, -mag] {
                    let g = g_eps(z, eps);
                    assert!(
                        g.abs() <= bound + 1e-12,
                        "eps={eps} z={z}: |g|={} > {bound}",
                        g.abs()
                    );
                }
            }
        }
    }

    #[test]
    fn g_eps_monotonicity_by_branch() {
        let eps = 0.05;
        let bp = RegularizationParams::new(eps).unwrap().breakpoints();
        // nondecreasing on [eps, 1/eps]
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let z = bp[1] + (bp[2] - bp[1]) * i as f64 / 1000.0;
            let g = g_eps(z, eps);
            assert!(g >= prev - 1e-15);
            prev = g;
        }
        // constant on [1/ln eps, eps] and on [1/eps, 10/eps]
        for i in 0..=200 {
            let z = bp[0] + (bp[1] - bp[0]) * i as f64 / 200.0;
            assert_eq!(g_eps(z, eps), eps.ln());
            let z2 = bp[2] * (1.0 + 9.0 * i as f64 / 200.0);
            assert_eq!(g_eps(z2, eps), (1.0 / eps).ln());
        }
        // nonincreasing on (-inf, 1/ln eps]
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let z = -1e6 + (bp[0] + 1e6) * i as f64 / 1000.0;
            let g = g_eps(z, eps);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn g_eps_slope_matches_one_over_z_inside_log_branch() {
        let eps = 1e-2;
        let h = 1e-6;
        for i in 0..500 {
            // sample strictly inside (eps, 1/eps), clear of the breakpoints
            let t = i as f64 / 499.0;
            let z = (eps * 1.01 + 2.0 * h) * ((1.0 / eps * 0.99) / (eps * 1.01f64)).powf(t);
            let slope = (g_eps(z + h, eps) - g_eps(z - h, eps)) / (2.0 * h);
            assert!(
                (slope - 1.0 / z).abs() <= 1e-6 * (1.0 / z).max(1.0),
                "z={z}: slope {slope} vs {}",
                1.0 / z
            );
        }
    }

    #[test]
    fn e_eps_pinned_values() {
        assert_eq!(e_eps(0.0, 0.1), 0.0);
        assert_abs_diff_eq!(e_eps(20.0, 0.1), 20.0 * 10f64.ln(), epsilon = 1e-12);
    }

    /// Scan oracle for the growth bound: |e_eps(z)| <= c(1) + z^2 with
    /// c(1) = 1 over z in [-5, 5].
    #[test]
    fn e_eps_growth_bound_delta_one() {
        let c1 = c_delta(1.0);
        assert_abs_diff_eq!(c1, 1.0, epsilon = 1e-9);
        for eps in [1e-1, 1e-2, 1e-3] {
            for i in 0..=10_000 {
                let z = -5.0 + 10.0 * i as f64 / 10_000.0;
                assert!(
                    e_eps(z, eps).abs() <= c1 + z * z + 1e-12,
                    "eps={eps} z={z}"
                );
            }
        }
    }

    /// Same bound for a smaller delta, against the tabulated constant.
    #[test]
    fn e_eps_growth_bound_small_delta() {
        let delta = 0.25;
        let c = c_delta(delta);
        for eps in [1e-1, 1e-3] {
            for i in 0..=20_000 {
                let z = -50.0 + 100.0 * i as f64 / 20_000.0;
                assert!(
                    e_eps(z, eps).abs() <= c + z.abs().powf(1.0 + delta) + 1e-10,
                    "eps={eps} z={z} c={c}"
                );
            }
        }
    }

    #[test]
    fn e_eps_converges_pointwise_to_entropy() {
        for z in [0.3f64, 0.9, 1.0, 2.5, 7.0] {
            let mut eps = 0.5;
            let mut matched = false;
            while eps > 1e-12 {
                if eps < z.min(1.0 / z) {
                    // exact agreement once z falls in the logarithmic branch
                    assert_eq!(e_eps(z, eps), entropy(z).unwrap(), "z={z} eps={eps}");
                    matched = true;
                }
                eps *= 0.5;
            }
            assert!(matched);
        }
    }

    #[test]
    fn fene_factor_pinned_values() {
        assert_eq!(fene_factor(&[0.0], 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(fene_factor(&[1.0], 0.1).unwrap(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fene_factor(&[0.6, 0.8], 0.1).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert!(fene_factor(&[1.0], 0.0).is_err());
        assert!(fene_factor(&[0.0], -0.5).is_err());
    }

    /// Scan oracle: monotone increasing in |q| along a ray, bounded by 1/eps.
    #[test]
    fn fene_factor_monotone_along_ray() {
        let eps = 0.1;
        let mut prev = 0.0;
        for i in 0..100 {
            let r = i as f64 / 99.0;
            let v = fene_factor(&[r * 0.6, r * 0.8], eps).unwrap();
            assert!(v >= prev);
            assert!(v <= 1.0 / eps + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn regularization_params_rejects_out_of_range() {
        assert!(RegularizationParams::new(0.0).is_err());
        assert!(RegularizationParams::new(1.0).is_err());
        assert!(RegularizationParams::new(1.5).is_err());
        assert!(RegularizationParams::new(0.5).is_ok());
    }

    proptest! {
        /// g_eps is 1-Lipschitz-bounded by |ln eps| and continuous in z:
        /// nearby arguments give nearby values everywhere on the line.
        #[test]
        fn g_eps_bounded_everywhere(z in -1e6f64..1e6, k in 1u32..10) {
            let eps = 0.5f64.powi(k as i32);
            let g = g_eps(z, eps);
            prop_assert!(g.abs() <= eps.ln().abs() + 1e-12);
        }

        #[test]
        fn e_eps_sign_matches_entropy_for_large_z(z in 2.0f64..1e4) {
            // for z > 1, both z ln z and its truncation are positive
            let eps = 0.05;
            prop_assert!(e_eps(z, eps) > 0.0);
        }
    }
}
