//! Physical and numerical scalar parameters.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    /// Deborah number, > 0.
    pub de: f64,
    /// Maximum dimensionless spring stretch, > 0.
    pub q0: f64,
    /// Regularization parameter, in (0, 1).
    pub eps: f64,
    /// Time step.
    pub dt: f64,
    /// Final time.
    pub t_end: f64,
    /// Fixed-point tolerance (L2 norm of successive iterates).
    pub tol_fp: f64,
    /// Linear-solver relative residual tolerance (mass-weighted norm).
    pub tol_lin: f64,
    /// Fixed-point iteration cap.
    pub max_picard: usize,
    /// Assemble the spatial diffusion with coefficient 1/(2 De) instead of
    /// 1/De (the strong-form alternative; the variational statements carry
    /// the unhalved coefficient).
    pub strong_form_halved_xdiff: bool,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            de: 1.0,
            q0: 1.0,
            eps: 0.1,
            dt: 0.01,
            t_end: 1.0,
            tol_fp: 1e-9,
            tol_lin: 1e-12,
            max_picard: 50,
            strong_form_halved_xdiff: false,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
            Ok(())
        }
        positive("de", self.de)?;
        positive("q0", self.q0)?;
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("required 0 < eps < 1, got {}", self.eps),
            });
        }
        positive("dt", self.dt)?;
        if self.t_end + 1e-14 < self.dt && self.t_end != 0.0 {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("must be 0 or >= dt, got {} (dt = {})", self.t_end, self.dt),
            });
        }
        positive("tol_fp", self.tol_fp)?;
        positive("tol_lin", self.tol_lin)?;
        if self.max_picard == 0 {
            return Err(Error::InvalidParameter {
                name: "max_picard",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Coefficient of the x-diffusion term.
    pub fn xdiff_coeff(&self) -> f64 {
        if self.strong_form_halved_xdiff {
            0.5 / self.de
        } else {
            1.0 / self.de
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Params::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut p = Params::default();
        p.eps = 1.5;
        assert!(p.validate().is_err());
        p = Params::default();
        p.de = 0.0;
        assert!(p.validate().is_err());
        p = Params::default();
        p.t_end = 0.001;
        p.dt = 0.01;
        assert!(p.validate().is_err());
        p = Params::default();
        p.t_end = 0.0;
        assert!(p.validate().is_ok());
    }
}
