//! Prescribed data fields: temperature (with exact first and second
//! derivatives) and flow data (velocity and configuration-space velocity
//! gradient). Closed-form families only, so the weak form sees exact
//! coefficients.

use crate::error::{Error, Result};

/// Temperature field family over the unit box.
#[derive(Debug, Clone, PartialEq)]
pub enum TemperatureField {
    Constant {
        theta0: f64,
    },
    /// theta(x) = base + slope . x
    Affine {
        base: f64,
        slope: Vec<f64>,
    },
    /// theta(x, t) = base + amp * prod_i sin(pi k_i x_i) * cos(omega t)
    Sinusoidal {
        base: f64,
        amp: f64,
        wave: Vec<usize>,
        omega: f64,
    },
}

impl TemperatureField {
    pub fn constant(theta0: f64) -> Result<Self> {
        let f = TemperatureField::Constant { theta0 };
        f.validate(1)?;
        Ok(f)
    }

    pub fn affine(base: f64, slope: Vec<f64>) -> Result<Self> {
        let dx = slope.len();
        let f = TemperatureField::Affine { base, slope };
        f.validate(dx)?;
        Ok(f)
    }

    pub fn sinusoidal(base: f64, amp: f64, wave: Vec<usize>, omega: f64) -> Result<Self> {
        let dx = wave.len();
        let f = TemperatureField::Sinusoidal {
            base,
            amp,
            wave,
            omega,
        };
        f.validate(dx)?;
        Ok(f)
    }

    pub fn validate(&self, dx: usize) -> Result<()> {
        let tmin = self.theta_min();
        if !(tmin > 0.0) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: format!("theta_min must be positive, got {tmin}"),
            });
        }
        let dim = match self {
            TemperatureField::Constant { .. } => dx,
            TemperatureField::Affine { slope, .. } => slope.len(),
            TemperatureField::Sinusoidal { wave, .. } => wave.len(),
        };
        if dim != dx {
            return Err(Error::DimensionMismatch {
                expected: dx,
                got: dim,
            });
        }
        Ok(())
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, TemperatureField::Sinusoidal { omega, .. } if *omega != 0.0)
    }

    /// Exactly zero gradient everywhere (lets assembly skip entropy terms).
    pub fn is_isothermal(&self) -> bool {
        match self {
            TemperatureField::Constant { .. } => true,
            TemperatureField::Affine { slope, .. } => slope.iter().all(|s| *s == 0.0),
            TemperatureField::Sinusoidal { amp, .. } => *amp == 0.0,
        }
    }

    pub fn theta(&self, x: &[f64], t: f64) -> f64 {
        match self {
            TemperatureField::Constant { theta0 } => *theta0,
            TemperatureField::Affine { base, slope } => {
                base + slope.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            }
            TemperatureField::Sinusoidal {
                base,
                amp,
                wave,
                omega,
            } => {
                let mut prod = 1.0;
                for (k, xi) in wave.iter().zip(x) {
                    prod *= (std::f64::consts::PI * *k as f64 * xi).sin();
                }
                base + amp * prod * (omega * t).cos()
            }
        }
    }

    pub fn grad_theta(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self {
            TemperatureField::Constant { .. } => vec![0.0; x.len()],
            TemperatureField::Affine { slope, .. } => slope.clone(),
            TemperatureField::Sinusoidal {
                amp, wave, omega, ..
            } => {
                let pi = std::f64::consts::PI;
                let ct = (omega * t).cos();
                (0..wave.len())
                    .map(|m| {
                        let mut prod = amp * ct;
                        for (i, (k, xi)) in wave.iter().zip(x).enumerate() {
                            let a = pi * *k as f64;
                            prod *= if i == m { a * (a * xi).cos() } else { (a * xi).sin() };
                        }
                        prod
                    })
                    .collect()
            }
        }
    }

    /// Symmetric Hessian, row-major dx*dx.
    pub fn hessian_theta(&self, x: &[f64], t: f64) -> Vec<f64> {
        let dx = x.len();
        match self {
            TemperatureField::Constant { .. } | TemperatureField::Affine { .. } => {
                vec![0.0; dx * dx]
            }
            TemperatureField::Sinusoidal {
                amp, wave, omega, ..
            } => {
                let pi = std::f64::consts::PI;
                let ct = (omega * t).cos();
                let mut h = vec![0.0; dx * dx];
                for m in 0..dx {
                    for n in 0..dx {
                        let mut prod = amp * ct;
                        for (i, (k, xi)) in wave.iter().zip(x).enumerate() {
                            let a = pi * *k as f64;
                            let arg = a * xi;
                            let factor = if i == m && i == n {
                                -a * a * arg.sin()
                            } else if i == m || i == n {
                                a * arg.cos()
                            } else {
                                arg.sin()
                            };
                            prod *= factor;
                        }
                        h[m * dx + n] = prod;
                    }
                }
                h
            }
        }
    }

    /// Certified lower bound on theta over the box and all times
    /// (exact for constant and affine families).
    pub fn theta_min(&self) -> f64 {
        match self {
            TemperatureField::Constant { theta0 } => *theta0,
            TemperatureField::Affine { base, slope } => {
                base + slope.iter().map(|s| s.min(0.0)).sum::<f64>()
            }
            TemperatureField::Sinusoidal { base, amp, .. } => base - amp.abs(),
        }
    }

    /// Upper bound on sup_x |grad theta(x, t)| over the box and all times
    /// (exact for constant and affine families).
    pub fn grad_sup(&self) -> f64 {
        match self {
            TemperatureField::Constant { .. } => 0.0,
            TemperatureField::Affine { slope, .. } => {
                slope.iter().map(|s| s * s).sum::<f64>().sqrt()
            }
            TemperatureField::Sinusoidal { amp, wave, .. } => {
                let pi = std::f64::consts::PI;
                let sumsq: f64 = wave.iter().map(|k| (pi * *k as f64).powi(2)).sum();
                amp.abs() * sumsq.sqrt()
            }
        }
    }

    /// Upper bound on the spectral norm of the Hessian over the box
    /// (Frobenius bound for the sinusoidal family).
    pub fn hessian_sup(&self) -> f64 {
        match self {
            TemperatureField::Constant { .. } | TemperatureField::Affine { .. } => 0.0,
            TemperatureField::Sinusoidal { amp, wave, .. } => {
                let pi = std::f64::consts::PI;
                let fro: f64 = wave
                    .iter()
                    .flat_map(|km| wave.iter().map(move |kn| (pi * pi * (*km * *kn) as f64).powi(2)))
                    .sum();
                amp.abs() * fro.sqrt()
            }
        }
    }
}

/// Flow data family: velocity over the unit box and the configuration
/// drift matrix kappa (dq x dq). The kappa-only families prescribe the
/// drift with zero transporting velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowField {
    Quiescent,
    /// Taylor-Green cell on the unit square (dx = 2 only):
    /// v = A (sin(pi x1) cos(pi x2), -cos(pi x1) sin(pi x2)); kappa = grad v
    /// mapped onto the leading shared components of the q-space.
    Cellular { amplitude: f64 },
    /// kappa_{0,1} = rate for dq = 2; kappa_{0,0} = rate for dq = 1.
    ShearKappa { rate: f64 },
    /// kappa = rate * diag(1, -1) for dq = 2; rate * [1] for dq = 1.
    ExtensionalKappa { rate: f64 },
}

impl FlowField {
    pub fn validate(&self, dx: usize) -> Result<()> {
        if let FlowField::Cellular { .. } = self {
            if dx != 2 {
                return Err(Error::InvalidParameter {
                    name: "flow",
                    reason: format!("cellular flow requires dx = 2, got dx = {dx}"),
                });
            }
        }
        Ok(())
    }

    pub fn is_time_dependent(&self) -> bool {
        false
    }

    pub fn velocity(&self, x: &[f64], _t: f64) -> Vec<f64> {
        match self {
            FlowField::Cellular { amplitude } => {
                let pi = std::f64::consts::PI;
                vec![
                    amplitude * (pi * x[0]).sin() * (pi * x[1]).cos(),
                    -amplitude * (pi * x[0]).cos() * (pi * x[1]).sin(),
                ]
            }
            _ => vec![0.0; x.len()],
        }
    }

    /// kappa(x, t), row-major dq x dq.
    pub fn kappa(&self, x: &[f64], _t: f64, dq: usize) -> Vec<f64> {
        let mut k = vec![0.0; dq * dq];
        match self {
            FlowField::Quiescent => {}
            FlowField::Cellular { amplitude } => {
                let pi = std::f64::consts::PI;
                // grad v of the Taylor-Green cell, restricted to the leading
                // min(2, dq) components
                let g00 = amplitude * pi * (pi * x[0]).cos() * (pi * x[1]).cos();
                let g01 = -amplitude * pi * (pi * x[0]).sin() * (pi * x[1]).sin();
                let g10 = amplitude * pi * (pi * x[0]).sin() * (pi * x[1]).sin();
                let g11 = -amplitude * pi * (pi * x[0]).cos() * (pi * x[1]).cos();
                let g = [g00, g01, g10, g11];
                for m in 0..dq.min(2) {
                    for n in 0..dq.min(2) {
                        k[m * dq + n] = g[m * 2 + n];
                    }
                }
            }
            FlowField::ShearKappa { rate } => {
                if dq >= 2 {
                    k[1] = *rate;
                } else {
                    k[0] = *rate;
                }
            }
            FlowField::ExtensionalKappa { rate } => {
                k[0] = *rate;
                if dq >= 2 {
                    k[dq + 1] = -*rate;
                }
            }
        }
        k
    }

    /// True when kappa equals grad v for this family. Both are given
    /// data, so a mismatch is reported, not rejected.
    pub fn kappa_consistent_with_velocity(&self, dq: usize) -> bool {
        match self {
            FlowField::Quiescent => true,
            FlowField::Cellular { .. } => dq == 2,
            FlowField::ShearKappa { rate } | FlowField::ExtensionalKappa { rate } => *rate == 0.0,
        }
    }

    /// Largest |kappa| entry over the box (constant-in-x families; the
    /// cellular gradient is bounded by A pi).
    pub fn kappa_sup(&self) -> f64 {
        match self {
            FlowField::Quiescent => 0.0,
            FlowField::Cellular { amplitude } => amplitude.abs() * std::f64::consts::PI,
            FlowField::ShearKappa { rate } | FlowField::ExtensionalKappa { rate } => rate.abs(),
        }
    }
}
