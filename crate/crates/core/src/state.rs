//! Nodal density state and initial-condition families.

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Coefficient vector of the discrete density at one time instant, over
/// interior DOFs (the basis vanishes on the boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub t: f64,
    pub coeffs: Vec<f64>,
}

impl DensityState {
    pub fn new(t: f64, coeffs: Vec<f64>) -> Self {
        Self { t, coeffs }
    }

    pub fn zeros(t: f64, n: usize) -> Self {
        Self {
            t,
            coeffs: vec![0.0; n],
        }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.coeffs.len() != mesh.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_dofs(),
                got: self.coeffs.len(),
            });
        }
        if !self.coeffs.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "coeffs",
                reason: "non-finite nodal value".into(),
            });
        }
        Ok(())
    }

    pub fn min_value(&self) -> f64 {
        self.coeffs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Initial-condition families.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialFamily {
    /// FENE equilibrium profile in q, uniform in x.
    FeneEquilibriumUniform { theta0: f64 },
    /// FENE equilibrium in q modulated by `prod_i sin(pi x_i)` in x.
    FeneEquilibriumBump { theta0: f64 },
    /// Caller-provided nodal values (must be nonnegative).
    CustomNodal { values: Vec<f64> },
}

/// Unnormalized FENE equilibrium profile `(1 - |q|^2)^(Q0^2 / theta0)`.
pub fn fene_equilibrium_profile(q: &[f64], q0: f64, theta0: f64) -> f64 {
    let norm_sq: f64 = q.iter().map(|v| v * v).sum();
    let base = (1.0 - norm_sq).max(0.0);
    base.powf(q0 * q0 / theta0)
}

/// Build a nonnegative initial state normalized so the discrete integral
/// over the domain equals one.
pub fn initial_condition(mesh: &Mesh, q0: f64, family: &InitialFamily) -> Result<DensityState> {
    let n = mesh.num_dofs();
    let nx = mesh.nx_axes();
    let mut coeffs = vec![0.0; n];
    match family {
        InitialFamily::FeneEquilibriumUniform { theta0 } => {
            if !(*theta0 > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "theta0",
                    reason: format!("must be positive, got {theta0}"),
                });
            }
            for (dof, c) in coeffs.iter_mut().enumerate() {
                let xq = mesh.dof_coords(dof);
                *c = fene_equilibrium_profile(&xq[nx..], q0, *theta0);
            }
        }
        InitialFamily::FeneEquilibriumBump { theta0 } => {
            if !(*theta0 > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "theta0",
                    reason: format!("must be positive, got {theta0}"),
                });
            }
            for (dof, c) in coeffs.iter_mut().enumerate() {
                let xq = mesh.dof_coords(dof);
                let mut bump = 1.0;
                for xi in &xq[..nx] {
                    bump *= (std::f64::consts::PI * xi).sin();
                }
                *c = bump * fene_equilibrium_profile(&xq[nx..], q0, *theta0);
            }
        }
        InitialFamily::CustomNodal { values } => {
            if values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: values.len(),
                });
            }
            if let Some(bad) = values.iter().find(|v| **v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "initial",
                    reason: format!("nodal values must be nonnegative and finite, found {bad}"),
                });
            }
            coeffs.copy_from_slice(values);
        }
    }
    // normalize the discrete integral to one
    let w = mesh.lumped_weights();
    let mass: f64 = w.iter().zip(&coeffs).map(|(wi, ci)| wi * ci).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter {
            name: "initial",
            reason: "initial condition has zero discrete mass".into(),
        });
    }
    for c in &mut coeffs {
        *c /= mass;
    }
    Ok(DensityState::new(0.0, coeffs))
}
