//! Manufactured-solution convergence studies.
//!
//! The manufactured density is `f*(x,q,t) = (1 - |q|^2)^2 prod_i
//! sin(pi x_i) tau(t)`: positive inside the domain, zero on its boundary.
//! The forcing is the strong operator applied to `f*`, with every
//! divergence evaluated by fourth-order central differences of pointwise
//! flux closures at the quadrature points, so the load is independent of
//! the Galerkin assembly path it verifies.

use crate::error::{Error, Result};
use crate::fields::{FlowField, TemperatureField};
use crate::mesh::Mesh;
use crate::params::Params;
use crate::regularization::e_eps;
use crate::solver::Simulation;
use crate::state::DensityState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    /// tau(t) = 1 + t/2: implicit Euler integrates it with negligible
    /// temporal error, isolating the spatial discretization.
    Linear,
    /// tau(t) = exp(-t/2): genuinely nonlinear in t for the dt study.
    ExpDecay,
}

impl TimeProfile {
    fn tau(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Linear => 1.0 + 0.5 * t,
            TimeProfile::ExpDecay => (-0.5 * t).exp(),
        }
    }
}

/// Closed-form manufactured solution and its first derivatives.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub dx: usize,
    pub dq: usize,
    pub profile: TimeProfile,
}

impl Manufactured {
    pub fn value(&self, x: &[f64], q: &[f64], t: f64) -> f64 {
        let qn: f64 = q.iter().map(|v| v * v).sum();
        let b = 1.0 - qn;
        let mut s = 1.0;
        for xi in x {
            s *= (std::f64::consts::PI * xi).sin();
        }
        b * b * s * self.profile.tau(t)
    }

    pub fn dvalue_dx(&self, x: &[f64], q: &[f64], t: f64, k: usize) -> f64 {
        let pi = std::f64::consts::PI;
        let qn: f64 = q.iter().map(|v| v * v).sum();
        let b = 1.0 - qn;
        let mut s = 1.0;
        for (i, xi) in x.iter().enumerate() {
            s *= if i == k { pi * (pi * xi).cos() } else { (pi * xi).sin() };
        }
        b * b * s * self.profile.tau(t)
    }

    pub fn dvalue_dq(&self, x: &[f64], q: &[f64], t: f64, m: usize) -> f64 {
        let qn: f64 = q.iter().map(|v| v * v).sum();
        let b = 1.0 - qn;
        let mut s = 1.0;
        for xi in x {
            s *= (std::f64::consts::PI * xi).sin();
        }
        -4.0 * q[m] * b * s * self.profile.tau(t)
    }

    /// Positivity required where the entropy coefficient is active:
    /// tau must stay positive over the run.
    fn validate(&self, t_end: f64) -> Result<()> {
        for i in 0..=200 {
            let t = t_end * i as f64 / 200.0;
            if self.profile.tau(t) <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "manufactured",
                    reason: format!("time profile nonpositive at t = {t}"),
                });
            }
        }
        Ok(())
    }
}

/// Fourth-order central difference of a scalar closure.
fn d4(f: impl Fn(f64) -> f64, x0: f64, h: f64) -> f64 {
    (-f(x0 + 2.0 * h) + 8.0 * f(x0 + h) - 8.0 * f(x0 - h) + f(x0 - 2.0 * h)) / (12.0 * h)
}

const FD_H: f64 = 1e-2;
const FD_HT: f64 = 1e-3;

/// Pointwise forcing `F = d/dt f* + v . grad_x f* - RHS(f*)`, with the
/// divergence terms of the regularized strong operator taken by d4 of
/// flux closures along each axis.
pub fn forcing_at(
    sol: &Manufactured,
    params: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
    x: &[f64],
    q: &[f64],
    t: f64,
) -> f64 {
    let dx = sol.dx;
    let dq = sol.dq;
    let nshared = dx.min(dq);
    let de = params.de;
    let cx = params.xdiff_coeff();
    let cq = 1.0 / (params.q0 * params.q0 * de);
    let eps = params.eps;

    // flux through the x_k face as a function of the x_k coordinate
    let flux_x = |k: usize, xk: f64| -> f64 {
        let mut xv = x.to_vec();
        xv[k] = xk;
        let th = theta.theta(&xv, t);
        let g = theta.grad_theta(&xv, t);
        let mut s = 0.0;
        for m in 0..nshared {
            s += q[m] * g[m];
        }
        let mut val = cx * th * sol.dvalue_dx(&xv, q, t, k);
        if k < nshared {
            val += s / de * sol.dvalue_dq(&xv, q, t, k);
        }
        val += g[k] / de * e_eps(sol.value(&xv, q, t), eps);
        val
    };

    // flux through the q_m face as a function of the q_m coordinate
    let flux_q = |m: usize, qm: f64| -> f64 {
        let mut qv = q.to_vec();
        qv[m] = qm;
        let th = theta.theta(x, t);
        let g = theta.grad_theta(x, t);
        let hess = theta.hessian_theta(x, t);
        let kap = flow.kappa(x, t, dq);
        let mut s = 0.0;
        for mm in 0..nshared {
            s += qv[mm] * g[mm];
        }
        let f = sol.value(x, &qv, t);
        let mut val = cq * th * sol.dvalue_dq(x, &qv, t, m);
        if m < nshared {
            val += s / de * sol.dvalue_dx(x, &qv, t, m);
        }
        // (hess theta . q)_m over shared columns
        if m < dx {
            let mut hq = 0.0;
            for kk in 0..nshared {
                hq += hess[m * dx + kk] * qv[kk];
            }
            val += hq / de * e_eps(f, eps);
        }
        let mut kq = 0.0;
        for nn in 0..dq {
            kq += kap[m * dq + nn] * qv[nn];
        }
        val -= kq * f;
        let qn: f64 = qv.iter().map(|v| v * v).sum();
        val += 2.0 / de * qv[m] * f / (eps + 1.0 - qn);
        val
    };

    let dt_term = d4(|tt| sol.value(x, q, tt), t, FD_HT);
    let v = flow.velocity(x, t);
    let mut advect = 0.0;
    for (k, vk) in v.iter().enumerate() {
        advect += vk * sol.dvalue_dx(x, q, t, k);
    }
    let mut divergence = 0.0;
    for k in 0..dx {
        divergence += d4(|xx| flux_x(k, xx), x[k], FD_H);
    }
    for m in 0..dq {
        divergence += d4(|qq| flux_q(m, qq), q[m], FD_H);
    }
    dt_term + advect - divergence
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Cells per axis at each level.
    pub levels: Vec<usize>,
    pub errors: Vec<f64>,
    /// log2(e_h / e_{h/2}) between consecutive levels.
    pub orders: Vec<f64>,
}

fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}

/// Quadrature L2 distance between a discrete state and the manufactured
/// solution at its time.
fn l2_error_vs_exact(mesh: &Mesh, sol: &Manufactured, f: &DensityState) -> f64 {
    let d = mesh.dim();
    let nx = mesh.nx_axes();
    let x_ref = mesh.x_reference();
    let mut acc = 0.0;
    let mut coords = vec![0.0; d];
    for cell in 0..mesh.num_active_cells() {
        let origin = mesh.cell_origin(cell);
        for qp in mesh.quad_points() {
            for k in 0..d {
                coords[k] = origin[k] + qp.offset[k];
            }
            let x = if nx > 0 { &coords[..nx] } else { &x_ref[..] };
            let q = &coords[nx..];
            let fh = mesh.interpolate_at(&f.coeffs, cell, qp);
            let fe = sol.value(x, q, f.t);
            acc += qp.weight * (fh - fe) * (fh - fe);
        }
    }
    acc.sqrt()
}

fn nodal_interpolant(mesh: &Mesh, sol: &Manufactured, t: f64) -> DensityState {
    let nx = mesh.nx_axes();
    let x_ref = mesh.x_reference();
    let coeffs = (0..mesh.num_dofs())
        .map(|dof| {
            let c = mesh.dof_coords(dof);
            let x = if nx > 0 { &c[..nx] } else { &x_ref[..] };
            sol.value(x, &c[nx..], t)
        })
        .collect();
    DensityState::new(t, coeffs)
}

fn solve_manufactured(
    mesh: &Mesh,
    params: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
    sol: &Manufactured,
) -> Result<DensityState> {
    let mut sim = Simulation::new(mesh, *params, theta.clone(), flow.clone())?;
    let s = sol.clone();
    let p = *params;
    let th = theta.clone();
    let fl = flow.clone();
    sim.set_forcing(Box::new(move |x, q, t| forcing_at(&s, &p, &th, &fl, x, q, t)));
    let f0 = nodal_interpolant(mesh, sol, 0.0);
    let (traj, err) = sim.run(f0, 0);
    if let Some(e) = err {
        return Err(e);
    }
    Ok(traj.states.last().expect("run produced states").clone())
}

/// Spatial refinement study at fixed (small-temporal-error) stepping.
pub fn spatial_study(
    dx: usize,
    dq: usize,
    levels: &[usize],
    params: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
) -> Result<ConvergenceReport> {
    let sol = Manufactured {
        dx,
        dq,
        profile: TimeProfile::Linear,
    };
    sol.validate(params.t_end)?;
    let mut errors = Vec::new();
    for &n in levels {
        let mesh = Mesh::build(dx, dq, n, n, 3)?;
        let f = solve_manufactured(&mesh, params, theta, flow, &sol)?;
        errors.push(l2_error_vs_exact(&mesh, &sol, &f));
    }
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        orders: observed_orders(&errors),
        errors,
    })
}

#[derive(Debug, Clone)]
pub struct TemporalReport {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

/// Temporal refinement study on a fixed mesh: errors are measured against
/// a reference solution at a much smaller step, removing the spatial floor.
pub fn temporal_study(
    dx: usize,
    dq: usize,
    n: usize,
    dt0: f64,
    halvings: usize,
    params: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
) -> Result<TemporalReport> {
    let sol = Manufactured {
        dx,
        dq,
        profile: TimeProfile::ExpDecay,
    };
    sol.validate(params.t_end)?;
    let mesh = Mesh::build(dx, dq, n, n, 3)?;
    let mut dts = Vec::new();
    let mut states = Vec::new();
    for i in 0..=halvings {
        let dt = dt0 / 2f64.powi(i as i32);
        let p = Params { dt, ..*params };
        let f = solve_manufactured(&mesh, &p, theta, flow, &sol)?;
        dts.push(dt);
        states.push(f);
    }
    // reference at dt0 / 2^(halvings + 3)
    let dt_ref = dt0 / 2f64.powi(halvings as i32 + 3);
    let p_ref = Params {
        dt: dt_ref,
        ..*params
    };
    let reference = solve_manufactured(&mesh, &p_ref, theta, flow, &sol)?;
    let ctx = crate::diagnostics::NormContext::new(&mesh);
    let errors: Vec<f64> = states
        .iter()
        .map(|s| {
            let diff: Vec<f64> = s
                .coeffs
                .iter()
                .zip(&reference.coeffs)
                .map(|(a, b)| a - b)
                .collect();
            ctx.l2(&diff)
        })
        .collect();
    Ok(TemporalReport {
        orders: observed_orders(&errors),
        dts,
        errors,
    })
}
