//! Galerkin assembly of the mass matrix and of every term group of the
//! bilinear form on the tensor-product mesh.
//!
//! Matrix convention: `A[i][j] = a(phi_j, phi_i)` (trial j, test i), so
//! `A f` applies the form to the interpolant of `f` against every test
//! function. Cross-dimensional couplings (`q . grad theta`, mixed
//! gradient dots, `hessian . q`) act on the shared leading components
//! when the spatial and configurational dimensions differ, and reduce
//! to the usual expressions when they match.

use crate::error::{Error, Result};
use crate::fields::{FlowField, TemperatureField};
use crate::linalg::{Coo, Csr};
use crate::mesh::Mesh;
use crate::params::Params;
use crate::regularization::{fene_factor_unchecked, g_eps};
use crate::state::DensityState;

const INVALID: u32 = u32::MAX;

/// Time-step-static term groups of the bilinear form (everything except
/// the entropy pair, whose coefficient depends on the frozen iterate).
#[derive(Debug, Clone)]
pub struct TermMatrices {
    /// (v . grad_x f, psi)
    pub transport: Csr,
    /// theta grad_x f . grad_x psi, scaled by the x-diffusion coefficient
    pub diff_xx: Csr,
    /// (q . grad theta)(grad_q f . grad_x psi) / De
    pub cross_qx: Csr,
    /// (q . grad theta)(grad_x f . grad_q psi) / De
    pub cross_xq: Csr,
    /// theta grad_q f . grad_q psi / (Q0^2 De)
    pub diff_qq: Csr,
    /// -(kappa . q) f . grad_q psi
    pub drift_q: Csr,
    /// (2/De) q f / (eps + 1 - |q|^2) . grad_q psi
    pub fene: Csr,
}

impl TermMatrices {
    /// Symmetric diffusion block `b`.
    pub fn b_form(&self) -> Csr {
        Csr::linear_combination(&[
            (1.0, &self.diff_xx),
            (1.0, &self.cross_qx),
            (1.0, &self.cross_xq),
            (1.0, &self.diff_qq),
        ])
        .expect("term matrices share the DOF dimension")
    }

    pub fn n(&self) -> usize {
        self.diff_qq.n_rows()
    }
}

/// The two entropy term matrices, assembled at a frozen iterate.
#[derive(Debug, Clone)]
pub struct EntropyMatrices {
    /// (grad theta) f g_eps(r) . grad_x psi / De
    pub entropy_x: Csr,
    /// (hess theta . q) f g_eps(r) . grad_q psi / De
    pub entropy_q: Csr,
}

/// Everything the time stepper needs at one (t, frozen iterate) pair.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: Csr,
    pub terms: TermMatrices,
    pub entropy: EntropyMatrices,
}

impl OperatorSet {
    pub fn a_eps(&self) -> Csr {
        compose_a_eps(&self.terms, &self.entropy).expect("consistent dimensions")
    }

    /// All-zero operator of the given size; test hook for the identity
    /// time step.
    pub fn zero(n: usize, mass: Csr) -> OperatorSet {
        let z = || Csr::zeros(n, n);
        OperatorSet {
            mass,
            terms: TermMatrices {
                transport: z(),
                diff_xx: z(),
                cross_qx: z(),
                cross_xq: z(),
                diff_qq: z(),
                drift_q: z(),
                fene: z(),
            },
            entropy: EntropyMatrices {
                entropy_x: z(),
                entropy_q: z(),
            },
        }
    }
}

/// Sum of all nine term matrices.
pub fn compose_a_eps(terms: &TermMatrices, entropy: &EntropyMatrices) -> Result<Csr> {
    Csr::linear_combination(&[
        (1.0, &terms.transport),
        (1.0, &terms.diff_xx),
        (1.0, &terms.cross_qx),
        (1.0, &terms.cross_xq),
        (1.0, &terms.diff_qq),
        (1.0, &terms.drift_q),
        (1.0, &terms.fene),
        (1.0, &entropy.entropy_x),
        (1.0, &entropy.entropy_q),
    ])
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("non-finite field evaluation: {v}"),
        });
    }
    Ok(())
}

/// Mass matrix `M[i][j] = int phi_i phi_j`.
pub fn assemble_mass(mesh: &Mesh) -> Csr {
    let n = mesh.num_dofs();
    let corners = mesh.corners_per_cell();
    let mut coo = Coo::with_capacity(n, n, mesh.num_active_cells() * corners * corners);
    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        for qp in mesh.quad_points() {
            for a in 0..corners {
                if dofs[a] == INVALID {
                    continue;
                }
                for b in 0..corners {
                    if dofs[b] == INVALID {
                        continue;
                    }
                    let p = qp.phi[a] * qp.phi[b];
                    coo.push(dofs[a] as usize, dofs[b] as usize, qp.weight * p);
                }
            }
        }
    }
    coo.to_csr()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StiffnessBlock {
    X,
    Q,
    Full,
}

/// Unweighted stiffness matrix over the selected axis block.
pub fn assemble_stiffness(mesh: &Mesh, block: StiffnessBlock) -> Csr {
    let n = mesh.num_dofs();
    let d = mesh.dim();
    let nx = mesh.nx_axes();
    let (k_lo, k_hi) = match block {
        StiffnessBlock::X => (0, nx),
        StiffnessBlock::Q => (nx, d),
        StiffnessBlock::Full => (0, d),
    };
    let corners = mesh.corners_per_cell();
    let mut coo = Coo::with_capacity(n, n, mesh.num_active_cells() * corners * corners);
    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        for qp in mesh.quad_points() {
            for a in 0..corners {
                if dofs[a] == INVALID {
                    continue;
                }
                for b in 0..corners {
                    if dofs[b] == INVALID {
                        continue;
                    }
                    let mut dot = 0.0;
                    for k in k_lo..k_hi {
                        dot += qp.dphi[a * d + k] * qp.dphi[b * d + k];
                    }
                    coo.push(dofs[a] as usize, dofs[b] as usize, qp.weight * dot);
                }
            }
        }
    }
    coo.to_csr()
}

/// H1 Gram matrix `M + K_full`.
pub fn h1_gram(mesh: &Mesh) -> Csr {
    let m = assemble_mass(mesh);
    let k = assemble_stiffness(mesh, StiffnessBlock::Full);
    m.add(&k).expect("same shape")
}

/// q-mass matrix weighted by `(1 - |q|^2)^-2`; intended for the q-submesh
/// in the Hardy-constant estimate.
pub fn assemble_weighted_q_mass(mesh: &Mesh) -> Csr {
    let n = mesh.num_dofs();
    let nx = mesh.nx_axes();
    let d = mesh.dim();
    let corners = mesh.corners_per_cell();
    let mut coo = Coo::with_capacity(n, n, mesh.num_active_cells() * corners * corners);
    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        let origin = mesh.cell_origin(cell);
        for qp in mesh.quad_points() {
            let mut qn = 0.0;
            for k in nx..d {
                let v = origin[k] + qp.offset[k];
                qn += v * v;
            }
            let w = qp.weight / ((1.0 - qn) * (1.0 - qn));
            for a in 0..corners {
                if dofs[a] == INVALID {
                    continue;
                }
                for b in 0..corners {
                    if dofs[b] == INVALID {
                        continue;
                    }
                    coo.push(dofs[a] as usize, dofs[b] as usize, w * qp.phi[a] * qp.phi[b]);
                }
            }
        }
    }
    coo.to_csr()
}

/// Assemble every iterate-independent term group at time `t`.
pub fn assemble_static(
    mesh: &Mesh,
    params: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
    t: f64,
) -> Result<TermMatrices> {
    theta.validate(mesh.dx())?;
    flow.validate(mesh.dx())?;
    let n = mesh.num_dofs();
    let d = mesh.dim();
    let nx = mesh.nx_axes();
    let dq = mesh.dq();
    let corners = mesh.corners_per_cell();
    let nshared = mesh.dx().min(dq);
    let cap = mesh.num_active_cells() * mesh.quad_points().len() * corners;

    let de = params.de;
    let cx = params.xdiff_coeff();
    let cq = 1.0 / (params.q0 * params.q0 * de);
    let cf = 2.0 / de;
    let eps = params.eps;

    let mut transport = Coo::with_capacity(n, n, if matches!(flow, FlowField::Cellular { .. }) { cap } else { 0 });
    let mut diff_xx = Coo::with_capacity(n, n, if nx > 0 { cap } else { 0 });
    let mut cross_qx = Coo::new(n, n);
    let mut cross_xq = Coo::new(n, n);
    let mut diff_qq = Coo::with_capacity(n, n, cap);
    let mut drift_q = Coo::new(n, n);
    let mut fene = Coo::with_capacity(n, n, cap);

    let x_ref = mesh.x_reference();
    let mut coords = vec![0.0; d];
    let mut kq = vec![0.0; dq];
    let mut hq = vec![0.0; dq];

    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        let origin = mesh.cell_origin(cell);
        for qp in mesh.quad_points() {
            for k in 0..d {
                coords[k] = origin[k] + qp.offset[k];
            }
            let x = if nx > 0 { &coords[..nx] } else { &x_ref[..] };
            let q = &coords[nx..];
            let th = theta.theta(x, t);
            check_finite("theta", th)?;
            let grad_th = theta.grad_theta(x, t);
            let hess_th = theta.hessian_theta(x, t);
            let v = flow.velocity(x, t);
            let kap = flow.kappa(x, t, dq);
            for g in grad_th.iter().chain(v.iter()).chain(kap.iter()) {
                check_finite("field", *g)?;
            }

            // scalar coupling q . grad theta over shared components
            let mut s = 0.0;
            for m in 0..nshared {
                s += q[m] * grad_th[m];
            }
            // kappa . q
            for m in 0..dq {
                let mut acc = 0.0;
                for nn in 0..dq {
                    acc += kap[m * dq + nn] * q[nn];
                }
                kq[m] = acc;
            }
            // padded (hess theta . q): rows limited to dq, columns to shared
            let dxl = mesh.dx();
            for m in 0..dq {
                let mut acc = 0.0;
                if m < dxl {
                    for kk in 0..nshared {
                        acc += hess_th[m * dxl + kk] * q[kk];
                    }
                }
                hq[m] = acc;
            }
            let qn_sq: f64 = q.iter().map(|v| v * v).sum();
            let ff = cf * fene_factor_unchecked(qn_sq, eps);
            let w = qp.weight;

            for a in 0..corners {
                if dofs[a] == INVALID {
                    continue;
                }
                let ia = dofs[a] as usize;
                let ga = &qp.dphi[a * d..(a + 1) * d];
                for b in 0..corners {
                    if dofs[b] == INVALID {
                        continue;
                    }
                    let jb = dofs[b] as usize;
                    let gb = &qp.dphi[b * d..(b + 1) * d];

                    // transport: (v . grad_x phi_b) phi_a
                    if nx > 0 {
                        let mut adv = 0.0;
                        for k in 0..nx {
                            adv += v[k] * gb[k];
                        }
                        if adv != 0.0 {
                            transport.push(ia, jb, w * adv * qp.phi[a]);
                        }
                        // diff_xx (symmetric product first for exactness)
                        let mut dxdot = 0.0;
                        for k in 0..nx {
                            dxdot += ga[k] * gb[k];
                        }
                        diff_xx.push(ia, jb, w * cx * th * dxdot);
                    }

                    // diff_qq
                    let mut dqdot = 0.0;
                    for k in nx..d {
                        dqdot += ga[k] * gb[k];
                    }
                    diff_qq.push(ia, jb, w * cq * th * dqdot);

                    if s != 0.0 && nx > 0 {
                        // cross_qx: (grad_q trial . grad_x test)
                        let mut c1 = 0.0;
                        let mut c2 = 0.0;
                        for m in 0..nshared {
                            c1 += gb[nx + m] * ga[m];
                            c2 += gb[m] * ga[nx + m];
                        }
                        cross_qx.push(ia, jb, w * s / de * c1);
                        cross_xq.push(ia, jb, w * s / de * c2);
                    }

                    // drift and fene act on the q gradient of the test
                    let mut drift = 0.0;
                    let mut fdot = 0.0;
                    for m in 0..dq {
                        drift += kq[m] * ga[nx + m];
                        fdot += q[m] * ga[nx + m];
                    }
                    if drift != 0.0 {
                        drift_q.push(ia, jb, -w * qp.phi[b] * drift);
                    }
                    fene.push(ia, jb, w * ff * qp.phi[b] * fdot);
                }
            }
        }
    }

    Ok(TermMatrices {
        transport: transport.to_csr(),
        diff_xx: if nx > 0 { diff_xx.to_csr() } else { Csr::zeros(n, n) },
        cross_qx: cross_qx.to_csr(),
        cross_xq: cross_xq.to_csr(),
        diff_qq: diff_qq.to_csr(),
        drift_q: drift_q.to_csr(),
        fene: fene.to_csr(),
    })
}

/// Assemble the entropy pair with coefficient `g_eps(r)` evaluated at the
/// quadrature points by interpolating the frozen iterate first and
/// applying the cutoff pointwise (preserving its bound at those points).
pub fn assemble_entropy(
    mesh: &Mesh,
    params: &Params,
    theta: &TemperatureField,
    t: f64,
    r: &DensityState,
) -> Result<EntropyMatrices> {
    r.check_mesh(mesh)?;
    let n = mesh.num_dofs();
    if theta.is_isothermal() {
        return Ok(EntropyMatrices {
            entropy_x: Csr::zeros(n, n),
            entropy_q: Csr::zeros(n, n),
        });
    }
    let d = mesh.dim();
    let nx = mesh.nx_axes();
    let dq = mesh.dq();
    let dxl = mesh.dx();
    let nshared = dxl.min(dq);
    let corners = mesh.corners_per_cell();
    let de = params.de;
    let eps = params.eps;
    let mut entropy_x = Coo::new(n, n);
    let mut entropy_q = Coo::new(n, n);
    let x_ref = mesh.x_reference();
    let mut coords = vec![0.0; d];
    let mut hq = vec![0.0; dq];
    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        let origin = mesh.cell_origin(cell);
        for qp in mesh.quad_points() {
            for k in 0..d {
                coords[k] = origin[k] + qp.offset[k];
            }
            let x = if nx > 0 { &coords[..nx] } else { &x_ref[..] };
            let q = &coords[nx..];
            let grad_th = theta.grad_theta(x, t);
            let hess_th = theta.hessian_theta(x, t);
            let rval = mesh.interpolate_at(&r.coeffs, cell, qp);
            let g = g_eps(rval, eps);
            for m in 0..dq {
                let mut acc = 0.0;
                if m < dxl {
                    for kk in 0..nshared {
                        acc += hess_th[m * dxl + kk] * q[kk];
                    }
                }
                hq[m] = acc;
            }
            let w = qp.weight * g / de;
            if w == 0.0 {
                continue;
            }
            for a in 0..corners {
                if dofs[a] == INVALID {
                    continue;
                }
                let ia = dofs[a] as usize;
                let ga = &qp.dphi[a * d..(a + 1) * d];
                let mut ex = 0.0;
                for k in 0..nx {
                    ex += grad_th[k] * ga[k];
                }
                let mut eq = 0.0;
                for m in 0..dq {
                    eq += hq[m] * ga[nx + m];
                }
                if ex == 0.0 && eq == 0.0 {
                    continue;
                }
                for b in 0..corners {
                    if dofs[b] == INVALID {
                        continue;
                    }
                    let jb = dofs[b] as usize;
                    if ex != 0.0 {
                        entropy_x.push(ia, jb, w * qp.phi[b] * ex);
                    }
                    if eq != 0.0 {
                        entropy_q.push(ia, jb, w * qp.phi[b] * eq);
                    }
                }
            }
        }
    }
    Ok(EntropyMatrices {
        entropy_x: entropy_x.to_csr(),
        entropy_q: entropy_q.to_csr(),
    })
}

/// Assemble the load vector `L_i = int F(., t) phi_i` for a pointwise
/// forcing evaluated at quadrature points.
pub fn assemble_load<F>(mesh: &Mesh, t: f64, forcing: F) -> Vec<f64>
where
    F: Fn(&[f64], &[f64], f64) -> f64,
{
    let n = mesh.num_dofs();
    let d = mesh.dim();
    let nx = mesh.nx_axes();
    let corners = mesh.corners_per_cell();
    let x_ref = mesh.x_reference();
    let mut load = vec![0.0; n];
    let mut coords = vec![0.0; d];
    for cell in 0..mesh.num_active_cells() {
        let dofs = mesh.cell_corner_dofs(cell);
        let origin = mesh.cell_origin(cell);
        for qp in mesh.quad_points() {
            for k in 0..d {
                coords[k] = origin[k] + qp.offset[k];
            }
            let x = if nx > 0 { &coords[..nx] } else { &x_ref[..] };
            let q = &coords[nx..];
            let f = forcing(x, q, t);
            for a in 0..corners {
                if dofs[a] != INVALID {
                    load[dofs[a] as usize] += qp.weight * f * qp.phi[a];
                }
            }
        }
    }
    load
}
