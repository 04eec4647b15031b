//! Time integration: implicit Euler, each step resolved by iterating the
//! frozen-coefficient linear map to a fixed point, plus the continuation
//! study over shrinking regularization parameters.

use crate::assembly::{assemble_entropy, assemble_load, assemble_static, TermMatrices};
use crate::diagnostics::{InvariantSeries, NormContext};
use crate::error::{Error, Result};
use crate::fields::{FlowField, TemperatureField};
use crate::linalg::iterative::{bicgstab, Ilu0};
use crate::linalg::{Csr, SolveInfo, DENSE_SOLVE_LIMIT};
use crate::mesh::Mesh;
use crate::params::Params;
use crate::state::DensityState;

/// Per-step convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Time at the end of the step.
    pub t: f64,
    pub picard_iters: usize,
    /// Final fixed-point residual |r^{k+1} - r^k|_L2.
    pub fp_residual: f64,
    /// Full residual history, one entry per iterate.
    pub residuals: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub linear_residuals: Vec<f64>,
}

/// Snapshotted run: strictly increasing times, first state equal to the
/// initial condition, per-step reports and running diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub reports: Vec<StepReport>,
    pub series: InvariantSeries,
}

pub type ForcingFn<'a> = Box<dyn Fn(&[f64], &[f64], f64) -> f64 + 'a>;

/// System solver wrapper: dense LU at desk scale, ILU(0)/BiCGStab above.
enum SystemFactor {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Iterative { matrix: Csr, ilu: Ilu0 },
}

impl SystemFactor {
    fn build(s: Csr) -> Result<Self> {
        if s.n_rows() <= DENSE_SOLVE_LIMIT {
            Ok(SystemFactor::Dense(s.to_dense().lu()))
        } else {
            let ilu = Ilu0::factor(&s)?;
            Ok(SystemFactor::Iterative { matrix: s, ilu })
        }
    }

    fn solve(&self, b: &[f64], weight: &[f64], tol: f64) -> Result<(Vec<f64>, SolveInfo)> {
        match self {
            SystemFactor::Dense(lu) => {
                let x = lu
                    .solve(&nalgebra::DVector::from_column_slice(b))
                    .ok_or_else(|| Error::LinearSolver("singular time-step system".into()))?;
                Ok((
                    x.as_slice().to_vec(),
                    SolveInfo {
                        iterations: 0,
                        residual: 0.0,
                        direct: true,
                    },
                ))
            }
            SystemFactor::Iterative { matrix, ilu } => {
                let (x, st) = bicgstab(matrix, ilu, b, weight, tol, 10 * b.len())?;
                Ok((
                    x,
                    SolveInfo {
                        iterations: st.iterations,
                        residual: st.residual,
                        direct: false,
                    },
                ))
            }
        }
    }
}

/// One application of the linearized map: solve
/// `(M/dt + A_h(t, r)) f = (M/dt) f_prev + load(t)`.
///
/// Exposed with explicit operators so callers can inject test systems
/// (e.g. the all-zero operator, which makes the map the identity).
pub fn picard_map(
    mass: &Csr,
    a_h: &Csr,
    f_prev: &DensityState,
    t_new: f64,
    dt: f64,
    load: Option<&[f64]>,
    inv_lumped: &[f64],
    tol_lin: f64,
) -> Result<(DensityState, SolveInfo)> {
    let s = Csr::linear_combination(&[(1.0 / dt, mass), (1.0, a_h)])?;
    let mut b = mass.matvec(&f_prev.coeffs);
    b.iter_mut().for_each(|v| *v /= dt);
    if let Some(l) = load {
        for (bi, li) in b.iter_mut().zip(l) {
            *bi += li;
        }
    }
    let factor = SystemFactor::build(s)?;
    let (x, info) = factor.solve(&b, inv_lumped, tol_lin)?;
    Ok((DensityState::new(t_new, x), info))
}

/// Owns the data of one run and caches whatever the configuration allows:
/// static term matrices when the fields are autonomous, the factored
/// time-step system when the entropy coefficient plays no role.
pub struct Simulation<'m> {
    pub mesh: &'m Mesh,
    pub params: Params,
    pub theta: TemperatureField,
    pub flow: FlowField,
    pub ctx: NormContext<'m>,
    inv_lumped: Vec<f64>,
    autonomous: bool,
    entropy_active: bool,
    static_cache: Option<(f64, TermMatrices)>,
    factor_cache: Option<(f64, f64, SystemFactor)>,
    forcing: Option<ForcingFn<'m>>,
    load_cache: Option<(f64, Vec<f64>)>,
}

impl<'m> Simulation<'m> {
    pub fn new(
        mesh: &'m Mesh,
        params: Params,
        theta: TemperatureField,
        flow: FlowField,
    ) -> Result<Self> {
        params.validate()?;
        theta.validate(mesh.dx())?;
        flow.validate(mesh.dx())?;
        if !mesh.x_resolved() {
            // the homogeneous ansatz requires x-constant data
            if !theta.is_isothermal() {
                return Err(Error::InvalidParameter {
                    name: "mesh",
                    reason: "homogeneous-x mode requires a constant temperature field".into(),
                });
            }
            if matches!(flow, FlowField::Cellular { .. }) {
                return Err(Error::InvalidParameter {
                    name: "mesh",
                    reason: "homogeneous-x mode is incompatible with cellular flow".into(),
                });
            }
        }
        let ctx = NormContext::new(mesh);
        let inv_lumped = ctx.lumped.iter().map(|w| 1.0 / w.max(1e-300)).collect();
        let autonomous = !theta.is_time_dependent() && !flow.is_time_dependent();
        let entropy_active = !theta.is_isothermal();
        Ok(Simulation {
            mesh,
            params,
            theta,
            flow,
            ctx,
            inv_lumped,
            autonomous,
            entropy_active,
            static_cache: None,
            factor_cache: None,
            forcing: None,
            load_cache: None,
        })
    }

    /// Attach a manufactured right-hand-side forcing, evaluated at
    /// quadrature points. Only the load vector changes per step; the
    /// operator caches stay valid.
    pub fn set_forcing(&mut self, forcing: ForcingFn<'m>) {
        self.forcing = Some(forcing);
        self.load_cache = None;
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.ctx.l2(v)
    }

    fn ensure_static(&mut self, t: f64) -> Result<()> {
        let needs_build = match &self.static_cache {
            Some((tc, _)) => !self.autonomous && (*tc - t).abs() > 1e-14,
            None => true,
        };
        if needs_build {
            let tm = assemble_static(self.mesh, &self.params, &self.theta, &self.flow, t)?;
            self.static_cache = Some((t, tm));
        }
        Ok(())
    }

    fn load_vector(&mut self, t: f64) -> Option<Vec<f64>> {
        let forcing = self.forcing.as_ref()?;
        if let Some((tc, l)) = &self.load_cache {
            if (*tc - t).abs() <= 1e-14 {
                return Some(l.clone());
            }
        }
        let l = assemble_load(self.mesh, t, |x, q, tt| forcing(x, q, tt));
        self.load_cache = Some((t, l.clone()));
        Some(l)
    }

    /// Apply the linearized map once at (t_new, frozen iterate r).
    pub fn apply_picard_map(
        &mut self,
        f_prev: &DensityState,
        r: &DensityState,
        t_new: f64,
        dt: f64,
    ) -> Result<(DensityState, SolveInfo)> {
        self.ensure_static(t_new)?;
        let load = self.load_vector(t_new);
        // reusable factor: no entropy dependence and autonomous fields
        let reuse = !self.entropy_active && self.autonomous;
        if reuse {
            let valid = matches!(&self.factor_cache, Some((cdt, _, _)) if (cdt - dt).abs() <= 1e-14);
            if !valid {
                let s = {
                    let tm = &self.static_cache.as_ref().unwrap().1;
                    let a = Csr::linear_combination(&[
                        (1.0, &tm.transport),
                        (1.0, &tm.diff_xx),
                        (1.0, &tm.cross_qx),
                        (1.0, &tm.cross_xq),
                        (1.0, &tm.diff_qq),
                        (1.0, &tm.drift_q),
                        (1.0, &tm.fene),
                    ])?;
                    Csr::linear_combination(&[(1.0 / dt, &self.ctx.mass), (1.0, &a)])?
                };
                self.factor_cache = Some((dt, t_new, SystemFactor::build(s)?));
            }
            let (_, _, factor) = self.factor_cache.as_ref().unwrap();
            let mut b = self.ctx.mass.matvec(&f_prev.coeffs);
            b.iter_mut().for_each(|v| *v /= dt);
            if let Some(l) = &load {
                for (bi, li) in b.iter_mut().zip(l) {
                    *bi += li;
                }
            }
            let (x, info) = factor.solve(&b, &self.inv_lumped, self.params.tol_lin)?;
            return Ok((DensityState::new(t_new, x), info));
        }
        // general path: assemble entropy at the frozen iterate
        let em = assemble_entropy(self.mesh, &self.params, &self.theta, t_new, r)?;
        let tm = &self.static_cache.as_ref().unwrap().1;
        let a = Csr::linear_combination(&[
            (1.0, &tm.transport),
            (1.0, &tm.diff_xx),
            (1.0, &tm.cross_qx),
            (1.0, &tm.cross_xq),
            (1.0, &tm.diff_qq),
            (1.0, &tm.drift_q),
            (1.0, &tm.fene),
            (1.0, &em.entropy_x),
            (1.0, &em.entropy_q),
        ])?;
        picard_map(
            &self.ctx.mass,
            &a,
            f_prev,
            t_new,
            dt,
            load.as_deref(),
            &self.inv_lumped,
            self.params.tol_lin,
        )
    }

    /// One implicit-Euler step: iterate the linearized map from r = f_n
    /// until successive iterates agree in L2.
    pub fn step(&mut self, f_n: &DensityState, dt: f64) -> Result<(DensityState, StepReport)> {
        f_n.check_mesh(self.mesh)?;
        let t_new = f_n.t + dt;
        let mut r = DensityState::new(t_new, f_n.coeffs.clone());
        let mut residuals = Vec::new();
        let mut lin_iters = Vec::new();
        let mut lin_res = Vec::new();
        for _k in 0..self.params.max_picard {
            let (next, info) = self.apply_picard_map(f_n, &r, t_new, dt)?;
            let diff: Vec<f64> = next
                .coeffs
                .iter()
                .zip(&r.coeffs)
                .map(|(a, b)| a - b)
                .collect();
            let res = self.ctx.l2(&diff);
            residuals.push(res);
            lin_iters.push(info.iterations);
            lin_res.push(info.residual);
            r = next;
            if res <= self.params.tol_fp {
                return Ok((
                    r,
                    StepReport {
                        t: t_new,
                        picard_iters: residuals.len(),
                        fp_residual: res,
                        residuals,
                        linear_iterations: lin_iters,
                        linear_residuals: lin_res,
                    },
                ));
            }
        }
        Err(Error::PicardDiverged {
            max_iters: self.params.max_picard,
            residuals,
        })
    }

    /// Integrate from the initial state to `t_end`, recording diagnostics
    /// each step and snapshotting every `snapshot_every` steps (0 keeps
    /// only the first and final states). On failure the partial
    /// trajectory is returned alongside the error so callers can flush it.
    pub fn run(
        &mut self,
        f0: DensityState,
        snapshot_every: usize,
    ) -> (Trajectory, Option<Error>) {
        let mut traj = Trajectory {
            times: vec![f0.t],
            states: vec![f0.clone()],
            reports: Vec::new(),
            series: InvariantSeries::default(),
        };
        if let Err(e) = f0.check_mesh(self.mesh) {
            return (traj, Some(e));
        }
        traj.series.record(&f0, &self.ctx);
        let t_end = self.params.t_end;
        if t_end <= 0.0 {
            return (traj, None);
        }
        let n_steps = (t_end / self.params.dt).round().max(1.0) as usize;
        let dt = t_end / n_steps as f64;
        let mut f = f0;
        for n in 0..n_steps {
            match self.step(&f, dt) {
                Ok((next, report)) => {
                    f = next;
                    traj.series.record(&f, &self.ctx);
                    traj.reports.push(report);
                    let last = n + 1 == n_steps;
                    let snap = snapshot_every > 0 && (n + 1) % snapshot_every == 0;
                    if snap || last {
                        traj.times.push(f.t);
                        traj.states.push(f.clone());
                    }
                }
                Err(e) => {
                    return (
                        traj,
                        Some(Error::StepFailed {
                            t: f.t + dt,
                            source: Box::new(e),
                        }),
                    );
                }
            }
        }
        (traj, None)
    }
}

/// Discrete space-time L2 distance between two trajectories sharing the
/// same snapshot grid: time-trapezoid of the squared spatial L2 norms.
pub fn space_time_l2_distance(a: &Trajectory, b: &Trajectory, ctx: &NormContext) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::DimensionMismatch {
            expected: a.times.len(),
            got: b.times.len(),
        });
    }
    let n = a.times.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let diff: Vec<f64> = a.states[i]
            .coeffs
            .iter()
            .zip(&b.states[i].coeffs)
            .map(|(x, y)| x - y)
            .collect();
        let sq = ctx.l2(&diff).powi(2);
        let w = if i == 0 {
            0.5 * (a.times[1] - a.times[0])
        } else if i == n - 1 {
            0.5 * (a.times[n - 1] - a.times[n - 2])
        } else {
            0.5 * (a.times[i + 1] - a.times[i - 1])
        };
        acc += w * sq;
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub eps_values: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// (eps_i, eps_{i+1}, space-time L2 distance) per consecutive pair.
    pub cauchy_table: Vec<(f64, f64, f64)>,
    pub failure: Option<String>,
}

/// Run the same problem over a decreasing schedule of regularization
/// parameters and tabulate consecutive space-time distances.
pub fn epsilon_continuation(
    mesh: &Mesh,
    base: &Params,
    theta: &TemperatureField,
    flow: &FlowField,
    f0: &DensityState,
    schedule: &[f64],
) -> Result<ContinuationResult> {
    if schedule.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "eps_schedule",
            reason: "need at least two values".into(),
        });
    }
    for w in schedule.windows(2) {
        if !(w[1] > 0.0 && w[1] < w[0]) {
            return Err(Error::InvalidParameter {
                name: "eps_schedule",
                reason: format!("schedule must be strictly decreasing and positive, got {w:?}"),
            });
        }
    }
    let mut result = ContinuationResult {
        eps_values: Vec::new(),
        trajectories: Vec::new(),
        cauchy_table: Vec::new(),
        failure: None,
    };
    let ctx = NormContext::new(mesh);
    for &eps in schedule {
        let params = Params { eps, ..*base };
        let mut sim = Simulation::new(mesh, params, theta.clone(), flow.clone())?;
        let (traj, err) = sim.run(f0.clone(), 1);
        if let Some(e) = err {
            result.failure = Some(format!("eps = {eps}: {e}"));
            break;
        }
        result.eps_values.push(eps);
        result.trajectories.push(traj);
    }
    for i in 0..result.trajectories.len().saturating_sub(1) {
        let d = space_time_l2_distance(
            &result.trajectories[i],
            &result.trajectories[i + 1],
            &ctx,
        )?;
        result
            .cauchy_table
            .push((result.eps_values[i], result.eps_values[i + 1], d));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_mass;
    use crate::diagnostics::analytic_steady_state;
    use crate::state::{initial_condition, InitialFamily};

    fn homogeneous_setup(nq: usize, eps: f64) -> (Mesh, Params) {
        let mesh = Mesh::build_homogeneous_x(1, 1, nq, 3).unwrap();
        let params = Params {
            eps,
            dt: 0.01,
            t_end: 0.1,
            ..Params::default()
        };
        (mesh, params)
    }

    #[test]
    fn zero_operator_step_is_identity() {
        let mesh = Mesh::build(1, 1, 6, 6, 3).unwrap();
        let n = mesh.num_dofs();
        let mass = assemble_mass(&mesh);
        let zero = Csr::zeros(n, n);
        let f: Vec<f64> = (0..n).map(|i| 0.3 + (i as f64 * 0.11).sin()).collect();
        let f_prev = DensityState::new(0.0, f.clone());
        let w = mesh.lumped_weights();
        let inv: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        let (next, _) =
            picard_map(&mass, &zero, &f_prev, 0.1, 0.1, None, &inv, 1e-12).unwrap();
        for i in 0..n {
            assert!((next.coeffs[i] - f[i]).abs() < 1e-11, "i = {i}");
        }
    }

    #[test]
    fn picard_map_linear_in_previous_state() {
        let (mesh, params) = homogeneous_setup(24, 0.05);
        let theta = TemperatureField::constant(1.0).unwrap();
        let mut sim =
            Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
        let n = mesh.num_dofs();
        let f1 = DensityState::new(0.0, (0..n).map(|i| (i as f64 * 0.3).sin() + 1.2).collect());
        let f2 = DensityState::new(0.0, (0..n).map(|i| (i as f64 * 0.7).cos() + 1.1).collect());
        let alpha = 0.3;
        let beta = -1.7;
        let combl: Vec<f64> = f1
            .coeffs
            .iter()
            .zip(&f2.coeffs)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let fc = DensityState::new(0.0, combl);
        let r = DensityState::new(0.01, vec![1.0; n]);
        let (y1, _) = sim.apply_picard_map(&f1, &r, 0.01, 0.01).unwrap();
        let (y2, _) = sim.apply_picard_map(&f2, &r, 0.01, 0.01).unwrap();
        let (yc, _) = sim.apply_picard_map(&fc, &r, 0.01, 0.01).unwrap();
        for i in 0..n {
            let lin = alpha * y1.coeffs[i] + beta * y2.coeffs[i];
            assert!((yc.coeffs[i] - lin).abs() <= 1e-9 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn equilibrium_is_near_fixed_point_of_one_step() {
        // theta = Q0 = De = 1, homogeneous: the analytic steady state
        // moves only by the regularization gap and discretization error,
        // a sub-percent fraction of its own norm per step, shrinking
        // with eps
        let mut moved = Vec::new();
        for eps in [1e-2, 1e-3] {
            let (mesh, params) = homogeneous_setup(128, eps);
            let theta = TemperatureField::constant(1.0).unwrap();
            let mut sim = Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
            let feq = analytic_steady_state(1.0, 1.0, &mesh);
            let (next, rep) = sim.step(&feq, 0.01).unwrap();
            assert!(rep.picard_iters <= 2);
            let diff: Vec<f64> = next
                .coeffs
                .iter()
                .zip(&feq.coeffs)
                .map(|(a, b)| a - b)
                .collect();
            moved.push(sim.ctx.l2(&diff) / sim.ctx.l2(&feq.coeffs));
        }
        assert!(moved[1] <= 1e-2, "relative motion {moved:?}");
        assert!(moved[1] < moved[0], "motion must shrink with eps: {moved:?}");
    }

    #[test]
    fn isothermal_step_converges_in_two_iterations() {
        let (mesh, params) = homogeneous_setup(32, 0.05);
        let theta = TemperatureField::constant(1.0).unwrap();
        let mut sim = Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
        let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
            theta0: 1.0,
        })
        .unwrap();
        let (_, rep) = sim.step(&f0, 0.01).unwrap();
        assert!(rep.picard_iters <= 2, "iters = {}", rep.picard_iters);
        assert_eq!(rep.fp_residual, 0.0);
    }

    #[test]
    fn distinct_initial_guesses_reach_same_fixed_point() {
        // non-isothermal desk config so the entropy coefficient matters
        let mesh = Mesh::build(1, 1, 8, 12, 3).unwrap();
        let params = Params {
            eps: 0.05,
            q0: 0.2,
            dt: 0.01,
            t_end: 0.05,
            tol_fp: 1e-11,
            ..Params::default()
        };
        let theta = TemperatureField::affine(1.0, vec![0.1]).unwrap();
        let flow = FlowField::ShearKappa { rate: 0.5 };
        let f0 = initial_condition(&mesh, params.q0, &InitialFamily::FeneEquilibriumBump {
            theta0: 1.0,
        })
        .unwrap();
        let mut sim =
            Simulation::new(&mesh, params, theta.clone(), flow.clone()).unwrap();
        let (fixed_a, _) = sim.step(&f0, 0.01).unwrap();

        // hand-rolled iteration from a different initial guess
        let mut r = DensityState::new(0.01, f0.coeffs.iter().map(|v| 0.5 * v).collect());
        for _ in 0..50 {
            let (next, _) = sim.apply_picard_map(&f0, &r, 0.01, 0.01).unwrap();
            let diff: Vec<f64> = next
                .coeffs
                .iter()
                .zip(&r.coeffs)
                .map(|(a, b)| a - b)
                .collect();
            let res = sim.ctx.l2(&diff);
            r = next;
            if res <= 1e-11 {
                break;
            }
        }
        let diff: Vec<f64> = fixed_a
            .coeffs
            .iter()
            .zip(&r.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        assert!(sim.ctx.l2(&diff) <= 10.0 * 1e-11, "{}", sim.ctx.l2(&diff));
    }

    #[test]
    fn zero_final_time_returns_initial_only() {
        let (mesh, mut params) = homogeneous_setup(16, 0.05);
        params.t_end = 0.0;
        let theta = TemperatureField::constant(1.0).unwrap();
        let mut sim = Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
        let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
            theta0: 1.0,
        })
        .unwrap();
        let (traj, err) = sim.run(f0.clone(), 1);
        assert!(err.is_none());
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0], f0);
    }

    #[test]
    fn continuation_rejects_increasing_schedule() {
        let (mesh, params) = homogeneous_setup(16, 0.05);
        let theta = TemperatureField::constant(1.0).unwrap();
        let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
            theta0: 1.0,
        })
        .unwrap();
        let r = epsilon_continuation(
            &mesh,
            &params,
            &theta,
            &FlowField::Quiescent,
            &f0,
            &[0.05, 0.1],
        );
        assert!(r.is_err());
    }

    #[test]
    fn homogeneous_mode_rejects_x_dependent_data() {
        let mesh = Mesh::build_homogeneous_x(1, 1, 16, 3).unwrap();
        let theta = TemperatureField::affine(1.0, vec![0.1]).unwrap();
        let r = Simulation::new(&mesh, Params::default(), theta, FlowField::Quiescent);
        assert!(r.is_err());
    }
}
