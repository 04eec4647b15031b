//! Brownian-dynamics oracle for the isothermal spatially homogeneous
//! configuration: the dimensionless bead SDE
//! `dq = [kappa q - (2/De) q/(1-|q|^2)] dt + sqrt(2 theta0/(Q0^2 De)) dW`
//! sampled by Euler-Maruyama with in-ball rejection, histogrammed on the
//! mesh's q-cells. Cross-checks the PDE equilibrium independently of the
//! weak-form machinery.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct BdConfig {
    pub de: f64,
    pub q0: f64,
    pub theta0: f64,
    /// Constant drift matrix, row-major dq x dq.
    pub kappa: Vec<f64>,
    pub n_particles: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdResult {
    /// Normalized histogram over the active q-cells.
    pub histogram: Vec<f64>,
    pub counted: usize,
    /// Particles stuck after the halving budget, or ending outside the
    /// staircase region; excluded from the histogram.
    pub discarded: usize,
}

impl BdResult {
    pub fn discarded_fraction(&self) -> f64 {
        self.discarded as f64 / (self.counted + self.discarded).max(1) as f64
    }
}

const MAX_HALVINGS: u32 = 10;

fn simulate_particle(cfg: &BdConfig, dq: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let sigma = (2.0 * cfg.theta0 / (cfg.q0 * cfg.q0 * cfg.de)).sqrt();
    let mut q = vec![0.0; dq];
    let mut proposal = vec![0.0; dq];
    for _ in 0..cfg.n_steps {
        let mut remaining = cfg.dt;
        let mut sub = cfg.dt;
        let mut halvings = 0u32;
        while remaining > 1e-15 * cfg.dt {
            let s = sub.min(remaining);
            let qn: f64 = q.iter().map(|v| v * v).sum();
            let fene = 2.0 / (cfg.de * (1.0 - qn));
            let noise = sigma * s.sqrt();
            let mut norm_sq = 0.0;
            for m in 0..dq {
                let mut drift = -fene * q[m];
                for n in 0..dq {
                    drift += cfg.kappa[m * dq + n] * q[n];
                }
                let xi: f64 = rng.sample(StandardNormal);
                proposal[m] = q[m] + drift * s + noise * xi;
                norm_sq += proposal[m] * proposal[m];
            }
            if norm_sq >= 1.0 {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return None;
                }
                sub *= 0.5;
                continue;
            }
            q.copy_from_slice(&proposal);
            remaining -= s;
        }
    }
    Some(q)
}

/// Run the sampler and histogram final positions on the active q-cells of
/// `q_mesh` (a q-only mesh, e.g. `Mesh::q_submesh`). Deterministic for a
/// fixed seed: every particle owns an independent counter-based stream,
/// so the result is independent of the parallel schedule.
pub fn bd_oracle(q_mesh: &Mesh, cfg: &BdConfig) -> Result<BdResult> {
    if cfg.n_particles == 0 || cfg.n_steps == 0 || !(cfg.dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bd",
            reason: "need n_particles >= 1, n_steps >= 1, dt > 0".into(),
        });
    }
    let dq = cfg.kappa.len();
    let dq = (dq as f64).sqrt() as usize;
    if dq * dq != cfg.kappa.len() || dq != q_mesh.dq() {
        return Err(Error::DimensionMismatch {
            expected: q_mesh.dq() * q_mesh.dq(),
            got: cfg.kappa.len(),
        });
    }
    let finals: Vec<Option<usize>> = (0..cfg.n_particles)
        .into_par_iter()
        .map(|i| {
            let stream = cfg
                .seed
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add((i as u64).wrapping_mul(0xD1B54A32D192ED03));
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            simulate_particle(cfg, dq, &mut rng).and_then(|q| q_mesh.q_cell_of_point(&q))
        })
        .collect();
    let mut histogram = vec![0.0; q_mesh.num_q_cells()];
    let mut counted = 0usize;
    let mut discarded = 0usize;
    for f in finals {
        match f {
            Some(cell) => {
                histogram[cell] += 1.0;
                counted += 1;
            }
            None => discarded += 1,
        }
    }
    if counted > 0 {
        let inv = 1.0 / counted as f64;
        histogram.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(BdResult {
        histogram,
        counted,
        discarded,
    })
}
