//! Tensor-product discretization of the domain `Omega x B(0,1)`.
//!
//! The spatial box is meshed exactly; the unit ball (dq = 2) is
//! approximated from inside by the cells of a Cartesian grid on [-1,1]^2
//! whose corners all lie in the closed ball. Degrees of freedom are the
//! nodes interior to that staircase region (and to the box), carrying
//! piecewise-multilinear hat functions that vanish on its boundary, so the
//! discrete space conforms to zero trace on the whole product boundary.
//! Keeping every Gauss point strictly inside the ball also keeps the
//! regularized FENE factor positive and bounded by 1/eps for any eps >= 0.

use crate::error::{Error, Result};

const INVALID: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.hi
        } else {
            self.lo + self.h() * i as f64
        }
    }
}

/// One reference quadrature point, shared by every (congruent) cell:
/// physical offsets within the cell, physical weight, and the values /
/// gradients of the 2^D corner hat functions there.
#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub offset: Vec<f64>,
    pub weight: f64,
    pub phi: Vec<f64>,
    /// Row-major [corner][axis].
    pub dphi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dx: usize,
    dq: usize,
    x_resolved: bool,
    n_x: usize,
    n_q: usize,
    quad_order: usize,
    axes: Vec<Axis>,
    nodes_per_axis: Vec<usize>,
    n_dofs: usize,
    node_of_dof: Vec<usize>,
    /// Active q-grid cells (flat over the q-axes), sorted.
    q_cells: Vec<usize>,
    /// Flat-cell-id -> position in `q_cells`, INVALID if masked out.
    q_cell_index: Vec<u32>,
    /// Per active cell: origin coordinates (D per cell).
    cell_origins: Vec<f64>,
    /// Per active cell: DOF id per corner (2^D per cell), INVALID = boundary.
    cell_corner_dofs: Vec<u32>,
    /// Position in `q_cells` of each active cell's q-part.
    cell_q_index: Vec<u32>,
    n_active_cells: usize,
    cell_volume: f64,
    quad: Vec<QuadPoint>,
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (&[f64], &[f64]) = match order {
        1 => (&[0.0], &[2.0]),
        2 => (
            &[-0.5773502691896257, 0.5773502691896257],
            &[1.0, 1.0],
        ),
        3 => (
            &[-0.7745966692414834, 0.0, 0.7745966692414834],
            &[0.5555555555555556, 0.8888888888888888, 0.5555555555555556],
        ),
        4 => (
            &[
                -0.8611363115940526,
                -0.3399810435848563,
                0.3399810435848563,
                0.8611363115940526,
            ],
            &[
                0.3478548451374538,
                0.6521451548625461,
                0.6521451548625461,
                0.3478548451374538,
            ],
        ),
        5 => (
            &[
                -0.9061798459386640,
                -0.5384693101056831,
                0.0,
                0.5384693101056831,
                0.9061798459386640,
            ],
            &[
                0.2369268850561891,
                0.4786286704993665,
                0.5688888888888889,
                0.4786286704993665,
                0.2369268850561891,
            ],
        ),
        6 => (
            &[
                -0.9324695142031521,
                -0.6612093864662645,
                -0.2386191860831969,
                0.2386191860831969,
                0.6612093864662645,
                0.9324695142031521,
            ],
            &[
                0.1713244923791704,
                0.3607615730481386,
                0.4679139345726910,
                0.3607615730481386,
                0.1713244923791704,
            ],
        ),
        _ => {
            return Err(Error::Mesh(format!(
                "quadrature order {order} unsupported (need 2..=6)"
            )))
        }
    };
    Ok((x.to_vec(), w.to_vec()))
}

impl Mesh {
    /// Standard constructor: spatial box resolved with `n_x` cells per
    /// axis, q-domain with `n_q` cells per axis.
    pub fn build(dx: usize, dq: usize, n_x: usize, n_q: usize, quad_order: usize) -> Result<Mesh> {
        if !(1..=2).contains(&dx) || !(1..=2).contains(&dq) {
            return Err(Error::Mesh(format!(
                "dimensions must lie in {{1,2}}, got dx={dx}, dq={dq}"
            )));
        }
        if n_x < 4 || n_q < 4 {
            return Err(Error::Mesh(format!(
                "grid too coarse: need n_x >= 4 and n_q >= 4, got n_x={n_x}, n_q={n_q}"
            )));
        }
        Self::assemble_mesh(dx, dq, true, n_x, n_q, quad_order)
    }

    /// Spatially homogeneous mode: the box is retained only as a unit
    /// measure factor; the state is constant in x and carries no x DOFs.
    /// Valid only with x-constant data (checked by the callers that
    /// evaluate fields).
    pub fn build_homogeneous_x(dx: usize, dq: usize, n_q: usize, quad_order: usize) -> Result<Mesh> {
        if !(1..=2).contains(&dx) || !(1..=2).contains(&dq) {
            return Err(Error::Mesh(format!(
                "dimensions must lie in {{1,2}}, got dx={dx}, dq={dq}"
            )));
        }
        if n_q < 4 {
            return Err(Error::Mesh(format!("grid too coarse: need n_q >= 4, got {n_q}")));
        }
        Self::assemble_mesh(dx, dq, false, 0, n_q, quad_order)
    }

    /// The q-part of this mesh as a standalone mesh (no x axes); used by
    /// the Hardy-constant estimate and the Brownian-dynamics histogram.
    pub fn q_submesh(&self) -> Mesh {
        Self::assemble_mesh(0, self.dq, false, 0, self.n_q, self.quad_order)
            .expect("q-submesh of a valid mesh")
    }

    fn assemble_mesh(
        dx: usize,
        dq: usize,
        x_resolved: bool,
        n_x: usize,
        n_q: usize,
        quad_order: usize,
    ) -> Result<Mesh> {
        let (gx, gw) = gauss_rule(quad_order)?;
        if quad_order < 2 {
            return Err(Error::Mesh("quadrature order must be at least 2".into()));
        }
        let nx_axes = if x_resolved { dx } else { 0 };
        let mut axes = Vec::new();
        for _ in 0..nx_axes {
            axes.push(Axis {
                lo: 0.0,
                hi: 1.0,
                cells: n_x,
            });
        }
        for _ in 0..dq {
            axes.push(Axis {
                lo: -1.0,
                hi: 1.0,
                cells: n_q,
            });
        }
        let d = axes.len();
        let nodes_per_axis: Vec<usize> = axes.iter().map(|a| a.cells + 1).collect();
        let mut node_strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            node_strides[k] = node_strides[k + 1] * nodes_per_axis[k + 1];
        }
        let total_nodes: usize = nodes_per_axis.iter().product();

        // --- q-cell mask: all corners of the cell in the closed unit ball
        let q_grid_cells = n_q.pow(dq as u32);
        let mut q_cells = Vec::new();
        let mut q_cell_index = vec![INVALID; q_grid_cells];
        let q_axis = Axis {
            lo: -1.0,
            hi: 1.0,
            cells: n_q,
        };
        for flat in 0..q_grid_cells {
            let mut idx = [0usize; 2];
            let mut rem = flat;
            for k in (0..dq).rev() {
                idx[k] = rem % n_q;
                rem /= n_q;
            }
            let mut ok = true;
            'corners: for c in 0..(1usize << dq) {
                let mut norm_sq = 0.0;
                for k in 0..dq {
                    let v = q_axis.node(idx[k] + ((c >> k) & 1));
                    norm_sq += v * v;
                }
                if norm_sq > 1.0 {
                    ok = false;
                    break 'corners;
                }
            }
            if ok {
                q_cell_index[flat] = q_cells.len() as u32;
                q_cells.push(flat);
            }
        }
        if q_cells.is_empty() {
            return Err(Error::Mesh(format!(
                "q-grid with n_q = {n_q} has no cell inside the unit ball"
            )));
        }

        // --- DOFs: x-interior nodes whose every adjacent q-cell is active
        let mut dof_of_node = vec![INVALID; total_nodes];
        let mut node_of_dof = Vec::new();
        let mut multi = vec![0usize; d];
        for node in 0..total_nodes {
            let mut rem = node;
            for k in (0..d).rev() {
                multi[k] = rem % nodes_per_axis[k];
                rem /= nodes_per_axis[k];
            }
            let mut is_dof = true;
            for k in 0..nx_axes {
                if multi[k] == 0 || multi[k] == axes[k].cells {
                    is_dof = false;
                    break;
                }
            }
            if is_dof {
                for k in 0..dq {
                    let i = multi[nx_axes + k];
                    if i == 0 || i == n_q {
                        is_dof = false;
                        break;
                    }
                }
            }
            if is_dof && dq > 0 {
                // every adjacent q-cell must be active
                'adj: for c in 0..(1usize << dq) {
                    let mut flat = 0usize;
                    for k in 0..dq {
                        let cell_i = multi[nx_axes + k] - 1 + ((c >> k) & 1);
                        flat = flat * n_q + cell_i;
                    }
                    if q_cell_index[flat] == INVALID {
                        is_dof = false;
                        break 'adj;
                    }
                }
            }
            if is_dof {
                dof_of_node[node] = node_of_dof.len() as u32;
                node_of_dof.push(node);
            }
        }
        if node_of_dof.is_empty() {
            return Err(Error::Mesh(
                "grid too coarse: no interior degree of freedom".into(),
            ));
        }

        // --- active cells = (all x-cells) x (active q-cells)
        let x_cell_count: usize = (0..nx_axes).map(|k| axes[k].cells).product();
        let n_active = x_cell_count.max(1) * q_cells.len();
        let corners = 1usize << d;
        let mut cell_origins = Vec::with_capacity(n_active * d);
        let mut cell_corner_dofs = Vec::with_capacity(n_active * corners);
        let mut cell_q_index = Vec::with_capacity(n_active);
        let mut x_multi = vec![0usize; nx_axes];
        for xc in 0..x_cell_count.max(1) {
            if nx_axes > 0 {
                let mut rem = xc;
                for k in (0..nx_axes).rev() {
                    x_multi[k] = rem % axes[k].cells;
                    rem /= axes[k].cells;
                }
            }
            for (qpos, &qflat) in q_cells.iter().enumerate() {
                let mut q_multi = [0usize; 2];
                let mut rem = qflat;
                for k in (0..dq).rev() {
                    q_multi[k] = rem % n_q;
                    rem /= n_q;
                }
                for k in 0..nx_axes {
                    cell_origins.push(axes[k].node(x_multi[k]));
                }
                for k in 0..dq {
                    cell_origins.push(axes[nx_axes + k].node(q_multi[k]));
                }
                for c in 0..corners {
                    let mut node = 0usize;
                    for k in 0..d {
                        let i = if k < nx_axes {
                            x_multi[k] + ((c >> k) & 1)
                        } else {
                            q_multi[k - nx_axes] + ((c >> k) & 1)
                        };
                        node += i * node_strides[k];
                    }
                    cell_corner_dofs.push(dof_of_node[node]);
                }
                cell_q_index.push(qpos as u32);
            }
        }

        // --- reference quadrature over one cell
        let hs: Vec<f64> = axes.iter().map(|a| a.h()).collect();
        let cell_volume: f64 = hs.iter().product();
        let per_axis = quad_order;
        let n_qp = per_axis.pow(d as u32);
        let mut quad = Vec::with_capacity(n_qp);
        for qp in 0..n_qp {
            let mut gi = vec![0usize; d];
            let mut rem = qp;
            for k in (0..d).rev() {
                gi[k] = rem % per_axis;
                rem /= per_axis;
            }
            let mut offset = vec![0.0; d];
            let mut weight = 1.0;
            let mut xi = vec![0.0; d];
            for k in 0..d {
                let s = 0.5 * (gx[gi[k]] + 1.0); // on [0,1]
                xi[k] = s;
                offset[k] = s * hs[k];
                weight *= 0.5 * gw[gi[k]] * hs[k];
            }
            let mut phi = vec![0.0; corners];
            let mut dphi = vec![0.0; corners * d];
            for c in 0..corners {
                let mut val = 1.0;
                for k in 0..d {
                    let n = if (c >> k) & 1 == 0 { 1.0 - xi[k] } else { xi[k] };
                    val *= n;
                }
                phi[c] = val;
                for m in 0..d {
                    let mut g = if (c >> m) & 1 == 0 { -1.0 / hs[m] } else { 1.0 / hs[m] };
                    for k in 0..d {
                        if k != m {
                            let n = if (c >> k) & 1 == 0 { 1.0 - xi[k] } else { xi[k] };
                            g *= n;
                        }
                    }
                    dphi[c * d + m] = g;
                }
            }
            quad.push(QuadPoint {
                offset,
                weight,
                phi,
                dphi,
            });
        }

        Ok(Mesh {
            dx,
            dq,
            x_resolved,
            n_x: if x_resolved { n_x } else { 0 },
            n_q,
            quad_order,
            axes,
            nodes_per_axis,
            n_dofs: node_of_dof.len(),
            node_of_dof,
            q_cells,
            q_cell_index,
            cell_origins,
            cell_corner_dofs,
            cell_q_index,
            n_active_cells: n_active,
            cell_volume,
            quad,
        })
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn dq(&self) -> usize {
        self.dq
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn x_resolved(&self) -> bool {
        self.x_resolved
    }

    /// Number of resolved x axes (0 in homogeneous mode).
    pub fn nx_axes(&self) -> usize {
        if self.x_resolved {
            self.dx
        } else {
            0
        }
    }

    /// Total number of resolved axes.
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn num_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn num_active_cells(&self) -> usize {
        self.n_active_cells
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn quad_points(&self) -> &[QuadPoint] {
        &self.quad
    }

    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim()
    }

    pub fn cell_origin(&self, cell: usize) -> &[f64] {
        let d = self.dim();
        &self.cell_origins[cell * d..(cell + 1) * d]
    }

    pub fn cell_corner_dofs(&self, cell: usize) -> &[u32] {
        let c = self.corners_per_cell();
        &self.cell_corner_dofs[cell * c..(cell + 1) * c]
    }

    /// Position of this cell's q-part in `q_cell_list`.
    pub fn cell_q_position(&self, cell: usize) -> usize {
        self.cell_q_index[cell] as usize
    }

    pub fn num_q_cells(&self) -> usize {
        self.q_cells.len()
    }

    /// Reference point used to evaluate x-dependent data in the
    /// homogeneous mode (box center).
    pub fn x_reference(&self) -> Vec<f64> {
        vec![0.5; self.dx]
    }

    /// Coordinates of a DOF along the resolved axes.
    pub fn dof_coords(&self, dof: usize) -> Vec<f64> {
        let node = self.node_of_dof[dof];
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut rem = node;
        for k in (0..d).rev() {
            let i = rem % self.nodes_per_axis[k];
            rem /= self.nodes_per_axis[k];
            out[k] = self.axes[k].node(i);
        }
        out
    }

    /// Measure of the staircase q-domain (sum of active q-cell volumes).
    pub fn masked_q_measure(&self) -> f64 {
        let h = 2.0 / self.n_q as f64;
        self.q_cells.len() as f64 * h.powi(self.dq as i32)
    }

    /// Flat index into `0..num_q_cells()` of the active q-cell containing
    /// the point, or None outside the staircase region.
    pub fn q_cell_of_point(&self, q: &[f64]) -> Option<usize> {
        debug_assert_eq!(q.len(), self.dq);
        let n = self.n_q;
        let h = 2.0 / n as f64;
        let mut flat = 0usize;
        for k in 0..self.dq {
            if !(-1.0..=1.0).contains(&q[k]) {
                return None;
            }
            let mut i = ((q[k] + 1.0) / h).floor() as isize;
            if i < 0 {
                i = 0;
            }
            if i as usize >= n {
                i = n as isize - 1;
            }
            flat = flat * n + i as usize;
        }
        let idx = self.q_cell_index[flat];
        if idx == INVALID {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Integration weights of the hat functions: `w_i = \int phi_i`.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_dofs];
        let corners = self.corners_per_cell();
        for cell in 0..self.n_active_cells {
            let dofs = self.cell_corner_dofs(cell);
            for qp in &self.quad {
                for a in 0..corners {
                    if dofs[a] != INVALID {
                        w[dofs[a] as usize] += qp.weight * qp.phi[a];
                    }
                }
            }
        }
        w
    }

    /// Interpolate nodal values (indexed by DOF, zero on the boundary) at
    /// a quadrature point of a cell: `sum_a v[dof_a] phi_a`.
    #[inline]
    pub fn interpolate_at(&self, values: &[f64], cell: usize, qp: &QuadPoint) -> f64 {
        let dofs = self.cell_corner_dofs(cell);
        let mut acc = 0.0;
        for (a, &dof) in dofs.iter().enumerate() {
            if dof != INVALID {
                acc += values[dof as usize] * qp.phi[a];
            }
        }
        acc
    }
}

/// Build the product mesh.
pub fn build_mesh(dx: usize, dq: usize, n_x: usize, n_q: usize, quad_order: usize) -> Result<Mesh> {
    Mesh::build(dx, dq, n_x, n_q, quad_order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_dof_count_1d_1d() {
        // Dirichlet strips the boundary layer on every axis
        let m = Mesh::build(1, 1, 4, 4, 3).unwrap();
        assert_eq!(m.num_dofs(), 9);
        assert_eq!(m.num_active_cells(), 16);
        for dof in 0..m.num_dofs() {
            let c = m.dof_coords(dof);
            assert!(c[0] > 0.0 && c[0] < 1.0);
            assert!(c[1] > -1.0 && c[1] < 1.0);
        }
    }

    #[test]
    fn rejects_bad_dimensions_and_coarse_grids() {
        assert!(Mesh::build(3, 1, 8, 8, 3).is_err());
        assert!(Mesh::build(1, 3, 8, 8, 3).is_err());
        assert!(Mesh::build(0, 1, 8, 8, 3).is_err());
        assert!(Mesh::build(1, 1, 3, 8, 3).is_err());
        assert!(Mesh::build(1, 1, 8, 8, 1).is_err());
        assert!(Mesh::build(1, 1, 8, 8, 7).is_err());
    }

    /// Oracle: analytic disc area. The inscribed staircase converges from
    /// below, first order in h; values frozen from the measured sequence.
    #[test]
    fn masked_disc_area_converges_to_pi() {
        let pi = std::f64::consts::PI;
        let mut prev = 0.0;
        for (nq, tol) in [(32, 0.09), (64, 0.05), (128, 0.022), (256, 0.011)] {
            let m = Mesh::build(1, 2, 4, nq, 2).unwrap();
            let a = m.masked_q_measure();
            assert!(a <= pi);
            assert!(a >= prev, "inscribed area must grow under refinement");
            let rel = (pi - a) / pi;
            assert!(rel <= tol, "nq={nq}: rel err {rel}");
            prev = a;
        }
    }

    #[test]
    fn every_dof_strictly_inside_ball() {
        let m = Mesh::build(1, 2, 4, 16, 3).unwrap();
        let nx = m.nx_axes();
        for dof in 0..m.num_dofs() {
            let c = m.dof_coords(dof);
            let qn: f64 = c[nx..].iter().map(|v| v * v).sum();
            assert!(qn < 1.0, "dof {dof} at |q|^2 = {qn}");
        }
    }

    #[test]
    fn quad_points_stay_inside_ball() {
        for nq in [4, 8, 16, 32] {
            let m = Mesh::build(1, 2, 4, nq, 3).unwrap();
            let nx = m.nx_axes();
            for cell in 0..m.num_active_cells() {
                let o = m.cell_origin(cell);
                for qp in m.quad_points() {
                    let qn: f64 = (nx..m.dim())
                        .map(|k| (o[k] + qp.offset[k]) * (o[k] + qp.offset[k]))
                        .sum();
                    assert!(qn < 1.0, "nq={nq} cell={cell}: |q|^2 = {qn}");
                }
            }
        }
    }

    #[test]
    fn cell_volumes_positive_and_quadrature_integrates_volume() {
        let m = Mesh::build(1, 1, 5, 7, 3).unwrap();
        assert!(m.cell_volume() > 0.0);
        let per_cell: f64 = m.quad_points().iter().map(|q| q.weight).sum();
        assert!((per_cell - m.cell_volume()).abs() < 1e-14);
        // partition of unity at each quadrature point
        for qp in m.quad_points() {
            let s: f64 = qp.phi.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lumped_weights_sum_to_interior_measure() {
        // hats of interior nodes integrate to the measure minus the
        // boundary-layer deficit; on the 1D x 1D grid the deficit is one
        // cell width per axis
        let m = Mesh::build(1, 1, 10, 10, 3).unwrap();
        let w = m.lumped_weights();
        let total: f64 = w.iter().sum();
        let expect = (1.0 - 0.1) * (2.0 - 0.2);
        assert!((total - expect).abs() < 1e-12, "{total} vs {expect}");
        assert!(w.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn homogeneous_mode_has_no_x_axis() {
        let m = Mesh::build_homogeneous_x(1, 1, 8, 3).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.num_dofs(), 7);
        assert_eq!(m.dx(), 1);
        assert!(!m.x_resolved());
        let q = m.q_submesh();
        assert_eq!(q.num_dofs(), 7);
    }

    #[test]
    fn q_cell_lookup_roundtrip() {
        let m = Mesh::build(1, 2, 4, 12, 2).unwrap();
        let sub = m.q_submesh();
        assert_eq!(sub.num_q_cells(), m.num_q_cells());
        assert_eq!(sub.q_cell_of_point(&[0.0, 0.0]), m.q_cell_of_point(&[0.0, 0.0]));
        assert!(m.q_cell_of_point(&[0.99, 0.99]).is_none());
        assert!(m.q_cell_of_point(&[2.0, 0.0]).is_none());
    }
}
