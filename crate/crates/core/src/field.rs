//! Cell-centred uniform grids with homogeneous Neumann boundaries and the
//! conservative discrete operators used by the simulator.
//!
//! Every operator is written in face-flux form: a flux is computed once per
//! interior face and enters its two neighbours with opposite signs.
//! Boundary faces carry zero flux, which is the discrete zero-normal-flux
//! condition and makes the discrete integral of every divergence vanish up to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motility::MotilityFamily;

/// Minimum cell count per axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    lengths: [f64; 2],
    spacing: [f64; 2],
}

impl Grid {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) || lengths.len() != dim {
            return Err(Error::domain(
                "grid must be 1D or 2D with one length per axis",
            ));
        }
        if cells.iter().any(|&c| c < MIN_CELLS) {
            return Err(Error::domain(format!(
                "every axis needs at least {MIN_CELLS} cells"
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::domain("grid lengths must be positive"));
        }
        let mut g = Grid {
            dim,
            cells: [1, 1],
            lengths: [1.0, 1.0],
            spacing: [1.0, 1.0],
        };
        for k in 0..dim {
            g.cells[k] = cells[k];
            g.lengths[k] = lengths[k];
            g.spacing[k] = lengths[k] / cells[k] as f64;
        }
        Ok(g)
    }

    pub fn line(cells: usize, length: f64) -> Result<Self> {
        Self::new(&[cells], &[length])
    }

    pub fn square(cells: usize, length: f64) -> Result<Self> {
        Self::new(&[cells, cells], &[length, length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Flat index of cell `(i, j)`; `x` varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    /// Cell-centre coordinates of flat index `k`.
    pub fn center(&self, k: usize) -> [f64; 2] {
        let i = k % self.cells[0];
        let j = k / self.cells[0];
        [
            (i as f64 + 0.5) * self.spacing[0],
            (j as f64 + 0.5) * self.spacing[1],
        ]
    }

    pub fn field_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> ScalarField {
        ScalarField {
            grid: *self,
            values: (0..self.len()).map(|k| f(self.center(k))).collect(),
        }
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: *self,
            values: vec![c; self.len()],
        }
    }

    /// Calls `visit(left, right, axis)` for every interior face, in a fixed order.
    #[inline]
    pub(crate) fn for_each_face(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let [nx, ny] = self.cells;
        for j in 0..ny {
            for i in 0..nx - 1 {
                let k = self.index(i, j);
                visit(k, k + 1, 0);
            }
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let k = self.index(i, j);
                    visit(k, k + nx, 1);
                }
            }
        }
    }
}

/// Assembles `sum_axis (F_right - F_left) / h` from a face-flux function.
///
/// Boundary faces carry zero flux. Each axis is differenced separately and the
/// axes are summed in a fixed order, so mirroring the grid commutes with the
/// result bitwise.
fn divergence_from_fluxes(
    grid: &Grid,
    mut flux: impl FnMut(usize, usize, usize) -> f64,
) -> Vec<f64> {
    let [nx, ny] = grid.cells;
    let h = grid.spacing;
    let mut fx = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.index(i - 1, j);
            fx[i + (nx + 1) * j] = flux(k, k + 1, 0);
        }
    }
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let row = (nx + 1) * j;
            out[grid.index(i, j)] = (fx[row + i + 1] - fx[row + i]) / h[0];
        }
    }
    if grid.dim == 2 {
        let mut fy = vec![0.0; nx * (ny + 1)];
        for j in 1..ny {
            for i in 0..nx {
                let k = grid.index(i, j - 1);
                fy[i + nx * j] = flux(k, k + nx, 1);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                out[grid.index(i, j)] += (fy[i + nx * (j + 1)] - fy[i + nx * j]) / h[1];
            }
        }
    }
    out
}

/// Cell-centred values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Mirror image along `axis`.
    pub fn reflected(&self, axis: usize) -> ScalarField {
        let [nx, ny] = self.grid.cells;
        let mut out = vec![0.0; self.values.len()];
        for j in 0..ny {
            for i in 0..nx {
                let (si, sj) = if axis == 0 {
                    (nx - 1 - i, j)
                } else {
                    (i, ny - 1 - j)
                };
                out[self.grid.index(i, j)] = self.values[self.grid.index(si, sj)];
            }
        }
        ScalarField {
            grid: self.grid,
            values: out,
        }
    }
}

/// Cell density `u`, signal `v` and the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
}

impl State {
    pub fn new(u: ScalarField, v: ScalarField, t: f64) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::domain("u and v must share one grid"));
        }
        Ok(Self { u, v, t })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

/// Fixed-order pairwise sum; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Midpoint-rule integral.
pub fn integrate(f: &ScalarField) -> f64 {
    pairwise_sum(&f.values) * f.grid.cell_volume()
}

/// Midpoint-rule integral of `g(x_k)` over cell values.
pub(crate) fn integrate_with(grid: &Grid, n: usize, g: impl Fn(usize) -> f64) -> f64 {
    let vals: Vec<f64> = (0..n).map(g).collect();
    pairwise_sum(&vals) * grid.cell_volume()
}

/// Discrete `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(f.sup_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::domain(format!("L^p exponent must be >= 1, got {p}")));
    }
    let s = integrate_with(&f.grid, f.values.len(), |k| f.values[k].abs().powf(p));
    Ok(s.powf(1.0 / p))
}

/// Neumann Laplacian by the second-order central stencil with mirrored ghosts.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let grid = f.grid;
    let h = grid.spacing;
    let vals = &f.values;
    let out = divergence_from_fluxes(&grid, |l, r, axis| (vals[r] - vals[l]) / h[axis]);
    ScalarField { grid, values: out }
}

/// Face statistics gathered while assembling the chemotactic divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxDiagnostics {
    pub min_face_gamma: f64,
    pub max_cell_gamma: f64,
    /// Largest `|phi(v_face) * grad v|` over faces.
    pub max_face_velocity: f64,
}

impl FluxDiagnostics {
    pub fn degenerate(&self, floor: f64) -> bool {
        self.min_face_gamma < floor
    }
}

/// Per-cell motility values for a signal field.
pub(crate) fn motility_cells(
    fam: &MotilityFamily,
    v: &ScalarField,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = v.values.len();
    let mut gamma = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for &vk in &v.values {
        if vk <= 0.0 && fam.is_singular_at_zero() {
            return Err(Error::domain(format!(
                "signal value {vk} is not positive for a family singular at v = 0"
            )));
        }
        gamma.push(fam.gamma(vk)?);
        phi.push(fam.phi(vk)?);
    }
    Ok((gamma, phi))
}

/// Finite-volume divergence of `gamma(v) grad u - u phi(v) grad v`.
///
/// Face motilities are arithmetic means of the neighbouring cell values; the
/// advective flux takes `u` from the upwind cell of the face velocity
/// `phi(v_face) grad v`.
pub fn chemotactic_flux_divergence(
    state: &State,
    fam: &MotilityFamily,
) -> Result<(ScalarField, FluxDiagnostics)> {
    let (gamma, phi) = motility_cells(fam, &state.v)?;
    Ok(chemotactic_divergence_with(state, &gamma, &phi))
}

pub(crate) fn chemotactic_divergence_with(
    state: &State,
    gamma: &[f64],
    phi: &[f64],
) -> (ScalarField, FluxDiagnostics) {
    let grid = *state.grid();
    let h = grid.spacing;
    let u = state.u.values();
    let v = state.v.values();
    let mut diag = FluxDiagnostics {
        min_face_gamma: f64::INFINITY,
        max_cell_gamma: gamma.iter().copied().fold(0.0, f64::max),
        max_face_velocity: 0.0,
    };
    let out = divergence_from_fluxes(&grid, |l, r, axis| {
        let g_face = 0.5 * (gamma[l] + gamma[r]);
        let phi_face = 0.5 * (phi[l] + phi[r]);
        let vel = phi_face * (v[r] - v[l]) / h[axis];
        let upwind = if vel >= 0.0 { u[l] } else { u[r] };
        diag.min_face_gamma = diag.min_face_gamma.min(g_face);
        diag.max_face_velocity = diag.max_face_velocity.max(vel.abs());
        g_face * (u[r] - u[l]) / h[axis] - upwind * vel
    });
    (ScalarField { grid, values: out }, diag)
}

/// Largest `|grad v|` over interior faces.
pub fn max_face_gradient(f: &ScalarField) -> f64 {
    let h = f.grid.spacing;
    let mut m = 0.0f64;
    f.grid.for_each_face(|l, r, axis| {
        m = m.max(((f.values[r] - f.values[l]) / h[axis]).abs());
    });
    m
}
