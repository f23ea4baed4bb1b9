//! Steady Stokes flow on the staggered (MAC) grid.
//!
//! Velocities live on cell faces, pressure at cell centers. The solve works
//! in the divergence-free subspace: face velocities are differences of a
//! stream function stored at cell corners (`u = dpsi/dy`, `v = -dpsi/dx`),
//! which makes the discrete divergence vanish identically. The viscous
//! dissipation of the MAC velocity field (ghost-cell no-slip at walls) is
//! minimized over the free corner values, giving a sparse SPD system solved
//! directly. Pressure is recovered afterwards from the momentum residual.
//!
//! Wall corners carry constant stream-function values fixed by the inlet
//! fluxes; inlet corners carry the plug-profile ramp; outlet corners are free
//! (zero-pressure, do-nothing outflow).

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{CellKind, Grid};
use crate::linalg::EnvelopeMatrix;
use crate::{Error, Result, Vec2};

/// Relative residual required of the flow solve.
pub const FLOW_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidProperties {
    pub density_kg_per_m3: f64,
    pub viscosity_pa_s: f64,
}

impl Default for FluidProperties {
    /// Blood-like: 1060 kg/m^3, 3.5 mPa s.
    fn default() -> Self {
        FluidProperties {
            density_kg_per_m3: 1060.0,
            viscosity_pa_s: 3.5e-3,
        }
    }
}

impl FluidProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.density_kg_per_m3 > 0.0 && self.density_kg_per_m3.is_finite()) {
            return Err(Error::invalid("density_kg_per_m3", "must be > 0"));
        }
        if !(self.viscosity_pa_s > 0.0 && self.viscosity_pa_s.is_finite()) {
            return Err(Error::invalid("viscosity_pa_s", "must be > 0"));
        }
        Ok(())
    }

    /// Kinematic viscosity in m^2/s.
    pub fn kinematic_viscosity(&self) -> f64 {
        self.viscosity_pa_s / self.density_kg_per_m3
    }
}

/// Mean inlet speeds: V1 for the main inlet, V2 for each sheath inlet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBoundaryConditions {
    pub v1_um_per_s: f64,
    pub v2_um_per_s: f64,
}

impl FlowBoundaryConditions {
    pub fn validate(&self) -> Result<()> {
        if !(self.v1_um_per_s > 0.0 && self.v1_um_per_s.is_finite()) {
            return Err(Error::invalid("v1_um_per_s", "must be > 0"));
        }
        if !(self.v2_um_per_s >= 0.0 && self.v2_um_per_s.is_finite()) {
            return Err(Error::invalid("v2_um_per_s", "must be >= 0"));
        }
        Ok(())
    }
}

/// Reynolds number `rho U L / mu` for a length in um and a speed in um/s.
pub fn reynolds(fluid: &FluidProperties, length_um: f64, speed_um_per_s: f64) -> f64 {
    fluid.density_kg_per_m3 * (speed_um_per_s * 1e-6) * (length_um * 1e-6) / fluid.viscosity_pa_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Face {
    Solid,
    Wall,
    Interior,
    /// Prescribed velocity component along the face normal axis.
    Inlet(f64),
    Outlet,
}

impl Face {
    fn active(self) -> bool {
        self != Face::Solid
    }
    fn fixed(self) -> bool {
        matches!(self, Face::Wall | Face::Inlet(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaceId {
    U(usize, usize),
    V(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Corner {
    Inactive,
    Free(usize),
    Fixed(f64),
}

/// One velocity-gradient contribution `w/2 * (sum c_k vel_k)^2`.
#[derive(Debug, Clone, Copy)]
struct Term {
    weight: f64,
    faces: [(FaceId, f64); 2],
    len: usize,
}

struct Layout<'g> {
    grid: &'g Grid,
    nx: usize,
    ny: usize,
    u_faces: Vec<Face>,
    v_faces: Vec<Face>,
}

impl<'g> Layout<'g> {
    fn new(grid: &'g Grid, bc: &FlowBoundaryConditions, side_flux: f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let h = grid.spacing_um();
        let count = |k: CellKind| grid.mask().iter().filter(|&&c| c == k).count();
        let main_cells = count(CellKind::InletMain);
        let main_flux = bc.v1_um_per_s * main_flux_width(grid);
        let u_main = if main_cells > 0 {
            main_flux / (main_cells as f64 * h)
        } else {
            0.0
        };
        let top_cells = count(CellKind::InletSideTop);
        let bottom_cells = count(CellKind::InletSideBottom);
        let v_top = if top_cells > 0 {
            side_flux / (top_cells as f64 * h)
        } else {
            0.0
        };
        let v_bottom = if bottom_cells > 0 {
            side_flux / (bottom_cells as f64 * h)
        } else {
            0.0
        };

        let mut u_faces = vec![Face::Solid; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                let l = grid.kind_at(i as isize - 1, j as isize);
                let r = grid.kind_at(i as isize, j as isize);
                let lf = l.is_some_and(CellKind::is_fluid);
                let rf = r.is_some_and(CellKind::is_fluid);
                u_faces[j * (nx + 1) + i] = match (lf, rf) {
                    (true, true) => Face::Interior,
                    (false, false) => Face::Solid,
                    _ => match (l, r) {
                        (None, Some(CellKind::InletMain)) => Face::Inlet(u_main),
                        (Some(CellKind::Outlet), None) => Face::Outlet,
                        _ => Face::Wall,
                    },
                };
            }
        }
        let mut v_faces = vec![Face::Solid; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                let b = grid.kind_at(i as isize, j as isize - 1);
                let t = grid.kind_at(i as isize, j as isize);
                let bf = b.is_some_and(CellKind::is_fluid);
                let tf = t.is_some_and(CellKind::is_fluid);
                v_faces[j * nx + i] = match (bf, tf) {
                    (true, true) => Face::Interior,
                    (false, false) => Face::Solid,
                    _ => match (b, t) {
                        (None, Some(CellKind::InletSideBottom)) => Face::Inlet(v_bottom),
                        (Some(CellKind::InletSideTop), None) => Face::Inlet(-v_top),
                        _ => Face::Wall,
                    },
                };
            }
        }
        Layout {
            grid,
            nx,
            ny,
            u_faces,
            v_faces,
        }
    }

    fn face(&self, f: FaceId) -> Face {
        match f {
            FaceId::U(i, j) => self.u_faces[j * (self.nx + 1) + i],
            FaceId::V(i, j) => self.v_faces[j * self.nx + i],
        }
    }

    fn u_face(&self, i: usize, j: isize) -> Face {
        if j < 0 || j as usize >= self.ny {
            Face::Solid
        } else {
            self.u_faces[j as usize * (self.nx + 1) + i]
        }
    }

    fn v_face(&self, i: isize, j: usize) -> Face {
        if i < 0 || i as usize >= self.nx {
            Face::Solid
        } else {
            self.v_faces[j * self.nx + i as usize]
        }
    }

    /// Corners spanning a face: `vel = (psi[b] - psi[a]) * sign / h`.
    fn face_corners(&self, f: FaceId) -> (usize, usize, f64) {
        let w = self.nx + 1;
        match f {
            // u = (psi(i, j+1) - psi(i, j)) / h
            FaceId::U(i, j) => (j * w + i, (j + 1) * w + i, 1.0),
            // v = -(psi(i+1, j) - psi(i, j)) / h
            FaceId::V(i, j) => (j * w + i, j * w + i + 1, -1.0),
        }
    }

    fn for_each_term(&self, mut f: impl FnMut(&Term)) {
        let (nx, ny) = (self.nx, self.ny);
        let pair = |a: FaceId, b: FaceId| Term {
            weight: 1.0,
            faces: [(b, 1.0), (a, -1.0)],
            len: 2,
        };
        let ghost = |a: FaceId| Term {
            weight: 2.0,
            faces: [(a, 1.0), (a, 0.0)],
            len: 1,
        };
        // normal derivatives at cell centers
        for j in 0..ny {
            for i in 0..nx {
                if self.grid.kind(i, j).is_fluid() {
                    f(&pair(FaceId::U(i, j), FaceId::U(i + 1, j)));
                    f(&pair(FaceId::V(i, j), FaceId::V(i, j + 1)));
                }
            }
        }
        // tangential derivatives at corners
        for i in 0..=nx {
            for j in -1..ny as isize {
                let a = self.u_face(i, j);
                let b = self.u_face(i, j + 1);
                let ia = FaceId::U(i, j.max(0) as usize);
                let ib = FaceId::U(i, (j + 1) as usize);
                match (a.active(), b.active()) {
                    (true, true) => f(&pair(ia, ib)),
                    (true, false) => f(&ghost(ia)),
                    (false, true) => f(&ghost(ib)),
                    (false, false) => {}
                }
            }
        }
        for j in 0..=ny {
            for i in -1..nx as isize {
                let a = self.v_face(i, j);
                let b = self.v_face(i + 1, j);
                let ia = FaceId::V(i.max(0) as usize, j);
                let ib = FaceId::V((i + 1) as usize, j);
                match (a.active(), b.active()) {
                    (true, true) => f(&pair(ia, ib)),
                    (true, false) => f(&ghost(ia)),
                    (false, true) => f(&ghost(ib)),
                    (false, false) => {}
                }
            }
        }
    }

    fn classify_corners(&self) -> Vec<Corner> {
        let (nx, ny) = (self.nx, self.ny);
        let w = nx + 1;
        let mut corners = vec![Corner::Inactive; w * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                let segs = [
                    self.u_face(i, j as isize - 1),
                    self.u_face(i, j as isize),
                    self.v_face(i as isize - 1, j),
                    self.v_face(i as isize, j),
                ];
                corners[j * w + i] = if segs.iter().any(|s| s.fixed()) {
                    Corner::Fixed(f64::NAN)
                } else if segs.iter().any(|s| s.active()) {
                    Corner::Free(0)
                } else {
                    Corner::Inactive
                };
            }
        }
        corners
    }

    /// Assigns wall and inlet corner values by walking the fixed-value
    /// constraints from the bottom corner of the main inlet.
    fn fix_boundary_values(&self, corners: &mut [Corner]) -> Result<()> {
        let (nx, ny) = (self.nx, self.ny);
        let w = nx + 1;
        let h = self.grid.spacing_um();
        // adjacency: (neighbor, psi[neighbor] - psi[self])
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); corners.len()];
        let mut link = |a: usize, b: usize, diff: f64| {
            adj[a].push((b, diff));
            adj[b].push((a, -diff));
        };
        for j in 0..ny {
            for i in 0..=nx {
                let f = FaceId::U(i, j);
                let (a, b, sign) = self.face_corners(f);
                match self.face(f) {
                    Face::Wall => link(a, b, 0.0),
                    Face::Inlet(vel) => link(a, b, sign * vel * h),
                    _ => {}
                }
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let f = FaceId::V(i, j);
                let (a, b, sign) = self.face_corners(f);
                match self.face(f) {
                    Face::Wall => link(a, b, 0.0),
                    Face::Inlet(vel) => link(a, b, sign * vel * h),
                    _ => {}
                }
            }
        }
        let anchor = (0..ny)
            .find(|&j| self.grid.kind(0, j) == CellKind::InletMain)
            .map(|j| j * w)
            .ok_or_else(|| Error::invalid("grid", "no main inlet cells"))?;
        let mut value = vec![f64::NAN; corners.len()];
        value[anchor] = 0.0;
        let mut queue = VecDeque::from([anchor]);
        while let Some(c) = queue.pop_front() {
            for &(n, diff) in &adj[c] {
                let target = value[c] + diff;
                if value[n].is_nan() {
                    value[n] = target;
                    queue.push_back(n);
                } else if libm::fabs(value[n] - target) > 1e-9 * (1.0 + libm::fabs(target)) {
                    return Err(Error::invalid(
                        "grid",
                        "inconsistent wall stream-function values (multiply connected fluid)",
                    ));
                }
            }
        }
        for (k, c) in corners.iter_mut().enumerate() {
            if let Corner::Fixed(v) = c {
                if value[k].is_nan() {
                    return Err(Error::invalid(
                        "grid",
                        "wall segment detached from the boundary",
                    ));
                }
                *v = value[k];
            }
        }
        Ok(())
    }
}

/// Width carried by the main inlet flux: the physical main-channel width
/// when the rasterized inlet spans it, otherwise the rasterized width.
fn main_flux_width(grid: &Grid) -> f64 {
    let cells = grid
        .mask()
        .iter()
        .filter(|&&c| c == CellKind::InletMain)
        .count();
    cells as f64 * grid.spacing_um()
}

/// Discrete steady velocity/pressure solution.
#[derive(Debug, Clone)]
pub struct FlowField {
    grid: Grid,
    viscosity_pa_s: f64,
    /// (nx+1) x ny, x-velocity on vertical faces.
    u: Vec<f64>,
    /// nx x (ny+1), y-velocity on horizontal faces.
    v: Vec<f64>,
    u_active: Vec<bool>,
    v_active: Vec<bool>,
    /// Cell-centered pressure (Pa); zero in walls.
    p: Vec<f64>,
    inflow: f64,
    outflow: f64,
    reynolds: f64,
}

/// Solves steady Stokes flow with plug inflow at V1 (main) and V2 (each
/// sheath, carrying `V2 * side_width_um` flux).
pub fn solve_flow(
    grid: &Grid,
    fluid: &FluidProperties,
    bc: &FlowBoundaryConditions,
    side_width_um: f64,
) -> Result<FlowField> {
    fluid.validate()?;
    bc.validate()?;
    let side_flux = bc.v2_um_per_s * side_width_um;
    let layout = Layout::new(grid, bc, side_flux);
    let (nx, ny) = (grid.nx(), grid.ny());
    let h = grid.spacing_um();
    let w = nx + 1;

    let mut corners = layout.classify_corners();
    layout.fix_boundary_values(&mut corners)?;
    // column-major numbering of free corners keeps the envelope narrow
    let mut n_free = 0usize;
    for i in 0..=nx {
        for j in 0..=ny {
            if let Corner::Free(ref mut k) = corners[j * w + i] {
                *k = n_free;
                n_free += 1;
            }
        }
    }

    // expand a term into corner coefficients
    let expand = |t: &Term, out: &mut [(Corner, f64); 4]| -> usize {
        let mut n = 0;
        for &(f, c) in &t.faces[..t.len] {
            let (a, b, sign) = layout.face_corners(f);
            out[n] = (corners[b], sign * c);
            out[n + 1] = (corners[a], -sign * c);
            n += 2;
        }
        n
    };

    let mut first: Vec<usize> = (0..n_free).collect();
    let mut buf = [(Corner::Inactive, 0.0); 4];
    layout.for_each_term(|t| {
        let n = expand(t, &mut buf);
        let lo = buf[..n]
            .iter()
            .filter_map(|(c, _)| match c {
                Corner::Free(k) => Some(*k),
                _ => None,
            })
            .min();
        if let Some(lo) = lo {
            for (c, _) in &buf[..n] {
                if let Corner::Free(k) = c {
                    first[*k] = first[*k].min(lo);
                }
            }
        }
    });

    let mut mat = EnvelopeMatrix::<f64>::new(first);
    let mut rhs = vec![0.0; n_free];
    layout.for_each_term(|t| {
        let n = expand(t, &mut buf);
        let mut constant = 0.0;
        for (c, coef) in &buf[..n] {
            if let Corner::Fixed(val) = c {
                constant += coef * val;
            }
        }
        for (ca, a) in &buf[..n] {
            let Corner::Free(ka) = ca else { continue };
            rhs[*ka] -= t.weight * a * constant;
            for (cb, b) in &buf[..n] {
                if let Corner::Free(kb) = cb {
                    if kb <= ka {
                        mat.add(*ka, *kb, t.weight * a * b);
                    }
                }
            }
        }
    });
    let psi_free = if n_free > 0 {
        mat.solve(&rhs, FLOW_TOLERANCE)?
    } else {
        Vec::new()
    };

    let psi_at = |k: usize| -> f64 {
        match corners[k] {
            Corner::Free(i) => psi_free[i],
            Corner::Fixed(v) => v,
            Corner::Inactive => 0.0,
        }
    };
    let mut u = vec![0.0; w * ny];
    let mut u_active = vec![false; w * ny];
    for j in 0..ny {
        for i in 0..=nx {
            let f = FaceId::U(i, j);
            if layout.face(f).active() {
                let (a, b, s) = layout.face_corners(f);
                u[j * w + i] = s * (psi_at(b) - psi_at(a)) / h;
                u_active[j * w + i] = true;
            }
        }
    }
    let mut v = vec![0.0; nx * (ny + 1)];
    let mut v_active = vec![false; nx * (ny + 1)];
    for j in 0..=ny {
        for i in 0..nx {
            let f = FaceId::V(i, j);
            if layout.face(f).active() {
                let (a, b, s) = layout.face_corners(f);
                v[j * nx + i] = s * (psi_at(b) - psi_at(a)) / h;
                v_active[j * nx + i] = true;
            }
        }
    }

    let mut inflow = 0.0;
    let mut outflow = 0.0;
    for j in 0..ny {
        for i in 0..=nx {
            match layout.face(FaceId::U(i, j)) {
                Face::Inlet(_) => inflow += u[j * w + i] * h,
                Face::Outlet => outflow += u[j * w + i] * h,
                _ => {}
            }
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            if let Face::Inlet(_) = layout.face(FaceId::V(i, j)) {
                inflow += libm::fabs(v[j * nx + i]) * h;
            }
        }
    }

    let p = recover_pressure(&layout, &u, &v, fluid.viscosity_pa_s);
    let speed = (inflow / grid_main_width(grid)).max(bc.v2_um_per_s);
    let reynolds = reynolds(fluid, grid_main_width(grid), speed);
    Ok(FlowField {
        grid: grid.clone(),
        viscosity_pa_s: fluid.viscosity_pa_s,
        u,
        v,
        u_active,
        v_active,
        p,
        inflow,
        outflow,
        reynolds,
    })
}

fn grid_main_width(grid: &Grid) -> f64 {
    main_flux_width(grid).max(grid.spacing_um())
}

/// Momentum residual `dE/du_f` per face balances the pressure jump across
/// it; integrate the jumps outward from the outlet (p = 0 outside).
fn recover_pressure(layout: &Layout<'_>, u: &[f64], v: &[f64], mu: f64) -> Vec<f64> {
    let (nx, ny) = (layout.nx, layout.ny);
    let h = layout.grid.spacing_um();
    let w = nx + 1;
    let mut gu = vec![0.0; u.len()];
    let mut gv = vec![0.0; v.len()];
    let vel = |f: FaceId| match f {
        FaceId::U(i, j) => u[j * w + i],
        FaceId::V(i, j) => v[j * nx + i],
    };
    layout.for_each_term(|t| {
        let val: f64 = t.faces[..t.len].iter().map(|&(f, c)| c * vel(f)).sum();
        for &(f, c) in &t.faces[..t.len] {
            let g = mu * t.weight * val * c;
            match f {
                FaceId::U(i, j) => gu[j * w + i] += g,
                FaceId::V(i, j) => gv[j * nx + i] += g,
            }
        }
    });
    let mut p = vec![0.0; nx * ny];
    let mut known = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for j in 0..ny {
        if layout.u_faces[j * w + nx] == Face::Outlet {
            let c = j * nx + nx - 1;
            p[c] = gu[j * w + nx] / h;
            known[c] = true;
            queue.push_back(c);
            break;
        }
    }
    while let Some(c) = queue.pop_front() {
        let (i, j) = (c % nx, c / nx);
        // (neighbor cell, face gradient, neighbor is on the + side)
        let mut visit = |n: usize, g: f64, plus: bool| {
            if !known[n] {
                // p_minus - p_plus = g / h
                p[n] = if plus { p[c] - g / h } else { p[c] + g / h };
                known[n] = true;
                queue.push_back(n);
            }
        };
        if i + 1 < nx && layout.u_faces[j * w + i + 1] == Face::Interior {
            visit(c + 1, gu[j * w + i + 1], true);
        }
        if i > 0 && layout.u_faces[j * w + i] == Face::Interior {
            visit(c - 1, gu[j * w + i], false);
        }
        if j + 1 < ny && layout.v_faces[(j + 1) * nx + i] == Face::Interior {
            visit(c + nx, gv[(j + 1) * nx + i], true);
        }
        if j > 0 && layout.v_faces[j * nx + i] == Face::Interior {
            visit(c - nx, gv[j * nx + i], false);
        }
    }
    p
}

impl FlowField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn viscosity_pa_s(&self) -> f64 {
        self.viscosity_pa_s
    }

    /// Total inlet flux per unit depth (um^2/s).
    pub fn inflow_flux(&self) -> f64 {
        self.inflow
    }

    /// Total outlet flux per unit depth (um^2/s).
    pub fn outflow_flux(&self) -> f64 {
        self.outflow
    }

    /// Reynolds number on the main width and the larger of the downstream
    /// mean speed and V2. Values >= 1 leave the Stokes regime.
    pub fn reynolds_number(&self) -> f64 {
        self.reynolds
    }

    pub fn u_face(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.grid.nx() + 1) + i]
    }

    pub fn v_face(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.grid.nx() + i]
    }

    pub fn pressure(&self, i: usize, j: usize) -> f64 {
        self.p[j * self.grid.nx() + i]
    }

    /// Face-averaged velocity at the center of cell `(i, j)`.
    pub fn cell_velocity(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            0.5 * (self.u_face(i, j) + self.u_face(i + 1, j)),
            0.5 * (self.v_face(i, j) + self.v_face(i, j + 1)),
        )
    }

    /// Largest |div u| over fluid cells (1/s).
    pub fn max_divergence(&self) -> f64 {
        let h = self.grid.spacing_um();
        let mut worst: f64 = 0.0;
        for j in 0..self.grid.ny() {
            for i in 0..self.grid.nx() {
                if self.grid.kind(i, j).is_fluid() {
                    let d = (self.u_face(i + 1, j) - self.u_face(i, j) + self.v_face(i, j + 1)
                        - self.v_face(i, j))
                        / h;
                    worst = worst.max(libm::fabs(d));
                }
            }
        }
        worst
    }

    /// u at face (i, j); inactive faces take the mirrored value across the
    /// nearest wall.
    fn u_at(&self, i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.grid.nx() as isize, self.grid.ny() as isize);
        if i < 0 || i > nx {
            return 0.0;
        }
        let w = (nx + 1) as usize;
        reflect(
            |j| {
                (j >= 0 && j < ny && self.u_active[j as usize * w + i as usize])
                    .then(|| self.u[j as usize * w + i as usize])
            },
            j,
        )
    }

    fn v_at(&self, i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.grid.nx() as isize, self.grid.ny() as isize);
        if j < 0 || j > ny {
            return 0.0;
        }
        let w = nx as usize;
        reflect(
            |i| {
                (i >= 0 && i < nx && self.v_active[j as usize * w + i as usize])
                    .then(|| self.v[j as usize * w + i as usize])
            },
            i,
        )
    }

    /// Catmull-Rom across the flow direction of a component, linear along
    /// it. `cross_is_y` selects which grid axis gets the cubic. Returns the
    /// value and its derivative along the cubic axis (per um).
    fn interpolate(
        &self,
        gx: f64,
        gy: f64,
        cross_is_y: bool,
        at: impl Fn(isize, isize) -> f64,
    ) -> (f64, f64) {
        let (i0, j0) = (libm::floor(gx), libm::floor(gy));
        let (fx, fy) = (gx - i0, gy - j0);
        let (i, j) = (i0 as isize, j0 as isize);
        let (t, s) = if cross_is_y { (fy, fx) } else { (fx, fy) };
        let node = |a: isize, b: isize| {
            if cross_is_y {
                at(i + b, j + a)
            } else {
                at(i + a, j + b)
            }
        };
        let mut val = 0.0;
        let mut der = 0.0;
        for (b, wb) in [(0, 1.0 - s), (1, s)] {
            let p = [node(-1, b), node(0, b), node(1, b), node(2, b)];
            let (v, d) = catmull_rom(p, t);
            val += wb * v;
            der += wb * d;
        }
        (val, der / self.grid.spacing_um())
    }

    /// Velocity at `p` (um): each staggered component is interpolated with a
    /// cubic across its flow direction and linearly along it.
    pub fn sample_velocity(&self, p: Vec2) -> Result<Vec2> {
        if !self.grid.contains_fluid_point(p) {
            return Err(Error::PointOutsideFluid {
                x_um: p.x,
                y_um: p.y,
            });
        }
        let g = self.grid.to_grid(p);
        let (u, _) = self.interpolate(g.x, g.y - 0.5, true, |i, j| self.u_at(i, j));
        let (v, _) = self.interpolate(g.x - 0.5, g.y, false, |i, j| self.v_at(i, j));
        Ok(Vec2::new(u, v))
    }

    /// du/dy (1/s) of the interpolated field at `p`.
    pub fn shear_rate(&self, p: Vec2) -> Result<f64> {
        if !self.grid.contains_fluid_point(p) {
            return Err(Error::PointOutsideFluid {
                x_um: p.x,
                y_um: p.y,
            });
        }
        let g = self.grid.to_grid(p);
        let (_, dudy) = self.interpolate(g.x, g.y - 0.5, true, |i, j| self.u_at(i, j));
        Ok(dudy)
    }
}

fn reflect(get: impl Fn(isize) -> Option<f64>, k: isize) -> f64 {
    if let Some(v) = get(k) {
        return v;
    }
    let up = (1..=2).find(|&s| get(k + s).is_some());
    let down = (1..=2).find(|&s| get(k - s).is_some());
    let mirrored = |wall: isize, m: isize| -get(m).or_else(|| get(wall)).unwrap_or(0.0);
    match (down, up) {
        (Some(1), Some(1)) => -0.5 * (get(k - 1).unwrap_or(0.0) + get(k + 1).unwrap_or(0.0)),
        (d, Some(s)) if d.is_none_or(|d| s <= d) => mirrored(k + s, 2 * (k + s) - 1 - k),
        (Some(s), _) => mirrored(k - s, 2 * (k - s) + 1 - k),
        _ => 0.0,
    }
}

fn catmull_rom(p: [f64; 4], t: f64) -> (f64, f64) {
    let a = -p[0] + p[2];
    let b = 2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3];
    let c = -p[0] + 3.0 * p[1] - 3.0 * p[2] + p[3];
    (
        0.5 * (2.0 * p[1] + t * (a + t * (b + t * c))),
        0.5 * (a + t * (2.0 * b + 3.0 * t * c)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, rasterize, rasterize_straight, GeometryParams};

    fn short_straight(y: f64, cells: f64) -> (Grid, f64) {
        let p = GeometryParams {
            main_width_um: y,
            main_length_um: 1_000.0,
            junction_um: 400.0,
            electrode_um: Some(800.0),
            sheath_angle_deg: 30.0,
            side_width_um: None,
            side_length_um: Some(100.0),
        };
        let g = build_geometry(&p).unwrap();
        (rasterize_straight(&g, y / cells).unwrap(), y)
    }

    #[test]
    fn reynolds_examples() {
        let f = FluidProperties::default();
        let re = reynolds(&f, 50.0, 5000.0);
        assert!((re - 1060.0 * 5e-3 * 50e-6 / 3.5e-3).abs() < 1e-12);
        assert!((re - 7.57e-2).abs() < 1e-3);
        assert_eq!(reynolds(&f, 50.0, 0.0), 0.0);
        assert!((reynolds(&f, 150.0, 100.0) - 4.54e-3).abs() < 1e-4);
    }

    #[test]
    fn poiseuille_profile_and_mass_balance() {
        let (grid, y) = short_straight(50.0, 16.0);
        let bc = FlowBoundaryConditions {
            v1_um_per_s: 500.0,
            v2_um_per_s: 0.0,
        };
        let f = solve_flow(&grid, &FluidProperties::default(), &bc, 50.0).unwrap();
        assert!((f.inflow_flux() - 500.0 * y).abs() < 1e-6 * 500.0 * y);
        assert!((f.outflow_flux() - f.inflow_flux()).abs() < 1e-3 * f.inflow_flux());
        let c = f.sample_velocity(Vec2::new(900.0, 25.0)).unwrap();
        assert!((c.x / 500.0 - 1.5).abs() < 0.015, "ratio {}", c.x / 500.0);
        assert!(c.y.abs() < 1e-6);
        // no-slip on the wall line
        let wall = f.sample_velocity(Vec2::new(900.0, 0.0)).unwrap();
        assert!(wall.x.abs() < 1e-9 * 500.0);
        // the interpolant follows the parabola between grid rows too
        for k in 1..40 {
            let yy = y * k as f64 / 40.0;
            let s = yy / y;
            let exact = 6.0 * 500.0 * s * (1.0 - s);
            let got = f.sample_velocity(Vec2::new(900.0, yy)).unwrap().x;
            assert!(
                (got - exact).abs() < 0.01 * 750.0,
                "y {yy}: {got} vs {exact}"
            );
            let shear = f.shear_rate(Vec2::new(900.0, yy)).unwrap();
            let exact_shear = 6.0 * 500.0 * (1.0 - 2.0 * s) / y;
            assert!((shear - exact_shear).abs() < 0.03 * 6.0 * 500.0 / y);
        }
        assert!(f.max_divergence() < 1e-8 * 500.0 / grid.spacing_um());
    }

    #[test]
    fn node_sample_returns_stored_value() {
        let (grid, _) = short_straight(50.0, 8.0);
        let bc = FlowBoundaryConditions {
            v1_um_per_s: 100.0,
            v2_um_per_s: 0.0,
        };
        let f = solve_flow(&grid, &FluidProperties::default(), &bc, 50.0).unwrap();
        let h = grid.spacing_um();
        let (i, j) = (40, 3);
        let p = grid.origin() + Vec2::new(i as f64 * h, (j as f64 + 0.5) * h);
        assert_eq!(f.sample_velocity(p).unwrap().x, f.u_face(i, j));
    }

    #[test]
    fn pressure_drops_along_poiseuille_channel() {
        let (grid, y) = short_straight(50.0, 16.0);
        let bc = FlowBoundaryConditions {
            v1_um_per_s: 500.0,
            v2_um_per_s: 0.0,
        };
        let fl = FluidProperties::default();
        let f = solve_flow(&grid, &fl, &bc, 50.0).unwrap();
        // dp/dx = -12 mu U / Y^2 for plane Poiseuille
        let j = grid.ny() / 2;
        let (a, b) = (100, 250);
        let dx = (b - a) as f64 * grid.spacing_um() * 1e-6;
        let slope = (f.pressure(b, j) - f.pressure(a, j)) / dx;
        let exact = -12.0 * fl.viscosity_pa_s * 500e-6 / (y * 1e-6 * y * 1e-6);
        assert!((slope / exact - 1.0).abs() < 0.02, "{slope} vs {exact}");
        // pressure is uniform across the developed section
        assert!((f.pressure(b, 1) - f.pressure(b, j)).abs() < 1e-3 * exact.abs() * dx);
    }

    #[test]
    fn junction_flow_conserves_mass_and_is_symmetric() {
        let g = build_geometry(&GeometryParams {
            main_length_um: 2_000.0,
            junction_um: 700.0,
            ..GeometryParams::final_design()
        })
        .unwrap();
        let grid = rasterize(&g, 50.0 / 8.0).unwrap();
        let bc = FlowBoundaryConditions {
            v1_um_per_s: 500.0,
            v2_um_per_s: 5000.0,
        };
        let f = solve_flow(&grid, &FluidProperties::default(), &bc, 50.0).unwrap();
        let q = 500.0 * 50.0 + 2.0 * 5000.0 * 50.0;
        assert!((f.inflow_flux() - q).abs() < 1e-6 * q);
        assert!((f.outflow_flux() - q).abs() < 1e-3 * q);
        let ny = grid.ny();
        for j in 0..ny {
            for i in 0..grid.nx() {
                let (a, b) = (f.u_face(i, j), f.u_face(i, ny - 1 - j));
                assert!((a - b).abs() < 1e-7 * q / 50.0);
            }
        }
        for j in 0..=ny {
            for i in 0..grid.nx() {
                let (a, b) = (f.v_face(i, j), f.v_face(i, ny - j));
                assert!((a + b).abs() < 1e-7 * q / 50.0);
            }
        }
    }

    #[test]
    fn outside_point_is_rejected() {
        let (grid, _) = short_straight(50.0, 8.0);
        let bc = FlowBoundaryConditions {
            v1_um_per_s: 100.0,
            v2_um_per_s: 0.0,
        };
        let f = solve_flow(&grid, &FluidProperties::default(), &bc, 50.0).unwrap();
        assert!(matches!(
            f.sample_velocity(Vec2::new(100.0, 80.0)),
            Err(Error::PointOutsideFluid { .. })
        ));
    }
}
