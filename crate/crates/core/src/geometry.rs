//! Focusing channel layout and its rasterization.
//!
//! Physical frame: `x` runs along the main channel from the main inlet
//! (`x = 0`) to the outlet (`x = X`); the main channel occupies
//! `0 <= y <= Y`. The two sheath channels leave the main channel walls at
//! `x = X1`, tilted upstream by the sheath angle, one above and one below.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Vec2};

/// Named inputs of [`build_geometry`]. Optional fields fall back to the
/// documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryParams {
    pub main_width_um: f64,
    pub main_length_um: f64,
    pub junction_um: f64,
    /// Defaults to `main_length_um - 500`.
    pub electrode_um: Option<f64>,
    pub sheath_angle_deg: f64,
    /// Defaults to the main width.
    pub side_width_um: Option<f64>,
    /// Length of each sheath channel along its axis; defaults to 3 side widths.
    pub side_length_um: Option<f64>,
}

impl GeometryParams {
    /// Final design point: Y = 50 um, X = 1 cm, X1 = 5 mm, 30 degree sheaths.
    pub fn final_design() -> Self {
        GeometryParams {
            main_width_um: 50.0,
            main_length_um: 10_000.0,
            junction_um: 5_000.0,
            electrode_um: None,
            sheath_angle_deg: 30.0,
            side_width_um: None,
            side_length_um: None,
        }
    }
}

pub const DEFAULT_ELECTRODE_MARGIN_UM: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGeometry {
    main_width_um: f64,
    main_length_um: f64,
    junction_um: f64,
    electrode_um: f64,
    sheath_angle_deg: f64,
    side_width_um: f64,
    side_length_um: f64,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::NonpositiveDimension(format!("{name} = {v}")))
    }
}

pub fn build_geometry(p: &GeometryParams) -> Result<ChannelGeometry> {
    let y = positive("main_width_um", p.main_width_um)?;
    let x = positive("main_length_um", p.main_length_um)?;
    let x1 = positive("junction_um", p.junction_um)?;
    let xe = positive(
        "electrode_um",
        p.electrode_um.unwrap_or(x - DEFAULT_ELECTRODE_MARGIN_UM),
    )?;
    let ws = positive("side_width_um", p.side_width_um.unwrap_or(y))?;
    let ls = positive("side_length_um", p.side_length_um.unwrap_or(3.0 * ws))?;
    let alpha = p.sheath_angle_deg;
    if !(alpha > 0.0 && alpha < 90.0) {
        return Err(Error::invalid(
            "sheath_angle_deg",
            format!("{alpha} outside (0, 90)"),
        ));
    }
    if x1 >= xe {
        return Err(Error::OrderingViolation(format!(
            "junction {x1} um must lie upstream of electrodes {xe} um"
        )));
    }
    if xe >= x {
        return Err(Error::OrderingViolation(format!(
            "electrodes {xe} um must lie upstream of the outlet {x} um"
        )));
    }
    let g = ChannelGeometry {
        main_width_um: y,
        main_length_um: x,
        junction_um: x1,
        electrode_um: xe,
        sheath_angle_deg: alpha,
        side_width_um: ws,
        side_length_um: ls,
    };
    let (lo, _) = g.side_footprint_x(g.side_length_um * g.sin_alpha());
    if lo <= 0.0 {
        return Err(Error::OrderingViolation(format!(
            "sheath channels reach upstream of the main inlet (x = {lo:.1} um)"
        )));
    }
    let mouth_end = g.mouth_x_range().1;
    if mouth_end >= xe {
        return Err(Error::OrderingViolation(format!(
            "sheath junction mouth ends at {mouth_end:.1} um, past the electrodes"
        )));
    }
    Ok(g)
}

impl ChannelGeometry {
    pub fn main_width_um(&self) -> f64 {
        self.main_width_um
    }
    pub fn main_length_um(&self) -> f64 {
        self.main_length_um
    }
    pub fn junction_um(&self) -> f64 {
        self.junction_um
    }
    pub fn electrode_um(&self) -> f64 {
        self.electrode_um
    }
    pub fn sheath_angle_deg(&self) -> f64 {
        self.sheath_angle_deg
    }
    pub fn side_width_um(&self) -> f64 {
        self.side_width_um
    }
    pub fn side_length_um(&self) -> f64 {
        self.side_length_um
    }
    /// X2: distance from the sheath junction to the electrode plane.
    pub fn sheath_to_electrode_um(&self) -> f64 {
        self.electrode_um - self.junction_um
    }
    pub fn centerline_y_um(&self) -> f64 {
        0.5 * self.main_width_um
    }

    fn sin_alpha(&self) -> f64 {
        libm::sin(self.sheath_angle_deg.to_radians())
    }
    fn cos_alpha(&self) -> f64 {
        libm::cos(self.sheath_angle_deg.to_radians())
    }

    /// Axis of the upper sheath channel, pointing away from the junction.
    fn top_axis(&self) -> Vec2 {
        Vec2::new(-self.cos_alpha(), self.sin_alpha())
    }

    /// x extent of the sheath mouth on the main-channel wall.
    pub fn mouth_x_range(&self) -> (f64, f64) {
        let half = 0.5 * self.side_width_um / self.sin_alpha();
        (self.junction_um - half, self.junction_um + half)
    }

    /// x extent of the upper sheath channel at height `rise` above the wall.
    fn side_footprint_x(&self, rise: f64) -> (f64, f64) {
        let (lo, hi) = self.mouth_x_range();
        let shift = rise * self.cos_alpha() / self.sin_alpha();
        (lo - shift, hi - shift)
    }

    /// True when `p` (physical frame) lies inside the upper sheath channel,
    /// excluding the main channel.
    fn in_top_side(&self, p: Vec2) -> bool {
        if p.y <= self.main_width_um {
            return false;
        }
        let d = p - Vec2::new(self.junction_um, self.main_width_um);
        libm::fabs(d.cross(self.top_axis())) <= 0.5 * self.side_width_um
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Fluid,
    Wall,
    InletMain,
    InletSideTop,
    InletSideBottom,
    Outlet,
}

impl CellKind {
    pub fn is_fluid(self) -> bool {
        self != CellKind::Wall
    }

    fn mirrored(self) -> Self {
        match self {
            CellKind::InletSideTop => CellKind::InletSideBottom,
            CellKind::InletSideBottom => CellKind::InletSideTop,
            k => k,
        }
    }
}

/// Uniform cell grid over the channel's bounding box. Cell `(i, j)` spans
/// `[x0 + i h, x0 + (i+1) h] x [y0 + j h, y0 + (j+1) h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spacing_um: f64,
    nx: usize,
    ny: usize,
    origin: Vec2,
    mask: Vec<CellKind>,
}

impl Grid {
    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn origin(&self) -> Vec2 {
        self.origin
    }
    pub fn mask(&self) -> &[CellKind] {
        &self.mask
    }

    pub fn kind(&self, i: usize, j: usize) -> CellKind {
        self.mask[j * self.nx + i]
    }

    /// Kind of cell `(i, j)` with out-of-range indices reported as `None`.
    pub fn kind_at(&self, i: isize, j: isize) -> Option<CellKind> {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            None
        } else {
            Some(self.kind(i as usize, j as usize))
        }
    }

    pub fn is_fluid(&self, i: isize, j: isize) -> bool {
        self.kind_at(i, j).is_some_and(CellKind::is_fluid)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        let h = self.spacing_um;
        self.origin + Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    /// Grid coordinates of a point (cell units, may be fractional/negative).
    pub fn to_grid(&self, p: Vec2) -> Vec2 {
        (p - self.origin) * (1.0 / self.spacing_um)
    }

    pub fn fluid_count(&self) -> usize {
        self.mask.iter().filter(|k| k.is_fluid()).count()
    }

    /// Whether `p` lies in a fluid cell or on the boundary of one.
    pub fn contains_fluid_point(&self, p: Vec2) -> bool {
        let g = self.to_grid(p);
        let eps = 1e-9;
        let (fx, fy) = (libm::floor(g.x), libm::floor(g.y));
        let xs: &[f64] = if g.x - fx < eps {
            &[fx, fx - 1.0]
        } else if fx + 1.0 - g.x < eps {
            &[fx, fx + 1.0]
        } else {
            &[fx]
        };
        let ys: &[f64] = if g.y - fy < eps {
            &[fy, fy - 1.0]
        } else if fy + 1.0 - g.y < eps {
            &[fy, fy + 1.0]
        } else {
            &[fy]
        };
        xs.iter()
            .any(|&x| ys.iter().any(|&y| self.is_fluid(x as isize, y as isize)))
    }

    /// Column whose cell centers are nearest to `x_um`.
    pub fn column_of(&self, x_um: f64) -> usize {
        let c = libm::floor((x_um - self.origin.x) / self.spacing_um);
        (c.max(0.0) as usize).min(self.nx - 1)
    }

    /// Distance from `p` to the nearest wall cell within `radius`, with the
    /// unit normal pointing from the wall towards `p`. Cells outside the grid
    /// are not walls (they are inlets/outlet).
    pub fn nearest_wall(&self, p: Vec2, radius: f64) -> Option<(f64, Vec2)> {
        let h = self.spacing_um;
        let g = self.to_grid(p);
        let r = libm::ceil(radius / h) as isize + 1;
        let (ci, cj) = (libm::floor(g.x) as isize, libm::floor(g.y) as isize);
        let mut best: Option<(f64, Vec2)> = None;
        for j in cj - r..=cj + r {
            for i in ci - r..=ci + r {
                if self.kind_at(i, j) != Some(CellKind::Wall) {
                    continue;
                }
                let lo = self.origin + Vec2::new(i as f64 * h, j as f64 * h);
                let q = Vec2::new(p.x.clamp(lo.x, lo.x + h), p.y.clamp(lo.y, lo.y + h));
                let d = (p - q).norm();
                if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
                    let n = if d > 0.0 {
                        (p - q) * (1.0 / d)
                    } else {
                        // inside a wall cell: push towards the nearer fluid side
                        let c = lo + Vec2::new(0.5 * h, 0.5 * h);
                        let v = p - c;
                        if libm::fabs(v.x) > libm::fabs(v.y) {
                            Vec2::new(libm::copysign(1.0, v.x), 0.0)
                        } else {
                            Vec2::new(0.0, libm::copysign(1.0, v.y))
                        }
                    };
                    best = Some((d, n));
                }
            }
        }
        best
    }

    /// Cells 4-connected through fluid to any outlet cell.
    pub fn fluid_connected_to_outlet(&self) -> Vec<bool> {
        let mut seen = vec![false; self.mask.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (k, kind) in self.mask.iter().enumerate() {
            if *kind == CellKind::Outlet {
                seen[k] = true;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % self.nx) as isize, (k / self.nx) as isize);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if self.is_fluid(i + di, j + dj) {
                    let n = (j + dj) as usize * self.nx + (i + di) as usize;
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    /// Removes fluid pockets unreachable from the outlet and wall islands
    /// detached from the outer wall.
    fn clean(&mut self) {
        let reach = self.fluid_connected_to_outlet();
        for (k, kind) in self.mask.iter_mut().enumerate() {
            if kind.is_fluid() && !reach[k] {
                *kind = CellKind::Wall;
            }
        }
        let (nx, ny) = (self.nx, self.ny);
        let mut seen = vec![false; self.mask.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let border = i == 0 || j == 0 || i + 1 == nx || j + 1 == ny;
                if border && self.mask[k] == CellKind::Wall {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        while let Some(k) = queue.pop_front() {
            let (i, j) = ((k % nx) as isize, (k / nx) as isize);
            for dj in -1..=1 {
                for di in -1..=1 {
                    if self.kind_at(i + di, j + dj) == Some(CellKind::Wall) {
                        let n = (j + dj) as usize * nx + (i + di) as usize;
                        if !seen[n] {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        for (k, kind) in self.mask.iter_mut().enumerate() {
            if *kind == CellKind::Wall && !seen[k] {
                *kind = CellKind::Fluid;
            }
        }
    }
}

fn check_resolution(geom: &ChannelGeometry, h: f64) -> Result<()> {
    positive("grid spacing", h)?;
    let limit = geom.main_width_um / 8.0;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse {
            spacing_um: h,
            limit_um: limit,
        });
    }
    Ok(())
}

fn ceil_cells(len: f64, h: f64) -> usize {
    libm::ceil(len / h - 1e-9).max(1.0) as usize
}

fn raster(geom: &ChannelGeometry, h: f64, with_sides: bool) -> Result<Grid> {
    check_resolution(geom, h)?;
    let y_main = geom.main_width_um;
    let half_main = ceil_cells(0.5 * y_main, h);
    let rise = geom.side_length_um * geom.sin_alpha();
    let side_rows = if with_sides { ceil_cells(rise, h) } else { 0 };
    let ny_half = half_main + side_rows;
    let ny = 2 * ny_half;
    let nx = ceil_cells(geom.main_length_um, h);
    let origin = Vec2::new(0.0, 0.5 * y_main - ny_half as f64 * h);

    if with_sides {
        let top = side_rows as f64 * h;
        let (lo, _) = geom.side_footprint_x(top);
        if lo < h {
            return Err(Error::OrderingViolation(format!(
                "sheath channel reaches the main inlet at this resolution (x = {lo:.1} um)"
            )));
        }
    }

    let mut grid = Grid {
        spacing_um: h,
        nx,
        ny,
        origin,
        mask: vec![CellKind::Wall; nx * ny],
    };
    for j in ny_half..ny {
        for i in 0..nx {
            let c = grid.cell_center(i, j);
            let kind = if libm::fabs(c.y - 0.5 * y_main) < 0.5 * y_main {
                if i == 0 {
                    CellKind::InletMain
                } else if i + 1 == nx {
                    CellKind::Outlet
                } else {
                    CellKind::Fluid
                }
            } else if with_sides && geom.in_top_side(c) {
                if j + 1 == ny {
                    CellKind::InletSideTop
                } else {
                    CellKind::Fluid
                }
            } else {
                CellKind::Wall
            };
            grid.mask[j * nx + i] = kind;
            grid.mask[(ny - 1 - j) * nx + i] = kind.mirrored();
        }
    }
    grid.clean();
    Ok(grid)
}

/// Rasterizes the full focusing channel. Requires at least 8 cells across
/// the main channel (`h <= Y/8`).
pub fn rasterize(geom: &ChannelGeometry, h_um: f64) -> Result<Grid> {
    raster(geom, h_um, true)
}

/// Straight main channel only; the sheath channels are walled off.
pub fn rasterize_straight(geom: &ChannelGeometry, h_um: f64) -> Result<Grid> {
    raster(geom, h_um, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(y: f64, x1: f64) -> GeometryParams {
        GeometryParams {
            main_width_um: y,
            junction_um: x1,
            ..GeometryParams::final_design()
        }
    }

    #[test]
    fn final_design_is_valid() {
        let p = GeometryParams {
            electrode_um: Some(9_500.0),
            ..GeometryParams::final_design()
        };
        let g = build_geometry(&p).unwrap();
        assert_eq!(g.main_width_um(), 50.0);
        assert_eq!(g.side_width_um(), 50.0);
        assert_eq!(g.sheath_to_electrode_um(), 4_500.0);
    }

    #[test]
    fn junction_past_outlet_is_rejected() {
        let p = params(50.0, 12_000.0);
        assert!(matches!(
            build_geometry(&p),
            Err(Error::OrderingViolation(_))
        ));
    }

    #[test]
    fn wide_channel_near_inlet_is_valid() {
        assert!(build_geometry(&params(150.0, 3_000.0)).is_ok());
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        assert!(matches!(
            build_geometry(&params(0.0, 5_000.0)),
            Err(Error::NonpositiveDimension(_))
        ));
        let mut p = params(50.0, 5_000.0);
        p.sheath_angle_deg = 90.0;
        assert!(matches!(
            build_geometry(&p),
            Err(Error::InvalidParameter { .. })
        ));
        let mut p = params(50.0, 5_000.0);
        p.electrode_um = Some(10_000.0);
        assert!(matches!(
            build_geometry(&p),
            Err(Error::OrderingViolation(_))
        ));
    }

    #[test]
    fn main_channel_has_expected_rows() {
        let g = build_geometry(&GeometryParams::final_design()).unwrap();
        let grid = rasterize(&g, 5.0).unwrap();
        let col = grid.column_of(1_000.0);
        let rows = (0..grid.ny())
            .filter(|&j| grid.is_fluid(col as isize, j as isize))
            .count();
        assert_eq!(rows, 10);
    }

    #[test]
    fn coarse_resolution_is_rejected() {
        let g = build_geometry(&GeometryParams::final_design()).unwrap();
        assert!(matches!(
            rasterize(&g, 7.0),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn mask_is_mirror_symmetric() {
        let g = build_geometry(&params(150.0, 3_000.0)).unwrap();
        let grid = rasterize(&g, 150.0 / 8.0).unwrap();
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                assert_eq!(
                    grid.kind(i, j),
                    grid.kind(i, grid.ny() - 1 - j).mirrored(),
                    "cell ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn fluid_count_scales_with_refinement() {
        let g = build_geometry(&GeometryParams::final_design()).unwrap();
        let coarse = rasterize(&g, 50.0 / 8.0).unwrap().fluid_count() as f64;
        let fine = rasterize(&g, 50.0 / 16.0).unwrap().fluid_count() as f64;
        let ratio = fine / coarse;
        assert!((ratio - 4.0).abs() <= 0.2, "ratio {ratio}");
    }

    #[test]
    fn every_inlet_kind_present_and_connected() {
        let g = build_geometry(&GeometryParams::final_design()).unwrap();
        let grid = rasterize(&g, 50.0 / 8.0).unwrap();
        for kind in [
            CellKind::InletMain,
            CellKind::InletSideTop,
            CellKind::InletSideBottom,
            CellKind::Outlet,
        ] {
            assert!(grid.mask().contains(&kind), "{kind:?} missing");
        }
        let reach = grid.fluid_connected_to_outlet();
        for (k, kind) in grid.mask().iter().enumerate() {
            assert_eq!(kind.is_fluid(), reach[k]);
        }
        // electrode plane column is fluid on the centerline
        let col = grid.column_of(g.electrode_um());
        assert!(col > 0 && col + 1 < grid.nx());
        assert!(grid.contains_fluid_point(Vec2::new(g.electrode_um(), g.centerline_y_um())));
    }

    #[test]
    fn straight_raster_has_no_side_inlets() {
        let g = build_geometry(&GeometryParams::final_design()).unwrap();
        let grid = rasterize_straight(&g, 50.0 / 8.0).unwrap();
        assert!(!grid.mask().contains(&CellKind::InletSideTop));
        assert_eq!(grid.ny(), 8);
    }
}
