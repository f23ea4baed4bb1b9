//! Electroquasistatic field between a pair of opposing electrodes across a
//! channel cross-section, impedance spectra and cell classification.
//!
//! The domain spans `0 <= x <= L_d` along the channel and `0 <= y <= g`
//! across it. The drive electrode sits on the top wall (`y = g`), the ground
//! electrode on the bottom wall, both centered at `x = L_d / 2`. Every other
//! boundary is insulating.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::exec::Executor;
use crate::linalg::EnvelopeMatrix;
use crate::tracer::CellClass;
use crate::{Error, Result, Vec2};

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854e-12;

/// Relative residual accepted from the field solve.
pub const FIELD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DielectricMaterial {
    pub conductivity_s_per_m: f64,
    pub permittivity_rel: f64,
}

impl DielectricMaterial {
    pub fn new(conductivity_s_per_m: f64, permittivity_rel: f64) -> Result<Self> {
        let m = DielectricMaterial {
            conductivity_s_per_m,
            permittivity_rel,
        };
        m.validate()?;
        Ok(m)
    }

    /// Default suspending medium: 0.7 S/m, relative permittivity 80.
    pub fn medium() -> Self {
        DielectricMaterial {
            conductivity_s_per_m: 0.7,
            permittivity_rel: 80.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.conductivity_s_per_m >= 0.0) || !self.conductivity_s_per_m.is_finite() {
            return Err(Error::invalid("conductivity_s_per_m", "must be >= 0"));
        }
        if !(self.permittivity_rel >= 1.0) || !self.permittivity_rel.is_finite() {
            return Err(Error::invalid("permittivity_rel", "must be >= 1"));
        }
        Ok(())
    }

    /// `sigma + j 2 pi f eps0 eps_r`, S/m.
    pub fn complex_conductivity(&self, freq_hz: f64) -> Complex64 {
        complex_conductivity(self, freq_hz)
    }
}

/// `sigma + j 2 pi f eps0 eps_r`, S/m.
pub fn complex_conductivity(m: &DielectricMaterial, freq_hz: f64) -> Complex64 {
    Complex64::new(
        m.conductivity_s_per_m,
        2.0 * core::f64::consts::PI * freq_hz * EPSILON_0 * m.permittivity_rel,
    )
}

/// Homogeneous disk standing in for a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub center_um: Vec2,
    pub diameter_um: f64,
    pub material: DielectricMaterial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DielectricDomain {
    pub length_um: f64,
    pub gap_um: f64,
    pub electrode_width_um: f64,
    pub drive_voltage_v: f64,
    /// Out-of-plane depth converting sheet quantities to ohms.
    pub depth_um: f64,
    pub medium: DielectricMaterial,
    pub inclusion: Option<Inclusion>,
}

impl Default for DielectricDomain {
    fn default() -> Self {
        DielectricDomain {
            length_um: 500.0,
            gap_um: 50.0,
            electrode_width_um: 15.0,
            drive_voltage_v: 1.0,
            depth_um: 50.0,
            medium: DielectricMaterial::medium(),
            inclusion: None,
        }
    }
}

impl DielectricDomain {
    /// Point midway between the electrodes.
    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * self.length_um, 0.5 * self.gap_um)
    }

    /// Same domain with a disk of `diameter_um` at `center_um`.
    pub fn with_inclusion(
        &self,
        center_um: Vec2,
        diameter_um: f64,
        material: DielectricMaterial,
    ) -> Self {
        DielectricDomain {
            inclusion: Some(Inclusion {
                center_um,
                diameter_um,
                material,
            }),
            ..*self
        }
    }

    pub fn empty(&self) -> Self {
        DielectricDomain {
            inclusion: None,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_um", self.length_um),
            ("gap_um", self.gap_um),
            ("electrode_width_um", self.electrode_width_um),
            ("depth_um", self.depth_um),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonpositiveDimension(name.into()));
            }
        }
        if !(self.drive_voltage_v != 0.0) || !self.drive_voltage_v.is_finite() {
            return Err(Error::invalid("drive_voltage_v", "must be non-zero"));
        }
        if self.electrode_width_um > self.length_um {
            return Err(Error::OrderingViolation(
                "electrode wider than the domain".into(),
            ));
        }
        self.medium.validate()?;
        if let Some(inc) = &self.inclusion {
            inc.material.validate()?;
            let r = 0.5 * inc.diameter_um;
            let c = inc.center_um;
            if !(inc.diameter_um > 0.0) {
                return Err(Error::NonpositiveDimension("inclusion diameter_um".into()));
            }
            if !(inc.diameter_um < self.gap_um)
                || !(c.y - r > 0.0 && c.y + r < self.gap_um)
                || !(c.x - r > 0.0 && c.x + r < self.length_um)
            {
                return Err(Error::invalid(
                    "inclusion",
                    "must lie strictly inside the channel",
                ));
            }
        }
        Ok(())
    }

    fn electrode_span(&self) -> (f64, f64) {
        let c = 0.5 * self.length_um;
        let w = 0.5 * self.electrode_width_um;
        (c - w, c + w)
    }
}

/// Cell-centered potential and electrode currents of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    potential: Vec<Complex64>,
    /// Current leaving the drive electrode into the channel, A.
    pub current_top: Complex64,
    /// Current entering the ground electrode from the channel, A.
    pub current_bottom: Complex64,
}

impl FieldSolution {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    /// Cell size (um) along and across the channel.
    pub fn spacing_um(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }
    /// Potential (V) at the center of cell `(i, j)`; `j` counts up from the
    /// ground electrode.
    pub fn potential(&self, i: usize, j: usize) -> Complex64 {
        self.potential[i * self.ny + j]
    }
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }
}

/// Area of `{X <= x, Y <= y}` inside the unit-free disk of radius `r`
/// centered at the origin.
fn quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    let xe = x.min(r);
    let s = |t: f64| libm::sqrt((r * r - t * t).max(0.0));
    // antiderivative of the half chord sqrt(r^2 - t^2)
    let half = |t: f64| {
        let t = t.clamp(-r, r);
        0.5 * (t * s(t) + r * r * libm::asin(t / r))
    };
    let chord = |a: f64, b: f64| {
        if b > a {
            2.0 * (half(b) - half(a))
        } else {
            0.0
        }
    };
    if y >= r {
        return chord(-r, xe);
    }
    let a = s(y);
    // |t| <= a: the column is cut at y; |t| > a: the column lies wholly
    // below y (y > 0) or wholly above it (y < 0).
    let inner = {
        let (lo, hi) = (-a, xe.min(a));
        if hi > lo {
            (half(hi) - half(lo)) + y * (hi - lo)
        } else {
            0.0
        }
    };
    let outer = if y > 0.0 {
        chord(-r, xe.min(-a)) + chord(a, xe)
    } else {
        0.0
    };
    inner + outer
}

/// Fraction of the rectangle `[x0, x1] x [y0, y1]` covered by the disk.
fn disk_fraction(c: Vec2, r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let g = |x: f64, y: f64| quadrant_area(x - c.x, y - c.y, r);
    let area = g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0);
    (area / ((x1 - x0) * (y1 - y0))).clamp(0.0, 1.0)
}

struct Mesh {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    /// Inclusion area fraction per cell, `i * ny + j`.
    fill: Vec<f64>,
    /// Electrode coverage of each top/bottom boundary face.
    cover: Vec<f64>,
}

fn mesh(dom: &DielectricDomain, h_um: f64) -> Result<Mesh> {
    dom.validate()?;
    if !(h_um > 0.0) || !h_um.is_finite() {
        return Err(Error::invalid("grid_spacing_um", "must be > 0"));
    }
    let mut limit = dom.gap_um / 4.0;
    if let Some(inc) = &dom.inclusion {
        limit = limit.min(dom.electrode_width_um.min(inc.diameter_um) / 6.0);
    }
    if h_um > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse {
            spacing_um: h_um,
            limit_um: limit,
        });
    }
    let nx = libm::ceil(dom.length_um / h_um - 1e-9) as usize;
    let ny = libm::ceil(dom.gap_um / h_um - 1e-9) as usize;
    let hx = dom.length_um / nx as f64;
    let hy = dom.gap_um / ny as f64;
    let mut fill = vec![0.0; nx * ny];
    if let Some(inc) = &dom.inclusion {
        let r = 0.5 * inc.diameter_um;
        let c = inc.center_um;
        let i0 = libm::floor((c.x - r) / hx).max(0.0) as usize;
        let i1 = (libm::ceil((c.x + r) / hx) as usize).min(nx);
        let j0 = libm::floor((c.y - r) / hy).max(0.0) as usize;
        let j1 = (libm::ceil((c.y + r) / hy) as usize).min(ny);
        for i in i0..i1 {
            for j in j0..j1 {
                let (x0, y0) = (i as f64 * hx, j as f64 * hy);
                fill[i * ny + j] = disk_fraction(c, r, x0, x0 + hx, y0, y0 + hy);
            }
        }
    }
    let (e0, e1) = dom.electrode_span();
    let cover = (0..nx)
        .map(|i| {
            let (x0, x1) = (i as f64 * hx, (i + 1) as f64 * hx);
            ((x1.min(e1) - x0.max(e0)) / hx).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Mesh {
        nx,
        ny,
        hx,
        hy,
        fill,
        cover,
    })
}

fn harmonic(a: Complex64, b: Complex64) -> Complex64 {
    let s = a + b;
    if s.norm_sqr() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        2.0 * a * b / s
    }
}

/// Solves `div(sigma* grad phi) = 0` with the drive electrode at `V0` and the
/// ground electrode at 0 on a grid of spacing at most `h_um`. Cells cut by
/// the inclusion get the area-weighted mix of the two materials.
pub fn solve_field(dom: &DielectricDomain, freq_hz: f64, h_um: f64) -> Result<FieldSolution> {
    if !(freq_hz >= 0.0) || !freq_hz.is_finite() {
        return Err(Error::invalid("frequency_hz", "must be >= 0"));
    }
    let m = mesh(dom, h_um)?;
    let (nx, ny, hx, hy) = (m.nx, m.ny, m.hx, m.hy);
    let n = nx * ny;
    let s_med = dom.medium.complex_conductivity(freq_hz);
    let s_inc = dom
        .inclusion
        .map(|inc| inc.material.complex_conductivity(freq_hz))
        .unwrap_or(s_med);
    let sigma: Vec<Complex64> = m
        .fill
        .iter()
        .map(|&f| s_med * (1.0 - f) + s_inc * f)
        .collect();
    let idx = |i: usize, j: usize| i * ny + j;
    let first: Vec<usize> = (0..n)
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            if i > 0 {
                k - ny
            } else if j > 0 {
                k - 1
            } else {
                k
            }
        })
        .collect();
    let mut a = EnvelopeMatrix::<Complex64>::new(first);
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    let (gx, gy) = (hy / hx, hx / hy);
    let v0 = dom.drive_voltage_v;
    let mut g_top = vec![Complex64::new(0.0, 0.0); nx];
    let mut g_bot = vec![Complex64::new(0.0, 0.0); nx];
    for i in 0..nx {
        for j in 0..ny {
            let k = idx(i, j);
            if i + 1 < nx {
                let g = harmonic(sigma[k], sigma[idx(i + 1, j)]) * gx;
                let k2 = idx(i + 1, j);
                a.add(k, k, g);
                a.add(k2, k2, g);
                a.add(k2, k, -g);
            }
            if j + 1 < ny {
                let g = harmonic(sigma[k], sigma[idx(i, j + 1)]) * gy;
                let k2 = idx(i, j + 1);
                a.add(k, k, g);
                a.add(k2, k2, g);
                a.add(k2, k, -g);
            }
        }
        let c = m.cover[i];
        if c > 0.0 {
            let top = idx(i, ny - 1);
            let bot = idx(i, 0);
            g_top[i] = sigma[top] * (c * hx / (0.5 * hy));
            g_bot[i] = sigma[bot] * (c * hx / (0.5 * hy));
            a.add(top, top, g_top[i]);
            b[top] += g_top[i] * v0;
            a.add(bot, bot, g_bot[i]);
        }
    }
    let phi = a.solve(&b, FIELD_TOLERANCE)?;
    let depth_m = dom.depth_um * 1e-6;
    let mut i_top = Complex64::new(0.0, 0.0);
    let mut i_bot = Complex64::new(0.0, 0.0);
    for i in 0..nx {
        i_top += g_top[i] * (v0 - phi[idx(i, ny - 1)]);
        i_bot += g_bot[i] * phi[idx(i, 0)];
    }
    Ok(FieldSolution {
        nx,
        ny,
        hx,
        hy,
        potential: phi,
        current_top: i_top * depth_m,
        current_bottom: i_bot * depth_m,
    })
}

/// `Z = V0 / I`, ohms.
pub fn impedance_of(dom: &DielectricDomain, freq_hz: f64, h_um: f64) -> Result<Complex64> {
    let sol = solve_field(dom, freq_hz, h_um)?;
    let i = 0.5 * (sol.current_top + sol.current_bottom);
    if i.norm_sqr() == 0.0 {
        return Err(Error::SolverDiverged {
            residual: f64::INFINITY,
        });
    }
    Ok(Complex64::new(dom.drive_voltage_v, 0.0) / i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceSpectrum {
    pub frequencies_hz: Vec<f64>,
    pub z_ohm: Vec<Complex64>,
}

impl ImpedanceSpectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.z_ohm.iter().map(|z| z.norm()).collect()
    }
    pub fn len(&self) -> usize {
        self.frequencies_hz.len()
    }
    pub fn is_empty(&self) -> bool {
        self.frequencies_hz.is_empty()
    }
}

/// `0` followed by `points` log-spaced frequencies from `lo` to `hi` Hz.
pub fn log_sweep(lo_hz: f64, hi_hz: f64, points: usize, include_dc: bool) -> Vec<f64> {
    let mut f = Vec::with_capacity(points + 1);
    if include_dc {
        f.push(0.0);
    }
    let (a, b) = (libm::log10(lo_hz), libm::log10(hi_hz));
    for k in 0..points {
        let t = if points > 1 {
            k as f64 / (points - 1) as f64
        } else {
            0.0
        };
        f.push(libm::pow(10.0, a + t * (b - a)));
    }
    f
}

/// DC plus 50 log-spaced points over 10 kHz to 10 MHz.
pub fn default_frequencies() -> Vec<f64> {
    log_sweep(1e4, 1e7, 50, true)
}

fn check_frequencies(freqs: &[f64]) -> Result<()> {
    if freqs.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
        return Err(Error::invalid("frequencies_hz", "must be finite and >= 0"));
    }
    if freqs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(
            "frequencies_hz",
            "must be strictly increasing",
        ));
    }
    Ok(())
}

/// One impedance solve per frequency, distributed over `exec`.
pub fn spectrum<E: Executor>(
    dom: &DielectricDomain,
    freqs: &[f64],
    h_um: f64,
    exec: &E,
) -> Result<ImpedanceSpectrum> {
    check_frequencies(freqs)?;
    if !freqs.is_empty() {
        mesh(dom, h_um)?;
    }
    let z = exec
        .map_indexed(freqs.len(), |k| impedance_of(dom, freqs[k], h_um))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpedanceSpectrum {
        frequencies_hz: freqs.to_vec(),
        z_ohm: z,
    })
}

/// Relative change of |Z| caused by a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImpedance {
    pub frequencies_hz: Vec<f64>,
    /// `(|Z_cell| - |Z_empty|) / |Z_empty|`
    pub signed: Vec<f64>,
    /// Absolute value of `signed`.
    pub magnitude: Vec<f64>,
}

pub fn normalized(
    with_cell: &ImpedanceSpectrum,
    empty: &ImpedanceSpectrum,
) -> Result<NormalizedImpedance> {
    if with_cell.frequencies_hz != empty.frequencies_hz {
        return Err(Error::FrequencyMismatch);
    }
    let signed: Vec<f64> = with_cell
        .z_ohm
        .iter()
        .zip(&empty.z_ohm)
        .map(|(c, e)| (c.norm() - e.norm()) / e.norm())
        .collect();
    Ok(NormalizedImpedance {
        frequencies_hz: empty.frequencies_hz.clone(),
        magnitude: signed.iter().map(|s| libm::fabs(*s)).collect(),
        signed,
    })
}

impl NormalizedImpedance {
    /// Mean of the magnitude over frequencies inside `[lo, hi]` Hz.
    pub fn band_mean(&self, lo_hz: f64, hi_hz: f64) -> Result<f64> {
        let inside: Vec<f64> = self
            .frequencies_hz
            .iter()
            .zip(&self.magnitude)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, n)| *n)
            .collect();
        if inside.is_empty() {
            return Err(Error::EmptyBand);
        }
        Ok(inside.iter().sum::<f64>() / inside.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Ctc,
    Wbc,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Ctc => "CTC",
            Label::Wbc => "WBC",
        }
    }
}

impl From<CellClass> for Label {
    fn from(c: CellClass) -> Self {
        match c {
            CellClass::Ctc => Label::Ctc,
            CellClass::Wbc => Label::Wbc,
        }
    }
}

/// A measured cell. `class` is the known truth for calibration samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub species: String,
    pub class: Option<CellClass>,
    pub response: NormalizedImpedance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub sample_id: String,
    pub species: String,
    /// Band-mean normalized impedance.
    pub statistic: f64,
    pub threshold: f64,
    pub label: Label,
}

/// Midpoint between the largest WBC statistic and the smallest CTC statistic.
pub fn calibrate_threshold(stats: &[(CellClass, f64)]) -> Result<f64> {
    let max_wbc = stats
        .iter()
        .filter(|(c, _)| *c == CellClass::Wbc)
        .map(|(_, s)| *s)
        .fold(None, |a: Option<f64>, s| Some(a.map_or(s, |a| a.max(s))));
    let min_ctc = stats
        .iter()
        .filter(|(c, _)| *c == CellClass::Ctc)
        .map(|(_, s)| *s)
        .fold(None, |a: Option<f64>, s| Some(a.map_or(s, |a| a.min(s))));
    match (max_wbc, min_ctc) {
        (Some(w), Some(c)) => Ok(0.5 * (w + c)),
        _ => Err(Error::NoCalibration),
    }
}

/// Labels each sample CTC when its band-mean normalized impedance exceeds
/// the threshold. Without an explicit threshold, the labeled samples are
/// used as the calibration set.
pub fn classify(
    samples: &[Sample],
    band_hz: (f64, f64),
    threshold: Option<f64>,
) -> Result<Vec<ClassificationResult>> {
    let stats = samples
        .iter()
        .map(|s| s.response.band_mean(band_hz.0, band_hz.1))
        .collect::<Result<Vec<f64>>>()?;
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let cal: Vec<(CellClass, f64)> = samples
                .iter()
                .zip(&stats)
                .filter_map(|(s, &v)| s.class.map(|c| (c, v)))
                .collect();
            calibrate_threshold(&cal)?
        }
    };
    Ok(samples
        .iter()
        .zip(stats)
        .map(|(s, statistic)| ClassificationResult {
            sample_id: s.id.clone(),
            species: s.species.clone(),
            statistic,
            threshold,
            label: if statistic > threshold {
                Label::Ctc
            } else {
                Label::Wbc
            },
        })
        .collect())
}
