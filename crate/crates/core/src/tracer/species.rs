use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::impedance::DielectricMaterial;
use crate::{Error, Result};

/// Label used by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellClass {
    Wbc,
    Ctc,
}

/// Mechanical and dielectric description of a cell population.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpecies {
    pub name: String,
    pub class: CellClass,
    /// Density range (g/ml).
    pub density_g_per_ml: (f64, f64),
    pub mean_diameter_um: f64,
    pub diameter_std_um: f64,
    /// Population fraction; normalized over the list when sampling.
    pub fraction: f64,
    pub conductivity_s_per_m: f64,
    pub permittivity_rel: f64,
}

/// WBC dielectric defaults; not measured values, configuration only.
pub const WBC_CONDUCTIVITY_S_PER_M: f64 = 0.6;
pub const WBC_PERMITTIVITY_REL: f64 = 60.0;

impl CellSpecies {
    fn wbc(name: &str, density: (f64, f64), d: f64, sd: f64, fraction: f64) -> Self {
        CellSpecies {
            name: name.into(),
            class: CellClass::Wbc,
            density_g_per_ml: density,
            mean_diameter_um: d,
            diameter_std_um: sd,
            fraction,
            conductivity_s_per_m: WBC_CONDUCTIVITY_S_PER_M,
            permittivity_rel: WBC_PERMITTIVITY_REL,
        }
    }

    pub fn lymphocyte() -> Self {
        Self::wbc("lymphocyte", (1.073, 1.077), 6.58, 0.7, 0.33)
    }

    pub fn monocyte() -> Self {
        Self::wbc("monocyte", (1.067, 1.077), 9.26, 0.72, 0.05)
    }

    pub fn neutrophil() -> Self {
        Self::wbc("neutrophil", (1.085, 1.090), 9.42, 0.46, 0.62)
    }

    /// MCF-7: 18 um, 4 S/m, relative permittivity 50. Density and size
    /// spread are placeholders.
    pub fn mcf7() -> Self {
        CellSpecies {
            name: "mcf7".into(),
            class: CellClass::Ctc,
            density_g_per_ml: (1.068, 1.068),
            mean_diameter_um: 18.0,
            diameter_std_um: 0.0,
            fraction: 0.1,
            conductivity_s_per_m: 4.0,
            permittivity_rel: 50.0,
        }
    }

    /// MDA-MB-231 with placeholder properties; override from configuration.
    pub fn mda_mb_231() -> Self {
        CellSpecies {
            name: "mda-mb-231".into(),
            class: CellClass::Ctc,
            density_g_per_ml: (1.068, 1.068),
            mean_diameter_um: 15.0,
            diameter_std_um: 1.0,
            fraction: 0.0,
            conductivity_s_per_m: 1.2,
            permittivity_rel: 60.0,
        }
    }

    pub fn dielectric(&self) -> DielectricMaterial {
        DielectricMaterial {
            conductivity_s_per_m: self.conductivity_s_per_m,
            permittivity_rel: self.permittivity_rel,
        }
    }

    /// Largest diameter the truncated size distribution can produce.
    pub fn max_diameter_um(&self) -> f64 {
        self.mean_diameter_um + 3.0 * self.diameter_std_um
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(&self.name, what));
        if !(self.mean_diameter_um > 0.0 && self.mean_diameter_um.is_finite()) {
            return bad("mean diameter must be > 0");
        }
        if !(self.diameter_std_um >= 0.0) {
            return bad("diameter std must be >= 0");
        }
        if self.mean_diameter_um - 3.0 * self.diameter_std_um <= 0.0 {
            return bad("diameter distribution reaches zero");
        }
        let (lo, hi) = self.density_g_per_ml;
        if !(lo > 0.0 && lo <= hi) {
            return bad("density range must satisfy 0 < lo <= hi");
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return bad("fraction must be in [0, 1]");
        }
        if !(self.conductivity_s_per_m >= 0.0) {
            return bad("conductivity must be >= 0");
        }
        if !(self.permittivity_rel >= 1.0) {
            return bad("relative permittivity must be >= 1");
        }
        Ok(())
    }
}

/// Lymphocyte / monocyte / neutrophil at 33 / 5 / 62 %.
pub fn wbc_panel() -> Vec<CellSpecies> {
    vec![
        CellSpecies::lymphocyte(),
        CellSpecies::monocyte(),
        CellSpecies::neutrophil(),
    ]
}

/// WBC panel plus MCF-7 (fraction 0.1 before normalization).
pub fn default_population() -> Vec<CellSpecies> {
    let mut v = wbc_panel();
    v.push(CellSpecies::mcf7());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for s in default_population()
            .iter()
            .chain([&CellSpecies::mda_mb_231()])
        {
            s.validate().unwrap();
        }
        let fr: f64 = wbc_panel().iter().map(|s| s.fraction).sum();
        assert!((fr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_species_rejected() {
        let mut s = CellSpecies::lymphocyte();
        s.density_g_per_ml = (1.1, 1.0);
        assert!(s.validate().is_err());
        let mut s = CellSpecies::lymphocyte();
        s.permittivity_rel = 0.5;
        assert!(s.validate().is_err());
    }
}
