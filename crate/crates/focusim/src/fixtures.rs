//! Published design-study tables shipped as CSV and embedded in the binary.

use focusim_core::metrics::FocusingMetrics;
use focusim_core::sweep::{check_trends, SweepResult, SweepRow, TrendExpectation, TrendReport};
use serde::Deserialize;

use crate::error::CliError;

/// White blood cell properties: density range, diameter and share.
pub const TABLE2: &str = include_str!("../fixtures/table2.csv");
/// Sheath location sweep at V1 = 100, V2 = 500 um/s, Y = 150 um.
pub const TABLE4_X1: &str = include_str!("../fixtures/table4_x1.csv");
/// Main inlet velocity sweep at V2 = 1000 um/s, X1 = 5 mm.
pub const TABLE5_V1: &str = include_str!("../fixtures/table5_v1.csv");
/// Sheath velocity sweep at V1 = 500 um/s, X1 = 5 mm.
pub const TABLE6_V2: &str = include_str!("../fixtures/table6_v2.csv");
/// Channel width sweep at V1 = 500, V2 = 5000 um/s.
pub const TABLE7_Y: &str = include_str!("../fixtures/table7_y.csv");

/// Sweep tables by file name.
pub const SWEEP_TABLES: [(&str, &str); 4] = [
    ("table4_x1.csv", TABLE4_X1),
    ("table5_v1.csv", TABLE5_V1),
    ("table6_v2.csv", TABLE6_V2),
    ("table7_y.csv", TABLE7_Y),
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SpeciesRow {
    pub species: String,
    pub density_lo_g_per_ml: f64,
    pub density_hi_g_per_ml: f64,
    pub diameter_um: f64,
    pub diameter_std_um: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct SweepRecord {
    param_name: String,
    param_value: f64,
    dy_max_um: f64,
    dx_min_um: f64,
    #[serde(rename = "T_s")]
    t_s: f64,
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn bad(e: csv::Error) -> CliError {
    CliError::Validation(format!("fixture: {e}"))
}

pub fn species_table(text: &str) -> Result<Vec<SpeciesRow>, CliError> {
    reader(text).deserialize().map(|r| r.map_err(bad)).collect()
}

/// Parses a sweep table into a result with rows in ascending parameter
/// order.
pub fn sweep_table(text: &str) -> Result<SweepResult, CliError> {
    let recs: Vec<SweepRecord> = reader(text)
        .deserialize()
        .map(|r| r.map_err(bad))
        .collect::<Result<_, _>>()?;
    let parameter = match recs.first() {
        Some(r) => r.param_name.clone(),
        None => return Err(CliError::EmptyResults("fixture".into())),
    };
    if recs.iter().any(|r| r.param_name != parameter) {
        return Err(CliError::Validation(
            "fixture: mixed parameter names".into(),
        ));
    }
    let mut rows: Vec<SweepRow> = recs
        .iter()
        .map(|r| {
            SweepRow::ok(
                r.param_value,
                FocusingMetrics {
                    dy_max_um: r.dy_max_um,
                    dx_min_um: Some(r.dx_min_um),
                    t_s: r.t_s,
                },
            )
        })
        .collect();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(SweepResult { parameter, rows })
}

/// Checks every shipped sweep table against the default expectation of
/// its axis.
pub fn check_fixtures() -> Result<Vec<(&'static str, TrendReport)>, CliError> {
    SWEEP_TABLES
        .iter()
        .map(|(name, text)| {
            let result = sweep_table(text)?;
            let expect = TrendExpectation::for_axis(&result.parameter).ok_or_else(|| {
                CliError::Validation(format!("{name}: no expectation for {}", result.parameter))
            })?;
            Ok((*name, check_trends(&result, &expect)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use focusim_core::tracer::wbc_panel;

    #[test]
    fn species_table_matches_presets() {
        let rows = species_table(TABLE2).unwrap();
        let panel = wbc_panel();
        assert_eq!(rows.len(), panel.len());
        for (r, s) in rows.iter().zip(&panel) {
            assert_eq!(r.species, s.name);
            assert_eq!(
                (r.density_lo_g_per_ml, r.density_hi_g_per_ml),
                s.density_g_per_ml
            );
            assert_eq!(r.diameter_um, s.mean_diameter_um);
            assert_eq!(r.diameter_std_um, s.diameter_std_um);
            assert_eq!(r.fraction, s.fraction);
        }
    }

    #[test]
    fn width_table_is_sorted_ascending() {
        let r = sweep_table(TABLE7_Y).unwrap();
        let v: Vec<f64> = r.rows.iter().map(|r| r.value).collect();
        assert_eq!(v, [50.0, 100.0, 150.0]);
        assert_eq!(r.rows[0].metrics.unwrap().dx_min_um, Some(96.0));
    }

    #[test]
    fn sheath_velocity_table_has_six_rows() {
        assert_eq!(sweep_table(TABLE6_V2).unwrap().rows.len(), 6);
    }
}
