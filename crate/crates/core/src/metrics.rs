//! Focusing objectives computed from a set of trajectories sharing one clock.

use alloc::vec::Vec;

use crate::geometry::ChannelGeometry;
use crate::tracer::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusingMetrics {
    /// Largest centerline offset at the electrode, um.
    pub dy_max_um: f64,
    /// Smallest axial spacing at electrode passage, um. `None` when fewer
    /// than two particles reach the electrode.
    pub dx_min_um: Option<f64>,
    /// Median transit time from release to the electrode, s.
    pub t_s: f64,
}

/// Largest `|y(t_cross) - Y/2|` over particles that reached the electrode.
pub fn compute_dy_max(trajectories: &[Trajectory], geom: &ChannelGeometry) -> Result<f64> {
    let yc = geom.centerline_y_um();
    trajectories
        .iter()
        .filter_map(|t| t.crossing)
        .map(|c| libm::fabs(c.y_um - yc))
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |a| a.max(d)))
        })
        .ok_or(Error::NoCrossings)
}

/// At each crossing instant, the axial distance from the crossing particle
/// to the nearest other particle in the channel; minimized over crossings.
pub fn compute_dx_min(trajectories: &[Trajectory]) -> Option<f64> {
    let crossers: Vec<usize> = (0..trajectories.len())
        .filter(|&k| trajectories[k].crossing.is_some())
        .collect();
    if crossers.len() < 2 {
        return None;
    }
    let mut best: Option<f64> = None;
    for &i in &crossers {
        let t = trajectories[i].crossing.map(|c| c.t_s).unwrap_or_default();
        let Some(xi) = trajectories[i].position_at(t) else {
            continue;
        };
        for (j, other) in trajectories.iter().enumerate() {
            if j == i {
                continue;
            }
            if let Some(xj) = other.position_at(t) {
                let d = libm::fabs(xj.x - xi.x);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}

/// Median over crossing particles of `t_cross - release`.
pub fn compute_t(trajectories: &[Trajectory]) -> Result<f64> {
    let mut transit: Vec<f64> = trajectories
        .iter()
        .filter_map(|t| t.crossing.map(|c| c.t_s - t.release_time_s))
        .collect();
    if transit.is_empty() {
        return Err(Error::NoCrossings);
    }
    transit.sort_by(f64::total_cmp);
    let n = transit.len();
    Ok(if n % 2 == 1 {
        transit[n / 2]
    } else {
        0.5 * (transit[n / 2 - 1] + transit[n / 2])
    })
}

pub fn compute_metrics(
    trajectories: &[Trajectory],
    geom: &ChannelGeometry,
) -> Result<FocusingMetrics> {
    Ok(FocusingMetrics {
        dy_max_um: compute_dy_max(trajectories, geom)?,
        dx_min_um: compute_dx_min(trajectories),
        t_s: compute_t(trajectories)?,
    })
}
