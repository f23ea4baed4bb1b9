use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::species::CellSpecies;
use crate::geometry::ChannelGeometry;
use crate::{Error, Result, Vec2};

const ARRIVAL_STREAM: u64 = u64::MAX;
const SHUFFLE_STREAM: u64 = u64::MAX - 1;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReleaseMode {
    /// Everything released at t = 0.
    Batch,
    /// Exponential inter-arrival times with the given mean (s).
    Poisson { mean_interval_s: f64 },
}

/// How release heights are spread over the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Particle `k` of `n` at fraction `(k + 1/4) / n` of the band. The
    /// quarter offset keeps lanes from pairing up with their mirror images.
    Even,
    /// Independent uniform draws.
    #[default]
    Random,
}

/// Segment across the main inlet where particles are released.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseRegion {
    pub x_um: f64,
    pub y_lo_um: f64,
    pub y_hi_um: f64,
    pub mode: ReleaseMode,
    pub placement: Placement,
}

impl ReleaseRegion {
    /// Uniform across the main inlet, keeping every possible particle of the
    /// population one radius clear of both walls. The band is common to all
    /// species.
    pub fn main_inlet(
        geom: &ChannelGeometry,
        species: &[CellSpecies],
        mode: ReleaseMode,
        placement: Placement,
    ) -> Result<Self> {
        let margin = species
            .iter()
            .filter(|s| s.fraction > 0.0)
            .map(|s| 0.5 * s.max_diameter_um())
            .fold(0.0, f64::max);
        let y = geom.main_width_um();
        if 2.0 * margin >= y {
            return Err(Error::invalid(
                "species",
                "largest cell does not fit across the main channel",
            ));
        }
        Ok(ReleaseRegion {
            x_um: margin.max(1e-3 * y),
            y_lo_um: margin,
            y_hi_um: y - margin,
            mode,
            placement,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub id: usize,
    /// Index into the species list it was sampled from.
    pub species: usize,
    pub diameter_um: f64,
    pub density_kg_per_m3: f64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub release_time_s: f64,
}

/// Largest-remainder apportionment of `n` by normalized fractions.
fn apportion(fractions: &[f64], n: usize) -> Result<Vec<usize>> {
    let total: f64 = fractions.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("species", "fractions sum to zero"));
    }
    let quotas: Vec<f64> = fractions.iter().map(|f| f / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n - assigned) {
        counts[k] += 1;
    }
    Ok(counts)
}

/// Samples `n` particles. Species counts follow the largest-remainder
/// apportionment; per-particle draws come from a substream keyed by the
/// particle index, so particle `k` keeps its release position across runs
/// that share `seed`.
pub fn sample_population(
    species: &[CellSpecies],
    n: usize,
    seed: u64,
    region: &ReleaseRegion,
) -> Result<Vec<Particle>> {
    if species.is_empty() {
        return Err(Error::EmptySpeciesList);
    }
    if n == 0 {
        return Err(Error::invalid("particles", "count must be > 0"));
    }
    for s in species {
        s.validate()?;
    }
    if !(region.y_hi_um >= region.y_lo_um) {
        return Err(Error::invalid("release", "empty release band"));
    }
    let fractions: Vec<f64> = species.iter().map(|s| s.fraction).collect();
    let counts = apportion(&fractions, n)?;
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| core::iter::repeat_n(k, c))
        .collect();
    let mut shuffle = substream(seed, SHUFFLE_STREAM);
    for i in (1..labels.len()).rev() {
        let j = shuffle.random_range(0..=i);
        labels.swap(i, j);
    }

    let mut arrivals = substream(seed, ARRIVAL_STREAM);
    let exp = match region.mode {
        ReleaseMode::Batch => None,
        ReleaseMode::Poisson { mean_interval_s } => {
            if !(mean_interval_s > 0.0) {
                return Err(Error::invalid("mean_interval_s", "must be > 0"));
            }
            Some(
                Exp::new(1.0 / mean_interval_s)
                    .map_err(|_| Error::invalid("mean_interval_s", "invalid rate"))?,
            )
        }
    };
    let mut clock = 0.0;

    let mut out = Vec::with_capacity(n);
    for (id, &k) in labels.iter().enumerate() {
        let s = &species[k];
        let mut rng = substream(seed, id as u64);
        let mut u: f64 = rng.random();
        if region.placement == Placement::Even {
            u = (id as f64 + 0.25) / n as f64;
        }
        let y = region.y_lo_um + u * (region.y_hi_um - region.y_lo_um);
        let (lo, hi) = s.density_g_per_ml;
        let rho = 1000.0 * (lo + rng.random::<f64>() * (hi - lo));
        let d = if s.diameter_std_um > 0.0 {
            let normal = Normal::new(s.mean_diameter_um, s.diameter_std_um)
                .map_err(|_| Error::invalid(&s.name, "bad diameter distribution"))?;
            loop {
                let d: f64 = normal.sample(&mut rng);
                if libm::fabs(d - s.mean_diameter_um) <= 3.0 * s.diameter_std_um {
                    break d;
                }
            }
        } else {
            s.mean_diameter_um
        };
        let release = match exp {
            None => 0.0,
            Some(e) => {
                let t = clock;
                clock += e.sample(&mut arrivals);
                t
            }
        };
        out.push(Particle {
            id,
            species: k,
            diameter_um: d,
            density_kg_per_m3: rho,
            position: Vec2::new(region.x_um, y),
            velocity: Vec2::ZERO,
            release_time_s: release,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracer::species::{wbc_panel, CellSpecies};

    fn region() -> ReleaseRegion {
        ReleaseRegion {
            x_um: 5.0,
            y_lo_um: 5.0,
            y_hi_um: 45.0,
            mode: ReleaseMode::Batch,
            placement: Placement::Random,
        }
    }

    #[test]
    fn wbc_counts_follow_fractions() {
        let ps = sample_population(&wbc_panel(), 100, 1, &region()).unwrap();
        let count = |k| ps.iter().filter(|p| p.species == k).count();
        assert_eq!((count(0), count(1), count(2)), (33, 5, 62));
    }

    #[test]
    fn largest_remainder_breaks_ties_by_order() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 4).unwrap(), [2, 1, 1]);
        assert_eq!(apportion(&[0.33, 0.05, 0.62], 7).unwrap(), [2, 1, 4]);
    }

    #[test]
    fn zero_spread_gives_mean_diameter() {
        let mut s = CellSpecies::lymphocyte();
        s.diameter_std_um = 0.0;
        let ps = sample_population(&[s], 20, 9, &region()).unwrap();
        assert!(ps.iter().all(|p| p.diameter_um == 6.58));
    }

    #[test]
    fn sampling_is_reproducible_and_bounded() {
        let a = sample_population(&wbc_panel(), 50, 42, &region()).unwrap();
        let b = sample_population(&wbc_panel(), 50, 42, &region()).unwrap();
        assert_eq!(a, b);
        let c = sample_population(&wbc_panel(), 50, 43, &region()).unwrap();
        assert_ne!(a, c);
        let panel = wbc_panel();
        for p in &a {
            let s = &panel[p.species];
            assert!((p.diameter_um - s.mean_diameter_um).abs() <= 3.0 * s.diameter_std_um);
            let (lo, hi) = s.density_g_per_ml;
            assert!(p.density_kg_per_m3 >= 1000.0 * lo && p.density_kg_per_m3 <= 1000.0 * hi);
            assert!(p.position.y >= 5.0 && p.position.y <= 45.0);
        }
    }

    #[test]
    fn empty_species_list_is_an_error() {
        assert_eq!(
            sample_population(&[], 10, 1, &region()),
            Err(Error::EmptySpeciesList)
        );
    }

    #[test]
    fn poisson_release_times_increase() {
        let mut r = region();
        r.mode = ReleaseMode::Poisson {
            mean_interval_s: 0.5,
        };
        let ps = sample_population(&wbc_panel(), 30, 3, &r).unwrap();
        assert_eq!(ps[0].release_time_s, 0.0);
        for w in ps.windows(2) {
            assert!(w[1].release_time_s > w[0].release_time_s);
        }
    }
}
