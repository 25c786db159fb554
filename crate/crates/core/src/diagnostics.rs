//! Sample-set diagnostics on `S^2`: hemisphere and polar masses,
//! longitude/latitude histograms, TV distance to the Gibbs law and
//! spherical-harmonic residual probes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mean_and_stderr, Physics};
use crate::oracle::GibbsOracle;
use crate::testfn::HarmonicProbe;

/// Bins of the exported histogram.
pub const HIST_LON_BINS: usize = 72;
pub const HIST_LAT_BINS: usize = 36;
/// Coarser bins used for the TV distance.
pub const TV_LON_BINS: usize = 36;
pub const TV_LAT_BINS: usize = 18;
pub const POLAR_Z: f64 = 0.8;

/// Longitude `atan2(y, x)` and latitude `asin(z)`, in degrees.
pub fn lon_lat(x: &[f64]) -> (f64, f64) {
    (x[1].atan2(x[0]).to_degrees(), x[2].clamp(-1.0, 1.0).asin().to_degrees())
}

/// Counts on a regular longitude/latitude grid, latitude-major from the south.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub n_lon: usize,
    pub n_lat: usize,
    pub counts: Vec<u64>,
    /// Solid angle of each bin in steradians, same layout as `counts`.
    pub solid_angles: Vec<f64>,
}

impl Histogram {
    pub fn new(points: &[Vec<f64>], n_lon: usize, n_lat: usize) -> Self {
        let mut counts = vec![0u64; n_lon * n_lat];
        for p in points {
            let (lon, lat) = lon_lat(p);
            let i = (((lon + 180.0) / 360.0 * n_lon as f64).floor() as usize).min(n_lon - 1);
            let j = (((lat + 90.0) / 180.0 * n_lat as f64).floor() as usize).min(n_lat - 1);
            counts[j * n_lon + i] += 1;
        }
        let dlon = 2.0 * PI / n_lon as f64;
        let lat_edge = |j: usize| -PI / 2.0 + PI * j as f64 / n_lat as f64;
        let mut solid_angles = Vec::with_capacity(n_lon * n_lat);
        for j in 0..n_lat {
            let a = dlon * (lat_edge(j + 1).sin() - lat_edge(j).sin());
            solid_angles.extend(std::iter::repeat_n(a, n_lon));
        }
        Histogram { n_lon, n_lat, counts, solid_angles }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Empirical density per steradian.
    pub fn densities(&self) -> Vec<f64> {
        self.probabilities().iter().zip(&self.solid_angles).map(|(p, a)| p / a).collect()
    }

    /// `lon_lo,lon_hi,lat_lo,lat_hi,count,solid_angle,density` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lon_lo,lon_hi,lat_lo,lat_hi,count,solid_angle,density\n");
        let (dl, dt) = (360.0 / self.n_lon as f64, 180.0 / self.n_lat as f64);
        let dens = self.densities();
        for j in 0..self.n_lat {
            for i in 0..self.n_lon {
                let k = j * self.n_lon + i;
                s.push_str(&format!(
                    "{},{},{},{},{},{:.16e},{:.16e}\n",
                    -180.0 + dl * i as f64,
                    -180.0 + dl * (i + 1) as f64,
                    -90.0 + dt * j as f64,
                    -90.0 + dt * (j + 1) as f64,
                    self.counts[k],
                    self.solid_angles[k],
                    dens[k]
                ));
            }
        }
        s
    }
}

/// `1/2 sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn tv_to_gibbs(points: &[Vec<f64>], oracle: &GibbsOracle) -> Result<f64> {
    let h = Histogram::new(points, TV_LON_BINS, TV_LAT_BINS);
    Ok(tv_distance(&h.probabilities(), &oracle.bin_masses(TV_LON_BINS, TV_LAT_BINS)?))
}

fn fraction(points: &[Vec<f64>], pred: impl Fn(&[f64]) -> bool) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().filter(|p| pred(p)).count() as f64 / points.len() as f64
}

pub fn hemisphere_mass_pos_x(points: &[Vec<f64>]) -> f64 {
    fraction(points, |p| p[0] > 0.0)
}

pub fn polar_mass(points: &[Vec<f64>], z: f64) -> f64 {
    fraction(points, |p| p[2].abs() > z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResidual {
    pub probe: String,
    pub degree: usize,
    pub residual: f64,
    pub stderr: f64,
}

/// `mean L f` over the samples for each degree-1 and degree-2 harmonic probe.
pub fn probe_residuals(points: &[Vec<f64>], physics: &Physics) -> Result<Vec<ProbeResidual>> {
    if points.len() < 2 {
        return Err(Error::Contract("probe residuals need at least two samples".into()));
    }
    Ok(HarmonicProbe::s2_set()
        .into_iter()
        .map(|probe| {
            let vals: Vec<f64> = points
                .iter()
                .map(|x| probe.kolmogorov(x, &physics.drift, &physics.geometry, physics.sigma))
                .collect();
            let (residual, stderr) = mean_and_stderr(&vals);
            ProbeResidual { probe: probe.label(), degree: probe.degree(), residual, stderr }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub sample_count: usize,
    pub hemisphere_mass_pos_x: f64,
    #[serde(rename = "polar_mass_absz_gt_0.8")]
    pub polar_mass_absz_gt_0_8: f64,
    pub tv_distance_to_gibbs: f64,
    pub tv_bins: [usize; 2],
    pub weak_residual_probe: Vec<ProbeResidual>,
    pub bin_histogram: Histogram,
}

fn check_s2(points: &[Vec<f64>], physics: &Physics) -> Result<()> {
    if physics.geometry.kind() != (crate::geometry::ManifoldKind::Sphere { n: 3 }) {
        return Err(Error::Unsupported("sample diagnostics are defined on S^2".into()));
    }
    if let Some(i) = points.iter().position(|p| !physics.geometry.on_manifold(p)) {
        return Err(Error::Contract(format!("sample {} is not on the unit sphere", i + 1)));
    }
    Ok(())
}

pub fn summarize(points: &[Vec<f64>], oracle: &GibbsOracle, physics: &Physics) -> Result<DiagnosticsSummary> {
    check_s2(points, physics)?;
    let probes = if points.len() >= 2 { probe_residuals(points, physics)? } else { Vec::new() };
    Ok(DiagnosticsSummary {
        sample_count: points.len(),
        hemisphere_mass_pos_x: hemisphere_mass_pos_x(points),
        polar_mass_absz_gt_0_8: polar_mass(points, POLAR_Z),
        tv_distance_to_gibbs: tv_to_gibbs(points, oracle)?,
        tv_bins: [TV_LON_BINS, TV_LAT_BINS],
        weak_residual_probe: probes,
        bin_histogram: Histogram::new(points, HIST_LON_BINS, HIST_LAT_BINS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldGeometry;
    use crate::testfn::DriftField;

    fn physics() -> Physics {
        Physics {
            geometry: ManifoldGeometry::sphere(3).unwrap(),
            drift: DriftField::DoubleWell { alpha: 4.0, beta: 2.0 },
            sigma: 0.5,
        }
    }

    #[test]
    fn lon_lat_conventions() {
        assert_eq!(lon_lat(&[1.0, 0.0, 0.0]), (0.0, 0.0));
        assert_eq!(lon_lat(&[-1.0, 0.0, 0.0]).0, 180.0);
        assert_eq!(lon_lat(&[0.0, 0.0, 1.0]).1, 90.0);
    }

    #[test]
    fn histogram_counts_and_solid_angles() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, -1.0]];
        let h = Histogram::new(&pts, 72, 36);
        assert_eq!(h.total(), 3);
        assert!((h.solid_angles.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        // lon = +180 lands in the last column, not past it.
        assert_eq!(h.counts[18 * 72 + 71], 1);
        assert_eq!(h.counts[18 * 72 + 36], 1);
        assert_eq!(h.counts[0..72].iter().sum::<u64>(), 1);
        assert_eq!(h.to_csv().lines().count(), 1 + 72 * 36);
    }

    #[test]
    fn point_mass_summary() {
        let ph = physics();
        let o = GibbsOracle::with_grid(ph.drift, ph.sigma, 72, 36).unwrap();
        let pts = vec![vec![1.0, 0.0, 0.0]; 10];
        let s = summarize(&pts, &o, &ph).unwrap();
        assert_eq!(s.hemisphere_mass_pos_x, 1.0);
        assert_eq!(s.polar_mass_absz_gt_0_8, 0.0);
        assert!(s.tv_distance_to_gibbs > 0.3);
        // At the well bottom every probe's generator is pure diffusion.
        let x = &s.weak_residual_probe[0];
        assert_eq!((x.probe.as_str(), x.degree), ("x", 1));
        assert!((x.residual + 0.25).abs() < 1e-15);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"polar_mass_absz_gt_0.8\""));
    }

    #[test]
    fn rejects_off_sphere_samples() {
        let ph = physics();
        let o = GibbsOracle::with_grid(ph.drift, ph.sigma, 72, 36).unwrap();
        assert!(summarize(&[vec![2.0, 0.0, 0.0]], &o, &ph).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
