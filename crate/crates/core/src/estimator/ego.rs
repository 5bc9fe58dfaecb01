//! Per-scan ego-velocity estimation from Doppler returns.

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::sensors::RadarScan;

pub const MAX_CONDITION_NUMBER: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EgoVelocityError {
    #[error("scan has {0} targets, at least 3 are required")]
    TooFewTargets(usize),
    #[error("target directions are degenerate (condition number {0:.3e})")]
    DegenerateGeometry(f64),
    #[error("only {0} inliers found, at least 3 are required")]
    TooFewInliers(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoVelocityFit {
    /// Sensor velocity in the sensor frame.
    pub v_s: Vec3,
    pub inlier_mask: Vec<bool>,
    pub residual_rms: f64,
}

impl EgoVelocityFit {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }

    pub fn inlier_fraction(&self) -> f64 {
        if self.inlier_mask.is_empty() {
            0.0
        } else {
            self.inlier_count() as f64 / self.inlier_mask.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RansacOptions {
    /// Absolute inlier threshold on the radial-velocity residual, m/s.
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl RansacOptions {
    /// Three-sigma threshold with a seed derived from the scan time.
    pub fn for_scan(scan: &RadarScan, sigma_vr: f64) -> Self {
        RansacOptions {
            threshold: 3.0 * sigma_vr,
            iterations: 100,
            seed: scan.t.to_bits(),
        }
    }
}

pub fn ego_velocity_lsq(scan: &RadarScan, sigma_vr: f64) -> Result<EgoVelocityFit, EgoVelocityError> {
    ego_velocity_ransac(scan, &RansacOptions::for_scan(scan, sigma_vr))
}

pub fn ego_velocity_ransac(
    scan: &RadarScan,
    opts: &RansacOptions,
) -> Result<EgoVelocityFit, EgoVelocityError> {
    let n = scan.targets.len();
    if n < 3 {
        return Err(EgoVelocityError::TooFewTargets(n));
    }
    let dirs: Vec<Vec3> = scan.targets.iter().map(|t| t.direction()).collect();
    let vr: Vec<f64> = scan.targets.iter().map(|t| t.radial_velocity).collect();
    let all: Vec<usize> = (0..n).collect();
    let cond = condition_number(&dirs, &all);
    if cond > MAX_CONDITION_NUMBER {
        return Err(EgoVelocityError::DegenerateGeometry(cond));
    }

    let residual = |v: &Vec3, i: usize| vr[i] + dirs[i].dot(v);
    let score = |v: &Vec3| {
        let mut count = 0usize;
        let mut sum = 0.0;
        for i in 0..n {
            let r = residual(v, i).abs();
            if r < opts.threshold {
                count += 1;
                sum += r;
            }
        }
        (count, sum)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec3, usize, f64)> = None;
    for _ in 0..opts.iterations {
        let idx = sample(&mut rng, n, 3);
        let (a, b, c) = (idx.index(0), idx.index(1), idx.index(2));
        let m = Matrix3::from_rows(&[dirs[a].transpose(), dirs[b].transpose(), dirs[c].transpose()]);
        if m.determinant().abs() < 1e-6 {
            continue;
        }
        let Some(v) = m.lu().solve(&-Vec3::new(vr[a], vr[b], vr[c])) else {
            continue;
        };
        let (count, sum) = score(&v);
        let better = match best {
            None => true,
            Some((_, bc, bs)) => count > bc || (count == bc && sum < bs),
        };
        if better {
            best = Some((v, count, sum));
        }
    }
    let Some((mut v, _, _)) = best else {
        return Err(EgoVelocityError::TooFewInliers(0));
    };

    let mut mask = vec![false; n];
    for _ in 0..3 {
        let inliers: Vec<usize> = (0..n).filter(|&i| residual(&v, i).abs() < opts.threshold).collect();
        if inliers.len() < 3 {
            return Err(EgoVelocityError::TooFewInliers(inliers.len()));
        }
        let cond = condition_number(&dirs, &inliers);
        if cond > MAX_CONDITION_NUMBER {
            return Err(EgoVelocityError::DegenerateGeometry(cond));
        }
        v = least_squares(&dirs, &vr, &inliers);
        let next: Vec<bool> = (0..n).map(|i| residual(&v, i).abs() < opts.threshold).collect();
        if next == mask {
            break;
        }
        mask = next;
    }
    let inliers: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if inliers.len() < 3 {
        return Err(EgoVelocityError::TooFewInliers(inliers.len()));
    }
    let ss: f64 = inliers.iter().map(|&i| residual(&v, i).powi(2)).sum();
    Ok(EgoVelocityFit {
        v_s: v,
        inlier_mask: mask,
        residual_rms: (ss / inliers.len() as f64).sqrt(),
    })
}

fn direction_matrix(dirs: &[Vec3], idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), 3, |r, c| dirs[idx[r]][c])
}

fn condition_number(dirs: &[Vec3], idx: &[usize]) -> f64 {
    let sv = direction_matrix(dirs, idx).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `−D v = v_r` over the selected targets.
fn least_squares(dirs: &[Vec3], vr: &[f64], idx: &[usize]) -> Vec3 {
    let d = direction_matrix(dirs, idx);
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| -vr[i]));
    let x = d
        .svd(true, true)
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(3));
    Vec3::new(x[0], x[1], x[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::RadarTarget;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn scan_for(v_s: &Vec3, angles: &[(f64, f64)]) -> RadarScan {
        RadarScan {
            t: 1.0,
            sensor_id: "front".into(),
            targets: angles
                .iter()
                .map(|&(az, el)| {
                    let mut t = RadarTarget {
                        range: 30.0,
                        radial_velocity: 0.0,
                        azimuth: az,
                        elevation: el,
                    };
                    t.radial_velocity = -t.direction().dot(v_s);
                    t
                })
                .collect(),
        }
    }

    fn spread(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let f = i as f64 / n as f64;
                (-1.0 + 2.0 * f, 0.25 * (7.0 * f).sin())
            })
            .collect()
    }

    #[test]
    fn noiseless_scan_is_exact() {
        let v = Vec3::new(10.0, 0.0, 0.0);
        let fit = ego_velocity_lsq(&scan_for(&v, &spread(40)), 0.1).unwrap();
        assert!((fit.v_s - v).norm() < 1e-9);
        assert_eq!(fit.inlier_count(), 40);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn identical_directions_are_degenerate() {
        let v = Vec3::new(5.0, 1.0, 0.0);
        let scan = scan_for(&v, &[(0.3, 0.1); 10]);
        assert!(matches!(
            ego_velocity_lsq(&scan, 0.1),
            Err(EgoVelocityError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn too_few_targets() {
        let scan = scan_for(&Vec3::x(), &[(0.0, 0.0), (0.5, 0.0)]);
        assert_eq!(ego_velocity_lsq(&scan, 0.1), Err(EgoVelocityError::TooFewTargets(2)));
    }

    #[test]
    fn outliers_are_rejected() {
        let v = Vec3::new(8.0, -1.0, 0.2);
        let mut scan = scan_for(&v, &spread(100));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut truth_inlier = vec![true; 100];
        for (i, t) in scan.targets.iter_mut().enumerate() {
            t.radial_velocity += noise.sample(&mut rng);
            if rng.random::<f64>() < 0.3 {
                t.radial_velocity += 5.0;
                truth_inlier[i] = false;
            }
        }
        let fit = ego_velocity_lsq(&scan, 0.1).unwrap();
        assert!((fit.v_s - v).norm() < 0.1);
        let recovered = truth_inlier
            .iter()
            .zip(&fit.inlier_mask)
            .filter(|(a, b)| **a && **b)
            .count();
        let total = truth_inlier.iter().filter(|a| **a).count();
        assert!(recovered as f64 >= 0.95 * total as f64);
    }

    #[test]
    fn same_seed_same_fit() {
        let v = Vec3::new(3.0, 2.0, 0.0);
        let mut scan = scan_for(&v, &spread(30));
        scan.targets[3].radial_velocity += 4.0;
        let a = ego_velocity_lsq(&scan, 0.1).unwrap();
        let b = ego_velocity_lsq(&scan, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(!a.inlier_mask[3]);
    }
}
