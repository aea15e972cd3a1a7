//! Angle parametrization of the factor covariance Σ = BBᵀ + D².
//!
//! The angle vector κ (length J(p+1) − 1) maps to a unit vector
//! v ∈ ℝ^{J(p+1)} by the hyperspherical recursion
//! v₁ = cos κ₁, v_k = cos κ_k ∏_{j<k} sin κ_j, v_last = ∏_j sin κ_j.
//! The first Jp entries fill B column-major and the last J entries give the
//! diagonal of D (absolute values), so trace(Σ) = ‖v‖² = 1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};

/// Shape of a multinomial probit model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnpSpec {
    /// Alternatives besides the base category (J).
    pub alternatives: usize,
    /// Number of factors (p).
    pub factors: usize,
    /// Number of regressors (r).
    pub regressors: usize,
}

impl MnpSpec {
    pub fn new(alternatives: usize, factors: usize, regressors: usize) -> Result<Self> {
        let spec = Self {
            alternatives,
            factors,
            regressors,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alternatives == 0 {
            return Err(HulaError::InvalidInput("need at least one non-base alternative".into()));
        }
        if self.factors == 0 || self.factors > self.alternatives {
            return Err(HulaError::InvalidInput(format!(
                "factor count {} must lie in [1, {}]",
                self.factors, self.alternatives
            )));
        }
        if self.regressors == 0 {
            return Err(HulaError::InvalidInput("need at least one regressor".into()));
        }
        Ok(())
    }

    /// Length of κ.
    pub fn angle_dim(&self) -> usize {
        self.alternatives * (self.factors + 1) - 1
    }

    /// Length of θ = (β, κ).
    pub fn theta_dim(&self) -> usize {
        self.regressors + self.angle_dim()
    }
}

/// Σ = BBᵀ + diag(D)² with its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCovariance {
    /// J×p loadings.
    pub b: DMatrix<f64>,
    pub d_diag: Vec<f64>,
    pub sigma: DMatrix<f64>,
}

/// Unit vector v(κ).
pub fn unit_vector(kappa: &[f64]) -> Vec<f64> {
    let d = kappa.len();
    let mut v = Vec::with_capacity(d + 1);
    let mut sin_prod = 1.0;
    for &k in kappa {
        v.push(k.cos() * sin_prod);
        sin_prod *= k.sin();
    }
    v.push(sin_prod);
    v
}

/// ∂v/∂κ as a (d+1)×d row-major matrix.
pub fn unit_vector_jacobian(kappa: &[f64]) -> DMatrix<f64> {
    let d = kappa.len();
    let (sin, cos): (Vec<f64>, Vec<f64>) = kappa.iter().map(|k| k.sin_cos()).unzip();
    let mut jac = DMatrix::zeros(d + 1, d);
    for k in 0..=d {
        for m in 0..d.min(k + 1) {
            // v_k = f_k(κ_k) ∏_{j<k} sin κ_j with f_k = cos for k < d, 1 for k = d.
            let mut prod = if m == k {
                -sin[k]
            } else if k < d {
                cos[k]
            } else {
                1.0
            };
            for j in 0..k {
                prod *= if j == m { cos[j] } else { sin[j] };
            }
            jac[(k, m)] = prod;
        }
    }
    jac
}

/// Canonical angles of a non-zero vector: κ_k ∈ [0, π] for all but the last
/// angle, which lies in [0, 2π). `unit_vector` of the result equals v/‖v‖.
pub fn angles_from_vector(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 2, "need at least two coordinates");
    let mut tail_sq: Vec<f64> = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail_sq[k] = tail_sq[k + 1] + v[k] * v[k];
    }
    let mut kappa = Vec::with_capacity(n - 1);
    for k in 0..n - 2 {
        kappa.push(tail_sq[k + 1].sqrt().atan2(v[k]));
    }
    let last = v[n - 1].atan2(v[n - 2]);
    kappa.push(if last < 0.0 { last + std::f64::consts::TAU } else { last });
    kappa
}

/// Maps κ to the canonical angle domain while leaving v(κ), and hence Σ(κ),
/// unchanged.
pub fn canonical_angles(kappa: &[f64]) -> Vec<f64> {
    angles_from_vector(&unit_vector(kappa))
}

/// Builds Σ(κ).
pub fn sigma_from_angles(kappa: &[f64], spec: &MnpSpec) -> Result<FactorCovariance> {
    if kappa.len() != spec.angle_dim() {
        return Err(HulaError::DimensionMismatch {
            expected: spec.angle_dim(),
            got: kappa.len(),
        });
    }
    Ok(covariance_from_unit_vector(&unit_vector(kappa), spec))
}

pub(crate) fn covariance_from_unit_vector(v: &[f64], spec: &MnpSpec) -> FactorCovariance {
    let (j, p) = (spec.alternatives, spec.factors);
    let b = DMatrix::from_column_slice(j, p, &v[..j * p]);
    let d_diag: Vec<f64> = v[j * p..].iter().map(|x| x.abs()).collect();
    let mut sigma = &b * b.transpose();
    for (i, d) in d_diag.iter().enumerate() {
        sigma[(i, i)] += d * d;
    }
    FactorCovariance { b, d_diag, sigma }
}

/// Equicorrelated matrix ½(I + ιιᵀ) of size J.
pub fn equicorrelated(j: usize) -> DMatrix<f64> {
    DMatrix::from_fn(j, j, |a, b| if a == b { 1.0 } else { 0.5 })
}

/// Angles κ_equi with Σ(κ_equi) = ½(I + ιιᵀ)/J, the unit-trace rescaling of
/// the equicorrelated matrix: the first loading column and D are both
/// ι/√(2J), remaining loadings are zero.
pub fn equicorrelated_angles(spec: &MnpSpec) -> Vec<f64> {
    let (j, p) = (spec.alternatives, spec.factors);
    let c = (2.0 * j as f64).sqrt().recip();
    let mut v = vec![0.0; j * (p + 1)];
    v[..j].fill(c);
    v[j * p..].fill(c);
    angles_from_vector(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_kappa(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-2.0 * PI..2.0 * PI)).collect()
    }

    #[test]
    fn trace_is_one() {
        let spec = MnpSpec::new(4, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let cov = sigma_from_angles(&random_kappa(&mut rng, spec.angle_dim()), &spec).unwrap();
            assert!((cov.sigma.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_loadings_give_scaled_identity() {
        // v = (0,…,0, J^{-1/2},…,J^{-1/2}): the first Jp angles are π/2 except
        // for the ones inside the D block.
        let spec = MnpSpec::new(3, 1, 2).unwrap();
        let jj = spec.alternatives;
        let mut v = vec![0.0; jj * (spec.factors + 1)];
        v[jj * spec.factors..].fill((jj as f64).sqrt().recip());
        let kappa = angles_from_vector(&v);
        for k in &kappa[..jj * spec.factors] {
            assert!((k - PI / 2.0).abs() < 1e-15);
        }
        let cov = sigma_from_angles(&kappa, &spec).unwrap();
        let target = DMatrix::<f64>::identity(jj, jj) / jj as f64;
        assert!((cov.sigma - target).amax() < 1e-15);
        assert!(cov.b.amax() < 1e-15);
    }

    #[test]
    fn random_angles_give_spd_sigma() {
        let spec = MnpSpec::new(3, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let cov = sigma_from_angles(&random_kappa(&mut rng, spec.angle_dim()), &spec).unwrap();
            assert_eq!(cov.sigma, cov.sigma.transpose());
            if cov.d_diag.iter().all(|d| *d > 0.0) {
                assert!(cov.sigma.clone().cholesky().is_some());
            }
        }
    }

    #[test]
    fn angles_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let kappa = random_kappa(&mut rng, 5);
            let canon = canonical_angles(&kappa);
            for (k, c) in canon.iter().enumerate() {
                if k + 1 < canon.len() {
                    assert!((0.0..=PI).contains(c));
                } else {
                    assert!((0.0..2.0 * PI).contains(c));
                }
            }
            let (a, b) = (unit_vector(&kappa), unit_vector(&canon));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kappa = random_kappa(&mut rng, 6);
        let jac = unit_vector_jacobian(&kappa);
        let h = 1e-6;
        for m in 0..kappa.len() {
            let mut up = kappa.clone();
            let mut dn = kappa.clone();
            up[m] += h;
            dn[m] -= h;
            let (vu, vd) = (unit_vector(&up), unit_vector(&dn));
            for k in 0..vu.len() {
                let fd = (vu[k] - vd[k]) / (2.0 * h);
                assert!((fd - jac[(k, m)]).abs() < 1e-8, "({k},{m}) {fd} vs {}", jac[(k, m)]);
            }
        }
    }

    #[test]
    fn equicorrelated_angles_hit_target() {
        for (j, p) in [(1, 1), (2, 1), (3, 1), (3, 2), (5, 3)] {
            let spec = MnpSpec::new(j, p, 1).unwrap();
            let cov = sigma_from_angles(&equicorrelated_angles(&spec), &spec).unwrap();
            let target = equicorrelated(j) / j as f64;
            assert!((cov.sigma - target).amax() < 1e-14);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MnpSpec::new(0, 1, 1).is_err());
        assert!(MnpSpec::new(2, 3, 1).is_err());
        assert!(MnpSpec::new(2, 0, 1).is_err());
        assert!(MnpSpec::new(2, 1, 0).is_err());
        let spec = MnpSpec::new(9, 1, 10).unwrap();
        assert_eq!(spec.angle_dim(), 17);
        assert_eq!(spec.theta_dim(), 27);
    }

    #[test]
    fn wrong_angle_length() {
        let spec = MnpSpec::new(3, 1, 2).unwrap();
        assert!(sigma_from_angles(&[0.1; 4], &spec).is_err());
    }
}
