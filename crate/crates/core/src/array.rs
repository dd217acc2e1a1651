//! Ground-truth narrowband far-field signal model for a uniform linear array:
//! steering vectors, snapshot synthesis, and the exact covariance.
//!
//! Conventions fixed here and consumed by every other module:
//! broadside is 0 degrees, element m responds with phase
//! `+i * 2*pi * spacing * m * sin(theta)`, and element 0 has unit response.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::recon::{CovarianceMatrix, CovarianceRole};
use crate::seed::rng_for;

/// Uniform linear array description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub spacing_wavelengths: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_elements < 2 {
            return Err(Error::Config(format!(
                "num_elements must be >= 2, got {num_elements}"
            )));
        }
        if !(spacing_wavelengths > 0.0) {
            return Err(Error::Config(format!(
                "spacing_wavelengths must be > 0, got {spacing_wavelengths}"
            )));
        }
        Ok(ArrayGeometry {
            num_elements,
            spacing_wavelengths,
        })
    }

    /// Half-wavelength ULA, the default front-end everywhere.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        ArrayGeometry::new(num_elements, 0.5)
    }
}

/// Far-field sources: angles, per-source powers, snapshot count.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScenario {
    pub angles_deg: Vec<f64>,
    pub powers: Vec<f64>,
    pub num_snapshots: usize,
}

impl SourceScenario {
    pub fn new(angles_deg: Vec<f64>, powers: Vec<f64>, num_snapshots: usize) -> Result<Self> {
        if angles_deg.len() != powers.len() {
            return Err(Error::Config(format!(
                "angles ({}) and powers ({}) must have equal length",
                angles_deg.len(),
                powers.len()
            )));
        }
        for &a in &angles_deg {
            if !(a > -90.0 && a < 90.0) {
                return Err(Error::Config(format!(
                    "source angle {a} deg must lie strictly inside (-90, 90)"
                )));
            }
        }
        for i in 0..angles_deg.len() {
            for j in i + 1..angles_deg.len() {
                if angles_deg[i] == angles_deg[j] {
                    return Err(Error::Config(format!(
                        "source angles must be pairwise distinct, {} repeats",
                        angles_deg[i]
                    )));
                }
            }
        }
        // Zero power is accepted (a muted source is useful in tests); negative is not.
        for &p in &powers {
            if !(p >= 0.0) {
                return Err(Error::Config(format!("source power {p} must be >= 0")));
            }
        }
        if num_snapshots == 0 {
            return Err(Error::Config("num_snapshots must be >= 1".into()));
        }
        Ok(SourceScenario {
            angles_deg,
            powers,
            num_snapshots,
        })
    }

    /// Equal-unit-power sources.
    pub fn unit_power(angles_deg: Vec<f64>, num_snapshots: usize) -> Result<Self> {
        let powers = vec![1.0; angles_deg.len()];
        SourceScenario::new(angles_deg, powers, num_snapshots)
    }

    pub fn num_sources(&self) -> usize {
        self.angles_deg.len()
    }
}

/// Per-antenna complex noise power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub variance: f64,
}

impl NoiseSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be > 0, got {variance}"
            )));
        }
        Ok(NoiseSpec { variance })
    }

    /// SNR convention used throughout: per-source unit power against
    /// `sigma^2 = 10^(-snr_db / 10)` per antenna element.
    pub fn from_snr_db(snr_db: f64) -> Self {
        NoiseSpec {
            variance: 10f64.powf(-snr_db / 10.0),
        }
    }
}

/// Which kind of observations a snapshot block holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotDomain {
    /// Rows are antenna elements (dimension M).
    Antenna,
    /// Rows are RF-chain outputs after analog combining (dimension L).
    RfChain,
}

/// A block of time snapshots, rows = channels, columns = time.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub data: Array2<Complex64>,
    pub domain: SnapshotDomain,
}

impl SnapshotMatrix {
    pub fn new(data: Array2<Complex64>, domain: SnapshotDomain) -> Result<Self> {
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("snapshot matrix has non-finite entries".into()));
        }
        Ok(SnapshotMatrix { data, domain })
    }

    pub fn num_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

/// Array response `a(theta)`: element m equals
/// `exp(i * 2*pi * spacing * m * sin(theta))`.
pub fn steering_vector(geometry: &ArrayGeometry, angle_deg: f64) -> Result<Array1<Complex64>> {
    if !(angle_deg > -90.0 && angle_deg < 90.0) {
        return Err(Error::Domain(format!(
            "steering angle {angle_deg} deg must lie strictly inside (-90, 90)"
        )));
    }
    let s = angle_deg.to_radians().sin();
    let step = 2.0 * std::f64::consts::PI * geometry.spacing_wavelengths * s;
    Ok(Array1::from_iter(
        (0..geometry.num_elements).map(|m| Complex64::from_polar(1.0, step * m as f64)),
    ))
}

/// The M x K matrix of steering vectors for the scenario's angles.
pub fn steering_matrix(geometry: &ArrayGeometry, angles_deg: &[f64]) -> Result<Array2<Complex64>> {
    let m = geometry.num_elements;
    let mut a = Array2::zeros((m, angles_deg.len()));
    for (k, &angle) in angles_deg.iter().enumerate() {
        let col = steering_vector(geometry, angle)?;
        for i in 0..m {
            a[(i, k)] = col[i];
        }
    }
    Ok(a)
}

/// Synthesizes `X = A(theta) S + W`: source rows are independent circular
/// complex Gaussians with the scenario powers, noise is i.i.d. circular
/// complex Gaussian with the given variance. Bit-reproducible for a seed.
pub fn generate_snapshots(
    geometry: &ArrayGeometry,
    scenario: &SourceScenario,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<SnapshotMatrix> {
    let m = geometry.num_elements;
    let n = scenario.num_snapshots;
    let k = scenario.num_sources();
    let a = steering_matrix(geometry, &scenario.angles_deg)?;
    let mut rng = rng_for(seed, &[]);

    // Fill order is fixed: source symbols row-major, then noise row-major.
    let mut sources = Array2::zeros((k, n));
    for src in 0..k {
        let amp = (scenario.powers[src] / 2.0).sqrt();
        for t in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            sources[(src, t)] = Complex64::new(amp * re, amp * im);
        }
    }
    let mut x = a.dot(&sources);
    let namp = (noise.variance / 2.0).sqrt();
    for i in 0..m {
        for t in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x[(i, t)] += Complex64::new(namp * re, namp * im);
        }
    }
    SnapshotMatrix::new(x, SnapshotDomain::Antenna)
}

/// Exact covariance `R = A diag(powers) A^H + sigma^2 I`.
pub fn true_covariance(
    geometry: &ArrayGeometry,
    scenario: &SourceScenario,
    noise: &NoiseSpec,
) -> Result<CovarianceMatrix> {
    let m = geometry.num_elements;
    let a = steering_matrix(geometry, &scenario.angles_deg)?;
    let mut r = Array2::zeros((m, m));
    for (k, &p) in scenario.powers.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                let upd = a[(i, k)] * a[(j, k)].conj() * p;
                r[(i, j)] += upd;
            }
        }
    }
    for i in 0..m {
        r[(i, i)] += Complex64::new(noise.variance, 0.0);
    }
    CovarianceMatrix::new(r, CovarianceRole::True)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn geom(m: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(m).unwrap()
    }

    #[test]
    fn steering_at_broadside_is_all_ones() {
        let a = steering_vector(&geom(4), 0.0).unwrap();
        for v in a.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_at_thirty_degrees() {
        // pi * sin(30 deg) = pi/2, so the second element is exactly i.
        let a = steering_vector(&geom(2), 30.0).unwrap();
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_near_endfire_approaches_minus_one() {
        let a = steering_vector(&geom(2), 90.0 - 1e-9).unwrap();
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn steering_rejects_out_of_range_angles() {
        assert!(steering_vector(&geom(4), 90.0).is_err());
        assert!(steering_vector(&geom(4), -90.0).is_err());
        assert!(steering_vector(&geom(4), 135.0).is_err());
    }

    #[test]
    fn steering_entries_have_unit_modulus() {
        use rand::Rng;
        let g = geom(8);
        let mut rng = crate::seed::rng_for(424242, &[]);
        for _ in 0..10_000 {
            let theta = rng.random::<f64>() * 179.98 - 89.99;
            let a = steering_vector(&g, theta).unwrap();
            for v in a.iter() {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snapshots_are_deterministic_per_seed() {
        let g = geom(4);
        let sc = SourceScenario::unit_power(vec![10.0, 60.0], 64).unwrap();
        let noise = NoiseSpec::new(0.5).unwrap();
        let x1 = generate_snapshots(&g, &sc, &noise, 99).unwrap();
        let x2 = generate_snapshots(&g, &sc, &noise, 99).unwrap();
        assert_eq!(x1.data, x2.data);
        let x3 = generate_snapshots(&g, &sc, &noise, 100).unwrap();
        assert_ne!(x1.data, x3.data);
    }

    #[test]
    fn zero_power_source_leaves_noise_only() {
        // Sample covariance converges to sigma^2 I (within 5% per entry at N = 1e5).
        let g = geom(3);
        let sc = SourceScenario::new(vec![20.0], vec![0.0], 100_000).unwrap();
        let sigma2 = 0.8;
        let noise = NoiseSpec::new(sigma2).unwrap();
        let x = generate_snapshots(&g, &sc, &noise, 7).unwrap();
        let r = crate::recon::sample_scm(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { sigma2 } else { 0.0 };
                let got = r.data[(i, j)];
                assert!(
                    (got - Complex64::new(target, 0.0)).norm() <= 0.05 * sigma2,
                    "entry ({i},{j}) = {got}"
                );
            }
        }
    }

    #[test]
    fn vanishing_noise_gives_rank_one_dominant_eigenvector() {
        let g = geom(4);
        let theta = 25.0;
        let sc = SourceScenario::unit_power(vec![theta], 20_000).unwrap();
        let noise = NoiseSpec::new(1e-9).unwrap();
        let x = generate_snapshots(&g, &sc, &noise, 3).unwrap();
        let r = crate::recon::sample_scm(&x).unwrap();
        // Independent eigen oracle (nalgebra) for the dominant eigenvector.
        let n = 4;
        let mut na = nalgebra::DMatrix::<nalgebra::Complex<f64>>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                na[(i, j)] = nalgebra::Complex::new(r.data[(i, j)].re, r.data[(i, j)].im);
            }
        }
        let se = na.symmetric_eigen();
        let top = (0..n)
            .max_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap())
            .unwrap();
        let a = steering_vector(&g, theta).unwrap();
        let mut inner = nalgebra::Complex::new(0.0, 0.0);
        for i in 0..n {
            inner += se.eigenvectors[(i, top)].conj()
                * nalgebra::Complex::new(a[i].re, a[i].im);
        }
        let ip = (inner.re * inner.re + inner.im * inner.im).sqrt();
        assert!(ip >= 0.999 * (n as f64).sqrt() * 1.0, "|<v, a>| = {ip}");
    }

    #[test]
    fn true_covariance_no_sources_is_noise_identity() {
        let g = geom(3);
        let sc = SourceScenario::new(vec![], vec![], 10).unwrap();
        let noise = NoiseSpec::new(0.7).unwrap();
        let r = true_covariance(&g, &sc, &noise).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 0.7 } else { 0.0 };
                assert!((r.data[(i, j)] - Complex64::new(target, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn true_covariance_single_broadside_source() {
        let g = ArrayGeometry::new(2, 0.5).unwrap();
        let sc = SourceScenario::unit_power(vec![0.0], 10).unwrap();
        let noise = NoiseSpec::new(1.0).unwrap();
        let r = true_covariance(&g, &sc, &noise).unwrap();
        let want = [[2.0, 1.0], [1.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.data[(i, j)] - Complex64::new(want[i][j], 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn true_covariance_matches_brute_force_oracle() {
        let g = geom(4);
        let sc = SourceScenario::unit_power(vec![10.0, 60.0], 10).unwrap();
        let noise = NoiseSpec::new(0.1).unwrap();
        let r = true_covariance(&g, &sc, &noise).unwrap();
        // Brute force by explicit summation, written independently.
        for i in 0..4 {
            for j in 0..4 {
                let mut want = if i == j {
                    Complex64::new(0.1, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                for &th in &[10.0f64, 60.0] {
                    let s = th.to_radians().sin();
                    let pi = std::f64::consts::PI;
                    let ai = Complex64::from_polar(1.0, pi * s * i as f64);
                    let aj = Complex64::from_polar(1.0, pi * s * j as f64);
                    want += ai * aj.conj();
                }
                assert!((r.data[(i, j)] - want).norm() < 1e-12);
            }
        }
        // Trace = M * sigma^2 + M * sum(powers)
        let tr: f64 = (0..4).map(|i| r.data[(i, i)].re).sum();
        assert!((tr - (4.0 * 0.1 + 4.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn true_covariance_is_hermitian_positive_definite() {
        let g = geom(6);
        let sc = SourceScenario::unit_power(vec![-35.0, 12.5, 71.0], 10).unwrap();
        let sigma2 = 0.3;
        let noise = NoiseSpec::new(sigma2).unwrap();
        let r = true_covariance(&g, &sc, &noise).unwrap();
        assert!(linalg::hermitian_defect(&r.data) <= 1e-12);
        let (lam, _) = linalg::hermitian_eig(&r.data);
        assert!(lam[0] >= sigma2 - 1e-10);
    }

    #[test]
    fn sample_covariance_converges_to_truth() {
        let g = geom(8);
        let sc = SourceScenario::new(vec![10.0, 60.0], vec![1.0, 1.0], 100_000).unwrap();
        let noise = NoiseSpec::new(1.0).unwrap();
        let x = generate_snapshots(&g, &sc, &noise, 2024).unwrap();
        let rhat = crate::recon::sample_scm(&x).unwrap();
        let rtrue = true_covariance(&g, &sc, &noise).unwrap();
        let diff = &rhat.data - &rtrue.data;
        assert!(linalg::frob(&diff) / linalg::frob(&rtrue.data) <= 0.05);
    }

    #[test]
    fn scenario_validation() {
        assert!(SourceScenario::new(vec![10.0, 10.0], vec![1.0, 1.0], 5).is_err());
        assert!(SourceScenario::new(vec![90.0], vec![1.0], 5).is_err());
        assert!(SourceScenario::new(vec![10.0], vec![-1.0], 5).is_err());
        assert!(SourceScenario::new(vec![10.0], vec![1.0, 2.0], 5).is_err());
        assert!(SourceScenario::new(vec![10.0], vec![1.0], 0).is_err());
        assert!(ArrayGeometry::new(1, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(NoiseSpec::new(0.0).is_err());
    }
}
