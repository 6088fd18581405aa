//! Control-perturbation sampling.
//!
//! Uniform points come from a Halton sequence (or a seeded pseudorandom stream),
//! are mapped to standard normals with the inverse normal CDF, smoothed along
//! the horizon in normal space, and only then scaled by the policy's mean and
//! standard deviation. Smoothing before the affine transform keeps the
//! smoothing independent of the current covariance.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

/// First 32 primes; one Halton base per dimension.
pub const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Halton,
    Pseudorandom,
}

/// `N` blocks of `K×d` uniform values in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSampleSet {
    pub values: Vec<DMatrix<f64>>,
    pub generator: Generator,
}

/// Radical inverse `φ_b(i)`: the base-`b` digits of `i` mirrored behind the radix point.
///
/// Computed as an exact integer fraction and divided once, so small cases equal
/// their hand-written fractions bit for bit.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut numerator: u64 = 0;
    let mut denominator: u64 = 1;
    while index > 0 {
        let digit = index % base;
        index /= base;
        match denominator.checked_mul(base).and_then(|d| {
            numerator.checked_mul(base).and_then(|n| n.checked_add(digit)).map(|n| (n, d))
        }) {
            Some((n, d)) => {
                numerator = n;
                denominator = d;
            }
            None => {
                // Remaining digits are below f64 resolution relative to the prefix.
                break;
            }
        }
    }
    numerator as f64 / denominator as f64
}

/// `count` Halton points in `dims` dimensions, starting at sequence index 1.
pub fn halton_points(count: usize, dims: usize) -> Result<DMatrix<f64>> {
    halton_points_from(1, count, dims)
}

/// Halton points for indices `start..start + count`.
pub fn halton_points_from(start: u64, count: usize, dims: usize) -> Result<DMatrix<f64>> {
    if dims > PRIMES.len() {
        return Err(Error::Config(format!(
            "Halton sequence supports at most {} dimensions, requested {dims}",
            PRIMES.len()
        )));
    }
    if count == 0 {
        return Err(Error::Config("Halton point count must be positive".into()));
    }
    Ok(DMatrix::from_fn(count, dims, |i, j| radical_inverse(start + i as u64, PRIMES[j])))
}

/// Uniform samples for `particles × knots × dims`.
///
/// Halton points are laid out knot-major: point `k·N + n` feeds knot `k` of
/// particle `n`, so each knot sees a contiguous, evenly spread block of the
/// sequence. `offset` skips that many leading points.
pub fn unit_samples<R: Rng + ?Sized>(
    generator: Generator,
    particles: usize,
    knots: usize,
    dims: usize,
    offset: u64,
    rng: &mut R,
) -> Result<UnitSampleSet> {
    let values = match generator {
        Generator::Halton => {
            let pts = halton_points_from(1 + offset, particles * knots, dims)?;
            let pairing: Vec<Vec<usize>> = (0..knots)
                .map(|_| {
                    let mut p: Vec<usize> = (0..particles).collect();
                    p.shuffle(rng);
                    p
                })
                .collect();
            (0..particles)
                .map(|n| DMatrix::from_fn(knots, dims, |k, j| pts[(k * particles + pairing[k][n], j)]))
                .collect()
        }
        Generator::Pseudorandom => (0..particles)
            .map(|_| DMatrix::from_fn(knots, dims, |_, _| rng.random::<f64>()))
            .collect(),
    };
    Ok(UnitSampleSet { values, generator })
}

/// Standard-normal quantile of every entry. Zero is clamped to the smallest
/// positive double first.
pub fn gaussianize(unit: &UnitSampleSet) -> Vec<DMatrix<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    unit.values
        .iter()
        .map(|m| m.map(|p| normal.inverse_cdf(p.max(f64::MIN_POSITIVE))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    #[default]
    Bspline,
    Comb,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub mode: SmoothingMode,
    pub spline_degree: usize,
    pub comb_coeffs: [f64; 3],
    /// Control points per horizon for B-spline mode; `0` picks the default.
    pub knots_per_horizon: usize,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec {
            mode: SmoothingMode::Bspline,
            spline_degree: 3,
            comb_coeffs: [0.5, 0.3, 0.2],
            knots_per_horizon: 0,
        }
    }
}

impl SmoothingSpec {
    /// Number of knot values each sequence needs for a horizon of `horizon` steps.
    pub fn knots_for(&self, horizon: usize) -> usize {
        match self.mode {
            SmoothingMode::Bspline if self.knots_per_horizon > 0 => self.knots_per_horizon,
            SmoothingMode::Bspline => (self.spline_degree + 1).max(horizon.div_ceil(6)),
            SmoothingMode::Comb | SmoothingMode::None => horizon,
        }
    }
}

/// `H×K` matrix of clamped uniform B-spline basis values at `H` equally
/// spaced parameters in `[0, 1]`.
pub fn bspline_basis(knots: usize, degree: usize, horizon: usize) -> Result<DMatrix<f64>> {
    if degree < 1 {
        return Err(Error::Config("spline degree must be at least 1".into()));
    }
    if knots < degree + 1 {
        return Err(Error::Config(format!(
            "{knots} control points are too few for a degree-{degree} spline"
        )));
    }
    if horizon < 2 {
        return Err(Error::Config("horizon must be at least 2".into()));
    }
    let interior = knots - degree;
    let mut t = Vec::with_capacity(knots + degree + 1);
    t.extend(std::iter::repeat_n(0.0, degree + 1));
    t.extend((1..interior).map(|j| j as f64 / interior as f64));
    t.extend(std::iter::repeat_n(1.0, degree + 1));

    let mut basis = DMatrix::zeros(horizon, knots);
    for h in 0..horizon {
        let u = h as f64 / (horizon - 1) as f64;
        if h == horizon - 1 {
            basis[(h, knots - 1)] = 1.0;
            continue;
        }
        // span index s with t[s] <= u < t[s+1]
        let s = (degree..knots).rev().find(|&s| t[s] <= u).unwrap_or(degree);
        // Cox–de Boor, triangular table
        let mut n = vec![0.0; degree + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; degree + 1];
        let mut right = vec![0.0; degree + 1];
        for j in 1..=degree {
            left[j] = u - t[s + 1 - j];
            right[j] = t[s + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        for (r, v) in n.into_iter().enumerate() {
            basis[(h, s - degree + r)] = v;
        }
    }
    Ok(basis)
}

/// Turns `K×d` knot values into `H×d` sequences according to `spec`.
pub fn smooth_sequences(
    knot_values: &[DMatrix<f64>],
    spec: &SmoothingSpec,
    horizon: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let expected = spec.knots_for(horizon);
    if let Some(bad) = knot_values.iter().find(|m| m.nrows() != expected) {
        return Err(Error::Config(format!(
            "{:?} smoothing over {horizon} steps needs {expected} knots, got {}",
            spec.mode,
            bad.nrows()
        )));
    }
    match spec.mode {
        SmoothingMode::None => Ok(knot_values.to_vec()),
        SmoothingMode::Bspline => {
            let basis = bspline_basis(expected, spec.spline_degree, horizon)?;
            Ok(knot_values.iter().map(|k| &basis * k).collect())
        }
        SmoothingMode::Comb => {
            let [c1, c2, c3] = spec.comb_coeffs;
            Ok(knot_values
                .iter()
                .map(|u| {
                    DMatrix::from_fn(u.nrows(), u.ncols(), |h, j| {
                        let prev1 = if h >= 1 { u[(h - 1, j)] } else { 0.0 };
                        let prev2 = if h >= 2 { u[(h - 2, j)] } else { 0.0 };
                        c1 * u[(h, j)] + c2 * prev1 + c3 * prev2
                    })
                })
                .collect())
        }
    }
}

/// `N` sampled `H×d` joint-acceleration sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBatch {
    pub controls: Vec<DMatrix<f64>>,
    /// Leading sequences that are exactly zero.
    pub null_count: usize,
}

impl ControlBatch {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }
}

/// Maps perturbations through the policy: `μ_h + σ_h ⊙ ε_{n,h}`.
///
/// The first `null_count` sequences are zero. When `include_mean` is set, the
/// next sequence is the policy mean itself so the incumbent is always scored.
pub fn build_control_batch(
    perturbations: &[DMatrix<f64>],
    policy: &PolicyParams,
    null_count: usize,
    include_mean: bool,
) -> Result<ControlBatch> {
    let n = perturbations.len();
    let reserved = null_count + usize::from(include_mean);
    if null_count >= n || reserved > n {
        return Err(Error::Config(format!(
            "{reserved} reserved sequences leave no room in a batch of {n}"
        )));
    }
    let (h, d) = policy.means.shape();
    if let Some(bad) = perturbations.iter().find(|p| p.shape() != (h, d)) {
        return Err(Error::Contract(format!(
            "perturbation shape {:?} does not match policy {h}x{d}",
            bad.shape()
        )));
    }
    if policy.variances.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Policy("covariance entries must be positive".into()));
    }
    let std = policy.variances.map(f64::sqrt);
    let controls = perturbations
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            if i < null_count {
                DMatrix::zeros(h, d)
            } else if include_mean && i == null_count {
                policy.means.clone()
            } else {
                &policy.means + std.component_mul(eps)
            }
        })
        .collect();
    Ok(ControlBatch {
        controls,
        null_count,
    })
}

/// Sampling section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub mode: SmoothingMode,
    pub degree: usize,
    /// B-spline control points per horizon; `0` picks the default.
    pub knots: usize,
    pub null_count: usize,
    pub generator: Generator,
    pub comb_coeffs: [f64; 3],
    /// Score the unperturbed policy mean as one of the particles.
    pub include_mean: bool,
    /// Leading Halton points to skip; also mixed with the episode seed.
    pub halton_offset: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = SmoothingSpec::default();
        SamplingConfig {
            mode: s.mode,
            degree: s.spline_degree,
            knots: 0,
            null_count: 2,
            generator: Generator::Halton,
            comb_coeffs: s.comb_coeffs,
            include_mean: true,
            halton_offset: 0,
        }
    }
}

impl SamplingConfig {
    pub fn smoothing(&self) -> SmoothingSpec {
        SmoothingSpec {
            mode: self.mode,
            spline_degree: self.degree,
            comb_coeffs: self.comb_coeffs,
            knots_per_horizon: self.knots,
        }
    }
}

/// Produces smoothed standard-normal perturbations for each optimization
/// iteration. Halton perturbations are generated once and reused; pseudorandom
/// ones are redrawn every call from a seeded stream.
#[derive(Debug, Clone)]
pub struct ControlSampler {
    config: SamplingConfig,
    particles: usize,
    horizon: usize,
    dof: usize,
    rng: ChaCha8Rng,
    halton_offset: u64,
    cached: Option<Vec<DMatrix<f64>>>,
}

impl ControlSampler {
    pub fn new(config: SamplingConfig, particles: usize, horizon: usize, dof: usize, seed: u64) -> Result<Self> {
        let spec = config.smoothing();
        if spec.mode == SmoothingMode::Bspline {
            bspline_basis(spec.knots_for(horizon), spec.spline_degree, horizon)?;
        }
        if dof > PRIMES.len() {
            return Err(Error::Config(format!("{dof} joints exceed the Halton prime table")));
        }
        if config.null_count + usize::from(config.include_mean) >= particles {
            return Err(Error::Config(format!(
                "null_count {} leaves no sampled particles out of {particles}",
                config.null_count
            )));
        }
        let knots = spec.knots_for(horizon) as u64;
        Ok(ControlSampler {
            halton_offset: config.halton_offset + seed * particles as u64 * knots,
            config,
            particles,
            horizon,
            dof,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cached: None,
        })
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    fn draw(&mut self) -> Result<Vec<DMatrix<f64>>> {
        let spec = self.config.smoothing();
        let knots = spec.knots_for(self.horizon);
        let unit = unit_samples(
            self.config.generator,
            self.particles,
            knots,
            self.dof,
            self.halton_offset,
            &mut self.rng,
        )?;
        smooth_sequences(&gaussianize(&unit), &spec, self.horizon)
    }

    /// Smoothed standard-normal perturbations, `N` blocks of `H×d`.
    pub fn perturbations(&mut self) -> Result<Vec<DMatrix<f64>>> {
        match self.config.generator {
            Generator::Halton => {
                if self.cached.is_none() {
                    self.cached = Some(self.draw()?);
                }
                Ok(self.cached.clone().unwrap())
            }
            Generator::Pseudorandom => self.draw(),
        }
    }

    pub fn sample(&mut self, policy: &PolicyParams) -> Result<ControlBatch> {
        let eps = self.perturbations()?;
        build_control_batch(&eps, policy, self.config.null_count, self.config.include_mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{CovarianceMode, PolicyParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn halton_base_two() {
        let p = halton_points(3, 1).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.25, 0.75]);
    }

    #[test]
    fn halton_two_dims() {
        let p = halton_points(2, 2).unwrap();
        assert_eq!(p[(0, 0)], 0.5);
        assert_eq!(p[(0, 1)], 1.0 / 3.0);
        assert_eq!(p[(1, 0)], 0.25);
        assert_eq!(p[(1, 1)], 2.0 / 3.0);
    }

    #[test]
    fn halton_is_deterministic() {
        assert_eq!(halton_points(1, 1).unwrap(), halton_points(1, 1).unwrap());
        assert_eq!(halton_points(500, 7).unwrap(), halton_points(500, 7).unwrap());
    }

    #[test]
    fn halton_rejects_too_many_dims() {
        assert!(matches!(halton_points(4, 33), Err(Error::Config(_))));
        assert!(halton_points(4, 32).is_ok());
    }

    #[test]
    fn radical_inverse_large_index_stays_in_unit_interval() {
        for &b in &PRIMES {
            let v = radical_inverse(u64::MAX - 3, b);
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn gaussianize_examples() {
        let unit = UnitSampleSet {
            values: vec![DMatrix::from_row_slice(1, 3, &[0.5, 0.975, 0.0])],
            generator: Generator::Halton,
        };
        let g = gaussianize(&unit);
        assert_abs_diff_eq!(g[0][(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[0][(0, 1)], 1.959_963_985, epsilon = 1e-4);
        assert!(g[0][(0, 2)].is_finite() && g[0][(0, 2)] < -30.0);
    }

    #[test]
    fn constant_knots_give_constant_spline() {
        let spec = SmoothingSpec { knots_per_horizon: 5, ..Default::default() };
        let out = smooth_sequences(&[DMatrix::from_element(5, 2, 0.7)], &spec, 30).unwrap();
        for v in out[0].iter() {
            assert_abs_diff_eq!(*v, 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn clamped_spline_interpolates_endpoints() {
        let spec = SmoothingSpec { knots_per_horizon: 4, ..Default::default() };
        let knots = DMatrix::from_row_slice(4, 1, &[0.3, -1.2, 2.5, -0.4]);
        let out = smooth_sequences(std::slice::from_ref(&knots), &spec, 10).unwrap();
        assert_abs_diff_eq!(out[0][(0, 0)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(out[0][(9, 0)], -0.4, epsilon = 1e-12);
    }

    #[test]
    fn basis_is_partition_of_unity() {
        for (k, p) in [(4, 3), (5, 3), (9, 3), (6, 2), (3, 1)] {
            let b = bspline_basis(k, p, 17).unwrap();
            for h in 0..17 {
                assert_abs_diff_eq!(b.row(h).sum(), 1.0, epsilon = 1e-12);
                assert!(b.row(h).iter().all(|&v| v >= -1e-15));
            }
        }
    }

    #[test]
    fn too_few_knots_is_config_error() {
        assert!(matches!(bspline_basis(3, 3, 10), Err(Error::Config(_))));
        let spec = SmoothingSpec { knots_per_horizon: 3, ..Default::default() };
        assert!(smooth_sequences(&[DMatrix::zeros(3, 1)], &spec, 10).is_err());
    }

    #[test]
    fn default_knot_count() {
        let spec = SmoothingSpec::default();
        assert_eq!(spec.knots_for(30), 5);
        assert_eq!(spec.knots_for(10), 4);
        assert_eq!(spec.knots_for(60), 10);
    }

    #[test]
    fn comb_filter() {
        let seq = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let identity = SmoothingSpec {
            mode: SmoothingMode::Comb,
            comb_coeffs: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        assert_eq!(smooth_sequences(std::slice::from_ref(&seq), &identity, 4).unwrap()[0], seq);
        let taps = SmoothingSpec {
            mode: SmoothingMode::Comb,
            comb_coeffs: [0.5, 0.3, 0.2],
            ..Default::default()
        };
        let out = smooth_sequences(&[seq], &taps, 4).unwrap();
        let expected = [0.5, 1.0 + 0.3, 1.5 + 0.6 + 0.2, 2.0 + 0.9 + 0.4];
        for (a, b) in out[0].iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    fn policy(h: usize, d: usize, mean: f64, var: f64) -> PolicyParams {
        PolicyParams {
            means: DMatrix::from_element(h, d, mean),
            variances: DMatrix::from_element(h, d, var),
            mode: CovarianceMode::PerJointDiagonal,
        }
    }

    #[test]
    fn control_batch_examples() {
        let eps = vec![DMatrix::zeros(3, 2); 4];
        let p = policy(3, 2, 0.7, 1.0);
        let b = build_control_batch(&eps, &p, 1, true).unwrap();
        assert_eq!(b.controls[0], DMatrix::zeros(3, 2));
        for u in &b.controls[1..] {
            assert_eq!(*u, p.means);
        }

        let ones = vec![DMatrix::from_element(3, 2, 1.0); 3];
        let b = build_control_batch(&ones, &policy(3, 2, 0.0, 1.0), 0, false).unwrap();
        assert!(b.controls.iter().all(|u| u.iter().all(|&v| v == 1.0)));

        let half = vec![DMatrix::from_element(3, 2, 0.5); 3];
        let b = build_control_batch(&half, &policy(3, 2, 2.0, 4.0), 0, false).unwrap();
        assert!(b.controls.iter().all(|u| u.iter().all(|&v| v == 3.0)));
    }

    #[test]
    fn control_batch_rejects_bad_policy() {
        let eps = vec![DMatrix::zeros(3, 1); 4];
        assert!(matches!(
            build_control_batch(&eps, &policy(3, 1, 0.0, 0.0), 1, true),
            Err(Error::Policy(_))
        ));
        assert!(build_control_batch(&eps, &policy(3, 1, 0.0, 1.0), 4, false).is_err());
    }

    #[test]
    fn halton_sampler_reuses_points() {
        let cfg = SamplingConfig::default();
        let mut s = ControlSampler::new(cfg, 16, 10, 2, 0).unwrap();
        let a = s.perturbations().unwrap();
        let b = s.perturbations().unwrap();
        assert_eq!(a, b);

        let cfg = SamplingConfig { generator: Generator::Pseudorandom, ..Default::default() };
        let mut s = ControlSampler::new(cfg.clone(), 16, 10, 2, 3).unwrap();
        let a = s.perturbations().unwrap();
        assert_ne!(a, s.perturbations().unwrap());
        let mut again = ControlSampler::new(cfg, 16, 10, 2, 3).unwrap();
        assert_eq!(a, again.perturbations().unwrap());
    }

    #[test]
    fn each_knot_gets_one_contiguous_halton_block() {
        let (n, k, d) = (12, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = unit_samples(Generator::Halton, n, k, d, 7, &mut rng).unwrap();
        let pts = halton_points_from(8, n * k, d).unwrap();
        for knot in 0..k {
            let mut got: Vec<Vec<u64>> = set
                .values
                .iter()
                .map(|m| (0..d).map(|j| m[(knot, j)].to_bits()).collect())
                .collect();
            let mut want: Vec<Vec<u64>> = (0..n)
                .map(|i| (0..d).map(|j| pts[(knot * n + i, j)].to_bits()).collect())
                .collect();
            got.sort();
            want.sort();
            assert_eq!(got, want, "knot {knot}");
        }
    }
}
