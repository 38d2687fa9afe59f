//! Synthetic compressed-sensing instances.
//!
//! All generators are deterministic functions of their parameters and a
//! `u64` seed. Randomness comes from ChaCha8 seeded with `seed`; each kind of
//! generator reads its own ChaCha stream (see [`RngStream`]) so that the
//! matrix, signal, noise and algorithm draws of a trial never overlap even
//! though they share one trial seed.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{DenseMatrix, SupportSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngStream {
    Matrix = 0,
    Signal = 1,
    Noise = 2,
    Algorithm = 3,
    Chain = 4,
}

/// The deterministic generator behind every seeded draw in the crate.
pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Magnitude profile of the non-zero entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SignalKind {
    /// Equal magnitudes.
    Flat,
    /// j-th smallest magnitude proportional to j.
    Linear,
    /// Geometric profile: `x_max · α^(j−1)`.
    Decaying { alpha: f64 },
    /// i.i.d. standard normal values.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalStructure {
    #[serde(flatten)]
    pub kind: SignalKind,
    pub norm: f64,
}

impl SignalStructure {
    pub fn new(kind: SignalKind, norm: f64) -> Result<Self> {
        let s = Self { kind, norm };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.norm > 0.0 && self.norm.is_finite()) {
            return domain("signal norm must be positive and finite");
        }
        if let SignalKind::Decaying { alpha } = self.kind {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return domain(format!("decay ratio must lie in (0, 1], got {alpha}"));
            }
        }
        Ok(())
    }
}

/// i.i.d. `N(0, 1/M)` sensing matrix.
pub fn gen_gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    if m == 0 || n == 0 {
        return domain("matrix dimensions must be positive");
    }
    if m > n {
        return domain(format!("need M <= N for an underdetermined system, got M={m}, N={n}"));
    }
    let mut rng = seeded_rng(seed, RngStream::Matrix);
    let scale = 1.0 / (m as f64).sqrt();
    // Column-major fill: column j is the j-th run of M draws.
    let data: Vec<f64> = (0..m * n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::new(DMatrix::from_vec(m, n, data))
}

/// Magnitudes of the non-zero entries, largest first, before norm scaling.
fn profile(k: usize, kind: SignalKind, norm: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let kf = k as f64;
    match kind {
        SignalKind::Flat => vec![norm / kf.sqrt(); k],
        SignalKind::Linear => {
            let alpha = (6.0 * norm * norm / (kf * (kf + 1.0) * (2.0 * kf + 1.0))).sqrt();
            (1..=k).rev().map(|j| alpha * j as f64).collect()
        }
        SignalKind::Decaying { alpha } => {
            let x_max = if alpha == 1.0 {
                norm / kf.sqrt()
            } else {
                norm * ((1.0 - alpha * alpha) / (1.0 - alpha.powi(2 * k as i32))).sqrt()
            };
            (0..k).map(|j| x_max * alpha.powi(j as i32)).collect()
        }
        SignalKind::Gaussian => (0..k)
            .map(|_| loop {
                let v: f64 = rng.sample(StandardNormal);
                if v != 0.0 {
                    break v;
                }
            })
            .collect(),
    }
}

/// A `K`-sparse vector on a uniformly random support.
///
/// Magnitudes follow `structure`; signs are independent fair coin flips for
/// the deterministic profiles. The result has exactly `K` non-zeros and is
/// rescaled to the target norm.
pub fn gen_signal(n: usize, k: usize, structure: &SignalStructure, seed: u64) -> Result<DVector<f64>> {
    structure.validate()?;
    if k == 0 {
        return domain("sparsity must be at least 1");
    }
    if k > n {
        return domain(format!("sparsity {k} exceeds dimension {n}"));
    }
    let mut rng = seeded_rng(seed, RngStream::Signal);
    let positions = index::sample(&mut rng, n, k).into_vec();
    let mags = profile(k, structure.kind, structure.norm, &mut rng);
    let mut x = DVector::zeros(n);
    for (&pos, &mag) in positions.iter().zip(&mags) {
        let signed = match structure.kind {
            SignalKind::Gaussian => mag,
            _ if rng.random::<bool>() => mag,
            _ => -mag,
        };
        x[pos] = signed;
    }
    let scale = structure.norm / x.norm();
    x *= scale;
    Ok(x)
}

/// A noiseless (or noisy) measurement setup with known ground truth.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub phi: DenseMatrix,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// Number of non-zeros in `x`.
    pub sparsity: usize,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.phi.rows()
    }

    pub fn n(&self) -> usize {
        self.phi.cols()
    }

    pub fn support(&self) -> SupportSet {
        SupportSet::of_nonzeros(&self.x)
    }

    /// Matrix, signal and measurements for one trial seed.
    pub fn generate(spec: &InstanceSpec) -> Result<Self> {
        let mut phi = gen_gaussian_matrix(spec.m, spec.n, spec.seed)?;
        if spec.normalize_columns {
            phi = phi.normalized_columns();
        }
        let x = gen_signal(spec.n, spec.k, &spec.structure, spec.seed)?;
        make_instance(phi, x, spec.noise_std, spec.seed)
    }
}

/// `y = Φx + e`, `e ~ N(0, noise_std²)` drawn from the noise stream of `seed`.
pub fn make_instance(phi: DenseMatrix, x: DVector<f64>, noise_std: f64, seed: u64) -> Result<ProblemInstance> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return domain("noise standard deviation must be non-negative");
    }
    let mut y = phi.mul_vec(&x)?;
    if noise_std > 0.0 {
        let mut rng = seeded_rng(seed, RngStream::Noise);
        let noise = Normal::new(0.0, noise_std).map_err(|e| Error::Domain(e.to_string()))?;
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let sparsity = x.iter().filter(|v| **v != 0.0).count();
    Ok(ProblemInstance {
        phi,
        x,
        y,
        sparsity,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRatio {
    pub x_min: f64,
    pub x_max: f64,
    /// `x_max / x_min`, always `>= 1`.
    pub ratio: f64,
}

/// Smallest and largest non-zero magnitudes of `x`.
pub fn signal_ratio(x: &DVector<f64>) -> Result<SignalRatio> {
    let mags = x.iter().filter(|v| **v != 0.0).map(|v| v.abs());
    let (x_min, x_max) = mags.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if x_max == 0.0 {
        return domain("signal ratio is undefined for the zero vector");
    }
    Ok(SignalRatio {
        x_min,
        x_max,
        ratio: x_max / x_min,
    })
}

/// Replayable description of an instance: the JSON schema used on disk.
///
/// When `phi`, `x` and `y` are present they are taken verbatim (row-major
/// `phi`); otherwise the instance is regenerated from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub structure: SignalStructure,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub normalize_columns: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<InstanceEntries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntries {
    pub phi: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl InstanceSpec {
    /// Rebuilds the instance, from explicit entries when present.
    pub fn realize(&self) -> Result<ProblemInstance> {
        match &self.entries {
            None => ProblemInstance::generate(self),
            Some(e) => {
                let phi = DenseMatrix::from_row_major(self.m, self.n, &e.phi)?;
                if e.x.len() != self.n || e.y.len() != self.m {
                    return Err(Error::Dimension("instance entries do not match m, n".into()));
                }
                let x = DVector::from_column_slice(&e.x);
                let y = DVector::from_column_slice(&e.y);
                let sparsity = x.iter().filter(|v| **v != 0.0).count();
                Ok(ProblemInstance {
                    phi,
                    x,
                    y,
                    sparsity,
                    seed: self.seed,
                })
            }
        }
    }

    /// Same spec with the realized entries embedded.
    pub fn with_entries(&self, inst: &ProblemInstance) -> Self {
        Self {
            entries: Some(InstanceEntries {
                phi: inst.phi.to_row_major(),
                x: inst.x.iter().copied().collect(),
                y: inst.y.iter().copied().collect(),
            }),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat() -> SignalStructure {
        SignalStructure::new(SignalKind::Flat, 1.0).unwrap()
    }

    #[test]
    fn matrix_column_norms_concentrate() {
        let phi = gen_gaussian_matrix(256, 512, 7).unwrap();
        let norms = phi.column_norms();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        assert!((0.9..=1.1).contains(&mean), "{mean}");
    }

    #[test]
    fn matrix_is_deterministic_and_checks_shape() {
        assert_eq!(gen_gaussian_matrix(16, 32, 3).unwrap(), gen_gaussian_matrix(16, 32, 3).unwrap());
        assert_ne!(gen_gaussian_matrix(16, 32, 3).unwrap(), gen_gaussian_matrix(16, 32, 4).unwrap());
        assert!(gen_gaussian_matrix(4, 2, 0).is_err());
    }

    #[test]
    fn flat_single_entry() {
        let x = gen_signal(10, 1, &flat(), 5).unwrap();
        let nz: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_relative_eq!(nz[0].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_profile_k3() {
        let s = SignalStructure::new(SignalKind::Linear, 1.0).unwrap();
        let x = gen_signal(20, 3, &s, 9).unwrap();
        let mut mags: Vec<f64> = x.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let alpha = (6.0f64 / (3.0 * 4.0 * 7.0)).sqrt();
        assert_relative_eq!(alpha, 0.2673, epsilon = 1e-4);
        for (j, m) in mags.iter().enumerate() {
            assert_relative_eq!(*m, alpha * (j + 1) as f64, epsilon = 1e-12);
        }
        assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decaying_alpha_one_is_flat() {
        let s = SignalStructure::new(SignalKind::Decaying { alpha: 1.0 }, 2.0).unwrap();
        let x = gen_signal(30, 6, &s, 1).unwrap();
        let r = signal_ratio(&x).unwrap();
        assert_relative_eq!(r.ratio, 1.0, epsilon = 1e-12);
        assert!(SignalStructure::new(SignalKind::Decaying { alpha: 0.0 }, 1.0).is_err());
        assert!(SignalStructure::new(SignalKind::Decaying { alpha: 1.5 }, 1.0).is_err());
    }

    #[test]
    fn signal_ratios_per_structure() {
        let x = gen_signal(50, 7, &flat(), 2).unwrap();
        assert_eq!(signal_ratio(&x).unwrap().ratio, 1.0);
        let lin = SignalStructure::new(SignalKind::Linear, 3.0).unwrap();
        let x = gen_signal(50, 7, &lin, 2).unwrap();
        assert_relative_eq!(signal_ratio(&x).unwrap().ratio, 7.0, max_relative = 1e-12);
        let dec = SignalStructure::new(SignalKind::Decaying { alpha: 0.8 }, 1.0).unwrap();
        let x = gen_signal(50, 7, &dec, 2).unwrap();
        assert_relative_eq!(signal_ratio(&x).unwrap().ratio, 0.8f64.powi(-6), max_relative = 1e-12);
        assert!(signal_ratio(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn gen_signal_rejects_bad_sparsity() {
        assert!(gen_signal(5, 6, &flat(), 0).is_err());
        assert!(gen_signal(5, 0, &flat(), 0).is_err());
    }

    #[test]
    fn noiseless_instance_is_consistent() {
        let phi = gen_gaussian_matrix(8, 16, 1).unwrap();
        let x = gen_signal(16, 3, &flat(), 1).unwrap();
        let inst = make_instance(phi.clone(), x.clone(), 0.0, 1).unwrap();
        assert_eq!(inst.y, phi.mul_vec(&x).unwrap());
        assert_eq!(inst.sparsity, 3);
        let zero = make_instance(phi, DVector::zeros(16), 0.0, 1).unwrap();
        assert_eq!(zero.y, DVector::zeros(8));
    }

    #[test]
    fn noise_energy_matches_variance() {
        let phi = gen_gaussian_matrix(256, 256, 1).unwrap();
        let x = DVector::zeros(256);
        let trials = 200;
        let mean: f64 = (0..trials)
            .map(|t| make_instance(phi.clone(), x.clone(), 0.01, t).unwrap().y.norm_squared())
            .sum::<f64>()
            / trials as f64;
        // chi-square mean 256e-4, std of the trial mean ~ 0.0256*sqrt(2/256)/sqrt(200)
        assert!((mean - 0.0256).abs() < 5e-4, "{mean}");
    }

    #[test]
    fn instance_spec_roundtrip_with_entries() {
        let spec = InstanceSpec {
            m: 6,
            n: 10,
            k: 2,
            seed: 42,
            structure: flat(),
            noise_std: 0.0,
            normalize_columns: false,
            entries: None,
        };
        let inst = spec.realize().unwrap();
        let json = serde_json::to_string(&spec.with_entries(&inst)).unwrap();
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        let replay = back.realize().unwrap();
        assert_eq!(replay.phi, inst.phi);
        assert_eq!(replay.x, inst.x);
        assert_eq!(replay.y, inst.y);
    }
}
