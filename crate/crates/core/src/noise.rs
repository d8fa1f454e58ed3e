//! Martingale-difference noise and coordinate trimming.
//!
//! Every run owns a [`NoiseStream`]: a ChaCha20 generator keyed by the run
//! seed and a 64-bit stream id. Two streams with the same `(seed, stream)`
//! produce identical draws on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Result, SkmError};
use crate::vector::Vector;

/// Identifier of the generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha20(rand_chacha 0.9; seed_from_u64 + set_stream)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Zero,
    Gaussian { sigma: f64 },
    /// `scale · t_dof`.
    StudentT { dof: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    /// Stream id mixed into every run's generator.
    seed: u64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            kind: NoiseKind::Zero,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SkmError::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian { sigma },
            seed: 0,
        })
    }

    pub fn student_t(dof: f64, scale: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
            return Err(SkmError::Config(format!(
                "student_t requires dof > 0 and scale > 0, got dof={dof}, scale={scale}"
            )));
        }
        Ok(Self {
            kind: NoiseKind::StudentT { dof, scale },
            seed: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Opens the stream this model uses for a run with the given seed.
    pub fn stream(&self, run_seed: u64) -> NoiseStream {
        NoiseStream::new(run_seed, self.seed)
    }

    /// One `d`-dimensional draw. Advances `rng`.
    pub fn sample(&self, rng: &mut NoiseStream, d: usize) -> Vector {
        assert!(d >= 1, "noise dimension must be >= 1");
        let coords = match self.kind {
            NoiseKind::Zero => vec![0.0; d],
            NoiseKind::Gaussian { sigma } => {
                let dist = Normal::new(0.0, sigma).expect("sigma validated at construction");
                (0..d).map(|_| dist.sample(&mut rng.0)).collect()
            }
            NoiseKind::StudentT { dof, scale } => {
                let dist = StudentT::new(dof).expect("dof validated at construction");
                (0..d).map(|_| scale * dist.sample(&mut rng.0)).collect()
            }
        };
        Vector::from_raw(coords)
    }
}

/// A private, deterministic random stream.
#[derive(Debug, Clone)]
pub struct NoiseStream(ChaCha20Rng);

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Raw access for callers drawing their own variates.
    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.0
    }
}

/// Zeroes the `min(k, d)` largest-magnitude coordinates of `u`. Among equal
/// magnitudes the lowest index is zeroed first; every other coordinate is
/// copied unchanged.
pub fn trim(u: &[f64], k: usize) -> Vec<f64> {
    let d = u.len();
    let k = k.min(d);
    let mut out = u.to_vec();
    if k == 0 {
        return out;
    }
    if k == d {
        out.iter_mut().for_each(|v| *v = 0.0);
        return out;
    }
    let mut idx: Vec<usize> = (0..d).collect();
    let order = |a: &usize, b: &usize| {
        u[*b].abs()
            .total_cmp(&u[*a].abs())
            .then_with(|| a.cmp(b))
    };
    idx.select_nth_unstable_by(k - 1, order);
    for &i in &idx[..k] {
        out[i] = 0.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrimSchedule {
    #[default]
    None,
    Fixed(usize),
    /// `k_n = ⌈ln(n + 2)⌉`.
    LogSchedule,
}

/// Trimming level at iteration `n` in dimension `d`, clamped to `d`.
pub fn trim_level(sched: TrimSchedule, n: usize, d: usize) -> usize {
    match sched {
        TrimSchedule::None => 0,
        TrimSchedule::Fixed(k) => k.min(d),
        TrimSchedule::LogSchedule => ((n as f64 + 2.0).ln().ceil() as usize).min(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model() {
        let mut s = NoiseModel::zero().stream(9);
        assert_eq!(NoiseModel::zero().sample(&mut s, 4).as_slice(), &[0.0; 4]);
    }

    #[test]
    fn gaussian_moments() {
        let model = NoiseModel::gaussian(0.1).unwrap();
        let mut s = model.stream(2024);
        let m = 100_000;
        let d = 10;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..m {
            let x = model.sample(&mut s, d);
            for i in 0..d {
                sum[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for i in 0..d {
            let mean = sum[i] / m as f64;
            let var = sq[i] / m as f64 - mean * mean;
            assert!(mean.abs() < 3.0 * 0.1 / (m as f64).sqrt(), "mean {mean}");
            assert!((var - 0.01).abs() < 0.05 * 0.01, "var {var}");
        }
    }

    fn kurtosis(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    #[test]
    fn student_t_kurtosis_grows_with_sample_size() {
        let model = NoiseModel::student_t(2.0, 1.0).unwrap();
        let mut s = model.stream(7);
        let xs: Vec<f64> = (0..100_000).map(|_| model.sample(&mut s, 1)[0]).collect();
        let k3 = kurtosis(&xs[..1_000]);
        let k4 = kurtosis(&xs[..10_000]);
        let k5 = kurtosis(&xs);
        assert!(k3 < k4 && k4 < k5, "{k3} {k4} {k5}");
    }

    #[test]
    fn empirical_means_near_zero() {
        let m = 100_000;
        for model in [NoiseModel::gaussian(1.0).unwrap(), NoiseModel::student_t(2.0, 1.0).unwrap()] {
            let mut s = model.stream(31);
            let mut sum = [0.0; 3];
            for _ in 0..m {
                let x = model.sample(&mut s, 3);
                sum.iter_mut().zip(x.iter()).for_each(|(a, b)| *a += b);
            }
            let bound = 3.0 * 4.0 / (m as f64).sqrt();
            assert!(sum.iter().all(|v| (v / m as f64).abs() < bound), "{model:?}");
        }
    }

    #[test]
    fn streams_reproduce_and_separate() {
        let model = NoiseModel::gaussian(1.0).unwrap();
        let (mut a, mut b) = (model.stream(5), model.stream(5));
        for _ in 0..10 {
            assert_eq!(model.sample(&mut a, 3), model.sample(&mut b, 3));
        }
        let mut c = model.with_seed(1).stream(5);
        let mut a = model.stream(5);
        assert_ne!(model.sample(&mut a, 3), model.sample(&mut c, 3));
    }

    #[test]
    fn invalid_models() {
        assert!(NoiseModel::gaussian(0.0).is_err());
        assert!(NoiseModel::student_t(-1.0, 1.0).is_err());
        assert!(NoiseModel::student_t(2.0, 0.0).is_err());
    }

    #[test]
    fn trim_examples() {
        assert_eq!(trim(&[3.0, -5.0, 1.0], 1), vec![3.0, 0.0, 1.0]);
        assert_eq!(trim(&[3.0, -5.0, 1.0], 0), vec![3.0, -5.0, 1.0]);
        assert_eq!(trim(&[2.0, -2.0, 1.0], 1), vec![0.0, -2.0, 1.0]);
        assert_eq!(trim(&[2.0, -2.0, 1.0], 2), vec![0.0, 0.0, 1.0]);
        assert_eq!(trim(&[2.0, -2.0, 1.0], 3), vec![0.0; 3]);
        assert_eq!(trim(&[2.0, -2.0, 1.0], 10), vec![0.0; 3]);
    }

    #[test]
    fn trim_levels() {
        assert_eq!(trim_level(TrimSchedule::LogSchedule, 0, 10), 1);
        assert_eq!(trim_level(TrimSchedule::LogSchedule, 5, 10), 2);
        assert_eq!(trim_level(TrimSchedule::LogSchedule, 1_000_000, 10), 10);
        assert_eq!(trim_level(TrimSchedule::None, 50, 10), 0);
        assert_eq!(trim_level(TrimSchedule::Fixed(4), 0, 3), 3);
        let mut prev = 0;
        for n in 0..5000 {
            let k = trim_level(TrimSchedule::LogSchedule, n, 10);
            assert!(k >= prev);
            prev = k;
        }
    }
}
