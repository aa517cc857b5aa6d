//! Synthetic test objectives, evaluated on inputs scaled to [-1, 1]^d and
//! mapped to each function's native domain. All objectives are minimized.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{from_f64, to_f64, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// 3-D Levy function, native domain [-10, 10]^3, minimum 0 at (1, 1, 1).
    Levy3,
    /// 3-D Ackley function, native domain [-32.768, 32.768]^3, minimum 0 at 0.
    Ackley3,
    /// sin(2 pi x) on [-1, 1]; minimum -1.
    Sine1d,
    /// Deterministic smooth 2-D bump mixture drawn from a fixed seed.
    Synthetic2dField,
}

impl ObjectiveKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "levy3" | "levy" => Some(ObjectiveKind::Levy3),
            "ackley3" | "ackley" => Some(ObjectiveKind::Ackley3),
            "sine1d" | "sine" => Some(ObjectiveKind::Sine1d),
            "synthetic2dfield" | "field2d" => Some(ObjectiveKind::Synthetic2dField),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Levy3 => "levy3",
            ObjectiveKind::Ackley3 => "ackley3",
            ObjectiveKind::Sine1d => "sine1d",
            ObjectiveKind::Synthetic2dField => "synthetic2dfield",
        }
    }
}

/// A noisy black-box objective over [-1, 1]^d.
#[derive(Clone, Debug)]
pub struct TestObjective<T: Scalar> {
    pub kind: ObjectiveKind,
    pub noise_sd: T,
    bumps: Vec<(f64, f64, f64, f64)>,
}

impl<T: Scalar> TestObjective<T> {
    pub fn new(kind: ObjectiveKind, noise_sd: T) -> Self {
        let bumps = if kind == ObjectiveKind::Synthetic2dField {
            let mut rng = ChaCha8Rng::seed_from_u64(0xf1e1d);
            (0..12)
                .map(|_| {
                    (
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        0.15 + rng.random::<f64>() * 0.35,
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        TestObjective { kind, noise_sd, bumps }
    }

    pub fn dims(&self) -> usize {
        match self.kind {
            ObjectiveKind::Levy3 | ObjectiveKind::Ackley3 => 3,
            ObjectiveKind::Sine1d => 1,
            ObjectiveKind::Synthetic2dField => 2,
        }
    }

    /// Known global minimum value, when analytic.
    pub fn optimum(&self) -> Option<T> {
        match self.kind {
            ObjectiveKind::Levy3 | ObjectiveKind::Ackley3 => Some(T::zero()),
            ObjectiveKind::Sine1d => Some(from_f64::<T>(-1.0)),
            ObjectiveKind::Synthetic2dField => None,
        }
    }

    fn native_halfwidth(&self) -> f64 {
        match self.kind {
            ObjectiveKind::Levy3 => 10.0,
            ObjectiveKind::Ackley3 => 32.768,
            ObjectiveKind::Sine1d | ObjectiveKind::Synthetic2dField => 1.0,
        }
    }

    /// Noiseless value at a point in [-1, 1]^d.
    pub fn evaluate(&self, x_scaled: &[T]) -> T {
        debug_assert_eq!(x_scaled.len(), self.dims());
        let w = self.native_halfwidth();
        let x: Vec<f64> = x_scaled.iter().map(|&v| to_f64(v) * w).collect();
        let val = match self.kind {
            ObjectiveKind::Levy3 => levy(&x),
            ObjectiveKind::Ackley3 => ackley(&x),
            ObjectiveKind::Sine1d => (2.0 * std::f64::consts::PI * x[0]).sin(),
            ObjectiveKind::Synthetic2dField => self
                .bumps
                .iter()
                .map(|&(cx, cy, a, s)| {
                    let dx = x[0] - cx;
                    let dy = x[1] - cy;
                    a * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
                })
                .sum(),
        };
        from_f64::<T>(val)
    }

    /// Noisy observation of the objective.
    pub fn observe(&self, x_scaled: &[T], rng: &mut ChaCha8Rng) -> T {
        let noise: f64 = StandardNormal.sample(rng);
        self.evaluate(x_scaled) + self.noise_sd * from_f64::<T>(noise)
    }
}

fn levy(x: &[f64]) -> f64 {
    let d = x.len();
    let w: Vec<f64> = x.iter().map(|&v| 1.0 + (v - 1.0) / 4.0).collect();
    let pi = std::f64::consts::PI;
    let mut acc = (pi * w[0]).sin().powi(2);
    for i in 0..d - 1 {
        acc += (w[i] - 1.0).powi(2) * (1.0 + 10.0 * (pi * w[i] + 1.0).sin().powi(2));
    }
    acc += (w[d - 1] - 1.0).powi(2) * (1.0 + (2.0 * pi * w[d - 1]).sin().powi(2));
    acc
}

fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let a = 20.0;
    let b = 0.2;
    let c = 2.0 * std::f64::consts::PI;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * sq.sqrt()).exp() - cs.exp() + a + std::f64::consts::E
}
