use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::so3;

/// Perturbations applied by [`super::MeshOracle`] to emulate network error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseSpec {
    /// Std. dev. of the additive distance noise, meters.
    pub sigma_d: f64,
    /// Std. dev. of the gradient rotation angle, radians.
    pub sigma_g: f64,
    /// Probability that the winning part logit is swapped with another.
    pub flip_prob: f64,
    /// Scale of the rotation-field perturbation angle, radians.
    pub sigma_r: f64,
    /// Std. dev. of each center-field component, meters.
    pub sigma_c: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma_d, self.sigma_g, self.sigma_r, self.sigma_c];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise scales must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidConfig("part flip probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_d == 0.0
            && self.sigma_g == 0.0
            && self.flip_prob == 0.0
            && self.sigma_r == 0.0
            && self.sigma_c == 0.0
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("sigma_d", self.sigma_d);
        kv.set("sigma_g", self.sigma_g);
        kv.set("flip_prob", self.flip_prob);
        kv.set("sigma_r", self.sigma_r);
        kv.set("sigma_c", self.sigma_c);
        kv.set("seed", self.seed);
        kv
    }

    /// Missing keys keep their zero default.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut spec = Self::none();
        for (key, slot) in [
            ("sigma_d", &mut spec.sigma_d),
            ("sigma_g", &mut spec.sigma_g),
            ("flip_prob", &mut spec.flip_prob),
            ("sigma_r", &mut spec.sigma_r),
            ("sigma_c", &mut spec.sigma_c),
        ] {
            if kv.get(key).is_some() {
                *slot = kv.get_f64(key)?;
            }
        }
        if kv.get("seed").is_some() {
            spec.seed = kv.get_parsed("seed")?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

const RFF_FEATURES: usize = 64;
const RFF_LENGTHSCALE: f64 = 0.05;

/// Smooth zero-mean random field with unit marginal variance
/// (random Fourier features of a squared-exponential kernel).
#[derive(Clone, Debug)]
struct SmoothField {
    omegas: Vec<Vector3<f64>>,
    phases: Vec<f64>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut omegas = Vec::with_capacity(RFF_FEATURES);
        let mut phases = Vec::with_capacity(RFF_FEATURES);
        for _ in 0..RFF_FEATURES {
            let w = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            omegas.push(w / RFF_LENGTHSCALE);
            phases.push(rng.gen_range(0.0..std::f64::consts::TAU));
        }
        Self { omegas, phases }
    }

    fn value(&self, p: &Vector3<f64>) -> f64 {
        let amp = (2.0 / RFF_FEATURES as f64).sqrt();
        amp * self
            .omegas
            .iter()
            .zip(&self.phases)
            .map(|(w, b)| (w.dot(p) + b).cos())
            .sum::<f64>()
    }
}

/// Noise state derived from a [`NoiseSpec`].
#[derive(Clone, Debug)]
pub(crate) struct NoiseModel {
    pub spec: NoiseSpec,
    human: SmoothField,
    object: SmoothField,
}

#[derive(Clone, Copy)]
pub(crate) enum Stream {
    HumanGradient = 1,
    ObjectGradient = 2,
    Parts = 3,
    Rotation = 4,
    Centers = 5,
}

impl NoiseModel {
    pub fn new(spec: NoiseSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Self {
            spec,
            human: SmoothField::new(&mut rng),
            object: SmoothField::new(&mut rng),
        }
    }

    /// `|u + sigma_d * n(p)|`, plus the sign applied to the gradient.
    pub fn distance(&self, human: bool, p: &Vector3<f64>, u: f64) -> (f64, f64) {
        if self.spec.sigma_d == 0.0 {
            return (u, 1.0);
        }
        let field = if human { &self.human } else { &self.object };
        let v = u + self.spec.sigma_d * field.value(p);
        (v.abs(), if v < 0.0 { -1.0 } else { 1.0 })
    }

    /// Per-point generator keyed on the exact coordinates, so results do not
    /// depend on query order or thread.
    pub fn point_rng(&self, p: &Vector3<f64>, stream: Stream) -> ChaCha8Rng {
        let mut h = splitmix(self.spec.seed ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        for v in p.iter() {
            h = splitmix(h ^ v.to_bits());
        }
        ChaCha8Rng::seed_from_u64(h)
    }

    pub fn rotate_gradient(&self, g: &Vector3<f64>, p: &Vector3<f64>, stream: Stream) -> Vector3<f64> {
        if self.spec.sigma_g == 0.0 || g.norm_squared() == 0.0 {
            return *g;
        }
        let mut rng = self.point_rng(p, stream);
        let axis = Vector3::from(UnitSphere.sample(&mut rng));
        let angle: f64 = self.spec.sigma_g * rng.sample::<f64, _>(StandardNormal);
        so3::exp(&(axis * angle)) * g
    }

    /// Left-multiplied perturbation: uniform axis, angle `|N(0, sigma_r)|`.
    pub fn perturb_rotation(&self, r: &Matrix3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
        if self.spec.sigma_r == 0.0 {
            return *r;
        }
        let mut rng = self.point_rng(p, Stream::Rotation);
        let axis = Vector3::from(UnitSphere.sample(&mut rng));
        let angle = (self.spec.sigma_r * rng.sample::<f64, _>(StandardNormal)).abs();
        so3::exp(&(axis * angle)) * r
    }

    pub fn perturb_centers(&self, c: &[f64; 5], p: &Vector3<f64>) -> [f64; 5] {
        if self.spec.sigma_c == 0.0 {
            return *c;
        }
        let mut rng = self.point_rng(p, Stream::Centers);
        c.map(|v| v + self.spec.sigma_c * rng.sample::<f64, _>(StandardNormal))
    }

    /// With probability `flip_prob`, the part to swap with the winner.
    pub fn flip_target(&self, winner: usize, parts: usize, p: &Vector3<f64>) -> Option<usize> {
        if self.spec.flip_prob == 0.0 {
            return None;
        }
        let mut rng = self.point_rng(p, Stream::Parts);
        if rng.gen::<f64>() >= self.spec.flip_prob {
            return None;
        }
        let k = rng.gen_range(0..parts - 1);
        Some(if k >= winner { k + 1 } else { k })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
