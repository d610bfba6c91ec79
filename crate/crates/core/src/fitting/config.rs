use std::path::Path;

use crate::error::{Error, Result};
use crate::io::KeyValues;

/// Weights, thresholds and schedule of the joint fit. Every field is
/// readable from a flat key-value file under its own name.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub lambda_h: f64,
    /// Part cross-entropy weight in the human term.
    pub lambda_part: f64,
    pub lambda_o: f64,
    pub lambda_occ: f64,
    /// Object-center regularizer weight.
    pub lambda_reg: f64,
    pub lambda_c: f64,
    /// Keypoint reprojection weight, per squared pixel.
    pub lambda_j: f64,
    /// Pose/shape prior weight.
    pub lambda_r: f64,
    /// UDF clamp, meters.
    pub delta: f64,
    /// Contact threshold, meters.
    pub epsilon: f64,
    /// Object-distance shell for pose initialization, meters.
    pub shell: f64,
    /// Softmax temperature on part logits.
    pub tau: f64,
    /// Keypoint residual (pixels) beyond which the penalty grows linearly.
    pub huber_px: f64,
    /// Adam step sizes.
    pub lr_pose: f64,
    pub lr_translation: f64,
    pub lr_shape: f64,
    pub lr_rotation: f64,
    pub lr_object_translation: f64,
    pub lr_scale: f64,
    pub human_iterations: usize,
    pub object_iterations: usize,
    pub joint_iterations: usize,
    pub contact_every: usize,
    pub reorthonormalize_every: usize,
    /// Relative energy decrease below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations that end a stage.
    pub patience: usize,
    /// Step halvings tried before an iteration is rejected.
    pub max_halvings: usize,
    /// Distance to a field surface below which a vertex counts as sitting
    /// on a kink when the optimizer falls back to subgradient steps, meters.
    pub surrogate_width: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub shape_bound: f64,
    pub optimize_scale: bool,
    pub use_contacts: bool,
    /// Contact gradients reach only the object pose.
    pub contact_object_only: bool,
    pub probe_seeds: usize,
    pub probe_iterations: usize,
    pub probe_step_clamp: f64,
    /// Target depth of the center field.
    pub z0: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_h: 1.0,
            lambda_part: 0.1,
            lambda_o: 1.0,
            lambda_occ: 0.01,
            lambda_reg: 1.0,
            lambda_c: 1.0,
            lambda_j: 1e-4,
            lambda_r: 0.1,
            delta: 0.1,
            epsilon: 0.02,
            shell: 0.004,
            tau: 0.1,
            huber_px: 50.0,
            lr_pose: 0.02,
            lr_translation: 0.01,
            lr_shape: 0.05,
            lr_rotation: 0.02,
            lr_object_translation: 0.01,
            lr_scale: 0.005,
            human_iterations: 300,
            object_iterations: 300,
            joint_iterations: 200,
            contact_every: 20,
            reorthonormalize_every: 50,
            tolerance: 1e-7,
            patience: 20,
            max_halvings: 8,
            surrogate_width: 1e-3,
            scale_min: 0.5,
            scale_max: 2.0,
            shape_bound: crate::body::DEFAULT_SHAPE_BOUND,
            optimize_scale: true,
            use_contacts: true,
            contact_object_only: false,
            probe_seeds: 10_000,
            probe_iterations: 10,
            probe_step_clamp: 0.5,
            z0: crate::fields::DEFAULT_Z0,
            seed: 0,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(
            f64: lambda_h, lambda_part, lambda_o, lambda_occ, lambda_reg, lambda_c, lambda_j, lambda_r, delta, epsilon,
            shell, tau, huber_px, lr_pose, lr_translation, lr_shape, lr_rotation, lr_object_translation, lr_scale,
            tolerance, surrogate_width, scale_min, scale_max, shape_bound, probe_step_clamp, z0;
            usize: human_iterations, object_iterations, joint_iterations, contact_every, reorthonormalize_every,
            patience, max_halvings, probe_seeds, probe_iterations;
            bool: optimize_scale, use_contacts, contact_object_only;
            u64: seed
        )
    };
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda_h,
            self.lambda_part,
            self.lambda_o,
            self.lambda_occ,
            self.lambda_reg,
            self.lambda_c,
            self.lambda_j,
            self.lambda_r,
        ];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("shell", self.shell),
            ("tau", self.tau),
            ("huber_px", self.huber_px),
            ("z0", self.z0),
            ("surrogate_width", self.surrogate_width),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.scale_min > 0.0 && self.scale_min <= 1.0 && self.scale_max >= 1.0) {
            return Err(Error::InvalidConfig(
                "scale bounds must bracket 1 and be positive".into(),
            ));
        }
        if self.contact_every == 0 || self.reorthonormalize_every == 0 {
            return Err(Error::InvalidConfig("cadences must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        macro_rules! put {
            ($($t:ident: $($f:ident),*);*) => { $($( kv.set(stringify!($f), self.$f); )*)* };
        }
        config_fields!(put);
        kv
    }

    /// Overrides defaults with the keys present in `kv`; unknown keys are
    /// an error.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(kv)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        for key in kv.keys() {
            let mut known = false;
            macro_rules! set {
                ($($t:ident: $($f:ident),*);*) => {
                    $($( if key == stringify!($f) { self.$f = kv.get_parsed::<$t>(key)?; known = true; } )*)*
                };
            }
            config_fields!(set);
            if !known {
                return Err(Error::InvalidConfig(format!("unknown configuration key `{key}`")));
            }
        }
        self.validate()
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut kv = KeyValues::default();
        kv.set(key, value);
        self.apply(&kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_key_values().save(path)
    }
}
