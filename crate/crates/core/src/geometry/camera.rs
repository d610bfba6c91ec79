use std::path::Path;

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::KeyValues;

/// Pinhole camera looking down +z, pixel coordinates with the origin at the
/// top-left image corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PerspectiveCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidCamera("principal point is not finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok(self.project_unchecked(p))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Jacobian of [`project`](Self::project) with respect to the 3D point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    /// Geometric mean of the two focal lengths.
    pub fn mean_focal(&self) -> f64 {
        (self.fx * self.fy).sqrt()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path)?;
        let cam = Self {
            fx: kv.get_f64("fx")?,
            fy: kv.get_f64("fy")?,
            cx: kv.get_f64("cx")?,
            cy: kv.get_f64("cy")?,
            width: kv.get_usize("width")?,
            height: kv.get_usize("height")?,
        };
        cam.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(cam)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut kv = KeyValues::default();
        kv.set("fx", self.fx);
        kv.set("fy", self.fy);
        kv.set("cx", self.cx);
        kv.set("cy", self.cy);
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.save(path)
    }
}
