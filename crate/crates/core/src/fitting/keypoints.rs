use std::path::Path;

use nalgebra::Vector2;

use crate::body::BodyModel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint2D {
    pub name: String,
    pub pixel: Vector2<f64>,
    pub confidence: f64,
}

/// 2D landmark detections in the model's landmark order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Keypoints2D {
    pub points: Vec<Keypoint2D>,
}

impl Keypoints2D {
    /// Orders `detections` by the model's landmarks; landmarks without a
    /// detection get confidence 0.
    pub fn for_model(model: &BodyModel, detections: &[Keypoint2D]) -> Result<Self> {
        for d in detections {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::InvalidConfig(format!(
                    "keypoint `{}` confidence outside [0, 1]",
                    d.name
                )));
            }
            if !model.landmarks().iter().any(|(n, _)| *n == d.name) {
                return Err(Error::InvalidConfig(format!("unknown landmark `{}`", d.name)));
            }
        }
        let points = model
            .landmarks()
            .iter()
            .map(|(name, _)| {
                detections
                    .iter()
                    .find(|d| &d.name == name)
                    .cloned()
                    .unwrap_or(Keypoint2D {
                        name: name.clone(),
                        pixel: Vector2::zeros(),
                        confidence: 0.0,
                    })
            })
            .collect();
        Ok(Self { points })
    }

    /// One detection per line: `name x y confidence`.
    pub fn parse(text: &str, path: &Path) -> Result<Vec<Keypoint2D>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(path, format!("line {}: expected `name x y confidence`", i + 1));
            if tok.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            out.push(Keypoint2D {
                name: tok[0].to_string(),
                pixel: Vector2::new(num(tok[1])?, num(tok[2])?),
                confidence: num(tok[3])?,
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path, model: &BodyModel) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::for_model(model, &Self::parse(&text, path)?)
    }

    pub fn to_text(&self) -> String {
        self.points
            .iter()
            .map(|k| format!("{} {} {} {}\n", k.name, k.pixel.x, k.pixel.y, k.confidence))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
