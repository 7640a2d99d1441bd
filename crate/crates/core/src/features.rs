//! Fixed-length observation vectors and the agent-centric frames they are built in.

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Rect, Vec2};

/// Named contiguous block inside a [`FeatureVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset_of(&self, name: &str) -> Option<usize> {
        let mut off = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(off);
            }
            off += b.len;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let off = self.layout.offset_of(name)?;
        let len = self.layout.blocks.iter().find(|b| b.name == name)?.len;
        Some(&self.values[off..off + len])
    }
}

/// Incrementally appends named blocks.
#[derive(Debug, Default)]
pub(crate) struct FeatureBuilder {
    values: Vec<f64>,
    layout: FeatureLayout,
}

impl FeatureBuilder {
    pub fn push(&mut self, name: &str, values: &[f64]) {
        self.values.extend_from_slice(values);
        self.layout.blocks.push(FeatureBlock {
            name: name.to_string(),
            len: values.len(),
        });
    }

    pub fn finish(self) -> FeatureVector {
        FeatureVector {
            values: self.values,
            layout: self.layout,
        }
    }
}

/// Normalisation constants applied while featurizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Max neighbour UAV blocks.
    pub uav_pad: usize,
    /// Max node blocks.
    pub node_pad: usize,
    /// Meters per feature unit.
    pub length_scale: f64,
    /// m/s per feature unit.
    pub speed_scale: f64,
    /// Seconds per feature unit.
    pub time_scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            uav_pad: 4,
            node_pad: 10,
            length_scale: 20.0,
            speed_scale: 2.0,
            time_scale: 60.0,
        }
    }
}

/// Translation + rotation placing `origin` at zero and `toward` on the +x axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec2,
    /// World angle of the frame's +x axis.
    pub angle: f64,
}

impl Frame {
    /// Falls back to `fallback_angle` when `toward` coincides with `origin`.
    pub fn toward(origin: Vec2, toward: Vec2, fallback_angle: f64) -> Self {
        let d = toward - origin;
        let angle = if d.norm() > 1e-9 { d.angle() } else { fallback_angle };
        Self { origin, angle }
    }

    pub fn point(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotated(-self.angle)
    }

    pub fn vector(&self, v: Vec2) -> Vec2 {
        v.rotated(-self.angle)
    }

    pub fn heading(&self, h: f64) -> f64 {
        wrap_angle(h - self.angle)
    }
}

/// Azimuth of a frame-local point; zero at the origin.
pub(crate) fn azimuth(p: Vec2) -> f64 {
    if p.norm() > 1e-12 {
        p.angle()
    } else {
        0.0
    }
}

/// Nearest point on each arena edge (west, east, south, north) in `frame`, scaled by `l`.
pub(crate) fn boundary_block(frame: &Frame, bounds: &Rect, at: Vec2, l: f64) -> [f64; 8] {
    let edges = [
        Vec2::new(bounds.min.x, at.y),
        Vec2::new(bounds.max.x, at.y),
        Vec2::new(at.x, bounds.min.y),
        Vec2::new(at.x, bounds.max.y),
    ];
    let mut out = [0.0; 8];
    for (i, e) in edges.iter().enumerate() {
        let p = frame.point(*e);
        out[2 * i] = p.x / l;
        out[2 * i + 1] = p.y / l;
    }
    out
}
