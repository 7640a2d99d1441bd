//! Line-of-sight air-to-ground channel, SINR, effective rate and TDMA scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams<T = f64> {
    pub path_loss_exponent: T,
    /// Watts.
    pub noise_power: T,
    /// Linear (not dB).
    pub sinr_threshold: T,
    /// Hz; scales spectral efficiency (bits/s/Hz) to bits/s.
    pub bandwidth: T,
}

impl Default for RadioParams<f64> {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            noise_power: 1e-6,
            sinr_threshold: 3.5,
            bandwidth: 20e6,
        }
    }
}

impl<T: Real> RadioParams<T> {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("radio.path_loss_exponent", self.path_loss_exponent),
            ("radio.noise_power", self.noise_power),
            ("radio.sinr_threshold", self.sinr_threshold),
            ("radio.bandwidth", self.bandwidth),
        ];
        for (name, v) in checks {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeMode {
    Active,
    Silent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState<T = f64> {
    pub position: Vec2<T>,
    /// Watts.
    pub tx_power: T,
    /// Bits.
    pub data_left: T,
    pub mode: NodeMode,
}

impl<T: Real> NodeState<T> {
    pub fn new(position: Vec2<T>, tx_power: T, data: T) -> Self {
        let mode = if data > T::zero() {
            NodeMode::Active
        } else {
            NodeMode::Silent
        };
        Self {
            position,
            tx_power,
            data_left: data.max(T::zero()),
            mode,
        }
    }

    pub fn is_active(&self) -> bool {
        self.mode == NodeMode::Active
    }

    /// Drain up to `bits`; returns the amount actually removed.
    pub fn drain(&mut self, bits: T) -> T {
        let taken = bits.min(self.data_left).max(T::zero());
        self.data_left -= taken;
        if self.data_left <= T::zero() {
            self.data_left = T::zero();
            self.mode = NodeMode::Silent;
        }
        taken
    }
}

/// A transmitter injecting interference at the UAV receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferer<T = f64> {
    pub position: Vec2<T>,
    pub altitude: T,
    /// Watts currently emitted.
    pub power: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport<T = f64> {
    pub received_power: Vec<T>,
    pub sinr: Vec<T>,
    pub scheduled_node: Option<usize>,
    /// bits/s/Hz of the scheduled link after thresholding.
    pub effective_rate: T,
}

impl<T: Real> LinkReport<T> {
    pub fn empty(n: usize) -> Self {
        Self {
            received_power: vec![T::zero(); n],
            sinr: vec![T::zero(); n],
            scheduled_node: None,
            effective_rate: T::zero(),
        }
    }

    /// SINR of the scheduled link, if any.
    pub fn scheduled_sinr(&self) -> Option<T> {
        self.scheduled_node.map(|n| self.sinr[n])
    }
}

pub fn path_loss<T: Real>(d: T, h: T, alpha: T) -> Result<T> {
    if d == T::zero() && h == T::zero() {
        return Err(Error::Domain("path loss undefined at zero separation".into()));
    }
    Ok((d * d + h * h).powf(alpha / T::lit(2.0)))
}

/// Elevation-angle gain of a horizontally oriented receive antenna.
pub fn antenna_gain<T: Real>(d: T, h: T) -> Result<T> {
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("antenna gain needs h > 0, got {h}")));
    }
    Ok(h / (d * d + h * h).sqrt())
}

pub fn received_power<T: Real>(tx_power: T, d: T, h: T, params: &RadioParams<T>) -> Result<T> {
    let gain = antenna_gain(d, h)?;
    let loss = path_loss(d, h, params.path_loss_exponent)?;
    Ok(tx_power * gain / loss)
}

pub fn ground_jammer_interference<T: Real>(p_j: T, d_jv: T, h_v: T, alpha: T) -> T {
    debug_assert!(h_v > T::zero());
    p_j * h_v * (d_jv * d_jv + h_v * h_v).powf(-(alpha + T::one()) / T::lit(2.0))
}

/// Aircraft-to-aircraft interference; zero when both fly at the same height.
pub fn aerial_jammer_interference<T: Real>(p_j: T, d_jv: T, h_v: T, h_j: T, alpha: T) -> T {
    let dh = (h_v - h_j).abs();
    if dh == T::zero() {
        return T::zero();
    }
    p_j * dh * (d_jv * d_jv + dh * dh).powf(-(alpha + T::one()) / T::lit(2.0))
}

pub fn sinr<T: Real>(received: T, interference: T, noise: T) -> T {
    received / (noise + interference)
}

/// Spectral efficiency after thresholding; the threshold itself is reliable.
pub fn effective_rate<T: Real>(s: T, threshold: T) -> T {
    if s >= threshold {
        (T::one() + s).log2()
    } else {
        T::zero()
    }
}

/// Largest-SINR scheduling over active nodes; ties go to the lowest index.
pub fn schedule<T: Real>(sinrs: &[(usize, T)], modes: &[NodeMode]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (&(idx, s), mode) in sinrs.iter().zip(modes) {
        if *mode != NodeMode::Active {
            continue;
        }
        best = match best {
            Some((bi, bs)) if bs > s || (bs == s && bi < idx) => Some((bi, bs)),
            _ => Some((idx, s)),
        };
    }
    best.map(|(i, _)| i)
}

pub fn total_interference<T: Real>(
    uav_position: Vec2<T>,
    uav_altitude: T,
    interferers: &[Interferer<T>],
    alpha: T,
) -> T {
    interferers
        .iter()
        .filter(|j| j.power > T::zero())
        .map(|j| {
            aerial_jammer_interference(
                j.power,
                uav_position.distance(j.position),
                uav_altitude,
                j.altitude,
                alpha,
            )
        })
        .sum()
}

/// Received powers, SINRs and the scheduled link for a UAV at `uav_position`.
pub fn link_report<T: Real>(
    uav_position: Vec2<T>,
    uav_altitude: T,
    nodes: &[NodeState<T>],
    interferers: &[Interferer<T>],
    params: &RadioParams<T>,
) -> Result<LinkReport<T>> {
    let interference =
        total_interference(uav_position, uav_altitude, interferers, params.path_loss_exponent);
    let mut powers = Vec::with_capacity(nodes.len());
    let mut sinrs = Vec::with_capacity(nodes.len());
    for n in nodes {
        let d = uav_position.distance(n.position);
        let pr = received_power(n.tx_power, d, uav_altitude, params)?;
        powers.push(pr);
        sinrs.push(sinr(pr, interference, params.noise_power));
    }
    let indexed: Vec<(usize, T)> = sinrs.iter().copied().enumerate().collect();
    let modes: Vec<NodeMode> = nodes.iter().map(|n| n.mode).collect();
    let scheduled_node = schedule(&indexed, &modes);
    let effective = scheduled_node
        .map(|i| effective_rate(sinrs[i], params.sinr_threshold))
        .unwrap_or_else(T::zero);
    Ok(LinkReport {
        received_power: powers,
        sinr: sinrs,
        scheduled_node,
        effective_rate: effective,
    })
}

/// Everything needed to evaluate the reliable-transmission region at one instant.
#[derive(Debug, Clone)]
pub struct RegionScene<T = f64> {
    pub bounds: Rect<T>,
    pub uav_altitude: T,
    pub nodes: Vec<NodeState<T>>,
    pub interferers: Vec<Interferer<T>>,
    pub params: RadioParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid<T = f64> {
    pub origin: Vec2<T>,
    pub resolution: T,
    pub nx: usize,
    pub ny: usize,
    /// Row-major by y, then x.
    pub cells: Vec<bool>,
}

impl<T: Real> RegionGrid<T> {
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2<T> {
        let half = T::lit(0.5);
        Vec2::new(
            self.origin.x + (T::lit(ix as f64) + half) * self.resolution,
            self.origin.y + (T::lit(iy as f64) + half) * self.resolution,
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.nx + ix]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// True iff every reliable cell of `self` is reliable in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    /// CSV with header `x,y,reliable`, one row per cell, row-major by y then x.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "reliable"])?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let c = self.cell_center(ix, iy);
                w.write_record([
                    c.x.to_f64_lossy().to_string(),
                    c.y.to_f64_lossy().to_string(),
                    u8::from(self.get(ix, iy)).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cells whose best active-node SINR meets the threshold.
pub fn reliable_region<T: Real>(scene: &RegionScene<T>, resolution: T) -> Result<RegionGrid<T>> {
    if !(resolution > T::zero()) {
        return Err(Error::config("region.resolution", "must be > 0"));
    }
    let b = scene.bounds;
    let nx = ((b.max.x - b.min.x) / resolution).floor().to_usize().unwrap_or(0);
    let ny = ((b.max.y - b.min.y) / resolution).floor().to_usize().unwrap_or(0);
    let mut grid = RegionGrid {
        origin: b.min,
        resolution,
        nx,
        ny,
        cells: Vec::new(),
    };
    let alpha = scene.params.path_loss_exponent;
    let cells: Result<Vec<bool>> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let p = grid.cell_center(k % nx, k / nx);
            let interference =
                total_interference(p, scene.uav_altitude, &scene.interferers, alpha);
            let mut reliable = false;
            for n in scene.nodes.iter().filter(|n| n.is_active()) {
                let d = p.distance(n.position);
                let pr = received_power(n.tx_power, d, scene.uav_altitude, &scene.params)?;
                if sinr(pr, interference, scene.params.noise_power) >= scene.params.sinr_threshold {
                    reliable = true;
                    break;
                }
            }
            Ok(reliable)
        })
        .collect();
    grid.cells = cells?;
    Ok(grid)
}
