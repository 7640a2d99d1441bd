use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{DuelingNet, NetSpec};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

const FORMAT: &str = "uavjam-qnet";
const VERSION: u32 = 1;

/// Self-describing JSON dump of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetSpec,
    pub params: Vec<f64>,
    pub running: Vec<f64>,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    /// Caller-defined context (role, feature settings, defense, ...).
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_net<T: Real>(net: &DuelingNet<T>, train: Option<TrainConfig>, seed: u64, meta: serde_json::Value) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            spec: net.spec().clone(),
            params: net.params.iter().map(|p| p.to_f64_lossy()).collect(),
            running: net.running.iter().map(|p| p.to_f64_lossy()).collect(),
            train,
            seed,
            meta,
        }
    }

    pub fn to_net<T: Real>(&self) -> Result<DuelingNet<T>> {
        DuelingNet::from_parts(
            self.spec.clone(),
            self.params.iter().map(|p| T::lit(*p)).collect(),
            self.running.iter().map(|p| T::lit(*p)).collect(),
        )
    }

    /// Network with the given input and output widths, or a checkpoint error.
    pub fn to_net_checked<T: Real>(&self, input: usize, actions: usize) -> Result<DuelingNet<T>> {
        if self.spec.input != input || self.spec.actions != actions {
            return Err(Error::Checkpoint(format!(
                "network is {}->{} but the environment needs {}->{}",
                self.spec.input, self.spec.actions, input, actions
            )));
        }
        self.to_net()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)
            .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
        let c: Self = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Checkpoint(format!("cannot parse {}: {e}", path.display())))?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} v{}",
                c.format, c.version
            )));
        }
        c.to_net::<f64>()?;
        Ok(c)
    }
}
