use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Role, ScalingConstants};
use crate::net::{LrSchedule, Network};

use super::config::{ModelVariant, Strategy, TrainConfig};
use super::engine::{Networks, Optimizers, PhaseHistory};

/// Optimizer state kept so that a later window can continue training.
#[derive(Debug, Clone, Default)]
pub struct ResumeState {
    pub optimizers: BTreeMap<String, Optimizers>,
    pub schedules: BTreeMap<String, LrSchedule>,
    pub weights: BTreeMap<String, Vec<f64>>,
}

/// Trained networks with the scales and configuration that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub strategy: Strategy,
    pub networks: Networks,
    pub scales: ScalingConstants,
    pub config: TrainConfig,
    pub history: Vec<PhaseHistory>,
    pub wall_time_s: f64,
    /// End of the training window in scaled time.
    pub t_end_scaled: f64,
    #[serde(skip)]
    pub resume: ResumeState,
}

impl PartialEq for TrainedModel {
    fn eq(&self, other: &Self) -> bool {
        self.strategy == other.strategy
            && self.networks == other.networks
            && self.scales == other.scales
            && self.config == other.config
            && self.history == other.history
            && self.wall_time_s.to_bits() == other.wall_time_s.to_bits()
            && self.t_end_scaled == other.t_end_scaled
    }
}

impl TrainedModel {
    pub fn network(&self, role: Role) -> Option<&Network> {
        self.networks.get(&role)
    }

    /// Total epochs over all phases.
    pub fn epochs_run(&self) -> usize {
        self.history.iter().map(|h| h.rows.len()).sum()
    }

    pub fn phase_wall_time(&self, phase: &str) -> Option<f64> {
        self.history
            .iter()
            .filter(|h| h.phase == phase)
            .map(|h| h.wall_time_s)
            .reduce(|a, b| a + b)
    }

    /// Scaled infections Î_s at scaled times. Split hospitalization models
    /// have no infection network; Î_s is recovered from Δ̂_H,s and σ̂.
    pub fn infected_scaled(&self, ts: &[f64]) -> Option<Vec<f64>> {
        if let Some(net) = self.network(Role::Infected) {
            return Some(net.forward_batch(ts).values().to_vec());
        }
        let dh = self.network(Role::DeltaH)?.forward_batch(ts);
        let sigma = self.network(Role::Sigma)?.forward_batch(ts);
        let k = self.scales.c_h / (self.scales.model.delta * self.scales.c);
        Some(
            dh.values()
                .iter()
                .zip(sigma.values())
                .map(|(h, s)| k * h / s)
                .collect(),
        )
    }

    /// Scaled daily new infections Δ̂_I,s: the network when trained, else
    /// `δR̂_tÎ_s`.
    pub fn new_infections_scaled(&self, ts: &[f64]) -> Option<Vec<f64>> {
        if let Some(net) = self.network(Role::DeltaI) {
            return Some(net.forward_batch(ts).values().to_vec());
        }
        let i = self.infected_scaled(ts)?;
        let rt = self.network(Role::Rt)?.forward_batch(ts);
        Some(
            i.iter()
                .zip(rt.values())
                .map(|(i, r)| self.scales.model.delta * r * i)
                .collect(),
        )
    }

    /// Effective reproduction number: the R_t network, or `β̂Ŝ/(δN)` for the
    /// full model.
    pub fn rt(&self, ts: &[f64]) -> Option<Vec<f64>> {
        if let Some(net) = self.network(Role::Rt) {
            return Some(net.forward_batch(ts).values().to_vec());
        }
        let beta = self.network(Role::Beta)?.forward_batch(ts);
        let s = self.network(Role::Susceptible)?.forward_batch(ts);
        let m = &self.scales.model;
        Some(
            beta.values()
                .iter()
                .zip(s.values())
                .map(|(b, s)| b * s * self.scales.c / (m.delta * m.n))
                .collect(),
        )
    }

    pub fn variant(&self) -> ModelVariant {
        self.strategy.variant()
    }

    /// Writes `model.json`, one JSON file per network, `config.json` and a
    /// loss-history CSV per phase into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("model.json"), self)?;
        write_json(&dir.join("config.json"), &self.config)?;
        let nets = dir.join("networks");
        std::fs::create_dir_all(&nets).map_err(|e| Error::io(&nets, e))?;
        for (role, net) in &self.networks {
            net.save(nets.join(format!("{}.json", role.name())))?;
        }
        for h in &self.history {
            write_history_csv(&dir.join(format!("loss_history_{}.csv", h.phase)), h)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("model.json");
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let model: TrainedModel = serde_json::from_str(&raw).map_err(|e| Error::json(&path, e))?;
        for net in model.networks.values() {
            if let Network::Dense { net, .. } = net {
                net.check()?;
            }
        }
        Ok(model)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// `epoch,total,<term>...,lr,<weight>...`.
pub fn write_history_csv(path: &Path, h: &PhaseHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["epoch".to_string(), "total".to_string()];
    header.extend(h.term_names.iter().cloned());
    header.push("lr".into());
    header.extend(h.term_names.iter().map(|n| format!("w_{n}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for row in &h.rows {
        let mut rec = vec![row.epoch.to_string(), row.total.to_string()];
        rec.extend(row.terms.iter().map(f64::to_string));
        rec.push(row.lr.to_string());
        rec.extend(row.weights.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
