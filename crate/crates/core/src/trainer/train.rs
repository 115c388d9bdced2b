use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{InfectionSeries, ObservationSet};
use crate::error::{Error, Result};
use crate::losses::{Role, ScalingConstants};
use crate::net::{LrSchedule, Network, OutputConstraint};

use super::config::{
    Approach, ModelVariant, NetSpec, NtkConfig, Positivity, Strategy, TrainConfig,
};
use super::engine::{batch_loss, freeze, run_phase, Networks, Phase, PhaseHistory, Points};
use super::model::{ResumeState, TrainedModel};

const COLLOCATION_STREAM: u64 = 0xC011_0CA7;
const SHUFFLE_STREAM: u64 = 0x5_4FF1_E000;

/// `n` i.i.d. uniform scaled times on `[0, 1]`.
pub fn sample_collocation(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn check_observations(strategy: Strategy, obs: &ObservationSet) -> Result<()> {
    let variant = strategy.variant();
    let want_kind = match variant {
        ModelVariant::HospI => InfectionSeries::Incidence,
        _ => InfectionSeries::Prevalence,
    };
    if obs.kind != want_kind {
        return Err(Error::Config(format!(
            "{strategy} needs {want_kind:?} infection data, got {:?}",
            obs.kind
        )));
    }
    let needs_hosp = matches!(variant, ModelVariant::Hosp | ModelVariant::HospI);
    if needs_hosp && obs.hospitalizations_scaled.is_none() {
        return Err(Error::Config(format!(
            "{strategy} needs hospitalization data"
        )));
    }
    if obs.is_empty() {
        return Err(Error::Config("no observations".into()));
    }
    Ok(())
}

/// Dense networks start from Glorot weights. Output biases are set so that
/// σ̂ starts at `sigma_init`, R̂_t at the threshold value 1 and Ŝ_s at the
/// scaled initial susceptibles.
fn build_network(config: &TrainConfig, role: Role, sc: &ScalingConstants) -> Result<Network> {
    let spec = config.architecture(role);
    let constraint = config.output_constraint();
    let mut net = spec.build(constraint, config.net_seed(role))?;
    let start = match role {
        Role::Sigma => Some(config.sigma_init),
        Role::Susceptible => Some((sc.model.n - sc.model.i0) / sc.c),
        Role::Rt => Some(1.0),
        _ => None,
    };
    if let (Some(start), NetSpec::Dense { .. }) = (start, spec) {
        let bias = match constraint {
            OutputConstraint::Square => start.sqrt(),
            OutputConstraint::None => start,
        };
        *net.params_mut().last_mut().unwrap() = bias;
    }
    Ok(net)
}

fn shuffle_rng(config: &TrainConfig, phase: &str, t_end_scaled: f64) -> ChaCha8Rng {
    let tag = phase
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    ChaCha8Rng::seed_from_u64(
        config.seed ^ SHUFFLE_STREAM ^ tag ^ (t_end_scaled * 1e6).round() as u64,
    )
}

struct Fit<'a> {
    config: &'a TrainConfig,
    strategy: Strategy,
    obs: &'a ObservationSet,
    t_end_scaled: f64,
    extension: bool,
}

impl Fit<'_> {
    fn epochs(&self, base: usize) -> usize {
        if self.extension {
            self.config
                .epochs_extension
                .unwrap_or(self.config.epochs_physics)
        } else {
            base
        }
    }

    fn penalty(&self) -> Option<f64> {
        match self.config.positivity {
            Positivity::Hard => None,
            Positivity::Penalty { weight } => Some(weight),
        }
    }

    fn ntk(&self) -> Option<NtkConfig> {
        (self.strategy.variant() == ModelVariant::Full).then_some(self.config.ntk)
    }

    fn phase(
        &self,
        nets: &mut Networks,
        resume: &mut ResumeState,
        history: &mut Vec<PhaseHistory>,
        phase: Phase,
    ) -> Result<()> {
        let c = self.config;
        let name = phase.name.clone();
        let mut optimizers = resume.optimizers.remove(&name).unwrap_or_default();
        let mut schedule = match resume.schedules.get(&name) {
            Some(prev) => {
                LrSchedule::new(prev.current_lr, c.lr_patience, c.lr_min_delta, c.lr_floor)
            }
            None => LrSchedule::new(
                c.initial_lr(&name),
                c.lr_patience,
                c.lr_min_delta,
                c.lr_floor,
            ),
        };
        let offset = history
            .iter()
            .filter(|h| h.phase == name)
            .map(|h| h.rows.len())
            .sum();
        let mut rng = shuffle_rng(c, &name, self.t_end_scaled);
        let (h, weights) = run_phase(
            nets,
            &mut optimizers,
            &mut schedule,
            &phase,
            &self.obs.scales,
            &mut rng,
            offset,
        )?;
        resume.optimizers.insert(name.clone(), optimizers);
        resume.schedules.insert(name.clone(), schedule);
        resume.weights.insert(name, weights);
        history.push(h);
        Ok(())
    }

    fn run(&self, prior: Option<TrainedModel>) -> Result<TrainedModel> {
        let c = self.config;
        c.validate()?;
        check_observations(self.strategy, self.obs)?;
        let obs = self.obs;
        let (mut nets, mut resume, mut history, prior_time) = match prior {
            Some(m) => (m.networks, m.resume, m.history, m.wall_time_s),
            None => {
                let nets = self
                    .strategy
                    .roles()
                    .iter()
                    .map(|&r| Ok((r, build_network(c, r, &obs.scales)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                (nets, ResumeState::default(), Vec::new(), 0.0)
            }
        };
        let collocation: Vec<f64> =
            sample_collocation(c.n_collocation, c.seed ^ COLLOCATION_STREAM)
                .into_iter()
                .map(|t| t * self.t_end_scaled)
                .collect();
        let initial = self.strategy.variant() == ModelVariant::Full;
        let points = Points::new(Some(obs), &collocation, initial);
        let weights_for = |name: &str, resume: &ResumeState| {
            resume
                .weights
                .get(name)
                .cloned()
                .unwrap_or_else(|| self.strategy.initial_weights(&c.weights))
        };

        match self.strategy.approach() {
            Approach::Joint => {
                let weights = weights_for("joint", &resume);
                let phase = Phase {
                    name: "joint".into(),
                    terms: self.strategy.physics_terms(),
                    weights,
                    trainable: self.strategy.roles().to_vec(),
                    points: &points,
                    frozen: BTreeMap::new(),
                    batch: c.batch_joint,
                    epochs: self.epochs(c.epochs_joint),
                    ntk: self.ntk(),
                    penalty: self.penalty(),
                    divergence_factor: c.divergence_factor,
                };
                self.phase(&mut nets, &mut resume, &mut history, phase)?;
            }
            Approach::Split => {
                let data_role = self.strategy.data_role();
                let data_points = Points::new(Some(obs), &[], false);
                let n_data = obs.len();
                let batch = if n_data <= 13 { n_data } else { c.batch_data };
                let phase1 = Phase {
                    name: "data".into(),
                    terms: vec![self.strategy.data_term()],
                    weights: vec![1.0],
                    trainable: vec![data_role],
                    points: &data_points,
                    frozen: BTreeMap::new(),
                    batch,
                    epochs: self.epochs(c.data_epochs(n_data)),
                    ntk: None,
                    penalty: self.penalty(),
                    divergence_factor: c.divergence_factor,
                };
                self.phase(&mut nets, &mut resume, &mut history, phase1)?;

                let frozen = BTreeMap::from([(data_role, freeze(&nets[&data_role], &points))]);
                let trainable: Vec<Role> = self
                    .strategy
                    .roles()
                    .iter()
                    .copied()
                    .filter(|r| *r != data_role)
                    .collect();
                let weights = weights_for("physics", &resume);
                let phase2 = Phase {
                    name: "physics".into(),
                    terms: self.strategy.physics_terms(),
                    weights,
                    trainable,
                    points: &points,
                    frozen,
                    batch: c.batch_physics,
                    epochs: self.epochs(c.epochs_physics),
                    ntk: self.ntk(),
                    penalty: self.penalty(),
                    divergence_factor: c.divergence_factor,
                };
                self.phase(&mut nets, &mut resume, &mut history, phase2)?;
            }
        }
        let new_time: f64 = history
            .iter()
            .rev()
            .take(match self.strategy.approach() {
                Approach::Joint => 1,
                Approach::Split => 2,
            })
            .map(|h| h.wall_time_s)
            .sum();
        Ok(TrainedModel {
            strategy: self.strategy,
            networks: nets,
            scales: obs.scales,
            config: c.clone(),
            history,
            wall_time_s: prior_time + new_time,
            t_end_scaled: self.t_end_scaled,
            resume,
        })
    }
}

/// Trains with `config.strategy`.
pub fn train(config: &TrainConfig, obs: &ObservationSet) -> Result<TrainedModel> {
    Fit {
        config,
        strategy: config.strategy,
        obs,
        t_end_scaled: 1.0,
        extension: false,
    }
    .run(None)
}

/// Trains every network of the variant at once on the full composite loss.
pub fn train_joint(config: &TrainConfig, obs: &ObservationSet) -> Result<TrainedModel> {
    let strategy = Strategy::new(config.strategy.variant(), Approach::Joint);
    train(&config.clone().with_strategy(strategy), obs)
}

/// Fits the data-attached network first, then the remaining networks on the
/// physics loss with the first one frozen.
pub fn train_split(config: &TrainConfig, obs: &ObservationSet) -> Result<TrainedModel> {
    let strategy = Strategy::new(config.strategy.variant(), Approach::Split);
    train(&config.clone().with_strategy(strategy), obs)
}

/// Trains on observations up to scaled time `t_end_scaled`, with collocation
/// points drawn on `[0, t_end_scaled]`.
pub fn train_window(
    config: &TrainConfig,
    obs: &ObservationSet,
    t_end_scaled: f64,
) -> Result<TrainedModel> {
    Fit {
        config,
        strategy: config.strategy,
        obs,
        t_end_scaled,
        extension: false,
    }
    .run(None)
}

/// Continues training `model` on a longer window, keeping its parameters
/// and optimizer state. Each phase runs `epochs_extension` epochs
/// (`epochs_physics` when unset).
///
/// When `obs` carries different count scales than the model, the
/// count-valued networks are rescaled first so every prediction in
/// unscaled units is unchanged. Optimizer moments are kept as they are.
pub fn extend_training(
    mut model: TrainedModel,
    obs: &ObservationSet,
    t_end_scaled: f64,
) -> Result<TrainedModel> {
    if model.scales != obs.scales {
        let k = model.scales.c / obs.scales.c;
        let k_h = model.scales.c_h / obs.scales.c_h;
        for (role, net) in model.networks.iter_mut() {
            match role {
                Role::Susceptible | Role::Infected | Role::DeltaI => net.scale_output(k),
                Role::DeltaH => net.scale_output(k_h),
                Role::Beta | Role::Rt | Role::Sigma => {}
            }
        }
        model.scales = obs.scales;
    }
    let config = model.config.clone();
    Fit {
        config: &config,
        strategy: model.strategy,
        obs,
        t_end_scaled,
        extension: true,
    }
    .run(Some(model))
}

/// Loss of every term of the final phase evaluated once over all its points.
pub fn final_terms(model: &TrainedModel, obs: &ObservationSet) -> Result<Vec<(String, f64)>> {
    let strategy = model.strategy;
    let colloc: Vec<f64> = sample_collocation(
        model.config.n_collocation,
        model.config.seed ^ COLLOCATION_STREAM,
    )
    .into_iter()
    .map(|t| t * model.t_end_scaled)
    .collect();
    let initial = strategy.variant() == ModelVariant::Full;
    let points = Points::new(Some(obs), &colloc, initial);
    let phase = Phase {
        name: "eval".into(),
        terms: strategy.physics_terms(),
        weights: vec![1.0; strategy.physics_terms().len()],
        trainable: Vec::new(),
        points: &points,
        frozen: model
            .networks
            .iter()
            .map(|(r, n)| (*r, freeze(n, &points)))
            .collect(),
        batch: points.len(),
        epochs: 0,
        ntk: None,
        penalty: None,
        divergence_factor: f64::INFINITY,
    };
    let all: Vec<usize> = (0..points.len()).collect();
    let out = batch_loss(
        &model.networks,
        &phase,
        &phase.weights,
        &all,
        &obs.scales,
        false,
    )?;
    Ok(phase
        .terms
        .iter()
        .map(|t| t.name().to_string())
        .zip(out.terms)
        .collect())
}
