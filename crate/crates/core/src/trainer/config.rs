use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, Role, Term};
use crate::net::{Network, OutputConstraint};

/// Which equations are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// S, I and β networks on the full SIR system.
    Full,
    /// I and R_t on the reduced equation.
    Reduced,
    /// Reduced equation plus hospitalizations Δ_H = δσI.
    Hosp,
    /// As `Hosp`, fitted to daily new infections instead of prevalence.
    HospI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Joint,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FullJoint,
    FullSplit,
    ReducedJoint,
    ReducedSplit,
    HospJoint,
    HospSplit,
    #[serde(rename = "hosp_I_joint")]
    HospIJoint,
    #[serde(rename = "hosp_I_split")]
    HospISplit,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::FullJoint,
        Strategy::FullSplit,
        Strategy::ReducedJoint,
        Strategy::ReducedSplit,
        Strategy::HospJoint,
        Strategy::HospSplit,
        Strategy::HospIJoint,
        Strategy::HospISplit,
    ];

    pub fn new(variant: ModelVariant, approach: Approach) -> Self {
        use Approach::*;
        use ModelVariant::*;
        match (variant, approach) {
            (Full, Joint) => Strategy::FullJoint,
            (Full, Split) => Strategy::FullSplit,
            (Reduced, Joint) => Strategy::ReducedJoint,
            (Reduced, Split) => Strategy::ReducedSplit,
            (Hosp, Joint) => Strategy::HospJoint,
            (Hosp, Split) => Strategy::HospSplit,
            (HospI, Joint) => Strategy::HospIJoint,
            (HospI, Split) => Strategy::HospISplit,
        }
    }

    pub fn variant(self) -> ModelVariant {
        use Strategy::*;
        match self {
            FullJoint | FullSplit => ModelVariant::Full,
            ReducedJoint | ReducedSplit => ModelVariant::Reduced,
            HospJoint | HospSplit => ModelVariant::Hosp,
            HospIJoint | HospISplit => ModelVariant::HospI,
        }
    }

    pub fn approach(self) -> Approach {
        use Strategy::*;
        match self {
            FullJoint | ReducedJoint | HospJoint | HospIJoint => Approach::Joint,
            _ => Approach::Split,
        }
    }

    pub fn name(self) -> &'static str {
        use Strategy::*;
        match self {
            FullJoint => "full_joint",
            FullSplit => "full_split",
            ReducedJoint => "reduced_joint",
            ReducedSplit => "reduced_split",
            HospJoint => "hosp_joint",
            HospSplit => "hosp_split",
            HospIJoint => "hosp_I_joint",
            HospISplit => "hosp_I_split",
        }
    }

    /// Networks the variant trains.
    pub fn roles(self) -> &'static [Role] {
        use Role::*;
        match self {
            Strategy::FullJoint | Strategy::FullSplit => &[Susceptible, Infected, Beta],
            Strategy::ReducedJoint | Strategy::ReducedSplit => &[Infected, Rt],
            Strategy::HospJoint => &[DeltaH, Infected, Sigma, Rt],
            Strategy::HospSplit | Strategy::HospISplit => &[DeltaH, Sigma, Rt],
            Strategy::HospIJoint => &[DeltaH, DeltaI, Infected, Sigma, Rt],
        }
    }

    /// Network fitted to data alone in the first split phase.
    pub fn data_role(self) -> Role {
        match self.variant() {
            ModelVariant::Full | ModelVariant::Reduced => Role::Infected,
            ModelVariant::Hosp | ModelVariant::HospI => Role::DeltaH,
        }
    }

    /// Terms of the joint loss, or of the second split phase.
    pub fn physics_terms(self) -> Vec<Term> {
        use Term::*;
        match self {
            Strategy::FullJoint => vec![DataI, OdeS, OdeI, OdeR, InitS, InitI, InitR],
            Strategy::FullSplit => vec![OdeS, OdeI, OdeR, InitS, InitI, InitR],
            Strategy::ReducedJoint => vec![DataI, Reduced],
            Strategy::ReducedSplit => vec![Reduced],
            Strategy::HospJoint => vec![DataI, DataH, Reduced, HospLink],
            Strategy::HospSplit => vec![DataIFromH, SplitHosp],
            Strategy::HospIJoint => vec![DataFlow, DataH, Reduced, HospLink, FlowLink],
            Strategy::HospISplit => vec![DataFlowFromH, SplitHosp],
        }
    }

    /// Term of the first split phase.
    pub fn data_term(self) -> Term {
        match self.data_role() {
            Role::Infected => Term::DataI,
            _ => Term::DataH,
        }
    }

    /// Starting weights for `physics_terms`. Only the full model is weighted.
    pub fn initial_weights(self, w: &LossWeights) -> Vec<f64> {
        let a = w.as_array();
        match self {
            Strategy::FullJoint => a.to_vec(),
            Strategy::FullSplit => a[1..].to_vec(),
            _ => vec![1.0; self.physics_terms().len()],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Shape of one network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetSpec {
    Dense {
        depth: usize,
        width: usize,
    },
    /// A single trainable nonnegative scalar.
    Constant {
        init: f64,
    },
}

impl NetSpec {
    pub fn build(&self, constraint: OutputConstraint, seed: u64) -> Result<Network> {
        match *self {
            NetSpec::Dense { depth, width } => Network::dense_with(depth, width, constraint, seed),
            NetSpec::Constant { init } => Ok(Network::constant(init)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NetSpec::Dense { depth, width } => format!("{depth}x{width}"),
            NetSpec::Constant { .. } => "constant".into(),
        }
    }
}

/// How nonnegativity of network outputs is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Positivity {
    /// Square the final affine output.
    Hard,
    /// Unconstrained output plus `weight · mean(min(u, 0)²)` over collocation points.
    Penalty { weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtkConfig {
    pub enabled: bool,
    /// Epochs between weight updates.
    pub period: usize,
    /// Share of the previous weight kept at each update.
    pub smoothing: f64,
    /// Points per term used to estimate each trace.
    pub sample_points: usize,
}

impl Default for NtkConfig {
    fn default() -> Self {
        NtkConfig {
            enabled: true,
            period: 50,
            smoothing: 0.5,
            sample_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs_joint: usize,
    pub epochs_data: usize,
    /// Data-phase epochs when the data set has at most 13 points.
    pub epochs_data_small: usize,
    pub epochs_physics: usize,
    /// Epochs per phase when a sequential window extends a trained model.
    pub epochs_extension: Option<usize>,
    pub batch_joint: usize,
    pub batch_data: usize,
    pub batch_physics: usize,
    pub n_collocation: usize,
    /// Initial learning rate of the data-fitting phase.
    pub lr_init: f64,
    /// Initial learning rate of every phase with residual terms (joint
    /// training and the physics phase of split training).
    pub lr_init_physics: f64,
    pub lr_patience: usize,
    pub lr_min_delta: f64,
    pub lr_floor: f64,
    pub seed: u64,
    pub architectures: BTreeMap<Role, NetSpec>,
    pub weights: LossWeights,
    pub ntk: NtkConfig,
    pub positivity: Positivity,
    /// Initial output of a dense σ network, set through its output bias.
    pub sigma_init: f64,
    /// Epoch loss above this multiple of the first epoch's aborts training.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::FullSplit,
            epochs_joint: 5000,
            epochs_data: 3000,
            epochs_data_small: 1000,
            epochs_physics: 1000,
            epochs_extension: None,
            batch_joint: 100,
            batch_data: 10,
            batch_physics: 100,
            n_collocation: 6000,
            lr_init: 1e-3,
            lr_init_physics: 3e-4,
            lr_patience: 100,
            lr_min_delta: 1e-4,
            lr_floor: 1e-5,
            seed: 0,
            architectures: default_architectures(),
            weights: LossWeights::default(),
            ntk: NtkConfig::default(),
            positivity: Positivity::Hard,
            sigma_init: 0.1,
            divergence_factor: 1e6,
        }
    }
}

/// S, I, Δ_H, Δ_I: 4×50; β, R_t: 4×100; σ: 10×5.
pub fn default_architectures() -> BTreeMap<Role, NetSpec> {
    let state = NetSpec::Dense {
        depth: 4,
        width: 50,
    };
    let rate = NetSpec::Dense {
        depth: 4,
        width: 100,
    };
    BTreeMap::from([
        (Role::Susceptible, state),
        (Role::Infected, state),
        (Role::DeltaH, state),
        (Role::DeltaI, state),
        (Role::Beta, rate),
        (Role::Rt, rate),
        (
            Role::Sigma,
            NetSpec::Dense {
                depth: 10,
                width: 5,
            },
        ),
    ])
}

impl TrainConfig {
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn architecture(&self, role: Role) -> NetSpec {
        self.architectures
            .get(&role)
            .copied()
            .unwrap_or_else(|| default_architectures()[&role])
    }

    /// Initial learning rate of the phase called `phase`.
    pub fn initial_lr(&self, phase: &str) -> f64 {
        if phase == "data" {
            self.lr_init
        } else {
            self.lr_init_physics
        }
    }

    pub fn data_epochs(&self, n_data: usize) -> usize {
        if n_data <= 13 {
            self.epochs_data_small
        } else {
            self.epochs_data
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs_joint", self.epochs_joint),
            ("epochs_data", self.epochs_data),
            ("epochs_data_small", self.epochs_data_small),
            ("epochs_physics", self.epochs_physics),
            ("batch_joint", self.batch_joint),
            ("batch_data", self.batch_data),
            ("batch_physics", self.batch_physics),
            ("n_collocation", self.n_collocation),
            ("lr_patience", self.lr_patience),
            ("ntk.period", self.ntk.period),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for lr in [self.lr_init, self.lr_init_physics] {
            if !(lr > 0.0 && self.lr_floor > 0.0 && self.lr_floor <= lr) {
                return Err(Error::Config(format!(
                    "learning rates must satisfy 0 < floor ≤ initial, got {} and {lr}",
                    self.lr_floor
                )));
            }
        }
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::Config("sigma_init must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ntk.smoothing) {
            return Err(Error::Config("ntk.smoothing must lie in [0, 1]".into()));
        }
        if let Positivity::Penalty { weight } = self.positivity {
            if !(weight >= 0.0) {
                return Err(Error::Config(
                    "positivity penalty must be nonnegative".into(),
                ));
            }
        }
        for spec in self.architectures.values() {
            if let NetSpec::Dense { depth, width } = spec {
                if *depth == 0 || *width == 0 {
                    return Err(Error::Config(format!(
                        "architecture {depth}x{width} must have positive sizes"
                    )));
                }
            }
        }
        self.weights.validate()
    }

    /// Seed of the network playing `role`.
    pub fn net_seed(&self, role: Role) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(1 + role.index() as u64)
    }

    pub fn output_constraint(&self) -> OutputConstraint {
        match self.positivity {
            Positivity::Hard => OutputConstraint::Square,
            Positivity::Penalty { .. } => OutputConstraint::None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
            assert_eq!(Strategy::new(s.variant(), s.approach()), s);
        }
        assert!("full".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_defaults_validate_and_round_trip() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let partial: TrainConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.epochs_joint, 5000);
    }

    #[test]
    fn rejects_zero_counts() {
        let c = TrainConfig {
            batch_joint: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn full_split_weights_skip_data_term() {
        let w = LossWeights::from_array([9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            Strategy::FullSplit.initial_weights(&w),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
        assert_eq!(Strategy::FullSplit.physics_terms().len(), 6);
    }
}
