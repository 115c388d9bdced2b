//! Mini-batch loop shared by every strategy and phase.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::losses::{
    adapt_weights_ntk, deriv_slot, residual_at, smooth, value_slot, Observed, PointKind,
    PointValues, Role, ScalingConstants, Term,
};
use crate::net::{adam_step, AdamState, LrSchedule, Network, Tape};

use super::config::NtkConfig;

pub type Networks = BTreeMap<Role, Network>;
pub type Optimizers = BTreeMap<Role, AdamState>;

/// Every point a phase may evaluate: data points first, then collocation
/// points, then `t_s = 0` when initial conditions are enforced.
#[derive(Debug, Clone, Default)]
pub struct Points {
    pub t_s: Vec<f64>,
    pub kind: Vec<PointKind>,
    pub obs: Vec<Observed>,
}

impl Points {
    pub fn new(data: Option<&ObservationSet>, collocation: &[f64], initial: bool) -> Self {
        let mut p = Points::default();
        if let Some(o) = data {
            for k in 0..o.len() {
                p.t_s.push(o.times_scaled[k]);
                p.kind.push(PointKind::Data);
                p.obs.push(Observed {
                    infections: o.infections_scaled[k],
                    hospitalizations: o.hospitalizations_scaled.as_ref().map(|h| h[k]),
                });
            }
        }
        for &t in collocation {
            p.t_s.push(t);
            p.kind.push(PointKind::Collocation);
            p.obs.push(Observed::default());
        }
        if initial {
            p.t_s.push(0.0);
            p.kind.push(PointKind::Initial);
            p.obs.push(Observed::default());
        }
        p
    }

    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    pub fn of_kind(&self, kind: PointKind) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.kind[k] == kind).collect()
    }
}

/// Values and input derivatives of a network that is not being trained,
/// indexed like [`Points`].
#[derive(Debug, Clone)]
pub struct FrozenValues {
    values: Vec<f64>,
    derivs: Vec<f64>,
}

pub fn freeze(net: &Network, points: &Points) -> FrozenValues {
    let tape = net.forward_batch(&points.t_s);
    FrozenValues {
        values: tape.values().to_vec(),
        derivs: tape.derivs().to_vec(),
    }
}

/// One training phase: which networks move and which terms they minimize.
pub struct Phase<'a> {
    pub name: String,
    pub terms: Vec<Term>,
    pub weights: Vec<f64>,
    pub trainable: Vec<Role>,
    pub points: &'a Points,
    pub frozen: BTreeMap<Role, FrozenValues>,
    pub batch: usize,
    pub epochs: usize,
    pub ntk: Option<NtkConfig>,
    pub penalty: Option<f64>,
    pub divergence_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub total: f64,
    /// Unweighted mean-squared value of each term over the epoch.
    pub terms: Vec<f64>,
    pub lr: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistory {
    pub phase: String,
    pub term_names: Vec<String>,
    pub rows: Vec<HistoryRow>,
    pub wall_time_s: f64,
}

impl PhaseHistory {
    pub fn first_loss(&self) -> Option<f64> {
        self.rows.first().map(|r| r.total)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total)
    }

    pub fn final_weights(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.weights.as_slice())
    }
}

/// Loss of one batch, its per-term parts and (optionally) its gradient.
pub struct BatchLoss {
    pub total: f64,
    pub terms: Vec<f64>,
    pub grads: BTreeMap<Role, Vec<f64>>,
}

struct RoleInputs {
    tapes: BTreeMap<Role, Tape>,
}

fn used_roles(terms: &[Term]) -> Vec<Role> {
    let mut roles: Vec<Role> = terms
        .iter()
        .flat_map(|t| t.roles().iter().copied())
        .collect();
    roles.sort();
    roles.dedup();
    roles
}

fn point_values(
    roles: &[Role],
    inputs: &RoleInputs,
    frozen: &BTreeMap<Role, FrozenValues>,
    pos: usize,
    point: usize,
) -> PointValues {
    let mut pv = PointValues::new();
    for &role in roles {
        if let Some(tape) = inputs.tapes.get(&role) {
            pv.set(role, tape.values()[pos], tape.derivs()[pos], true);
        } else if let Some(f) = frozen.get(&role) {
            pv.set(role, f.values[point], f.derivs[point], false);
        }
    }
    pv
}

/// Weighted loss over the points `batch`, with each term averaged over the
/// batch points of its kind.
pub fn batch_loss(
    nets: &Networks,
    phase: &Phase,
    weights: &[f64],
    batch: &[usize],
    sc: &ScalingConstants,
    with_grad: bool,
) -> Result<BatchLoss> {
    let points = phase.points;
    let ts: Vec<f64> = batch.iter().map(|&k| points.t_s[k]).collect();
    let inputs = RoleInputs {
        tapes: phase
            .trainable
            .iter()
            .map(|r| (*r, nets[r].forward_batch(&ts)))
            .collect(),
    };
    let roles = used_roles(&phase.terms);
    let count = |kind| batch.iter().filter(|&&k| points.kind[k] == kind).count();
    let n_kind: BTreeMap<PointKind, usize> =
        [PointKind::Data, PointKind::Collocation, PointKind::Initial]
            .into_iter()
            .map(|k| (k, count(k)))
            .collect();

    let mut g_value: BTreeMap<Role, Vec<f64>> = phase
        .trainable
        .iter()
        .map(|r| (*r, vec![0.0; batch.len()]))
        .collect();
    let mut g_deriv = g_value.clone();
    let mut term_sums = vec![0.0; phase.terms.len()];

    for (pos, &point) in batch.iter().enumerate() {
        let kind = points.kind[point];
        let pv = point_values(&roles, &inputs, &phase.frozen, pos, point);
        for (j, &term) in phase.terms.iter().enumerate() {
            if term.kind() != kind {
                continue;
            }
            let r = residual_at(term, &pv, &points.obs[point], points.t_s[point], sc)?;
            term_sums[j] += r.v * r.v;
            if with_grad {
                let coef = 2.0 * weights[j] * r.v / n_kind[&kind] as f64;
                for role in &phase.trainable {
                    g_value.get_mut(role).unwrap()[pos] += coef * r.g[value_slot(*role)];
                    g_deriv.get_mut(role).unwrap()[pos] += coef * r.g[deriv_slot(*role)];
                }
            }
        }
    }

    let terms: Vec<f64> = phase
        .terms
        .iter()
        .zip(&term_sums)
        .map(|(t, s)| match n_kind[&t.kind()] {
            0 => 0.0,
            n => s / n as f64,
        })
        .collect();
    let mut total: f64 = terms.iter().zip(weights).map(|(l, w)| l * w).sum();

    if let Some(weight) = phase.penalty {
        let n = n_kind[&PointKind::Collocation];
        if n > 0 && weight > 0.0 {
            for role in &phase.trainable {
                let tape = &inputs.tapes[role];
                for (pos, &point) in batch.iter().enumerate() {
                    if points.kind[point] != PointKind::Collocation {
                        continue;
                    }
                    let neg = tape.values()[pos].min(0.0);
                    total += weight * neg * neg / n as f64;
                    g_value.get_mut(role).unwrap()[pos] += 2.0 * weight * neg / n as f64;
                }
            }
        }
    }

    let mut grads = BTreeMap::new();
    if with_grad {
        for role in &phase.trainable {
            let net = &nets[role];
            let mut g = vec![0.0; net.num_params()];
            net.backward(&inputs.tapes[role], &g_value[role], &g_deriv[role], &mut g);
            grads.insert(*role, g);
        }
    }
    Ok(BatchLoss {
        total,
        terms,
        grads,
    })
}

/// Mean over sampled points of `‖∂r_k/∂θ‖²` for every term, with θ the
/// parameters of the trainable networks.
pub fn term_traces(
    nets: &Networks,
    phase: &Phase,
    sc: &ScalingConstants,
    sample_points: usize,
) -> Result<Vec<f64>> {
    let points = phase.points;
    let roles = used_roles(&phase.terms);
    let mut sums = vec![0.0; phase.terms.len()];
    let mut counts = vec![0usize; phase.terms.len()];
    for kind in [PointKind::Data, PointKind::Collocation, PointKind::Initial] {
        if !phase.terms.iter().any(|t| t.kind() == kind) {
            continue;
        }
        let all = points.of_kind(kind);
        let take = all.len().min(sample_points.max(1));
        for s in 0..take {
            let point = all[s * all.len() / take];
            let t = points.t_s[point];
            let inputs = RoleInputs {
                tapes: phase
                    .trainable
                    .iter()
                    .map(|r| (*r, nets[r].forward_batch(&[t])))
                    .collect(),
            };
            let pv = point_values(&roles, &inputs, &phase.frozen, 0, point);
            for (j, &term) in phase.terms.iter().enumerate() {
                if term.kind() != kind {
                    continue;
                }
                let r = residual_at(term, &pv, &points.obs[point], t, sc)?;
                let mut sq = 0.0;
                for role in &phase.trainable {
                    let net = &nets[role];
                    let (gv, gd) = (r.g[value_slot(*role)], r.g[deriv_slot(*role)]);
                    if gv == 0.0 && gd == 0.0 {
                        continue;
                    }
                    let mut g = vec![0.0; net.num_params()];
                    net.backward(&inputs.tapes[role], &[gv], &[gd], &mut g);
                    sq += g.iter().map(|x| x * x).sum::<f64>();
                }
                sums[j] += sq;
                counts[j] += 1;
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect())
}

/// Runs the epochs of one phase, updating `nets` and `optimizers` in place.
pub fn run_phase(
    nets: &mut Networks,
    optimizers: &mut Optimizers,
    schedule: &mut LrSchedule,
    phase: &Phase,
    sc: &ScalingConstants,
    rng: &mut ChaCha8Rng,
    epoch_offset: usize,
) -> Result<(PhaseHistory, Vec<f64>)> {
    let start = Instant::now();
    for role in &phase.trainable {
        optimizers
            .entry(*role)
            .or_insert_with(|| AdamState::new(nets[role].num_params()));
    }
    let initial = phase.points.of_kind(PointKind::Initial);
    let mut pool: Vec<usize> = (0..phase.points.len())
        .filter(|&k| {
            let kind = phase.points.kind[k];
            kind != PointKind::Initial && phase.terms.iter().any(|t| t.kind() == kind)
        })
        .collect();
    let uses_initial = phase.terms.iter().any(|t| t.kind() == PointKind::Initial);
    let mut weights = phase.weights.clone();
    let mut rows = Vec::with_capacity(phase.epochs);
    let mut first_loss = None;
    let batch_size = phase.batch.max(1);

    for epoch in 1..=phase.epochs {
        pool.shuffle(rng);
        let lr = schedule.current_lr;
        let mut epoch_total = 0.0;
        let mut epoch_terms = vec![0.0; phase.terms.len()];
        let chunks: Vec<&[usize]> = if pool.is_empty() {
            vec![&[]]
        } else {
            pool.chunks(batch_size).collect()
        };
        for chunk in &chunks {
            let mut batch = chunk.to_vec();
            if uses_initial {
                batch.extend(&initial);
            }
            let out = batch_loss(nets, phase, &weights, &batch, sc, true)?;
            epoch_total += out.total;
            for (e, t) in epoch_terms.iter_mut().zip(&out.terms) {
                *e += t;
            }
            for (role, g) in &out.grads {
                let net = nets.get_mut(role).unwrap();
                adam_step(net.params_mut(), g, optimizers.get_mut(role).unwrap(), lr)?;
            }
        }
        let n_batches = chunks.len() as f64;
        epoch_total /= n_batches;
        for e in &mut epoch_terms {
            *e /= n_batches;
        }
        let first = *first_loss.get_or_insert(epoch_total);
        if !epoch_total.is_finite() || epoch_total > phase.divergence_factor * first {
            return Err(Error::DivergedLoss {
                epoch: epoch_offset + epoch,
                loss: epoch_total,
            });
        }
        rows.push(HistoryRow {
            epoch: epoch_offset + epoch,
            total: epoch_total,
            terms: epoch_terms,
            lr,
            weights: weights.clone(),
        });
        schedule.observe(epoch_total);
        if let Some(ntk) = phase.ntk {
            if ntk.enabled && phase.terms.len() > 1 && epoch % ntk.period == 0 {
                let traces = term_traces(nets, phase, sc, ntk.sample_points)?;
                let target = adapt_weights_ntk(&traces, &weights);
                weights = smooth(&weights, &target, ntk.smoothing);
            }
        }
    }
    Ok((
        PhaseHistory {
            phase: phase.name.clone(),
            term_names: phase.terms.iter().map(|t| t.name().to_string()).collect(),
            rows,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        weights,
    ))
}
