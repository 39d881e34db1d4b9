//! Refresh orders and the table of stored component gradients.
//!
//! At iteration `k` the solver aggregates `g_k = (1/m) Σ_i ∇f_i(x_{τ_i})`,
//! where `τ_i` is the iteration at which the stored gradient of component `i`
//! was evaluated. A [`RefreshSchedule`] decides which components are evaluated
//! at each iteration and how long each evaluation takes to reach the table;
//! the table enforces `k − τ_i ≤ K` for the schedule's certified bound `K`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::vector;

/// Exact recomputation cadence of the running sum, in component refreshes.
const RECOMPUTE_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderPolicy {
    /// One component per iteration, `i = k mod m`.
    Cyclic,
    /// Cyclic over a permutation that is redrawn at the start of every epoch.
    ShuffledCyclic { seed: u64 },
    /// Every component is evaluated at every iteration, and the gradient of
    /// component `i` reaches the table `delays[i]` iterations later.
    FixedDelay { delays: Vec<usize> },
    /// Every component refreshed at every iteration (`g_k = ∇f(x_k)`).
    Full,
}

impl OrderPolicy {
    pub fn uniform_delay(delay: usize, m: usize) -> Self {
        OrderPolicy::FixedDelay {
            delays: vec![delay; m],
        }
    }

    /// The policy used for a requested staleness `K` on `m` components:
    /// full refresh for `K = 0`, cyclic for `K = m − 1`, a uniform delay otherwise.
    pub fn for_staleness(k: usize, m: usize) -> Self {
        if k == 0 {
            OrderPolicy::Full
        } else if k + 1 == m {
            OrderPolicy::Cyclic
        } else {
            OrderPolicy::uniform_delay(k, m)
        }
    }

    pub fn compile(&self, m: usize) -> Result<RefreshSchedule> {
        if m == 0 {
            return Err(Error::InvalidArgument("policy needs m >= 1".into()));
        }
        let staleness = match self {
            OrderPolicy::Full => 0,
            OrderPolicy::Cyclic => m - 1,
            OrderPolicy::ShuffledCyclic { .. } => 2 * m - 2,
            OrderPolicy::FixedDelay { delays } => {
                if delays.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: delays.len(),
                    });
                }
                delays.iter().copied().max().unwrap_or(0)
            }
        };
        Ok(RefreshSchedule {
            policy: self.clone(),
            m,
            staleness,
        })
    }
}

/// A policy bound to a component count, with its certified staleness `K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefreshSchedule {
    policy: OrderPolicy,
    m: usize,
    staleness: usize,
}

impl RefreshSchedule {
    pub fn policy(&self) -> &OrderPolicy {
        &self.policy
    }

    pub fn num_components(&self) -> usize {
        self.m
    }

    /// Certified bound `K` on `k − τ_{i,k}`.
    pub fn staleness(&self) -> usize {
        self.staleness
    }

    /// Components evaluated at iteration `k`, each with its delivery delay.
    pub fn evaluations(&self, k: usize) -> Vec<(usize, usize)> {
        match &self.policy {
            OrderPolicy::Full => (0..self.m).map(|i| (i, 0)).collect(),
            OrderPolicy::Cyclic => vec![(k % self.m, 0)],
            OrderPolicy::ShuffledCyclic { seed } => {
                let order = epoch_permutation(*seed, (k / self.m) as u64, self.m);
                vec![(order[k % self.m], 0)]
            }
            OrderPolicy::FixedDelay { delays } => delays.iter().copied().enumerate().collect(),
        }
    }
}

fn epoch_permutation(seed: u64, epoch: u64, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone)]
struct Delivery {
    component: usize,
    evaluated_at: usize,
    point: Vec<f64>,
    gradient: Vec<f64>,
}

/// Stored component gradients, their evaluation points and timestamps, and
/// the running sum `Σ_i stored_i`.
#[derive(Debug, Clone)]
pub struct GradientTable {
    gradients: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    stamps: Vec<usize>,
    sum: Vec<f64>,
    in_flight: BTreeMap<usize, Vec<Delivery>>,
    since_recompute: usize,
}

impl GradientTable {
    /// Evaluates every component at `x0`, so all `τ_i = 0` and `g_0 = ∇f(x0)`.
    pub fn new(problem: &ProblemInstance, x0: &[f64]) -> Result<Self> {
        if x0.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: x0.len(),
            });
        }
        if !vector::all_finite(x0) {
            return Err(Error::NonFinite("initial point".into()));
        }
        let gradients: Vec<Vec<f64>> = problem.smooth.components().iter().map(|c| c.gradient(x0)).collect();
        let m = gradients.len();
        let mut table = GradientTable {
            gradients,
            points: vec![x0.to_vec(); m],
            stamps: vec![0; m],
            sum: vec![0.0; x0.len()],
            in_flight: BTreeMap::new(),
            since_recompute: 0,
        };
        table.recompute_sum();
        Ok(table)
    }

    pub fn num_components(&self) -> usize {
        self.gradients.len()
    }

    /// Evaluation iteration `τ_i` of each stored gradient.
    pub fn timestamps(&self) -> &[usize] {
        &self.stamps
    }

    pub fn stored_gradient(&self, i: usize) -> &[f64] {
        &self.gradients[i]
    }

    pub fn stored_point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn running_sum(&self) -> &[f64] {
        &self.sum
    }

    /// `Σ_i stored_i` recomputed from scratch in component order.
    pub fn exact_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.sum.len()];
        for g in &self.gradients {
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v;
            }
        }
        sum
    }

    fn recompute_sum(&mut self) {
        self.sum = self.exact_sum();
        self.since_recompute = 0;
    }

    fn install(&mut self, d: Delivery) {
        let i = d.component;
        for ((s, new), old) in self.sum.iter_mut().zip(&d.gradient).zip(&self.gradients[i]) {
            *s += new - old;
        }
        self.gradients[i] = d.gradient;
        self.points[i] = d.point;
        self.stamps[i] = d.evaluated_at;
        self.since_recompute += 1;
    }

    /// Applies the schedule at iteration `k` with current iterate `x_k`:
    /// evaluates the scheduled components, installs every gradient due at `k`
    /// and checks `k − τ_i ≤ K`. Returns the components installed.
    pub fn refresh(
        &mut self,
        problem: &ProblemInstance,
        schedule: &RefreshSchedule,
        k: usize,
        x_k: &[f64],
    ) -> Result<Vec<usize>> {
        let m = self.num_components();
        if schedule.num_components() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: schedule.num_components(),
            });
        }
        let components = problem.smooth.components();
        for (i, delay) in schedule.evaluations(k) {
            let delivery = Delivery {
                component: i,
                evaluated_at: k,
                point: x_k.to_vec(),
                gradient: components[i].gradient(x_k),
            };
            self.in_flight.entry(k + delay).or_default().push(delivery);
        }

        let mut due: Vec<Delivery> = Vec::new();
        while let Some(entry) = self.in_flight.first_entry() {
            if *entry.key() > k {
                break;
            }
            due.extend(entry.remove());
        }
        due.sort_by_key(|d| (d.evaluated_at, d.component));

        let mut installed: Vec<usize> = due.iter().map(|d| d.component).collect();
        for d in due {
            self.install(d);
        }
        installed.sort_unstable();
        installed.dedup();

        if installed.len() == m || self.since_recompute >= RECOMPUTE_EVERY {
            self.recompute_sum();
        }

        let bound = schedule.staleness();
        for (i, &t) in self.stamps.iter().enumerate() {
            let age = k.saturating_sub(t);
            if age > bound {
                return Err(Error::StalenessViolated {
                    component: i,
                    age,
                    k,
                    bound,
                });
            }
        }
        Ok(installed)
    }

    /// `g = (1/m) Σ_i stored_i`.
    pub fn aggregated_gradient(&self) -> Vec<f64> {
        let m = self.num_components() as f64;
        self.sum.iter().map(|s| s / m).collect()
    }

    /// `max_i (k − τ_i)`.
    pub fn max_age(&self, k: usize) -> usize {
        self.stamps.iter().map(|&t| k.saturating_sub(t)).max().unwrap_or(0)
    }
}
