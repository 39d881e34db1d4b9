//! Component oracles, composite problems and seeded problem generators.
//!
//! The smooth part is the average `f = (1/m) Σ f_i`. Each component only has
//! to provide a gradient with a known Lipschitz constant `L_i`; convexity is
//! required of the average (with modulus `μ`), not of the individual terms.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::Regularizer;
use crate::schedule::{GradientTable, OrderPolicy};
use crate::solver;
use crate::vector;

/// Residual used for the reference optimum of generated problems.
pub const REFERENCE_RESIDUAL: f64 = 1e-12;

const REFERENCE_MAX_ITERS: usize = 2_000_000;

/// One smooth summand `f_i` of the objective.
pub trait ComponentFunction: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    /// Lipschitz constant `L_i` of the gradient.
    fn lipschitz(&self) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }
}

/// `½(aᵀx − b)² + (ridge/2)‖x‖²`, with `L_i = ‖a‖² + ridge`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresTerm {
    pub a: Vec<f64>,
    pub b: f64,
    pub ridge: f64,
}

impl ComponentFunction for LeastSquaresTerm {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = vector::dot(&self.a, x) - self.b;
        0.5 * r * r + 0.5 * self.ridge * vector::norm_sq(x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let r = vector::dot(&self.a, x) - self.b;
        for ((o, ai), xi) in out.iter_mut().zip(&self.a).zip(x) {
            *o = r * ai + self.ridge * xi;
        }
    }

    fn lipschitz(&self) -> f64 {
        vector::norm_sq(&self.a) + self.ridge
    }
}

/// `½ Σ_j c_j (x_j − t_j)²` with curvatures `c_j ≥ 0`, so `L_i = max_j c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic {
    pub curvature: Vec<f64>,
    pub center: Vec<f64>,
}

impl ComponentFunction for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.curvature
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((c, t), xi)| 0.5 * c * (xi - t) * (xi - t))
            .sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, c), t), xi) in out.iter_mut().zip(&self.curvature).zip(&self.center).zip(x) {
            *o = c * (xi - t);
        }
    }

    fn lipschitz(&self) -> f64 {
        self.curvature.iter().cloned().fold(0.0, f64::max)
    }
}

/// The smooth average `f = (1/m) Σ f_i` with its declared constants.
#[derive(Debug, Clone)]
pub struct SmoothSum {
    components: Vec<Arc<dyn ComponentFunction>>,
    dim: usize,
    lipschitz: f64,
    mu: f64,
}

impl SmoothSum {
    /// `mu` is a declared lower bound on the strong-convexity modulus of the
    /// average; `L` is taken as the mean of the component constants.
    pub fn new(components: Vec<Arc<dyn ComponentFunction>>, mu: f64) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one component is required".into()))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            let li = c.lipschitz();
            if !(li.is_finite() && li >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid component constant {li}")));
            }
        }
        let lipschitz = components.iter().map(|c| c.lipschitz()).sum::<f64>() / components.len() as f64;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("mu must be finite and > 0, got {mu}")));
        }
        if mu > lipschitz {
            return Err(Error::InvalidArgument(format!(
                "declared mu {mu} exceeds L {lipschitz}"
            )));
        }
        Ok(SmoothSum {
            components,
            dim,
            lipschitz,
            mu,
        })
    }

    pub fn components(&self) -> &[Arc<dyn ComponentFunction>] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L = (1/m) Σ L_i`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `Q = L/μ`.
    pub fn condition(&self) -> f64 {
        self.lipschitz / self.mu
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.value(x)).sum::<f64>() / self.components.len() as f64
    }

    /// `∇f(x)`, accumulated in component order and divided by `m` at the end.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for c in &self.components {
            c.gradient_into(x, &mut buf);
            for (s, g) in sum.iter_mut().zip(&buf) {
                *s += g;
            }
        }
        let m = self.components.len() as f64;
        sum.iter_mut().for_each(|s| *s /= m);
        sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x: Vec<f64>,
    pub value: f64,
    /// Final fixed-point residual `‖x_{k+1} − x_k‖/η` of the reference run.
    pub residual: f64,
    pub iterations: usize,
}

/// `F = f + r` together with an optional reference optimum.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub smooth: SmoothSum,
    pub regularizer: Regularizer,
    pub reference: Option<Reference>,
    pub spec: Option<ProblemSpec>,
}

impl ProblemInstance {
    pub fn new(smooth: SmoothSum, regularizer: Regularizer) -> Result<Self> {
        regularizer.validate()?;
        if let Some(n) = regularizer.dim() {
            if n != smooth.dim() {
                return Err(Error::DimensionMismatch {
                    expected: smooth.dim(),
                    got: n,
                });
            }
        }
        Ok(ProblemInstance {
            smooth,
            regularizer,
            reference: None,
            spec: None,
        })
    }

    /// Attaches a reference optimum computed by [`solve_reference`].
    pub fn with_reference(mut self, residual_tol: f64) -> Result<Self> {
        self.reference = Some(solve_reference(&self, residual_tol)?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn num_components(&self) -> usize {
        self.smooth.num_components()
    }

    /// `F(x)`; `+inf` for points outside a box constraint.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.smooth.value(x) + self.regularizer.value(x)
    }

    /// `‖prox(x − η∇f(x), η) − x‖/η`, zero exactly at the optimum.
    pub fn fixed_point_residual(&self, x: &[f64], eta: f64) -> Result<f64> {
        let g = self.smooth.gradient(x);
        let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
        let p = self.regularizer.apply(&y, eta)?;
        Ok(vector::dist(&p, x) / eta)
    }

    pub fn summary(&self) -> ProblemSummary {
        ProblemSummary {
            spec: self.spec.clone(),
            m: self.num_components(),
            n: self.dim(),
            lipschitz: self.smooth.lipschitz(),
            mu: self.smooth.mu(),
            condition: self.smooth.condition(),
            regularizer: self.regularizer.clone(),
            reference: self.reference.clone(),
        }
    }
}

/// Declared constants and reference data written alongside every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub spec: Option<ProblemSpec>,
    pub m: usize,
    pub n: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub condition: f64,
    pub regularizer: Regularizer,
    pub reference: Option<Reference>,
}

/// Serializable description from which a problem is rebuilt exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum ProblemSpec {
    RegularizedLeastSquares {
        m: usize,
        n: usize,
        seed: u64,
        l1_weight: f64,
        l2_weight: f64,
        /// When set, the ridge weight is replaced so that `L/μ` equals this value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<f64>,
    },
    ConstrainedQuadratic {
        n: usize,
        seed: u64,
        box_lo: f64,
        box_hi: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<f64>,
    },
}

fn default_ridge() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn seed(&self) -> u64 {
        match self {
            ProblemSpec::RegularizedLeastSquares { seed, .. } | ProblemSpec::ConstrainedQuadratic { seed, .. } => *seed,
        }
    }

    pub fn set_seed(&mut self, new_seed: u64) {
        match self {
            ProblemSpec::RegularizedLeastSquares { seed, .. } | ProblemSpec::ConstrainedQuadratic { seed, .. } => {
                *seed = new_seed
            }
        }
    }

    pub fn set_condition(&mut self, q: Option<f64>) {
        match self {
            ProblemSpec::RegularizedLeastSquares { condition, .. }
            | ProblemSpec::ConstrainedQuadratic { condition, .. } => *condition = q,
        }
    }

    pub fn num_components(&self) -> usize {
        match self {
            ProblemSpec::RegularizedLeastSquares { m, .. } => *m,
            ProblemSpec::ConstrainedQuadratic { n, .. } => *n,
        }
    }

    /// Builds the instance, including its reference optimum.
    pub fn build(&self) -> Result<ProblemInstance> {
        let mut problem = match *self {
            ProblemSpec::RegularizedLeastSquares {
                m,
                n,
                seed,
                l1_weight,
                l2_weight,
                condition,
            } => {
                let rows = least_squares_data(m, n, seed)?;
                let ridge = match condition {
                    Some(q) => ridge_for_condition(&rows, q)?,
                    None => l2_weight,
                };
                least_squares_instance(rows, ridge, Regularizer::l1(l1_weight))?
            }
            ProblemSpec::ConstrainedQuadratic {
                n,
                seed,
                box_lo,
                box_hi,
                ridge,
                condition,
            } => {
                if !(box_lo < box_hi) {
                    return Err(Error::InvalidArgument(format!("empty box [{box_lo}, {box_hi}]")));
                }
                let rows = constrained_quadratic_data(n, seed)?;
                let ridge = match condition {
                    Some(q) => ridge_for_condition(&rows, q)?,
                    None => ridge,
                };
                least_squares_instance(rows, ridge, Regularizer::uniform_box(box_lo, box_hi, n))?
            }
        };
        problem = problem.with_reference(REFERENCE_RESIDUAL)?;
        problem.spec = Some(self.clone());
        Ok(problem)
    }
}

type Rows = Vec<(Vec<f64>, f64)>;

fn least_squares_data(m: usize, n: usize, seed: u64) -> Result<Rows> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("need m >= 1 and n >= 1, got m={m}, n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // sparse ground truth: every other coordinate is zero
    let truth: Vec<f64> = (0..n)
        .map(|j| {
            let v: f64 = rng.sample(StandardNormal);
            if j % 2 == 0 {
                v
            } else {
                0.0
            }
        })
        .collect();
    Ok((0..m)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let noise: f64 = rng.sample(StandardNormal);
            let b = vector::dot(&a, &truth) + 0.1 * noise;
            (a, b)
        })
        .collect())
}

fn constrained_quadratic_data(n: usize, seed: u64) -> Result<Rows> {
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // targets of scale 3 put the unconstrained minimizer well outside unit boxes
    Ok((0..n)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let b: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
            (a, b)
        })
        .collect())
}

/// Ridge weight `λ` with `(mean‖a_i‖² + λ)/λ = q`.
fn ridge_for_condition(rows: &Rows, q: f64) -> Result<f64> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("condition number must be > 1, got {q}")));
    }
    let mean_sq = rows.iter().map(|(a, _)| vector::norm_sq(a)).sum::<f64>() / rows.len() as f64;
    Ok(mean_sq / (q - 1.0))
}

/// Least-squares components with a common ridge; `μ` is declared as the ridge.
pub fn least_squares_instance(rows: Rows, ridge: f64, regularizer: Regularizer) -> Result<ProblemInstance> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("l2 weight must be > 0, got {ridge}")));
    }
    let components: Vec<Arc<dyn ComponentFunction>> = rows
        .into_iter()
        .map(|(a, b)| Arc::new(LeastSquaresTerm { a, b, ridge }) as Arc<dyn ComponentFunction>)
        .collect();
    let smooth = SmoothSum::new(components, ridge)?;
    ProblemInstance::new(smooth, regularizer)
}

/// Seeded ridge-regularized least squares with an L1 regularizer.
pub fn make_regularized_least_squares(
    m: usize,
    n: usize,
    seed: u64,
    l1_weight: f64,
    l2_weight: f64,
) -> Result<ProblemInstance> {
    ProblemSpec::RegularizedLeastSquares {
        m,
        n,
        seed,
        l1_weight,
        l2_weight,
        condition: None,
    }
    .build()
}

/// Seeded strongly convex quadratic with `m = n` components and a box constraint.
pub fn make_constrained_quadratic(n: usize, seed: u64, box_lo: f64, box_hi: f64) -> Result<ProblemInstance> {
    ProblemSpec::ConstrainedQuadratic {
        n,
        seed,
        box_lo,
        box_hi,
        ridge: default_ridge(),
        condition: None,
    }
    .build()
}

/// High-accuracy optimum by full-gradient prox steps at `η = 1/L`, run until
/// `‖x_{k+1} − x_k‖/η ≤ residual_tol`.
pub fn solve_reference(problem: &ProblemInstance, residual_tol: f64) -> Result<Reference> {
    solve_reference_with_budget(problem, residual_tol, REFERENCE_MAX_ITERS)
}

pub fn solve_reference_with_budget(
    problem: &ProblemInstance,
    residual_tol: f64,
    max_iters: usize,
) -> Result<Reference> {
    let eta = 1.0 / problem.smooth.lipschitz();
    let schedule = OrderPolicy::Full.compile(problem.num_components())?;
    let mut x = vec![0.0; problem.dim()];
    let mut table = GradientTable::new(problem, &x)?;
    let mut residual = f64::INFINITY;
    for k in 0..max_iters {
        let step = solver::piag_step(problem, &x, &mut table, &schedule, eta, k)?;
        residual = vector::norm(&step.direction);
        x = step.x_next;
        if residual <= residual_tol {
            let value = problem.objective(&x);
            return Ok(Reference {
                x,
                value,
                residual,
                iterations: k + 1,
            });
        }
    }
    Err(Error::ReferenceNotConverged {
        iterations: max_iters,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    /// Largest observed `‖∇f(x) − ∇f(y)‖/‖x − y‖`.
    pub lipschitz: f64,
    /// Smallest observed `⟨x − y, ∇f(x) − ∇f(y)⟩/‖x − y‖²`.
    pub strong_convexity: f64,
}

impl ConstantEstimate {
    /// True when the samples do not contradict the declared `L` and `μ`.
    pub fn consistent_with(&self, problem: &ProblemInstance, tol: f64) -> bool {
        self.strong_convexity >= problem.smooth.mu() * (1.0 - tol)
            && self.lipschitz <= problem.smooth.lipschitz() * (1.0 + tol)
    }
}

/// Samples `samples` random pairs around the origin (or the reference optimum)
/// and records the extreme secant ratios of `∇f`.
pub fn estimate_constants(problem: &ProblemInstance, samples: usize, seed: u64) -> Result<ConstantEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let n = problem.dim();
    let center = problem
        .reference
        .as_ref()
        .map(|r| r.x.clone())
        .unwrap_or_else(|| vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        center
            .iter()
            .map(|c| c + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut lip = 0.0f64;
    let mut mu = f64::INFINITY;
    for _ in 0..samples {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dx = vector::sub(&x, &y);
        let nx = vector::norm(&dx);
        if nx < 1e-12 {
            continue;
        }
        let dg = vector::sub(&problem.smooth.gradient(&x), &problem.smooth.gradient(&y));
        lip = lip.max(vector::norm(&dg) / nx);
        mu = mu.min(vector::dot(&dx, &dg) / (nx * nx));
    }
    Ok(ConstantEstimate {
        lipschitz: lip,
        strong_convexity: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(a: f64, b: f64, ridge: f64, reg: Regularizer) -> ProblemInstance {
        least_squares_instance(vec![(vec![a], b)], ridge, reg).unwrap()
    }

    fn quadratic_1d(center: f64, reg: Regularizer) -> ProblemInstance {
        let c: Arc<dyn ComponentFunction> = Arc::new(DiagonalQuadratic {
            curvature: vec![1.0],
            center: vec![center],
        });
        ProblemInstance::new(SmoothSum::new(vec![c], 1.0).unwrap(), reg).unwrap()
    }

    #[test]
    fn x_squared_constants() {
        // ½(x)² + ½x² = x²
        let p = single(1.0, 0.0, 1.0, Regularizer::Zero).with_reference(1e-12).unwrap();
        assert_eq!(p.smooth.lipschitz(), 2.0);
        assert_eq!(p.smooth.mu(), 1.0);
        assert_abs_diff_eq!(p.objective(&[3.0]), 9.0);
        let r = p.reference.unwrap();
        assert_abs_diff_eq!(r.x[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-20);

        // declared μ may be the exact modulus as well
        let c: Arc<dyn ComponentFunction> = Arc::new(LeastSquaresTerm { a: vec![1.0], b: 0.0, ridge: 1.0 });
        let s = SmoothSum::new(vec![c], 2.0).unwrap();
        assert_eq!(s.condition(), 1.0);
    }

    #[test]
    fn symmetric_pair_has_origin_optimum() {
        let p = least_squares_instance(vec![(vec![1.0], 1.0), (vec![1.0], -1.0)], 1.0, Regularizer::Zero)
            .unwrap()
            .with_reference(1e-12)
            .unwrap();
        let r = p.reference.unwrap();
        assert_abs_diff_eq!(r.x[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn soft_threshold_fixed_point() {
        let p = quadratic_1d(3.0, Regularizer::l1(1.0)).with_reference(1e-12).unwrap();
        assert_abs_diff_eq!(p.reference.unwrap().x[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn box_projected_optimum() {
        let p = quadratic_1d(2.0, Regularizer::uniform_box(0.0, 1.0, 1)).with_reference(1e-12).unwrap();
        assert_eq!(p.reference.unwrap().x[0], 1.0);
        let p = quadratic_1d(0.0, Regularizer::uniform_box(0.0, 1.0, 1)).with_reference(1e-12).unwrap();
        assert_eq!(p.reference.unwrap().x[0], 0.0);
    }

    #[test]
    fn generator_argument_errors() {
        assert!(make_regularized_least_squares(0, 3, 1, 0.1, 1.0).is_err());
        assert!(make_regularized_least_squares(3, 0, 1, 0.1, 1.0).is_err());
        assert!(make_regularized_least_squares(3, 3, 1, 0.1, 0.0).is_err());
        assert!(make_regularized_least_squares(3, 3, 1, 0.1, -1.0).is_err());
        assert!(make_constrained_quadratic(3, 1, 1.0, 1.0).is_err());
        assert!(make_constrained_quadratic(3, 1, 2.0, 1.0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = make_regularized_least_squares(6, 3, 42, 0.1, 1.0).unwrap();
        let b = make_regularized_least_squares(6, 3, 42, 0.1, 1.0).unwrap();
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.smooth.lipschitz().to_bits(), b.smooth.lipschitz().to_bits());
        let c = make_regularized_least_squares(6, 3, 43, 0.1, 1.0).unwrap();
        assert_ne!(a.reference, c.reference);
    }

    #[test]
    fn lipschitz_is_mean_of_components() {
        let p = make_regularized_least_squares(20, 5, 7, 0.1, 1.0).unwrap();
        let mean = p.smooth.components().iter().map(|c| c.lipschitz()).sum::<f64>() / 20.0;
        assert_eq!(p.smooth.lipschitz(), mean);
        assert!(p.smooth.condition() >= 1.0);
    }

    #[test]
    fn condition_override_hits_target() {
        let spec = ProblemSpec::RegularizedLeastSquares {
            m: 10,
            n: 4,
            seed: 3,
            l1_weight: 0.1,
            l2_weight: 1.0,
            condition: Some(25.0),
        };
        let p = spec.build().unwrap();
        assert_abs_diff_eq!(p.smooth.condition(), 25.0, epsilon = 1e-9);
    }

    #[test]
    fn estimate_constants_quadratics() {
        let p = single(1.0, 0.0, 1.0, Regularizer::Zero);
        let est = estimate_constants(&p, 50, 1).unwrap();
        assert_eq!(est.lipschitz, 2.0);
        assert_eq!(est.strong_convexity, 2.0);

        // Hessian diag(1, 10) as the mean of two components
        let comps: Vec<Arc<dyn ComponentFunction>> = vec![
            Arc::new(DiagonalQuadratic { curvature: vec![2.0, 0.0], center: vec![0.0, 0.0] }),
            Arc::new(DiagonalQuadratic { curvature: vec![0.0, 20.0], center: vec![0.0, 0.0] }),
        ];
        let p = ProblemInstance::new(SmoothSum::new(comps, 1.0).unwrap(), Regularizer::Zero).unwrap();
        let est = estimate_constants(&p, 200, 2).unwrap();
        assert!(est.lipschitz <= 10.0 + 1e-12);
        assert!(est.strong_convexity >= 1.0 - 1e-12);
        assert!(est.consistent_with(&p, 1e-12));
        assert!(estimate_constants(&p, 1, 2).is_err());
    }

    #[test]
    fn reference_budget_exhaustion_reports_residual() {
        let p = make_regularized_least_squares(5, 3, 1, 0.1, 1.0).unwrap();
        match solve_reference_with_budget(&p, 1e-14, 3) {
            Err(Error::ReferenceNotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ProblemSpec::ConstrainedQuadratic {
            n: 4,
            seed: 3,
            box_lo: -1.0,
            box_hi: 1.0,
            ridge: 1.0,
            condition: None,
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.starts_with(r#"{"generator":"constrained_quadratic""#));
        let back: ProblemSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
