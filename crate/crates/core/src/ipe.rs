//! Reconstruction with the noise precision integrated out under a
//! Gamma(`a0`, `b0`) prior, giving a Student-t evidence and posterior.

use nalgebra::{DMatrix, DVector};

use crate::engine::{self, alpha_from_gamma, ActionKind, ActionPlan, EngineOptions, ReconstructionResult, Treatment};
use crate::error::{BcsError, Result};
use crate::sbl::{NoiseParam, Problem, SblState};
use crate::sensing::Dictionary;

/// How `b0` is set before the first inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialB0 {
    /// `b0 = 0`, the standard start.
    #[default]
    Zero,
    /// `b0 = (a0/K)·yᵀB⁻¹y` of the seeded model, so that `b0/a0` tracks the
    /// residual scale from the start (used for large-`a0` comparisons).
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpeOptions {
    /// Gamma-prior shape, fixed during the run.
    pub a0: f64,
    pub initial_b0: InitialB0,
}

impl Default for IpeOptions {
    fn default() -> Self {
        Self { a0: 1.0, initial_b0: InitialB0::Zero }
    }
}

/// Gamma hyperparameters together with their posterior counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpeHyper {
    pub a0: f64,
    pub b0: f64,
    pub k: usize,
}

impl IpeHyper {
    pub fn a0_post(&self) -> f64 {
        self.a0 + self.k as f64 / 2.0
    }

    pub fn b0_post(&self, y_quad: f64) -> f64 {
        self.b0 + y_quad / 2.0
    }

    /// `(K + 2a0)/2`, the exponent of the data-fit term in the evidence.
    fn half_dof(&self) -> f64 {
        (self.k as f64 + 2.0 * self.a0) / 2.0
    }
}

/// `γ̃ = (s² − s·q²/g)/((K + 2a0)·q²/g − s)`.
pub fn gamma_tilde(s: f64, q: f64, g: f64, k: usize, a0: f64) -> f64 {
    let r = q * q / g;
    (s * s - s * r) / ((k as f64 + 2.0 * a0) * r - s)
}

/// `b0 = (a0/K)·yᵀB⁻¹y`.
pub fn update_b0(state: &SblState, problem: &Problem<'_>, a0: f64) -> Result<f64> {
    if problem.y_sq() == 0.0 {
        return Err(BcsError::DegenerateData("measurement vector is zero".into()));
    }
    Ok(a0 / problem.k() as f64 * state.y_quad(problem))
}

/// Student-t posterior mean and covariance over the active coefficients:
/// `μ` and `(b0'/(a0' − 1))·Λ`.
pub fn posterior_moments(state: &SblState, problem: &Problem<'_>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let hyper = hyper_of(state, problem.k())?;
    let scale = covariance_scale(&hyper, state.y_quad(problem))?;
    Ok((state.mu().clone(), state.c_inverse() * scale))
}

fn covariance_scale(hyper: &IpeHyper, y_quad: f64) -> Result<f64> {
    let a0_post = hyper.a0_post();
    if a0_post <= 1.0 {
        return Err(BcsError::UndefinedVariance { a0_post });
    }
    Ok(hyper.b0_post(y_quad) / (a0_post - 1.0))
}

fn hyper_of(state: &SblState, k: usize) -> Result<IpeHyper> {
    match state.noise() {
        NoiseParam::Gamma { a0, b0 } => Ok(IpeHyper { a0, b0, k }),
        NoiseParam::Beta(_) => Err(BcsError::InvalidHyperparameter(
            "marginalized-noise operation on a precision-estimate state".into(),
        )),
    }
}

/// Evidence gain of adding an inactive term at precision `alpha`.
pub fn delta_l_add_ipe(s: f64, q: f64, g: f64, alpha: f64, hyper: &IpeHyper) -> f64 {
    0.5 * (alpha / (alpha + s)).ln() - hyper.half_dof() * (-(q * q / g) / (alpha + s)).ln_1p()
}

/// Evidence gain of moving an active term from `alpha` to `new_alpha`.
/// `s_cap` is the cached `𝒮`; `s`, `q`, `g` are the leave-one-out factors.
pub fn delta_l_reestimate_ipe(s_cap: f64, s: f64, q: f64, g: f64, alpha: f64, new_alpha: f64, hyper: &IpeHyper) -> f64 {
    if new_alpha == alpha {
        return 0.0;
    }
    let d = 1.0 / new_alpha - 1.0 / alpha;
    let num = ((alpha + s) * g - q * q) * new_alpha;
    let den = ((new_alpha + s) * g - q * q) * alpha;
    (hyper.half_dof() - 0.5) * (s_cap * d).ln_1p() + hyper.half_dof() * (num / den).ln()
}

/// Evidence gain of removing an active term, from the cached `𝒮`, `𝒬`, `G`.
pub fn delta_l_delete_ipe(s_cap: f64, q_cap: f64, g_cap: f64, alpha: f64, hyper: &IpeHyper) -> f64 {
    -hyper.half_dof() * ((q_cap * q_cap / g_cap) / (alpha - s_cap)).ln_1p() - 0.5 * (-s_cap / alpha).ln_1p()
}

/// Re-estimate gain from the leave-one-out factors, for well-determined
/// terms where `α − 𝒮` is dominated by rounding.
pub fn delta_l_reestimate_ipe_factors(s: f64, q: f64, g: f64, alpha: f64, new_alpha: f64, hyper: &IpeHyper) -> f64 {
    let fit_old = g - q * q / (alpha + s);
    let fit_new = g - q * q / (new_alpha + s);
    0.5 * crate::mpe::log_shrink_ratio(s, alpha, new_alpha) - hyper.half_dof() * (fit_new / fit_old).ln()
}

/// Deletion gain from the leave-one-out factors.
pub fn delta_l_delete_ipe_factors(s: f64, q: f64, g: f64, alpha: f64, hyper: &IpeHyper) -> f64 {
    0.5 * (s / alpha).ln_1p() + hyper.half_dof() * (-(q * q / g) / (alpha + s)).ln_1p()
}

/// The action the inner loop would take for basis `m`, if any.
pub fn candidate_ipe(state: &SblState, m: usize, hyper: &IpeHyper) -> Option<ActionPlan> {
    let f = state.factors(m);
    if !(f.s > 0.0 && f.g > 0.0) {
        return None;
    }
    let (s_cap, q_cap) = (state.cap_s()[m], state.cap_q()[m]);
    let g_cap = state.cap_g()?;
    let new_alpha = alpha_from_gamma(gamma_tilde(f.s, f.q, f.g, hyper.k, hyper.a0));
    match state.position(m) {
        None if new_alpha.is_finite() => Some(ActionPlan {
            kind: ActionKind::Add,
            n: m,
            new_alpha,
            delta_l: delta_l_add_ipe(f.s, f.q, f.g, new_alpha, hyper),
            position: None,
            update_coeff: 1.0 / (new_alpha + s_cap),
        }),
        None => None,
        Some(j) => {
            let alpha = state.alphas()[j];
            let l_jj = state.post_factor()[(j, j)];
            let exact = state.is_well_determined(m);
            if new_alpha.is_finite() {
                Some(ActionPlan {
                    kind: ActionKind::Reestimate,
                    n: m,
                    new_alpha,
                    delta_l: if exact {
                        delta_l_reestimate_ipe_factors(f.s, f.q, f.g, alpha, new_alpha, hyper)
                    } else {
                        delta_l_reestimate_ipe(s_cap, f.s, f.q, f.g, alpha, new_alpha, hyper)
                    },
                    position: Some(j),
                    update_coeff: 1.0 / (l_jj + 1.0 / (new_alpha - alpha)),
                })
            } else {
                Some(ActionPlan {
                    kind: ActionKind::Delete,
                    n: m,
                    new_alpha,
                    delta_l: if exact {
                        delta_l_delete_ipe_factors(f.s, f.q, f.g, alpha, hyper)
                    } else {
                        delta_l_delete_ipe(s_cap, q_cap, g_cap, alpha, hyper)
                    },
                    position: Some(j),
                    update_coeff: 1.0 / l_jj,
                })
            }
        }
    }
}

/// The action with the largest evidence gain; `None` when nothing applies.
pub fn plan_actions_ipe(state: &SblState, hyper: &IpeHyper) -> Option<ActionPlan> {
    engine::scan(state, state.cap_s().len(), |st, m| candidate_ipe(st, m, hyper)).best
}

/// Applies a plan produced by [`plan_actions_ipe`]; the state is unchanged
/// on error.
pub fn apply_action_ipe(state: &mut SblState, problem: &Problem<'_>, plan: &ActionPlan) -> Result<f64> {
    hyper_of(state, problem.k())?;
    engine::apply_plan(state, problem, plan)
}

struct Ipe {
    opts: IpeOptions,
    k: usize,
}

impl Treatment for Ipe {
    fn initial_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam> {
        let b0 = match self.opts.initial_b0 {
            InitialB0::Zero => 0.0,
            InitialB0::Tied => update_b0(state, problem, self.opts.a0)?,
        };
        Ok(NoiseParam::Gamma { a0: self.opts.a0, b0 })
    }

    fn candidate(&self, state: &SblState, m: usize) -> Option<ActionPlan> {
        let NoiseParam::Gamma { a0, b0 } = state.noise() else { return None };
        candidate_ipe(state, m, &IpeHyper { a0, b0, k: self.k })
    }

    fn update_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam> {
        let b0 = update_b0(state, problem, self.opts.a0)?;
        Ok(NoiseParam::Gamma { a0: self.opts.a0, b0 })
    }

    fn covariance_scale(&self, state: &SblState, problem: &Problem<'_>) -> Result<f64> {
        let hyper = hyper_of(state, self.k)?;
        covariance_scale(&hyper, state.y_quad(problem))
    }
}

/// Full reconstruction of one measurement vector.
pub fn reconstruct_ipe(
    dict: &Dictionary,
    y: &[f64],
    opts: &EngineOptions,
    ipe: &IpeOptions,
) -> Result<ReconstructionResult> {
    if !(ipe.a0 > 0.0 && ipe.a0.is_finite()) {
        return Err(BcsError::InvalidHyperparameter(format!("a0 = {} must be positive", ipe.a0)));
    }
    let problem = Problem::new(dict, y)?;
    if problem.k() < 2 {
        return Err(BcsError::InsufficientMeasurements { k: problem.k(), needed: 2 });
    }
    engine::run(&problem, opts, &Ipe { opts: *ipe, k: problem.k() })
}
