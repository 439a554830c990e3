//! The bottom-up inner/outer loop shared by both engines.
//!
//! The inner loop repeatedly scans every basis index, picks the add,
//! re-estimate or delete action with the largest evidence increase, and
//! applies it through the incremental updates of [`SblState`]. The outer loop
//! re-estimates the noise parameter and stops once the mean signal changes
//! by less than the relative tolerance.

use nalgebra::DMatrix;

use crate::error::{BcsError, Result};
use crate::sbl::{NoiseParam, Problem, SblState};
use crate::wavelet;

/// Best available `ΔL` below which the inner loop counts as stalled.
pub const STALL_DELTA_L: f64 = 1e-12;

/// Which noise treatment a reconstruction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Point (MAP) estimate of the noise precision.
    Mpe,
    /// Noise precision integrated out under a Gamma prior.
    Ipe,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Mpe => "mpe",
            Algorithm::Ipe => "ipe",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = BcsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpe" => Ok(Algorithm::Mpe),
            "ipe" => Ok(Algorithm::Ipe),
            other => Err(BcsError::InvalidHyperparameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Add,
    Reestimate,
    Delete,
}

impl ActionKind {
    pub fn label(self) -> &'static str {
        match self {
            ActionKind::Add => "add",
            ActionKind::Reestimate => "re-estimate",
            ActionKind::Delete => "delete",
        }
    }
}

/// One candidate action of the inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPlan {
    pub kind: ActionKind,
    /// Global basis index.
    pub n: usize,
    /// Precision after the action; infinite for a delete.
    pub new_alpha: f64,
    /// Predicted log-evidence increase.
    pub delta_l: f64,
    /// Position of `n` in the active list (re-estimate / delete only).
    pub position: Option<usize>,
    /// New diagonal entry of the posterior factor for an add, the rank-one
    /// coefficient `ϑ` for a re-estimate, or `1/P_jj` for a delete.
    pub update_coeff: f64,
}

/// Maps a stationary-point estimate to a precision: positive finite values
/// are kept, everything else excludes the term.
pub fn alpha_from_gamma(gamma: f64) -> f64 {
    if gamma > 0.0 && gamma.is_finite() {
        gamma
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Outer-loop stop: `‖x̂_new − x̂_old‖²/‖x̂_old‖² < outer_tolerance`.
    pub outer_tolerance: f64,
    /// Inner-loop stop: every active `|Δ log α|` below this, and no pending
    /// add or delete.
    pub inner_log_alpha_tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Keep the sequence of applied actions in the result.
    pub record_actions: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            outer_tolerance: 0.1,
            inner_log_alpha_tolerance: 1e-6,
            max_outer: 50,
            max_inner: 1000,
            record_actions: false,
        }
    }
}

impl EngineOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tolerance > 0.0 && self.inner_log_alpha_tolerance > 0.0) {
            return Err(BcsError::InvalidHyperparameter(
                "engine tolerances must be positive".into(),
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(BcsError::InvalidHyperparameter(
                "iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// An applied action, as recorded when `record_actions` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionRecord {
    pub outer: usize,
    pub kind: ActionKind,
    pub n: usize,
    pub new_alpha: f64,
    pub delta_l: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Posterior mean of all `N` coefficients; zero off the active set.
    pub mean_coeffs: Vec<f64>,
    /// Posterior standard deviation per coefficient; zero off the active set.
    pub coeff_std: Vec<f64>,
    /// `Ψ · mean_coeffs`.
    pub mean_signal: Vec<f64>,
    pub active: Vec<usize>,
    pub active_alphas: Vec<f64>,
    /// Posterior covariance over the active coefficients, in `active` order.
    pub posterior_cov: DMatrix<f64>,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    /// Whether the outer tolerance was met before `max_outer`.
    pub converged: bool,
    /// Inner loops that ended by hitting `max_inner`.
    pub inner_exhausted: usize,
    /// Actions rejected by the positive-definiteness check.
    pub breakdowns: usize,
    pub final_noise: NoiseParam,
    pub actions: Vec<ActionRecord>,
}

impl ReconstructionResult {
    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Mean posterior standard deviation over the nonzero coefficients.
    pub fn mean_active_std(&self) -> f64 {
        if self.active.is_empty() {
            return 0.0;
        }
        self.active.iter().map(|&i| self.coeff_std[i]).sum::<f64>() / self.active.len() as f64
    }

    /// Per-sample posterior variance of the reconstructed signal,
    /// `diag(Ψ_a Cov Ψ_aᵀ)`, without forming an `N x N` matrix.
    pub fn signal_variance(&self) -> Result<Vec<f64>> {
        let n = self.mean_coeffs.len();
        let cols: Vec<Vec<f64>> = self
            .active
            .iter()
            .map(|&a| wavelet::haar_basis_column(n, a))
            .collect::<Result<_>>()?;
        let mut var = vec![0.0; n];
        for (i, v) in var.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (a, ca) in cols.iter().enumerate() {
                if ca[i] == 0.0 {
                    continue;
                }
                for (b, cb) in cols.iter().enumerate() {
                    acc += ca[i] * self.posterior_cov[(a, b)] * cb[i];
                }
            }
            *v = acc.max(0.0);
        }
        Ok(var)
    }
}

/// Outcome of one scan over all basis indices.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scan {
    pub best: Option<ActionPlan>,
    pub max_log_alpha_change: f64,
    pub structural_pending: bool,
}

/// Evaluates every index and keeps the largest finite `ΔL`, lowest index on
/// ties.
pub(crate) fn scan(state: &SblState, n: usize, candidate: impl Fn(&SblState, usize) -> Option<ActionPlan>) -> Scan {
    let mut out = Scan { best: None, max_log_alpha_change: 0.0, structural_pending: false };
    for m in 0..n {
        let Some(plan) = candidate(state, m) else { continue };
        match plan.kind {
            ActionKind::Reestimate => {
                let change = (plan.new_alpha.ln() - state.alpha_of(m).ln()).abs();
                out.max_log_alpha_change = out.max_log_alpha_change.max(change);
            }
            ActionKind::Add | ActionKind::Delete => out.structural_pending = true,
        }
        if !plan.delta_l.is_finite() {
            continue;
        }
        if out.best.is_none_or(|b| plan.delta_l > b.delta_l) {
            out.best = Some(plan);
        }
    }
    out
}

/// Applies a plan through the incremental updates. On error the state is
/// unchanged.
pub fn apply_plan(state: &mut SblState, problem: &Problem<'_>, plan: &ActionPlan) -> Result<f64> {
    match plan.kind {
        ActionKind::Add => state.add(problem, plan.n, plan.new_alpha),
        ActionKind::Reestimate => state.reestimate(problem, plan.n, plan.new_alpha),
        ActionKind::Delete => state.delete(problem, plan.n),
    }
}

/// Engine-specific pieces of the shared loop.
pub(crate) trait Treatment {
    fn initial_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam>;
    fn candidate(&self, state: &SblState, m: usize) -> Option<ActionPlan>;
    fn update_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam>;
    /// Factor turning `C⁻¹` into the posterior covariance.
    fn covariance_scale(&self, state: &SblState, problem: &Problem<'_>) -> Result<f64>;
}

pub(crate) fn run(problem: &Problem<'_>, opts: &EngineOptions, treatment: &impl Treatment) -> Result<ReconstructionResult> {
    opts.validate()?;
    if problem.y_sq() == 0.0 {
        return Err(BcsError::DegenerateData("measurement vector is zero".into()));
    }
    let seed = problem
        .best_single_atom()
        .ok_or_else(|| BcsError::DegenerateData("dictionary has no nonzero column".into()))?;
    let placeholder = NoiseParam::Beta(1.0);
    let mut state = SblState::from_alphas(problem, &[seed], &[1.0], placeholder)?;
    let noise = treatment.initial_noise(&state, problem)?;
    state.set_noise(noise)?;

    let n = problem.n();
    // The stopping test compares the outputs of consecutive inner loops, so
    // the first pass has no predecessor. This matters for the marginalized
    // engine, whose first pass runs with b0 = 0.
    let mut prev: Option<Vec<f64>> = None;
    let mut outer = 0;
    let mut inner_total = 0;
    let mut inner_exhausted = 0;
    let mut breakdowns = 0;
    let mut converged = false;
    let mut actions = Vec::new();

    while outer < opts.max_outer {
        outer += 1;
        let mut finished = false;
        for _ in 0..opts.max_inner {
            let s = scan(&state, n, |st, m| treatment.candidate(st, m));
            if !s.structural_pending && s.max_log_alpha_change < opts.inner_log_alpha_tolerance {
                finished = true;
                break;
            }
            let Some(plan) = s.best.filter(|p| p.delta_l >= STALL_DELTA_L) else {
                finished = true;
                break;
            };
            match apply_plan(&mut state, problem, &plan) {
                Ok(_) => {
                    inner_total += 1;
                    if opts.record_actions {
                        actions.push(ActionRecord {
                            outer,
                            kind: plan.kind,
                            n: plan.n,
                            new_alpha: plan.new_alpha,
                            delta_l: plan.delta_l,
                        });
                    }
                }
                Err(e) if e.is_numerical() => {
                    breakdowns += 1;
                    finished = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !finished {
            inner_exhausted += 1;
        }
        state.refresh(problem)?;
        let noise = treatment.update_noise(&state, problem)?;
        state.set_noise(noise)?;

        let current = state.mean_coeffs(n);
        let stop = prev.as_ref().is_some_and(|p| {
            let prev_sq: f64 = p.iter().map(|v| v * v).sum();
            let diff_sq: f64 = current.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
            if prev_sq > 0.0 { diff_sq / prev_sq < opts.outer_tolerance } else { diff_sq == 0.0 }
        });
        prev = Some(current);
        if stop {
            converged = true;
            break;
        }
    }

    let scale = treatment.covariance_scale(&state, problem)?;
    let posterior_cov = state.c_inverse() * scale;
    let mut coeff_std = vec![0.0; n];
    for (j, &idx) in state.active().iter().enumerate() {
        coeff_std[idx] = posterior_cov[(j, j)].max(0.0).sqrt();
    }
    let mean_coeffs = state.mean_coeffs(n);
    let mut mean_signal = mean_coeffs.clone();
    wavelet::inverse_in_place(&mut mean_signal)?;

    Ok(ReconstructionResult {
        mean_coeffs,
        coeff_std,
        mean_signal,
        active: state.active().to_vec(),
        active_alphas: state.alphas().to_vec(),
        posterior_cov,
        outer_iterations: outer,
        inner_iterations_total: inner_total,
        converged,
        inner_exhausted,
        breakdowns,
        final_noise: state.noise(),
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_mapping() {
        assert_eq!(alpha_from_gamma(2.5), 2.5);
        for g in [0.0, -1.0, f64::INFINITY, f64::NAN] {
            assert!(alpha_from_gamma(g).is_infinite());
        }
    }

    #[test]
    fn option_validation() {
        assert!(EngineOptions::default().validate().is_ok());
        assert!(EngineOptions { outer_tolerance: 0.0, ..Default::default() }.validate().is_err());
        assert!(EngineOptions { max_inner: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("IPE".parse::<Algorithm>().unwrap(), Algorithm::Ipe);
        assert_eq!("mpe".parse::<Algorithm>().unwrap().label(), "mpe");
        assert!("omp".parse::<Algorithm>().is_err());
    }
}
