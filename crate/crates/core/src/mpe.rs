//! Reconstruction with a point (MAP) estimate of the noise precision `β`.

use crate::engine::{self, alpha_from_gamma, ActionKind, ActionPlan, EngineOptions, ReconstructionResult, Treatment};
use crate::error::{BcsError, Result};
use crate::sbl::{NoiseParam, Problem, SblState};
use crate::sensing::Dictionary;

/// `γ̂ = s²/(βq² − s)`. Non-positive or infinite values mean the term is
/// excluded (see [`alpha_from_gamma`]).
pub fn gamma_hat(s: f64, q: f64, beta: f64) -> f64 {
    s * s / (beta * q * q - s)
}

/// `β̂ = (K − 2)/(yᵀB⁻¹y)`.
pub fn update_beta(state: &SblState, problem: &Problem<'_>) -> Result<f64> {
    let k = problem.k();
    if k <= 2 {
        return Err(BcsError::InsufficientMeasurements { k, needed: 3 });
    }
    if problem.y_sq() == 0.0 {
        return Err(BcsError::DegenerateData("measurement vector is zero".into()));
    }
    let quad = state.y_quad(problem);
    let beta = (k as f64 - 2.0) / quad;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(BcsError::NumericalBreakdown(format!("beta update gave {beta}")));
    }
    Ok(beta)
}

/// Evidence gain of adding an inactive term at its optimal precision.
pub fn delta_l_add(s_cap: f64, q_cap: f64, beta: f64) -> f64 {
    let bq2 = beta * q_cap * q_cap;
    (bq2 - s_cap) / (2.0 * s_cap) + 0.5 * (s_cap / bq2).ln()
}

/// Evidence gain of moving an active term from `alpha` to `new_alpha`.
pub fn delta_l_reestimate(s_cap: f64, q_cap: f64, alpha: f64, new_alpha: f64, beta: f64) -> f64 {
    let d = 1.0 / new_alpha - 1.0 / alpha;
    if d == 0.0 {
        return 0.0;
    }
    beta * q_cap * q_cap / (2.0 * (s_cap + 1.0 / d)) - 0.5 * (s_cap * d).ln_1p()
}

/// Evidence gain of removing an active term.
pub fn delta_l_delete(s_cap: f64, q_cap: f64, alpha: f64, beta: f64) -> f64 {
    beta * q_cap * q_cap / (2.0 * (s_cap - alpha)) - 0.5 * (-s_cap / alpha).ln_1p()
}

/// `ln(α̃(α + s)/(α(α̃ + s)))`, the complexity part of a precision change.
pub(crate) fn log_shrink_ratio(s: f64, alpha: f64, new_alpha: f64) -> f64 {
    ((new_alpha - alpha) * s / (alpha * (new_alpha + s))).ln_1p()
}

/// Re-estimate gain from the leave-one-out factors, for well-determined
/// terms where `α − 𝒮` is dominated by rounding.
pub fn delta_l_reestimate_factors(s: f64, q: f64, alpha: f64, new_alpha: f64, beta: f64) -> f64 {
    0.5 * log_shrink_ratio(s, alpha, new_alpha)
        + 0.5 * beta * q * q * (alpha - new_alpha) / ((new_alpha + s) * (alpha + s))
}

/// Deletion gain from the leave-one-out factors.
pub fn delta_l_delete_factors(s: f64, q: f64, alpha: f64, beta: f64) -> f64 {
    0.5 * (s / alpha).ln_1p() - 0.5 * beta * q * q / (alpha + s)
}

/// The action the inner loop would take for basis `m`, if any.
pub fn candidate(state: &SblState, m: usize, beta: f64) -> Option<ActionPlan> {
    let f = state.factors(m);
    let (s_cap, q_cap) = (state.cap_s()[m], state.cap_q()[m]);
    if !(f.s > 0.0) {
        return None;
    }
    let new_alpha = alpha_from_gamma(gamma_hat(f.s, f.q, beta));
    match state.position(m) {
        None if new_alpha.is_finite() => Some(ActionPlan {
            kind: ActionKind::Add,
            n: m,
            new_alpha,
            delta_l: delta_l_add(s_cap, q_cap, beta),
            position: None,
            update_coeff: 1.0 / (beta * (new_alpha + s_cap)),
        }),
        None => None,
        Some(j) => {
            let alpha = state.alphas()[j];
            let p_jj = state.post_factor()[(j, j)];
            let exact = state.is_well_determined(m);
            if new_alpha.is_finite() {
                Some(ActionPlan {
                    kind: ActionKind::Reestimate,
                    n: m,
                    new_alpha,
                    delta_l: if exact {
                        delta_l_reestimate_factors(f.s, f.q, alpha, new_alpha, beta)
                    } else {
                        delta_l_reestimate(s_cap, q_cap, alpha, new_alpha, beta)
                    },
                    position: Some(j),
                    update_coeff: 1.0 / (p_jj + 1.0 / (beta * (new_alpha - alpha))),
                })
            } else {
                Some(ActionPlan {
                    kind: ActionKind::Delete,
                    n: m,
                    new_alpha,
                    delta_l: if exact {
                        delta_l_delete_factors(f.s, f.q, alpha, beta)
                    } else {
                        delta_l_delete(s_cap, q_cap, alpha, beta)
                    },
                    position: Some(j),
                    update_coeff: 1.0 / p_jj,
                })
            }
        }
    }
}

/// The action with the largest evidence gain; `None` when nothing applies.
pub fn plan_actions(state: &SblState, beta: f64) -> Option<ActionPlan> {
    engine::scan(state, state.cap_s().len(), |st, m| candidate(st, m, beta)).best
}

/// Applies a plan produced by [`plan_actions`]; the state is unchanged on
/// error.
pub fn apply_action(state: &mut SblState, problem: &Problem<'_>, plan: &ActionPlan) -> Result<f64> {
    if !matches!(state.noise(), NoiseParam::Beta(_)) {
        return Err(BcsError::InvalidHyperparameter(
            "precision-estimate action applied to a marginalized state".into(),
        ));
    }
    engine::apply_plan(state, problem, plan)
}

struct Mpe;

impl Treatment for Mpe {
    fn initial_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam> {
        update_beta(state, problem).map(NoiseParam::Beta)
    }

    fn candidate(&self, state: &SblState, m: usize) -> Option<ActionPlan> {
        candidate(state, m, state.noise().scale())
    }

    fn update_noise(&self, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam> {
        update_beta(state, problem).map(NoiseParam::Beta)
    }

    fn covariance_scale(&self, state: &SblState, _problem: &Problem<'_>) -> Result<f64> {
        Ok(1.0 / state.noise().scale())
    }
}

/// Full reconstruction of one measurement vector.
pub fn reconstruct(dict: &Dictionary, y: &[f64], opts: &EngineOptions) -> Result<ReconstructionResult> {
    let problem = Problem::new(dict, y)?;
    if problem.k() <= 2 {
        return Err(BcsError::InsufficientMeasurements { k: problem.k(), needed: 3 });
    }
    engine::run(&problem, opts, &Mpe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use crate::sensing::{self, MeasurementNoise};
    use crate::wavelet::{self, WaveletCoefficients};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(k: usize, n: usize, seed: u64) -> (Dictionary, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        (Dictionary::from_theta(theta).unwrap(), y)
    }

    #[test]
    fn gamma_hat_example() {
        assert_relative_eq!(gamma_hat(1.0, 2f64.sqrt(), 1.0), 1.0, max_relative = 1e-15);
        // Below the relevance threshold the estimate is negative: excluded.
        assert!(alpha_from_gamma(gamma_hat(1.0, 0.5, 1.0)).is_infinite());
    }

    #[test]
    fn beta_update_example() {
        let (dict, _) = random_problem(12, 20, 0);
        let mut y = vec![0.0; 12];
        y[0] = 1.0;
        y[1] = 3.0;
        let problem = Problem::new(&dict, &y).unwrap();
        let state = SblState::empty(&problem, NoiseParam::Beta(1.0)).unwrap();
        assert_relative_eq!(update_beta(&state, &problem).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn beta_update_needs_three_measurements() {
        let (dict, y) = random_problem(2, 4, 1);
        let problem = Problem::new(&dict, &y).unwrap();
        let state = SblState::empty(&problem, NoiseParam::Beta(1.0)).unwrap();
        assert!(matches!(update_beta(&state, &problem), Err(BcsError::InsufficientMeasurements { .. })));
    }

    #[test]
    fn add_gain_vanishes_at_threshold() {
        assert_eq!(delta_l_add(4.0, 2.0, 1.0), 0.0);
        assert!(delta_l_add(1.0, 3.0, 1.0) > 0.0);
    }

    #[test]
    fn first_add_gain_matches_dense_evidence() {
        let (dict, y) = random_problem(10, 14, 2);
        let problem = Problem::new(&dict, &y).unwrap();
        let beta = 0.7;
        let state = SblState::empty(&problem, NoiseParam::Beta(beta)).unwrap();
        let plan = plan_actions(&state, beta).expect("some term is relevant");
        assert_eq!(plan.kind, ActionKind::Add);
        let before = dense::log_evidence_mpe(&dict, &y, &[], &[], beta).unwrap();
        let after = dense::log_evidence_mpe(&dict, &y, &[plan.n], &[plan.new_alpha], beta).unwrap();
        assert_relative_eq!(plan.delta_l, after - before, epsilon = 1e-10);
    }

    #[test]
    fn deleting_the_sole_term_matches_dense_evidence() {
        let (dict, y) = random_problem(10, 14, 3);
        let problem = Problem::new(&dict, &y).unwrap();
        let beta = 0.9;
        // A very weak prior on a barely relevant term makes deletion the
        // natural move.
        let m = 4;
        let alpha = 1e3;
        let state = SblState::from_alphas(&problem, &[m], &[alpha], NoiseParam::Beta(beta)).unwrap();
        let (s_cap, q_cap) = (state.cap_s()[m], state.cap_q()[m]);
        let predicted = delta_l_delete(s_cap, q_cap, alpha, beta);
        let before = dense::log_evidence_mpe(&dict, &y, &[m], &[alpha], beta).unwrap();
        let after = dense::log_evidence_mpe(&dict, &y, &[], &[], beta).unwrap();
        assert_relative_eq!(predicted, after - before, epsilon = 1e-10);
        let f = state.factors(m);
        assert_relative_eq!(delta_l_delete_factors(f.s, f.q, alpha, beta), predicted, epsilon = 1e-10);
    }

    #[test]
    fn reestimate_forms_agree() {
        let (dict, y) = random_problem(12, 16, 4);
        let problem = Problem::new(&dict, &y).unwrap();
        let beta = 1.3;
        let state = SblState::from_alphas(&problem, &[1, 7], &[0.5, 2.0], NoiseParam::Beta(beta)).unwrap();
        let f = state.factors(7);
        let (s_cap, q_cap) = (state.cap_s()[7], state.cap_q()[7]);
        let a = delta_l_reestimate(s_cap, q_cap, 2.0, 0.8, beta);
        let b = delta_l_reestimate_factors(f.s, f.q, 2.0, 0.8, beta);
        let dense_gain = dense::log_evidence_mpe(&dict, &y, &[1, 7], &[0.5, 0.8], beta).unwrap()
            - dense::log_evidence_mpe(&dict, &y, &[1, 7], &[0.5, 2.0], beta).unwrap();
        assert_relative_eq!(a, dense_gain, epsilon = 1e-10);
        assert_relative_eq!(b, dense_gain, epsilon = 1e-10);
        assert_eq!(delta_l_reestimate(s_cap, q_cap, 2.0, 2.0, beta), 0.0);
    }

    #[test]
    fn recovers_a_single_atom() {
        let (k, n) = (64, 128);
        let mut w = vec![0.0; n];
        w[37] = 1.7;
        let x = wavelet::inverse(&WaveletCoefficients::new(w.clone()).unwrap());
        let setup = sensing::generate_projection(k, n, 9).unwrap();
        let dict = sensing::build_dictionary(&setup).unwrap();
        let y = sensing::compress(&setup, &x, MeasurementNoise::NONE).unwrap();
        let r = reconstruct(&dict, y.values(), &EngineOptions::default()).unwrap();
        let re = crate::metrics::strict_re(&w, &r.mean_coeffs).unwrap();
        assert!(re < 1e-6, "RE {re}");
        assert_eq!(r.active, vec![37]);
    }

    #[test]
    fn zero_measurements_are_rejected() {
        let (dict, _) = random_problem(8, 16, 5);
        let y = vec![0.0; 8];
        assert!(reconstruct(&dict, &y, &EngineOptions::default()).is_err());
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let (dict, y) = random_problem(20, 32, 6);
        let opts = EngineOptions { record_actions: true, ..Default::default() };
        let a = reconstruct(&dict, &y, &opts).unwrap();
        let b = reconstruct(&dict, &y, &opts).unwrap();
        assert_eq!(a.mean_coeffs, b.mean_coeffs);
        assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn rejects_marginalized_state() {
        let (dict, y) = random_problem(8, 10, 7);
        let problem = Problem::new(&dict, &y).unwrap();
        let mut state = SblState::empty(&problem, NoiseParam::Gamma { a0: 1.0, b0: 0.0 }).unwrap();
        let plan = ActionPlan {
            kind: ActionKind::Add,
            n: 0,
            new_alpha: 1.0,
            delta_l: 0.0,
            position: None,
            update_coeff: 1.0,
        };
        assert!(apply_action(&mut state, &problem, &plan).is_err());
        assert!(state.active().is_empty());
    }
}
