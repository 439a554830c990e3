//! Randomized equivalence suite: drives the incremental engines through
//! action sequences on small random problems and compares every cached
//! quantity, the posterior, and each predicted evidence gain with the dense
//! reference computations in [`crate::dense`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense;
use crate::engine::{self, ActionPlan, Algorithm};
use crate::error::{BcsError, Result};
use crate::ipe::{self, IpeHyper};
use crate::mpe;
use crate::sbl::{NoiseParam, Problem, SblState};
use crate::seeds::derive_seed;
use crate::sensing::{self, Dictionary};

/// Relative tolerance for cached and posterior quantities, and absolute
/// tolerance for evidence gains.
pub const TOLERANCE: f64 = 1e-8;

/// Smallest accepted dense evidence change for an applied action.
pub const MONOTONICITY_SLACK: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub k: usize,
    pub n: usize,
    pub instances: usize,
    pub actions_per_instance: usize,
    pub seed: u64,
    /// Corrupt one cached sparseness value after the first action, to show
    /// the suite detects it.
    pub inject_fault: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { k: 16, n: 32, instances: 50, actions_per_instance: 25, seed: 1, inject_fault: false }
    }
}

/// The quantities compared against the dense path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    Mean,
    PosteriorFactor,
    SparsenessCache,
    QualityCache,
    DataFitCache,
    SparsenessFactor,
    QualityFactor,
    DataFitFactor,
    EvidenceGain,
}

impl Quantity {
    pub const ALL: [Quantity; 9] = [
        Quantity::Mean,
        Quantity::PosteriorFactor,
        Quantity::SparsenessCache,
        Quantity::QualityCache,
        Quantity::DataFitCache,
        Quantity::SparsenessFactor,
        Quantity::QualityFactor,
        Quantity::DataFitFactor,
        Quantity::EvidenceGain,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Mean => "posterior mean mu",
            Quantity::PosteriorFactor => "posterior factor (Sigma or Lambda)",
            Quantity::SparsenessCache => "sparseness cache S_m",
            Quantity::QualityCache => "quality cache Q_m",
            Quantity::DataFitCache => "data-fit cache G_m",
            Quantity::SparsenessFactor => "sparseness factor s_m",
            Quantity::QualityFactor => "quality factor q_m",
            Quantity::DataFitFactor => "data-fit factor g_m",
            Quantity::EvidenceGain => "evidence gain delta-L",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub algorithm: Algorithm,
    pub instances: usize,
    pub actions: usize,
    /// Largest deviation per quantity, in [`Quantity::ALL`] order.
    pub max_deviation: [f64; 9],
    /// Smallest dense evidence change over all applied actions.
    pub min_evidence_change: f64,
    /// First few breaches, for diagnostics.
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn deviation(&self, q: Quantity) -> f64 {
        self.max_deviation[Quantity::ALL.iter().position(|&x| x == q).expect("listed")]
    }

    pub fn equivalence_passed(&self) -> bool {
        self.max_deviation.iter().all(|&d| d <= TOLERANCE)
    }

    pub fn monotonicity_passed(&self) -> bool {
        self.min_evidence_change >= MONOTONICITY_SLACK
    }

    pub fn passed(&self) -> bool {
        self.equivalence_passed() && self.monotonicity_passed()
    }

    fn record(&mut self, q: Quantity, dev: f64, context: &str) {
        let slot = &mut self.max_deviation[Quantity::ALL.iter().position(|&x| x == q).expect("listed")];
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        *slot = slot.max(dev);
        if dev > TOLERANCE && self.failures.len() < 10 {
            self.failures.push(format!("{} mismatch ({dev:.3e}) {context}", q.label()));
        }
    }
}

/// `max|a − b| / max|b|`, with an absolute floor for all-zero references.
fn rel_dev(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.into_iter().zip(b) {
        num = num.max((x - y).abs());
        den = den.max(y.abs());
    }
    if den > 0.0 { num / den } else { num }
}

fn random_instance(cfg: &OracleConfig, index: usize) -> Result<(Dictionary, Vec<f64>)> {
    let seed = derive_seed(cfg.seed, &[index as u64]);
    let setup = sensing::generate_projection(cfg.k, cfg.n, seed)?;
    let dict = sensing::build_dictionary(&setup)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut w = vec![0.0; cfg.n];
    let nonzero = (cfg.k / 4).max(1);
    for _ in 0..nonzero {
        let i = rng.random_range(0..cfg.n);
        w[i] = StandardNormal.sample(&mut rng);
    }
    let theta = dict.theta();
    let y = (0..cfg.k)
        .map(|r| {
            let clean: f64 = (0..cfg.n).map(|c| theta[(r, c)] * w[c]).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            clean + 0.1 * noise
        })
        .collect();
    Ok((dict, y))
}

fn noise_update(alg: Algorithm, state: &SblState, problem: &Problem<'_>) -> Result<NoiseParam> {
    match alg {
        Algorithm::Mpe => mpe::update_beta(state, problem).map(NoiseParam::Beta),
        Algorithm::Ipe => ipe::update_b0(state, problem, 1.0).map(|b0| NoiseParam::Gamma { a0: 1.0, b0 }),
    }
}

fn dense_evidence(alg: Algorithm, problem: &Problem<'_>, active: &[usize], alphas: &[f64], noise: NoiseParam) -> Result<f64> {
    match (alg, noise) {
        (Algorithm::Mpe, NoiseParam::Beta(beta)) => {
            dense::log_evidence_mpe(problem.dict(), problem.y(), active, alphas, beta)
        }
        (Algorithm::Ipe, NoiseParam::Gamma { a0, b0 }) => {
            dense::log_evidence_ipe_profile(problem.dict(), problem.y(), active, alphas, a0, b0)
        }
        _ => Err(BcsError::InvalidHyperparameter("algorithm and noise parameter disagree".into())),
    }
}

fn candidate(alg: Algorithm, state: &SblState, k: usize, m: usize) -> Option<ActionPlan> {
    match state.noise() {
        NoiseParam::Beta(beta) if alg == Algorithm::Mpe => mpe::candidate(state, m, beta),
        NoiseParam::Gamma { a0, b0 } if alg == Algorithm::Ipe => ipe::candidate_ipe(state, m, &IpeHyper { a0, b0, k }),
        _ => None,
    }
}

/// Model after applying `plan`, as (active, alphas).
fn planned_model(state: &SblState, plan: &ActionPlan) -> (Vec<usize>, Vec<f64>) {
    let mut active = state.active().to_vec();
    let mut alphas = state.alphas().to_vec();
    match plan.position {
        None => {
            active.push(plan.n);
            alphas.push(plan.new_alpha);
        }
        Some(j) if plan.new_alpha.is_finite() => alphas[j] = plan.new_alpha,
        Some(j) => {
            active.remove(j);
            alphas.remove(j);
        }
    }
    (active, alphas)
}

fn compare_state(alg: Algorithm, state: &SblState, problem: &Problem<'_>, report: &mut OracleReport, ctx: &str) -> Result<()> {
    let (dict, y) = (problem.dict(), problem.y());
    let (active, alphas) = (state.active(), state.alphas());
    let (mu, c_inv) = dense::dense_posterior_c(dict, y, active, alphas)?;
    let post_ref = c_inv / state.noise().scale();
    report.record(Quantity::Mean, rel_dev(state.mu().iter().copied(), mu.iter().copied()), ctx);
    report.record(
        Quantity::PosteriorFactor,
        rel_dev(state.post_factor().iter().copied(), post_ref.iter().copied()),
        ctx,
    );
    let (s_ref, q_ref, quad_ref) = dense::dense_caches(dict, y, active, alphas)?;
    report.record(Quantity::SparsenessCache, rel_dev(state.cap_s().iter().copied(), s_ref.iter().copied()), ctx);
    report.record(Quantity::QualityCache, rel_dev(state.cap_q().iter().copied(), q_ref.iter().copied()), ctx);

    let b0 = match state.noise() {
        NoiseParam::Gamma { b0, .. } => b0,
        NoiseParam::Beta(_) => 0.0,
    };
    if alg == Algorithm::Ipe {
        let g = state.cap_g().unwrap_or(f64::NAN);
        report.record(Quantity::DataFitCache, rel_dev([g], [quad_ref + 2.0 * b0]), ctx);
    }
    let mut got = (Vec::new(), Vec::new(), Vec::new());
    let mut want = (Vec::new(), Vec::new(), Vec::new());
    for m in 0..problem.n() {
        let f = state.factors(m);
        let r = dense::dense_factors(dict, y, active, alphas, b0, m)?;
        got.0.push(f.s);
        got.1.push(f.q);
        got.2.push(f.g);
        want.0.push(r.s);
        want.1.push(r.q);
        want.2.push(r.g);
    }
    report.record(Quantity::SparsenessFactor, rel_dev(got.0, want.0), ctx);
    report.record(Quantity::QualityFactor, rel_dev(got.1, want.1), ctx);
    if alg == Algorithm::Ipe {
        report.record(Quantity::DataFitFactor, rel_dev(got.2, want.2), ctx);
    }
    Ok(())
}

/// Runs the suite for one algorithm.
pub fn run_suite(cfg: &OracleConfig, alg: Algorithm) -> Result<OracleReport> {
    if cfg.instances == 0 || cfg.actions_per_instance == 0 || cfg.k < 3 || cfg.n < 2 {
        return Err(BcsError::InvalidSize("oracle suite needs instances, actions, K >= 3 and N >= 2".into()));
    }
    let mut report = OracleReport {
        algorithm: alg,
        instances: cfg.instances,
        actions: 0,
        max_deviation: [0.0; 9],
        min_evidence_change: f64::INFINITY,
        failures: Vec::new(),
    };
    for inst in 0..cfg.instances {
        let (dict, y) = random_instance(cfg, inst)?;
        let problem = Problem::new(&dict, &y)?;
        let seed_atom = problem.best_single_atom().ok_or(BcsError::DegenerateData("zero dictionary".into()))?;
        let mut state = SblState::from_alphas(&problem, &[seed_atom], &[1.0], NoiseParam::Beta(1.0))?;
        state.set_noise(noise_update(alg, &state, &problem)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[inst as u64, 2]));

        for step in 0..cfg.actions_per_instance {
            let ctx = format!("[{} instance {inst}, step {step}]", alg.label());
            compare_state(alg, &state, &problem, &mut report, &ctx)?;

            let before = dense_evidence(alg, &problem, state.active(), state.alphas(), state.noise())?;
            let plans: Vec<ActionPlan> = (0..problem.n()).filter_map(|m| candidate(alg, &state, problem.k(), m)).collect();
            for plan in &plans {
                let (act, al) = planned_model(&state, plan);
                let after = dense_evidence(alg, &problem, &act, &al, state.noise())?;
                report.record(Quantity::EvidenceGain, (plan.delta_l - (after - before)).abs(), &ctx);
            }
            if plans.is_empty() {
                break;
            }
            // Alternate between the greedy choice and a random candidate so
            // that re-estimates and deletions far from the greedy path are
            // exercised too.
            let plan = if rng.random_bool(0.5) {
                match engine::scan(&state, problem.n(), |st, m| candidate(alg, st, problem.k(), m)).best {
                    Some(p) => p,
                    None => break,
                }
            } else {
                plans[rng.random_range(0..plans.len())]
            };
            let applied = match alg {
                Algorithm::Mpe => mpe::apply_action(&mut state, &problem, &plan),
                Algorithm::Ipe => ipe::apply_action_ipe(&mut state, &problem, &plan),
            };
            if let Err(e) = applied {
                if e.is_numerical() {
                    continue;
                }
                return Err(e);
            }
            report.actions += 1;
            let after = dense_evidence(alg, &problem, state.active(), state.alphas(), state.noise())?;
            report.min_evidence_change = report.min_evidence_change.min(after - before);
            if after - before < MONOTONICITY_SLACK && report.failures.len() < 10 {
                report.failures.push(format!("evidence decreased by {:.3e} {ctx}", before - after));
            }

            if cfg.inject_fault && inst == 0 && step == 0 {
                state.perturb_cap_s(0, 1e-3);
            }
            // Periodically move the noise parameter, as the outer loop does.
            if step % 8 == 7 {
                state.set_noise(noise_update(alg, &state, &problem)?)?;
            }
        }
        compare_state(alg, &state, &problem, &mut report, &format!("[{} instance {inst}, final]", alg.label()))?;
    }
    Ok(report)
}
