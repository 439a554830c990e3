//! Reconstruction state shared by both engines.
//!
//! Both engines keep a posterior factor `P` with `C⁻¹ = κ·P`, where
//! `C = A + Θ_aᵀΘ_a` over the active set. The MAP-precision engine stores
//! `P = Σ = β⁻¹C⁻¹` (so `κ = β`); the marginalized engine stores `P = Λ = C⁻¹`
//! (`κ = 1`). With that substitution the add / re-estimate / delete updates of
//! the two engines are the same formulas, implemented once here.
//!
//! Alongside `P` the state caches, for every basis index `m`,
//! `𝒮_m = Θ_mᵀB⁻¹Θ_m`, `𝒬_m = Θ_mᵀB⁻¹y`, and the scalar `yᵀB⁻¹y`, which is
//! the index-independent part of `G_m = yᵀB⁻¹y + 2b₀`.

use nalgebra::{DMatrix, DVector};

use crate::error::{BcsError, Result};
use crate::sensing::Dictionary;

/// Condition number above which `C` is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Relative gap `(α − 𝒮)/α` below which the cached leave-one-out
/// correction is replaced by the posterior-diagonal identity. The gap equals
/// `α/(α + s)`, so below one half means `s > α`: the coefficient is
/// well-determined and `α − 𝒮` would lose most of its digits to
/// cancellation.
pub const DEGENERATE_GAP: f64 = 0.5;

/// A dictionary paired with one measurement vector and the products reused
/// by every iteration.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    dict: &'a Dictionary,
    y: &'a [f64],
    theta_t_y: Vec<f64>,
    y_sq: f64,
}

impl<'a> Problem<'a> {
    pub fn new(dict: &'a Dictionary, y: &'a [f64]) -> Result<Self> {
        if y.len() != dict.k() {
            return Err(BcsError::Shape(format!(
                "measurement length {} does not match dictionary rows {}",
                y.len(),
                dict.k()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(BcsError::DegenerateData("non-finite measurement".into()));
        }
        Ok(Self {
            dict,
            y,
            theta_t_y: dict.project(y),
            y_sq: y.iter().map(|v| v * v).sum(),
        })
    }

    pub fn dict(&self) -> &'a Dictionary {
        self.dict
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn k(&self) -> usize {
        self.dict.k()
    }

    pub fn n(&self) -> usize {
        self.dict.n()
    }

    /// `Θᵀy`.
    pub fn theta_t_y(&self) -> &[f64] {
        &self.theta_t_y
    }

    pub fn y_sq(&self) -> f64 {
        self.y_sq
    }

    /// The basis index maximizing `(Θ_nᵀy)²/‖Θ_n‖²`; lowest index on ties.
    pub fn best_single_atom(&self) -> Option<usize> {
        let norms = self.dict.col_sq_norms();
        let mut best: Option<(usize, f64)> = None;
        for (n, (&p, &nn)) in self.theta_t_y.iter().zip(norms).enumerate() {
            if nn <= 0.0 {
                continue;
            }
            let score = p * p / nn;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((n, score));
            }
        }
        best.map(|(n, _)| n)
    }
}

/// The prediction-error treatment carried by a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseParam {
    /// MAP estimate of the precision `β`.
    Beta(f64),
    /// Gamma prior on `β` with shape `a0` and rate `b0`, integrated out.
    Gamma { a0: f64, b0: f64 },
}

impl NoiseParam {
    /// The factor `κ` in `C⁻¹ = κ·P`.
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseParam::Beta(beta) => beta,
            NoiseParam::Gamma { .. } => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseParam::Beta(beta) if !(beta > 0.0 && beta.is_finite()) => Err(
                BcsError::InvalidHyperparameter(format!("beta = {beta} must be positive")),
            ),
            NoiseParam::Gamma { a0, b0 } if !(a0 > 0.0 && b0 >= 0.0 && a0.is_finite() && b0.is_finite()) => {
                Err(BcsError::InvalidHyperparameter(format!(
                    "gamma prior needs a0 > 0 and b0 >= 0, got a0 = {a0}, b0 = {b0}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Leave-one-out factors for one basis vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorTriple {
    /// `s_n = Θ_nᵀB₋ₙ⁻¹Θ_n`
    pub s: f64,
    /// `q_n = Θ_nᵀB₋ₙ⁻¹y`
    pub q: f64,
    /// `g_n = yᵀB₋ₙ⁻¹y + 2b₀`; only meaningful for the marginalized engine.
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct SblState {
    active: Vec<usize>,
    position: Vec<Option<usize>>,
    alpha: Vec<f64>,
    mu: DVector<f64>,
    post: DMatrix<f64>,
    noise: NoiseParam,
    cap_s: Vec<f64>,
    cap_q: Vec<f64>,
    y_quad: f64,
}

impl SblState {
    /// The empty model: every `α_m = ∞`, so `B = I`.
    pub fn empty(problem: &Problem<'_>, noise: NoiseParam) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            active: Vec::new(),
            position: vec![None; problem.n()],
            alpha: Vec::new(),
            mu: DVector::zeros(0),
            post: DMatrix::zeros(0, 0),
            noise,
            cap_s: problem.dict().col_sq_norms().to_vec(),
            cap_q: problem.theta_t_y().to_vec(),
            y_quad: problem.y_sq(),
        })
    }

    /// A state with the given finite `α`'s, computed directly.
    pub fn from_alphas(
        problem: &Problem<'_>,
        active: &[usize],
        alphas: &[f64],
        noise: NoiseParam,
    ) -> Result<Self> {
        if active.len() != alphas.len() {
            return Err(BcsError::Shape("active set and alpha lengths differ".into()));
        }
        let mut state = Self::empty(problem, noise)?;
        for (&n, &a) in active.iter().zip(alphas) {
            if n >= problem.n() {
                return Err(BcsError::InvalidSize(format!("basis index {n} out of range")));
            }
            if state.position[n].is_some() {
                return Err(BcsError::InvalidSize(format!("basis index {n} repeated")));
            }
            check_alpha(a)?;
            state.position[n] = Some(state.active.len());
            state.active.push(n);
            state.alpha.push(a);
        }
        state.refresh(problem)?;
        Ok(state)
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// Position of basis index `m` within the active list.
    pub fn position(&self, m: usize) -> Option<usize> {
        self.position[m]
    }

    /// `α_m`, infinite when `m` is inactive.
    pub fn alpha_of(&self, m: usize) -> f64 {
        self.position[m].map_or(f64::INFINITY, |j| self.alpha[j])
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// `Σ` for a `Beta` state, `Λ` for a `Gamma` state.
    pub fn post_factor(&self) -> &DMatrix<f64> {
        &self.post
    }

    /// `C⁻¹` regardless of the stored convention.
    pub fn c_inverse(&self) -> DMatrix<f64> {
        &self.post * self.noise.scale()
    }

    pub fn noise(&self) -> NoiseParam {
        self.noise
    }

    pub fn cap_s(&self) -> &[f64] {
        &self.cap_s
    }

    pub fn cap_q(&self) -> &[f64] {
        &self.cap_q
    }

    /// `G_m = yᵀB⁻¹y + 2b₀`, identical for every `m`; `None` for `Beta` states.
    pub fn cap_g(&self) -> Option<f64> {
        match self.noise {
            NoiseParam::Gamma { b0, .. } => Some(self.y_quad + 2.0 * b0),
            NoiseParam::Beta(_) => None,
        }
    }

    /// The incrementally maintained `yᵀB⁻¹y`.
    pub fn tracked_y_quad(&self) -> f64 {
        self.y_quad
    }

    /// `yᵀB⁻¹y` without forming `B`. Equal to `yᵀy − (Θ_aᵀy)ᵀμ`; evaluated as
    /// `‖y − Θ_aμ‖² + μᵀAμ`, a sum of nonnegative terms that stays accurate
    /// when the model fits `y` almost exactly.
    pub fn y_quad(&self, problem: &Problem<'_>) -> f64 {
        let theta = problem.dict().theta();
        let mut resid = problem.y().to_vec();
        for (&n, &m) in self.active.iter().zip(self.mu.iter()) {
            for (r, t) in resid.iter_mut().zip(theta.column(n).iter()) {
                *r -= t * m;
            }
        }
        let penalty: f64 = self.alpha.iter().zip(self.mu.iter()).map(|(a, m)| a * m * m).sum();
        resid.iter().map(|r| r * r).sum::<f64>() + penalty
    }

    /// Posterior mean scattered to all `N` coefficients.
    pub fn mean_coeffs(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        for (&idx, &m) in self.active.iter().zip(self.mu.iter()) {
            w[idx] = m;
        }
        w
    }

    /// Changes the noise parameter. A `Beta` state rescales `Σ` so that
    /// `C⁻¹` is unchanged.
    pub fn set_noise(&mut self, noise: NoiseParam) -> Result<()> {
        noise.validate()?;
        let old_scale = self.noise.scale();
        let new_scale = noise.scale();
        if old_scale != new_scale {
            self.post *= old_scale / new_scale;
        }
        self.noise = noise;
        Ok(())
    }

    /// Recomputes `μ`, the posterior factor and all caches from the current
    /// `α`'s with a Cholesky factorization of `C`.
    pub fn refresh(&mut self, problem: &Problem<'_>) -> Result<()> {
        let n_active = self.active.len();
        let gram = problem.dict().gram();
        let tty = problem.theta_t_y();
        self.cap_s.copy_from_slice(problem.dict().col_sq_norms());
        self.cap_q.copy_from_slice(tty);
        if n_active == 0 {
            self.mu = DVector::zeros(0);
            self.post = DMatrix::zeros(0, 0);
            self.y_quad = problem.y_sq();
            return Ok(());
        }
        let mut c = DMatrix::zeros(n_active, n_active);
        for (a, &ia) in self.active.iter().enumerate() {
            for (b, &ib) in self.active.iter().enumerate() {
                c[(a, b)] = gram[(ia, ib)];
            }
            c[(a, a)] += self.alpha[a];
        }
        let chol = c
            .cholesky()
            .ok_or_else(|| BcsError::IllConditioned("C is not positive definite".into()))?;
        let l_diag = chol.l_dirty().diagonal();
        let (lo, hi) = l_diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if (hi / lo).powi(2) > MAX_CONDITION {
            return Err(BcsError::IllConditioned(format!(
                "condition estimate {:.3e} exceeds {MAX_CONDITION:e}",
                (hi / lo).powi(2)
            )));
        }
        let lambda = chol.inverse();
        let rhs = DVector::from_iterator(n_active, self.active.iter().map(|&i| tty[i]));
        self.mu = &lambda * &rhs;
        self.y_quad = self.y_quad(problem);

        // W = Gram[:, active], V = W Λ; 𝒮_m = Gram_mm − V_m·W_m, 𝒬_m = Θ_mᵀy − W_m·μ.
        let w = gram.select_columns(self.active.iter());
        let v = &w * &lambda;
        for m in 0..problem.n() {
            let mut quad = 0.0;
            let mut lin = 0.0;
            for a in 0..n_active {
                quad += v[(m, a)] * w[(m, a)];
                lin += w[(m, a)] * self.mu[a];
            }
            self.cap_s[m] -= quad;
            self.cap_q[m] -= lin;
        }
        self.post = lambda / self.noise.scale();
        Ok(())
    }

    /// Whether the factors of active basis `m` come from the
    /// posterior-diagonal identity rather than the cached `𝒮`, `𝒬`.
    pub fn is_well_determined(&self, m: usize) -> bool {
        self.position[m].is_some_and(|j| self.alpha[j] - self.cap_s[m] <= DEGENERATE_GAP * self.alpha[j])
    }

    /// `s_m`, `q_m`, `g_m` from the caches.
    ///
    /// Inactive terms use the caches directly. Active terms use the
    /// leave-one-out corrections `s = α𝒮/(α−𝒮)`, `q = α𝒬/(α−𝒮)`,
    /// `g = G + 𝒬²/(α−𝒮)`; when `α−𝒮` is below `DEGENERATE_GAP·α` the
    /// equivalent posterior-diagonal forms `s = 1/Λ_jj − α`, `q = μ_j/Λ_jj`,
    /// `g = G + μ_j²/Λ_jj` are used instead.
    pub fn factors(&self, m: usize) -> FactorTriple {
        let g_base = self.y_quad + 2.0 * self.b0();
        let (s_cap, q_cap) = (self.cap_s[m], self.cap_q[m]);
        match self.position[m] {
            None => FactorTriple { s: s_cap, q: q_cap, g: g_base },
            Some(j) => {
                let alpha = self.alpha[j];
                let gap = alpha - s_cap;
                if !self.is_well_determined(m) {
                    FactorTriple {
                        s: alpha * s_cap / gap,
                        q: alpha * q_cap / gap,
                        g: g_base + q_cap * q_cap / gap,
                    }
                } else {
                    let lambda_jj = self.post[(j, j)] * self.noise.scale();
                    let mu_j = self.mu[j];
                    FactorTriple {
                        s: 1.0 / lambda_jj - alpha,
                        q: mu_j / lambda_jj,
                        g: g_base + mu_j * mu_j / lambda_jj,
                    }
                }
            }
        }
    }

    fn b0(&self) -> f64 {
        match self.noise {
            NoiseParam::Gamma { b0, .. } => b0,
            NoiseParam::Beta(_) => 0.0,
        }
    }

    /// `Σ_a Gram[:, active_a]·coef_a`, a length-`N` vector.
    fn gram_combination(&self, gram: &DMatrix<f64>, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; gram.nrows()];
        for (&idx, &c) in self.active.iter().zip(coef) {
            if c == 0.0 {
                continue;
            }
            for (o, g) in out.iter_mut().zip(gram.column(idx).iter()) {
                *o += c * g;
            }
        }
        out
    }

    /// Adds basis `n` with precision `alpha`. Returns the new diagonal entry
    /// `P_nn`.
    pub fn add(&mut self, problem: &Problem<'_>, n: usize, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        if self.position[n].is_some() {
            return Err(BcsError::InvalidSize(format!("basis {n} is already active")));
        }
        let kappa = self.noise.scale();
        let gram = problem.dict().gram();
        let n_active = self.active.len();
        let denom = alpha + self.cap_s[n];
        if !(denom > 0.0) {
            return Err(BcsError::NumericalBreakdown(format!(
                "alpha + S_n = {denom} for basis {n}"
            )));
        }
        let p_nn = 1.0 / (kappa * denom);
        let mu_n = kappa * p_nn * self.cap_q[n];

        // v = P Θ_aᵀΘ_n
        let cross = DVector::from_iterator(n_active, self.active.iter().map(|&a| gram[(a, n)]));
        let v = &self.post * &cross;
        let k2 = kappa * kappa * p_nn;
        let k1 = kappa * p_nn;

        let mut post = DMatrix::zeros(n_active + 1, n_active + 1);
        for a in 0..n_active {
            for b in 0..n_active {
                post[(a, b)] = self.post[(a, b)] + k2 * v[a] * v[b];
            }
            post[(a, n_active)] = -k1 * v[a];
            post[(n_active, a)] = -k1 * v[a];
        }
        post[(n_active, n_active)] = p_nn;

        let mut mu = DVector::zeros(n_active + 1);
        for a in 0..n_active {
            mu[a] = self.mu[a] - kappa * mu_n * v[a];
        }
        mu[n_active] = mu_n;

        // Θ_mᵀe_n = Gram[m, n] − κ Σ_a Gram[m, a] v_a
        let kv: Vec<f64> = v.iter().map(|x| kappa * x).collect();
        let proj = self.gram_combination(gram, &kv);
        let mut cap_s = self.cap_s.clone();
        let mut cap_q = self.cap_q.clone();
        let ks = kappa * p_nn;
        for m in 0..problem.n() {
            let z = gram[(m, n)] - proj[m];
            cap_s[m] -= ks * z * z;
            cap_q[m] -= mu_n * z;
        }
        let y_quad = self.y_quad - ks * self.cap_q[n] * self.cap_q[n];

        check_update(&post, &cap_s, &cap_q)?;
        self.post = post;
        self.mu = mu;
        self.cap_s = cap_s;
        self.cap_q = cap_q;
        self.y_quad = y_quad.max(0.0);
        self.position[n] = Some(n_active);
        self.active.push(n);
        self.alpha.push(alpha);
        Ok(p_nn)
    }

    /// Changes `α_n` of an active basis. Returns the update coefficient
    /// `ϑ = (P_jj + κ⁻¹(α̃ − α)⁻¹)⁻¹`.
    pub fn reestimate(&mut self, problem: &Problem<'_>, n: usize, new_alpha: f64) -> Result<f64> {
        check_alpha(new_alpha)?;
        let j = self
            .position[n]
            .ok_or_else(|| BcsError::InvalidSize(format!("basis {n} is not active")))?;
        let old_alpha = self.alpha[j];
        if new_alpha == old_alpha {
            return Ok(0.0);
        }
        let kappa = self.noise.scale();
        let gram = problem.dict().gram();
        let p_jj = self.post[(j, j)];
        let theta = 1.0 / (p_jj + 1.0 / (kappa * (new_alpha - old_alpha)));
        if !theta.is_finite() {
            return Err(BcsError::NumericalBreakdown(format!(
                "re-estimate coefficient not finite for basis {n}"
            )));
        }
        let col: Vec<f64> = self.post.column(j).iter().copied().collect();
        let mu_j = self.mu[j];

        let mut post = self.post.clone();
        for a in 0..col.len() {
            for b in 0..col.len() {
                post[(a, b)] -= theta * col[a] * col[b];
            }
        }
        let mut mu = self.mu.clone();
        for (a, c) in col.iter().enumerate() {
            mu[a] -= theta * mu_j * c;
        }
        let proj = self.gram_combination(gram, &col);
        let mut cap_s = self.cap_s.clone();
        let mut cap_q = self.cap_q.clone();
        for m in 0..problem.n() {
            cap_s[m] += kappa * theta * proj[m] * proj[m];
            cap_q[m] += theta * mu_j * proj[m];
        }
        let y_quad = self.y_quad + theta / kappa * mu_j * mu_j;

        check_update(&post, &cap_s, &cap_q)?;
        self.post = post;
        self.mu = mu;
        self.cap_s = cap_s;
        self.cap_q = cap_q;
        self.y_quad = y_quad.max(0.0);
        self.alpha[j] = new_alpha;
        Ok(theta)
    }

    /// Removes basis `n` from the model. Returns the coefficient `1/P_jj`.
    pub fn delete(&mut self, problem: &Problem<'_>, n: usize) -> Result<f64> {
        let j = self
            .position[n]
            .ok_or_else(|| BcsError::InvalidSize(format!("basis {n} is not active")))?;
        let kappa = self.noise.scale();
        let gram = problem.dict().gram();
        let p_jj = self.post[(j, j)];
        if !(p_jj > 0.0) {
            return Err(BcsError::NumericalBreakdown(format!(
                "nonpositive posterior diagonal for basis {n}"
            )));
        }
        let inv = 1.0 / p_jj;
        let col: Vec<f64> = self.post.column(j).iter().copied().collect();
        let mu_j = self.mu[j];

        let proj = self.gram_combination(gram, &col);
        let mut cap_s = self.cap_s.clone();
        let mut cap_q = self.cap_q.clone();
        for m in 0..problem.n() {
            cap_s[m] += kappa * inv * proj[m] * proj[m];
            cap_q[m] += mu_j * inv * proj[m];
        }
        let y_quad = self.y_quad + mu_j * mu_j / (kappa * p_jj);

        let mut post = self.post.clone();
        for a in 0..col.len() {
            for b in 0..col.len() {
                post[(a, b)] -= inv * col[a] * col[b];
            }
        }
        let mut mu = self.mu.clone();
        for (a, c) in col.iter().enumerate() {
            mu[a] -= mu_j * inv * c;
        }
        let post = post.remove_row(j).remove_column(j);
        let mu = mu.remove_row(j);

        check_update(&post, &cap_s, &cap_q)?;
        self.post = post;
        self.mu = mu;
        self.cap_s = cap_s;
        self.cap_q = cap_q;
        self.y_quad = y_quad;
        self.active.remove(j);
        self.alpha.remove(j);
        self.position[n] = None;
        for (p, &idx) in self.active.iter().enumerate().skip(j) {
            self.position[idx] = Some(p);
        }
        Ok(inv)
    }

    #[doc(hidden)]
    pub fn perturb_cap_s(&mut self, m: usize, delta: f64) {
        self.cap_s[m] += delta;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BcsError::InvalidHyperparameter(format!(
            "alpha = {alpha} must be finite and positive"
        )));
    }
    Ok(())
}

fn check_update(post: &DMatrix<f64>, cap_s: &[f64], cap_q: &[f64]) -> Result<()> {
    if post.diagonal().iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(BcsError::NumericalBreakdown(
            "posterior factor lost positive definiteness".into(),
        ));
    }
    if cap_s.iter().chain(cap_q).any(|v| !v.is_finite()) {
        return Err(BcsError::NumericalBreakdown("non-finite factor cache".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(k: usize, n: usize, seed: u64) -> (Dictionary, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        (Dictionary::from_theta(theta).unwrap(), y)
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-10 * (1.0 + y.abs()))
    }

    #[test]
    fn problem_rejects_mismatched_or_nonfinite_y() {
        let (dict, y) = random_problem(6, 8, 0);
        assert!(matches!(Problem::new(&dict, &y[..5]), Err(BcsError::Shape(_))));
        let mut bad = y.clone();
        bad[2] = f64::NAN;
        assert!(Problem::new(&dict, &bad).is_err());
    }

    #[test]
    fn caches_match_dense() {
        let (dict, y) = random_problem(10, 15, 1);
        let problem = Problem::new(&dict, &y).unwrap();
        let (active, alphas) = ([4, 0, 11], [0.3, 2.0, 0.05]);
        let state = SblState::from_alphas(&problem, &active, &alphas, NoiseParam::Beta(1.7)).unwrap();
        let (s, q, quad) = dense::dense_caches(&dict, &y, &active, &alphas).unwrap();
        assert!(close(state.cap_s(), &s));
        assert!(close(state.cap_q(), &q));
        assert!((state.y_quad(&problem) - quad).abs() < 1e-10 * quad);
        for m in 0..15 {
            let f = state.factors(m);
            let d = dense::dense_factors(&dict, &y, &active, &alphas, 0.0, m).unwrap();
            assert!(close(&[f.s, f.q], &[d.s, d.q]), "m = {m}: {f:?} vs {d:?}");
        }
    }

    #[test]
    fn incremental_updates_match_refresh() {
        let (dict, y) = random_problem(12, 18, 2);
        let problem = Problem::new(&dict, &y).unwrap();
        for noise in [NoiseParam::Beta(0.8), NoiseParam::Gamma { a0: 1.0, b0: 0.4 }] {
            let mut state = SblState::empty(&problem, noise).unwrap();
            state.add(&problem, 3, 0.5).unwrap();
            state.add(&problem, 9, 1.5).unwrap();
            state.add(&problem, 14, 0.2).unwrap();
            state.reestimate(&problem, 9, 0.9).unwrap();
            state.delete(&problem, 3).unwrap();
            let fresh = SblState::from_alphas(&problem, &[14, 9], &[0.2, 0.9], noise).unwrap();
            let order: Vec<usize> = fresh.active().iter().map(|m| state.position(*m).unwrap()).collect();
            for (i, &j) in order.iter().enumerate() {
                assert!((state.mu()[j] - fresh.mu()[i]).abs() < 1e-10);
            }
            assert!(close(state.cap_s(), fresh.cap_s()));
            assert!(close(state.cap_q(), fresh.cap_q()));
            assert!((state.tracked_y_quad() - fresh.tracked_y_quad()).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_actions_leave_state_unchanged() {
        let (dict, y) = random_problem(6, 8, 3);
        let problem = Problem::new(&dict, &y).unwrap();
        let mut state = SblState::from_alphas(&problem, &[1], &[1.0], NoiseParam::Beta(1.0)).unwrap();
        assert!(state.add(&problem, 1, 1.0).is_err());
        assert!(state.add(&problem, 2, 0.0).is_err());
        assert!(state.add(&problem, 2, f64::INFINITY).is_err());
        assert_eq!(state.active(), &[1]);
        assert!(SblState::from_alphas(&problem, &[1, 1], &[1.0, 2.0], NoiseParam::Beta(1.0)).is_err());
        assert!(SblState::empty(&problem, NoiseParam::Beta(-1.0)).is_err());
    }

    #[test]
    fn noise_change_preserves_c_inverse() {
        let (dict, y) = random_problem(8, 10, 4);
        let problem = Problem::new(&dict, &y).unwrap();
        let mut state = SblState::from_alphas(&problem, &[0, 5], &[0.7, 0.3], NoiseParam::Beta(2.0)).unwrap();
        let before = state.c_inverse();
        state.set_noise(NoiseParam::Beta(5.0)).unwrap();
        assert!((state.c_inverse() - &before).amax() < 1e-14);
        assert!((state.post_factor() * 5.0 - &before).amax() < 1e-14);
        assert_eq!(state.cap_g(), None);
        state.set_noise(NoiseParam::Gamma { a0: 1.0, b0: 0.5 }).unwrap();
        assert!((state.post_factor() - &before).amax() < 1e-14);
        assert!((state.cap_g().unwrap() - (state.tracked_y_quad() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn best_single_atom_prefers_normalized_correlation() {
        let mut theta = DMatrix::zeros(2, 3);
        theta[(0, 0)] = 10.0;
        theta[(1, 1)] = 1.0;
        theta[(0, 2)] = 1.0;
        let dict = Dictionary::from_theta(theta).unwrap();
        let y = [1.0, 1.5];
        let problem = Problem::new(&dict, &y).unwrap();
        assert_eq!(problem.best_single_atom(), Some(1));
    }
}
