//! Slow, direct dense-matrix evaluations of the evidence, posterior and
//! leave-one-out factors. These form `B` explicitly and invert it, so they
//! share no code path with the incremental updates in [`crate::sbl`] and
//! serve as the reference those updates are checked against.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{BcsError, Result};
use crate::sbl::{FactorTriple, MAX_CONDITION};
use crate::sensing::Dictionary;

fn check_inputs(dict: &Dictionary, active: &[usize], alphas: &[f64]) -> Result<()> {
    if active.len() != alphas.len() {
        return Err(BcsError::Shape("active set and alpha lengths differ".into()));
    }
    for (&n, &a) in active.iter().zip(alphas) {
        if n >= dict.n() {
            return Err(BcsError::InvalidSize(format!("basis index {n} out of range")));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(BcsError::InvalidHyperparameter(format!(
                "alpha = {a} must be finite and positive"
            )));
        }
    }
    Ok(())
}

fn check_y(dict: &Dictionary, y: &[f64]) -> Result<()> {
    if y.len() != dict.k() {
        return Err(BcsError::Shape(format!(
            "measurement length {} does not match dictionary rows {}",
            y.len(),
            dict.k()
        )));
    }
    Ok(())
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| BcsError::IllConditioned(format!("{what} is not positive definite")))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `B = I + Σ α_n⁻¹ Θ_nΘ_nᵀ` over the active set.
pub fn dense_b(dict: &Dictionary, active: &[usize], alphas: &[f64]) -> Result<DMatrix<f64>> {
    check_inputs(dict, active, alphas)?;
    let k = dict.k();
    let mut b = DMatrix::identity(k, k);
    for (&n, &a) in active.iter().zip(alphas) {
        let col = dict.theta().column(n);
        b.ger(1.0 / a, &col, &col, 1.0);
    }
    Ok(b)
}

/// `B` with basis `n`'s contribution removed (no-op when `n` is inactive).
fn dense_b_without(dict: &Dictionary, active: &[usize], alphas: &[f64], n: usize) -> Result<DMatrix<f64>> {
    let (act, alp): (Vec<usize>, Vec<f64>) = active
        .iter()
        .zip(alphas)
        .filter(|(&m, _)| m != n)
        .map(|(&m, &a)| (m, a))
        .unzip();
    dense_b(dict, &act, &alp)
}

/// `C = A + Θ_aᵀΘ_a`, formed from `Θ` itself rather than the cached Gram.
pub fn dense_c(dict: &Dictionary, active: &[usize], alphas: &[f64]) -> Result<DMatrix<f64>> {
    check_inputs(dict, active, alphas)?;
    let theta_a = dict.theta().select_columns(active.iter());
    let mut c = theta_a.tr_mul(&theta_a);
    for (i, &a) in alphas.iter().enumerate() {
        c[(i, i)] += a;
    }
    Ok(c)
}

/// `(μ, C⁻¹)` by an eigen-decomposition of `C`. The caller scales `C⁻¹` by
/// `β⁻¹` to obtain `Σ`, or uses it directly as `Λ`.
pub fn dense_posterior_c(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_y(dict, y)?;
    let c = dense_c(dict, active, alphas)?;
    let n_active = active.len();
    if n_active == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = c.symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(BcsError::IllConditioned(format!(
            "C has eigenvalue range [{lo:e}, {hi:e}]"
        )));
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let c_inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    let theta_a = dict.theta().select_columns(active.iter());
    let rhs = theta_a.tr_mul(&DVector::from_column_slice(y));
    let mu = &c_inv * rhs;
    Ok((mu, c_inv))
}

/// `(μ, Σ)` with `Σ = β⁻¹C⁻¹`.
pub fn dense_posterior(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
    beta: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(BcsError::InvalidHyperparameter(format!("beta = {beta} must be positive")));
    }
    let (mu, c_inv) = dense_posterior_c(dict, y, active, alphas)?;
    Ok((mu, c_inv / beta))
}

/// `s_n`, `q_n`, `g_n` from an explicit inverse of `B₋ₙ`.
pub fn dense_factors(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
    b0: f64,
    n: usize,
) -> Result<FactorTriple> {
    check_y(dict, y)?;
    if n >= dict.n() {
        return Err(BcsError::InvalidSize(format!("basis index {n} out of range")));
    }
    let b = dense_b_without(dict, active, alphas, n)?;
    let b_inv = chol(b, "B")?.inverse();
    let theta_n = dict.theta().column(n).into_owned();
    let yv = DVector::from_column_slice(y);
    let b_inv_theta = &b_inv * &theta_n;
    let b_inv_y = &b_inv * &yv;
    Ok(FactorTriple {
        s: theta_n.dot(&b_inv_theta),
        q: theta_n.dot(&b_inv_y),
        g: yv.dot(&b_inv_y) + 2.0 * b0,
    })
}

/// `𝒮_m`, `𝒬_m` and `yᵀB⁻¹y` from an explicit inverse of the full `B`.
pub fn dense_caches(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_y(dict, y)?;
    let b = dense_b(dict, active, alphas)?;
    let b_inv = chol(b, "B")?.inverse();
    let yv = DVector::from_column_slice(y);
    let b_inv_y = &b_inv * &yv;
    let b_inv_theta = &b_inv * dict.theta();
    let s = (0..dict.n())
        .map(|m| dict.theta().column(m).dot(&b_inv_theta.column(m)))
        .collect();
    let q = (0..dict.n())
        .map(|m| dict.theta().column(m).dot(&b_inv_y))
        .collect();
    Ok((s, q, yv.dot(&b_inv_y)))
}

/// `yᵀB⁻¹y` by explicit solve.
pub fn dense_y_quad(dict: &Dictionary, y: &[f64], active: &[usize], alphas: &[f64]) -> Result<f64> {
    check_y(dict, y)?;
    let b = dense_b(dict, active, alphas)?;
    let yv = DVector::from_column_slice(y);
    Ok(yv.dot(&chol(b, "B")?.solve(&yv)))
}

/// `log N(y | 0, β⁻¹B)`.
pub fn log_evidence_mpe(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
    beta: f64,
) -> Result<f64> {
    check_y(dict, y)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(BcsError::InvalidHyperparameter(format!("beta = {beta} must be positive")));
    }
    let k = dict.k() as f64;
    let b = dense_b(dict, active, alphas)?;
    let c = chol(b, "B")?;
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&c.solve(&yv));
    Ok(-0.5 * k * (2.0 * PI).ln() + 0.5 * k * beta.ln() - 0.5 * log_det(&c) - 0.5 * beta * quad)
}

/// Log multivariate Student-t density of `y` with the Gamma(`a0`, `b0`)
/// prior on the noise precision integrated out.
pub fn log_evidence_ipe(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
    a0: f64,
    b0: f64,
) -> Result<f64> {
    check_y(dict, y)?;
    if !(a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite()) {
        return Err(BcsError::InvalidHyperparameter(format!(
            "Student-t evidence needs a0 > 0 and b0 > 0, got a0 = {a0}, b0 = {b0}"
        )));
    }
    let k = dict.k() as f64;
    let b = dense_b(dict, active, alphas)?;
    let c = chol(b, "B")?;
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&c.solve(&yv));
    Ok(ln_gamma(a0 + k / 2.0) - ln_gamma(a0) - 0.5 * k * (2.0 * PI * b0).ln() - 0.5 * log_det(&c)
        - (a0 + k / 2.0) * (quad / (2.0 * b0)).ln_1p())
}

/// The `α`-dependent part of the Student-t log evidence,
/// `−½log|B| − (a0 + K/2)·log(yᵀB⁻¹y + 2b0)`. Differences of this profile
/// equal differences of [`log_evidence_ipe`] and remain defined at `b0 = 0`.
pub fn log_evidence_ipe_profile(
    dict: &Dictionary,
    y: &[f64],
    active: &[usize],
    alphas: &[f64],
    a0: f64,
    b0: f64,
) -> Result<f64> {
    check_y(dict, y)?;
    if !(a0 > 0.0 && b0 >= 0.0) {
        return Err(BcsError::InvalidHyperparameter(format!(
            "needs a0 > 0 and b0 >= 0, got a0 = {a0}, b0 = {b0}"
        )));
    }
    let k = dict.k() as f64;
    let b = dense_b(dict, active, alphas)?;
    let c = chol(b, "B")?;
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&c.solve(&yv));
    Ok(-0.5 * log_det(&c) - (a0 + k / 2.0) * (quad + 2.0 * b0).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_dict(k: usize, n: usize, seed: u64) -> (Dictionary, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        (Dictionary::from_theta(theta).unwrap(), y)
    }

    #[test]
    fn b_of_empty_set_is_identity() {
        let (d, _) = random_dict(5, 7, 0);
        assert_eq!(dense_b(&d, &[], &[]).unwrap(), DMatrix::identity(5, 5));
    }

    #[test]
    fn b_rank_one() {
        let mut theta = DMatrix::zeros(3, 2);
        theta[(0, 1)] = 2.0;
        let d = Dictionary::from_theta(theta).unwrap();
        let b = dense_b(&d, &[1], &[1.0]).unwrap();
        let mut want = DMatrix::identity(3, 3);
        want[(0, 0)] += 4.0;
        assert_eq!(b, want);
        assert!(matches!(dense_b(&d, &[1], &[0.0]), Err(BcsError::InvalidHyperparameter(_))));
    }

    #[test]
    fn b_eigenvalues_at_least_one() {
        let (d, _) = random_dict(8, 10, 3);
        let b = dense_b(&d, &[1, 4, 7], &[0.5, 2.0, 9.0]).unwrap();
        for v in b.symmetric_eigen().eigenvalues.iter() {
            assert!(*v >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn posterior_edge_cases() {
        let (d, _) = random_dict(6, 8, 1);
        let (mu, _) = dense_posterior(&d, &[0.0; 6], &[2, 3], &[1.0, 1.0], 1.0).unwrap();
        assert!(mu.iter().all(|&v| v == 0.0));

        let mut theta = DMatrix::zeros(4, 2);
        theta[(2, 0)] = 1.0;
        theta[(0, 1)] = 1.0;
        let d = Dictionary::from_theta(theta).unwrap();
        let y = [0.3, -1.0, 2.5, 0.7];
        let (mu, _) = dense_posterior(&d, &y, &[0], &[1e-12], 1.0).unwrap();
        assert_abs_diff_eq!(mu[0], 2.5, epsilon = 1e-10);
    }

    #[test]
    fn posterior_matches_pseudo_inverse_path() {
        let (d, y) = random_dict(16, 12, 7);
        let active = [0, 3, 5, 9];
        let alphas = [0.7, 1.3, 2.0, 0.1];
        let beta = 2.5;
        let (mu, sigma) = dense_posterior(&d, &y, &active, &alphas, beta).unwrap();
        // Stack [Θ_a; A^{1/2}] and solve the least-squares problem through an SVD.
        let theta_a = d.theta().select_columns(active.iter());
        let mut stacked = DMatrix::zeros(16 + 4, 4);
        stacked.rows_mut(0, 16).copy_from(&theta_a);
        for (i, a) in alphas.iter().enumerate() {
            stacked[(16 + i, i)] = a.sqrt();
        }
        let mut rhs = DVector::zeros(20);
        rhs.rows_mut(0, 16).copy_from(&DVector::from_column_slice(&y));
        let pinv = stacked.clone().pseudo_inverse(1e-14).unwrap();
        let mu_ls = &pinv * rhs;
        let sigma_ls = &pinv * pinv.transpose() / beta;
        for i in 0..4 {
            assert_relative_eq!(mu[i], mu_ls[i], max_relative = 1e-10);
            for j in 0..4 {
                assert_abs_diff_eq!(sigma[(i, j)], sigma_ls[(i, j)], epsilon = 1e-10 * sigma[(i, i)]);
            }
        }
    }

    #[test]
    fn factors_of_empty_model() {
        let (d, y) = random_dict(5, 6, 2);
        let f = dense_factors(&d, &y, &[], &[], 0.25, 3).unwrap();
        let col = d.theta().column(3);
        assert_relative_eq!(f.s, col.norm_squared(), max_relative = 1e-12);
        assert_relative_eq!(f.q, col.dot(&DVector::from_column_slice(&y)), max_relative = 1e-12);
        let ysq: f64 = y.iter().map(|v| v * v).sum();
        assert_relative_eq!(f.g, ysq + 0.5, max_relative = 1e-12);
    }

    #[test]
    fn factor_g_with_zero_b0_is_quadratic_form() {
        let (d, y) = random_dict(12, 10, 8);
        let f = dense_factors(&d, &y, &[1, 2], &[0.5, 3.0], 0.0, 1).unwrap();
        let q = dense_y_quad(&d, &y, &[2], &[3.0]).unwrap();
        assert_relative_eq!(f.g, q, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_evidence_special_cases() {
        let (d, _) = random_dict(2, 3, 0);
        let l = log_evidence_mpe(&d, &[0.0, 0.0], &[], &[], 1.0).unwrap();
        assert_abs_diff_eq!(l, -(2.0 * PI).ln(), epsilon = 1e-14);

        let (d, y) = random_dict(7, 3, 4);
        let beta: f64 = 0.3;
        let ysq: f64 = y.iter().map(|v| v * v).sum();
        let want = -3.5 * (2.0 * PI).ln() + 3.5 * beta.ln() - 0.5 * beta * ysq;
        assert_abs_diff_eq!(log_evidence_mpe(&d, &y, &[], &[], beta).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_evidence_matches_brute_force_density() {
        let (d, y) = random_dict(6, 9, 11);
        let active = [1, 5, 8];
        let alphas = [0.4, 1.5, 6.0];
        let beta = 1.7;
        let cov = dense_b(&d, &active, &alphas).unwrap() / beta;
        let det = cov.determinant();
        let inv = cov.try_inverse().unwrap();
        let yv = DVector::from_column_slice(&y);
        let want = -3.0 * (2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * yv.dot(&(inv * &yv));
        let got = log_evidence_mpe(&d, &y, &active, &alphas, beta).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    }

    #[test]
    fn student_t_with_one_dof_is_cauchy() {
        let d = Dictionary::from_theta(DMatrix::from_element(1, 2, 1.0)).unwrap();
        for y1 in [-3.0, 0.0, 0.4, 10.0] {
            let got = log_evidence_ipe(&d, &[y1], &[], &[], 0.5, 0.5).unwrap();
            let want = -(PI * (1.0 + y1 * y1)).ln();
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn student_t_matches_direct_formula() {
        let (d, y) = random_dict(8, 5, 13);
        let (active, alphas) = ([0, 4], [0.9, 2.2]);
        let (a0, b0) = (1.0, 0.6);
        let b = dense_b(&d, &active, &alphas).unwrap();
        let det = b.determinant();
        let yv = DVector::from_column_slice(&y);
        let quad = yv.dot(&(b.try_inverse().unwrap() * &yv));
        let k = 8.0;
        let want = ln_gamma(a0 + k / 2.0) - ln_gamma(a0) - k / 2.0 * (2.0 * PI * b0).ln() - 0.5 * det.ln()
            - (a0 + k / 2.0) * (1.0 + quad / (2.0 * b0)).ln();
        let got = log_evidence_ipe(&d, &y, &active, &alphas, a0, b0).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        assert!(log_evidence_ipe(&d, &y, &active, &alphas, 1.0, 0.0).is_err());
    }

    #[test]
    fn student_t_tends_to_gaussian() {
        let (d, y) = random_dict(10, 6, 21);
        let (active, alphas) = ([2, 3], [0.5, 1.5]);
        let beta = 0.8;
        let a0 = 1e8;
        let mpe = log_evidence_mpe(&d, &y, &active, &alphas, beta).unwrap();
        let ipe = log_evidence_ipe(&d, &y, &active, &alphas, a0, a0 / beta).unwrap();
        assert_abs_diff_eq!(mpe, ipe, epsilon = 1e-3);
    }

    #[test]
    fn profile_differences_match_full_evidence() {
        let (d, y) = random_dict(9, 6, 5);
        let (a0, b0) = (1.0, 0.4);
        let full = |act: &[usize], al: &[f64]| log_evidence_ipe(&d, &y, act, al, a0, b0).unwrap();
        let prof = |act: &[usize], al: &[f64]| log_evidence_ipe_profile(&d, &y, act, al, a0, b0).unwrap();
        let d_full = full(&[1, 2], &[0.3, 4.0]) - full(&[2], &[4.0]);
        let d_prof = prof(&[1, 2], &[0.3, 4.0]) - prof(&[2], &[4.0]);
        assert_abs_diff_eq!(d_full, d_prof, epsilon = 1e-11);
    }
}
