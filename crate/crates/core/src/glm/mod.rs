//! Count-data regression core: Poisson and NB2 maximum likelihood with log
//! link and exposure offset, Wald inference, and incidence rate ratios.
//!
//! The NB2 dispersion is estimated by profile likelihood: a golden-section
//! search on ln(alpha) with an inner IRLS solve for the coefficients at each
//! candidate dispersion.

pub mod design;
pub mod special;

use crate::error::{Error, Result};
use design::DesignMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use special::{ln_gamma, two_sided_p};

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-7;
const ALPHA_LN_LO: f64 = -18.420680743952367; // ln 1e-8
const ALPHA_LN_HI: f64 = 9.210340371976184; // ln 1e4
const PROFILE_TOL: f64 = 1e-8;

/// One fitted regression snapshot: coefficients, Wald statistics, and the
/// NB2 dispersion (zero for Poisson fits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFit {
    pub minute: u16,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub alpha: f64,
    pub converged: bool,
    /// Dispersion pinned at the lower search bound; the Poisson limit.
    pub poisson_limit: bool,
    pub n_obs: usize,
    pub log_likelihood: f64,
}

impl SnapshotFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.beta[j])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.std_errors[j])
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// IRR point estimate with its 95% Wald interval:
    /// (e^b, e^(b-1.96 se), e^(b+1.96 se)).
    pub fn irr(&self, name: &str) -> Option<(f64, f64, f64)> {
        let j = self.index(name)?;
        let (b, se) = (self.beta[j], self.std_errors[j]);
        Some(((b).exp(), (b - 1.96 * se).exp(), (b + 1.96 * se).exp()))
    }

    /// Wald z-test for one regressor: z = b/se, p = 2(1 - Phi(|z|)).
    pub fn wald(&self, name: &str) -> Result<(f64, f64)> {
        let j = self
            .index(name)
            .ok_or_else(|| Error::Numeric(format!("unknown regressor {name:?}")))?;
        wald_from(self.beta[j], self.std_errors[j])
    }
}

pub fn wald_from(beta: f64, se: f64) -> Result<(f64, f64)> {
    if !(se > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let z = beta / se;
    Ok((z, two_sided_p(z)))
}

struct IrlsState {
    beta: Vec<f64>,
    converged: bool,
    info: DMatrix<f64>,
}

/// Weighted IRLS step shared by both families. `weight_fn` maps mu to the
/// working weight; the working response is the usual eta + (y - mu)/mu for
/// the log link.
fn irls<F: Fn(f64) -> f64>(
    design: &DesignMatrix,
    init: &[f64],
    weight_fn: F,
) -> Result<IrlsState> {
    let n = design.n_obs();
    let p = design.n_cols();
    let mut beta = init.to_vec();
    let mut converged = false;
    let mut info = DMatrix::zeros(p, p);

    for _ in 0..IRLS_MAX_ITER {
        let eta = design.linear_predictor(&beta);
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        let mut grad = vec![0.0; p];
        for i in 0..n {
            let mu = eta[i].exp().clamp(1e-10, 1e10);
            let w = weight_fn(mu);
            let y = design.response[i] as f64;
            let z = (eta[i] - design.offset[i]) + (y - mu) / mu;
            let row = design.row(i);
            for a in 0..p {
                let wxa = w * row[a];
                xtwz[a] += wxa * z;
                for b in a..p {
                    xtwx[(a, b)] += wxa * row[b];
                }
                // score of the log-likelihood: X' (y - mu) * w / mu-scale is
                // family specific; w/mu * (y - mu) works for both families
                // here because w = mu (Poisson) or mu/(1+alpha mu) (NB2).
                grad[a] += row[a] * (y - mu) * w / mu;
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        info = xtwx.clone();
        let chol = xtwx
            .cholesky()
            .ok_or(Error::CollinearDesign)?;
        let new_beta = chol.solve(&xtwz);
        let delta = (0..p)
            .map(|j| (new_beta[j] - beta[j]).abs())
            .fold(0.0_f64, f64::max);
        for j in 0..p {
            beta[j] = new_beta[j];
        }
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if delta < IRLS_TOL && gmax < GRAD_TOL {
            converged = true;
            break;
        }
    }
    Ok(IrlsState {
        beta,
        converged,
        info,
    })
}

fn initial_beta(design: &DesignMatrix) -> Vec<f64> {
    let n = design.n_obs() as f64;
    let mean_y = design.response.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mean_off = design.offset.iter().sum::<f64>() / n;
    let mut beta = vec![0.0; design.n_cols()];
    if let Some(j) = design.col_index("intercept") {
        beta[j] = (mean_y + 0.1).ln() - mean_off;
    } else {
        beta[0] = (mean_y + 0.1).ln() - mean_off;
    }
    beta
}

fn se_from_info(info: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = info.nrows();
    let inv = info
        .clone()
        .cholesky()
        .ok_or(Error::CollinearDesign)?
        .inverse();
    Ok((0..p).map(|j| inv[(j, j)].max(0.0).sqrt()).collect())
}

/// Poisson log-likelihood at the given coefficients.
fn poisson_ll(design: &DesignMatrix, beta: &[f64]) -> f64 {
    design
        .linear_predictor(beta)
        .iter()
        .zip(&design.response)
        .map(|(&eta, &y)| {
            let mu = eta.exp().clamp(1e-300, 1e300);
            y as f64 * mu.ln() - mu - ln_gamma(y as f64 + 1.0)
        })
        .sum()
}

/// NB2 log-likelihood at the given coefficients and dispersion.
fn negbin_ll(design: &DesignMatrix, beta: &[f64], alpha: f64) -> f64 {
    let r = 1.0 / alpha;
    design
        .linear_predictor(beta)
        .iter()
        .zip(&design.response)
        .map(|(&eta, &y)| {
            let mu = eta.exp().clamp(1e-300, 1e300);
            let yf = y as f64;
            let mut ll = ln_gamma(yf + r) - ln_gamma(r) - ln_gamma(yf + 1.0)
                - (yf + r) * (1.0 + alpha * mu).ln();
            if y > 0 {
                ll += yf * (alpha * mu).ln();
            }
            ll
        })
        .sum()
}

/// Fit a Poisson regression with log link and exposure offset. Standard
/// errors come from the inverse Fisher information at convergence.
pub fn fit_poisson(design: &DesignMatrix) -> Result<SnapshotFit> {
    check_design(design)?;
    let init = initial_beta(design);
    let state = irls(design, &init, |mu| mu)?;
    let se = se_from_info(&state.info)?;
    Ok(SnapshotFit {
        minute: 0,
        names: design.names.clone(),
        beta: state.beta.clone(),
        std_errors: se,
        alpha: 0.0,
        converged: state.converged,
        poisson_limit: false,
        n_obs: design.n_obs(),
        log_likelihood: poisson_ll(design, &state.beta),
    })
}

/// Fit an NB2 regression: profile likelihood on ln(alpha) over
/// [ln 1e-8, ln 1e4] with golden-section search, inner IRLS for the
/// coefficients, standard errors from the observed information at the
/// optimum. A dispersion pinned at the lower bound is reported as alpha = 0
/// with the `poisson_limit` flag set.
pub fn fit_negbin(design: &DesignMatrix) -> Result<SnapshotFit> {
    check_design(design)?;
    let poisson = fit_poisson(design)?;

    // profile log-likelihood at a fixed alpha, warm-started
    let mut warm = poisson.beta.clone();
    let profile = |ln_alpha: f64, warm: &mut Vec<f64>| -> Result<(f64, Vec<f64>, bool)> {
        let alpha = ln_alpha.exp();
        let state = irls(design, warm, |mu| mu / (1.0 + alpha * mu))?;
        *warm = state.beta.clone();
        Ok((negbin_ll(design, &state.beta, alpha), state.beta, state.converged))
    };

    // golden-section maximization on ln(alpha)
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (ALPHA_LN_LO, ALPHA_LN_HI);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, ..) = profile(x1, &mut warm)?;
    let (mut f2, ..) = profile(x2, &mut warm)?;
    let mut last_best = f1.max(f2);
    let mut outer_converged = false;
    for _ in 0..300 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            let (f, ..) = profile(x2, &mut warm)?;
            f2 = f;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            let (f, ..) = profile(x1, &mut warm)?;
            f1 = f;
        }
        let best = f1.max(f2);
        if (best - last_best).abs() < PROFILE_TOL && (b - a) < 1e-4 {
            outer_converged = true;
            break;
        }
        last_best = best;
    }
    let ln_alpha_hat = if f1 > f2 { x1 } else { x2 };
    let (ll, beta, inner_converged) = profile(ln_alpha_hat, &mut warm)?;
    let alpha = ln_alpha_hat.exp();

    // At the lower bound the model is numerically Poisson. Likelihood gains
    // below the ln_gamma round-off floor (1/alpha is huge there) count as no
    // gain at all.
    let noise_floor = 1e-6 * (1.0 + ll.abs());
    if ln_alpha_hat < ALPHA_LN_LO + 0.05 || ll - poisson.log_likelihood <= noise_floor {
        return Ok(SnapshotFit {
            poisson_limit: true,
            ..poisson
        });
    }

    // observed information for beta at the optimum:
    // sum_i x x' * mu (1 + alpha y) / (1 + alpha mu)^2
    let p = design.n_cols();
    let eta = design.linear_predictor(&beta);
    let mut obs_info = DMatrix::zeros(p, p);
    for i in 0..design.n_obs() {
        let mu = eta[i].exp().clamp(1e-10, 1e10);
        let y = design.response[i] as f64;
        let w = mu * (1.0 + alpha * y) / (1.0 + alpha * mu).powi(2);
        let row = design.row(i);
        for a in 0..p {
            for b in a..p {
                obs_info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            obs_info[(a, b)] = obs_info[(b, a)];
        }
    }
    let se = se_from_info(&obs_info)?;

    Ok(SnapshotFit {
        minute: 0,
        names: design.names.clone(),
        beta,
        std_errors: se,
        alpha,
        converged: inner_converged && outer_converged,
        poisson_limit: false,
        n_obs: design.n_obs(),
        log_likelihood: ll,
    })
}

fn check_design(design: &DesignMatrix) -> Result<()> {
    if design.n_obs() <= design.n_cols() {
        return Err(Error::Config(format!(
            "{} observations for {} columns",
            design.n_obs(),
            design.n_cols()
        )));
    }
    Ok(())
}

/// Max-norm of the log-likelihood gradient at the fit, used by invariant
/// checks. For Poisson this is |X'(y - mu)|; for NB2 the (1 + alpha mu)
/// denominator enters.
pub fn score_max_norm(design: &DesignMatrix, fit: &SnapshotFit) -> f64 {
    let eta = design.linear_predictor(&fit.beta);
    let p = design.n_cols();
    let mut grad = vec![0.0; p];
    for i in 0..design.n_obs() {
        let mu = eta[i].exp();
        let y = design.response[i] as f64;
        let s = (y - mu) / (1.0 + fit.alpha * mu);
        let row = design.row(i);
        for j in 0..p {
            grad[j] += row[j] * s;
        }
    }
    grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(counts: &[u64], offset: f64) -> DesignMatrix {
        let n = counts.len();
        DesignMatrix::new(
            vec!["intercept".into()],
            vec![1.0; n],
            vec![offset; n],
            counts.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn poisson_intercept_only_is_log_mean() {
        let d = intercept_only(&[7; 40], 0.0);
        let fit = fit_poisson(&d).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - 7.0_f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn poisson_offset_divides_rate() {
        let d = intercept_only(&[7; 40], 2.0_f64.ln());
        let fit = fit_poisson(&d).unwrap();
        assert!((fit.beta[0] - 3.5_f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn poisson_two_group_log_ratio() {
        // group dummy g: means 10 and 20 -> beta_g = ln 2
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..30 {
            rows.push(vec![1.0, 0.0]);
            y.push(10);
            rows.push(vec![1.0, 1.0]);
            y.push(20);
        }
        let d = DesignMatrix::from_rows(
            vec!["intercept".into(), "g".into()],
            &rows,
            vec![0.0; y.len()],
            y,
        )
        .unwrap();
        let fit = fit_poisson(&d).unwrap();
        assert!((fit.beta[1] - 2.0_f64.ln()).abs() < 1e-6);
        // cross-check against the brute-force grid oracle
        let rows_ref: Vec<Vec<f64>> = (0..d.n_obs()).map(|i| d.row(i).to_vec()).collect();
        let oracle = crate::reference::poisson_grid_search(
            &rows_ref,
            &d.response,
            &d.offset,
            1e-3,
        );
        assert!((fit.beta[0] - oracle[0]).abs() < 2e-3);
        assert!((fit.beta[1] - oracle[1]).abs() < 2e-3);
        assert!(score_max_norm(&d, &fit) < 1e-6);
    }

    #[test]
    fn collinear_design_is_an_error() {
        // duplicate column
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20u64 {
            let v = (i % 2) as f64;
            rows.push(vec![1.0, v, v]);
            y.push(3 + i % 4);
        }
        let d = DesignMatrix::from_rows(
            vec!["intercept".into(), "a".into(), "b".into()],
            &rows,
            vec![0.0; 20],
            y,
        )
        .unwrap();
        assert!(matches!(fit_poisson(&d), Err(Error::CollinearDesign)));
    }

    #[test]
    fn negbin_on_equidispersed_data_hits_poisson_limit() {
        // deterministic pseudo-Poisson counts around 6
        let counts: Vec<u64> = (0..80).map(|i| 4 + (i * 7 % 5) as u64).collect();
        let d = intercept_only(&counts, 0.0);
        let nb = fit_negbin(&d).unwrap();
        let po = fit_poisson(&d).unwrap();
        assert!(nb.poisson_limit);
        assert_eq!(nb.alpha, 0.0);
        assert!((nb.beta[0] - po.beta[0]).abs() < 1e-4);
    }

    #[test]
    fn negbin_intercept_only_mean_identity() {
        // clearly overdispersed counts; NB2 MLE of mu is still the mean
        let counts: Vec<u64> = vec![
            0, 2, 9, 1, 30, 4, 0, 12, 3, 25, 7, 1, 0, 18, 5, 2, 40, 6, 3, 11, 0, 8, 22, 1, 4,
            15, 2, 0, 9, 27,
        ];
        let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        let d = intercept_only(&counts, 0.0);
        let fit = fit_negbin(&d).unwrap();
        assert!(fit.alpha > 0.0);
        assert!(
            (fit.beta[0] - mean.ln()).abs() < 1e-6,
            "beta0 {} vs ln mean {}",
            fit.beta[0],
            mean.ln()
        );
    }

    #[test]
    fn negbin_matches_grid_oracle_on_known_design() {
        // 50 observations, design (intercept, x) with known parameters
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Gamma, Poisson};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let (b0, b1, alpha) = (1.0, 0.3, 0.5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let mu = (b0 + b1 * x).exp();
            let g = Gamma::new(1.0 / alpha, alpha).unwrap().sample(&mut rng);
            let lam: f64 = mu * g;
            let k = Poisson::new(lam.max(1e-9)).unwrap().sample(&mut rng);
            rows.push(vec![1.0, x]);
            y.push(k as u64);
        }
        let d = DesignMatrix::from_rows(
            vec!["intercept".into(), "x".into()],
            &rows,
            vec![0.0; 50],
            y,
        )
        .unwrap();
        let fit = fit_negbin(&d).unwrap();
        let rows_ref: Vec<Vec<f64>> = (0..d.n_obs()).map(|i| d.row(i).to_vec()).collect();
        let (beta_g, alpha_g) =
            crate::reference::negbin_grid_search(&rows_ref, &d.response, &d.offset, 1e-3);
        assert!((fit.beta[0] - beta_g[0]).abs() < 2e-3, "{} vs {}", fit.beta[0], beta_g[0]);
        assert!((fit.beta[1] - beta_g[1]).abs() < 2e-3, "{} vs {}", fit.beta[1], beta_g[1]);
        assert!((fit.alpha - alpha_g).abs() < 2e-3, "{} vs {}", fit.alpha, alpha_g);
    }

    #[test]
    fn wald_reference_points() {
        assert!(matches!(wald_from(1.0, 0.0), Err(Error::DegenerateVariance)));
        let (z, p) = wald_from(0.0, 1.0).unwrap();
        assert_eq!(z, 0.0);
        assert!((p - 1.0).abs() < 1e-15);
        let (_, p) = wald_from(1.959964, 1.0).unwrap();
        assert!((p - 0.05).abs() < 1e-6);
        // z = 0.1293 / 0.03 = 4.31: deep in the tail
        let (z, p) = wald_from(0.1293, 0.03).unwrap();
        assert!((z - 4.31).abs() < 1e-12);
        assert!(p < 1e-4);
    }

    #[test]
    fn irr_identities() {
        let fit = SnapshotFit {
            minute: 0,
            names: vec!["pogo".into()],
            beta: vec![1.138_f64.ln()],
            std_errors: vec![0.01],
            alpha: 0.0,
            converged: true,
            poisson_limit: false,
            n_obs: 10,
            log_likelihood: 0.0,
        };
        let (point, lo, hi) = fit.irr("pogo").unwrap();
        assert!((point - 1.138).abs() < 1e-12);
        // exp/ln round trip holds in the same floating representation
        assert_eq!(point.ln(), fit.beta[0]);
        assert!(lo < point && point < hi);

        let fit2 = SnapshotFit {
            beta: vec![-0.046],
            std_errors: vec![0.01],
            ..fit
        };
        let (point, lo, hi) = fit2.irr("pogo").unwrap();
        assert!((point - 0.955).abs() < 5e-4);
        assert!(hi < 1.0, "CI [{lo}, {hi}] must exclude 1");
    }

    #[test]
    fn null_coefficient_irr_is_one() {
        let fit = SnapshotFit {
            minute: 0,
            names: vec!["pogo".into()],
            beta: vec![0.0],
            std_errors: vec![0.5],
            alpha: 0.0,
            converged: true,
            poisson_limit: false,
            n_obs: 10,
            log_likelihood: 0.0,
        };
        assert_eq!(fit.irr("pogo").unwrap().0, 1.0);
    }

    #[test]
    fn exposure_invariance_shifts_only_intercept() {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Gamma, Poisson};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut offset = Vec::new();
        for _ in 0..120 {
            let x: f64 = rng.gen_range(0.0..1.0);
            let g: f64 = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let a: f64 = rng.gen_range(0.5..3.0);
            let mu = a * (0.5 + 0.4 * x + 0.3 * g).exp();
            let mix = Gamma::new(5.0, 0.2).unwrap().sample(&mut rng);
            let k = Poisson::new((mu * mix).max(1e-9)).unwrap().sample(&mut rng);
            rows.push(vec![1.0, x, g]);
            offset.push(a.ln());
            y.push(k as u64);
        }
        let names = vec!["intercept".into(), "x".into(), "g".into()];
        let d = DesignMatrix::from_rows(names, &rows, offset, y).unwrap();
        let scaled = d.with_offset_shift(4.0_f64.ln());
        let f1 = fit_negbin(&d).unwrap();
        let f2 = fit_negbin(&scaled).unwrap();
        assert!((f2.beta[0] - (f1.beta[0] - 4.0_f64.ln())).abs() < 1e-6);
        for j in 1..3 {
            assert!((f1.beta[j] - f2.beta[j]).abs() < 1e-6);
            assert!((f1.std_errors[j] - f2.std_errors[j]).abs() < 1e-6);
        }
        assert!((f1.alpha - f2.alpha).abs() < 1e-6);
    }

    #[test]
    fn poisson_limit_agreement_with_fixed_tiny_alpha() {
        let counts: Vec<u64> = (0..60).map(|i| 5 + (i % 3) as u64).collect();
        let d = intercept_only(&counts, 0.0);
        let po = fit_poisson(&d).unwrap();
        // inner IRLS at alpha = 1e-8 should reproduce the Poisson solution
        let state = irls(&d, &po.beta, |mu| mu / (1.0 + 1e-8 * mu)).unwrap();
        assert!((state.beta[0] - po.beta[0]).abs() < 1e-5);
    }
}

