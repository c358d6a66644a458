//! Slow, independent reference implementations used by the test suites to
//! cross-check the production code. Nothing here shares a code path with the
//! modules it validates.

use crate::glm::special::ln_gamma;
use crate::model::geometry::Point;

/// Even-odd ray-cast containment over a single closed ring, written as the
/// textbook parametric intersection count. Boundary points are treated as
/// inside, matching the first-match convention of the production lookup.
pub fn even_odd_contains(p: Point, ring: &[Point]) -> bool {
    let n = ring.len() - 1;
    // boundary first
    for i in 0..n {
        let (a, b) = (ring[i], ring[i + 1]);
        let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
        let dot = (p.lon - a.lon) * (b.lon - a.lon) + (p.lat - a.lat) * (b.lat - a.lat);
        let len2 = (b.lon - a.lon).powi(2) + (b.lat - a.lat).powi(2);
        if cross.abs() <= 1e-12 && dot >= -1e-12 && dot <= len2 + 1e-12 {
            return true;
        }
    }
    // count crossings of the horizontal ray toward +lon
    let mut crossings = 0usize;
    for i in 0..n {
        let (a, b) = (ring[i], ring[i + 1]);
        if (a.lat <= p.lat && b.lat > p.lat) || (b.lat <= p.lat && a.lat > p.lat) {
            let t = (p.lat - a.lat) / (b.lat - a.lat);
            let x = a.lon + t * (b.lon - a.lon);
            if x > p.lon {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

/// Direct weighted-least-squares LOWESS on a dense unit-step grid: builds
/// the 2x2 normal equations per output point by explicit matrix inversion.
/// Tri-cube weights on distance normalized by half the bandwidth, local
/// degree 1, negatives clamped to zero.
pub fn lowess_direct(values: &[f64], bandwidth_min: usize) -> Vec<f64> {
    let half = bandwidth_min as f64 / 2.0;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half.floor() as usize);
        let hi = (i + half.floor() as usize).min(n - 1);
        let mut m00 = 0.0;
        let mut m01 = 0.0;
        let mut m11 = 0.0;
        let mut b0 = 0.0;
        let mut b1 = 0.0;
        let mut positive = 0usize;
        for j in lo..=hi {
            let dist = (j as f64 - i as f64).abs();
            if dist > half {
                continue;
            }
            let u = dist / half;
            let w = (1.0 - u.powi(3)).powi(3);
            if w > 0.0 {
                positive += 1;
            }
            let x = j as f64 - i as f64;
            m00 += w;
            m01 += w * x;
            m11 += w * x * x;
            b0 += w * values[j];
            b1 += w * x * values[j];
        }
        let det = m00 * m11 - m01 * m01;
        let fitted = if positive < 2 || det.abs() <= 1e-12 * m00.max(1.0) * m11.max(1.0) {
            // window mean fallback
            let mut s = 0.0;
            let mut c = 0.0;
            for j in lo..=hi {
                s += values[j];
                c += 1.0;
            }
            s / c
        } else {
            // intercept of the local line evaluated at x = 0, via the
            // explicit inverse [[m11, -m01], [-m01, m00]] / det
            (m11 * b0 - m01 * b1) / det
        };
        out.push(fitted.max(0.0));
    }
    out
}

/// NB2 log-likelihood evaluated directly from the density, used by the grid
/// search below and by likelihood cross-checks.
pub fn negbin_loglik(y: &[u64], mu: &[f64], alpha: f64) -> f64 {
    let r = 1.0 / alpha;
    let mut ll = 0.0;
    for (&yi, &mui) in y.iter().zip(mu) {
        let yf = yi as f64;
        ll += ln_gamma(yf + r) - ln_gamma(r) - ln_gamma(yf + 1.0);
        ll -= (yf + r) * (1.0 + alpha * mui).ln();
        if yi > 0 {
            ll += yf * (alpha * mui).ln();
        }
    }
    ll
}

/// Poisson log-likelihood (including the Gamma(y+1) normalizer).
pub fn poisson_loglik(y: &[u64], mu: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &mui)| yi as f64 * mui.ln() - mui - ln_gamma(yi as f64 + 1.0))
        .sum()
}

/// Brute-force maximum-likelihood search for an NB2 regression with log link
/// and offset: an iteratively refined dense grid over every coefficient and
/// the dispersion. Returns `(beta, alpha)` at the grid optimum once the grid
/// step is below `resolution` in every coordinate.
///
/// Independent of the IRLS fitter: the only shared code is the log-gamma
/// primitive.
pub fn negbin_grid_search(
    x: &[Vec<f64>],
    y: &[u64],
    offset: &[f64],
    resolution: f64,
) -> (Vec<f64>, f64) {
    let p = x[0].len();
    let n = y.len();
    let mean_y = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let mean_off = offset.iter().sum::<f64>() / n as f64;

    // starting boxes: generous, data-driven but fitter-independent
    let mut centers = vec![0.0; p];
    centers[0] = (mean_y.max(1e-3)).ln() - mean_off;
    let mut half_widths = vec![3.0; p];
    let mut alpha_center = 1.0;
    let mut alpha_half = 1.0; // on ln-alpha this would be awkward; grid alpha linearly
    let mut alpha_lo = 1e-8;
    let mut alpha_hi = 4.0;

    const POINTS: usize = 11;
    let eval = |beta: &[f64], alpha: f64| -> f64 {
        let mut mu = Vec::with_capacity(n);
        for i in 0..n {
            let mut eta = offset[i];
            for j in 0..p {
                eta += beta[j] * x[i][j];
            }
            mu.push(eta.exp().clamp(1e-12, 1e12));
        }
        negbin_loglik(y, &mu, alpha.max(1e-8))
    };

    let mut best_beta = centers.clone();
    let mut best_alpha = alpha_center;
    loop {
        let axis_points = |c: f64, h: f64| -> Vec<f64> {
            (0..POINTS)
                .map(|k| c - h + 2.0 * h * k as f64 / (POINTS - 1) as f64)
                .collect()
        };
        let beta_grids: Vec<Vec<f64>> = (0..p)
            .map(|j| axis_points(centers[j], half_widths[j]))
            .collect();
        let alpha_grid: Vec<f64> = (0..POINTS)
            .map(|k| {
                (alpha_center - alpha_half + 2.0 * alpha_half * k as f64 / (POINTS - 1) as f64)
                    .clamp(alpha_lo, alpha_hi)
            })
            .collect();

        let mut best_ll = f64::NEG_INFINITY;
        let mut idx = vec![0usize; p];
        loop {
            let beta: Vec<f64> = (0..p).map(|j| beta_grids[j][idx[j]]).collect();
            for &a in &alpha_grid {
                let ll = eval(&beta, a);
                if ll > best_ll {
                    best_ll = ll;
                    best_beta = beta.clone();
                    best_alpha = a;
                }
            }
            // odometer over beta axes
            let mut axis = 0;
            loop {
                if axis == p {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < POINTS {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == p {
                break;
            }
        }

        let step = half_widths
            .iter()
            .map(|h| 2.0 * h / (POINTS - 1) as f64)
            .fold(0.0_f64, f64::max)
            .max(2.0 * alpha_half / (POINTS - 1) as f64);
        if step <= resolution {
            break;
        }
        for j in 0..p {
            centers[j] = best_beta[j];
            // keep two grid steps of slack around the winner
            half_widths[j] = (4.0 * half_widths[j] / (POINTS - 1) as f64).max(resolution);
        }
        alpha_center = best_alpha;
        alpha_half = (4.0 * alpha_half / (POINTS - 1) as f64).max(resolution);
        alpha_lo = 1e-8;
        alpha_hi = 1e4;
    }
    (best_beta, best_alpha)
}

/// Same refinement scheme for a Poisson regression (no dispersion axis).
pub fn poisson_grid_search(
    x: &[Vec<f64>],
    y: &[u64],
    offset: &[f64],
    resolution: f64,
) -> Vec<f64> {
    let p = x[0].len();
    let n = y.len();
    let mean_y = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let mean_off = offset.iter().sum::<f64>() / n as f64;
    let mut centers = vec![0.0; p];
    centers[0] = (mean_y.max(1e-3)).ln() - mean_off;
    let mut half_widths = vec![3.0; p];

    const POINTS: usize = 11;
    let eval = |beta: &[f64]| -> f64 {
        let mut mu = Vec::with_capacity(n);
        for i in 0..n {
            let mut eta = offset[i];
            for j in 0..p {
                eta += beta[j] * x[i][j];
            }
            mu.push(eta.exp().clamp(1e-12, 1e12));
        }
        poisson_loglik(y, &mu)
    };

    let mut best_beta = centers.clone();
    loop {
        let beta_grids: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                (0..POINTS)
                    .map(|k| {
                        centers[j] - half_widths[j]
                            + 2.0 * half_widths[j] * k as f64 / (POINTS - 1) as f64
                    })
                    .collect()
            })
            .collect();
        let mut best_ll = f64::NEG_INFINITY;
        let mut idx = vec![0usize; p];
        loop {
            let beta: Vec<f64> = (0..p).map(|j| beta_grids[j][idx[j]]).collect();
            let ll = eval(&beta);
            if ll > best_ll {
                best_ll = ll;
                best_beta = beta;
            }
            let mut axis = 0;
            loop {
                if axis == p {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < POINTS {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == p {
                break;
            }
        }
        let step = half_widths
            .iter()
            .map(|h| 2.0 * h / (POINTS - 1) as f64)
            .fold(0.0_f64, f64::max);
        if step <= resolution {
            break;
        }
        for j in 0..p {
            centers[j] = best_beta[j];
            half_widths[j] = (4.0 * half_widths[j] / (POINTS - 1) as f64).max(resolution);
        }
    }
    best_beta
}
