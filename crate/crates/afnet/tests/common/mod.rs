//! Shared test oracles, independent of the library's numerical paths.
//!
//! The Gauss-Hermite rule is built by Newton iteration on the physicists'
//! Hermite recurrence, so discrete-input mutual information and MMSE values
//! can be cross-checked against the library's Monte-Carlo and Simpson
//! routes without sharing code with them.

#![allow(dead_code)]

const LN_2PI: f64 = 1.8378770664093453;

/// Physicists' Gauss-Hermite rule: integrates `e^(-t^2) f(t)` over the
/// real line with `sum_i w_i f(t_i)`.
pub struct GaussHermite {
    pairs: Vec<(f64, f64)>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            // standard initial guesses, refined by Newton
            z = match i {
                0 => {
                    let anu = (2 * n + 1) as f64;
                    anu.sqrt() - 1.85575 * anu.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / j as f64).sqrt() * p2 - (((j - 1) as f64) / j as f64).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussHermite {
            pairs: nodes.into_iter().zip(weights).collect(),
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.pairs.iter().map(|&(t, w)| w * f(t)).sum()
    }

    /// Expectation over `y ~ N(mu, 1)`.
    pub fn gaussian_expect<F: Fn(f64) -> f64>(&self, mu: f64, f: F) -> f64 {
        self.integrate(|t| f(mu + std::f64::consts::SQRT_2 * t)) / std::f64::consts::PI.sqrt()
    }
}

fn log_mixture_density(points: &[(f64, f64)], root_snr: f64, y: f64) -> f64 {
    let mut max_term = f64::NEG_INFINITY;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - root_snr * x;
        let t = p.ln() - 0.5 * d * d;
        if t > max_term {
            max_term = t;
        }
    }
    let mut acc = 0.0;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - root_snr * x;
        acc += (p.ln() - 0.5 * d * d - max_term).exp();
    }
    max_term + acc.ln() - 0.5 * LN_2PI
}

fn posterior_mean(points: &[(f64, f64)], root_snr: f64, y: f64) -> f64 {
    let mut max_term = f64::NEG_INFINITY;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - root_snr * x;
        let t = p.ln() - 0.5 * d * d;
        if t > max_term {
            max_term = t;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let d = y - root_snr * x;
        let w = (p.ln() - 0.5 * d * d - max_term).exp();
        num += x * w;
        den += w;
    }
    num / den
}

/// Mutual information (nats) of a discrete unit-power constellation in AWGN
/// at scaled snr `s`.
pub fn awgn_mi_quadrature(gh: &GaussHermite, points: &[(f64, f64)], s: f64) -> f64 {
    let root = s.sqrt();
    let mut total = 0.0;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        let mu = root * x;
        total += p * gh.gaussian_expect(mu, |y| {
            let d = y - mu;
            let log_cond = -0.5 * d * d - 0.5 * LN_2PI;
            log_cond - log_mixture_density(points, root, y)
        });
    }
    total
}

/// Unit-power MMSE of a discrete constellation in AWGN at scaled snr `s`.
pub fn awgn_mmse_quadrature(gh: &GaussHermite, points: &[(f64, f64)], s: f64) -> f64 {
    let root = s.sqrt();
    let mut total = 0.0;
    for &(x, p) in points {
        if p == 0.0 {
            continue;
        }
        total += p * gh.gaussian_expect(root * x, |y| {
            let e = x - posterior_mean(points, root, y);
            e * e
        });
    }
    total
}

/// Cross-term `-2 sqrt(ab) E[u1_hat u2_hat]` for two jointly estimated
/// discrete constellations at normalized snrs `(g1, g2)` with mmse weights
/// `(a, b)`.
pub fn joint_psi_quadrature(
    gh: &GaussHermite,
    points1: &[(f64, f64)],
    points2: &[(f64, f64)],
    g1: f64,
    g2: f64,
    a: f64,
    b: f64,
) -> f64 {
    let (r1, r2) = (g1.sqrt(), g2.sqrt());
    let posterior_pair = |y: f64| -> (f64, f64) {
        let mut max_term = f64::NEG_INFINITY;
        for &(x1, p1) in points1 {
            for &(x2, p2) in points2 {
                if p1 == 0.0 || p2 == 0.0 {
                    continue;
                }
                let d = y - r1 * x1 - r2 * x2;
                let t = p1.ln() + p2.ln() - 0.5 * d * d;
                if t > max_term {
                    max_term = t;
                }
            }
        }
        let (mut n1, mut n2, mut den) = (0.0, 0.0, 0.0);
        for &(x1, p1) in points1 {
            for &(x2, p2) in points2 {
                if p1 == 0.0 || p2 == 0.0 {
                    continue;
                }
                let d = y - r1 * x1 - r2 * x2;
                let w = (p1.ln() + p2.ln() - 0.5 * d * d - max_term).exp();
                n1 += x1 * w;
                n2 += x2 * w;
                den += w;
            }
        }
        (n1 / den, n2 / den)
    };

    let mut expectation = 0.0;
    for &(x1, p1) in points1 {
        for &(x2, p2) in points2 {
            if p1 == 0.0 || p2 == 0.0 {
                continue;
            }
            let mu = r1 * x1 + r2 * x2;
            expectation += p1 * p2 * gh.gaussian_expect(mu, |y| {
                let (u1, u2) = posterior_pair(y);
                u1 * u2
            });
        }
    }
    -2.0 * (a * b).sqrt() * expectation
}

pub fn bpsk_points() -> Vec<(f64, f64)> {
    vec![(-1.0, 0.5), (1.0, 0.5)]
}

/// Unit-power equiprobable 4-PAM.
pub fn pam4_points() -> Vec<(f64, f64)> {
    let scale = (5.0f64).sqrt();
    [-3.0, -1.0, 1.0, 3.0]
        .iter()
        .map(|&x| (x / scale, 0.25))
        .collect()
}

pub fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn gauss_hermite_reference_values() {
        let gh = GaussHermite::new(3);
        let expected_nodes = [1.224_744_871_391_589, 0.0, -1.224_744_871_391_589];
        let expected_weights = [
            0.295_408_975_150_919_35,
            1.181_635_900_603_677_4,
            0.295_408_975_150_919_35,
        ];
        for (i, &(t, w)) in gh.pairs.iter().enumerate() {
            assert!(approx(t, expected_nodes[i], 1e-13), "node {i}: {t}");
            assert!(approx(w, expected_weights[i], 1e-13), "weight {i}: {w}");
        }

        let gh = GaussHermite::new(64);
        // integral of e^{-t^2} = sqrt(pi), of t^2 e^{-t^2} = sqrt(pi)/2
        assert!(approx(gh.integrate(|_| 1.0), std::f64::consts::PI.sqrt(), 1e-12));
        assert!(approx(
            gh.integrate(|t| t * t),
            std::f64::consts::PI.sqrt() / 2.0,
            1e-12
        ));
    }

    #[test]
    fn quadrature_matches_reference_bpsk_values() {
        let gh = GaussHermite::new(64);
        let bpsk = bpsk_points();
        // values computed independently with a 64-node rule
        assert!(approx(awgn_mi_quadrature(&gh, &bpsk, 1.0), 0.336830820350, 1e-9));
        assert!(approx(awgn_mi_quadrature(&gh, &bpsk, 4.0), 0.632720080192, 1e-9));
        assert!(approx(awgn_mmse_quadrature(&gh, &bpsk, 1.0), 0.449599508633, 1e-9));
    }
}
