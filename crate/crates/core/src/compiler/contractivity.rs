//! Finite check of the contractive property: pushing a pair of maps along
//! a surjection of index sets and a 1-Lipschitz surjection of targets can
//! only lower the summed distance.
//!
//! Index sets are plain finite sets; only the targets carry distances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContractivityError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

/// A finite Lawvere metric space given by its distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteLawvere<T: Scalar = f64> {
    n: usize,
    dist: Vec<T>,
}

impl<T: Scalar> FiniteLawvere<T> {
    /// Checks zero diagonal, nonnegativity and the triangle inequality.
    pub fn new(n: usize, dist: Vec<T>) -> Result<Self, ContractivityError> {
        if dist.len() != n * n {
            return Err(ContractivityError::PreconditionViolated(format!(
                "distance matrix has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        let s = Self { n, dist };
        let tol = T::lit(1e-12);
        for a in 0..n {
            if s.d(a, a) != T::zero() {
                return Err(ContractivityError::PreconditionViolated(format!(
                    "d({a},{a}) is not zero"
                )));
            }
            for b in 0..n {
                if s.d(a, b) < T::zero() || s.d(a, b).is_nan() {
                    return Err(ContractivityError::PreconditionViolated(format!(
                        "d({a},{b}) is negative"
                    )));
                }
                for c in 0..n {
                    if s.d(a, c) > s.d(a, b) + s.d(b, c) + tol {
                        return Err(ContractivityError::PreconditionViolated(format!(
                            "triangle inequality fails at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(s)
    }

    /// Shortest-path closure of arbitrary nonnegative weights.
    pub fn closure(n: usize, mut dist: Vec<T>) -> Self {
        for a in 0..n {
            dist[a * n + a] = T::zero();
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i * n + k] + dist[k * n + j];
                    if via < dist[i * n + j] {
                        dist[i * n + j] = via;
                    }
                }
            }
        }
        Self { n, dist }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn d(&self, a: usize, b: usize) -> T {
        self.dist[a * self.n + b]
    }

    /// Quotient along a surjection `q`: the largest metric under which `q`
    /// is 1-Lipschitz.
    pub fn quotient(&self, q: &[usize], m: usize) -> Self {
        let mut w = vec![T::infinity(); m * m];
        for a in 0..self.n {
            for b in 0..self.n {
                let cell = &mut w[q[a] * m + q[b]];
                if self.d(a, b) < *cell {
                    *cell = self.d(a, b);
                }
            }
        }
        Self::closure(m, w)
    }
}

/// Two maps `f, g: X -> Y`, their images `f', g': X' -> Y'`, and the
/// connecting surjections `p: X -> X'`, `q: Y -> Y'`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientTrial<T: Scalar = f64> {
    pub x_len: usize,
    pub x2_len: usize,
    pub y: FiniteLawvere<T>,
    pub y2: FiniteLawvere<T>,
    pub f: Vec<usize>,
    pub g: Vec<usize>,
    pub f2: Vec<usize>,
    pub g2: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractivityOutcome<T: Scalar = f64> {
    /// `l(f, g)` upstairs.
    pub upper: T,
    /// `l(f', g')` downstairs.
    pub lower: T,
    pub holds: bool,
}

fn check_map(name: &str, map: &[usize], dom: usize, cod: usize) -> Result<(), ContractivityError> {
    if map.len() != dom || map.iter().any(|&v| v >= cod) {
        return Err(ContractivityError::PreconditionViolated(format!(
            "{name} is not a map from {dom} to {cod} points"
        )));
    }
    Ok(())
}

fn check_surjective(name: &str, map: &[usize], cod: usize) -> Result<(), ContractivityError> {
    let mut hit = vec![false; cod];
    for &v in map {
        hit[v] = true;
    }
    if let Some(miss) = hit.iter().position(|h| !h) {
        return Err(ContractivityError::PreconditionViolated(format!(
            "{name} is not surjective: {miss} has no preimage"
        )));
    }
    Ok(())
}

fn loss<T: Scalar>(space: &FiniteLawvere<T>, f: &[usize], g: &[usize]) -> T {
    f.iter()
        .zip(g)
        .fold(T::zero(), |acc, (&a, &b)| acc + space.d(a, b))
}

/// Verifies the preconditions, then compares `l(f, g)` with `l(f', g')`.
pub fn contractivity_check<T: Scalar>(
    trial: &QuotientTrial<T>,
) -> Result<ContractivityOutcome<T>, ContractivityError> {
    let (nx, nx2, ny, ny2) = (trial.x_len, trial.x2_len, trial.y.len(), trial.y2.len());
    check_map("f", &trial.f, nx, ny)?;
    check_map("g", &trial.g, nx, ny)?;
    check_map("f'", &trial.f2, nx2, ny2)?;
    check_map("g'", &trial.g2, nx2, ny2)?;
    check_map("p", &trial.p, nx, nx2)?;
    check_map("q", &trial.q, ny, ny2)?;
    check_surjective("p", &trial.p, nx2)?;
    check_surjective("q", &trial.q, ny2)?;
    let tol = T::lit(1e-12);
    for a in 0..ny {
        for b in 0..ny {
            if trial.y2.d(trial.q[a], trial.q[b]) > trial.y.d(a, b) + tol {
                return Err(ContractivityError::PreconditionViolated(format!(
                    "q is not 1-Lipschitz at ({a},{b})"
                )));
            }
        }
    }
    for x in 0..nx {
        let px = trial.p[x];
        if trial.f2[px] != trial.q[trial.f[x]] || trial.g2[px] != trial.q[trial.g[x]] {
            return Err(ContractivityError::PreconditionViolated(format!(
                "square does not commute at {x}"
            )));
        }
    }
    let upper = loss(&trial.y, &trial.f, &trial.g);
    let lower = loss(&trial.y2, &trial.f2, &trial.g2);
    // Both sides add the same kind of distances in different orders, so
    // allow a few ulps of rounding.
    let slack = tol * upper.abs().max(T::one());
    Ok(ContractivityOutcome {
        upper,
        lower,
        holds: lower <= upper + slack,
    })
}

fn random_surjection(rng: &mut impl Rng, from: usize, to: usize) -> Vec<usize> {
    let mut map: Vec<usize> = (0..from).map(|_| rng.gen_range(0..to)).collect();
    let mut order: Vec<usize> = (0..from).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    for (target, &slot) in order.iter().take(to).enumerate() {
        map[slot] = target;
    }
    map
}

/// A random trial: asymmetric weights closed into a Lawvere space on `Y`, a
/// random quotient `q`, and maps chosen so both squares commute. With
/// `identity` set, `p` and `q` are identities.
pub fn random_trial(rng: &mut impl Rng, identity: bool) -> QuotientTrial<f64> {
    let ny = rng.gen_range(1..=10);
    let nx = rng.gen_range(1..=12);
    let w: Vec<f64> = (0..ny * ny)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                rng.gen_range(0.0..5.0)
            }
        })
        .collect();
    let y = FiniteLawvere::closure(ny, w);
    if identity {
        let f: Vec<usize> = (0..nx).map(|_| rng.gen_range(0..ny)).collect();
        let g: Vec<usize> = (0..nx).map(|_| rng.gen_range(0..ny)).collect();
        return QuotientTrial {
            x_len: nx,
            x2_len: nx,
            y2: y.clone(),
            y,
            f2: f.clone(),
            g2: g.clone(),
            f,
            g,
            p: (0..nx).collect(),
            q: (0..ny).collect(),
        };
    }
    let ny2 = rng.gen_range(1..=ny);
    let nx2 = rng.gen_range(1..=nx);
    let q = random_surjection(rng, ny, ny2);
    let p = random_surjection(rng, nx, nx2);
    let y2 = y.quotient(&q, ny2);
    let fibers: Vec<Vec<usize>> = (0..ny2)
        .map(|c| (0..ny).filter(|&a| q[a] == c).collect())
        .collect();
    let f2: Vec<usize> = (0..nx2).map(|_| rng.gen_range(0..ny2)).collect();
    let g2: Vec<usize> = (0..nx2).map(|_| rng.gen_range(0..ny2)).collect();
    let mut lift = |target: usize| {
        let fiber = &fibers[target];
        fiber[rng.gen_range(0..fiber.len())]
    };
    let f: Vec<usize> = (0..nx).map(|x| lift(f2[p[x]])).collect();
    let g: Vec<usize> = (0..nx).map(|x| lift(g2[p[x]])).collect();
    QuotientTrial {
        x_len: nx,
        x2_len: nx2,
        y,
        y2,
        f,
        g,
        f2,
        g2,
        p,
        q,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub violations: usize,
    pub identity_trials: usize,
    /// Largest `|l(f,g) - l(f',g')|` over identity trials.
    pub identity_gap: f64,
}

/// Runs `trials` quotient trials and `trials` identity trials from `seed`.
pub fn run_trials(trials: usize, seed: u64) -> Result<TrialSummary, ContractivityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = TrialSummary {
        trials,
        violations: 0,
        identity_trials: trials,
        identity_gap: 0.0,
    };
    for _ in 0..trials {
        let out = contractivity_check(&random_trial(&mut rng, false))?;
        if !out.holds {
            summary.violations += 1;
        }
        let out = contractivity_check(&random_trial(&mut rng, true))?;
        summary.identity_gap = summary.identity_gap.max((out.upper - out.lower).abs());
    }
    Ok(summary)
}
