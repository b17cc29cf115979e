//! Distributions `P(t | T)` over past timesteps used to pick what to refine.
//!
//! Timesteps are 1-indexed here: `1 <= t <= T`, with `T` the most recent
//! observation. The pipeline converts from its 0-indexed timesteps.
//!
//! The geometric component of the exponential variants is truncated to
//! `[1, T]` and renormalized by `1 - (1 - q)^T`, and the mixtures use the
//! renormalized component, so every variant sums to one for every `T`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, RostError};
use crate::num::{unit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Now,
    Uniform,
    AgeProportional,
    Exponential,
    UniformNow,
    AgePNow,
    UniformExp,
    AgePExp,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 8] = [
        SchedulerKind::Uniform,
        SchedulerKind::AgeProportional,
        SchedulerKind::Exponential,
        SchedulerKind::Now,
        SchedulerKind::UniformNow,
        SchedulerKind::AgePNow,
        SchedulerKind::UniformExp,
        SchedulerKind::AgePExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Now => "now",
            SchedulerKind::Uniform => "uniform",
            SchedulerKind::AgeProportional => "agep",
            SchedulerKind::Exponential => "exp",
            SchedulerKind::UniformNow => "uniform_now",
            SchedulerKind::AgePNow => "agep_now",
            SchedulerKind::UniformExp => "uniform_exp",
            SchedulerKind::AgePExp => "agep_exp",
        }
    }

    pub fn uses_q(self) -> bool {
        matches!(
            self,
            SchedulerKind::Exponential | SchedulerKind::UniformExp | SchedulerKind::AgePExp
        )
    }

    pub fn uses_eta(self) -> bool {
        matches!(
            self,
            SchedulerKind::UniformNow | SchedulerKind::AgePNow | SchedulerKind::UniformExp | SchedulerKind::AgePExp
        )
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = RostError;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RostError::UnknownScheduler(s.to_string()))
    }
}

/// A scheduler variant with its geometric rate `q` and mixing weight `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduler<F> {
    pub kind: SchedulerKind,
    pub q: F,
    pub eta: F,
}

impl<F: Scalar> Scheduler<F> {
    pub fn new(kind: SchedulerKind, q: F, eta: F) -> Result<Self> {
        if kind.uses_q() && !(q > F::zero() && q < F::one()) {
            return Err(RostError::InvalidParameter(format!("q must lie in (0, 1), got {q}")));
        }
        if kind.uses_eta() && !(eta >= F::zero() && eta <= F::one()) {
            return Err(RostError::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(Self { kind, q, eta })
    }

    /// Default parameters: `q = 0.5`, `eta = 0.5`.
    pub fn with_defaults(kind: SchedulerKind) -> Self {
        let half = F::from_f64_lossy(0.5);
        Self { kind, q: half, eta: half }
    }

    /// `P(t | T)`.
    pub fn pmf(&self, t: u32, horizon: u32) -> Result<F> {
        if t == 0 || t > horizon {
            return Err(RostError::TimestepOutOfRange { t, horizon });
        }
        Ok(self.pmf_unchecked(t, horizon))
    }

    fn pmf_unchecked(&self, t: u32, horizon: u32) -> F {
        let one = F::one();
        let eta = self.eta;
        match self.kind {
            SchedulerKind::Now => now_pmf(t, horizon),
            SchedulerKind::Uniform => uniform_pmf(horizon),
            SchedulerKind::AgeProportional => agep_pmf(t, horizon),
            SchedulerKind::Exponential => exp_pmf(self.q, t, horizon),
            SchedulerKind::UniformNow => {
                if horizon == 1 {
                    one
                } else if t == horizon {
                    eta
                } else {
                    (one - eta) * uniform_pmf(horizon - 1)
                }
            }
            SchedulerKind::AgePNow => {
                if horizon == 1 {
                    one
                } else if t == horizon {
                    eta
                } else {
                    (one - eta) * agep_pmf(t, horizon - 1)
                }
            }
            SchedulerKind::UniformExp => eta * exp_pmf(self.q, t, horizon) + (one - eta) * uniform_pmf(horizon),
            SchedulerKind::AgePExp => eta * exp_pmf(self.q, t, horizon) + (one - eta) * agep_pmf(t, horizon),
        }
    }

    /// Draws `t` in `1..=horizon` with probability `pmf(t, horizon)`.
    ///
    /// `Now` consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, horizon: u32, rng: &mut R) -> u32 {
        assert!(horizon >= 1, "scheduler horizon must be >= 1");
        match self.kind {
            SchedulerKind::Now => horizon,
            SchedulerKind::Uniform => rng.gen_range(1..=horizon),
            SchedulerKind::AgeProportional => sample_agep::<F, R>(horizon, rng),
            SchedulerKind::Exponential => sample_exp(self.q, horizon, rng),
            SchedulerKind::UniformNow | SchedulerKind::AgePNow => {
                if horizon == 1 || unit::<F, R>(rng) < self.eta {
                    horizon
                } else if self.kind == SchedulerKind::UniformNow {
                    rng.gen_range(1..horizon)
                } else {
                    sample_agep::<F, R>(horizon - 1, rng)
                }
            }
            SchedulerKind::UniformExp | SchedulerKind::AgePExp => {
                if unit::<F, R>(rng) < self.eta {
                    sample_exp(self.q, horizon, rng)
                } else if self.kind == SchedulerKind::UniformExp {
                    rng.gen_range(1..=horizon)
                } else {
                    sample_agep::<F, R>(horizon, rng)
                }
            }
        }
    }

    /// Expected number of refinement rounds spent on timestep `t` by the
    /// time the stream reaches `horizon`, with `rounds` draws per interval:
    /// `R * sum_{s=t}^{T} P(t | s)`, summed exactly.
    pub fn expected_refinements(&self, t: u32, horizon: u32, rounds: F) -> Result<F> {
        if t == 0 || t > horizon {
            return Err(RostError::TimestepOutOfRange { t, horizon });
        }
        let total: F = (t..=horizon).map(|s| self.pmf_unchecked(t, s)).sum();
        Ok(rounds * total)
    }
}

fn now_pmf<F: Scalar>(t: u32, horizon: u32) -> F {
    if t == horizon {
        F::one()
    } else {
        F::zero()
    }
}

fn uniform_pmf<F: Scalar>(horizon: u32) -> F {
    F::one() / F::from_usize_lossy(horizon as usize)
}

fn agep_pmf<F: Scalar>(t: u32, horizon: u32) -> F {
    let h = horizon as usize;
    F::from_usize_lossy(t as usize) / F::from_usize_lossy(h * (h + 1) / 2)
}

/// Truncated geometric `q (1-q)^(T-t) / (1 - (1-q)^T)`.
fn exp_pmf<F: Scalar>(q: F, t: u32, horizon: u32) -> F {
    let keep = F::one() - q;
    let mass = F::one() - keep.powi(horizon as i32);
    q * keep.powi((horizon - t) as i32) / mass
}

fn sample_exp<F: Scalar, R: Rng + ?Sized>(q: F, horizon: u32, rng: &mut R) -> u32 {
    let keep = F::one() - q;
    let mass = F::one() - keep.powi(horizon as i32);
    let u = unit::<F, R>(rng);
    // lag j = T - t; P(j <= m) = (1 - keep^(m+1)) / mass
    let lag = ((F::one() - u * mass).ln() / keep.ln()).floor();
    let lag = lag.to_u32().unwrap_or(horizon - 1).min(horizon - 1);
    horizon - lag
}

/// Inverse CDF of `t / sum(1..=n)` using `cdf(t) = t(t+1) / (n(n+1))`.
fn sample_agep<F: Scalar, R: Rng + ?Sized>(n: u32, rng: &mut R) -> u32 {
    let u = unit::<F, R>(rng).to_f64().unwrap_or(0.0);
    let n64 = n as f64;
    let target = u * n64 * (n64 + 1.0);
    let cdf_num = |t: u32| t as f64 * (t as f64 + 1.0);
    let mut t = ((-1.0 + (1.0 + 4.0 * target).sqrt()) / 2.0).floor() as u32;
    t = t.clamp(1, n);
    // smallest t with t(t+1) > target
    while t > 1 && cdf_num(t - 1) > target {
        t -= 1;
    }
    while t < n && cdf_num(t) <= target {
        t += 1;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched(kind: SchedulerKind) -> Scheduler<f64> {
        Scheduler::with_defaults(kind)
    }

    fn pmfs(s: &Scheduler<f64>, horizon: u32) -> Vec<f64> {
        (1..=horizon).map(|t| s.pmf(t, horizon).unwrap()).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn names_round_trip() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
        let err = "later".parse::<SchedulerKind>().unwrap_err().to_string();
        assert!(err.contains("uniform_now") && err.contains("agep_exp"));
    }

    #[test]
    fn pinned_pmfs() {
        assert_eq!(sched(SchedulerKind::Now).pmf(7, 7).unwrap(), 1.0);
        assert_eq!(sched(SchedulerKind::Now).pmf(3, 7).unwrap(), 0.0);
        assert!(close(&pmfs(&sched(SchedulerKind::Uniform), 5), &[0.2; 5], 1e-15));
        assert!(close(&pmfs(&sched(SchedulerKind::AgeProportional), 3), &[1.0 / 6.0, 1.0 / 3.0, 0.5], 1e-15));
        assert!(close(&pmfs(&sched(SchedulerKind::Exponential), 3), &[1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0], 1e-15));
        assert!(close(
            &pmfs(&sched(SchedulerKind::UniformNow), 4),
            &[1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5],
            1e-15
        ));
        assert!(close(&pmfs(&sched(SchedulerKind::UniformExp), 2), &[5.0 / 12.0, 7.0 / 12.0], 1e-15));
        // AgeP+Now, eta=.5, T=3: past part is agep over {1,2} = [1/3, 2/3]
        assert!(close(&pmfs(&sched(SchedulerKind::AgePNow), 3), &[1.0 / 6.0, 1.0 / 3.0, 0.5], 1e-15));
    }

    #[test]
    fn single_observation_horizon() {
        for k in SchedulerKind::ALL {
            assert!((sched(k).pmf(1, 1).unwrap() - 1.0).abs() < 1e-15, "{k}");
        }
    }

    #[test]
    fn out_of_range() {
        let s = sched(SchedulerKind::Uniform);
        assert!(s.pmf(0, 3).is_err());
        assert!(s.pmf(4, 3).is_err());
        assert!(s.expected_refinements(5, 3, 1.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(Scheduler::<f64>::new(SchedulerKind::Exponential, 1.0, 0.5).is_err());
        assert!(Scheduler::<f64>::new(SchedulerKind::Exponential, 0.0, 0.5).is_err());
        assert!(Scheduler::<f64>::new(SchedulerKind::UniformNow, 0.5, 1.5).is_err());
        // q is irrelevant for Now
        assert!(Scheduler::<f64>::new(SchedulerKind::Now, 7.0, 7.0).is_ok());
    }

    #[test]
    fn normalized_up_to_1000() {
        for k in SchedulerKind::ALL {
            for q in [0.05, 0.5, 0.95] {
                let s = Scheduler::new(k, q, 0.3).unwrap();
                for horizon in (1..=1000).step_by(37).chain([2, 3, 1000]) {
                    let total: f64 = pmfs(&s, horizon).iter().sum();
                    assert!((total - 1.0).abs() <= 1e-12, "{k} T={horizon} sum={total}");
                }
            }
        }
    }

    #[test]
    fn exponential_tends_to_now() {
        let mut last = 0.0;
        for q in [0.5, 0.9, 0.99, 0.999999] {
            let p = Scheduler::new(SchedulerKind::Exponential, q, 0.5).unwrap().pmf(50, 50).unwrap();
            assert!(p > last);
            last = p;
        }
        assert!(last > 0.999);
    }

    #[test]
    fn uniform_now_without_local_weight_is_uniform_over_the_past() {
        let mix = Scheduler::new(SchedulerKind::UniformNow, 0.5, 0.0).unwrap();
        let uni = sched(SchedulerKind::Uniform);
        for horizon in 2..60 {
            assert_eq!(mix.pmf(horizon, horizon).unwrap(), 0.0);
            for t in 1..horizon {
                assert_eq!(mix.pmf(t, horizon).unwrap(), uni.pmf(t, horizon - 1).unwrap());
            }
        }
    }

    #[test]
    fn now_always_samples_latest() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for horizon in 1..50 {
            assert_eq!(sched(SchedulerKind::Now).sample(horizon, &mut rng), horizon);
        }
    }

    #[test]
    fn uniform_sample_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sched(SchedulerKind::Uniform);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            hits[s.sample(4, &mut rng) as usize - 1] += 1;
        }
        assert!(hits.iter().all(|&h| (h as i64 - 10_000).abs() <= 300), "{hits:?}");
    }

    #[test]
    fn exponential_tail_is_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Scheduler::new(SchedulerKind::Exponential, 0.9, 0.5).unwrap();
        let exact: f64 = (98..=100).map(|t| s.pmf(t, 100).unwrap()).sum();
        assert!(exact >= 0.99);
        let n = 20_000;
        let recent = (0..n).filter(|_| s.sample(100, &mut rng) >= 98).count();
        assert!(recent as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn samples_follow_pmf() {
        // chi-square against the pmf for every variant at a few horizons
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in SchedulerKind::ALL {
            let s = Scheduler::new(k, 0.3, 0.4).unwrap();
            for horizon in [1u32, 2, 5, 17] {
                let n = 30_000;
                let mut hits = vec![0usize; horizon as usize];
                for _ in 0..n {
                    let t = s.sample(horizon, &mut rng);
                    assert!((1..=horizon).contains(&t));
                    hits[t as usize - 1] += 1;
                }
                let mut chi2 = 0.0;
                let mut dof = 0;
                for (i, &h) in hits.iter().enumerate() {
                    let e = s.pmf(i as u32 + 1, horizon).unwrap() * n as f64;
                    if e > 0.0 {
                        chi2 += (h as f64 - e).powi(2) / e;
                        dof += 1;
                    } else {
                        assert_eq!(h, 0);
                    }
                }
                // generous bound: mean dof-1, sd sqrt(2 dof)
                let bound = dof as f64 + 6.0 * (2.0 * dof as f64).sqrt() + 10.0;
                assert!(chi2 < bound, "{k} T={horizon} chi2={chi2}");
            }
        }
    }

    #[test]
    fn expected_refinement_closed_forms() {
        assert_eq!(sched(SchedulerKind::Now).expected_refinements(3, 9, 7.0).unwrap(), 7.0);
        assert_eq!(sched(SchedulerKind::Uniform).expected_refinements(1, 1, 10.0).unwrap(), 10.0);

        // harmonic sum oracle: sum_{s=10}^{100} 1/s
        let harmonic: f64 = (10..=100).map(|s| 1.0 / s as f64).sum();
        let uni = sched(SchedulerKind::Uniform).expected_refinements(10, 100, 1.0).unwrap();
        assert!((uni - 2.358_409_263_7).abs() < 1e-9);
        assert!((uni - harmonic).abs() < 1e-12);
        let approx = (100f64).ln() - (10f64).ln();
        assert!((uni - approx).abs() / approx < 0.03);

        // telescoping oracle: sum_{s=t}^{T} 2t/(s(s+1)) = 2 (1 - t/(T+1))
        let agep = sched(SchedulerKind::AgeProportional).expected_refinements(50, 100, 1.0).unwrap();
        assert!((agep - 2.0 * (1.0 - 50.0 / 101.0)).abs() < 1e-12);
        assert!((agep - 1.0).abs() < 0.15);
    }

    #[test]
    fn approximations_track_exact_sums() {
        let horizon = 200;
        let uni = sched(SchedulerKind::Uniform);
        let agep = sched(SchedulerKind::AgeProportional);
        for t in 2..=horizon / 2 {
            let exact = uni.expected_refinements(t, horizon, 1.0).unwrap();
            let approx = (horizon as f64).ln() - (t as f64).ln();
            assert!((exact - approx).abs() / approx < 0.10, "uniform t={t}");
            let exact = agep.expected_refinements(t, horizon, 1.0).unwrap();
            let approx = 2.0 * (horizon - t) as f64 / horizon as f64;
            assert!((exact - approx).abs() / approx < 0.20, "agep t={t}");
        }
    }

    #[test]
    fn mixed_expectations_are_weighted() {
        let eta = 0.3;
        let mix = Scheduler::new(SchedulerKind::UniformExp, 0.4, eta).unwrap();
        let exp = Scheduler::new(SchedulerKind::Exponential, 0.4, eta).unwrap();
        let uni = sched(SchedulerKind::Uniform);
        for t in [1, 5, 20] {
            let m = mix.expected_refinements(t, 20, 3.0).unwrap();
            let w = eta * exp.expected_refinements(t, 20, 3.0).unwrap()
                + (1.0 - eta) * uni.expected_refinements(t, 20, 3.0).unwrap();
            assert!((m - w).abs() < 1e-12);
        }
    }
}
