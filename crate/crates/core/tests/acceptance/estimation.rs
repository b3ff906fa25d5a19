//! Monte-Carlo consistency of the constant-velocity tracker on truth drawn
//! from the same model.

use nalgebra::{Matrix2, Vector4};
use pursuit_core::estimator::Tracker;
use pursuit_core::{EstimatorConfig, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::Outcome;

const RUNS: usize = 100;
const STEPS: usize = 400;
const DT: f64 = 0.05;
/// NEES is judged once the deliberately loose initial covariance has decayed.
const SETTLE: usize = 60;

pub fn run() -> Outcome {
    let cfg = EstimatorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xe57);
    let meas = Normal::new(0.0, cfg.r.sqrt()).unwrap();
    // per-axis discrete white-acceleration covariance
    let block = Matrix2::new(DT.powi(3) / 3.0, DT.powi(2) / 2.0, DT.powi(2) / 2.0, DT) * cfg.q;
    let chol = block.cholesky().unwrap().l();

    let mut nees_sum = vec![0.0; STEPS];
    let (mut sq_err, mut sq_count) = (0.0, 0usize);
    for _ in 0..RUNS {
        let mut truth = Vector4::new(0.0, 0.0, 0.0, 0.0);
        for k in 2..4 {
            let n: f64 = StandardNormal.sample(&mut rng);
            truth[k] = cfg.init_var[k].sqrt() * n;
        }
        let mut tracker = Tracker::new(cfg, 1e6);
        for step in 0..STEPS {
            if step > 0 {
                for axis in 0..2 {
                    let w = chol * nalgebra::Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    truth[axis] += truth[axis + 2] * DT + w[0];
                    truth[axis + 2] += w[1];
                }
            }
            let z = Point::new(truth[0] + meas.sample(&mut rng), truth[1] + meas.sample(&mut rng));
            let dt = if step == 0 { 0.0 } else { DT };
            tracker.tick(step as f64 * DT, dt, Some(z)).unwrap();
            let est = tracker.estimate.unwrap();
            let e = truth - est.mean;
            nees_sum[step] += (e.transpose() * est.covariance.try_inverse().unwrap() * e)[0];
            if step >= STEPS / 2 {
                sq_err += e[0] * e[0] + e[1] * e[1];
                sq_count += 1;
            }
        }
    }

    let dof = 4.0 * RUNS as f64;
    let chi = ChiSquared::new(dof).unwrap();
    let (lo, hi) = (chi.inverse_cdf(0.025) / RUNS as f64, chi.inverse_cdf(0.975) / RUNS as f64);
    let judged = &nees_sum[SETTLE..];
    let inside = judged
        .iter()
        .filter(|&&s| (lo..=hi).contains(&(s / RUNS as f64)))
        .count();
    let frac = inside as f64 / judged.len() as f64;
    let mean_nees = judged.iter().sum::<f64>() / (judged.len() * RUNS) as f64;
    let rms = (sq_err / sq_count as f64).sqrt();
    let limit = 3.0 * cfg.r.sqrt();
    Outcome::new(
        frac >= 0.9 && rms <= limit,
        format!(
            "{RUNS} runs: run-averaged NEES inside [{lo:.2}, {hi:.2}] at {:.1} % of steps (need 90 %, nominal 95 %), \
             mean {mean_nees:.2}; steady RMS position error {rms:.3} m (limit {limit:.3})",
            100.0 * frac
        ),
    )
}
