//! Zeroth-order gradient estimates.

use serde::{Deserialize, Serialize};

use crate::data::Minibatch;
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::perturb::{perturb_observed, MomentumState, ParamVector};
use crate::rng::DrawSource;
use crate::schedule::ScheduleValues;

/// Scalar projected gradient `(loss_plus - loss_minus) / (2 eps)` and the
/// losses it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub g_scalar: f64,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub epsilon: f64,
    pub seed: u64,
}

fn finite(which: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { which, value })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::config("eps", format!("perturbation scale must be > 0, got {eps}")))
    }
}

/// Two-sided SPSA estimate along an explicit direction `z`:
/// `(L(theta + eps z) - L(theta - eps z)) / (2 eps) * z`.
pub fn spsa_gradient<O: Objective + ?Sized>(
    objective: &O,
    theta: &ParamVector,
    batch: &Minibatch,
    eps: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    if z.len() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            actual: z.len(),
        });
    }
    let shifted = |sign: f64| -> Vec<f64> {
        theta
            .as_slice()
            .iter()
            .zip(z)
            .map(|(t, z)| t + sign * eps * z)
            .collect()
    };
    let plus = finite("loss_plus", objective.evaluate(&shifted(1.0), batch))?;
    let minus = finite("loss_minus", objective.evaluate(&shifted(-1.0), batch))?;
    let g = (plus - minus) / (2.0 * eps);
    Ok(z.iter().map(|z| g * z).collect())
}

/// In-place `+eps, -2 eps, +eps` walk with the loss evaluated after the first
/// two moves. Exactly two evaluations; `theta` is restored on every exit
/// path, including errors.
#[allow(clippy::too_many_arguments)]
pub fn projected_gradient<O, S>(
    objective: &O,
    theta: &mut ParamVector,
    momentum: Option<&MomentumState>,
    batch: &Minibatch,
    eps: f64,
    seed: u64,
    sched: &ScheduleValues,
    draws: &mut S,
) -> Result<GradEstimate>
where
    O: Objective + ?Sized,
    S: DrawSource + ?Sized,
{
    projected_gradient_with(
        |params: &[f64]| Ok(objective.evaluate(params, batch)),
        theta,
        momentum,
        eps,
        seed,
        sched,
        draws,
        |_, _, _| {},
    )
}

/// [`projected_gradient`] over an arbitrary fallible loss. `observe(call, i,
/// mixed_i)` sees every perturbation applied, `call` being 0, 1, 2 for the
/// three moves.
#[allow(clippy::too_many_arguments)]
pub fn projected_gradient_with<L, S, F>(
    mut loss: L,
    theta: &mut ParamVector,
    momentum: Option<&MomentumState>,
    eps: f64,
    seed: u64,
    sched: &ScheduleValues,
    draws: &mut S,
    mut observe: F,
) -> Result<GradEstimate>
where
    L: FnMut(&[f64]) -> Result<f64>,
    S: DrawSource + ?Sized,
    F: FnMut(usize, usize, f64),
{
    check_eps(eps)?;
    let mut walk = |theta: &mut ParamVector, call: usize, coef: f64| {
        perturb_observed(theta, momentum, coef, seed, sched, draws, |i, z| observe(call, i, z))
    };

    walk(theta, 0, eps)?;
    let loss_plus = match loss(theta.as_slice()).and_then(|v| finite("loss_plus", v)) {
        Ok(v) => v,
        Err(err) => {
            walk(theta, 2, -eps)?;
            return Err(err);
        }
    };
    walk(theta, 1, -2.0 * eps)?;
    let loss_minus = loss(theta.as_slice()).and_then(|v| finite("loss_minus", v));
    walk(theta, 2, eps)?;
    let loss_minus = loss_minus?;

    let g_scalar = finite("g_scalar", (loss_plus - loss_minus) / (2.0 * eps))?;
    Ok(GradEstimate {
        g_scalar,
        loss_plus,
        loss_minus,
        epsilon: eps,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::objectives::{CountingObjective, LogisticLoss, TestFunction};
    use crate::rng::{GaussianStream, PinnedDraws};

    struct Square;

    impl Objective for Square {
        fn name(&self) -> &str {
            "square"
        }
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, theta: &[f64], _: &Minibatch) -> f64 {
            theta[0] * theta[0]
        }
    }

    struct Flat;

    impl Objective for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn dim(&self) -> usize {
            3
        }
        fn evaluate(&self, _: &[f64], _: &Minibatch) -> f64 {
            1.25
        }
    }

    struct Sum2;

    impl Objective for Sum2 {
        fn name(&self) -> &str {
            "sum"
        }
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, theta: &[f64], _: &Minibatch) -> f64 {
            theta[0] + theta[1]
        }
    }

    struct NanAbove(f64);

    impl Objective for NanAbove {
        fn name(&self) -> &str {
            "nan"
        }
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, theta: &[f64], _: &Minibatch) -> f64 {
            if theta[0] > self.0 {
                f64::NAN
            } else {
                theta[0]
            }
        }
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        let theta = ParamVector::new(vec![1.0]).unwrap();
        // Dyadic scales keep every intermediate exact.
        for eps in [0.5, 2.0, 1.0 / 1024.0] {
            let g = spsa_gradient(&Square, &theta, &Minibatch::placeholder(), eps, &[1.0]).unwrap();
            assert_eq!(g, vec![2.0]);
        }
        let g = spsa_gradient(&Square, &theta, &Minibatch::placeholder(), 1e-3, &[1.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_loss_gives_zero() {
        let theta = ParamVector::new(vec![0.3, -1.0, 2.0]).unwrap();
        let g = spsa_gradient(&Flat, &theta, &Minibatch::placeholder(), 1e-2, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn orthogonal_direction_projects_to_zero() {
        let theta = ParamVector::zeros(2);
        let g = spsa_gradient(&Sum2, &theta, &Minibatch::placeholder(), 0.1, &[1.0, -1.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn spsa_rejects_bad_inputs() {
        let theta = ParamVector::zeros(2);
        let batch = Minibatch::placeholder();
        assert!(spsa_gradient(&Sum2, &theta, &batch, 0.0, &[1.0, 1.0]).is_err());
        assert!(matches!(
            spsa_gradient(&Sum2, &theta, &batch, 0.1, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let one = ParamVector::new(vec![0.0]).unwrap();
        assert!(matches!(
            spsa_gradient(&NanAbove(0.5), &one, &batch, 1.0, &[1.0]),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn pinned_projected_gradient_on_square() {
        let mut theta = ParamVector::new(vec![1.0]).unwrap();
        let est = projected_gradient(
            &Square,
            &mut theta,
            None,
            &Minibatch::placeholder(),
            1e-3,
            0,
            &ScheduleValues::WARMUP,
            &mut PinnedDraws::new(vec![1.0, 0.0]),
        )
        .unwrap();
        // ((1.001)^2 - (0.999)^2) / 0.002 = 2 up to rounding of the walk.
        assert!((est.g_scalar - 2.0).abs() < 1e-9, "{}", est.g_scalar);
        assert!((theta.as_slice()[0] - 1.0).abs() <= 8.0 * f64::EPSILON);
    }

    #[test]
    fn flat_loss_projected_gradient_is_zero() {
        let mut theta = ParamVector::new(vec![0.5, -0.25, 3.0]).unwrap();
        let original = theta.clone();
        let est = projected_gradient(
            &Flat,
            &mut theta,
            None,
            &Minibatch::placeholder(),
            1e-3,
            9,
            &ScheduleValues::WARMUP,
            &mut GaussianStream::new(0),
        )
        .unwrap();
        assert_eq!(est.g_scalar, 0.0);
        for (a, b) in theta.as_slice().iter().zip(original.as_slice()) {
            assert!((a - b).abs() <= 8.0 * f64::EPSILON * b.abs().max(1e-3));
        }
    }

    #[test]
    fn batch_order_does_not_matter_for_mean_loss() {
        let ex = |x: f64, y: f64, label| Example { features: vec![x, y], label };
        let a = vec![ex(1.0, 2.0, 1), ex(-0.5, 0.3, 0), ex(0.2, -1.0, 1), ex(2.0, 0.0, 0)];
        let mut b = a.clone();
        b.reverse();
        let obj = LogisticLoss::new(2);
        let run = |batch: Vec<Example>| {
            let mut theta = ParamVector::new(vec![0.4, -0.3, 0.1]).unwrap();
            projected_gradient(
                &obj,
                &mut theta,
                None,
                &Minibatch::new(batch).unwrap(),
                1e-3,
                31,
                &ScheduleValues::WARMUP,
                &mut GaussianStream::new(0),
            )
            .unwrap()
            .g_scalar
        };
        assert!((run(a) - run(b)).abs() < 1e-12);
    }

    #[test]
    fn exactly_two_evaluations() {
        let obj = CountingObjective::new(TestFunction::Rosenbrock);
        let mut theta = ParamVector::new(vec![0.5, 0.5]).unwrap();
        let m = MomentumState::zeros(2);
        for seed in 0..10 {
            projected_gradient(
                &obj,
                &mut theta,
                Some(&m),
                &Minibatch::placeholder(),
                1e-3,
                seed,
                &ScheduleValues::new(0.5, 0.9, 0.01),
                &mut GaussianStream::new(0),
            )
            .unwrap();
        }
        assert_eq!(obj.evaluations(), 20);
    }

    #[test]
    fn non_finite_loss_restores_theta() {
        // +eps pushes theta above the threshold: the first evaluation is NaN.
        for (threshold, pinned) in [(0.5, 1.0), (0.5, -1.0)] {
            let mut theta = ParamVector::new(vec![0.0]).unwrap();
            let err = projected_gradient(
                &NanAbove(threshold),
                &mut theta,
                None,
                &Minibatch::placeholder(),
                1.0,
                0,
                &ScheduleValues::WARMUP,
                &mut PinnedDraws::new(vec![pinned, 0.0]),
            )
            .unwrap_err();
            assert!(matches!(err, Error::NonFiniteLoss { .. }));
            assert_eq!(theta.as_slice(), &[0.0]);
        }
    }
}
