//! Pseudo-arclength continuation of solution branches in lambda, with a
//! secant predictor, bordered Newton corrector, and fold detection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{DiscreteGeometry, Setting};
use crate::measure::CirculationMeasure;
use crate::scalar::Scalar;

use super::system::{newton_solve, ElSystem, NewtonConfig};

#[derive(Debug, Clone)]
pub struct ContinuationConfig<S: Scalar> {
    pub lambda_start: S,
    pub lambda_end: S,
    /// First secant step in lambda.
    pub initial_step: S,
    /// Arclength step floor; below it the branch is truncated.
    pub min_step: S,
    pub max_step: S,
    pub max_points: usize,
    /// Hard overflow guard on max(u).
    pub max_u_guard: S,
    /// Optional early stop once max(u) reaches this.
    pub target_max_u: Option<S>,
    pub newton: NewtonConfig<S>,
}

impl<S: Scalar> ContinuationConfig<S> {
    pub fn new(lambda_start: S, lambda_end: S) -> Self {
        Self {
            lambda_start,
            lambda_end,
            initial_step: S::of(0.25),
            min_step: S::of(1e-5),
            max_step: S::of(2.0),
            max_points: 200,
            max_u_guard: S::of(500.0),
            target_max_u: None,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct BranchPoint<S: Scalar> {
    pub lambda: S,
    #[serde(skip)]
    pub solution: Field<S>,
    pub energy: S,
    pub j_value: S,
    pub max_u: S,
    pub residual: S,
}

#[derive(Debug, Clone)]
pub struct Branch<S: Scalar> {
    pub points: Vec<BranchPoint<S>>,
    /// Indices where the lambda-tangent changed sign.
    pub turning_points: Vec<usize>,
    pub termination: String,
}

impl<S: Scalar> Branch<S> {
    pub fn last(&self) -> Option<&BranchPoint<S>> {
        self.points.last()
    }
}

struct Corrected<S: Scalar> {
    u: Field<S>,
    lambda: S,
    residual: S,
    iterations: usize,
}

/// Bordered Newton corrector for the extended system
/// [ g(u, lambda) = 0 ; theta^2 <t_u, u - u_pred>_w + t_l (lambda - lambda_pred) = 0 ].
#[allow(clippy::too_many_arguments)]
fn correct<S: Scalar>(
    sys: &ElSystem<S>,
    u_pred: &Field<S>,
    lambda_pred: S,
    t_u: &Field<S>,
    t_l: S,
    theta2: S,
    cfg: &NewtonConfig<S>,
    max_corrector: usize,
) -> Result<Corrected<S>> {
    let mut u = u_pred.clone();
    let mut lambda = lambda_pred;
    for it in 0..max_corrector {
        let state = sys.state(&u)?;
        let g = sys.strong_residual(&u, &state, lambda);
        let n_val = theta2 * (sys.geo.wdot(t_u, &u) - sys.geo.wdot(t_u, u_pred))
            + t_l * (lambda - lambda_pred);
        // convergence: cheap surrogate first, then the true energy residual
        if sys.surrogate_residual(&g) <= cfg.tol * S::of(10.0)
            && n_val.abs() <= S::of(1e-10) * (S::one() + lambda.abs())
        {
            let r = sys.riesz(&g, S::of(crate::linsolve::POISSON_RTOL))?;
            let res = sys.energy_residual(&g, &r);
            if res <= cfg.tol {
                return Ok(Corrected { u, lambda, residual: res, iterations: it });
            }
        }
        let eta = sys
            .surrogate_residual(&g)
            .powf(S::of(0.7))
            .min(S::of(0.05))
            .max(S::of(1e-8));
        let a = sys.solve_second_variation(
            &state,
            lambda,
            &g.scale(-S::one()),
            eta,
            None,
            cfg.krylov_max_iter,
        )?;
        let b = sys.solve_second_variation(
            &state,
            lambda,
            &state.density,
            eta,
            None,
            cfg.krylov_max_iter,
        )?;
        let denom = theta2 * sys.geo.wdot(t_u, &b) + t_l;
        if denom.abs() < S::of(1e-14) {
            return Err(Error::BifurcationSuspected(
                "singular bordered system in the corrector".into(),
            ));
        }
        let dlambda = (-n_val - theta2 * sys.geo.wdot(t_u, &a)) / denom;
        let mut du = a;
        du.axpy_in_place(dlambda, &b);
        u = sys.project(&u.add_scaled(S::one(), &du));
        lambda += dlambda;
        if !lambda.is_finite() {
            return Err(Error::Domain("lambda diverged in the corrector".into()));
        }
    }
    Err(Error::NewtonMaxIter {
        max_iterations: max_corrector,
        residual: f64::NAN,
    })
}

fn make_point<S: Scalar>(
    sys: &ElSystem<S>,
    u: Field<S>,
    lambda: S,
    residual: S,
) -> Result<BranchPoint<S>> {
    let state = sys.state(&u)?;
    let energy = sys.geo.dirichlet_energy(&u);
    let j_value = S::of(0.5) * energy - lambda * state.log_denominator;
    let max_u = u.max_value();
    Ok(BranchPoint {
        lambda,
        solution: u,
        energy,
        j_value,
        max_u,
        residual,
    })
}

/// Continue the solution branch from lambda_start toward lambda_end.
pub fn continue_branch<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    cfg: &ContinuationConfig<S>,
    setting: Setting,
) -> Result<Branch<S>> {
    let sys = ElSystem::new(geo, measure, setting)?;
    let dir = if cfg.lambda_end >= cfg.lambda_start {
        S::one()
    } else {
        -S::one()
    };

    let mut points: Vec<BranchPoint<S>> = Vec::new();
    let mut turning_points = Vec::new();

    let first = newton_solve(
        geo,
        measure,
        cfg.lambda_start,
        &geo.field_zeros(),
        setting,
        &cfg.newton,
    )?;
    points.push(make_point(&sys, first.field, cfg.lambda_start, first.residual)?);

    let lambda1 = cfg.lambda_start + dir * cfg.initial_step.min((cfg.lambda_end - cfg.lambda_start).abs());
    let second = newton_solve(
        geo,
        measure,
        lambda1,
        &points[0].solution,
        setting,
        &cfg.newton,
    )?;
    points.push(make_point(&sys, second.field, lambda1, second.residual)?);

    let mut termination = format!("reached max_points {}", cfg.max_points);
    let mut ds = cfg.initial_step;
    let mut prev_tl_sign = dir;

    loop {
        if points.len() >= cfg.max_points {
            break;
        }
        let last = &points[points.len() - 1];
        let before = &points[points.len() - 2];
        if let Some(target) = cfg.target_max_u {
            if last.max_u >= target {
                termination = format!("reached target max_u {}", target.to64());
                break;
            }
        }
        if last.max_u >= cfg.max_u_guard {
            termination = "hit the max_u overflow guard".into();
            break;
        }
        if dir * (last.lambda - cfg.lambda_end) >= S::zero() {
            termination = "reached lambda_end".into();
            break;
        }

        // secant tangent, normalized in the scaled arclength metric
        let theta2 = S::one() / (S::one() + sys.geo.wdot(&last.solution, &last.solution));
        let mut t_u = last.solution.add_scaled(-S::one(), &before.solution);
        let mut t_l = last.lambda - before.lambda;
        let norm = (theta2 * sys.geo.wdot(&t_u, &t_u) + t_l * t_l).sqrt();
        if !(norm > S::zero()) {
            termination = "stalled tangent".into();
            break;
        }
        t_u = t_u.scale(S::one() / norm);
        t_l /= norm;

        let tl_sign = if t_l >= S::zero() { S::one() } else { -S::one() };
        if tl_sign * prev_tl_sign < S::zero() {
            turning_points.push(points.len() - 1);
        }
        prev_tl_sign = tl_sign;

        // aim the predictor at lambda_end instead of overshooting past it
        let mut ds_step = ds;
        let remaining = dir * (cfg.lambda_end - last.lambda);
        if dir * t_l > S::of(0.05) {
            let ds_to_end = remaining / (dir * t_l);
            ds_step = ds_step.min(ds_to_end.max(cfg.min_step));
        }

        let mut stepped = false;
        while ds_step >= cfg.min_step {
            let u_pred = last.solution.add_scaled(ds_step, &t_u);
            let lambda_pred = last.lambda + ds_step * t_l;
            match correct(&sys, &u_pred, lambda_pred, &t_u, t_l, theta2, &cfg.newton, 10) {
                Ok(c) => {
                    let iterations = c.iterations;
                    points.push(make_point(&sys, c.u, c.lambda, c.residual)?);
                    if iterations <= 3 {
                        ds = (ds * S::of(1.4)).min(cfg.max_step);
                    } else if iterations >= 6 {
                        ds = ds * S::of(0.7);
                    }
                    stepped = true;
                    break;
                }
                Err(Error::NewtonMaxIter { .. }) | Err(Error::BifurcationSuspected(_)) => {
                    ds_step *= S::of(0.4);
                    ds = ds_step;
                }
                Err(e) => return Err(e),
            }
        }
        if !stepped {
            termination = "step underflow, branch truncated".into();
            break;
        }
    }

    Ok(Branch {
        points,
        turning_points,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, DomainSpec as DS};
    use crate::measure::CirculationMeasure;

    const PI: f64 = std::f64::consts::PI;

    type M = CirculationMeasure<f64>;

    #[test]
    fn torus_trivial_branch() {
        let geo = build_geometry::<f64>(&DS::unit_torus(), 16).unwrap();
        let cfg = ContinuationConfig::new(1.0, 20.0);
        let branch = continue_branch(&geo, &M::dirac(1.0), &cfg, Setting::Torus).unwrap();
        assert!(branch.points.len() >= 3);
        for p in &branch.points {
            assert!(p.residual <= 1e-10);
            assert!(p.max_u.abs() < 1e-8, "trivial branch stays zero");
        }
        assert_eq!(branch.termination, "reached lambda_end");
    }

    #[test]
    fn disc_branch_follows_exact_curve() {
        // the exact standard-case branch: lambda = 8 pi / (1 + d^2),
        // max_u = 2 log((1 + d^2)/d^2)
        let geo = build_geometry::<f64>(&DS::unit_disc(), 32).unwrap();
        let mut cfg = ContinuationConfig::new(4.0, 7.9 * PI);
        cfg.initial_step = 0.5;
        cfg.target_max_u = Some(8.0);
        let branch = continue_branch(&geo, &M::dirac(1.0), &cfg, Setting::Dirichlet).unwrap();
        assert!(branch.points.len() >= 5);
        let mut prev_max = -1.0;
        for p in &branch.points {
            assert!(p.residual <= 1e-10);
            assert!(p.max_u >= prev_max - 1e-9, "max_u grows along the branch");
            prev_max = p.max_u;
            if p.max_u > 1.0 {
                // compare against the closed-form curve
                let lam_exact = 8.0 * PI / (1.0 + d2_from_max_u(p.max_u));
                assert!(
                    (p.lambda - lam_exact).abs() < 0.05 * lam_exact,
                    "lambda {} vs exact {lam_exact} at max_u {}",
                    p.lambda,
                    p.max_u
                );
            }
        }
        let last = branch.last().unwrap();
        assert!(last.max_u >= 8.0);
    }

    fn d2_from_max_u(max_u: f64) -> f64 {
        // max_u = 2 log((1+d^2)/d^2)  =>  d^2 = 1/(e^{max_u/2} - 1)
        1.0 / ((max_u / 2.0).exp() - 1.0)
    }

    #[test]
    fn warm_start_continuation_toward_critical() {
        // stop below the discrete fold of this resolution (lambda ~ 24.78)
        // so the run exercises the pre-blow-up segment of the branch
        let geo = build_geometry::<f64>(&DS::unit_disc(), 48).unwrap();
        let mut cfg = ContinuationConfig::new(7.5 * PI, 7.8 * PI);
        cfg.initial_step = 0.2;
        let branch = continue_branch(&geo, &M::dirac(1.0), &cfg, Setting::Dirichlet).unwrap();
        let last = branch.last().unwrap();
        assert!(last.lambda >= 7.8 * PI - 1e-6);
        let mut prev = -1.0;
        for p in &branch.points {
            assert!(p.max_u >= prev - 1e-9, "max_u dipped at lambda {}", p.lambda);
            prev = p.max_u;
        }
    }
}
