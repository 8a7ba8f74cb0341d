//! The discrete Euler-Lagrange system shared by all solvers: strong
//! residual, energy-Riesz gradient, second-variation operator, and the
//! damped Newton iteration.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{nonlinear_state, NonlinearState};
use crate::geometry::{DiscreteGeometry, Setting};
use crate::linsolve::{
    jacobi_of_neg_laplacian, minres, neg_laplacian_apply, solve_poisson_tol, PoissonBc,
};
use crate::measure::CirculationMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct NewtonConfig<S: Scalar> {
    /// Energy-norm residual at which a solution is accepted.
    pub tol: S,
    pub max_iter: usize,
    pub backtrack_factor: S,
    pub min_step: S,
    pub krylov_max_iter: usize,
}

impl<S: Scalar> Default for NewtonConfig<S> {
    fn default() -> Self {
        Self {
            tol: S::of(1e-10),
            max_iter: 50,
            backtrack_factor: S::of(0.5),
            min_step: S::of(1e-8),
            krylov_max_iter: 60_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome<S: Scalar> {
    pub field: Field<S>,
    /// Energy-norm residual at the returned field.
    pub residual: S,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Geometry + measure + setting bundle the solvers work against.
pub struct ElSystem<'a, S: Scalar> {
    pub geo: &'a DiscreteGeometry<S>,
    pub measure: &'a CirculationMeasure<S>,
    pub setting: Setting,
    neg_lap_diag: Vec<S>,
}

impl<'a, S: Scalar> ElSystem<'a, S> {
    pub fn new(
        geo: &'a DiscreteGeometry<S>,
        measure: &'a CirculationMeasure<S>,
        setting: Setting,
    ) -> Result<Self> {
        crate::functional::check_setting(geo, setting)?;
        measure.validate_probability()?;
        Ok(Self {
            geo,
            measure,
            setting,
            neg_lap_diag: jacobi_of_neg_laplacian(geo),
        })
    }

    pub fn bc(&self) -> PoissonBc {
        PoissonBc::for_setting(self.setting)
    }

    pub fn state(&self, u: &Field<S>) -> Result<NonlinearState<S>> {
        nonlinear_state(self.geo, self.measure, u, self.setting)
    }

    pub fn j_value(&self, u: &Field<S>, state: &NonlinearState<S>, lambda: S) -> S {
        S::of(0.5) * self.geo.dirichlet_energy(u) - lambda * state.log_denominator
    }

    /// Make a field admissible: zero the boundary or subtract the mean.
    pub fn project(&self, u: &Field<S>) -> Field<S> {
        match self.setting {
            Setting::Dirichlet => {
                let mut v = u.clone();
                self.geo.impose_zero_boundary(&mut v);
                v
            }
            Setting::Torus => self.geo.project_mean_zero(u),
        }
    }

    /// w-representative of J'(u): g = -Lu - lambda * density, zero on
    /// Dirichlet boundary rows.
    pub fn strong_residual(&self, u: &Field<S>, state: &NonlinearState<S>, lambda: S) -> Field<S> {
        let n = self.geo.n_nodes();
        let mut g = vec![S::zero(); n];
        neg_laplacian_apply(self.geo, &u.values, &mut g);
        for i in 0..n {
            if self.geo.interior_mask[i] {
                g[i] -= lambda * state.density.values[i];
            }
        }
        let g = Field { values: g };
        match self.setting {
            Setting::Torus => self.geo.project_mean_zero(&g),
            Setting::Dirichlet => g,
        }
    }

    /// Energy-Riesz representative of the residual: r with -Lr = g.
    pub fn riesz(&self, g: &Field<S>, rtol: S) -> Result<Field<S>> {
        solve_poisson_tol(self.geo, g, self.bc(), rtol, None)
    }

    /// Energy norm of the residual given both representatives.
    pub fn energy_residual(&self, g: &Field<S>, r: &Field<S>) -> S {
        self.geo.wdot(g, r).max(S::zero()).sqrt()
    }

    /// Cheap preconditioned surrogate of the residual norm for line searches.
    pub fn surrogate_residual(&self, g: &Field<S>) -> S {
        let mut acc = S::zero();
        for i in 0..g.len() {
            acc += self.geo.volume_weights[i] * g.values[i] * g.values[i] / self.neg_lap_diag[i];
        }
        acc.max(S::zero()).sqrt()
    }

    /// Apply the second variation B = -L - lambda G''(u) to an admissible
    /// direction; output is kept admissible.
    pub fn second_variation_apply(
        &self,
        state: &NonlinearState<S>,
        lambda: S,
        v: &[S],
        out: &mut [S],
    ) {
        let n = self.geo.n_nodes();
        neg_laplacian_apply(self.geo, v, out);
        // restrict to the admissible subspace: boundary components of v
        // must not leak into the rank-one term
        let mut raw_dot = S::zero();
        for &i in self.geo.interior_indices() {
            raw_dot += self.geo.volume_weights[i] * state.raw_density.values[i] * v[i];
        }
        for i in 0..n {
            if self.geo.interior_mask[i] {
                out[i] -= lambda
                    * (state.weight2.values[i] * v[i] - state.raw_density.values[i] * raw_dot);
            }
        }
        if self.setting == Setting::Torus {
            let mut m = S::zero();
            for i in 0..n {
                m += self.geo.volume_weights[i] * out[i];
            }
            m /= self.geo.total_volume;
            for o in out.iter_mut() {
                *o -= m;
            }
        }
    }

    /// Solve B x = rhs by preconditioned MINRES.
    pub fn solve_second_variation(
        &self,
        state: &NonlinearState<S>,
        lambda: S,
        rhs: &Field<S>,
        rtol: S,
        x0: Option<&Field<S>>,
        max_iter: usize,
    ) -> Result<Field<S>> {
        let n = self.geo.n_nodes();
        let mut diag = self.neg_lap_diag.clone();
        for i in 0..n {
            if self.geo.interior_mask[i] {
                let d = diag[i] - lambda * state.weight2.values[i];
                diag[i] = d.max(S::of(0.1) * diag[i]);
            }
        }
        let rhs = self.project(rhs);
        let apply = |v: &[S], out: &mut [S]| self.second_variation_apply(state, lambda, v, out);
        let precond = move |r: &[S], out: &mut [S]| {
            for i in 0..r.len() {
                out[i] = r[i] / diag[i];
            }
        };
        let mask = self.geo.interior_mask.clone();
        let w = self.geo.volume_weights.clone();
        let dot = move |a: &[S], b: &[S]| {
            let mut acc = S::zero();
            for i in 0..a.len() {
                if mask[i] {
                    acc += w[i] * a[i] * b[i];
                }
            }
            acc
        };
        let out = minres(
            &apply,
            &precond,
            &dot,
            &rhs.values,
            x0.map(|f| f.values.as_slice()),
            rtol,
            max_iter,
        );
        match out {
            Ok((x, _)) => Ok(Field { values: x }),
            Err(Error::SolverStagnation { iterations, residual }) => {
                Err(Error::BifurcationSuspected(format!(
                    "second-variation solve stalled after {iterations} iterations \
                     (residual {residual:.3e})"
                )))
            }
            Err(e) => Err(e),
        }
    }
}

/// Damped Newton iteration on the Euler-Lagrange system at fixed lambda.
pub fn newton_solve<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    lambda: S,
    u0: &Field<S>,
    setting: Setting,
    cfg: &NewtonConfig<S>,
) -> Result<NewtonOutcome<S>> {
    let sys = ElSystem::new(geo, measure, setting)?;
    let mut u = sys.project(u0);
    let mut history = Vec::new();
    let mut stall_count = 0usize;

    for it in 0..=cfg.max_iter {
        let state = sys.state(&u)?;
        let g = sys.strong_residual(&u, &state, lambda);
        let r = sys.riesz(&g, S::of(crate::linsolve::POISSON_RTOL))?;
        let res = sys.energy_residual(&g, &r);
        history.push(res.to64());
        if res <= cfg.tol {
            return Ok(NewtonOutcome {
                field: u,
                residual: res,
                iterations: it,
                residual_history: history,
            });
        }
        if it == cfg.max_iter {
            break;
        }

        // inexact Newton forcing keeps the tail superlinear
        let eta = res.powf(S::of(0.85)).min(S::of(0.1)).max(S::of(1e-10));
        let rhs = g.scale(-S::one());
        let delta =
            sys.solve_second_variation(&state, lambda, &rhs, eta, None, cfg.krylov_max_iter)?;

        // backtrack on the preconditioned residual surrogate
        let phi0 = sys.surrogate_residual(&g);
        let mut t = S::one();
        let mut accepted = false;
        while t >= cfg.min_step {
            let cand = sys.project(&u.add_scaled(t, &delta));
            if let Ok(cstate) = sys.state(&cand) {
                let cg = sys.strong_residual(&cand, &cstate, lambda);
                let phi = sys.surrogate_residual(&cg);
                if phi <= (S::one() - S::of(1e-4) * t) * phi0 {
                    u = cand;
                    accepted = true;
                    break;
                }
            }
            t *= cfg.backtrack_factor;
        }
        if !accepted {
            stall_count += 1;
            if stall_count >= 2 {
                return Err(Error::NewtonMaxIter {
                    max_iterations: it,
                    residual: res.to64(),
                });
            }
            // gradient fallback step
            let t_g = S::of(0.1);
            u = sys.project(&u.add_scaled(-t_g, &r));
        } else {
            stall_count = 0;
        }
    }
    Err(Error::NewtonMaxIter {
        max_iterations: cfg.max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
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
    fn trivial_branch_on_torus_needs_no_iterations() {
        let geo = build_geometry::<f64>(&DS::unit_torus(), 24).unwrap();
        let out = newton_solve(
            &geo,
            &M::dirac(1.0),
            20.0,
            &geo.field_zeros(),
            Setting::Torus,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.residual <= 1e-10);
        assert!(geo.h_norm(&out.field) < 1e-12);
    }

    #[test]
    fn disc_solution_matches_exact_radial_branch() {
        // closed-form solution of the standard case on the unit disc:
        // u(r) = 2 log((1 + d^2)/(d^2 + r^2)), lambda = 8 pi / (1 + d^2)
        let geo = build_geometry::<f64>(&DS::unit_disc(), 48).unwrap();
        let d2 = 1.0;
        let lambda = 8.0 * PI / (1.0 + d2);
        let out = newton_solve(
            &geo,
            &M::dirac(1.0),
            lambda,
            &geo.field_zeros(),
            Setting::Dirichlet,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(out.residual <= 1e-10, "residual {}", out.residual);
        let mut max_err = 0.0f64;
        for i in 0..geo.n_nodes() {
            let [x, y] = geo.nodes[i];
            let exact = 2.0 * ((1.0 + d2) / (d2 + x * x + y * y)).ln();
            max_err = max_err.max((out.field.values[i] - exact).abs());
        }
        assert!(max_err < 5e-3, "max_err {max_err}");
    }

    #[test]
    fn newton_contracts_quadratically_at_the_tail() {
        let geo = build_geometry::<f64>(&DS::unit_disc(), 32).unwrap();
        let out = newton_solve(
            &geo,
            &M::dirac(1.0),
            4.0 * PI,
            &geo.field_zeros(),
            Setting::Dirichlet,
            &NewtonConfig::default(),
        )
        .unwrap();
        let h = &out.residual_history;
        assert!(h.len() >= 3, "history {h:?}");
        // last contraction still above the measurement floor
        let i = (1..h.len())
            .rev()
            .find(|&i| h[i - 1] >= 1e-8)
            .expect("no measurable step");
        assert!(
            h[i] <= 10.0 * h[i - 1].powf(1.8),
            "tail not quadratic: {h:?}"
        );
    }

    #[test]
    fn accepted_solution_satisfies_weak_identity() {
        use rand::{Rng, SeedableRng};
        let geo = build_geometry::<f64>(&DS::unit_disc(), 24).unwrap();
        let p = M::new(vec![(1.0, 0.5), (0.5, 0.5)], vec![]).unwrap();
        let lambda = 10.0;
        let out = newton_solve(
            &geo,
            &p,
            lambda,
            &geo.field_zeros(),
            Setting::Dirichlet,
            &NewtonConfig::default(),
        )
        .unwrap();
        let sys = ElSystem::new(&geo, &p, Setting::Dirichlet).unwrap();
        let state = sys.state(&out.field).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let mut phi = geo.field_from_fn(|_| rng.gen::<f64>() - 0.5);
            geo.impose_zero_boundary(&mut phi);
            let weak = geo.h_inner(&out.field, &phi) - lambda * geo.wdot(&state.density, &phi);
            let scale = geo.h_norm(&phi).max(1.0);
            assert!(weak.abs() <= 1e-8 * scale, "weak identity violated: {weak}");
        }
        // positivity of the solution under the nonnegative-circulation measure
        assert!(out.field.min_value() >= -1e-8);
    }
}
