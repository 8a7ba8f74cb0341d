//! Numerical mountain pass on the torus: a discrete path from 0 to a
//! negative-level endpoint is lowered by normalized gradient steps applied
//! near the path maximum, with a cut-off that switches on within 2*eps of
//! the running maximum, then the maximizer is polished by Newton.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::value_only;
use crate::geometry::{DiscreteGeometry, Setting};
use crate::measure::CirculationMeasure;
use crate::scalar::Scalar;

use super::system::{newton_solve, ElSystem, NewtonConfig};

const EIGHT_PI: f64 = 8.0 * std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct MinimaxConfig<S: Scalar> {
    pub path_points: usize,
    /// Geometric deformation schedule from eps_start down to eps_end.
    pub eps_start: S,
    pub eps_end: S,
    pub eps_decay: S,
    pub max_iter_per_eps: usize,
    /// Stagnation rule: path-max change below tol over this many iterations.
    pub stagnation_window: usize,
    pub stagnation_tol: S,
    pub respline_every: usize,
    pub newton: NewtonConfig<S>,
    /// Residual the polished critical point must reach.
    pub residual_tol: S,
}

impl<S: Scalar> Default for MinimaxConfig<S> {
    fn default() -> Self {
        Self {
            path_points: 64,
            eps_start: S::of(1e-1),
            eps_end: S::of(1e-6),
            eps_decay: S::of(0.25),
            max_iter_per_eps: 80,
            stagnation_window: 20,
            stagnation_tol: S::of(1e-9),
            respline_every: 5,
            newton: NewtonConfig::default(),
            residual_tol: S::of(1e-6),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxHistoryEntry<S: Scalar> {
    pub eps: S,
    pub sup_j: S,
    pub deformation_magnitude: S,
}

#[derive(Debug, Clone)]
pub struct MinimaxResult<S: Scalar> {
    pub lambda: S,
    /// Maximum of J over the final path.
    pub c_lambda: S,
    pub path: Vec<Field<S>>,
    pub critical_point: Field<S>,
    /// Energy-norm residual at the critical point.
    pub residual: S,
    pub j_at_critical: S,
    pub history: Vec<MinimaxHistoryEntry<S>>,
    pub converged: bool,
    pub failure: Option<String>,
    /// Lambda sat inside (8 pi, mu_1 |M| / second moment).
    pub inside_window: bool,
}

/// The cut-off of the deformation: 0 at or below -2, 1 at or above -1,
/// linear in between.
fn cutoff<S: Scalar>(t: S) -> S {
    (t + S::of(2.0)).max(S::zero()).min(S::one())
}

/// Find a far endpoint with negative level: scan mesh-resolvable bubble
/// widths and amplitudes until J goes below -margin.
pub fn bubble_endpoint<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    lambda: S,
    center: crate::geometry::Point<S>,
    cap_radius: S,
    margin: S,
) -> Result<Field<S>> {
    let min_eps = S::of(2.02) * geo.mesh_scale;
    let mut best: Option<(S, Field<S>)> = None;
    for k in 0..4 {
        let eps = min_eps * S::of(1.0 + 0.5 * k as f64);
        if eps > cap_radius {
            break;
        }
        let fam = crate::families::bubble_family(geo, measure, center, cap_radius, eps)?;
        for &amp in &[1.0, 1.25, 1.5, 1.75] {
            let v = geo.project_mean_zero(&fam.field.scale(S::of(amp)));
            let j = value_only(geo, measure, lambda, &v, Setting::Torus)?;
            if j < -margin {
                return Ok(v);
            }
            if best.as_ref().map_or(true, |(bj, _)| j < *bj) {
                best = Some((j, v));
            }
        }
    }
    let best_j = best.map(|(j, _)| j.to64()).unwrap_or(f64::NAN);
    Err(Error::GeometryViolated(format!(
        "no mesh-resolvable bubble reaches a negative level at lambda = {lambda} \
         (best J = {best_j:.4}); refine the mesh or raise lambda"
    )))
}

fn path_values<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    lambda: S,
    path: &[Field<S>],
) -> Result<Vec<S>> {
    path.iter()
        .map(|v| value_only(geo, measure, lambda, v, Setting::Torus))
        .collect()
}

/// Resample the path to uniform energy-norm arclength; endpoints stay fixed.
fn respline<S: Scalar>(geo: &DiscreteGeometry<S>, path: &[Field<S>]) -> Vec<Field<S>> {
    let n = path.len();
    let mut cum = vec![S::zero(); n];
    for i in 1..n {
        let diff = path[i].add_scaled(-S::one(), &path[i - 1]);
        cum[i] = cum[i - 1] + geo.h_norm(&diff);
    }
    let total = cum[n - 1];
    if !(total > S::zero()) {
        return path.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    out.push(path[0].clone());
    let mut seg = 0usize;
    for k in 1..n - 1 {
        let target = total * S::of_usize(k) / S::of_usize(n - 1);
        while seg + 1 < n - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > S::zero() {
            (target - cum[seg]) / span
        } else {
            S::zero()
        };
        let v = path[seg].scale(S::one() - t).add_scaled(t, &path[seg + 1]);
        out.push(geo.project_mean_zero(&v));
    }
    out.push(path[n - 1].clone());
    out
}

/// Run the deformation minimax from 0 to `endpoint_far` at fixed lambda.
pub fn mountain_pass<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    lambda: S,
    endpoint_far: &Field<S>,
    cfg: &MinimaxConfig<S>,
) -> Result<MinimaxResult<S>> {
    let sys = ElSystem::new(geo, measure, Setting::Torus)?;
    geo.check_admissible(endpoint_far, Setting::Torus)?;

    let j_end = value_only(geo, measure, lambda, endpoint_far, Setting::Torus)?;
    if !(j_end < S::zero()) {
        return Err(Error::GeometryViolated(format!(
            "far endpoint has J = {j_end} >= 0; no mountain-pass geometry at lambda = {lambda}"
        )));
    }
    let m2 = measure.moment(2);
    let inside_window = if m2 > S::zero() {
        let mu1 = crate::linsolve::first_eigenvalue(geo)?;
        let top = mu1 * geo.total_volume / m2;
        lambda.to64() > EIGHT_PI && lambda < top
    } else {
        false
    };

    let p = cfg.path_points;
    let mut path: Vec<Field<S>> = (0..=p)
        .map(|i| geo.project_mean_zero(&endpoint_far.scale(S::of_usize(i) / S::of_usize(p))))
        .collect();

    let mut history = Vec::new();
    let mut eps = cfg.eps_start;
    while eps >= cfg.eps_end {
        let mut recent: Vec<S> = Vec::new();
        for iter in 0..cfg.max_iter_per_eps {
            let values = path_values(geo, measure, lambda, &path)?;
            let (mut arg_max, mut c) = (0usize, S::neg_infinity());
            for (i, &v) in values.iter().enumerate() {
                if v > c {
                    c = v;
                    arg_max = i;
                }
            }
            if arg_max == 0 || arg_max == p {
                return Err(Error::GeometryViolated(
                    "path maximum sits at an endpoint; the path fell below the mountain level"
                        .into(),
                ));
            }

            // deform every point in the cut-off window
            let mut deform_mag = S::zero();
            for i in 1..p {
                let xi = cutoff((values[i] - c) / eps);
                if xi <= S::zero() {
                    continue;
                }
                let state = sys.state(&path[i])?;
                let g = sys.strong_residual(&path[i], &state, lambda);
                let r = sys.riesz(&g, S::of(1e-9))?;
                let norm = geo.h_norm(&r);
                if norm <= S::of(1e-13) {
                    continue;
                }
                let dir = r.scale(-S::one() / norm);
                let mut amount = eps.sqrt() * xi;
                // near the maximum the step must not raise J
                let guard = values[i] >= c - eps;
                let mut applied = false;
                for _ in 0..6 {
                    let cand = geo.project_mean_zero(&path[i].add_scaled(amount, &dir));
                    let jc = value_only(geo, measure, lambda, &cand, Setting::Torus)?;
                    if !guard || jc <= values[i] + S::of(1e-12) {
                        path[i] = cand;
                        applied = true;
                        break;
                    }
                    amount *= S::of(0.5);
                }
                if applied {
                    deform_mag = deform_mag.max(amount);
                }
            }

            let new_values = path_values(geo, measure, lambda, &path)?;
            let new_c = new_values
                .iter()
                .copied()
                .fold(S::neg_infinity(), S::max);
            history.push(MinimaxHistoryEntry {
                eps,
                sup_j: new_c,
                deformation_magnitude: deform_mag,
            });

            if iter % cfg.respline_every == cfg.respline_every - 1 {
                path = respline(geo, &path);
            }

            recent.push(new_c);
            if recent.len() > cfg.stagnation_window {
                let head = recent[recent.len() - 1 - cfg.stagnation_window];
                let tail = recent[recent.len() - 1];
                if (head - tail).abs() <= cfg.stagnation_tol {
                    break;
                }
            }
        }
        eps *= cfg.eps_decay;
    }

    // final level and maximizer
    let values = path_values(geo, measure, lambda, &path)?;
    let (mut arg_max, mut c_lambda) = (0usize, S::neg_infinity());
    for (i, &v) in values.iter().enumerate() {
        if v > c_lambda {
            c_lambda = v;
            arg_max = i;
        }
    }

    let mut converged = false;
    let mut failure = None;
    let mut critical_point = path[arg_max].clone();
    let mut residual = S::infinity();
    let mut j_at_critical = values[arg_max];
    match newton_solve(geo, measure, lambda, &path[arg_max], Setting::Torus, &cfg.newton) {
        Ok(out) => {
            let nontrivial = geo.h_norm(&out.field) >= S::of(10.0) * cfg.newton.tol;
            if out.residual <= cfg.residual_tol && nontrivial {
                j_at_critical = value_only(geo, measure, lambda, &out.field, Setting::Torus)?;
                critical_point = out.field;
                residual = out.residual;
                converged = true;
            } else if !nontrivial {
                failure = Some("polish collapsed to the trivial solution".into());
            } else {
                failure = Some(format!(
                    "polished residual {} above tolerance {}",
                    out.residual, cfg.residual_tol
                ));
            }
        }
        Err(e) => {
            failure = Some(format!("bounded Palais-Smale polish failed: {e}"));
        }
    }

    Ok(MinimaxResult {
        lambda,
        c_lambda,
        path,
        critical_point,
        residual,
        j_at_critical,
        history,
        converged,
        failure,
        inside_window,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityRow<S: Scalar> {
    pub lambda: S,
    pub c_lambda: S,
    pub ratio: S,
    /// Upward slack allowed by the achieved path-max gap.
    pub slack: S,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct MonotonicityTable<S: Scalar> {
    pub rows: Vec<MonotonicityRow<S>>,
    /// (index, excess) pairs where the ratio increased beyond tolerance.
    pub violations: Vec<(usize, S)>,
    /// Finite-difference estimates (midpoint lambda, dc/dlambda).
    pub derivative_estimates: Vec<(S, S)>,
}

/// Check that lambda -> c_lambda / lambda is non-increasing across a grid of
/// minimax runs, within tolerance plus the achieved minimax slack.
pub fn monotonicity_probe<S: Scalar>(results: &[MinimaxResult<S>]) -> MonotonicityTable<S> {
    let mut sorted: Vec<&MinimaxResult<S>> = results.iter().collect();
    sorted.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    if sorted.len() < 2 {
        return MonotonicityTable::default();
    }
    let rows: Vec<MonotonicityRow<S>> = sorted
        .iter()
        .map(|r| {
            let gap = (r.c_lambda - r.j_at_critical).max(S::zero());
            MonotonicityRow {
                lambda: r.lambda,
                c_lambda: r.c_lambda,
                ratio: r.c_lambda / r.lambda,
                slack: gap / r.lambda,
            }
        })
        .collect();
    let mut violations = Vec::new();
    let mut derivative_estimates = Vec::new();
    for i in 1..rows.len() {
        let allowed = S::of(1e-6) + rows[i - 1].slack + rows[i].slack;
        let excess = rows[i].ratio - rows[i - 1].ratio - allowed;
        if excess > S::zero() {
            violations.push((i, excess));
        }
        let dl = rows[i].lambda - rows[i - 1].lambda;
        if dl > S::zero() {
            derivative_estimates.push((
                (rows[i].lambda + rows[i - 1].lambda) * S::of(0.5),
                (rows[i].c_lambda - rows[i - 1].c_lambda) / dl,
            ));
        }
    }
    MonotonicityTable {
        rows,
        violations,
        derivative_estimates,
    }
}
