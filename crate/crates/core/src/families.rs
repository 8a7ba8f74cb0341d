//! Analytic test families with unbounded energy: truncated logarithmic
//! profiles on bounded domains and concentrating bubbles on the torus.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::nonlinear_state;
use crate::geometry::{DiscreteGeometry, Point, Setting};
use crate::measure::CirculationMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    TruncatedGreen,
    Bubble,
}

/// One member of a test family, with its energy and log denominator frozen
/// at construction. J at any lambda is energy/2 - lambda * log_denominator.
#[derive(Debug, Clone)]
pub struct TestFamilyPoint<S: Scalar> {
    pub family: FamilyKind,
    /// r for the truncated profile, epsilon for the bubble.
    pub parameter: S,
    /// Angle along the curve (truncated family only).
    pub theta: Option<S>,
    /// Center of the profile.
    pub center: Point<S>,
    pub field: Field<S>,
    pub energy: S,
    pub log_denominator: S,
}

impl<S: Scalar> TestFamilyPoint<S> {
    pub fn j_value(&self, lambda: S) -> S {
        S::of(0.5) * self.energy - lambda * self.log_denominator
    }
}

/// Piecewise-linear closed curve; theta in [0, 2pi) picks the point at the
/// matching arclength fraction.
pub fn curve_point<S: Scalar>(curve: &[Point<S>], theta: S) -> Point<S> {
    assert!(curve.len() >= 2, "curve needs at least two points");
    let n = curve.len();
    let mut lengths = Vec::with_capacity(n);
    let mut total = S::zero();
    for i in 0..n {
        let a = curve[i];
        let b = curve[(i + 1) % n];
        let l = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        lengths.push(l);
        total += l;
    }
    let two_pi = S::of(2.0) * S::PI();
    let mut frac = (theta / two_pi).fract();
    if frac < S::zero() {
        frac += S::one();
    }
    let mut target = frac * total;
    for i in 0..n {
        if target <= lengths[i] || i == n - 1 {
            let a = curve[i];
            let b = curve[(i + 1) % n];
            let t = if lengths[i] > S::zero() {
                target / lengths[i]
            } else {
                S::zero()
            };
            return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        }
        target -= lengths[i];
    }
    curve[0]
}

/// Circle of n points at the mid radius of the annulus, the canonical
/// non-contractible curve.
pub fn annulus_mid_circle<S: Scalar>(geo: &DiscreteGeometry<S>, n: usize) -> Result<Vec<Point<S>>> {
    match geo.spec {
        crate::geometry::DomainSpec::Annulus { r_in, r_out, .. } => {
            let r = S::of(0.5 * (r_in + r_out));
            let two_pi = S::of(2.0) * S::PI();
            Ok((0..n)
                .map(|i| {
                    let th = two_pi * S::of_usize(i) / S::of_usize(n);
                    [r * th.cos(), r * th.sin()]
                })
                .collect())
        }
        _ => Err(Error::Construction(
            "mid-circle curve requires the annulus".into(),
        )),
    }
}

/// Default truncation-ball radius for a geometry.
pub fn default_profile_radius<S: Scalar>(geo: &DiscreteGeometry<S>) -> S {
    match geo.spec {
        crate::geometry::DomainSpec::Annulus { r_in, r_out, .. } => S::of(0.45 * (r_out - r_in)),
        crate::geometry::DomainSpec::Disc { radius, .. } => S::of(0.45 * radius),
        crate::geometry::DomainSpec::Rectangle { sides } => {
            S::of(0.45 * sides[0].min(sides[1]))
        }
        crate::geometry::DomainSpec::FlatTorus { .. } => geo.diameter() * S::of(0.25),
    }
}

/// Capped logarithmic profile supported on the ball B(center, eps0):
/// 4 log(1/(1-r)) inside the shrunk core, 4 log(1/|X|) in the shell,
/// 0 outside (X the rescaled offset from the center).
pub fn truncated_green_profile<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    center: Point<S>,
    eps0: S,
    r: S,
) -> Result<Field<S>> {
    if !(r >= S::zero() && r < S::one()) {
        return Err(Error::Domain(format!(
            "profile parameter r = {r} must lie in [0, 1)"
        )));
    }
    if !geo.contains(center) {
        return Err(Error::Domain("profile center outside the domain".into()));
    }
    if geo.boundary_distance(center) < eps0 {
        return Err(Error::Domain(format!(
            "ball of radius {eps0} around the center leaves the domain"
        )));
    }
    let four = S::of(4.0);
    let cap = four * (S::one() - r).ln().neg();
    let values = geo
        .nodes
        .iter()
        .map(|&p| {
            let d = geo.geodesic_distance(p, center) / eps0;
            if d >= S::one() {
                S::zero()
            } else if d <= S::one() - r {
                cap
            } else {
                -four * d.ln()
            }
        })
        .collect();
    Ok(Field { values })
}

/// Family member centered at the curve point gamma(theta).
pub fn truncated_green_family<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    curve: &[Point<S>],
    eps0: S,
    r: S,
    theta: S,
) -> Result<TestFamilyPoint<S>> {
    if geo.kind.is_closed() {
        return Err(Error::Construction(
            "truncated profiles live on bounded domains".into(),
        ));
    }
    for &p in curve {
        if !geo.contains(p) {
            return Err(Error::Domain("curve exits the domain".into()));
        }
    }
    let center = curve_point(curve, theta);
    let field = truncated_green_profile(geo, center, eps0, r)?;
    let energy = geo.dirichlet_energy(&field);
    let state = nonlinear_state(geo, measure, &field, Setting::Dirichlet)?;
    Ok(TestFamilyPoint {
        family: FamilyKind::TruncatedGreen,
        parameter: r,
        theta: Some(theta),
        center,
        field,
        energy,
        log_denominator: state.log_denominator,
    })
}

/// Concentrating bubble on the torus: log(eps^2/(eps^2 + d^2)^2) inside the
/// geodesic ball of radius r0, constant outside, mean-subtracted.
pub fn bubble_family<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    measure: &CirculationMeasure<S>,
    p0: Point<S>,
    r0: S,
    eps: S,
) -> Result<TestFamilyPoint<S>> {
    if !geo.kind.is_closed() {
        return Err(Error::Construction("bubbles live on the torus".into()));
    }
    let half_period = match geo.spec {
        crate::geometry::DomainSpec::FlatTorus { periods } => {
            S::of(0.5 * periods[0].min(periods[1]))
        }
        _ => unreachable!(),
    };
    if r0 > half_period {
        return Err(Error::Construction(format!(
            "bubble radius {r0} exceeds half the shortest period"
        )));
    }
    let min_eps = S::of(2.0) * geo.mesh_scale;
    if eps < min_eps {
        return Err(Error::UnderResolved(format!(
            "bubble width {eps} below twice the mesh scale {}",
            geo.mesh_scale
        )));
    }
    if eps > r0 {
        return Err(Error::Construction(format!(
            "bubble width {eps} exceeds the cap radius {r0}"
        )));
    }
    let e2 = eps * eps;
    let outside = (e2 / (e2 + r0 * r0).powi(2)).ln();
    let raw = Field {
        values: geo
            .nodes
            .iter()
            .map(|&p| {
                let d = geo.geodesic_distance(p, p0);
                if d < r0 {
                    (e2 / (e2 + d * d).powi(2)).ln()
                } else {
                    outside
                }
            })
            .collect(),
    };
    let field = geo.project_mean_zero(&raw);
    let energy = geo.dirichlet_energy(&field);
    let state = nonlinear_state(geo, measure, &field, Setting::Torus)?;
    Ok(TestFamilyPoint {
        family: FamilyKind::Bubble,
        parameter: eps,
        theta: None,
        center: p0,
        field,
        energy,
        log_denominator: state.log_denominator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, DomainSpec as DS};
    use crate::measure::CirculationMeasure;

    const PI: f64 = std::f64::consts::PI;

    fn annulus(res: usize) -> DiscreteGeometry<f64> {
        build_geometry(&DS::Annulus { r_in: 0.5, r_out: 1.0, n_theta: None }, res).unwrap()
    }

    #[test]
    fn zero_parameter_gives_zero_profile() {
        let geo = annulus(32);
        let curve = annulus_mid_circle(&geo, 64).unwrap();
        let p = CirculationMeasure::dirac(1.0);
        let fam = truncated_green_family(&geo, &p, &curve, 0.225, 0.0, 1.0).unwrap();
        assert_eq!(fam.energy, 0.0);
        assert!(fam.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn profile_energy_matches_log_rate() {
        let geo = annulus(128);
        let curve = annulus_mid_circle(&geo, 64).unwrap();
        let p = CirculationMeasure::dirac(1.0);
        for &r in &[0.8, 0.9] {
            let fam = truncated_green_family(&geo, &p, &curve, 0.225, r, 0.3).unwrap();
            let exact = -32.0 * PI * (1.0f64 - r).ln();
            let ratio = fam.energy / exact;
            assert!(
                (ratio - 1.0).abs() < 0.10,
                "r = {r}: energy {} vs {exact}",
                fam.energy
            );
        }
    }

    #[test]
    fn profile_rejects_oversized_ball() {
        let geo = annulus(32);
        let curve = annulus_mid_circle(&geo, 16).unwrap();
        let p = CirculationMeasure::dirac(1.0);
        assert!(truncated_green_family(&geo, &p, &curve, 0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn profile_rejects_curve_outside() {
        let geo = annulus(32);
        let p = CirculationMeasure::dirac(1.0);
        let bad = vec![[0.0f64, 0.0], [2.0, 0.0]];
        assert!(truncated_green_family(&geo, &p, &bad, 0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn bubble_energy_and_mass_against_quadrature_oracle() {
        let geo = build_geometry::<f64>(&DS::unit_torus(), 128).unwrap();
        let p = CirculationMeasure::dirac(1.0);
        let r0 = 0.25;
        let eps = 0.05;
        let fam = bubble_family(&geo, &p, [0.5, 0.5], r0, eps).unwrap();
        // closed-form continuum energy of the capped bubble
        let e2 = eps * eps;
        let exact = 16.0 * PI * ((1.0 + r0 * r0 / e2).ln() + e2 / (e2 + r0 * r0) - 1.0);
        assert!(
            (fam.energy - exact).abs() / exact < 0.1,
            "energy {} vs {exact}",
            fam.energy
        );
        // mean subtraction keeps the field admissible
        assert!(geo.mean(&fam.field).abs() < 1e-10);
    }

    #[test]
    fn bubble_width_guards() {
        let geo = build_geometry::<f64>(&DS::unit_torus(), 32).unwrap();
        let p = CirculationMeasure::dirac(1.0);
        assert!(matches!(
            bubble_family(&geo, &p, [0.5, 0.5], 0.25, 0.01),
            Err(Error::UnderResolved(_))
        ));
        // degenerate cap eps = r0 stays finite
        let fam = bubble_family(&geo, &p, [0.5, 0.5], 0.25, 0.25).unwrap();
        assert!(fam.field.is_finite());
        assert!(fam.energy.is_finite());
    }

    #[test]
    fn curve_point_walks_the_loop() {
        let square = vec![[0.0f64, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let p = curve_point(&square, 0.0);
        assert_eq!(p, [0.0, 0.0]);
        let q = curve_point(&square, PI);
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
    }
}
