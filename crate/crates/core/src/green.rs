//! Discrete Green's functions: Dirichlet on bounded kinds, zero-mean on the
//! torus, with an estimate of the regular part at the source and the closed
//! form on the disc for cross-validation.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{DiscreteGeometry, Point};
use crate::linsolve::{solve_poisson, PoissonBc};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GreenFunction<S: Scalar> {
    /// Requested source point.
    pub source_point: Point<S>,
    /// Node whose cell received the unit mass.
    pub source_node: usize,
    pub values: Field<S>,
    /// Estimate of the regular part at the source, by subtracting the
    /// logarithmic kernel on rings around the source and extrapolating.
    pub regular_part_at_source: S,
}

/// Solve for the Green's function with a volume-normalized point mass in the
/// cell containing `p`.
pub fn green_function<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    p: Point<S>,
) -> Result<GreenFunction<S>> {
    if !geo.contains(p) {
        return Err(Error::Domain(format!(
            "source ({}, {}) outside the domain",
            p[0], p[1]
        )));
    }
    if !geo.kind.is_closed() && geo.boundary_distance(p) <= geo.grid_step {
        return Err(Error::Domain(
            "source must lie strictly inside the domain".into(),
        ));
    }
    let node = geo.nearest_node(p)?;
    let mut f = geo.field_zeros();
    f.values[node] = S::one() / geo.volume_weights[node];

    let values = if geo.kind.is_closed() {
        let b = geo.project_mean_zero(&f);
        solve_poisson(geo, &b, PoissonBc::MeanZero)?
    } else {
        solve_poisson(geo, &f, PoissonBc::DirichletZero)?
    };

    let source = geo.nodes[node];
    let regular_part_at_source = estimate_regular_part(geo, &values, source);
    Ok(GreenFunction {
        source_point: p,
        source_node: node,
        values,
        regular_part_at_source,
    })
}

/// Ring-averaged values of G + log(r)/2pi at two radii, extrapolated to the
/// source in r^2. The angular average suppresses the lattice anisotropy.
fn estimate_regular_part<S: Scalar>(
    geo: &DiscreteGeometry<S>,
    g: &Field<S>,
    source: Point<S>,
) -> S {
    let h = geo.mesh_scale.to64();
    let two_pi = 2.0 * std::f64::consts::PI;
    let band = |lo: f64, hi: f64| -> Option<(f64, f64)> {
        let mut acc = 0.0;
        let mut w_acc = 0.0;
        let mut r_acc = 0.0;
        for i in 0..geo.n_nodes() {
            let r = geo.geodesic_distance(geo.nodes[i], source).to64();
            if r >= lo && r < hi {
                let w = geo.volume_weights[i].to64();
                acc += w * (g.values[i].to64() + r.ln() / two_pi);
                r_acc += w * r * r;
                w_acc += w;
            }
        }
        if w_acc > 0.0 {
            Some((acc / w_acc, r_acc / w_acc))
        } else {
            None
        }
    };
    let b1 = band(2.5 * h, 4.5 * h);
    let b2 = band(4.5 * h, 6.5 * h);
    match (b1, b2) {
        (Some((v1, r1sq)), Some((v2, r2sq))) => {
            // linear extrapolation in r^2 to r = 0
            S::of((v1 * r2sq - v2 * r1sq) / (r2sq - r1sq))
        }
        (Some((v1, _)), None) => S::of(v1),
        _ => S::nan(),
    }
}

/// Closed-form Green's function of the disc of radius `radius`, source `p`.
pub fn disc_green_analytic(x: [f64; 2], p: [f64; 2], radius: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let xs = [x[0] / radius, x[1] / radius];
    let ps = [p[0] / radius, p[1] / radius];
    let d = ((xs[0] - ps[0]).powi(2) + (xs[1] - ps[1]).powi(2)).sqrt();
    let p_norm2 = ps[0] * ps[0] + ps[1] * ps[1];
    if p_norm2 == 0.0 {
        let r = (xs[0] * xs[0] + xs[1] * xs[1]).sqrt();
        return (1.0 / r).ln() / two_pi;
    }
    // |1 - conj(p) x| in complex notation
    let re = 1.0 - (ps[0] * xs[0] + ps[1] * xs[1]);
    let im = ps[0] * xs[1] - ps[1] * xs[0];
    let m = (re * re + im * im).sqrt();
    (m / d).ln() / two_pi
}

/// Regular part of the disc Green's function at the source.
pub fn disc_regular_part_at(p: [f64; 2], radius: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let p2 = (p[0] * p[0] + p[1] * p[1]) / (radius * radius);
    (1.0 - p2).ln() / two_pi - radius.ln() / two_pi
}

/// Gradient of the regular part at the source (disc of radius `radius`).
pub fn disc_regular_part_gradient(p: [f64; 2], radius: f64) -> [f64; 2] {
    let two_pi = 2.0 * std::f64::consts::PI;
    let ps = [p[0] / radius, p[1] / radius];
    let p2 = ps[0] * ps[0] + ps[1] * ps[1];
    // grad_x (1/2pi) ln|1 - conj(p) x| evaluated at x = p
    let scale = -1.0 / (two_pi * (1.0 - p2) * radius);
    [scale * ps[0], scale * ps[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, DomainSpec as DS};

    #[test]
    fn disc_center_matches_log_kernel() {
        let geo = build_geometry::<f64>(&DS::unit_disc(), 128).unwrap();
        let g = green_function(&geo, [0.0, 0.0]).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        for &probe in &[[0.2, 0.0], [0.0, 0.5], [-0.4, 0.3]] {
            let i = geo.nearest_node(probe).unwrap();
            let r = (geo.nodes[i][0].powi(2) + geo.nodes[i][1].powi(2)).sqrt();
            let exact = (1.0 / r).ln() / two_pi;
            assert!(
                (g.values.values[i] - exact).abs() < 5e-3,
                "probe {probe:?}: {} vs {exact}",
                g.values.values[i]
            );
        }
        // h(0, 0) = 0 for the unit disc
        assert!(
            g.regular_part_at_source.abs() < 5e-3,
            "regular part {}",
            g.regular_part_at_source
        );
    }

    #[test]
    fn disc_off_center_matches_analytic() {
        let geo = build_geometry::<f64>(&DS::unit_disc(), 128).unwrap();
        let p = [0.3, 0.0];
        let g = green_function(&geo, p).unwrap();
        for &probe in &[[0.6, 0.1], [-0.2, -0.4], [0.0, 0.7]] {
            let i = geo.nearest_node(probe).unwrap();
            let exact = disc_green_analytic([geo.nodes[i][0], geo.nodes[i][1]], p, 1.0);
            assert!(
                (g.values.values[i] - exact).abs() < 5e-3,
                "probe {probe:?}"
            );
        }
        let exact_h = disc_regular_part_at(p, 1.0);
        assert!(
            (g.regular_part_at_source - exact_h).abs() < 5e-3,
            "h estimate {} vs {exact_h}",
            g.regular_part_at_source
        );
    }

    #[test]
    fn dirichlet_boundary_values_vanish() {
        let geo = build_geometry::<f64>(&DS::unit_disc(), 64).unwrap();
        let g = green_function(&geo, [0.3, 0.0]).unwrap();
        for i in 0..geo.n_nodes() {
            if !geo.interior_mask[i] {
                assert!(g.values.values[i].abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn torus_green_has_zero_mean() {
        let geo = build_geometry::<f64>(&DS::unit_torus(), 48).unwrap();
        let g = green_function(&geo, [0.5, 0.5]).unwrap();
        assert!(geo.mean(&g.values).abs() < 1e-10);
    }

    #[test]
    fn rejects_outside_source() {
        let geo = build_geometry::<f64>(&DS::unit_disc(), 16).unwrap();
        assert!(green_function(&geo, [1.5, 0.0]).is_err());
        assert!(green_function(&geo, [0.999, 0.0]).is_err());
    }
}
