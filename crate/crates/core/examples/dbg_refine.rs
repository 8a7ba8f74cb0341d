use mflab_core::geometry::{build_geometry, DomainSpec};
use mflab_core::linsolve::{solve_poisson_tol, PoissonBc};

fn main() {
    let geo = build_geometry::<f64>(&DomainSpec::unit_disc(), 256).unwrap();
    let f = geo.field_from_fn(|p| (3.0 * p[0]).cos() + p[1] * p[1]);
    // run once loose, then manually refine with instrumentation
    let mut u = solve_poisson_tol(&geo, &f, PoissonBc::DirichletZero, 1e-8, None).unwrap();
    let mut ff = 0.0;
    for &i in geo.interior_indices() {
        ff += geo.volume_weights[i] * f.values[i].powi(2);
    }
    let fnorm = ff.sqrt();
    for round in 0..6 {
        let lu = geo.apply_laplacian(&u).unwrap();
        let mut residual = geo.field_zeros();
        let mut rr = 0.0;
        let mut worst = (0usize, 0.0f64);
        for &i in geo.interior_indices() {
            let r = f.values[i] + lu.values[i];
            residual.values[i] = r;
            let c = geo.volume_weights[i] * r * r;
            rr += c;
            if c > worst.1 {
                worst = (i, c);
            }
        }
        let wnode = geo.nodes[worst.0];
        println!(
            "round {round}: rel {:.3e}, worst cell at ({:.3},{:.3}) r={:.3e} w={:.2e}",
            rr.sqrt() / fnorm,
            wnode[0],
            wnode[1],
            residual.values[worst.0],
            geo.volume_weights[worst.0]
        );
        let delta = solve_poisson_tol(&geo, &residual, PoissonBc::DirichletZero, 1e-8, None).unwrap();
        u.axpy_in_place(1.0, &delta);
    }
}
