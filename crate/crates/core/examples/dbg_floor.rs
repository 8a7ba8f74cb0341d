use mflab_core::geometry::{build_geometry, DomainSpec};
use mflab_core::linsolve::{solve_poisson_tol, PoissonBc};

fn main() {
    for res in [96usize, 256] {
        let geo = build_geometry::<f64>(&DomainSpec::unit_disc(), res).unwrap();
        let f = geo.field_from_fn(|p| (3.0 * p[0]).cos() + p[1] * p[1]);
        for rtol in [1e-10, 3e-11, 1e-11] {
            let t0 = std::time::Instant::now();
            match solve_poisson_tol(&geo, &f, PoissonBc::DirichletZero, rtol, None) {
                Ok(u) => {
                    let lu = geo.apply_laplacian(&u).unwrap();
                    let mut rr = 0.0;
                    let mut ff = 0.0;
                    for &i in geo.interior_indices() {
                        rr += geo.volume_weights[i] * (lu.values[i] + f.values[i]).powi(2);
                        ff += geo.volume_weights[i] * f.values[i].powi(2);
                    }
                    println!(
                        "res {res} rtol {rtol:.0e}: true rel {:.3e} ({:.2}s)",
                        (rr / ff).sqrt(),
                        t0.elapsed().as_secs_f64()
                    );
                }
                Err(e) => println!("res {res} rtol {rtol:.0e}: {e} ({:.2}s)", t0.elapsed().as_secs_f64()),
            }
        }
    }
}
