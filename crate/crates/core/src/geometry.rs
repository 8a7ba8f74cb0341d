//! Discretized domains: rectangle and flat torus on uniform grids, disc and
//! annulus on polar grids.
//!
//! All four builders use a finite-volume discretization, so the Laplacian is
//! self-adjoint in the cell-volume inner product by construction and the
//! discrete Dirichlet energy -<Lu, u>_w is an exact sum of face terms. Cell
//! areas tile the analytic area exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::scalar::Scalar;

pub type Point<S> = [S; 2];

const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Rectangle,
    Disc,
    Annulus,
    FlatTorus,
}

impl GeometryKind {
    pub fn is_closed(self) -> bool {
        matches!(self, GeometryKind::FlatTorus)
    }

    pub fn code(self) -> u8 {
        match self {
            GeometryKind::Rectangle => 0,
            GeometryKind::Disc => 1,
            GeometryKind::Annulus => 2,
            GeometryKind::FlatTorus => 3,
        }
    }
}

/// Which function space a field is expected to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Dirichlet,
    Torus,
}

/// Size parameters per kind; `n_theta` overrides the default angular count
/// of the polar grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Rectangle { sides: [f64; 2] },
    Disc { radius: f64, n_theta: Option<usize> },
    Annulus {
        r_in: f64,
        r_out: f64,
        n_theta: Option<usize>,
    },
    FlatTorus { periods: [f64; 2] },
}

impl DomainSpec {
    pub fn kind(&self) -> GeometryKind {
        match self {
            DomainSpec::Rectangle { .. } => GeometryKind::Rectangle,
            DomainSpec::Disc { .. } => GeometryKind::Disc,
            DomainSpec::Annulus { .. } => GeometryKind::Annulus,
            DomainSpec::FlatTorus { .. } => GeometryKind::FlatTorus,
        }
    }

    pub fn unit_torus() -> Self {
        DomainSpec::FlatTorus { periods: [1.0, 1.0] }
    }

    pub fn unit_disc() -> Self {
        DomainSpec::Disc { radius: 1.0, n_theta: None }
    }
}

/// Compressed sparse rows; boundary rows of Dirichlet kinds are identity.
#[derive(Debug, Clone)]
pub struct SparseOperator<S> {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
}

impl<S: Scalar> SparseOperator<S> {
    fn with_capacity(rows: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows + 1);
        row_ptr.push(0);
        Self {
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    fn push_row(&mut self, entries: &[(u32, S)]) {
        for &(c, v) in entries {
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn apply_into(&self, u: &[S], out: &mut [S]) {
        debug_assert_eq!(u.len(), self.n_rows());
        for i in 0..self.n_rows() {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = S::zero();
            for k in lo..hi {
                acc += self.vals[k] * u[self.cols[k] as usize];
            }
            out[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.n_rows())
            .map(|i| {
                self.row(i)
                    .find(|&(j, _)| j == i)
                    .map(|(_, v)| v)
                    .unwrap_or_else(S::zero)
            })
            .collect()
    }
}

/// A discretized domain or flat torus with its Laplacian.
#[derive(Debug, Clone)]
pub struct DiscreteGeometry<S: Scalar> {
    pub kind: GeometryKind,
    pub resolution: usize,
    pub spec: DomainSpec,
    pub nodes: Vec<Point<S>>,
    pub volume_weights: Vec<S>,
    pub interior_mask: Vec<bool>,
    laplacian: SparseOperator<S>,
    /// Symmetrically scaled negated Laplacian with unit diagonal; linear
    /// solves run on this form so the entry magnitudes stay O(1).
    scaled_neg_laplacian: SparseOperator<S>,
    /// sqrt of the negated-Laplacian diagonal (1 on boundary rows).
    row_scale: Vec<S>,
    /// Conformal factor log (identically zero for all built-in geometries).
    pub conformal_factor_log: Field<S>,
    pub total_volume: S,
    /// Characteristic cell extent, used for resolvability checks.
    pub mesh_scale: S,
    /// Primary grid step (radial step for polar kinds).
    pub grid_step: S,
    /// Ring layout of the graded polar kinds.
    polar: Option<Vec<RingMeta>>,
    interior_indices: Vec<usize>,
}

/// Build a discretized geometry at the given resolution (cells along the
/// primary direction; must be at least 8).
pub fn build_geometry<S: Scalar>(
    spec: &DomainSpec,
    resolution: usize,
) -> Result<DiscreteGeometry<S>> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::Construction(format!(
            "resolution {resolution} below minimum {MIN_RESOLUTION}"
        )));
    }
    match *spec {
        DomainSpec::Rectangle { sides } => build_rectangle(spec, resolution, sides),
        DomainSpec::FlatTorus { periods } => build_torus(spec, resolution, periods),
        DomainSpec::Disc { radius, n_theta } => build_disc(spec, resolution, radius, n_theta),
        DomainSpec::Annulus {
            r_in,
            r_out,
            n_theta,
        } => build_annulus(spec, resolution, r_in, r_out, n_theta),
    }
}

fn build_torus<S: Scalar>(
    spec: &DomainSpec,
    resolution: usize,
    periods: [f64; 2],
) -> Result<DiscreteGeometry<S>> {
    let [lx, ly] = periods;
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::Construction(format!(
            "torus periods ({lx}, {ly}) must be positive"
        )));
    }
    let nx = resolution;
    let ny = ((resolution as f64 * ly / lx).round() as usize).max(MIN_RESOLUTION);
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let n = nx * ny;

    let mut nodes = Vec::with_capacity(n);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push([S::of(i as f64 * hx), S::of(j as f64 * hy)]);
        }
    }
    let cell = S::of(hx * hy);
    let volume_weights = vec![cell; n];

    let cx = S::of(1.0 / (hx * hx));
    let cy = S::of(1.0 / (hy * hy));
    let diag = -(S::of(2.0) * (cx + cy));
    let mut lap = SparseOperator::with_capacity(n, 5 * n);
    let idx = |i: usize, j: usize| (j * nx + i) as u32;
    let mut row = Vec::with_capacity(5);
    for j in 0..ny {
        for i in 0..nx {
            row.clear();
            row.push((idx(i, j), diag));
            row.push((idx((i + nx - 1) % nx, j), cx));
            row.push((idx((i + 1) % nx, j), cx));
            row.push((idx(i, (j + ny - 1) % ny), cy));
            row.push((idx(i, (j + 1) % ny), cy));
            lap.push_row(&row);
        }
    }

    Ok(finish_geometry(
        GeometryKind::FlatTorus,
        resolution,
        *spec,
        nodes,
        volume_weights,
        vec![true; n],
        lap,
        hx.max(hy),
        hx.min(hy),
    ))
}

fn build_rectangle<S: Scalar>(
    spec: &DomainSpec,
    resolution: usize,
    sides: [f64; 2],
) -> Result<DiscreteGeometry<S>> {
    let [a, b] = sides;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Construction(format!(
            "rectangle sides ({a}, {b}) must be positive"
        )));
    }
    let nx = resolution;
    let ny = ((resolution as f64 * b / a).round() as usize).max(4);
    let hx = a / nx as f64;
    let hy = b / ny as f64;
    let n = (nx + 1) * (ny + 1);

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut interior = Vec::with_capacity(n);
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([S::of(i as f64 * hx), S::of(j as f64 * hy)]);
            let fx = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let fy = if j == 0 || j == ny { 0.5 } else { 1.0 };
            weights.push(S::of(hx * hy * fx * fy));
            interior.push(i > 0 && i < nx && j > 0 && j < ny);
        }
    }

    let cx = S::of(1.0 / (hx * hx));
    let cy = S::of(1.0 / (hy * hy));
    let diag = -(S::of(2.0) * (cx + cy));
    let mut lap = SparseOperator::with_capacity(n, 5 * n);
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut row = Vec::with_capacity(5);
    for j in 0..=ny {
        for i in 0..=nx {
            row.clear();
            if interior[idx(i, j) as usize] {
                row.push((idx(i, j), diag));
                row.push((idx(i - 1, j), cx));
                row.push((idx(i + 1, j), cx));
                row.push((idx(i, j - 1), cy));
                row.push((idx(i, j + 1), cy));
            } else {
                row.push((idx(i, j), S::one()));
            }
            lap.push_row(&row);
        }
    }

    Ok(finish_geometry(
        GeometryKind::Rectangle,
        resolution,
        *spec,
        nodes,
        weights,
        interior,
        lap,
        hx.max(hy),
        hx.min(hy),
    ))
}

/// One ring of a graded polar grid.
#[derive(Debug, Clone, Copy)]
pub struct RingMeta {
    /// Index of the ring's first node.
    pub start: usize,
    /// Angular cell count (doubles with radius so cells stay near-square).
    pub count: usize,
    pub radius: f64,
}

/// Angular count ladder: power-of-two multiples of 8 keeping the arc r dtheta
/// within a factor of two of the radial step.
fn graded_counts(radii: &[f64], h: f64, cap: Option<usize>) -> Vec<usize> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let cap = cap.map(|c| c.next_power_of_two().max(8));
    let mut counts = Vec::with_capacity(radii.len());
    let mut prev = 0usize;
    for &r in radii {
        let target = two_pi * r / h;
        let mut m = 8usize;
        while (m as f64) < target / 1.2 {
            m *= 2;
        }
        if let Some(c) = cap {
            m = m.min(c);
        }
        m = m.max(prev); // never coarsen outward
        counts.push(m);
        prev = m;
    }
    counts
}

/// Graded polar finite volumes shared by the disc and the annulus.
/// Cell areas tile the domain exactly; the first/last rings can be marked
/// as Dirichlet boundaries.
#[allow(clippy::type_complexity)]
fn polar_geometry<S: Scalar>(
    radii: &[f64],
    counts: &[usize],
    h: f64,
    has_center: bool,
    boundary_first: bool,
    outer_radius: f64,
    inner_radius: f64,
) -> (Vec<Point<S>>, Vec<S>, Vec<bool>, SparseOperator<S>, Vec<RingMeta>) {
    let n_rings = radii.len();
    let mut rings = Vec::with_capacity(n_rings);
    let mut nodes: Vec<Point<S>> = Vec::new();
    let mut weights: Vec<S> = Vec::new();
    let mut interior: Vec<bool> = Vec::new();

    if has_center {
        nodes.push([S::zero(), S::zero()]);
        weights.push(S::of(std::f64::consts::PI * h * h / 4.0));
        interior.push(true);
    }
    for (k, (&r, &m)) in radii.iter().zip(counts).enumerate() {
        let dtheta = 2.0 * std::f64::consts::PI / m as f64;
        let is_outer_boundary = k == n_rings - 1;
        let is_inner_boundary = boundary_first && k == 0;
        let area = if is_outer_boundary {
            0.5 * h * (outer_radius - h / 4.0) * dtheta
        } else if is_inner_boundary {
            0.5 * h * (inner_radius + h / 4.0) * dtheta
        } else {
            r * h * dtheta
        };
        rings.push(RingMeta {
            start: nodes.len(),
            count: m,
            radius: r,
        });
        for j in 0..m {
            let th = (j as f64 + 0.5) * dtheta;
            nodes.push([S::of(r * th.cos()), S::of(r * th.sin())]);
            weights.push(S::of(area));
            interior.push(!(is_outer_boundary || is_inner_boundary));
        }
    }

    let n_nodes = nodes.len();
    let mut lap = SparseOperator::with_capacity(n_nodes, 7 * n_nodes);
    // assemble face transmissibilities per row; every face value is shared
    // by both incident cells, which keeps the operator symmetric in the
    // volume-weighted inner product
    let idx = |k: usize, j: usize| -> usize {
        let ring = &rings[k];
        ring.start + (j % ring.count)
    };
    let mut row: Vec<(u32, S)> = Vec::with_capacity(8);

    if has_center {
        let m1 = rings[0].count;
        let dtheta = 2.0 * std::f64::consts::PI / m1 as f64;
        let c = (h / 2.0) * dtheta / h;
        let w = weights[0].to64();
        row.clear();
        row.push((0, S::of(-(c * m1 as f64) / w)));
        for j in 0..m1 {
            row.push((idx(0, j) as u32, S::of(c / w)));
        }
        lap.push_row(&row);
    }

    for k in 0..n_rings {
        let ring = rings[k];
        let m = ring.count;
        let dtheta = 2.0 * std::f64::consts::PI / m as f64;
        for j in 0..m {
            let me = ring.start + j;
            row.clear();
            if !interior[me] {
                row.push((me as u32, S::one()));
                lap.push_row(&row);
                continue;
            }
            let w = weights[me].to64();
            let mut diag = 0.0;
            // angular faces
            let c_ang = h / (ring.radius * dtheta);
            row.push((idx(k, (j + m - 1) % m) as u32, S::of(c_ang / w)));
            row.push((idx(k, j + 1) as u32, S::of(c_ang / w)));
            diag += 2.0 * c_ang;
            // inward face at r - h/2: aligned, coarser, or the center cell
            let r_in_face = ring.radius - h / 2.0;
            if k == 0 {
                // first ring around the center cell
                let c = r_in_face * dtheta / h;
                row.push((0u32, S::of(c / w)));
                diag += c;
            } else {
                let inner = rings[k - 1];
                let c = r_in_face * dtheta / h;
                let jj = if inner.count == m { j } else { j / 2 };
                row.push((idx(k - 1, jj) as u32, S::of(c / w)));
                diag += c;
            }
            // outward faces at r + h/2: aligned or split in two
            if k + 1 < n_rings {
                let outer = rings[k + 1];
                if outer.count == m {
                    let c = (ring.radius + h / 2.0) * dtheta / h;
                    row.push((idx(k + 1, j) as u32, S::of(c / w)));
                    diag += c;
                } else {
                    let dtheta_f = 2.0 * std::f64::consts::PI / outer.count as f64;
                    let c = (ring.radius + h / 2.0) * dtheta_f / h;
                    for &jj in &[2 * j, 2 * j + 1] {
                        row.push((idx(k + 1, jj) as u32, S::of(c / w)));
                        diag += c;
                    }
                }
            }
            row.push((me as u32, S::of(-diag / w)));
            lap.push_row(&row);
        }
    }

    (nodes, weights, interior, lap, rings)
}

fn build_disc<S: Scalar>(
    spec: &DomainSpec,
    resolution: usize,
    radius: f64,
    n_theta: Option<usize>,
) -> Result<DiscreteGeometry<S>> {
    if !(radius > 0.0) {
        return Err(Error::Construction(format!(
            "disc radius {radius} must be positive"
        )));
    }
    let n = resolution;
    let h = radius / n as f64;
    let radii: Vec<f64> = (1..=n).map(|k| k as f64 * h).collect();
    let counts = graded_counts(&radii, h, n_theta);
    let (nodes, weights, interior, lap, rings) =
        polar_geometry::<S>(&radii, &counts, h, true, false, radius, 0.0);
    let mut geo = finish_geometry(
        GeometryKind::Disc,
        resolution,
        *spec,
        nodes,
        weights,
        interior,
        lap,
        1.6 * h,
        h,
    );
    geo.polar = Some(rings);
    Ok(geo)
}

fn build_annulus<S: Scalar>(
    spec: &DomainSpec,
    resolution: usize,
    r_in: f64,
    r_out: f64,
    n_theta: Option<usize>,
) -> Result<DiscreteGeometry<S>> {
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::Construction(format!(
            "annulus radii need 0 < r_in < r_out, got ({r_in}, {r_out})"
        )));
    }
    let n = resolution;
    let h = (r_out - r_in) / n as f64;
    let radii: Vec<f64> = (0..=n).map(|k| r_in + k as f64 * h).collect();
    let counts = graded_counts(&radii, h, n_theta);
    let (nodes, weights, interior, lap, rings) =
        polar_geometry::<S>(&radii, &counts, h, false, true, r_out, r_in);
    let mut geo = finish_geometry(
        GeometryKind::Annulus,
        resolution,
        *spec,
        nodes,
        weights,
        interior,
        lap,
        1.6 * h,
        h,
    );
    geo.polar = Some(rings);
    Ok(geo)
}

#[allow(clippy::too_many_arguments)]
fn finish_geometry<S: Scalar>(
    kind: GeometryKind,
    resolution: usize,
    spec: DomainSpec,
    nodes: Vec<Point<S>>,
    volume_weights: Vec<S>,
    interior_mask: Vec<bool>,
    laplacian: SparseOperator<S>,
    mesh_scale: f64,
    grid_step: f64,
) -> DiscreteGeometry<S> {
    let total_volume = volume_weights.iter().copied().sum();
    let n = nodes.len();
    let polar = None;
    let interior_indices: Vec<usize> = (0..n).filter(|&i| interior_mask[i]).collect();

    // unit-diagonal scaling of the negated Laplacian restricted to the
    // admissible subspace (boundary rows stay identity, boundary columns
    // drop out under the zero-Dirichlet convention)
    let row_scale: Vec<S> = (0..n)
        .map(|i| {
            if interior_mask[i] {
                let d = laplacian
                    .row(i)
                    .find(|&(j, _)| j == i)
                    .map(|(_, v)| -v)
                    .unwrap_or_else(S::one);
                d.max(S::of(1e-300)).sqrt()
            } else {
                S::one()
            }
        })
        .collect();
    let mut scaled = SparseOperator::with_capacity(n, laplacian.cols.len());
    let mut row_buf: Vec<(u32, S)> = Vec::with_capacity(8);
    for i in 0..n {
        row_buf.clear();
        if interior_mask[i] {
            for (j, v) in laplacian.row(i) {
                if interior_mask[j] {
                    row_buf.push((j as u32, -v / (row_scale[i] * row_scale[j])));
                }
            }
        } else {
            row_buf.push((i as u32, S::one()));
        }
        scaled.push_row(&row_buf);
    }

    DiscreteGeometry {
        kind,
        resolution,
        spec,
        conformal_factor_log: Field::zeros(n),
        nodes,
        volume_weights,
        interior_mask,
        laplacian,
        scaled_neg_laplacian: scaled,
        row_scale,
        total_volume,
        mesh_scale: S::of(mesh_scale),
        grid_step: S::of(grid_step),
        polar,
        interior_indices,
    }
}

impl<S: Scalar> DiscreteGeometry<S> {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn interior_indices(&self) -> &[usize] {
        &self.interior_indices
    }

    pub fn laplacian(&self) -> &SparseOperator<S> {
        &self.laplacian
    }

    pub fn scaled_neg_laplacian(&self) -> &SparseOperator<S> {
        &self.scaled_neg_laplacian
    }

    pub fn row_scale(&self) -> &[S] {
        &self.row_scale
    }

    pub fn setting(&self) -> Setting {
        if self.kind.is_closed() {
            Setting::Torus
        } else {
            Setting::Dirichlet
        }
    }

    /// Apply the discrete Laplacian; Dirichlet boundary rows return the
    /// boundary values themselves (identity rows).
    ///
    /// Interior rows are evaluated in difference form, sum of
    /// A_ij (u_j - u_i), which is exact by the flux construction and avoids
    /// the cancellation the row-sum form suffers on the small polar cells.
    pub fn apply_laplacian(&self, u: &Field<S>) -> Result<Field<S>> {
        self.check_len(u)?;
        let mut out = vec![S::zero(); u.len()];
        for i in 0..u.len() {
            if self.interior_mask[i] {
                let ui = u.values[i];
                let mut acc = S::zero();
                for (j, a) in self.laplacian.row(i) {
                    if j != i {
                        acc += a * (u.values[j] - ui);
                    }
                }
                out[i] = acc;
            } else {
                out[i] = u.values[i];
            }
        }
        Ok(Field { values: out })
    }

    pub fn check_len(&self, u: &Field<S>) -> Result<()> {
        if u.len() != self.n_nodes() {
            return Err(Error::SizeMismatch {
                expected: self.n_nodes(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Volume-weighted inner product.
    pub fn wdot(&self, u: &Field<S>, v: &Field<S>) -> S {
        debug_assert_eq!(u.len(), self.n_nodes());
        debug_assert_eq!(v.len(), self.n_nodes());
        let mut acc = S::zero();
        for i in 0..u.len() {
            acc += self.volume_weights[i] * u.values[i] * v.values[i];
        }
        acc
    }

    pub fn integral(&self, u: &Field<S>) -> S {
        let mut acc = S::zero();
        for i in 0..u.len() {
            acc += self.volume_weights[i] * u.values[i];
        }
        acc
    }

    pub fn mean(&self, u: &Field<S>) -> S {
        self.integral(u) / self.total_volume
    }

    /// Energy inner product <u, v>_H = -<Lu, v>_w over interior rows.
    /// Defines the discrete Dirichlet energy; both fields must be admissible
    /// (zero on Dirichlet boundary nodes).
    pub fn h_inner(&self, u: &Field<S>, v: &Field<S>) -> S {
        debug_assert_eq!(u.len(), self.n_nodes());
        let mut acc = S::zero();
        for &i in &self.interior_indices {
            let ui = u.values[i];
            let mut lu = S::zero();
            for (j, a) in self.laplacian.row(i) {
                if j != i {
                    lu += a * (u.values[j] - ui);
                }
            }
            acc -= self.volume_weights[i] * lu * v.values[i];
        }
        acc
    }

    /// Discrete Dirichlet energy of an admissible field.
    pub fn dirichlet_energy(&self, u: &Field<S>) -> S {
        self.h_inner(u, u)
    }

    pub fn h_norm(&self, u: &Field<S>) -> S {
        self.dirichlet_energy(u).max(S::zero()).sqrt()
    }

    /// Shortest distance (periodic images on the torus, Euclidean otherwise).
    pub fn geodesic_distance(&self, p: Point<S>, q: Point<S>) -> S {
        match self.spec {
            DomainSpec::FlatTorus { periods } => {
                let mut acc = S::zero();
                for d in 0..2 {
                    let period = S::of(periods[d]);
                    let mut diff = (p[d] - q[d]).abs() % period;
                    if diff > period / S::of(2.0) {
                        diff = period - diff;
                    }
                    acc += diff * diff;
                }
                acc.sqrt()
            }
            _ => {
                let dx = p[0] - q[0];
                let dy = p[1] - q[1];
                (dx * dx + dy * dy).sqrt()
            }
        }
    }

    pub fn diameter(&self) -> S {
        match self.spec {
            DomainSpec::Rectangle { sides } => S::of((sides[0].powi(2) + sides[1].powi(2)).sqrt()),
            DomainSpec::Disc { radius, .. } => S::of(2.0 * radius),
            DomainSpec::Annulus { r_out, .. } => S::of(2.0 * r_out),
            DomainSpec::FlatTorus { periods } => {
                S::of(0.5 * (periods[0].powi(2) + periods[1].powi(2)).sqrt())
            }
        }
    }

    pub fn contains(&self, p: Point<S>) -> bool {
        let x = p[0].to64();
        let y = p[1].to64();
        match self.spec {
            DomainSpec::Rectangle { sides } => {
                x >= 0.0 && x <= sides[0] && y >= 0.0 && y <= sides[1]
            }
            DomainSpec::Disc { radius, .. } => (x * x + y * y).sqrt() <= radius,
            DomainSpec::Annulus { r_in, r_out, .. } => {
                let r = (x * x + y * y).sqrt();
                r >= r_in && r <= r_out
            }
            DomainSpec::FlatTorus { .. } => true,
        }
    }

    /// Distance from an interior point to the Dirichlet boundary
    /// (infinite on the torus).
    pub fn boundary_distance(&self, p: Point<S>) -> S {
        let x = p[0].to64();
        let y = p[1].to64();
        let r = (x * x + y * y).sqrt();
        match self.spec {
            DomainSpec::Rectangle { sides } => {
                let d = x.min(sides[0] - x).min(y).min(sides[1] - y);
                S::of(d.max(0.0))
            }
            DomainSpec::Disc { radius, .. } => S::of((radius - r).max(0.0)),
            DomainSpec::Annulus { r_in, r_out, .. } => S::of((r_out - r).min(r - r_in).max(0.0)),
            DomainSpec::FlatTorus { .. } => S::infinity(),
        }
    }

    /// Index of the node whose cell contains p.
    pub fn nearest_node(&self, p: Point<S>) -> Result<usize> {
        if !self.contains(p) {
            return Err(Error::Domain(format!(
                "point ({}, {}) outside the domain",
                p[0], p[1]
            )));
        }
        let x = p[0].to64();
        let y = p[1].to64();
        Ok(match self.spec {
            DomainSpec::FlatTorus { periods } => {
                let nx = self.resolution;
                let ny = self.n_nodes() / nx;
                let hx = periods[0] / nx as f64;
                let hy = periods[1] / ny as f64;
                let i = ((x / hx).round().rem_euclid(nx as f64)) as usize % nx;
                let j = ((y / hy).round().rem_euclid(ny as f64)) as usize % ny;
                j * nx + i
            }
            DomainSpec::Rectangle { sides } => {
                let nx = self.resolution;
                let ny = self.n_nodes() / (nx + 1) - 1;
                let hx = sides[0] / nx as f64;
                let hy = sides[1] / ny as f64;
                let i = (x / hx).round().clamp(0.0, nx as f64) as usize;
                let j = (y / hy).round().clamp(0.0, ny as f64) as usize;
                j * (nx + 1) + i
            }
            DomainSpec::Disc { radius, .. } => {
                let n = self.resolution;
                let h = radius / n as f64;
                let r = (x * x + y * y).sqrt();
                let k = (r / h).round().clamp(0.0, n as f64) as usize;
                if k == 0 {
                    0
                } else {
                    let rings = self.polar.as_ref().expect("disc stores ring metadata");
                    ring_node(&rings[k - 1], x, y)
                }
            }
            DomainSpec::Annulus { r_in, r_out, .. } => {
                let n = self.resolution;
                let h = (r_out - r_in) / n as f64;
                let r = (x * x + y * y).sqrt();
                let k = ((r - r_in) / h).round().clamp(0.0, n as f64) as usize;
                let rings = self.polar.as_ref().expect("annulus stores ring metadata");
                ring_node(&rings[k], x, y)
            }
        })
    }

    /// Indices of nodes within geodesic distance `radius` of `center`.
    pub fn ball_indices(&self, center: Point<S>, radius: S) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.geodesic_distance(self.nodes[i], center) <= radius)
            .collect()
    }

    pub fn field_zeros(&self) -> Field<S> {
        Field::zeros(self.n_nodes())
    }

    pub fn field_from_fn(&self, mut f: impl FnMut(Point<S>) -> S) -> Field<S> {
        Field {
            values: self.nodes.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Zero out Dirichlet boundary entries.
    pub fn impose_zero_boundary(&self, u: &mut Field<S>) {
        for i in 0..self.n_nodes() {
            if !self.interior_mask[i] {
                u.values[i] = S::zero();
            }
        }
    }

    /// Subtract the volume-weighted mean.
    pub fn project_mean_zero(&self, u: &Field<S>) -> Field<S> {
        let m = self.mean(u);
        Field {
            values: u.values.iter().map(|&v| v - m).collect(),
        }
    }

    /// Check the admissibility constraint of the given setting.
    pub fn check_admissible(&self, u: &Field<S>, setting: Setting) -> Result<()> {
        self.check_len(u)?;
        let scale = S::one().max(u.max_value().abs()).max(u.min_value().abs());
        match setting {
            Setting::Dirichlet => {
                if self.kind.is_closed() {
                    return Err(Error::Constraint(
                        "dirichlet setting on a closed geometry".into(),
                    ));
                }
                for i in 0..self.n_nodes() {
                    if !self.interior_mask[i] && u.values[i].abs() > S::of(1e-10) * scale {
                        return Err(Error::Constraint(format!(
                            "field is {} on a boundary node, expected 0",
                            u.values[i]
                        )));
                    }
                }
            }
            Setting::Torus => {
                if !self.kind.is_closed() {
                    return Err(Error::Constraint(
                        "torus setting on a bounded geometry".into(),
                    ));
                }
                let m = self.mean(u).abs();
                if m > S::of(1e-8) * scale {
                    return Err(Error::Constraint(format!(
                        "field mean {} is not zero",
                        self.mean(u)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn angle_index(x: f64, y: f64, n_theta: usize) -> usize {
    let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
    let th = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
    ((th / dtheta).round() as usize) % n_theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const PI: f64 = std::f64::consts::PI;

    fn unit_torus(res: usize) -> DiscreteGeometry<f64> {
        build_geometry(&DomainSpec::unit_torus(), res).unwrap()
    }

    #[test]
    fn rejects_too_coarse_and_bad_params() {
        assert!(build_geometry::<f64>(&DomainSpec::unit_torus(), 4).is_err());
        assert!(build_geometry::<f64>(
            &DomainSpec::Annulus { r_in: 1.0, r_out: 0.5, n_theta: None },
            32
        )
        .is_err());
        assert!(build_geometry::<f64>(&DomainSpec::Disc { radius: -1.0, n_theta: None }, 32)
            .is_err());
    }

    #[test]
    fn torus_volume_exact() {
        let geo = unit_torus(64);
        assert!((geo.total_volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disc_volume() {
        let geo: DiscreteGeometry<f64> =
            build_geometry(&DomainSpec::unit_disc(), 128).unwrap();
        assert!((geo.total_volume - PI).abs() / PI < 0.02);
        // the finite-volume cells actually tile the disc exactly
        assert!((geo.total_volume - PI).abs() < 1e-10);
    }

    #[test]
    fn annulus_volume() {
        let geo: DiscreteGeometry<f64> = build_geometry(
            &DomainSpec::Annulus { r_in: 0.5, r_out: 1.0, n_theta: None },
            128,
        )
        .unwrap();
        let exact = 0.75 * PI;
        assert!((geo.total_volume - exact).abs() / exact < 0.02);
        assert!((geo.total_volume - exact).abs() < 1e-10);
    }

    #[test]
    fn torus_laplacian_annihilates_constants() {
        let geo = unit_torus(32);
        let u = geo.field_from_fn(|_| 3.7);
        let lu = geo.apply_laplacian(&u).unwrap();
        for v in lu.values {
            assert!(v.abs() < 1e-12);
        }
        // row sums are zero
        for i in 0..geo.n_nodes() {
            let s: f64 = geo.laplacian().row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn torus_laplacian_of_sine() {
        let geo = unit_torus(64);
        let u = geo.field_from_fn(|p| (2.0 * PI * p[0]).sin());
        let lu = geo.apply_laplacian(&u).unwrap();
        // sampled sine is an exact eigenfield of the stencil; the discrete
        // eigenvalue is within O(h^2) of -4 pi^2
        let target = -4.0 * PI * PI;
        for i in 0..geo.n_nodes() {
            assert!(
                (lu.values[i] - target * u.values[i]).abs() < 0.01 * target.abs(),
                "node {i}"
            );
        }
    }

    #[test]
    fn rectangle_laplacian_of_quadratic() {
        let geo: DiscreteGeometry<f64> = build_geometry(
            &DomainSpec::Rectangle { sides: [1.0, 0.5] },
            64,
        )
        .unwrap();
        let u = geo.field_from_fn(|p| p[0] * (1.0 - p[0]));
        let lu = geo.apply_laplacian(&u).unwrap();
        for (i, &inside) in geo.interior_mask.iter().enumerate() {
            if inside {
                // second differences are exact on quadratics
                assert!((lu.values[i] + 2.0).abs() < 1e-9, "node {i}: {}", lu.values[i]);
            }
        }
    }

    #[test]
    fn laplacian_size_mismatch() {
        let geo = unit_torus(16);
        let u = Field::zeros(geo.n_nodes() + 1);
        assert!(matches!(
            geo.apply_laplacian(&u),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn weighted_symmetry_on_disc_and_torus() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for spec in [DomainSpec::unit_disc(), DomainSpec::unit_torus()] {
            let geo: DiscreteGeometry<f64> = build_geometry(&spec, 24).unwrap();
            for _ in 0..5 {
                let mut u = geo.field_from_fn(|_| rng.gen::<f64>() - 0.5);
                let mut v = geo.field_from_fn(|_| rng.gen::<f64>() - 0.5);
                geo.impose_zero_boundary(&mut u);
                geo.impose_zero_boundary(&mut v);
                let lu = geo.apply_laplacian(&u).unwrap();
                let lv = geo.apply_laplacian(&v).unwrap();
                let a = geo.wdot(&lu, &v);
                let b = geo.wdot(&u, &lv);
                let scale = a.abs().max(b.abs()).max(1.0);
                assert!((a - b).abs() < 1e-10 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn energy_matches_analytic_dirichlet_integral() {
        let geo = unit_torus(64);
        let u = geo.field_from_fn(|p| (2.0 * PI * p[0]).sin());
        // integral of |grad sin(2 pi x)|^2 over the unit torus
        let exact = 2.0 * PI * PI;
        let e = geo.dirichlet_energy(&u);
        assert!((e - exact).abs() / exact < 0.01, "energy {e}");
    }

    #[test]
    fn distances() {
        let torus = unit_torus(16);
        assert!((torus.geodesic_distance([0.1, 0.0], [0.9, 0.0]) - 0.2).abs() < 1e-12);
        let disc: DiscreteGeometry<f64> =
            build_geometry(&DomainSpec::unit_disc(), 16).unwrap();
        assert_eq!(disc.geodesic_distance([0.3, 0.2], [0.3, 0.2]), 0.0);
        let rect: DiscreteGeometry<f64> = build_geometry(
            &DomainSpec::Rectangle { sides: [4.0, 5.0] },
            16,
        )
        .unwrap();
        assert!((rect.geodesic_distance([0.0, 0.0], [3.0, 4.0]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_node_round_trips() {
        for spec in [
            DomainSpec::unit_torus(),
            DomainSpec::unit_disc(),
            DomainSpec::Rectangle { sides: [1.0, 1.0] },
            DomainSpec::Annulus { r_in: 0.5, r_out: 1.0, n_theta: None },
        ] {
            let geo: DiscreteGeometry<f64> = build_geometry(&spec, 16).unwrap();
            for &i in &[0usize, 1, geo.n_nodes() / 2, geo.n_nodes() - 1] {
                let j = geo.nearest_node(geo.nodes[i]).unwrap();
                assert_eq!(i, j, "{spec:?} node {i}");
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        let disc: DiscreteGeometry<f64> =
            build_geometry(&DomainSpec::unit_disc(), 16).unwrap();
        assert!(disc.nearest_node([2.0, 0.0]).is_err());
    }

    #[test]
    fn admissibility_checks() {
        let torus = unit_torus(16);
        let u = torus.field_from_fn(|p| (2.0 * PI * p[0]).sin());
        torus.check_admissible(&u, Setting::Torus).unwrap();
        let bad = torus.field_from_fn(|_| 1.0);
        assert!(torus.check_admissible(&bad, Setting::Torus).is_err());
        assert!(torus.check_admissible(&u, Setting::Dirichlet).is_err());
    }
}
