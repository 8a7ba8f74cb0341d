//! Probability measure of vortex circulation intensities on [-1, 1].
//!
//! The measure is stored as point atoms plus weighted quadrature nodes for
//! any continuous part. Every integral the rest of the crate needs is a
//! weighted sum against these points, and all exponential integrals are
//! evaluated in shifted-log form so that arguments up to |t| ~ 1e4 never
//! overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Circulation distribution: atoms plus quadrature nodes, total weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: serde::de::DeserializeOwned"
))]
pub struct CirculationMeasure<S: Scalar> {
    /// (alpha, weight) point masses, pairwise distinct alphas, weight > 0.
    atoms: Vec<(S, S)>,
    /// (alpha, weight) quadrature nodes of the continuous part, weight >= 0.
    continuous_nodes: Vec<(S, S)>,
}

/// Which standing assumptions the measure satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionProfile<S: Scalar> {
    /// Support touches {-1, +1} (after which no rescaling in alpha is needed).
    pub supp_touches_pm1: bool,
    /// Support inside [0, 1] with a positive atom at alpha = 1.
    pub cal_h: bool,
    /// Weight of the atom at alpha = 1 (0 when absent).
    pub mass_at_one: S,
}

/// Sign of a quantity reported in log-magnitude form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

/// log |x| plus the sign of x; `Zero` carries log_abs = -inf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog<S: Scalar> {
    pub log_abs: S,
    pub sign: Sign,
}

impl<S: Scalar> SignedLog<S> {
    pub fn value(&self) -> S {
        match self.sign {
            Sign::Zero => S::zero(),
            Sign::Pos => self.log_abs.exp(),
            Sign::Neg => -self.log_abs.exp(),
        }
    }
}

impl<S: Scalar> CirculationMeasure<S> {
    /// Validate alpha ranges, positivity and distinctness, but not the
    /// total weight; `normalize` or `new` take care of that.
    pub fn new_raw(atoms: Vec<(S, S)>, continuous_nodes: Vec<(S, S)>) -> Result<Self> {
        let one = S::one();
        for &(a, w) in &atoms {
            if !(a.is_finite() && w.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite atom".into()));
            }
            if a < -one || a > one {
                return Err(Error::InvalidMeasure(format!(
                    "atom alpha {a} outside [-1, 1]"
                )));
            }
            if w <= S::zero() {
                return Err(Error::InvalidMeasure(format!(
                    "atom weight {w} must be positive"
                )));
            }
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(Error::InvalidMeasure(format!(
                        "duplicate atom at alpha {}",
                        atoms[i].0
                    )));
                }
            }
        }
        for &(a, w) in &continuous_nodes {
            if !(a.is_finite() && w.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite quadrature node".into()));
            }
            if a < -one || a > one {
                return Err(Error::InvalidMeasure(format!(
                    "node alpha {a} outside [-1, 1]"
                )));
            }
            if w < S::zero() {
                return Err(Error::InvalidMeasure(format!(
                    "node weight {w} must be nonnegative"
                )));
            }
        }
        if atoms.is_empty() && continuous_nodes.is_empty() {
            return Err(Error::InvalidMeasure("empty measure".into()));
        }
        Ok(Self {
            atoms,
            continuous_nodes,
        })
    }

    /// Validated probability measure; total weight must already be 1
    /// within 1e-12.
    pub fn new(atoms: Vec<(S, S)>, continuous_nodes: Vec<(S, S)>) -> Result<Self> {
        let m = Self::new_raw(atoms, continuous_nodes)?;
        m.validate_probability()?;
        Ok(m)
    }

    /// Single unit atom.
    pub fn dirac(alpha: S) -> Self {
        Self::new(vec![(alpha, S::one())], Vec::new()).expect("dirac is always valid")
    }

    /// Rescale all weights so they sum to 1; alphas unchanged.
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total_weight();
        if !(total > S::zero()) {
            return Err(Error::InvalidMeasure(format!(
                "total weight {total} is not positive"
            )));
        }
        let scale = S::one() / total;
        Ok(Self {
            atoms: self.atoms.iter().map(|&(a, w)| (a, w * scale)).collect(),
            continuous_nodes: self
                .continuous_nodes
                .iter()
                .map(|&(a, w)| (a, w * scale))
                .collect(),
        })
    }

    pub fn validate_probability(&self) -> Result<()> {
        let total = self.total_weight().to64();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL:.0e}"
            )));
        }
        Ok(())
    }

    pub fn total_weight(&self) -> S {
        self.points().map(|(_, w)| w).sum()
    }

    pub fn atoms(&self) -> &[(S, S)] {
        &self.atoms
    }

    pub fn continuous_nodes(&self) -> &[(S, S)] {
        &self.continuous_nodes
    }

    /// All (alpha, weight) points, atoms first.
    pub fn points(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.atoms
            .iter()
            .chain(self.continuous_nodes.iter())
            .copied()
    }

    /// Support points: weight strictly positive.
    pub fn support(&self) -> impl Iterator<Item = S> + '_ {
        self.points()
            .filter(|&(_, w)| w > S::zero())
            .map(|(a, _)| a)
    }

    pub fn n_points(&self) -> usize {
        self.atoms.len() + self.continuous_nodes.len()
    }

    /// Total weight carried by support points with alpha in [lo, hi].
    pub fn mass_in(&self, lo: S, hi: S) -> S {
        self.points()
            .filter(|&(a, _)| a >= lo && a <= hi)
            .map(|(_, w)| w)
            .sum()
    }

    /// Classify the measure against the standing support assumptions.
    ///
    /// An explicit atom at alpha = 1 (within `tol_support`) is required for
    /// the positive-unit-mass flag; a quadrature node drifting to 1 does not
    /// count.
    pub fn check_assumptions(&self, tol_support: S) -> AssumptionProfile<S> {
        let one = S::one();
        let supp_touches_pm1 = self.support().any(|a| a.abs() >= one - tol_support);
        let nonnegative = self.support().all(|a| a >= S::zero());
        let mass_at_one: S = self
            .atoms
            .iter()
            .filter(|&&(a, _)| (a - one).abs() <= tol_support)
            .map(|&(_, w)| w)
            .sum();
        let cal_h = nonnegative && mass_at_one > S::zero();
        AssumptionProfile {
            supp_touches_pm1,
            cal_h,
            mass_at_one,
        }
    }

    /// k-th moment of alpha.
    pub fn moment(&self, k: u32) -> S {
        self.points().map(|(a, w)| w * a.powi(k as i32)).sum()
    }

    /// log of the exponential moment at t, max-shifted so nothing overflows
    /// for |t| up to ~1e4.
    pub fn exp_moment(&self, t: S) -> Result<S> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("exp_moment at non-finite t = {t}")));
        }
        let shift = self
            .points()
            .filter(|&(_, w)| w > S::zero())
            .map(|(a, _)| a * t)
            .fold(S::neg_infinity(), S::max);
        if shift == S::neg_infinity() {
            // zero measure cannot happen for validated inputs
            return Err(Error::InvalidMeasure("measure has empty support".into()));
        }
        let sum: S = self
            .points()
            .map(|(a, w)| w * (a * t - shift).exp())
            .sum();
        Ok(shift + sum.ln())
    }

    /// log-magnitude and sign of the alpha-weighted exponential moment at t.
    pub fn weighted_exp_moment(&self, t: S) -> Result<SignedLog<S>> {
        if !t.is_finite() {
            return Err(Error::Domain(format!(
                "weighted_exp_moment at non-finite t = {t}"
            )));
        }
        let shift = self
            .points()
            .filter(|&(a, w)| w > S::zero() && a != S::zero())
            .map(|(a, _)| a * t)
            .fold(S::neg_infinity(), S::max);
        if shift == S::neg_infinity() {
            // measure concentrated at alpha = 0: the integrand vanishes
            return Ok(SignedLog {
                log_abs: S::neg_infinity(),
                sign: Sign::Zero,
            });
        }
        let mut pos = S::zero();
        let mut neg = S::zero();
        for (a, w) in self.points() {
            if a == S::zero() || w == S::zero() {
                continue;
            }
            let term = w * a.abs() * (a * t - shift).exp();
            if a > S::zero() {
                pos += term;
            } else {
                neg += term;
            }
        }
        let diff = pos - neg;
        if diff == S::zero() {
            return Ok(SignedLog {
                log_abs: S::neg_infinity(),
                sign: Sign::Zero,
            });
        }
        Ok(SignedLog {
            log_abs: shift + diff.abs().ln(),
            sign: if diff > S::zero() { Sign::Pos } else { Sign::Neg },
        })
    }

    /// log of the second-moment exponential integral at t (alpha^2 kernel);
    /// nonnegative integrand, so no sign bookkeeping.
    pub fn squared_exp_moment(&self, t: S) -> Result<S> {
        if !t.is_finite() {
            return Err(Error::Domain(format!(
                "squared_exp_moment at non-finite t = {t}"
            )));
        }
        let shift = self
            .points()
            .filter(|&(a, w)| w > S::zero() && a != S::zero())
            .map(|(a, _)| a * t)
            .fold(S::neg_infinity(), S::max);
        if shift == S::neg_infinity() {
            return Ok(S::neg_infinity());
        }
        let sum: S = self
            .points()
            .map(|(a, w)| w * a * a * (a * t - shift).exp())
            .sum();
        if sum == S::zero() {
            return Ok(S::neg_infinity());
        }
        Ok(shift + sum.ln())
    }
}

/// Named density families for the continuous part of a measure spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFamily {
    /// Constant density on [lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// Density 2*alpha on [0, 1].
    Linear,
}

impl DensityFamily {
    fn bounds(&self) -> (f64, f64) {
        match self {
            DensityFamily::Uniform { lo, hi } => (*lo, *hi),
            DensityFamily::Linear => (0.0, 1.0),
        }
    }

    fn density(&self, alpha: f64) -> f64 {
        match self {
            DensityFamily::Uniform { lo, hi } => 1.0 / (hi - lo),
            DensityFamily::Linear => 2.0 * alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Midpoint,
    Gauss,
}

/// Quadrature nodes (alpha, weight) integrating the named density over its
/// support; node weights approximate the density's probability mass.
pub fn density_nodes<S: Scalar>(
    family: DensityFamily,
    nodes: usize,
    rule: QuadratureRule,
) -> Result<Vec<(S, S)>> {
    if nodes == 0 {
        return Err(Error::InvalidMeasure("density needs at least one node".into()));
    }
    let (lo, hi) = family.bounds();
    if !(lo >= -1.0 && hi <= 1.0 && lo < hi) {
        return Err(Error::InvalidMeasure(format!(
            "density support [{lo}, {hi}] must sit inside [-1, 1]"
        )));
    }
    let base: Vec<(f64, f64)> = match rule {
        QuadratureRule::Midpoint => {
            let step = (hi - lo) / nodes as f64;
            (0..nodes)
                .map(|i| (lo + (i as f64 + 0.5) * step, step))
                .collect()
        }
        QuadratureRule::Gauss => gauss_legendre(nodes)
            .into_iter()
            .map(|(x, w)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (mid + half * x, half * w)
            })
            .collect(),
    };
    Ok(base
        .into_iter()
        .map(|(a, w)| (S::of(a), S::of(w * family.density(a))))
        .collect())
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = CirculationMeasure<f64>;

    fn mixed() -> M {
        M::new(vec![(1.0, 0.5), (0.5, 0.5)], vec![]).unwrap()
    }

    #[test]
    fn normalize_single_atom() {
        let raw = M::new_raw(vec![(1.0, 2.0)], vec![]).unwrap();
        let m = raw.normalize().unwrap();
        assert_eq!(m.atoms(), &[(1.0, 1.0)]);
    }

    #[test]
    fn normalize_symmetric_pair() {
        let raw = M::new_raw(vec![(1.0, 1.0), (0.5, 1.0)], vec![]).unwrap();
        let m = raw.normalize().unwrap();
        assert_eq!(m.atoms(), &[(1.0, 0.5), (0.5, 0.5)]);
    }

    #[test]
    fn midpoint_linear_density_sums_to_one() {
        // midpoint rule is exact on the linear density, so the raw weights
        // already integrate to 1
        let nodes = density_nodes::<f64>(DensityFamily::Linear, 100, QuadratureRule::Midpoint)
            .unwrap();
        let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12, "total = {total}");
        let m = M::new(vec![], nodes).unwrap();
        m.validate_probability().unwrap();
    }

    #[test]
    fn normalize_rejects_zero_total() {
        let raw = M::new_raw(vec![], vec![(0.3, 0.0), (0.7, 0.0)]).unwrap();
        assert!(matches!(raw.normalize(), Err(Error::InvalidMeasure(_))));
    }

    #[test]
    fn assumptions_dirac_one() {
        let p = M::dirac(1.0).check_assumptions(1e-12);
        assert!(p.supp_touches_pm1);
        assert!(p.cal_h);
        assert_eq!(p.mass_at_one, 1.0);
    }

    #[test]
    fn assumptions_negative_support_breaks_cal_h() {
        let m = M::new(vec![(1.0, 0.5), (-0.5, 0.5)], vec![]).unwrap();
        let p = m.check_assumptions(1e-12);
        assert!(p.supp_touches_pm1);
        assert!(!p.cal_h);
    }

    #[test]
    fn assumptions_mixed_measure() {
        let p = mixed().check_assumptions(1e-12);
        assert!(p.cal_h);
        assert_eq!(p.mass_at_one, 0.5);
    }

    #[test]
    fn quadrature_node_at_one_does_not_count_as_atom() {
        let m = M::new(vec![], vec![(1.0, 0.4), (0.5, 0.6)]).unwrap();
        let p = m.check_assumptions(1e-12);
        assert!(p.supp_touches_pm1);
        assert!(!p.cal_h);
        assert_eq!(p.mass_at_one, 0.0);
    }

    #[test]
    fn second_moment_values() {
        assert_eq!(M::dirac(1.0).moment(2), 1.0);
        // 0.5*1 + 0.5*0.25
        assert_eq!(mixed().moment(2), 0.625);
    }

    #[test]
    fn second_moment_of_linear_density() {
        // exact integral of 2a * a^2 over [0,1] is 1/2
        let nodes = density_nodes::<f64>(DensityFamily::Linear, 1000, QuadratureRule::Midpoint)
            .unwrap();
        let m = M::new(vec![], nodes).unwrap();
        assert!((m.moment(2) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn gauss_rule_is_sharper_than_midpoint() {
        let nodes = density_nodes::<f64>(DensityFamily::Linear, 16, QuadratureRule::Gauss)
            .unwrap();
        let m = M::new(vec![], nodes).unwrap();
        assert!((m.moment(2) - 0.5).abs() < 1e-12);
        assert!((m.moment(5) - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn exp_moment_dirac_and_zero() {
        assert!((M::dirac(1.0).exp_moment(3.0).unwrap() - 3.0).abs() < 1e-14);
        assert!(mixed().exp_moment(0.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn exp_moment_dominant_atom_expansion() {
        // log(0.5 e^2000 + 0.5 e^1000) = 2000 + log 0.5 up to e^-1000
        let v = mixed().exp_moment(2000.0).unwrap();
        assert!((v - (2000.0 + 0.5f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn exp_moment_rejects_non_finite() {
        assert!(mixed().exp_moment(f64::NAN).is_err());
        assert!(mixed().exp_moment(f64::INFINITY).is_err());
    }

    #[test]
    fn weighted_exp_moment_examples() {
        let d1 = M::dirac(1.0).weighted_exp_moment(0.0).unwrap();
        assert_eq!(d1.sign, Sign::Pos);
        assert!(d1.log_abs.abs() < 1e-14);

        let d0 = M::dirac(0.0).weighted_exp_moment(17.0).unwrap();
        assert_eq!(d0.sign, Sign::Zero);

        // direct sum oracle: 0.5 e + 0.25 e^{1/2}
        let v = mixed().weighted_exp_moment(1.0).unwrap().value();
        let oracle = 0.5 * 1.0f64.exp() + 0.5 * 0.5 * 0.5f64.exp();
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn dirac_reduction_is_exact() {
        let m = M::dirac(1.0);
        for &t in &[-7.5, 0.0, 1.0, 333.25] {
            let a = m.exp_moment(t).unwrap();
            let b = m.weighted_exp_moment(t).unwrap();
            assert_eq!(b.sign, Sign::Pos);
            assert_eq!(a, b.log_abs);
        }
    }

    #[test]
    fn normalization_property_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n_atoms = rng.gen_range(1..4);
            let n_nodes = rng.gen_range(0..8);
            let mut atoms = Vec::new();
            for i in 0..n_atoms {
                // distinct alphas by construction
                atoms.push((
                    -1.0 + 0.1 * i as f64 + rng.gen::<f64>() * 0.05,
                    rng.gen::<f64>() * 10.0 + 1e-3,
                ));
            }
            let nodes: Vec<_> = (0..n_nodes)
                .map(|_| (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>()))
                .collect();
            let m = M::new_raw(atoms, nodes).unwrap().normalize().unwrap();
            assert!((m.total_weight() - 1.0).abs() < 1e-12);
            m.validate_probability().unwrap();
        }
    }

    #[test]
    fn exp_moment_monotone_for_nonnegative_support() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let nodes: Vec<_> = (0..6).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
            let m = M::new_raw(vec![(1.0, 0.2)], nodes)
                .unwrap()
                .normalize()
                .unwrap();
            let ts = [-3.0, -1.0, 0.0, 0.5, 2.0, 10.0, 100.0];
            let mut prev = f64::NEG_INFINITY;
            for &t in &ts {
                let v = m.exp_moment(t).unwrap();
                assert!(v >= prev - 1e-12, "exp_moment not monotone at t={t}");
                prev = v;
                // derivative is the weighted moment, nonnegative here
                let d = m.weighted_exp_moment(t).unwrap();
                assert_ne!(d.sign, Sign::Neg);
            }
        }
    }

    #[test]
    fn tail_gap_asymptotics() {
        // for measures with unit-mass tau at alpha=1, exp_moment(t) - t -> log tau,
        // with error controlled by the gap to the next support point
        let cases: Vec<(M, f64, f64)> = vec![
            (mixed(), 0.5, 0.5),
            (
                M::new(vec![(1.0, 0.25), (0.9, 0.5), (0.3, 0.25)], vec![]).unwrap(),
                0.25,
                0.1,
            ),
        ];
        for (m, tau, gap) in cases {
            for &t in &[1e3, 1e4] {
                let v = m.exp_moment(t).unwrap() - t;
                let tol = 10.0 * (-gap * t).exp();
                assert!(
                    (v - tau.ln()).abs() <= tol.max(1e-12),
                    "t={t}: {} vs {}",
                    v,
                    tau.ln()
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        // degree-9 polynomial integrated exactly by 5 nodes
        let rule = gauss_legendre(5);
        let total: f64 = rule.iter().map(|&(x, w)| w * x.powi(8)).sum();
        assert!((total - 2.0 / 9.0).abs() < 1e-13);
        let weight_sum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((weight_sum - 2.0).abs() < 1e-13);
    }

    #[test]
    fn generic_scalar_smoke() {
        let m = CirculationMeasure::<f32>::dirac(1.0);
        assert!((m.exp_moment(3.0).unwrap() - 3.0).abs() < 1e-5);
    }
}
