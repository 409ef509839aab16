//! Domain types and constructors for every distribution family under test:
//! discrete joint laws given by a symmetric non-negative weight matrix,
//! bounded-support densities given by a kernel descriptor, the two-point
//! law behind the r > 2 failure, and the exponent regimes.

use crate::error::{Error, Result};
use crate::expr::{eval_expr, ExprAST};
use crate::kahan::KahanSum;
use crate::quad::{integrate_rect, QuadOptions, Rect};
use crate::real::Real;

/// |total mass - 1| tolerance accepted by the discrete constructors.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Tolerance for the density normalization check.
pub const DENSITY_NORMALIZATION_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// exponent regimes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// 0 < r <= 1: t -> t^r subadditive.
    Subadditive,
    /// 1 < r < 2: handled through convexity.
    Convex,
    /// r = 2: the covariance identity branch.
    Quadratic,
    /// r > 2: the inequality fails.
    Failure,
    /// r < 0: the final-remark regime.
    Negative,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Subadditive => "subadditive",
            Regime::Convex => "convex",
            Regime::Quadratic => "quadratic",
            Regime::Failure => "failure",
            Regime::Negative => "negative",
        }
    }
}

/// A moment exponent together with its regime classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RExponent<R> {
    value: R,
    regime: Regime,
}

impl<R: Real> RExponent<R> {
    pub fn new(value: R) -> Result<Self> {
        if !value.is_finite() || value == R::zero() {
            return Err(Error::RegimeError {
                r: Real::to_f64(value),
                expected: "finite nonzero r",
            });
        }
        let regime = if value < R::zero() {
            Regime::Negative
        } else if value <= R::one() {
            Regime::Subadditive
        } else if value < R::two() {
            Regime::Convex
        } else if value == R::two() {
            Regime::Quadratic
        } else {
            Regime::Failure
        };
        Ok(Self { value, regime })
    }

    pub fn value(&self) -> R {
        self.value
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// The subadditivity/convexity constant with |x+y|^r <= A_r(|x|^r + |y|^r),
    /// defined for 0 < r < 2.
    pub fn a_r(&self) -> Option<R> {
        match self.regime {
            Regime::Subadditive => Some(R::one()),
            Regime::Convex => Some(R::two().powf(self.value - R::one())),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// discrete joint laws
// ---------------------------------------------------------------------------

/// A symmetric joint law on finitely many atoms. `tail_mass_bound` is zero
/// for exactly finite models and carries the unseen mass of a truncated
/// countable model otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint<R> {
    atoms: Vec<R>,
    weights: Vec<Vec<R>>,
    tail_mass_bound: R,
}

impl<R: Real> DiscreteJoint<R> {
    /// Validating constructor; every builder funnels through here.
    pub fn new(atoms: Vec<R>, weights: Vec<Vec<R>>, tail_mass_bound: R) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::Precondition("at least one atom required".into()));
        }
        if weights.len() != n || weights.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be {n}x{n}"
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if atoms[i] == atoms[j] {
                    return Err(Error::DuplicateAtom(Real::to_f64(atoms[i])));
                }
            }
        }
        for (i, row) in weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !(w >= R::zero()) {
                    return Err(Error::NegativeWeight {
                        i,
                        j,
                        value: Real::to_f64(w),
                    });
                }
                if weights[j][i] != w {
                    return Err(Error::AsymmetricInput {
                        i,
                        j,
                        left: Real::to_f64(w),
                        right: Real::to_f64(weights[j][i]),
                    });
                }
            }
        }
        if tail_mass_bound < R::zero() {
            return Err(Error::Precondition("tail mass bound must be >= 0".into()));
        }
        let mut total = KahanSum::new();
        for row in &weights {
            for &w in row {
                total.add(w);
            }
        }
        let mass = total.value() + tail_mass_bound;
        if (mass - R::one()).abs() > R::of(NORMALIZATION_TOL) {
            return Err(Error::NotNormalized {
                total: Real::to_f64(mass),
            });
        }
        Ok(Self {
            atoms,
            weights,
            tail_mass_bound,
        })
    }

    pub fn n(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[R] {
        &self.atoms
    }

    pub fn weights(&self) -> &[Vec<R>] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> R {
        self.weights[i][j]
    }

    pub fn tail_mass_bound(&self) -> R {
        self.tail_mass_bound
    }

    pub fn is_truncated(&self) -> bool {
        self.tail_mass_bound > R::zero()
    }

    /// Set when a truncated model left more than 1% of its mass unseen.
    pub fn tail_warning(&self) -> bool {
        self.tail_mass_bound >= R::of(0.01)
    }

    /// Mass actually present in the truncation.
    pub fn total_mass(&self) -> R {
        let mut total = KahanSum::new();
        for row in &self.weights {
            for &w in row {
                total.add(w);
            }
        }
        total.value()
    }

    /// Row sums; by symmetry this is both marginal laws.
    pub fn marginal(&self) -> Vec<R> {
        self.weights
            .iter()
            .map(|row| {
                let mut s = KahanSum::new();
                for &w in row {
                    s.add(w);
                }
                s.value()
            })
            .collect()
    }

    pub fn max_abs_atom(&self) -> R {
        self.atoms
            .iter()
            .map(|a| a.abs())
            .fold(R::zero(), |m, a| m.max(a))
    }

    /// Matrix infinity norm (max absolute row sum).
    pub fn weight_inf_norm(&self) -> R {
        self.weights
            .iter()
            .map(|row| row.iter().map(|w| w.abs()).fold(R::zero(), |s, w| s + w))
            .fold(R::zero(), |m, s| m.max(s))
    }
}

/// Cauchy-kernel weights p_ij = d_i d_j / (c_i + c_j). With `normalize`
/// set, every d_i is scaled by 1/sqrt(S) where S is the raw total mass,
/// which scales the matrix by 1/S; otherwise the raw weights must already
/// sum to one.
pub fn build_cauchy_discrete<R: Real>(
    atoms: &[R],
    c: &[R],
    d: &[R],
    normalize: bool,
) -> Result<DiscreteJoint<R>> {
    let n = atoms.len();
    if c.len() != n || d.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "atoms/c/d lengths differ: {n}/{}/{}",
            c.len(),
            d.len()
        )));
    }
    for (k, &ck) in c.iter().enumerate() {
        if !(ck > R::zero()) {
            return Err(Error::NonPositiveParameter(format!(
                "c[{k}] = {}",
                Real::to_f64(ck)
            )));
        }
    }
    for (k, &dk) in d.iter().enumerate() {
        if !(dk > R::zero()) {
            return Err(Error::NonPositiveParameter(format!(
                "d[{k}] = {}",
                Real::to_f64(dk)
            )));
        }
    }
    let mut weights: Vec<Vec<R>> = (0..n)
        .map(|i| (0..n).map(|j| d[i] * d[j] / (c[i] + c[j])).collect())
        .collect();
    let mut total = KahanSum::new();
    for row in &weights {
        for &w in row {
            total.add(w);
        }
    }
    let s = total.value();
    if normalize {
        for row in weights.iter_mut() {
            for w in row.iter_mut() {
                *w /= s;
            }
        }
    } else if (s - R::one()).abs() > R::of(NORMALIZATION_TOL) {
        return Err(Error::NotNormalized {
            total: Real::to_f64(s),
        });
    }
    DiscreteJoint::new(atoms.to_vec(), weights, R::zero())
}

/// General symmetric PMF. The matrix is stored after exact symmetrization
/// (the average of M and its transpose); inputs asymmetric beyond 1e-12
/// are rejected rather than repaired.
pub fn build_general_discrete<R: Real>(atoms: &[R], weights: &[Vec<R>]) -> Result<DiscreteJoint<R>> {
    let n = atoms.len();
    if weights.len() != n || weights.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix must be {n}x{n}"
        )));
    }
    let sym_tol = R::of(1e-12);
    for i in 0..n {
        for j in 0..n {
            if (weights[i][j] - weights[j][i]).abs() > sym_tol {
                return Err(Error::AsymmetricInput {
                    i,
                    j,
                    left: Real::to_f64(weights[i][j]),
                    right: Real::to_f64(weights[j][i]),
                });
            }
            if !(weights[i][j] >= R::zero()) {
                return Err(Error::NegativeWeight {
                    i,
                    j,
                    value: Real::to_f64(weights[i][j]),
                });
            }
        }
    }
    let symmetrized: Vec<Vec<R>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (weights[i][j] + weights[j][i]) * R::half())
                .collect()
        })
        .collect();
    DiscreteJoint::new(atoms.to_vec(), symmetrized, R::zero())
}

/// Truncate a countable Cauchy-kernel model given by index rules to indices
/// 1..=m. The unseen mass becomes the tail bound; beyond 10% the truncation
/// is refused.
pub fn truncate_countable<R: Real>(
    rule_a: &ExprAST,
    rule_c: &ExprAST,
    rule_d: &ExprAST,
    m: usize,
) -> Result<DiscreteJoint<R>> {
    if m == 0 {
        return Err(Error::NonPositiveParameter("truncation size m = 0".into()));
    }
    let mut atoms = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m);
    for i in 1..=m {
        let idx = i as f64;
        atoms.push(R::of(eval_expr(rule_a, idx)?));
        let ci = eval_expr(rule_c, idx)?;
        let di = eval_expr(rule_d, idx)?;
        if !(ci > 0.0) {
            return Err(Error::NonPositiveParameter(format!("c({i}) = {ci}")));
        }
        if !(di > 0.0) {
            return Err(Error::NonPositiveParameter(format!("d({i}) = {di}")));
        }
        c.push(R::of(ci));
        d.push(R::of(di));
    }
    let n = atoms.len();
    let weights: Vec<Vec<R>> = (0..n)
        .map(|i| (0..n).map(|j| d[i] * d[j] / (c[i] + c[j])).collect())
        .collect();
    let mut total = KahanSum::new();
    for row in &weights {
        for &w in row {
            total.add(w);
        }
    }
    let partial = total.value();
    if partial > R::one() + R::of(NORMALIZATION_TOL) {
        return Err(Error::NotNormalized {
            total: Real::to_f64(partial),
        });
    }
    let tail = (R::one() - partial).max(R::zero());
    if tail >= R::of(0.1) {
        return Err(Error::TailTooHeavy {
            tail: Real::to_f64(tail),
        });
    }
    DiscreteJoint::new(atoms, weights, tail)
}

// ---------------------------------------------------------------------------
// two-point counterexample law
// ---------------------------------------------------------------------------

/// The two-point law placing mass p at A = 2^{2r/(r-2)} and q = 1 - p at -1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointLaw<R> {
    high_atom: R,
    p: R,
    q: R,
    r: RExponent<R>,
}

impl<R: Real> TwoPointLaw<R> {
    pub fn high_atom(&self) -> R {
        self.high_atom
    }

    pub fn low_atom(&self) -> R {
        -R::one()
    }

    pub fn p(&self) -> R {
        self.p
    }

    pub fn q(&self) -> R {
        self.q
    }

    pub fn r(&self) -> RExponent<R> {
        self.r
    }

    /// The joint law of two independent copies, as a discrete model with
    /// support ordered (A, -1).
    pub fn to_discrete(&self) -> DiscreteJoint<R> {
        let (p, q) = (self.p, self.q);
        DiscreteJoint::new(
            vec![self.high_atom, -R::one()],
            vec![vec![p * p, p * q], vec![p * q, q * q]],
            R::zero(),
        )
        .expect("two-point joint law is valid by construction")
    }
}

/// The closed-form witness that the inequality fails for r > 2:
/// A = 2^{2r/(r-2)}, p = r/(2^r A), q = 1 - p.
pub fn build_counterexample<R: Real>(r: RExponent<R>) -> Result<TwoPointLaw<R>> {
    if r.regime() != Regime::Failure {
        return Err(Error::RegimeError {
            r: Real::to_f64(r.value()),
            expected: "r > 2",
        });
    }
    let rv = r.value();
    let a = R::two().powf(R::two() * rv / (rv - R::two()));
    let p = rv / (R::two().powf(rv) * a);
    let q = R::one() - p;
    if !(p > R::zero() && p < R::half()) || !a.is_finite() {
        return Err(Error::Precondition(format!(
            "counterexample parameters out of range at r = {}: A = {}, p = {}",
            Real::to_f64(rv),
            Real::to_f64(a),
            Real::to_f64(p)
        )));
    }
    Ok(TwoPointLaw {
        high_atom: a,
        p,
        q,
        r,
    })
}

// ---------------------------------------------------------------------------
// density models
// ---------------------------------------------------------------------------

/// One piece of a piecewise-constant marginal density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalSegment<R> {
    pub lo: R,
    pub hi: R,
    pub height: R,
}

impl<R: Real> MarginalSegment<R> {
    pub fn mass(&self) -> R {
        (self.hi - self.lo) * self.height
    }
}

/// One bump of a mixture-of-uniform-products density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformComponent<R> {
    pub center: R,
    pub halfwidth: R,
    pub mass: R,
}

impl<R: Real> UniformComponent<R> {
    pub fn lo(&self) -> R {
        self.center - self.halfwidth
    }

    pub fn hi(&self) -> R {
        self.center + self.halfwidth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel<R> {
    /// f(x, y) = Z^{-1} d(x) d(y) / (c(x) + c(y)).
    Cauchy { c: ExprAST, d: ExprAST },
    /// f(x, y) = h(x) h(y) with piecewise-constant h.
    Product { segments: Vec<MarginalSegment<R>> },
    /// f(x, y) = sum_k m_k u_k(x) u_k(y) with u_k uniform on its interval.
    MixtureUniform { components: Vec<UniformComponent<R>> },
}

/// A symmetric joint density on D x D, D a finite disjoint union of bounded
/// closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel<R> {
    domain: Vec<(R, R)>,
    /// Finest interval partition on which the kernel is smooth; integration
    /// tensors these cells.
    cells: Vec<(R, R)>,
    kernel: Kernel<R>,
    normalization: R,
}

fn validate_intervals<R: Real>(intervals: &[(R, R)]) -> Result<()> {
    if intervals.is_empty() {
        return Err(Error::Precondition("domain must be non-empty".into()));
    }
    for &(lo, hi) in intervals {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Precondition(format!(
                "interval [{}, {}] must be bounded with positive length",
                Real::to_f64(lo),
                Real::to_f64(hi)
            )));
        }
    }
    for w in intervals.windows(2) {
        if !(w[0].1 < w[1].0) {
            return Err(Error::Precondition(format!(
                "intervals [{}, {}] and [{}, {}] are not disjoint",
                Real::to_f64(w[0].0),
                Real::to_f64(w[0].1),
                Real::to_f64(w[1].0),
                Real::to_f64(w[1].1)
            )));
        }
    }
    Ok(())
}

/// Points per interval of the validation grid for expression kernels.
const KERNEL_GRID: usize = 257;

impl<R: Real> DensityModel<R> {
    /// Cauchy-kernel density on an explicit domain. The kernel mass Z is
    /// computed by quadrature and folded into the normalization constant,
    /// mirroring the sqrt(S) rescaling rule of the discrete constructor.
    pub fn cauchy(mut domain: Vec<(R, R)>, c: ExprAST, d: ExprAST) -> Result<Self> {
        domain.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        validate_intervals(&domain)?;
        for &(lo, hi) in &domain {
            for k in 0..KERNEL_GRID {
                let t = Real::to_f64(lo)
                    + (Real::to_f64(hi) - Real::to_f64(lo)) * (k as f64) / ((KERNEL_GRID - 1) as f64);
                let cv = eval_expr(&c, t)?;
                if !(cv > 0.0) {
                    return Err(Error::NonPositiveParameter(format!("c({t}) = {cv}")));
                }
                let dv = eval_expr(&d, t)?;
                if !(dv > 0.0) {
                    return Err(Error::NonPositiveParameter(format!("d({t}) = {dv}")));
                }
            }
        }
        let mut model = Self {
            cells: domain.clone(),
            domain,
            kernel: Kernel::Cauchy { c, d },
            normalization: R::one(),
        };
        let z = model.raw_mass()?;
        if !(z > R::zero()) {
            return Err(Error::NonPositiveParameter(format!(
                "kernel mass {}",
                Real::to_f64(z)
            )));
        }
        model.normalization = R::one() / z;
        Ok(model)
    }

    /// Product density with a piecewise-constant marginal. The marginal must
    /// integrate to one; nothing is rescaled silently.
    pub fn product(mut segments: Vec<MarginalSegment<R>>) -> Result<Self> {
        segments.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap_or(std::cmp::Ordering::Equal));
        let intervals: Vec<(R, R)> = segments.iter().map(|s| (s.lo, s.hi)).collect();
        validate_intervals(&intervals)?;
        for s in &segments {
            if !(s.height > R::zero()) {
                return Err(Error::NonPositiveParameter(format!(
                    "segment height {}",
                    Real::to_f64(s.height)
                )));
            }
        }
        let mut mass = KahanSum::new();
        for s in &segments {
            mass.add(s.mass());
        }
        let total = mass.value();
        if (total - R::one()).abs() > R::of(DENSITY_NORMALIZATION_TOL) {
            return Err(Error::NotNormalized {
                total: Real::to_f64(total),
            });
        }
        Ok(Self {
            domain: intervals.clone(),
            cells: intervals,
            kernel: Kernel::Product { segments },
            normalization: R::one(),
        })
    }

    /// Mixture of uniform product bumps; masses must sum to one.
    pub fn mixture(components: Vec<UniformComponent<R>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Precondition("mixture needs a component".into()));
        }
        for comp in &components {
            if !(comp.halfwidth > R::zero()) {
                return Err(Error::NonPositiveParameter(format!(
                    "halfwidth {}",
                    Real::to_f64(comp.halfwidth)
                )));
            }
            if !(comp.mass > R::zero()) {
                return Err(Error::NonPositiveParameter(format!(
                    "mass {}",
                    Real::to_f64(comp.mass)
                )));
            }
        }
        let mut mass = KahanSum::new();
        for comp in &components {
            mass.add(comp.mass);
        }
        let total = mass.value();
        if (total - R::one()).abs() > R::of(DENSITY_NORMALIZATION_TOL) {
            return Err(Error::NotNormalized {
                total: Real::to_f64(total),
            });
        }

        // merge overlapping component intervals into a disjoint union
        let mut spans: Vec<(R, R)> = components.iter().map(|c| (c.lo(), c.hi())).collect();
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut domain: Vec<(R, R)> = Vec::new();
        for (lo, hi) in spans {
            match domain.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => domain.push((lo, hi)),
            }
        }
        validate_intervals(&domain)?;

        // split at every component edge so each cell sees a constant set of bumps
        let mut edges: Vec<R> = components.iter().flat_map(|c| [c.lo(), c.hi()]).collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        edges.dedup();
        let mut cells = Vec::new();
        for &(lo, hi) in &domain {
            let mut prev = lo;
            for &e in edges.iter().filter(|&&e| e > lo && e < hi) {
                cells.push((prev, e));
                prev = e;
            }
            cells.push((prev, hi));
        }

        Ok(Self {
            domain,
            cells,
            kernel: Kernel::MixtureUniform { components },
            normalization: R::one(),
        })
    }

    pub fn domain(&self) -> &[(R, R)] {
        &self.domain
    }

    pub fn cells(&self) -> &[(R, R)] {
        &self.cells
    }

    pub fn kernel(&self) -> &Kernel<R> {
        &self.kernel
    }

    pub fn normalization(&self) -> R {
        self.normalization
    }

    pub fn contains(&self, x: R) -> bool {
        self.domain.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    /// Joint density value; zero outside D^2. Expression evaluation failures
    /// surface as NaN so quadrature reports them instead of hiding them.
    pub fn density(&self, x: R, y: R) -> R {
        if !self.contains(x) || !self.contains(y) {
            return R::zero();
        }
        match &self.kernel {
            Kernel::Cauchy { c, d } => {
                let cx = eval_or_nan(c, x);
                let cy = eval_or_nan(c, y);
                let dx = eval_or_nan(d, x);
                let dy = eval_or_nan(d, y);
                self.normalization * dx * dy / (cx + cy)
            }
            Kernel::Product { .. } => self.marginal_density(x) * self.marginal_density(y),
            Kernel::MixtureUniform { components } => {
                let mut s = R::zero();
                for comp in components {
                    if x >= comp.lo() && x <= comp.hi() && y >= comp.lo() && y <= comp.hi() {
                        let u = R::one() / (R::two() * comp.halfwidth);
                        s += comp.mass * u * u;
                    }
                }
                s
            }
        }
    }

    /// Marginal density of either coordinate where it has a closed form;
    /// the Cauchy kernel marginal requires quadrature and is not offered here.
    pub fn marginal_density(&self, x: R) -> R {
        match &self.kernel {
            Kernel::Cauchy { .. } => {
                let opts = QuadOptions::with_rel_tol(R::of(1e-10));
                let mut total = R::zero();
                for &(lo, hi) in &self.cells {
                    total += crate::quad::integrate(|y| self.density(x, y), lo, hi, &opts).value;
                }
                total
            }
            Kernel::Product { segments } => {
                for s in segments {
                    if x >= s.lo && x <= s.hi {
                        return s.height;
                    }
                }
                R::zero()
            }
            Kernel::MixtureUniform { components } => {
                let mut t = R::zero();
                for comp in components {
                    if x >= comp.lo() && x <= comp.hi() {
                        t += comp.mass / (R::two() * comp.halfwidth);
                    }
                }
                t
            }
        }
    }

    /// Marginal probability of the interval [lo, hi].
    pub fn marginal_mass_on(&self, lo: R, hi: R) -> R {
        match &self.kernel {
            Kernel::Product { segments } => {
                let mut m = R::zero();
                for s in segments {
                    let a = s.lo.max(lo);
                    let b = s.hi.min(hi);
                    if b > a {
                        m += (b - a) * s.height;
                    }
                }
                m
            }
            Kernel::MixtureUniform { components } => {
                let mut m = R::zero();
                for comp in components {
                    let a = comp.lo().max(lo);
                    let b = comp.hi().min(hi);
                    if b > a {
                        m += comp.mass * (b - a) / (R::two() * comp.halfwidth);
                    }
                }
                m
            }
            Kernel::Cauchy { .. } => {
                let opts = QuadOptions::with_rel_tol(R::of(1e-9));
                let mut m = R::zero();
                for &(clo, chi) in &self.cells {
                    let a = clo.max(lo);
                    let b = chi.min(hi);
                    if b > a {
                        m += crate::quad::integrate(|x| self.marginal_density(x), a, b, &opts)
                            .value;
                    }
                }
                m
            }
        }
    }

    pub fn max_abs_support(&self) -> R {
        self.domain
            .iter()
            .flat_map(|&(lo, hi)| [lo.abs(), hi.abs()])
            .fold(R::zero(), |m, v| m.max(v))
    }

    /// Total mass of the kernel before normalization.
    fn raw_mass(&self) -> Result<R> {
        let opts = QuadOptions::with_rel_tol(R::of(1e-11));
        let mut total = KahanSum::new();
        for &(alo, ahi) in &self.cells {
            for &(blo, bhi) in &self.cells {
                let r = integrate_rect(
                    |x, y| self.density(x, y),
                    &Rect {
                        x0: alo,
                        x1: ahi,
                        y0: blo,
                        y1: bhi,
                    },
                    &opts,
                );
                r.checked(opts.rel_tol)?;
                total.add(r.value);
            }
        }
        Ok(total.value())
    }

    /// Recompute the total mass by quadrature; equals one for a valid model.
    pub fn mass_check(&self) -> Result<R> {
        self.raw_mass()
    }
}

fn eval_or_nan<R: Real>(ast: &ExprAST, x: R) -> R {
    match eval_expr(ast, Real::to_f64(x)) {
        Ok(v) => R::of(v),
        Err(_) => R::nan(),
    }
}

/// The smoothed counterexample: atoms replaced by uniform bumps of
/// half-width epsilon, giving a product density with marginal mass q on the
/// low interval and p on the high one.
pub fn build_smoothed<R: Real>(law: &TwoPointLaw<R>, epsilon: R) -> Result<DensityModel<R>> {
    if !(epsilon > R::zero() && epsilon < R::half()) {
        return Err(Error::EpsilonOutOfRange {
            epsilon: Real::to_f64(epsilon),
        });
    }
    let a = law.high_atom();
    let two_eps = R::two() * epsilon;
    DensityModel::product(vec![
        MarginalSegment {
            lo: -R::one() - epsilon,
            hi: -R::one() + epsilon,
            height: law.q() / two_eps,
        },
        MarginalSegment {
            lo: a - epsilon,
            hi: a + epsilon,
            height: law.p() / two_eps,
        },
    ])
}

/// Independent uniforms on [1, 2]: the density model of the negative-r remark.
pub fn build_uniform_remark<R: Real>() -> DensityModel<R> {
    DensityModel::product(vec![MarginalSegment {
        lo: R::one(),
        hi: R::two(),
        height: R::one(),
    }])
    .expect("unit square density is valid")
}

// ---------------------------------------------------------------------------
// unified model handle
// ---------------------------------------------------------------------------

/// Either model family, as consumed by the verification pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<R> {
    Discrete(DiscreteJoint<R>),
    Density(DensityModel<R>),
}

impl<R: Real> Model<R> {
    pub fn as_discrete(&self) -> Option<&DiscreteJoint<R>> {
        match self {
            Model::Discrete(m) => Some(m),
            Model::Density(_) => None,
        }
    }

    pub fn as_density(&self) -> Option<&DensityModel<R>> {
        match self {
            Model::Density(m) => Some(m),
            Model::Discrete(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn single_atom_normalization_forces_d_squared() {
        // d^2 = 2c makes the single weight equal one
        let m = build_cauchy_discrete(&[5.0f64], &[1.0], &[2.0f64.sqrt()], false).unwrap();
        assert!((m.weight(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_c_gives_product_law() {
        // c constant: p_ij = d_i d_j / 2, rank one
        let d = [0.9f64, 2.0f64.sqrt() - 0.9];
        let m = build_cauchy_discrete(&[0.0f64, 1.0], &[1.0, 1.0], &d, false).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.weight(i, j) - d[i] * d[j] / 2.0).abs() < 1e-15);
            }
        }
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_three_atom_matches_direct_sum() {
        // S = sum 1/(c_i + c_j) over c = (1,2,3) is 149/60 by direct summation
        let m = build_cauchy_discrete(
            &[1.0f64, 2.0, 3.0],
            &[1.0, 2.0, 3.0],
            &[1.0, 1.0, 1.0],
            true,
        )
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let s = 149.0 / 60.0;
        let c = [1.0, 2.0, 3.0];
        for i in 0..3 {
            for j in 0..3 {
                let expect = 1.0 / (c[i] + c[j]) / s;
                assert!((m.weight(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unnormalized_rejected() {
        let err = build_cauchy_discrete(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 1.0], false).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }

    #[test]
    fn duplicate_atoms_rejected() {
        let err = build_cauchy_discrete(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], true).unwrap_err();
        assert!(matches!(err, Error::DuplicateAtom(_)));
    }

    #[test]
    fn general_discrete_accepts_counterexample_matrix() {
        let (p, q) = (3.0f64 / 512.0, 509.0f64 / 512.0);
        let m = build_general_discrete(
            &[64.0f64, -1.0],
            &[vec![p * p, p * q], vec![p * q, q * q]],
        )
        .unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_discrete_point_mass() {
        let m = build_general_discrete(&[0.0], &[vec![1.0]]).unwrap();
        assert_eq!(m.n(), 1);
    }

    #[test]
    fn general_discrete_indefinite_pmf_is_still_a_pmf() {
        // positivity is a separate check; the constructor only validates PMF-ness
        let m = build_general_discrete(&[0.0, 1.0], &[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert_eq!(m.n(), 2);
    }

    #[test]
    fn asymmetric_rejected() {
        let err =
            build_general_discrete(&[0.0, 1.0], &[vec![0.25, 0.30], vec![0.20, 0.25]]).unwrap_err();
        assert!(matches!(err, Error::AsymmetricInput { .. }));
    }

    #[test]
    fn truncation_tail_matches_geometric_series() {
        // d_i = sqrt(2) 2^{-i}, c_i = 1: p_ij = 2^{-i-j}, tail(m) = 1-(1-2^{-m})^2
        let a = parse_expr("x").unwrap();
        let c = parse_expr("1").unwrap();
        let d = parse_expr("sqrt(2)*2^-x").unwrap();
        let m10: DiscreteJoint<f64> = truncate_countable(&a, &c, &d, 10).unwrap();
        let m20: DiscreteJoint<f64> = truncate_countable(&a, &c, &d, 20).unwrap();
        let tail = |m: i32| 1.0 - (1.0 - 0.5f64.powi(m)).powi(2);
        assert!((m10.tail_mass_bound() - tail(10)).abs() < 1e-12);
        assert!((m20.tail_mass_bound() - tail(20)).abs() < 1e-12);
        assert!(m20.tail_mass_bound() < m10.tail_mass_bound());
        assert!(!m10.tail_warning());
    }

    #[test]
    fn truncation_size_zero_rejected() {
        let a = parse_expr("x").unwrap();
        let err = truncate_countable::<f64>(&a, &a, &a, 0).unwrap_err();
        assert!(matches!(err, Error::NonPositiveParameter(_)));
    }

    #[test]
    fn truncation_forwards_domain_errors() {
        let a = parse_expr("log(x-5)").unwrap();
        let c = parse_expr("1").unwrap();
        let d = parse_expr("1").unwrap();
        let err = truncate_countable::<f64>(&a, &c, &d, 10).unwrap_err();
        assert!(matches!(err, Error::DomainError { .. }));
    }

    #[test]
    fn heavy_tail_rejected() {
        // d_i = 2^{-i} alone gives total (1-2^-m)^2 / 2 < 1/2, tail > 0.1
        let a = parse_expr("x").unwrap();
        let c = parse_expr("1").unwrap();
        let d = parse_expr("2^-x").unwrap();
        let err = truncate_countable::<f64>(&a, &c, &d, 10).unwrap_err();
        assert!(matches!(err, Error::TailTooHeavy { .. }));
    }

    #[test]
    fn counterexample_r3_closed_form() {
        let r = RExponent::new(3.0f64).unwrap();
        let law = build_counterexample(r).unwrap();
        assert_eq!(law.high_atom(), 64.0);
        assert_eq!(law.p(), 3.0 / 512.0);
        assert_eq!(law.q(), 509.0 / 512.0);
        assert_eq!(law.low_atom(), -1.0);
    }

    #[test]
    fn counterexample_r4_closed_form() {
        let r = RExponent::new(4.0f64).unwrap();
        let law = build_counterexample(r).unwrap();
        assert_eq!(law.high_atom(), 16.0);
        assert_eq!(law.p(), 1.0 / 64.0);
        assert_eq!(law.q(), 63.0 / 64.0);
    }

    #[test]
    fn counterexample_requires_failure_regime() {
        let r = RExponent::new(2.0f64).unwrap();
        assert!(matches!(
            build_counterexample(r),
            Err(Error::RegimeError { .. })
        ));
    }

    #[test]
    fn p_below_half_on_log_grid() {
        let mut r = 2.0f64;
        while r <= 64.0 {
            r *= 1.17;
            let law = build_counterexample(RExponent::new(r).unwrap()).unwrap();
            assert!(law.p() > 0.0 && law.p() < 0.5, "p out of range at r={r}");
            assert!(law.high_atom() > 1.0);
        }
    }

    #[test]
    fn smoothed_r3_domain_and_masses() {
        let law = build_counterexample(RExponent::new(3.0f64).unwrap()).unwrap();
        let m = build_smoothed(&law, 0.1).unwrap();
        assert_eq!(m.domain().len(), 2);
        let (lo0, hi0) = m.domain()[0];
        let (lo1, hi1) = m.domain()[1];
        assert!((lo0 + 1.1).abs() < 1e-12 && (hi0 + 0.9).abs() < 1e-12);
        assert!((lo1 - 63.9).abs() < 1e-12 && (hi1 - 64.1).abs() < 1e-12);
        // marginal masses (q, p)
        assert!((m.marginal_mass_on(lo0, hi0) - law.q()).abs() < 1e-12);
        assert!((m.marginal_mass_on(lo1, hi1) - law.p()).abs() < 1e-12);
        // marginal integrates to one
        let total = m.marginal_mass_on(lo0, hi0) + m.marginal_mass_on(lo1, hi1);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_epsilon_bounds() {
        let law = build_counterexample(RExponent::new(3.0f64).unwrap()).unwrap();
        assert!(matches!(
            build_smoothed(&law, 0.5),
            Err(Error::EpsilonOutOfRange { .. })
        ));
        assert!(matches!(
            build_smoothed(&law, 0.0),
            Err(Error::EpsilonOutOfRange { .. })
        ));
    }

    #[test]
    fn uniform_remark_density() {
        let m: DensityModel<f64> = build_uniform_remark();
        assert_eq!(m.density(1.5, 1.5), 1.0);
        assert_eq!(m.density(1.25, 1.75), m.density(1.75, 1.25));
        assert!((m.mass_check().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cauchy_density_normalizes() {
        let c = parse_expr("x").unwrap();
        let d = parse_expr("1").unwrap();
        let m: DensityModel<f64> = DensityModel::cauchy(vec![(1.0, 2.0)], c, d).unwrap();
        assert!((m.mass_check().unwrap() - 1.0).abs() < 1e-8);
        // symmetric by construction
        assert!((m.density(1.2, 1.9) - m.density(1.9, 1.2)).abs() < 1e-15);
    }

    #[test]
    fn cauchy_density_rejects_nonpositive_c() {
        let c = parse_expr("x-3").unwrap();
        let d = parse_expr("1").unwrap();
        let err = DensityModel::<f64>::cauchy(vec![(1.0, 2.0)], c, d).unwrap_err();
        assert!(matches!(err, Error::NonPositiveParameter(_)));
    }

    #[test]
    fn mixture_merges_overlaps() {
        let m: DensityModel<f64> = DensityModel::mixture(vec![
            UniformComponent {
                center: 0.0,
                halfwidth: 1.0,
                mass: 0.5,
            },
            UniformComponent {
                center: 0.5,
                halfwidth: 1.0,
                mass: 0.5,
            },
        ])
        .unwrap();
        assert_eq!(m.domain().len(), 1);
        assert_eq!(m.cells().len(), 3);
        assert!((m.mass_check().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn regime_classification() {
        assert_eq!(
            RExponent::new(0.5f64).unwrap().regime(),
            Regime::Subadditive
        );
        assert_eq!(RExponent::new(1.0f64).unwrap().regime(), Regime::Subadditive);
        assert_eq!(RExponent::new(1.5f64).unwrap().regime(), Regime::Convex);
        assert_eq!(RExponent::new(2.0f64).unwrap().regime(), Regime::Quadratic);
        assert_eq!(RExponent::new(3.0f64).unwrap().regime(), Regime::Failure);
        assert_eq!(RExponent::new(-0.5f64).unwrap().regime(), Regime::Negative);
        assert!(RExponent::new(0.0f64).is_err());
        assert!(RExponent::new(f64::NAN).is_err());
    }

    #[test]
    fn a_r_constant() {
        assert_eq!(RExponent::new(0.7f64).unwrap().a_r(), Some(1.0));
        let a15 = RExponent::new(1.5f64).unwrap().a_r().unwrap();
        assert!((a15 - 2.0f64.powf(0.5)).abs() < 1e-15);
        assert_eq!(RExponent::new(2.0f64).unwrap().a_r(), None);
    }
}
