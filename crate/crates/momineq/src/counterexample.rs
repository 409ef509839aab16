//! The failure side of the theorem: exact evaluation of the two-point
//! counterexample for r > 2 with its Jensen chain, the mollified density
//! version, the negative-r remark, and a sweep over general two-point
//! product laws.
//!
//! Delta at large r subtracts nearly equal large terms, so the double path
//! sums compensated in descending magnitude and an exact big-rational path
//! runs alongside whenever r is an integer with (r - 2) dividing 4, the
//! only case in which A = 2^{2r/(r-2)} is itself rational.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kahan::sorted_compensated_sum;
use crate::model::{build_counterexample, build_smoothed, Model, RExponent, Regime, TwoPointLaw};
use crate::moments::{delta_parts, DeltaMethod, MomentEstimate};
use crate::quad::{integrate_segmented, Breakpoint, QuadOptions};
use crate::real::Real;

/// Exact rational mirror of [`DeltaBreakdown`], present when the closed
/// forms are rational.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBreakdown {
    pub e_plus: BigRational,
    pub e_minus: BigRational,
    pub delta: BigRational,
    pub jensen_lhs: BigRational,
    pub jensen_rhs: BigRational,
    pub chain_bound: BigRational,
}

/// Both moments, their difference, and the proof-chain quantities.
/// `jensen_*` and `chain_bound` apply to the r > 2 construction and are
/// absent for the negative-r remark.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBreakdown<R> {
    pub e_plus: R,
    pub e_minus: R,
    pub delta: R,
    pub jensen_lhs: Option<R>,
    pub jensen_rhs: Option<R>,
    pub chain_bound: Option<R>,
    pub exact: Option<ExactBreakdown>,
}

impl<R: Real + Serialize> Serialize for DeltaBreakdown<R> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        fn num_or_inf<R: Real + Serialize, S: SerializeStruct>(
            st: &mut S,
            name: &'static str,
            v: R,
        ) -> std::result::Result<(), S::Error> {
            if v.is_finite() {
                st.serialize_field(name, &v)
            } else if v == R::infinity() {
                st.serialize_field(name, "inf")
            } else {
                st.serialize_field(name, "-inf")
            }
        }
        let mut st = serializer.serialize_struct("DeltaBreakdown", 7)?;
        num_or_inf(&mut st, "e_plus", self.e_plus)?;
        num_or_inf(&mut st, "e_minus", self.e_minus)?;
        num_or_inf(&mut st, "delta", self.delta)?;
        st.serialize_field("jensen_lhs", &self.jensen_lhs)?;
        st.serialize_field("jensen_rhs", &self.jensen_rhs)?;
        st.serialize_field("chain_bound", &self.chain_bound)?;
        st.serialize_field("exact", &self.exact.is_some())?;
        st.end()
    }
}

fn two() -> BigRational {
    BigRational::from_integer(BigInt::from(2))
}

fn pow_rat(base: &BigRational, exp: i64) -> BigRational {
    use num_traits::Pow;
    base.clone().pow(exp as i32)
}

/// Exact rational breakdown for integer r with (r - 2) | 4, i.e. r in
/// {3, 4, 6}; other exponents make A irrational.
fn exact_breakdown(ri: i64) -> Option<ExactBreakdown> {
    if ri <= 2 || (2 * ri) % (ri - 2) != 0 {
        return None;
    }
    let k = (2 * ri) / (ri - 2);
    let a = pow_rat(&two(), k);
    let p = BigRational::from_integer(BigInt::from(ri)) / (pow_rat(&two(), ri) * a.clone());
    let q = BigRational::one() - p.clone();
    let two_pq = two() * p.clone() * q.clone();

    let e_plus = p.clone() * p.clone() * pow_rat(&(two() * a.clone()), ri)
        + q.clone() * q.clone() * pow_rat(&two(), ri)
        + two_pq.clone() * pow_rat(&(a.clone() - BigRational::one()), ri);
    let e_minus = two_pq * pow_rat(&(a.clone() + BigRational::one()), ri);
    let delta = e_plus.clone() - e_minus.clone();

    let jensen_lhs = pow_rat(&(a.clone() + BigRational::one()), ri)
        - pow_rat(&(a.clone() - BigRational::one()), ri);
    let jensen_rhs = two() * BigRational::from_integer(BigInt::from(ri)) * pow_rat(&a, ri - 1);
    let chain_bound = pow_rat(&two(), ri)
        * (BigRational::one() - BigRational::from_integer(BigInt::from(ri * ri)));
    Some(ExactBreakdown {
        e_plus,
        e_minus,
        delta,
        jensen_lhs,
        jensen_rhs,
        chain_bound,
    })
}

/// Evaluate the counterexample moments and the full proof chain
/// delta <= (Jensen substitution) < 2^r (1 - r^2) < 0. The chain is
/// asserted; a violation is an arithmetic failure, not a data point.
pub fn delta_exact<R: Real>(law: &TwoPointLaw<R>) -> Result<DeltaBreakdown<R>> {
    let r = law.r();
    if r.regime() != Regime::Failure {
        return Err(Error::RegimeError {
            r: Real::to_f64(r.value()),
            expected: "r > 2",
        });
    }
    let rv = r.value();
    let a = law.high_atom();
    let (p, q) = (law.p(), law.q());
    let two_pq = R::two() * p * q;

    let plus_terms = [
        p * p * (R::two() * a).powf(rv),
        q * q * R::two().powf(rv),
        two_pq * (a - R::one()).powf(rv),
    ];
    let e_plus = sorted_compensated_sum(&mut plus_terms.to_vec());
    let e_minus = two_pq * (a + R::one()).powf(rv);

    // (A+1)^r - (A-1)^r without forming the difference of two huge powers:
    // A^r e^{r ln(1-1/A)} (e^{2 r atanh(1/A)} - 1). As r drops towards 2,
    // A explodes and the direct difference would be pure rounding noise.
    let h = R::one() / a;
    let atanh_h = (h.ln_1p() - (-h).ln_1p()) * R::half();
    let jensen_lhs = a.powf(rv) * (rv * (-h).ln_1p()).exp() * (R::two() * rv * atanh_h).exp_m1();
    let jensen_rhs = R::two() * rv * a.powf(rv - R::one());

    // delta through the stable difference: the direct e_plus - e_minus
    // cancels catastrophically near r = 2
    let mut delta_terms = vec![plus_terms[0], plus_terms[1], -(two_pq * jensen_lhs)];
    let delta = sorted_compensated_sum(&mut delta_terms);

    let chain_bound = R::two().powf(rv) * (R::one() - rv * rv);

    // the Jensen gap falls below one ulp of its operands as r -> 2+
    let jensen_tol = R::of(16.0) * R::epsilon() * jensen_rhs.abs();
    if !(jensen_lhs >= jensen_rhs - jensen_tol)
        || !(delta < chain_bound)
        || !(chain_bound < R::zero())
    {
        return Err(Error::Precondition(format!(
            "counterexample chain failed numerically at r = {}: delta = {}, chain bound = {}",
            Real::to_f64(rv),
            Real::to_f64(delta),
            Real::to_f64(chain_bound)
        )));
    }

    let rv_f = Real::to_f64(rv);
    let exact = if rv_f.fract() == 0.0 && rv_f.abs() < 2_f64.powi(31) {
        exact_breakdown(rv_f as i64)
    } else {
        None
    };

    Ok(DeltaBreakdown {
        e_plus,
        e_minus,
        delta,
        jensen_lhs: Some(jensen_lhs),
        jensen_rhs: Some(jensen_rhs),
        chain_bound: Some(chain_bound),
        exact,
    })
}

/// Delta of the mollified counterexample: atoms widened to uniform bumps of
/// half-width epsilon. Negative for small epsilon, converging to the exact
/// delta as epsilon shrinks.
pub fn smoothed_delta<R: Real>(
    r: RExponent<R>,
    epsilon: R,
    rel_tol: R,
) -> Result<MomentEstimate<R>> {
    let law = build_counterexample(r)?;
    let model = build_smoothed(&law, epsilon)?;
    let parts = delta_parts(&Model::Density(model), r, &DeltaMethod::Quadrature { rel_tol })?;
    Ok(parts.delta)
}

/// The r < 0 remark on independent uniforms over [1, 2]: the closed-form
/// difference moment against the quadrature of the triangular sum density,
/// with E|X-Y|^r flagged infinite for r <= -1.
pub fn remark_negative_r<R: Real>(r: RExponent<R>) -> Result<DeltaBreakdown<R>> {
    let rv = r.value();
    if r.regime() != Regime::Negative {
        return Err(Error::RegimeError {
            r: Real::to_f64(rv),
            expected: "r < 0",
        });
    }

    // X + Y has the triangular density (w-2) on [2,3], (4-w) on [3,4]
    let mut opts = QuadOptions::with_rel_tol(R::of(1e-10));
    opts.abs_tol = R::of(1e-280);
    let e_plus = integrate_segmented(
        |w: R| {
            let g = if w < R::of(3.0) {
                w - R::two()
            } else {
                R::of(4.0) - w
            };
            w.powf(rv) * g
        },
        R::two(),
        R::of(4.0),
        &[Breakpoint::split(R::of(3.0))],
        &opts,
    )
    .checked(opts.rel_tol)?
    .value;

    let bound = R::two().powf(rv);
    if !(e_plus <= bound + R::of(1e-9)) {
        return Err(Error::Precondition(format!(
            "sum moment exceeded its 2^r bound: {} > {}",
            Real::to_f64(e_plus),
            Real::to_f64(bound)
        )));
    }

    let e_minus = if rv > -R::one() {
        R::two() / ((rv + R::one()) * (rv + R::two()))
    } else {
        R::infinity()
    };
    Ok(DeltaBreakdown {
        e_plus,
        e_minus,
        delta: e_plus - e_minus,
        jensen_lhs: None,
        jensen_rhs: None,
        chain_bound: None,
        exact: None,
    })
}

/// One grid point of the two-point sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint<R> {
    pub a: R,
    pub p: R,
    pub delta: R,
}

/// Exact delta over a grid of product two-point laws with atoms (a, -1)
/// and probabilities (p, 1-p): positivity holds automatically (rank-one
/// weight matrix), so any negative delta found is a genuine failure point.
/// Returns the failures sorted by ascending delta.
pub fn search_two_point<R: Real>(
    r: RExponent<R>,
    a_grid: &[R],
    p_grid: &[R],
) -> Result<Vec<SweepPoint<R>>> {
    if a_grid.is_empty() || p_grid.is_empty() {
        return Err(Error::Precondition("sweep grids must be non-empty".into()));
    }
    let rv = r.value();
    if !(rv > R::zero()) {
        return Err(Error::RegimeError {
            r: Real::to_f64(rv),
            expected: "r > 0",
        });
    }
    for &p in p_grid {
        if !(p > R::zero() && p < R::one()) {
            return Err(Error::Precondition(format!(
                "p = {} is not a probability in (0, 1)",
                Real::to_f64(p)
            )));
        }
    }
    let threshold = -R::of(1e-12);
    let mut hits = Vec::new();
    for &a in a_grid {
        for &p in p_grid {
            let d = two_point_delta(a, p, rv);
            if d < threshold {
                hits.push(SweepPoint { a, p, delta: d });
            }
        }
    }
    hits.sort_by(|s, t| {
        s.delta
            .partial_cmp(&t.delta)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| s.a.partial_cmp(&t.a).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| s.p.partial_cmp(&t.p).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(hits)
}

/// Closed-form delta of the product law on atoms (a, -1) with mass (p, q).
pub fn two_point_delta<R: Real>(a: R, p: R, rv: R) -> R {
    let q = R::one() - p;
    let pow = |z: R| {
        let az = z.abs();
        if az == R::zero() {
            R::zero()
        } else {
            az.powf(rv)
        }
    };
    let mut terms = vec![
        p * p * pow(R::two() * a),
        q * q * pow(R::two()),
        R::two() * p * q * pow(a - R::one()),
        -(R::two() * p * q * pow(a + R::one())),
    ];
    sorted_compensated_sum(&mut terms)
}
