//! Compensated summation.
//!
//! Exact moment sums subtract nearly equal large terms (the counterexample
//! moments at large r), so plain accumulation loses digits. Neumaier's
//! variant of Kahan summation keeps the running compensation correct even
//! when a new term dominates the partial sum.

use crate::real::Real;

#[derive(Debug, Clone, Copy)]
pub struct KahanSum<R> {
    sum: R,
    compensation: R,
}

impl<R: Real> Default for KahanSum<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> KahanSum<R> {
    pub fn new() -> Self {
        Self {
            sum: R::zero(),
            compensation: R::zero(),
        }
    }

    pub fn add(&mut self, term: R) {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.compensation += (self.sum - t) + term;
        } else {
            self.compensation += (term - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> R {
        self.sum + self.compensation
    }
}

/// Sum terms in descending order of magnitude with compensation.
/// This is the summation rule used by every "exact" moment path.
pub fn sorted_compensated_sum<R: Real>(terms: &mut [R]) -> R {
    terms.sort_by(|a, b| {
        b.abs()
            .partial_cmp(&a.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut acc = KahanSum::new();
    for &t in terms.iter() {
        acc.add(t);
    }
    acc.value()
}
