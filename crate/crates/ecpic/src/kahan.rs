//! Compensated (Neumaier) accumulators for deposits and reductions.
//!
//! Every mesh deposit and global reduction in this crate runs through these
//! types so that conservation residuals stay at round-off level even for long
//! accumulation chains, and so that merge order is explicit and deterministic.

/// Scalar compensated sum (Neumaier's variant of Kahan summation).
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum over a slice.
pub fn sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.total()
}

/// Compensated arithmetic mean over a slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    sum(values) / values.len() as f64
}

/// Array of compensated accumulators, used for particle-to-mesh deposits.
///
/// The per-slot compensation is kept so that differences of accumulated
/// fields (e.g. a discrete divergence of a deposited flux) can be formed
/// without losing the correction term.
#[derive(Debug, Clone)]
pub struct KahanArray {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanArray {
    pub fn zeros(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn reset(&mut self) {
        self.sum.fill(0.0);
        self.comp.fill(0.0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, x: f64) {
        let s = self.sum[i];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[i] += (s - t) + x;
        } else {
            self.comp[i] += (x - t) + s;
        }
        self.sum[i] = t;
    }

    #[inline]
    pub fn total(&self, i: usize) -> f64 {
        self.sum[i] + self.comp[i]
    }

    /// Difference total(i) - total(j) with both compensations applied.
    #[inline]
    pub fn total_diff(&self, i: usize, j: usize) -> f64 {
        (self.sum[i] - self.sum[j]) + (self.comp[i] - self.comp[j])
    }

    /// Fold another accumulator in. Call in a fixed order for reproducibility.
    pub fn merge(&mut self, other: &KahanArray) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.sum.len() {
            self.add(i, other.sum[i]);
            self.add(i, other.comp[i]);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.total(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let mut acc = KahanSum::new();
        acc.add(1.0);
        acc.add(1e100);
        acc.add(1.0);
        acc.add(-1e100);
        assert_eq!(acc.total(), 2.0);
    }

    #[test]
    fn array_merge_matches_sequential() {
        let mut a = KahanArray::zeros(4);
        let mut b = KahanArray::zeros(4);
        let mut all = KahanArray::zeros(4);
        for k in 0..1000 {
            let x = (k as f64).sin() * 1e-3;
            let i = k % 4;
            if k < 500 {
                a.add(i, x);
            } else {
                b.add(i, x);
            }
            all.add(i, x);
        }
        let mut merged = a.clone();
        merged.merge(&b);
        for i in 0..4 {
            assert!((merged.total(i) - all.total(i)).abs() <= 1e-18);
        }
    }
}
