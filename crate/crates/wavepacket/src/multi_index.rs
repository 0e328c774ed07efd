//! Multi-indices (per-axis exponent vectors) used for moment tensors,
//! symmetric derivatives and polynomial bookkeeping.
//!
//! A symmetric tensor entry `T^{r_1..r_n}` depends only on how many indices
//! equal each axis, so storing one value per exponent vector keeps the
//! symmetrization by construction.

use serde::{Deserialize, Serialize};

/// Per-axis exponent vector, e.g. `[2, 1]` for `x^2 y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn zero(dims: usize) -> Self {
        MultiIndex(vec![0; dims])
    }

    pub fn unit(dims: usize, axis: usize) -> Self {
        let mut v = vec![0; dims];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// Total order `|alpha| = sum_a alpha_a`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// `alpha! = prod_a alpha_a!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as usize)).product()
    }

    /// Number of ordered index tuples collapsing onto this exponent vector:
    /// the multinomial coefficient `|alpha|! / alpha!`.
    pub fn tuple_count(&self) -> f64 {
        factorial(self.order()) / self.factorial()
    }

    /// Increment the exponent of one axis.
    pub fn plus_axis(&self, axis: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[axis] += 1;
        MultiIndex(v)
    }

    /// Component-wise sum.
    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Component-wise difference; `None` if any component would go negative.
    pub fn minus(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut v = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if b > a {
                return None;
            }
            v.push(a - b);
        }
        Some(MultiIndex(v))
    }

    pub fn leq(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Render like `x0^2*x1` for reports; `1` for the zero index.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (a, &e) in self.0.iter().enumerate() {
            match e {
                0 => {}
                1 => parts.push(format!("x{a}")),
                _ => parts.push(format!("x{a}^{e}")),
            }
        }
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Component-wise binomial `prod_a C(alpha_a, beta_a)`.
pub fn multi_binomial(alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
    alpha
        .0
        .iter()
        .zip(&beta.0)
        .map(|(&a, &b)| binomial(a as usize, b as usize))
        .product()
}

/// All multi-indices over `dims` axes with total order exactly `order`,
/// in lexicographic order (deterministic).
pub fn indices_of_order(dims: usize, order: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; dims];
    fill(&mut out, &mut cur, 0, order);
    out
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut Vec<u8>, axis: usize, remaining: usize) {
    if axis == cur.len() - 1 {
        cur[axis] = remaining as u8;
        out.push(MultiIndex(cur.clone()));
        cur[axis] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[axis] = e as u8;
        fill(out, cur, axis + 1, remaining - e);
    }
    cur[axis] = 0;
}

/// All multi-indices with `min_order <= |alpha| <= max_order`, grouped by order.
pub fn indices_up_to(dims: usize, min_order: usize, max_order: usize) -> Vec<MultiIndex> {
    (min_order..=max_order)
        .flat_map(|n| indices_of_order(dims, n))
        .collect()
}

/// All sub-indices `beta <= alpha` (inclusive of zero and alpha itself).
pub fn sub_indices(alpha: &MultiIndex) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex::zero(alpha.dims())];
    for (axis, &e) in alpha.0.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * (e as usize + 1));
        for base in &out {
            for v in 0..=e {
                let mut b = base.clone();
                b.0[axis] = v;
                next.push(b);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        // (d + n - 1 choose n) indices of order n over d axes
        assert_eq!(indices_of_order(3, 2).len(), 6);
        assert_eq!(indices_of_order(1, 5).len(), 1);
        assert_eq!(indices_up_to(2, 0, 2).len(), 1 + 2 + 3);
    }

    #[test]
    fn tuple_count_is_multinomial() {
        let alpha = MultiIndex(vec![2, 1]);
        assert_eq!(alpha.tuple_count(), 3.0); // 3!/2!1!
        assert_eq!(alpha.factorial(), 2.0);
    }

    #[test]
    fn sub_index_lattice() {
        let alpha = MultiIndex(vec![1, 2]);
        let subs = sub_indices(&alpha);
        assert_eq!(subs.len(), 2 * 3);
        assert!(subs.iter().all(|b| b.leq(&alpha)));
    }
}
