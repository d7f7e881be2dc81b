use serde::{Deserialize, Serialize};

/// Move `delta_f` of load share from component `from` to component `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionAction {
    pub from: usize,
    pub to: usize,
    pub delta_f: f64,
}

impl FractionAction {
    /// The induced adjustment vector: `-delta_f` at `from`, `+delta_f` at `to`.
    pub fn adjustment(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        a[self.from] = -self.delta_f;
        a[self.to] = self.delta_f;
        a
    }

    pub fn reverse(&self) -> Self {
        Self {
            from: self.to,
            to: self.from,
            delta_f: self.delta_f,
        }
    }
}

/// Every ordered pair `(i, j)` with `i != j`, lexicographic. The position in
/// this list is the Q-network output index.
pub fn action_space(n: usize, delta_f: f64) -> Vec<FractionAction> {
    assert!(n >= 2, "need at least two components");
    let mut out = Vec::with_capacity(n * (n - 1));
    for from in 0..n {
        for to in 0..n {
            if from != to {
                out.push(FractionAction { from, to, delta_f });
            }
        }
    }
    out
}

/// Inverse of the [`action_space`] enumeration.
pub fn action_index(n: usize, from: usize, to: usize) -> usize {
    assert!(from != to && from < n && to < n);
    from * (n - 1) + if to > from { to - 1 } else { to }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Apply `a` to the composition `f`. When `f[from] < delta_f` only the
/// available share moves and the returned flag is set.
///
/// The receiving component is recomputed as one minus the compensated sum
/// of the others, so the simplex sum never drifts.
pub fn apply_action(f: &[f64], a: &FractionAction) -> (Vec<f64>, bool) {
    let moved = a.delta_f.min(f[a.from]).max(0.0);
    let partial = moved < a.delta_f;
    let mut out = f.to_vec();
    out[a.from] = if partial { 0.0 } else { f[a.from] - moved };
    let others: Vec<f64> = out
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a.to)
        .map(|(_, &x)| x)
        .collect();
    out[a.to] = (1.0 - compensated_sum(&others)).max(0.0);
    (out, partial)
}
