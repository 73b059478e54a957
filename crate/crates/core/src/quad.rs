//! Fourth-order cumulative quadrature on uniform grids.

/// Weights `(node, w)` with `∫_{t_j}^{t_{j+1}} f ≈ h Σ w f(node)` for each
/// interval `j` of a uniform grid with `intervals` steps. Local cubic
/// interpolation; trapezoid when fewer than three intervals exist.
pub(crate) fn interval_weights(intervals: usize) -> Vec<Vec<(usize, f64)>> {
    let m = intervals;
    if m < 3 {
        return (0..m).map(|j| vec![(j, 0.5), (j + 1, 0.5)]).collect();
    }
    const W: f64 = 1.0 / 24.0;
    (0..m)
        .map(|j| {
            if j == 0 {
                vec![(0, 9.0 * W), (1, 19.0 * W), (2, -5.0 * W), (3, W)]
            } else if j == m - 1 {
                vec![(m - 3, W), (m - 2, -5.0 * W), (m - 1, 19.0 * W), (m, 9.0 * W)]
            } else {
                vec![(j - 1, -W), (j, 13.0 * W), (j + 1, 13.0 * W), (j + 2, -W)]
            }
        })
        .collect()
}

/// Total weights for `∫_{t_0}^{t_m} f ≈ h Σ_k w_k f(t_k)`.
pub(crate) fn total_weights(intervals: usize) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    for iw in interval_weights(intervals) {
        for (k, x) in iw {
            w[k] += x;
        }
    }
    w
}
