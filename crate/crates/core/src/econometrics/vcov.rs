use nalgebra::{DMatrix, DVector};

/// `A M A` for a symmetric bread `A` and meat `M`.
pub fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let v = bread * meat * bread;
    // symmetrize away rounding
    (&v + v.transpose()) * 0.5
}

/// Sum over clusters of `s_g s_gᵀ`, where `s_g = Σ_{i∈g} x_i u_i`.
pub fn cluster_meat(x: &DMatrix<f64>, residuals: &DVector<f64>, clusters: &[usize], n_clusters: usize) -> DMatrix<f64> {
    let k = x.ncols();
    let mut scores = DMatrix::<f64>::zeros(n_clusters, k);
    for (i, &g) in clusters.iter().enumerate() {
        for j in 0..k {
            scores[(g, j)] += x[(i, j)] * residuals[i];
        }
    }
    scores.transpose() * scores
}

/// Cluster-robust covariance with the CR1 small-sample factor
/// `G/(G−1) · (N−1)/(N−K)`, `K` counting every estimated parameter
/// including absorbed group effects.
pub fn cluster_vcov(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    xtx_inv: &DMatrix<f64>,
    clusters: &[usize],
    n_clusters: usize,
    parameters: usize,
) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let g = n_clusters as f64;
    let scale = g / (g - 1.0) * (n - 1.0) / (n - parameters as f64);
    sandwich(xtx_inv, &cluster_meat(x, residuals, clusters, n_clusters)) * scale
}

/// Heteroskedasticity-robust covariance with the HC1 factor `N/(N−K)`.
pub fn hc1(x: &DMatrix<f64>, residuals: &DVector<f64>, xtx_inv: &DMatrix<f64>, parameters: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let singletons: Vec<usize> = (0..n).collect();
    let meat = cluster_meat(x, residuals, &singletons, n);
    sandwich(xtx_inv, &meat) * (n as f64 / (n - parameters) as f64)
}
