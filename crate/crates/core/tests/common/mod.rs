#![allow(dead_code)]

use basket_xva::gpr::TrainedGpr;
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard
/// normal density, by Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|k| eig.eigenvectors[(0, k)].powi(2)).collect();
    (nodes, weights)
}

/// Tensor-grid Gauss–Hermite value of `E[model(mean + L G)]`, `L L^T = cov`.
pub fn quadrature_expectation(model: &TrainedGpr, mean: &[f64], cov: &DMatrix<f64>, n: usize) -> f64 {
    let d = mean.len();
    let l = cov.clone().cholesky().map(|c| c.unpack()).unwrap_or_else(|| {
        // semidefinite covariance: symmetric square root
        let e = SymmetricEigen::new(cov.clone());
        let sq = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * sq * e.eigenvectors.transpose()
    });
    let (nodes, weights) = gauss_hermite(n);
    let total = n.pow(d as u32);
    let mut z = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut w = 1.0;
        for gi in g.iter_mut() {
            let k = rest % n;
            rest /= n;
            *gi = nodes[k];
            w *= weights[k];
        }
        for i in 0..d {
            z[i] = mean[i] + (0..d).map(|j| l[(i, j)] * g[j]).sum::<f64>();
        }
        sum += w * model.predict_one(&z);
    }
    sum
}
