use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataio::CustomerFeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Projection onto the first two principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub means: Vec<f64>,
    /// Unit-norm principal directions, leading component first. The
    /// largest-magnitude loading of each is positive.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

impl FilterModel {
    pub fn project(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.nrows(), 2);
        for (i, row) in x.rows_iter().enumerate() {
            for (c, comp) in self.components.iter().enumerate() {
                let v: f64 = row.iter().zip(&self.means).zip(comp).map(|((x, m), w)| (x - m) * w).sum();
                out.set(i, c, v);
            }
        }
        out
    }
}

pub fn fit_filter(features: &CustomerFeatureMatrix) -> Result<FilterModel> {
    let x = &features.values;
    let (m, p) = (x.nrows(), x.ncols());
    if m < 2 || p < 2 {
        return Err(Error::param(format!("filter needs >= 2 customers and >= 2 features, got {m}x{p}")));
    }
    let means: Vec<f64> = (0..p).map(|j| crate::stats::mean(&x.column(j))).collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for row in x.rows_iter() {
        for a in 0..p {
            let da = row[a] - means[a];
            for b in a..p {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (m - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = eig.eigenvalues[order[1]];
    if !(l1 > 0.0) || l2 <= 1e-10 * l1 {
        return Err(Error::FilterRank);
    }
    let component = |c: usize| -> Vec<f64> {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[c]).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x *= sign / norm;
        }
        v
    };
    Ok(FilterModel { means, components: [component(0), component(1)], explained_variance: [l1, l2] })
}
