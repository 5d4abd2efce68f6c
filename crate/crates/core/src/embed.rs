//! Classical multidimensional scaling into the plane.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::metrics::DistanceMatrix;

/// Eigenvalues at or below this fraction of the Frobenius norm of the
/// centered Gram matrix count as zero.
pub const POSITIVE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdsEmbedding {
    pub labels: Vec<String>,
    /// One `[x, y]` per label, columns centered.
    pub coords: Vec<[f64; 2]>,
    /// Full spectrum of the centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub n_positive: usize,
}

impl MdsEmbedding {
    /// Share of the absolute spectrum carried by the two leading eigenvalues.
    pub fn top2_ratio(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|l| l.abs()).sum();
        let top: f64 = self.eigenvalues.iter().take(2).map(|l| l.max(0.0)).sum();
        if total > 0.0 {
            top / total
        } else {
            0.0
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords[a], self.coords[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// CSV `label,x,y`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Precondition(format!("writing embedding: {e}"));
        w.write_record(["label", "x", "y"]).map_err(err)?;
        for (label, c) in self.labels.iter().zip(&self.coords) {
            w.write_record([label.clone(), fmt_num(c[0]), fmt_num(c[1])]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing embedding: {e}")))
    }
}

/// Embeds `d` in two dimensions from the top eigenpairs of
/// `B = -1/2 J D^2 J`, `J` the centering matrix.
///
/// A configuration that is exactly one-dimensional (one positive eigenvalue,
/// the rest zero) is accepted with `y = 0`; any other spectrum with fewer
/// than two positive eigenvalues is an error.
pub fn classical_mds(d: &DistanceMatrix) -> Result<MdsEmbedding> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Embedding("need at least 2 points".into()));
    }
    let entries = d.dense()?;
    let d2 = DMatrix::from_fn(n, n, |a, b| entries[a * n + b] * entries[a * n + b]);
    let row_means: Vec<f64> = (0..n).map(|a| d2.row(a).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |a, c| -0.5 * (d2[(a, c)] - row_means[a] - row_means[c] + grand));

    let eig = SymmetricEigen::new(b.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let threshold = POSITIVE_THRESHOLD * b.norm();
    let n_positive = eigenvalues.iter().filter(|&&l| l > threshold).count();
    let flat = n_positive == 1 && eigenvalues[1..].iter().all(|l| l.abs() <= threshold);
    if n_positive < 2 && !flat {
        return Err(Error::Embedding(format!(
            "classical scaling needs two positive eigenvalues, found {n_positive} (spectrum {eigenvalues:?})"
        )));
    }

    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..n_positive.min(2) {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[axis]).iter().copied().collect();
        // the largest-magnitude entry (first on ties) is made positive
        let lead = v.iter().enumerate().fold(0, |best, (k, x)| if x.abs() > v[best].abs() { k } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = eigenvalues[axis].sqrt();
        for (c, x) in coords.iter_mut().zip(&v) {
            c[axis] = x * s;
        }
    }
    Ok(MdsEmbedding {
        labels: d.labels().to_vec(),
        coords,
        eigenvalues,
        n_positive,
    })
}
