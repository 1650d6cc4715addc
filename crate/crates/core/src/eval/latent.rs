//! Low-dimensional trajectories of tap features over time.
//!
//! Principal components stand in for a smoothed factor model; projections
//! are labelled with method `"pca"`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::MotionRecording;
use crate::error::{Error, Result};
use crate::model::{Network, Tap};
use crate::tensor::Tensor;

use super::classify::sequence_features;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Column means of the input.
    pub mean: Vec<f64>,
    /// `[F × k]`, columns are unit eigenvectors in descending eigenvalue order.
    pub components: Tensor,
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues numerically above zero.
    pub rank: usize,
    /// `[N × k]` centred data projected onto the components.
    pub projection: Tensor,
}

/// Principal components of the rows of `x` (`[N × F]`), using the `1/N`
/// covariance. Each component's largest-magnitude loading is made positive.
pub fn pca(x: &Tensor, k: usize) -> Result<Pca> {
    if x.shape().len() != 2 || x.rows() == 0 {
        return Err(Error::shape("pca", x.shape(), &[1, 1]));
    }
    let (n, f) = (x.rows(), x.row_len());
    if k == 0 || k > f {
        return Err(Error::Param(format!("cannot take {k} components of {f} features")));
    }
    let mut mean = vec![0.0; f];
    for i in 0..n {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // a constant column centres to exact zeros
    for (j, m) in mean.iter_mut().enumerate() {
        if (1..n).all(|i| x.row(i)[j] == x.row(0)[j]) {
            *m = x.row(0)[j];
        }
    }
    let centred = DMatrix::from_fn(n, f, |i, j| x.row(i)[j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let tol = eigenvalues[0] * f as f64 * f64::EPSILON;
    let rank = eigenvalues.iter().filter(|&&l| l > tol && l > 0.0).count();

    let mut comps = DMatrix::zeros(f, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.neg_mut();
        }
        comps.set_column(c, &v);
    }
    let proj = &centred * &comps;
    let components = Tensor::new(
        &[f, k],
        (0..f)
            .flat_map(|i| (0..k).map(move |c| (i, c)))
            .map(|(i, c)| comps[(i, c)])
            .collect(),
    )?;
    let projection = Tensor::new(
        &[n, k],
        (0..n)
            .flat_map(|i| (0..k).map(move |c| (i, c)))
            .map(|(i, c)| proj[(i, c)])
            .collect(),
    )?;
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        rank,
        projection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    /// `[T' × k]`, one row per window position.
    pub points: Tensor,
    pub tap: Tap,
    pub method: &'static str,
    /// Variance captured by each returned component.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub rank: usize,
}

/// Tap features at every window position of `rec`, projected onto their top
/// `components` principal components. Fewer non-degenerate directions than
/// requested are reported through a warning; the extra columns are then
/// (numerically) zero.
pub fn latent_trajectory(
    net: &Network,
    rec: &MotionRecording,
    tap: Tap,
    components: usize,
) -> Result<LatentTrajectory> {
    let feats = sequence_features(net, rec, tap, f64::INFINITY, 1)?;
    if feats.rows() < components {
        return Err(Error::Eval(format!(
            "{} yields {} windows, fewer than {components} components",
            rec.trial,
            feats.rows()
        )));
    }
    let p = pca(&feats, components)?;
    if p.rank < components {
        log::warn!(
            "{}: {tap} features span only {} dimension(s); {components} components requested",
            rec.trial,
            p.rank
        );
    }
    Ok(LatentTrajectory {
        points: p.projection,
        tap,
        method: "pca",
        explained_variance: p.eigenvalues[..components].to_vec(),
        total_variance: p.eigenvalues.iter().sum(),
        rank: p.rank,
    })
}
