//! Matrix-pencil fitting of finite sums of undamped complex exponentials.
//!
//! Used twice: per angle-delay bin for UL Doppler estimation, and per entry of
//! the channel-weight matrix for eigenvector interpolation.

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::linalg::{cis, eigenvalues, lstsq, svd, CMatrix, C64};

/// Singular values below this fraction of the largest are treated as absent
/// signal components.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Relative fit residual above which [`Flags::FIT_RESIDUAL`] is raised.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialTerm {
    pub amplitude: C64,
    /// Radians per sample, in (−π, π].
    pub angular_step: f64,
}

/// `Σ_l b_l e^{j w_l t}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExponentialModel {
    pub terms: Vec<ExponentialTerm>,
}

impl ExponentialModel {
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn evaluate(&self, t: f64) -> C64 {
        self.terms.iter().map(|term| term.amplitude * cis(term.angular_step * t)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFit {
    pub model: ExponentialModel,
    /// ‖y − ŷ‖ / ‖y‖ over the fitted samples (0 for an all-zero input).
    pub residual: f64,
    pub flags: Flags,
}

fn wrap(w: f64) -> f64 {
    use std::f64::consts::PI;
    let x = (w + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        PI
    } else {
        x
    }
}

/// Fits `order` exponentials to uniformly spaced `samples`.
///
/// The Hankel pencil uses pencil parameter ⌊N/2⌋. The signal subspace is the
/// leading right singular subspace of the Hankel matrix, truncated to the
/// requested order or to its numerical rank if smaller (flagged). Poles are
/// projected onto the unit circle and amplitudes solved by least squares on
/// the resulting Vandermonde system.
pub fn fit_exponentials(samples: &[C64], order: usize) -> Result<ExponentialFit> {
    if order == 0 {
        return Err(Error::Config("exponential model order must be at least 1".into()));
    }
    let n = samples.len();
    if n < 2 * order {
        return Err(Error::InsufficientSamples { needed: 2 * order, got: n });
    }
    let pencil = n / 2;
    let rows = n - pencil;
    let hankel = CMatrix::from_fn(rows, pencil + 1, |i, j| samples[i + j]);
    let decomposition = svd(&hankel);
    let sv = &decomposition.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut flags = Flags::empty();
    if !(smax > 0.0) || !smax.is_finite() {
        flags |= Flags::RANK_COLLAPSE;
        return Ok(ExponentialFit { model: ExponentialModel::default(), residual: 0.0, flags });
    }
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count().min(order);
    if rank < order {
        flags |= Flags::RANK_COLLAPSE;
    }
    // Rows of Vᴴ span the row space of the Hankel matrix, which is spanned by
    // the pole progressions [1, z, z², …]. Shift invariance then gives
    // A₂ = T diag(z) T⁻¹ A₁.
    let a = CMatrix::from_fn(rank, pencil + 1, |i, j| decomposition.v[(j, i)].conj());
    let a1 = a.columns(0, pencil).into_owned();
    let a2 = a.columns(1, pencil).into_owned();
    let (yh, _) = lstsq(&a1.adjoint(), &a2.adjoint(), 1e-14);
    let pencil_matrix = yh.adjoint();
    let poles =
        eigenvalues(&pencil_matrix).ok_or_else(|| Error::Config("pencil eigenproblem failed to converge".into()))?;
    let steps: Vec<f64> = poles.iter().map(|z| wrap(z.arg())).collect();

    let vander = CMatrix::from_fn(n, rank, |t, l| cis(steps[l] * t as f64));
    let y = CMatrix::from_fn(n, 1, |t, _| samples[t]);
    let (b, deficient) = lstsq(&vander, &y, 1e-13);
    if deficient {
        flags |= Flags::RANK_COLLAPSE;
    }
    let terms: Vec<ExponentialTerm> =
        steps.iter().enumerate().map(|(l, &w)| ExponentialTerm { amplitude: b[(l, 0)], angular_step: w }).collect();
    let model = ExponentialModel { terms };
    let energy: f64 = samples.iter().map(|z| z.norm_sqr()).sum();
    let err: f64 = samples.iter().enumerate().map(|(t, z)| (z - model.evaluate(t as f64)).norm_sqr()).sum();
    let residual = (err / energy).sqrt();
    if residual > RESIDUAL_TOLERANCE {
        flags |= Flags::FIT_RESIDUAL;
    }
    Ok(ExponentialFit { model, residual, flags })
}
