//! Virtual channel representation: projection of stacked frequency-space
//! channels onto the unitary 2D DFT angle-delay grid, and strongest-support
//! selection.
//!
//! The grid basis `Q = F_P ⊗ F_Nh ⊗ F_Nv ⊗ F_Nf` is never formed; both
//! directions run as separable FFTs along each Kronecker factor. Columns carry
//! `+j` phase progressions, matching the delay vector convention, and every
//! factor is scaled by `1/√N` so the transform is unitary.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::linalg::{cis, CVector, C64};

/// Angle-delay coefficients g_{r,n}(t) of one channel column.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDelayCoeffs {
    pub coefficients: CVector,
    pub subframe: i64,
}

impl AngleDelayCoeffs {
    pub fn energy(&self) -> f64 {
        self.coefficients.norm_squared()
    }
}

/// Strictly increasing grid indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet {
    pub indices: Vec<usize>,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, n: usize) -> bool {
        self.indices.binary_search(&n).is_ok()
    }

    /// Sorted intersection with another set.
    pub fn intersection(&self, other: &IndexSet) -> Vec<usize> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.indices[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }
}

/// Outcome of [`select_indices`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub set: IndexSet,
    /// Fraction of the history energy captured by `set`.
    pub achieved_fraction: f64,
    /// The support cap truncated the η-prefix.
    pub capped: bool,
}

/// Separable unitary DFT over the (polarization, horizontal, vertical,
/// subcarrier) axes.
#[derive(Clone)]
pub struct AngleDelayBasis {
    shape: [usize; 4],
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for AngleDelayBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngleDelayBasis").field("shape", &self.shape).finish()
    }
}

impl AngleDelayBasis {
    pub fn new(geometry: &ArrayGeometry, n_subcarriers: usize) -> Self {
        let shape = [geometry.n_polarizations, geometry.n_horizontal, geometry.n_vertical, n_subcarriers];
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        AngleDelayBasis { shape, forward, inverse }
    }

    /// N_f·N_t.
    pub fn dimension(&self) -> usize {
        self.shape.iter().product()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dimension() {
            return Err(Error::Dimension { expected: self.dimension(), actual: len });
        }
        Ok(())
    }

    fn transform(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>]) {
        let dim = self.dimension();
        let mut stride = dim;
        let mut line = Vec::new();
        for (axis, &n) in self.shape.iter().enumerate() {
            stride /= n;
            if n == 1 {
                continue;
            }
            let scale = 1.0 / (n as f64).sqrt();
            line.resize(n, C64::new(0.0, 0.0));
            let block = n * stride;
            for outer in (0..dim).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride];
                    }
                    plans[axis].process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = v * scale;
                    }
                }
            }
        }
    }

    /// g = Qᴴ h.
    pub fn to_angle_delay(&self, column: &[C64], subframe: i64) -> Result<AngleDelayCoeffs> {
        self.check(column.len())?;
        let mut data = column.to_vec();
        self.transform(&mut data, &self.forward);
        Ok(AngleDelayCoeffs { coefficients: CVector::from_vec(data), subframe })
    }

    /// h = Q g.
    pub fn from_angle_delay(&self, coeffs: &[C64]) -> Result<CVector> {
        self.check(coeffs.len())?;
        let mut data = coeffs.to_vec();
        self.transform(&mut data, &self.inverse);
        Ok(CVector::from_vec(data))
    }

    /// Multi-index of grid point `n` along (polarization, horizontal,
    /// vertical, subcarrier).
    pub fn unravel(&self, mut n: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for axis in (0..4).rev() {
            out[axis] = n % self.shape[axis];
            n /= self.shape[axis];
        }
        out
    }

    /// Basis column q_n, built elementwise.
    pub fn basis_column(&self, n: usize) -> CVector {
        let k = self.unravel(n);
        let norm = (self.dimension() as f64).sqrt().recip();
        CVector::from_fn(self.dimension(), |i, _| {
            let idx = self.unravel(i);
            let phase: f64 =
                (0..4).map(|a| 2.0 * std::f64::consts::PI * (idx[a] * k[a]) as f64 / self.shape[a] as f64).sum();
            cis(phase) * norm
        })
    }
}

/// Relative accumulated power at or below which a bin is treated as empty.
pub const ROUNDOFF_FLOOR: f64 = 1e-20;

/// Smallest index set whose accumulated energy over the history reaches
/// `eta` of the total, ranked by energy and then by lower index. An optional
/// `cap` truncates the prefix.
pub fn select_indices(history: &[AngleDelayCoeffs], eta: f64, cap: Option<usize>) -> Result<Selection> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("eta must lie in (0, 1], got {eta}")));
    }
    let first = history.first().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let dim = first.coefficients.len();
    let mut power = vec![0.0f64; dim];
    for g in history {
        if g.coefficients.len() != dim {
            return Err(Error::Dimension { expected: dim, actual: g.coefficients.len() });
        }
        for (p, z) in power.iter_mut().zip(g.coefficients.iter()) {
            *p += z.norm_sqr();
        }
    }
    // Bins below the floor hold only transform round-off and count as empty.
    let floor = power.iter().cloned().fold(0.0, f64::max) * ROUNDOFF_FLOOR;
    let mut order: Vec<usize> = (0..dim).filter(|&n| power[n] > floor).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&n| power[n]).sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport);
    }
    let mut take = order.len();
    if eta < 1.0 {
        let target = eta * total;
        let mut acc = 0.0;
        for (i, &n) in order.iter().enumerate() {
            acc += power[n];
            if acc >= target {
                take = i + 1;
                break;
            }
        }
    }
    let mut capped = false;
    if let Some(cap) = cap {
        if take > cap {
            take = cap.max(1);
            capped = true;
        }
    }
    let captured: f64 = order[..take].iter().map(|&n| power[n]).sum();
    let mut indices = order[..take].to_vec();
    indices.sort_unstable();
    Ok(Selection { set: IndexSet { indices }, achieved_fraction: captured / total, capped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_paths, Band, BandConfig, ChannelSim, PathGenConfig};
    use crate::linalg::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> AngleDelayBasis {
        AngleDelayBasis::new(&ArrayGeometry::new(2, 3, 2).unwrap(), 5)
    }

    fn random_vec(n: usize, seed: u64) -> CVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn basis_column_maps_to_unit_vector() {
        let b = basis();
        for n in [0, 7, 31, b.dimension() - 1] {
            let g = b.to_angle_delay(b.basis_column(n).as_slice(), 0).unwrap();
            for (i, z) in g.coefficients.iter().enumerate() {
                let expect = if i == n { 1.0 } else { 0.0 };
                assert!((z - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_of_unit_vector_is_basis_column() {
        let b = basis();
        let mut e = vec![C64::new(0.0, 0.0); b.dimension()];
        e[13] = C64::new(1.0, 0.0);
        let h = b.from_angle_delay(&e).unwrap();
        assert!(max_abs((h - b.basis_column(13)).iter()) < 1e-12);
        let zero = b.from_angle_delay(&vec![C64::new(0.0, 0.0); b.dimension()]).unwrap();
        assert_eq!(max_abs(zero.iter()), 0.0);
    }

    #[test]
    fn unitary_roundtrip() {
        let b = basis();
        let h = random_vec(b.dimension(), 3);
        let g = b.to_angle_delay(h.as_slice(), 0).unwrap();
        assert!((g.coefficients.norm() - h.norm()).abs() < 1e-12 * h.norm());
        let back = b.from_angle_delay(g.coefficients.as_slice()).unwrap();
        assert!((back - &h).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = basis();
        assert!(matches!(b.to_angle_delay(&[C64::new(1.0, 0.0)], 0), Err(Error::Dimension { .. })));
        assert!(b.from_angle_delay(&[]).is_err());
    }

    #[test]
    fn on_grid_path_is_one_sparse() {
        let sim = ChannelSim {
            geometry: ArrayGeometry::new(4, 4, 1).unwrap(),
            uplink: BandConfig::centered(1.92e9, 24, 30e3),
            downlink: BandConfig::centered(2.11e9, 24, 30e3),
        };
        let cfg = PathGenConfig {
            n_ue_antennas: 1,
            n_paths: 1,
            delay_spread: 300e-9,
            nominal_delay: 0.0,
            zenith_spread: 0.1,
            azimuth_spread: 0.2,
            nominal_zenith: 1.4,
            nominal_azimuth: 0.4,
            ue_speed: 30.0,
            on_grid: true,
        };
        let b = AngleDelayBasis::new(&sim.geometry, 24);
        for seed in 0..5 {
            let ps = generate_paths(&cfg, &sim.geometry, &sim.downlink, seed).unwrap();
            let h = sim.channel_at(&ps, 3, Band::Downlink);
            let g = b.to_angle_delay(h.coefficients.column(0).as_slice(), 3).unwrap();
            let big = g.coefficients.iter().filter(|z| z.norm() > 1e-10).count();
            assert_eq!(big, 1, "seed {seed}");
            let sel = select_indices(&[g], 0.5, None).unwrap();
            assert_eq!(sel.set.len(), 1);
        }
    }

    fn coeffs(p: &[f64]) -> AngleDelayCoeffs {
        AngleDelayCoeffs {
            coefficients: CVector::from_iterator(p.len(), p.iter().map(|x| C64::new(x.sqrt(), 0.0))),
            subframe: 0,
        }
    }

    /// Exhaustive oracle: smallest subset reaching the threshold.
    fn brute_force_min(p: &[f64], eta: f64) -> usize {
        let total: f64 = p.iter().sum();
        (1..=p.len())
            .find(|&k| {
                (0u32..(1 << p.len())).any(|mask| {
                    mask.count_ones() as usize == k
                        && (0..p.len()).filter(|i| mask & (1 << i) != 0).map(|i| p[i]).sum::<f64>() >= eta * total
                })
            })
            .unwrap()
    }

    #[test]
    fn selection_is_minimal() {
        let sel = select_indices(&[coeffs(&[0.5, 0.3, 0.2])], 0.7, None).unwrap();
        assert_eq!(sel.set.indices, vec![0, 1]);
        assert_eq!(brute_force_min(&[0.5, 0.3, 0.2], 0.7), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
            let eta = rng.random_range(0.05..1.0);
            let sel = select_indices(&[coeffs(&p)], eta, None).unwrap();
            assert_eq!(sel.set.len(), brute_force_min(&p, eta));
            assert!(sel.achieved_fraction >= eta - 1e-12);
        }
    }

    #[test]
    fn selection_edge_cases() {
        let sel = select_indices(&[coeffs(&[0.1, 0.0, 0.4, 0.2])], 1.0, None).unwrap();
        assert_eq!(sel.set.indices, vec![0, 2, 3]);
        assert!(matches!(select_indices(&[coeffs(&[0.0, 0.0])], 0.5, None), Err(Error::EmptySupport)));
        assert!(select_indices(&[coeffs(&[1.0])], 0.0, None).is_err());
        assert!(select_indices(&[coeffs(&[1.0])], 1.5, None).is_err());
        // Ties go to the lower index.
        let sel = select_indices(&[coeffs(&[0.25, 0.25, 0.25, 0.25])], 0.5, None).unwrap();
        assert_eq!(sel.set.indices, vec![0, 1]);
        let sel = select_indices(&[coeffs(&[0.4, 0.3, 0.2, 0.1])], 0.95, Some(2)).unwrap();
        assert!(sel.capped);
        assert_eq!(sel.set.indices, vec![0, 1]);
        assert!((sel.achieved_fraction - 0.7).abs() < 1e-12);
    }

    #[test]
    fn intersection_of_sets() {
        let a = IndexSet { indices: vec![1, 4, 6, 9] };
        let b = IndexSet { indices: vec![0, 4, 9, 12] };
        assert_eq!(a.intersection(&b), vec![4, 9]);
        assert!(a.contains(6) && !a.contains(5));
    }
}
