//! Random subspace sampling.
//!
//! Orthonormal bases are drawn Haar-uniformly by filling an n x d matrix with
//! independent standard normals and taking its thin QR factor. The RNG is a
//! hand-rolled SplitMix64 stream with Box-Muller normals so that runs are
//! bit-for-bit reproducible across platforms from a single u64 seed; no
//! global or thread-local state is involved.

use crate::linalg::{norm2, thin_qr, LinalgError, Matrix};
use thiserror::Error;

/// Attempts at drawing a full-rank Gaussian matrix before giving up. A rank
/// deficient draw has probability zero in exact arithmetic, so retries only
/// paper over floating-point freak events.
const MAX_SAMPLE_ATTEMPTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SubspaceError {
    #[error("invalid subspace dimension d={d} for ambient dimension n={n}")]
    InvalidDimension { n: usize, d: usize },
    #[error("failed to draw a full-rank Gaussian matrix after {attempts} attempts")]
    RankDeficient { attempts: usize },
}

/// Deterministic counter-based RNG (SplitMix64).
#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    state: u64,
    /// Spare normal from the last Box-Muller pair, if any.
    cached_normal: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed, cached_normal: None }
    }

    /// Next raw 64-bit output (SplitMix64 increment and finalizer).
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in the open interval (0, 1); never exactly 0 or 1, so it
    /// is safe to take logarithms.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller. Draws are generated in pairs (two
    /// uniforms per pair) and the spare is cached, so the number of raw RNG
    /// outputs consumed is deterministic in the number of normals requested.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill a buffer with independent standard normals.
    pub fn fill_normal(&mut self, buf: &mut [f64]) {
        for v in buf.iter_mut() {
            *v = self.next_normal();
        }
    }

    /// Derive an independent child stream, consuming one raw output from the
    /// parent. Used to hand each sweep worker its own stream.
    pub fn split(&mut self) -> RngState {
        RngState::new(self.next_u64() ^ 0x6a09_e667_f3bc_c909)
    }
}

/// Orthonormal basis of a d-dimensional subspace of R^n (columns of U).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    u: Matrix,
}

impl SubspaceBasis {
    pub fn from_matrix(u: Matrix) -> Self {
        SubspaceBasis { u }
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn dim(&self) -> usize {
        self.u.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.u
    }

    /// Lift reduced coordinates into the ambient space: U a.
    pub fn lift(&self, alpha: &[f64]) -> Vec<f64> {
        self.u.matvec(alpha)
    }

    /// Project an ambient vector onto the subspace coordinates: U^T v.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.u.tr_matvec(v)
    }

    /// Column j of U, the j-th basis direction.
    pub fn direction(&self, j: usize) -> Vec<f64> {
        self.u.col(j)
    }
}

/// Draw a Haar-uniform orthonormal basis for a random d-dimensional subspace
/// of R^n: fill G with i.i.d. standard normals and orthonormalize by thin QR.
pub fn sample_subspace(
    n: usize,
    d: usize,
    rng: &mut RngState,
) -> Result<SubspaceBasis, SubspaceError> {
    if d == 0 || d > n {
        return Err(SubspaceError::InvalidDimension { n, d });
    }
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let mut g = Matrix::zeros(n, d);
        for i in 0..n {
            rng.fill_normal(g.row_mut(i));
        }
        match thin_qr(&g) {
            Ok((q, _)) => return Ok(SubspaceBasis::from_matrix(q)),
            Err(LinalgError::RankDeficient { .. }) => continue,
            Err(_) => continue,
        }
    }
    Err(SubspaceError::RankDeficient { attempts: MAX_SAMPLE_ATTEMPTS })
}

/// Squared norm of the projection of a fixed unit vector onto a random
/// subspace; used by the verification suite to check the d/n mean law.
pub fn projection_energy(basis: &SubspaceBasis, v: &[f64]) -> f64 {
    let p = basis.project(v);
    let nv = norm2(v);
    let np = norm2(&p);
    (np / nv).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn rng_is_reproducible() {
        let mut a = RngState::new(123);
        let mut b = RngState::new(123);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = RngState::new(123);
        let mut b = RngState::new(123);
        for _ in 0..100 {
            assert!(a.next_normal() == b.next_normal());
        }
    }

    #[test]
    fn rng_uniforms_in_open_interval() {
        let mut rng = RngState::new(4);
        for _ in 0..10_000 {
            let u = rng.next_uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn rng_normals_have_sane_moments() {
        let mut rng = RngState::new(9);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.next_normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn split_streams_differ_from_parent() {
        let mut parent = RngState::new(55);
        let mut child = parent.split();
        let a: Vec<u64> = (0..8).map(|_| parent.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| child.next_u64()).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn sampled_basis_is_orthonormal() {
        let mut rng = RngState::new(1);
        for &(n, d) in &[(5, 1), (10, 3), (50, 10), (100, 20), (7, 7)] {
            let basis = sample_subspace(n, d, &mut rng).unwrap();
            let u = basis.matrix();
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    let got = dot(&u.col(i), &u.col(j));
                    assert!((got - expect).abs() <= 1e-12, "(n={n},d={d}) entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_dimensions() {
        let mut rng = RngState::new(0);
        assert_eq!(
            sample_subspace(5, 0, &mut rng),
            Err(SubspaceError::InvalidDimension { n: 5, d: 0 })
        );
        assert_eq!(
            sample_subspace(5, 6, &mut rng),
            Err(SubspaceError::InvalidDimension { n: 5, d: 6 })
        );
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let mut r1 = RngState::new(77);
        let mut r2 = RngState::new(77);
        let b1 = sample_subspace(20, 4, &mut r1).unwrap();
        let b2 = sample_subspace(20, 4, &mut r2).unwrap();
        assert_eq!(b1.matrix(), b2.matrix());
    }

    #[test]
    fn lift_and_project_round_trip() {
        let mut rng = RngState::new(12);
        let basis = sample_subspace(30, 6, &mut rng).unwrap();
        let alpha: Vec<f64> = (0..6).map(|_| rng.next_normal()).collect();
        let x = basis.lift(&alpha);
        let back = basis.project(&x);
        for (a, b) in alpha.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // SubspaceError::RankDeficient is unreachable with Gaussian draws; the
    // retry limit exists purely as a floating-point safety net.
}
