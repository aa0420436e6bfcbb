//! Complex linear-algebra and sampling kernel used by every other module.
//!
//! Provides:
//! - [`HermitianMatrix`], a checked wrapper guaranteeing conjugate symmetry,
//! - [`hermitian_eig`], eigendecomposition with a reconstruction contract,
//! - [`psd_sqrt`], the positive-semidefinite square root with roundoff clipping,
//! - [`quad_form`], real-valued Hermitian quadratic forms,
//! - [`sample_cn`], unit-variance circularly symmetric complex Gaussian draws,
//! - [`substream`] / [`derive_seed`], the seeding scheme that keeps every
//!   estimator reproducible regardless of worker count.
//!
//! All functions here are pure; random streams are owned by the caller and
//! must not be shared across threads (derive a substream per work unit).

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = Complex<f64>;
/// Dense complex matrix (dynamically sized).
pub type CMatrix = DMatrix<C64>;
/// Dense complex column vector (dynamically sized).
pub type CVector = DVector<C64>;

/// Maximum elementwise deviation |H − Hᴴ| accepted when constructing a
/// [`HermitianMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues below `−PSD_CLIP_REL_TOL × λ_max` make [`psd_sqrt`] fail;
/// eigenvalues above that floor but below zero are clipped to zero
/// (quadrature-built correlation matrices carry roundoff at this scale).
pub const PSD_CLIP_REL_TOL: f64 = 1e-10;

/// Relative Frobenius tolerance of the [`hermitian_eig`] reconstruction and
/// unitarity contract (checked in debug builds and in tests).
pub const EIG_RECON_TOL: f64 = 1e-10;

/// A square complex matrix validated (and exactly symmetrized) to be
/// Hermitian at construction.
///
/// Downstream code relies on the invariant: quadratic forms are real,
/// eigenvalues are real, and the two triangles never disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    inner: CMatrix,
}

impl HermitianMatrix {
    /// Validates squareness, finiteness, and conjugate symmetry within
    /// [`HERMITIAN_TOL`], then stores the exactly symmetrized `(H + Hᴴ)/2`.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "matrix",
                reason: "non-finite entry".into(),
            });
        }
        let mut max_dev = 0.0f64;
        for j in 0..m.ncols() {
            for i in 0..=j {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > max_dev {
                    max_dev = dev;
                }
            }
        }
        if max_dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { max_deviation: max_dev });
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes to `(H + Hᴴ)/2` without re-validating; the averaging is
    /// bitwise symmetric, so the stored matrix is exactly Hermitian.
    pub(crate) fn symmetrize(m: CMatrix) -> Self {
        let n = m.nrows();
        let inner = CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        Self { inner }
    }

    /// Identity matrix of dimension `n`.
    pub fn identity(n: usize) -> Self {
        Self { inner: CMatrix::identity(n, n) }
    }

    /// Diagonal matrix from real entries.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            inner: CMatrix::from_fn(n, n, |i, j| {
                if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) }
            }),
        }
    }

    /// Matrix dimension M.
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    /// Borrows the underlying matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.inner
    }

    /// Consumes the wrapper and returns the matrix.
    pub fn into_matrix(self) -> CMatrix {
        self.inner
    }

    /// Real trace (diagonal imaginary parts are exactly zero by construction).
    pub fn trace_re(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)].re).sum()
    }

    /// Real part of `tr[A·B]` for Hermitian `A`, `B`, computed as the
    /// Frobenius inner product `Σ_ij A_ij·conj(B_ij)`.
    ///
    /// The trace of a product of Hermitian matrices is real; the imaginary
    /// residue must stay below 1e-9 relative and is asserted.
    pub fn product_trace(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in self.inner.iter().zip(other.inner.iter()) {
            acc += a * b.conj();
        }
        assert!(
            acc.im.abs() <= 1e-9 * acc.re.abs().max(f64::MIN_POSITIVE),
            "trace of a Hermitian product must be real (got {acc})"
        );
        Ok(acc.re)
    }

    /// `tr[H²] = Σ_ij |H_ij|²` (squared Frobenius norm; real and exact).
    pub fn squared_trace(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Complex matrix product `A·B` through faer's gemm kernels.
///
/// nalgebra's generic multiply does not vectorize complex arithmetic, which
/// makes it the bottleneck in draw-heavy loops; routing the product through
/// faer is several times faster for the fat shapes the simulators produce.
pub fn gemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(
        a.ncols(),
        b.nrows(),
        "inner dimensions must agree: {}x{} * {}x{}",
        a.nrows(),
        a.ncols(),
        b.nrows(),
        b.ncols()
    );
    let av = faer::MatRef::from_column_major_slice(a.as_slice(), a.nrows(), a.ncols());
    let bv = faer::MatRef::from_column_major_slice(b.as_slice(), b.nrows(), b.ncols());
    let prod = av * bv;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| prod[(i, j)])
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues in ascending
/// order and the matching unitary eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Eigenvalues, ascending.
    pub eigenvalues: DVector<f64>,
    /// Unitary matrix whose column `i` is the eigenvector for `eigenvalues[i]`.
    pub eigenvectors: CMatrix,
}

/// Eigendecomposition of a Hermitian matrix.
///
/// The reconstruction `Φ Λ Φᴴ` matches the input to within [`EIG_RECON_TOL`]
/// relative Frobenius error, and the eigenvector matrix is unitary to the
/// same tolerance (both checked in debug builds).
pub fn hermitian_eig(h: &HermitianMatrix) -> Result<HermitianEig> {
    let n = h.dim();
    let view = faer::MatRef::from_column_major_slice(h.matrix().as_slice(), n, n);
    let evd = view
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::EigenFailed { dim: n })?;
    let s = evd.S();
    let sv = s.column_vector();
    let eigenvalues = DVector::from_fn(n, |i, _| sv[i].re);
    let u = evd.U();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    debug_assert!(
        eig_contract_holds(h, &eigenvalues, &eigenvectors),
        "eigendecomposition violated its reconstruction/unitarity contract"
    );
    Ok(HermitianEig { eigenvalues, eigenvectors })
}

/// Verifies the reconstruction and unitarity contract (test/debug helper).
fn eig_contract_holds(h: &HermitianMatrix, lam: &DVector<f64>, v: &CMatrix) -> bool {
    let n = h.dim();
    let mut scaled = v.clone();
    for j in 0..n {
        let s = C64::new(lam[j], 0.0);
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    let recon = &scaled * v.adjoint();
    let h_norm = h.matrix().norm().max(f64::MIN_POSITIVE);
    let recon_err = (recon - h.matrix()).norm() / h_norm;
    let gram = v.adjoint() * v;
    let unit_err = (gram - CMatrix::identity(n, n)).norm() / (n as f64).sqrt();
    recon_err <= EIG_RECON_TOL && unit_err <= EIG_RECON_TOL
}

/// Positive-semidefinite square root via eigendecomposition (the single
/// canonical route; no Cholesky path, so near-singular matrices are handled
/// uniformly).
///
/// Eigenvalues in `[−PSD_CLIP_REL_TOL·λ_max, 0)` are clipped to zero before
/// the square root; anything more negative is an error carrying the
/// offending eigenvalue.
pub fn psd_sqrt(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = hermitian_eig(h)?;
    let lam_max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = -PSD_CLIP_REL_TOL * lam_max.max(0.0);
    for &lam in eig.eigenvalues.iter() {
        if lam < floor {
            return Err(Error::NotPositiveSemidefinite {
                eigenvalue: lam,
                max_eigenvalue: lam_max,
            });
        }
    }
    let n = h.dim();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let s = C64::new(eig.eigenvalues[j].max(0.0).sqrt(), 0.0);
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    let root = &scaled * eig.eigenvectors.adjoint();
    Ok(HermitianMatrix::symmetrize(root))
}

/// Real value of the quadratic form `xᴴ H x` for Hermitian `H`.
///
/// Hermitian forms are real; the imaginary residue of the computed value
/// must stay below 1e-9 of the computation's scale (`‖x‖²·‖H‖`, so that
/// legitimately tiny results — e.g. against a near-null eigenvector — don't
/// trip the check) and is asserted.
pub fn quad_form(x: &CVector, h: &HermitianMatrix) -> Result<f64> {
    if x.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: x.len(),
        });
    }
    let hx = h.matrix() * x;
    let v = x.dotc(&hx);
    let scale = (x.norm_squared() * h.matrix().norm()).max(f64::MIN_POSITIVE);
    assert!(
        v.im.abs() <= 1e-9 * scale,
        "Hermitian quadratic form must be real (got {v}, scale {scale})"
    );
    Ok(v.re)
}

/// Draws a standard circularly symmetric complex Gaussian vector CN(0, I):
/// each entry has independent real and imaginary parts of variance 1/2
/// (unit variance per entry).
pub fn sample_cn<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    CVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Derives an independent 64-bit seed for a labeled subcontext
/// (splitmix64 finalizer over the seed mixed with a scrambled label).
///
/// Used to give each experiment stage (drops, fading, calibration, ...) its
/// own seed space so adding a stage never perturbs another stage's draws.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based substream: an independent generator for work unit `stream`
/// under the given seed.
///
/// Every parallel loop draws from `substream(seed, index)` so results are a
/// deterministic function of (seed, index) alone — worker count and
/// scheduling order never change them.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = substream(seed, 0);
        let a = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        HermitianMatrix::symmetrize(a)
    }

    fn random_psd(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = substream(seed, 0);
        let a = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        HermitianMatrix::symmetrize(&a * a.adjoint())
    }

    #[test]
    fn hermitian_rejects_nonsquare() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hermitian_rejects_asymmetric() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn hermitian_rejects_nonfinite() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(
            HermitianMatrix::new(m),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn construction_symmetrizes_exactly() {
        let h = random_hermitian(6, 11);
        let m = h.matrix();
        for j in 0..6 {
            for i in 0..6 {
                assert_eq!(m[(i, j)], m[(j, i)].conj());
            }
        }
        // A perturbation within tolerance still constructs and comes out
        // exactly Hermitian.
        let mut perturbed = m.clone();
        perturbed[(1, 2)] += C64::new(5e-13, -5e-13);
        let rebuilt = HermitianMatrix::new(perturbed).unwrap();
        let r = rebuilt.matrix();
        assert_eq!(r[(1, 2)], r[(2, 1)].conj());
    }

    #[test]
    fn eig_identity_matrix() {
        let eig = hermitian_eig(&HermitianMatrix::identity(3)).unwrap();
        for &lam in eig.eigenvalues.iter() {
            assert!((lam - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_diagonal_matrix_sorts_ascending() {
        let h = HermitianMatrix::from_real_diagonal(&[2.0, 5.0]);
        let eig = hermitian_eig(&h).unwrap();
        assert!((eig.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 5.0).abs() < 1e-14);
        // Standard basis eigenvectors (up to phase).
        assert!((eig.eigenvectors[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((eig.eigenvectors[(1, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_two_by_two_hand_value() {
        // [[2, i], [-i, 2]] has characteristic polynomial (2-λ)² - 1,
        // so eigenvalues 1 and 3.
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
                C64::new(2.0, 0.0),
            ],
        );
        let eig = hermitian_eig(&HermitianMatrix::new(m).unwrap()).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstruction_and_unitarity() {
        for seed in 0..5u64 {
            let h = random_hermitian(4, 100 + seed);
            let eig = hermitian_eig(&h).unwrap();
            assert!(eig_contract_holds(&h, &eig.eigenvalues, &eig.eigenvectors));
            for w in eig.eigenvalues.as_slice().windows(2) {
                assert!(w[0] <= w[1], "eigenvalues must ascend");
            }
        }
        // Larger case at the dimension the experiments use.
        let h = random_hermitian(32, 7);
        let eig = hermitian_eig(&h).unwrap();
        assert!(eig_contract_holds(&h, &eig.eigenvalues, &eig.eigenvectors));
    }

    #[test]
    fn eig_eigenvalue_sum_matches_trace() {
        let h = random_psd(8, 21);
        let eig = hermitian_eig(&h).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        let tr = h.trace_re();
        assert!((sum - tr).abs() <= 1e-10 * tr.abs().max(1.0));
    }

    #[test]
    fn psd_sqrt_identity_and_diagonal() {
        let s = psd_sqrt(&HermitianMatrix::identity(4)).unwrap();
        assert!((s.matrix() - CMatrix::identity(4, 4)).norm() < 1e-12);

        let h = HermitianMatrix::from_real_diagonal(&[4.0, 9.0]);
        let s = psd_sqrt(&h).unwrap();
        assert!((s.matrix()[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((s.matrix()[(1, 1)].re - 3.0).abs() < 1e-12);
        assert!(s.matrix()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_multiplies_back() {
        let h = random_psd(8, 3);
        let s = psd_sqrt(&h).unwrap();
        let back = s.matrix() * s.matrix();
        let rel = (&back - h.matrix()).norm() / h.matrix().norm();
        assert!(rel < 1e-9, "S·S relative error {rel}");
        // Result is exactly Hermitian.
        for j in 0..8 {
            for i in 0..8 {
                assert_eq!(s.matrix()[(i, j)], s.matrix()[(j, i)].conj());
            }
        }
    }

    #[test]
    fn psd_sqrt_is_identity_on_projectors() {
        // P = v vᴴ / ‖v‖² has eigenvalues {1, 0, .., 0}; its root is itself.
        let mut rng = substream(5, 0);
        let v = sample_cn(6, &mut rng);
        let p = CMatrix::from_fn(6, 6, |i, j| v[i] * v[j].conj() / v.norm_squared());
        let p = HermitianMatrix::symmetrize(p);
        let s = psd_sqrt(&p).unwrap();
        // Zero eigenvalues are computed as ~1e-16 roundoff, and the square
        // root amplifies them to ~1e-8, which bounds the achievable accuracy.
        assert!((s.matrix() - p.matrix()).norm() < 1e-7);
        let back = s.matrix() * s.matrix();
        assert!((back - p.matrix()).norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_clips_roundoff_negatives() {
        // -5e-11 is within the 1e-10·λ_max clip band: accepted, clipped to 0.
        let h = HermitianMatrix::from_real_diagonal(&[1.0, -5e-11]);
        let s = psd_sqrt(&h).unwrap();
        assert!((s.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(s.matrix()[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let h = HermitianMatrix::from_real_diagonal(&[1.0, -1e-6]);
        assert!(matches!(
            psd_sqrt(&h),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn quad_form_identity_and_basis() {
        let ones = CVector::from_element(5, C64::new(1.0, 0.0));
        let v = quad_form(&ones, &HermitianMatrix::identity(5)).unwrap();
        assert!((v - 5.0).abs() < 1e-12);

        let h = random_psd(4, 9);
        let mut e1 = CVector::zeros(4);
        e1[0] = C64::new(1.0, 0.0);
        let v = quad_form(&e1, &h).unwrap();
        assert!((v - h.matrix()[(0, 0)].re).abs() < 1e-12);
    }

    #[test]
    fn quad_form_matches_direct_sum() {
        let h = random_psd(6, 13);
        let mut rng = substream(14, 0);
        let x = sample_cn(6, &mut rng);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..6 {
            for j in 0..6 {
                acc += x[i].conj() * h.matrix()[(i, j)] * x[j];
            }
        }
        let v = quad_form(&x, &h).unwrap();
        assert!((v - acc.re).abs() < 1e-10 * acc.re.abs().max(1.0));
    }

    #[test]
    fn quad_form_rejects_dimension_mismatch() {
        let x = CVector::zeros(3);
        let h = HermitianMatrix::identity(4);
        assert!(matches!(
            quad_form(&x, &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn product_trace_matches_explicit_product() {
        let a = random_psd(5, 31);
        let b = random_psd(5, 32);
        let explicit = (a.matrix() * b.matrix()).trace();
        let fast = a.product_trace(&b).unwrap();
        assert!((fast - explicit.re).abs() < 1e-10 * explicit.re.abs().max(1.0));
        assert!(explicit.im.abs() < 1e-10);
        // Squared trace agrees with the self product.
        let sq = a.squared_trace();
        assert!((sq - a.product_trace(&a).unwrap()).abs() < 1e-10 * sq);
    }

    #[test]
    fn sample_cn_first_and_second_moments() {
        let mut rng = substream(42, 0);
        let n = 100_000;
        let z = sample_cn(n, &mut rng);
        let mean = z.sum() / C64::new(n as f64, 0.0);
        let power: f64 = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let pseudo = z.iter().map(|v| v * v).sum::<C64>() / C64::new(n as f64, 0.0);
        // Mean within 5 standard errors of 0; per-entry power within [0.99, 1.01];
        // pseudo-variance near 0 (circular symmetry).
        assert!(mean.norm() < 5.0 / (n as f64).sqrt());
        assert!(power > 0.99 && power < 1.01, "mean |z|^2 = {power}");
        assert!(pseudo.norm() < 5.0 / (n as f64).sqrt());
        let var_re: f64 = z.iter().map(|v| v.re * v.re).sum::<f64>() / n as f64;
        assert!((var_re - 0.5).abs() < 0.01, "re-part variance {var_re}");
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a1 = sample_cn(4, &mut substream(7, 0));
        let a2 = sample_cn(4, &mut substream(7, 0));
        assert_eq!(a1, a2);
        let b = sample_cn(4, &mut substream(7, 1));
        assert_ne!(a1, b);
    }

    #[test]
    fn derive_seed_separates_labels() {
        let s0 = derive_seed(123, 0);
        let s1 = derive_seed(123, 1);
        let t0 = derive_seed(124, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, t0);
        assert_eq!(s0, derive_seed(123, 0));
    }
}
