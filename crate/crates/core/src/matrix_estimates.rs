//! Finite-dimensional oracles for the linear-algebra estimates behind the
//! solver: commutator lower bounds for triangular and cyclic endomorphisms
//! and the F/G functionals on the positive simplex {prod a_i = 1}.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A cyclic endomorphism in an orthogonal frame: f(e_i) = e_{i+1} for
/// i < r and f(e_r) = alpha^r e_1, with frame norms |e_i|_h.
#[derive(Debug, Clone)]
pub struct CyclicFrame {
    pub r: usize,
    /// |e_1|_h .. |e_r|_h, product must be 1 (up to 1e-12).
    pub norms: Vec<f64>,
    pub alpha: Complex64,
}

impl CyclicFrame {
    pub fn new(norms: Vec<f64>, alpha: Complex64) -> Result<CyclicFrame> {
        let r = norms.len();
        if r < 2 {
            return Err(Error::Config("cyclic frame needs r >= 2".into()));
        }
        if norms.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::Config("frame norms must be positive".into()));
        }
        let prod: f64 = norms.iter().product();
        if (prod - 1.0).abs() > 1e-12 * prod.max(1.0) {
            return Err(Error::Config(format!(
                "frame norm product must be 1, got {prod}"
            )));
        }
        Ok(CyclicFrame { r, norms, alpha })
    }

    /// Ratios rho_i entering the diagonal of [f, f*]: rho_i =
    /// |e_{i+1}|^2/|e_i|^2 for i < r and rho_r = |alpha|^{2r} |e_1|^2/|e_r|^2.
    fn ratios(&self) -> Vec<f64> {
        let r = self.r;
        let sq: Vec<f64> = self.norms.iter().map(|n| n * n).collect();
        let mut rho = Vec::with_capacity(r);
        for i in 0..r - 1 {
            rho.push(sq[i + 1] / sq[i]);
        }
        rho.push(self.alpha.norm().powi(2 * r as i32) * sq[0] / sq[r - 1]);
        rho
    }

    /// Dense matrix of f in the unit frame u_i = e_i/|e_i|, in which the
    /// metric is standard and adjoints are conjugate transposes.
    pub fn dense_unit_frame(&self) -> DMatrix<Complex64> {
        let r = self.r;
        let mut m = DMatrix::zeros(r, r);
        for i in 0..r - 1 {
            m[(i + 1, i)] = Complex64::new(self.norms[i + 1] / self.norms[i], 0.0);
        }
        m[(0, r - 1)] = self.alpha.powu(r as u32) * (self.norms[0] / self.norms[r - 1]);
        m
    }

    /// |f|_h^2 in the frame.
    pub fn f_norm_sq(&self) -> f64 {
        self.ratios().iter().sum()
    }
}

/// Squared h-norm of [f, f*_h] for a cyclic frame, by the closed-form sum
/// of squared differences of consecutive ratios.
pub fn cyclic_commutator_normsq(frame: &CyclicFrame) -> f64 {
    let rho = frame.ratios();
    let r = frame.r;
    let mut total = (rho[r - 1] - rho[0]).powi(2);
    for i in 1..r {
        total += (rho[i - 1] - rho[i]).powi(2);
    }
    total
}

/// F(a) = sum (a_{i+1} - a_i)^2 + (a_1 - a_r)^2 on {prod a_i = 1}.
pub fn f_functional(a: &[f64]) -> Result<f64> {
    check_simplex(a)?;
    let r = a.len();
    let mut total = (a[0] - a[r - 1]).powi(2);
    for i in 0..r - 1 {
        total += (a[i + 1] - a[i]).powi(2);
    }
    Ok(total)
}

/// G(a) = sum a_i on {prod a_i = 1}.
pub fn g_functional(a: &[f64]) -> Result<f64> {
    check_simplex(a)?;
    Ok(a.iter().sum())
}

fn check_simplex(a: &[f64]) -> Result<()> {
    if a.is_empty() || a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Config("entries must be positive".into()));
    }
    let prod: f64 = a.iter().product();
    if (prod - 1.0).abs() > 1e-10 * prod.max(1.0) {
        return Err(Error::Config(format!("product must be 1, got {prod}")));
    }
    Ok(())
}

/// For a lower-triangular matrix, returns (|[A, A*]|_F, |A_1|_F^2) where
/// A_1 is the strictly lower part. The caller asserts
/// lhs >= C_0 rhs for the dimension-dependent constant.
pub fn triangular_commutator_bound(a: &DMatrix<Complex64>) -> Result<(f64, f64)> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::Config("matrix must be square".into()));
    }
    for i in 0..r {
        for j in i + 1..r {
            if a[(i, j)].norm() != 0.0 {
                return Err(Error::Config(
                    "strictly upper part must vanish".into(),
                ));
            }
        }
    }
    let adj = a.adjoint();
    let comm = a * &adj - &adj * a;
    let lhs = comm.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut rhs = 0.0;
    for i in 0..r {
        for j in 0..i {
            rhs += a[(i, j)].norm_sqr();
        }
    }
    Ok((lhs, rhs))
}

/// Frobenius norm of [M, M^H] for a dense matrix in a unit frame; brute
/// force cross-check for the cyclic closed form.
pub fn dense_commutator_norm(m: &DMatrix<Complex64>) -> f64 {
    let adj = m.adjoint();
    let comm = m * &adj - &adj * m;
    comm.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(norms: Vec<f64>, alpha: f64) -> CyclicFrame {
        CyclicFrame::new(norms, Complex64::new(alpha, 0.0)).unwrap()
    }

    #[test]
    fn commutator_vanishes_for_unit_frame() {
        for r in 2..=6 {
            let f = frame(vec![1.0; r], 1.0);
            assert!(cyclic_commutator_normsq(&f) < 1e-15);
        }
    }

    #[test]
    fn commutator_r2_closed_form() {
        // r = 2 with |e_2|^2/|e_1|^2 = s and alpha = 1 gives 2 (s - 1/s)^2.
        // The value depends only on the ratio, so normalize the product to 1.
        let s: f64 = 0.37;
        let n1 = s.powf(-0.25);
        let n2 = s.powf(0.25);
        let f = frame(vec![n1, n2], 1.0);
        let expected = 2.0 * (s - 1.0 / s).powi(2);
        assert!((cyclic_commutator_normsq(&f) - expected).abs() < 1e-10 * expected.max(1.0));
    }

    #[test]
    fn commutator_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for r in 2..=8 {
            for _ in 0..50 {
                let mut norms: Vec<f64> = (0..r).map(|_| rng.gen_range(0.2..3.0)).collect();
                let prod: f64 = norms.iter().product();
                let fix = prod.powf(-1.0 / r as f64);
                for n in norms.iter_mut() {
                    *n *= fix;
                }
                let alpha = Complex64::from_polar(
                    rng.gen_range(0.3..1.8),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                );
                let f = CyclicFrame::new(norms, alpha).unwrap();
                let closed = cyclic_commutator_normsq(&f).sqrt();
                let dense = dense_commutator_norm(&f.dense_unit_frame());
                assert!(
                    (closed - dense).abs() <= 1e-12 * closed.max(dense).max(1.0),
                    "r={r}: closed {closed} vs dense {dense}"
                );
            }
        }
    }

    #[test]
    fn f_and_g_hand_values() {
        let a = vec![1.0; 5];
        assert_eq!(f_functional(&a).unwrap(), 0.0);
        assert_eq!(g_functional(&a).unwrap(), 5.0);
        let a = vec![2.0, 0.5];
        assert!((f_functional(&a).unwrap() - 4.5).abs() < 1e-14);
        assert!((g_functional(&a).unwrap() - 2.5).abs() < 1e-14);
        assert!(f_functional(&[1.0, -1.0]).is_err());
        assert!(f_functional(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn f_dominates_g_squared_when_some_entry_is_small() {
        // Empirical margin for the gap lemma: if min a_i < eps then
        // F(a) > delta G(a)^2 with delta estimated on a seeded sample and
        // margin-tested on fresh samples.
        let r = 5;
        let eps = 0.1;
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            // One forced-small entry; the last entry balances the product.
            let mut a: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.5..1.5f64).exp()).collect();
            a[0] = rng.gen_range(0.005..eps);
            let prod_head: f64 = a[..r - 1].iter().product();
            a[r - 1] = 1.0 / prod_head;
            a
        };
        let ratio_of = |a: &[f64]| {
            let f = f_functional(a).unwrap();
            let g = g_functional(a).unwrap();
            f / (g * g)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut delta = f64::INFINITY;
        for _ in 0..100_000 {
            delta = delta.min(ratio_of(&sample(&mut rng)));
        }
        assert!(delta > 0.0, "estimated delta must be positive");
        // Fresh samples stay above half the estimated minimum.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            assert!(ratio_of(&sample(&mut rng)) > delta * 0.5);
        }
    }

    #[test]
    fn triangular_examples() {
        // Diagonal matrices are normal.
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-2.0, 0.0),
        ]));
        let (lhs, rhs) = triangular_commutator_bound(&d).unwrap();
        assert!(lhs < 1e-14 && rhs == 0.0);

        // A = [[0,0],[1,0]]: [A, A*] = diag(-1, 1).
        let mut a = DMatrix::zeros(2, 2);
        a[(1, 0)] = Complex64::new(1.0, 0.0);
        let (lhs, rhs) = triangular_commutator_bound(&a).unwrap();
        assert!((lhs - 2f64.sqrt()).abs() < 1e-14);
        assert!((rhs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triangular_empirical_constant_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut min_ratio = f64::INFINITY;
        for _ in 0..1000 {
            let mut a = DMatrix::zeros(4, 4);
            for i in 0..4 {
                for j in 0..=i {
                    a[(i, j)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let (lhs, rhs) = triangular_commutator_bound(&a).unwrap();
            if rhs > 1e-12 {
                min_ratio = min_ratio.min(lhs / rhs);
            }
        }
        assert!(
            min_ratio > 1e-4,
            "empirical commutator constant collapsed: {min_ratio}"
        );
    }

    #[test]
    fn upper_triangular_rejected() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(triangular_commutator_bound(&a).is_err());
    }
}
