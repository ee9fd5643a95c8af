//! Holomorphic r-differentials q = q(z) dz^r.
//!
//! q is a polynomial in z, optionally multiplied by a central Laurent
//! factor z^-s for use on annuli. This covers every regime exercised here
//! (monomials z^m dz^r, differentials with finitely many zeros,
//! nonvanishing differentials).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::grid::{DomainGrid, Region};

#[derive(Debug, Clone, PartialEq)]
pub struct RDifferential {
    order: u32,
    /// Polynomial coefficients c_0..c_m with nonzero leading coefficient
    /// unless q = 0.
    coeffs: Vec<Complex64>,
    laurent_shift: u32,
}

/// A located root with its multiplicity.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub location: Complex64,
    pub multiplicity: usize,
}

impl RDifferential {
    /// A polynomial differential q = (sum c_k z^k) dz^r, r >= 2.
    pub fn new(order: u32, coeffs: Vec<Complex64>) -> Result<RDifferential> {
        Self::with_laurent(order, coeffs, 0)
    }

    /// Adds a central factor z^-shift. Only valid on domains excluding 0.
    pub fn with_laurent(order: u32, mut coeffs: Vec<Complex64>, shift: u32) -> Result<RDifferential> {
        if order < 2 {
            return Err(Error::Config(format!(
                "differential order must be >= 2, got {order}"
            )));
        }
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Ok(RDifferential {
            order,
            coeffs,
            laurent_shift: shift,
        })
    }

    /// The zero differential of a given order.
    pub fn zero(order: u32) -> RDifferential {
        RDifferential {
            order,
            coeffs: vec![Complex64::new(0.0, 0.0)],
            laurent_shift: 0,
        }
    }

    /// q = z^m dz^r.
    pub fn monomial(order: u32, m: usize) -> RDifferential {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); m + 1];
        coeffs[m] = Complex64::new(1.0, 0.0);
        RDifferential {
            order,
            coeffs,
            laurent_shift: 0,
        }
    }

    #[inline]
    pub fn order(&self) -> u32 {
        self.order
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn laurent_shift(&self) -> u32 {
        self.laurent_shift
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Largest coefficient modulus, used as the residual scale.
    pub fn coeff_scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Evaluate q(z) by Horner ordering (times z^-shift when present).
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        if self.laurent_shift > 0 {
            if z.norm() == 0.0 {
                return Err(Error::PoleAtOrigin {
                    shift: self.laurent_shift,
                });
            }
            acc *= z.powi(-(self.laurent_shift as i32));
        }
        Ok(acc)
    }

    /// Shift the argument: returns z -> q(z + s) as a differential with the
    /// same order and no Laurent factor. Taylor shift by repeated synthetic
    /// division by (w - s).
    pub fn recentered(&self, s: Complex64) -> RDifferential {
        let mut a = self.coeffs.clone();
        let m = a.len();
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let deg = a.len() - 1;
            if deg == 0 {
                out.push(a[0]);
                a[0] = Complex64::new(0.0, 0.0);
                continue;
            }
            let mut q = vec![Complex64::new(0.0, 0.0); deg];
            q[deg - 1] = a[deg];
            for k in (1..deg).rev() {
                q[k - 1] = a[k] + s * q[k];
            }
            out.push(a[0] + s * q[0]);
            a = q;
        }
        RDifferential::with_laurent(self.order, out, 0).expect("order preserved")
    }

    /// Pullback under the rotation F(z) = e^{i phi} z:
    /// (F*q)(z) = q(e^{i phi} z) e^{i r phi}, so c_k picks up the phase
    /// e^{i (k + r - shift) phi}.
    pub fn pullback_rotation(&self, phi: f64) -> RDifferential {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let phase = (k as f64 + self.order as f64 - self.laurent_shift as f64) * phi;
                c * Complex64::from_polar(1.0, phase)
            })
            .collect();
        RDifferential {
            order: self.order,
            coeffs,
            laurent_shift: self.laurent_shift,
        }
    }

    /// All polynomial roots, by Aberth simultaneous iteration with one
    /// Newton polish per root. Residual contract: |q(root)| <= 1e-10 times
    /// the coefficient scale.
    pub fn all_roots(&self) -> Result<Vec<Complex64>> {
        if self.is_zero() {
            return Err(Error::DegenerateDifferential);
        }
        let deg = self.degree();
        if deg == 0 {
            return Ok(Vec::new());
        }
        let c = &self.coeffs;
        let lead = c[deg];
        // Cauchy bound for the root radius.
        let bound = 1.0
            + c[..deg]
                .iter()
                .fold(0.0f64, |m, ck| m.max((ck / lead).norm()));
        let mut roots: Vec<Complex64> = (0..deg)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4;
                Complex64::from_polar(0.5 * bound, angle)
            })
            .collect();
        let poly_eval = |z: Complex64| -> (Complex64, Complex64) {
            let mut p = Complex64::new(0.0, 0.0);
            let mut dp = Complex64::new(0.0, 0.0);
            for &ck in c.iter().rev() {
                dp = dp * z + p;
                p = p * z + ck;
            }
            (p, dp)
        };
        for _ in 0..200 {
            let mut moved = 0.0f64;
            for i in 0..deg {
                let z = roots[i];
                let (p, dp) = poly_eval(z);
                if p.norm() == 0.0 {
                    continue;
                }
                let newton = if dp.norm() > 0.0 { p / dp } else { p };
                let mut repel = Complex64::new(0.0, 0.0);
                for (j, &w) in roots.iter().enumerate() {
                    if j != i {
                        let d = z - w;
                        if d.norm() > 1e-300 {
                            repel += 1.0 / d;
                        }
                    }
                }
                let denom = Complex64::new(1.0, 0.0) - newton * repel;
                let step = if denom.norm() > 1e-300 {
                    newton / denom
                } else {
                    newton
                };
                roots[i] = z - step;
                moved = moved.max(step.norm());
            }
            if moved < 1e-14 * bound.max(1.0) {
                break;
            }
        }
        // One Newton polish.
        for z in roots.iter_mut() {
            let (p, dp) = poly_eval(*z);
            if dp.norm() > 0.0 {
                *z -= p / dp;
            }
        }
        let scale = self.coeff_scale();
        let tol_residual = 1e-10 * scale.max(1.0);
        let mut worst = 0.0f64;
        for &z in &roots {
            let (p, _) = poly_eval(z);
            worst = worst.max(p.norm());
        }
        // Multiple roots are found to ~eps^(1/mu) in position but the
        // polynomial value there is eps-small, so the residual contract
        // still discriminates success from failure.
        if worst > tol_residual * 1e4 {
            return Err(Error::RootFinding {
                worst: worst / scale.max(1.0),
            });
        }
        Ok(roots)
    }

    /// Roots inside a grid's region, clustered into multiplicities.
    pub fn zeros_in(&self, grid: &DomainGrid) -> Result<Vec<Root>> {
        let roots = self.all_roots()?;
        let inside = |z: Complex64| -> bool {
            match grid.region {
                Region::Disk { radius, center } => {
                    (z - Complex64::new(center.0, center.1)).norm() < radius
                }
                Region::Annulus {
                    inner,
                    outer,
                    center,
                } => {
                    let d = (z - Complex64::new(center.0, center.1)).norm();
                    d > inner && d < outer
                }
                Region::Square { half } => z.re.abs() < half && z.im.abs() < half,
            }
        };
        let scale = 1.0
            + roots
                .iter()
                .fold(0.0f64, |m, z| m.max(z.norm()));
        let cluster_tol = 1e-6 * scale;
        let mut clusters: Vec<(Complex64, usize)> = Vec::new();
        for z in roots.into_iter().filter(|&z| inside(z)) {
            match clusters
                .iter_mut()
                .find(|(c, _)| (*c - z).norm() < cluster_tol)
            {
                Some((c, count)) => {
                    // Running mean keeps the cluster centered.
                    *c = (*c * *count as f64 + z) / (*count as f64 + 1.0);
                    *count += 1;
                }
                None => clusters.push((z, 1)),
            }
        }
        Ok(clusters
            .into_iter()
            .map(|(location, multiplicity)| Root {
                location,
                multiplicity,
            })
            .collect())
    }

    /// Number of polynomial roots inside the circle |z - center| = radius,
    /// counted with multiplicity by the argument principle. Independent
    /// cross-check for the iterative root finder. The Laurent pole is
    /// compensated when the contour encloses the origin.
    pub fn winding_number(&self, center: Complex64, radius: f64, samples: usize) -> Result<i64> {
        let mut total = 0.0f64;
        let mut prev_arg = None;
        for k in 0..=samples {
            let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            let z = center + Complex64::from_polar(radius, t);
            let v = self.eval(z)?;
            if v.norm() == 0.0 {
                return Err(Error::Config(
                    "winding contour passes through a zero".into(),
                ));
            }
            let arg = v.arg();
            if let Some(p) = prev_arg {
                let mut d: f64 = arg - p;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                total += d;
            }
            prev_arg = Some(arg);
        }
        let winding = (total / (2.0 * std::f64::consts::PI)).round() as i64;
        let pole = if self.laurent_shift > 0 && center.norm() < radius {
            self.laurent_shift as i64
        } else {
            0
        };
        Ok(winding + pole)
    }
}
