//! Nesterov–Todd scalings and Jordan-algebra helpers for each cone.
//!
//! Every scaling `W` satisfies `W z = W^{-T} s = λ`. Vectors in the PSD cone
//! are stored with [`svec`](crate::linalg::svec).

use nalgebra::{DMatrix, DVector};

use super::Cone;
use crate::linalg::{smat, svec, svec_len, symmetric_eigen};

#[derive(Debug, Clone)]
pub enum ConeScaling {
    NonNeg {
        w: DVector<f64>,
        lambda: DVector<f64>,
    },
    Soc {
        eta: f64,
        wbar: DVector<f64>,
        lambda: DVector<f64>,
    },
    Psd {
        order: usize,
        r: DMatrix<f64>,
        /// `r^{-T}`.
        rti: DMatrix<f64>,
        /// Diagonal of the scaled point.
        lambda: DVector<f64>,
    },
}

/// Identity element of the cone.
pub fn cone_identity(cone: Cone) -> DVector<f64> {
    match cone {
        Cone::NonNeg(n) => DVector::from_element(n, 1.0),
        Cone::Soc(n) => {
            let mut e = DVector::zeros(n);
            e[0] = 1.0;
            e
        }
        Cone::Psd(d) => svec(&DMatrix::identity(d, d)),
    }
}

/// Smallest "eigenvalue" of `v` in the cone's Jordan algebra; positive iff interior.
pub fn cone_min_eig(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::NonNeg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => v[0] - norm(&v[1..]),
        Cone::Psd(d) => {
            if d == 0 {
                return f64::INFINITY;
            }
            symmetric_eigen(&smat(v, d)).map_or(f64::NEG_INFINITY, |e| e.eigenvalues.min())
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v' J v` with `J = diag(1, -1, ..., -1)`.
fn soc_det(v: &[f64]) -> f64 {
    v[0] * v[0] - dot(&v[1..], &v[1..])
}

impl ConeScaling {
    /// Scaling with `W = I` (used for the initial point).
    pub fn identity(cone: Cone) -> Self {
        match cone {
            Cone::NonNeg(n) => ConeScaling::NonNeg {
                w: DVector::from_element(n, 1.0),
                lambda: DVector::from_element(n, 1.0),
            },
            Cone::Soc(n) => {
                let e = cone_identity(cone);
                ConeScaling::Soc {
                    eta: 1.0,
                    wbar: e.clone(),
                    lambda: DVector::zeros(n),
                }
            }
            Cone::Psd(d) => ConeScaling::Psd {
                order: d,
                r: DMatrix::identity(d, d),
                rti: DMatrix::identity(d, d),
                lambda: DVector::from_element(d, 1.0),
            },
        }
    }

    /// NT scaling for interior `s`, `z`. `None` if either point has left the cone numerically.
    pub fn new(cone: Cone, s: &[f64], z: &[f64]) -> Option<Self> {
        match cone {
            Cone::NonNeg(_) => {
                if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let w = DVector::from_iterator(s.len(), s.iter().zip(z).map(|(a, b)| (a / b).sqrt()));
                let lambda = DVector::from_iterator(s.len(), s.iter().zip(z).map(|(a, b)| (a * b).sqrt()));
                Some(ConeScaling::NonNeg { w, lambda })
            }
            Cone::Soc(n) => {
                let (sd, zd) = (soc_det(s), soc_det(z));
                if !(sd > 0.0 && zd > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sd.sqrt(), zd.sqrt());
                let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut wbar = DVector::zeros(n);
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..n {
                    wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                let eta = (sn / zn).sqrt();
                let mut sc = ConeScaling::Soc {
                    eta,
                    wbar,
                    lambda: DVector::zeros(n),
                };
                let lambda = sc.apply_w(z);
                if let ConeScaling::Soc { lambda: l, .. } = &mut sc {
                    *l = lambda;
                }
                Some(sc)
            }
            Cone::Psd(d) => {
                let ls = smat(s, d).cholesky()?.l();
                let lz = smat(z, d).cholesky()?.l();
                let svd = (lz.transpose() * &ls).try_svd(true, true, 1e-15, 10_000)?;
                let (u, vt) = (svd.u?, svd.v_t?);
                let lam = svd.singular_values;
                if lam.iter().any(|&v| !(v > 0.0)) {
                    return None;
                }
                let inv_sqrt = DMatrix::from_diagonal(&lam.map(|v| 1.0 / v.sqrt()));
                let r = &ls * vt.transpose() * &inv_sqrt;
                let rti = &lz * u * &inv_sqrt;
                Some(ConeScaling::Psd {
                    order: d,
                    r,
                    rti,
                    lambda: lam,
                })
            }
        }
    }

    /// `λ` in the cone's storage format.
    pub fn lambda(&self) -> DVector<f64> {
        match self {
            ConeScaling::NonNeg { lambda, .. } | ConeScaling::Soc { lambda, .. } => lambda.clone(),
            ConeScaling::Psd { lambda, .. } => svec(&DMatrix::from_diagonal(lambda)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConeScaling::NonNeg { w, .. } => w.len(),
            ConeScaling::Soc { wbar, .. } => wbar.len(),
            ConeScaling::Psd { order, .. } => svec_len(*order),
        }
    }

    fn soc_apply(eta: f64, wbar: &DVector<f64>, v: &[f64], inverse: bool) -> DVector<f64> {
        // W̄ v with W̄ = [w0, w1'; w1, I + w1 w1'/(1 + w0)]; W̄^{-1} = J W̄ J.
        let n = v.len();
        let w0 = wbar[0];
        let w1 = wbar.rows(1, n - 1);
        let sign = if inverse { -1.0 } else { 1.0 };
        let v0 = v[0];
        let v1 = DVector::from_column_slice(&v[1..]);
        let w1v1 = w1.dot(&v1);
        let mut out = DVector::zeros(n);
        out[0] = w0 * v0 + sign * w1v1;
        let coef = sign * v0 + w1v1 / (1.0 + w0);
        for i in 1..n {
            out[i] = v1[i - 1] + coef * w1[i - 1];
        }
        let scale = if inverse { 1.0 / eta } else { eta };
        out * scale
    }

    fn psd_congruence(m: &DMatrix<f64>, v: &[f64], d: usize, transpose_first: bool) -> DVector<f64> {
        let x = smat(v, d);
        let y = if transpose_first {
            m.transpose() * x * m
        } else {
            m * x * m.transpose()
        };
        svec(&y)
    }

    /// `W v`.
    pub fn apply_w(&self, v: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::NonNeg { w, .. } => DVector::from_iterator(v.len(), v.iter().zip(w.iter()).map(|(a, b)| a * b)),
            ConeScaling::Soc { eta, wbar, .. } => Self::soc_apply(*eta, wbar, v, false),
            ConeScaling::Psd { order, r, .. } => Self::psd_congruence(r, v, *order, true),
        }
    }

    /// `Wᵀ v`.
    pub fn apply_wt(&self, v: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::Psd { order, r, .. } => Self::psd_congruence(r, v, *order, false),
            _ => self.apply_w(v),
        }
    }

    /// `W^{-1} v`.
    pub fn apply_winv(&self, v: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::NonNeg { w, .. } => DVector::from_iterator(v.len(), v.iter().zip(w.iter()).map(|(a, b)| a / b)),
            ConeScaling::Soc { eta, wbar, .. } => Self::soc_apply(*eta, wbar, v, true),
            ConeScaling::Psd { order, rti, .. } => Self::psd_congruence(rti, v, *order, false),
        }
    }

    /// `W^{-T} v`.
    pub fn apply_wit(&self, v: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::Psd { order, rti, .. } => Self::psd_congruence(rti, v, *order, true),
            _ => self.apply_winv(v),
        }
    }

    /// Jordan product `u ∘ v`.
    pub fn jordan(&self, u: &[f64], v: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::NonNeg { .. } => DVector::from_iterator(u.len(), u.iter().zip(v).map(|(a, b)| a * b)),
            ConeScaling::Soc { .. } => {
                let mut out = DVector::zeros(u.len());
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
                out
            }
            ConeScaling::Psd { order, .. } => {
                let (a, b) = (smat(u, *order), smat(v, *order));
                let p = &a * &b;
                svec(&((&p + p.transpose()) * 0.5))
            }
        }
    }

    /// Solve `λ ∘ x = u` for `x`.
    pub fn lambda_div(&self, u: &[f64]) -> DVector<f64> {
        match self {
            ConeScaling::NonNeg { lambda, .. } => {
                DVector::from_iterator(u.len(), u.iter().zip(lambda.iter()).map(|(a, l)| a / l))
            }
            ConeScaling::Soc { lambda, .. } => {
                let l = lambda.as_slice();
                let det = soc_det(l);
                let mut out = DVector::zeros(u.len());
                out[0] = (l[0] * u[0] - dot(&l[1..], &u[1..])) / det;
                for i in 1..u.len() {
                    out[i] = (u[i] - out[0] * l[i]) / l[0];
                }
                out
            }
            ConeScaling::Psd { order, lambda, .. } => {
                let y = smat(u, *order);
                let x = DMatrix::from_fn(*order, *order, |i, j| 2.0 * y[(i, j)] / (lambda[i] + lambda[j]));
                svec(&x)
            }
        }
    }

    /// Largest `α` with `λ + α u` in the cone (`∞` if unbounded).
    pub fn max_step(&self, u: &[f64]) -> f64 {
        match self {
            ConeScaling::NonNeg { lambda, .. } => u
                .iter()
                .zip(lambda.iter())
                .filter(|(d, _)| **d < 0.0)
                .map(|(d, l)| -l / d)
                .fold(f64::INFINITY, f64::min),
            ConeScaling::Soc { lambda, .. } => soc_max_step(lambda.as_slice(), u),
            ConeScaling::Psd { order, lambda, .. } => {
                let d = *order;
                if d == 0 {
                    return f64::INFINITY;
                }
                let x = smat(u, d);
                let isq = lambda.map(|v| 1.0 / v.sqrt());
                let y = DMatrix::from_fn(d, d, |i, j| isq[i] * x[(i, j)] * isq[j]);
                match symmetric_eigen(&y) {
                    Ok(e) => {
                        let m = e.eigenvalues.min();
                        if m < 0.0 {
                            -1.0 / m
                        } else {
                            f64::INFINITY
                        }
                    }
                    Err(_) => 0.0,
                }
            }
        }
    }
}

/// Largest `α ≥ 0` with `λ + α u ∈ SOC` for interior `λ`.
fn soc_max_step(l: &[f64], u: &[f64]) -> f64 {
    let a = soc_det(u);
    let b = 2.0 * (l[0] * u[0] - dot(&l[1..], &u[1..]));
    let c = soc_det(l);
    let mut alpha = f64::INFINITY;
    if u[0] < 0.0 {
        alpha = -l[0] / u[0];
    }
    // Smallest positive root of a α² + b α + c (c > 0).
    let root = if a.abs() < 1e-300 {
        if b < 0.0 {
            -c / b
        } else {
            f64::INFINITY
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            f64::INFINITY
        } else {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            let (r1, r2) = (q / a, if q != 0.0 { c / q } else { f64::INFINITY });
            [r1, r2]
                .into_iter()
                .filter(|r| *r > 0.0)
                .fold(f64::INFINITY, f64::min)
        }
    };
    alpha.min(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_vec;

    fn check_nt(cone: Cone, s: &[f64], z: &[f64]) {
        let sc = ConeScaling::new(cone, s, z).unwrap();
        let wz = sc.apply_w(z);
        let ws = sc.apply_wit(s);
        assert!(max_abs_vec(&(&wz - &ws)) < 1e-10, "Wz != W^-T s: {wz} vs {ws}");
        assert!(max_abs_vec(&(&wz - sc.lambda())) < 1e-10);
        let v: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let back = sc.apply_winv(sc.apply_w(&v).as_slice());
        assert!(max_abs_vec(&(back - DVector::from_column_slice(&v))) < 1e-10);
        let back = sc.apply_wit(sc.apply_wt(&v).as_slice());
        assert!(max_abs_vec(&(back - DVector::from_column_slice(&v))) < 1e-10);
        // λ ∘ (λ \ v) = v
        let x = sc.lambda_div(&v);
        let lx = sc.jordan(sc.lambda().as_slice(), x.as_slice());
        assert!(max_abs_vec(&(lx - DVector::from_column_slice(&v))) < 1e-10);
    }

    #[test]
    fn nt_identity_holds_for_all_cones() {
        check_nt(Cone::NonNeg(3), &[1.0, 2.0, 0.5], &[0.3, 4.0, 1.0]);
        check_nt(Cone::Soc(3), &[2.0, 0.5, -1.0], &[1.5, -0.3, 0.4]);
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.5]);
        let z = DMatrix::from_row_slice(3, 3, &[1.0, -0.4, 0.0, -0.4, 2.0, 0.5, 0.0, 0.5, 0.8]);
        check_nt(Cone::Psd(3), svec(&s).as_slice(), svec(&z).as_slice());
    }

    #[test]
    fn step_lengths_hit_the_boundary() {
        let sc = ConeScaling::new(Cone::Soc(2), &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        let a = sc.max_step(&[0.0, 1.0]);
        assert!((a - 1.0).abs() < 1e-12);
        let sc = ConeScaling::identity(Cone::Psd(2));
        let u = svec(&DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]));
        assert!((sc.max_step(u.as_slice()) - 0.5).abs() < 1e-12);
        let sc = ConeScaling::identity(Cone::NonNeg(2));
        assert!((sc.max_step(&[-4.0, 1.0]) - 0.25).abs() < 1e-12);
        assert!(sc.max_step(&[1.0, 1.0]).is_infinite());
    }
}
