//! Complex batch normalization.
//!
//! Each channel's `(re, im)` pairs are treated as 2-vectors. Over the
//! batch x spatial population the layer computes the mean `mu` and the
//! population covariance
//!
//! ```text
//! V = [[Var(re),      Cov(re, im)],
//!      [Cov(re, im),  Var(im)    ]]
//! ```
//!
//! whitens with the principal inverse square root `(V + eps I)^(-1/2)`, and
//! applies a symmetric 2x2 scale `gamma` (three scalars) plus a complex
//! shift `beta`. Statistics and gradients are accumulated in `f64` in a
//! fixed order regardless of the tensor precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::{ComplexTensor, Real, Tensor};

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, yy: 1.0, xy: 0.0 };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn add_identity(&self, eps: f64) -> Self {
        Self::new(self.xx + eps, self.yy + eps, self.xy)
    }

    /// Product of two symmetric matrices (not symmetric in general), as
    /// row-major `[[a, b], [c, d]]`.
    pub fn mul(&self, other: &Sym2) -> [[f64; 2]; 2] {
        [
            [self.xx * other.xx + self.xy * other.xy, self.xx * other.xy + self.xy * other.yy],
            [self.xy * other.xx + self.yy * other.xy, self.xy * other.xy + self.yy * other.yy],
        ]
    }

    /// `self * m * self` for symmetric `m`.
    pub fn sandwich(&self, m: &Sym2) -> Sym2 {
        let a = self.mul(m);
        let r = self;
        Sym2::new(
            a[0][0] * r.xx + a[0][1] * r.xy,
            a[1][0] * r.xy + a[1][1] * r.yy,
            a[0][0] * r.xy + a[0][1] * r.yy,
        )
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.xx >= tol && self.yy >= tol && self.det() >= tol
    }
}

/// Principal square root and inverse square root of `V + eps I`, via
/// `s = sqrt(det A)`, `t = sqrt(tr A + 2 s)`, `sqrt(A) = (A + s I) / t`.
pub fn sqrt_and_inv_sqrt_2x2(v: Sym2, eps: f64) -> Result<(Sym2, Sym2)> {
    let a = v.add_identity(eps);
    let det = a.det();
    if !(det.is_finite() && det > 0.0 && a.xx > 0.0) {
        return Err(Error::Numeric(format!(
            "covariance {a:?} is not positive definite (det = {det:e})"
        )));
    }
    let s = det.sqrt();
    let t = (a.trace() + 2.0 * s).sqrt();
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Numeric(format!("degenerate matrix square root (t = {t})")));
    }
    let sqrt = Sym2::new((a.xx + s) / t, (a.yy + s) / t, a.xy / t);
    // det(sqrt(A)) = s.
    let st = s * t;
    let inv = Sym2::new((a.yy + s) / st, (a.xx + s) / st, -a.xy / st);
    Ok((sqrt, inv))
}

/// `(V + eps I)^(-1/2)` for a symmetric PSD 2x2 matrix.
pub fn inv_sqrt_2x2(v: Sym2, eps: f64) -> Result<Sym2> {
    sqrt_and_inv_sqrt_2x2(v, eps).map(|(_, inv)| inv)
}

/// Solve `Q X + X Q = M` for symmetric `X`, with `Q` symmetric positive definite.
fn solve_sylvester(q: &Sym2, m: &Sym2) -> Sym2 {
    let (a, b, c) = (q.xx, q.xy, q.yy);
    // Unknowns (p, r, s) = (X.xx, X.xy, X.yy):
    //   2a p + 2b r        = m.xx
    //   b p + (a+c) r + b s = m.xy
    //   2b r + 2c s        = m.yy
    let det = 4.0 * (a + c) * (a * c - b * b);
    let rhs = [m.xx, m.xy, m.yy];
    let mat = [[2.0 * a, 2.0 * b, 0.0], [b, a + c, b], [0.0, 2.0 * b, 2.0 * c]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut sol = [0.0; 3];
    for (j, out) in sol.iter_mut().enumerate() {
        let mut mj = mat;
        for i in 0..3 {
            mj[i][j] = rhs[i];
        }
        *out = det3(&mj) / det;
    }
    Sym2::new(sol[0], sol[2], sol[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBnParams<T> {
    /// `(C, 3)`: `(gamma_rr, gamma_ii, gamma_ri)` per channel.
    pub gamma: Tensor<T>,
    /// `(C, 2)`: `(beta_re, beta_im)` per channel.
    pub beta: Tensor<T>,
    /// `(C, 2)`.
    pub running_mean: Tensor<T>,
    /// `(C, 3)`: `(V_rr, V_ii, V_ri)` per channel.
    pub running_cov: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

impl<T: Real> ComplexBnParams<T> {
    /// `gamma = diag(gamma_scale)`, `beta = 0`, running stats `(0, I)`.
    pub fn new(channels: usize, gamma_scale: f64) -> Self {
        let g = T::of(gamma_scale);
        let gamma = Tensor::from_fn(shape![channels, 3], |i| if i % 3 == 2 { T::zero() } else { g });
        let running_cov = Tensor::from_fn(shape![channels, 3], |i| if i % 3 == 2 { T::zero() } else { T::one() });
        Self {
            gamma,
            beta: Tensor::zeros(shape![channels, 2]),
            running_mean: Tensor::zeros(shape![channels, 2]),
            running_cov,
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape().dim(0)
    }

    pub fn gamma_matrix(&self, c: usize) -> Sym2 {
        let g = &self.gamma.data()[3 * c..3 * c + 3];
        Sym2::new(g[0].as_f64(), g[1].as_f64(), g[2].as_f64())
    }

    pub fn beta_vector(&self, c: usize) -> [f64; 2] {
        let b = &self.beta.data()[2 * c..2 * c + 2];
        [b[0].as_f64(), b[1].as_f64()]
    }

    pub fn running_stats(&self, c: usize) -> ([f64; 2], Sym2) {
        let m = &self.running_mean.data()[2 * c..2 * c + 2];
        let v = &self.running_cov.data()[3 * c..3 * c + 3];
        ([m[0].as_f64(), m[1].as_f64()], Sym2::new(v[0].as_f64(), v[1].as_f64(), v[2].as_f64()))
    }

    /// Every gamma is symmetric PSD within `tol` (pass e.g. `-1e-6`).
    pub fn check_gamma_psd(&self, tol: f64) -> Result<()> {
        for c in 0..self.channels() {
            let g = self.gamma_matrix(c);
            if !g.is_psd(tol) {
                return Err(Error::Numeric(format!("gamma of channel {c} is not PSD: {g:?}")));
            }
        }
        Ok(())
    }

    /// Exponential moving update of the running statistics.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let rm = self.running_mean.data_mut();
        for (c, mu) in stats.mean.iter().enumerate() {
            for j in 0..2 {
                rm[2 * c + j] = T::of((1.0 - m) * rm[2 * c + j].as_f64() + m * mu[j]);
            }
        }
        let rc = self.running_cov.data_mut();
        for (c, v) in stats.cov.iter().enumerate() {
            for (j, val) in [v.xx, v.yy, v.xy].into_iter().enumerate() {
                rc[3 * c + j] = T::of((1.0 - m) * rc[3 * c + j].as_f64() + m * val);
            }
        }
    }
}

/// Per-channel batch statistics from a training-mode forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<[f64; 2]>,
    pub cov: Vec<Sym2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrad<T> {
    pub input: ComplexTensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

struct Layout {
    batch: usize,
    channels: usize,
    plane: usize,
}

impl Layout {
    fn of<T: Real>(x: &ComplexTensor<T>, params: &ComplexBnParams<T>) -> Result<Self> {
        let (batch, channels, h, w) = x.shape().nchw()?;
        if channels != params.channels() {
            return Err(Error::shape("complex_bn channels", x.shape(), params.gamma.shape()));
        }
        Ok(Self {
            batch,
            channels,
            plane: h * w,
        })
    }

    fn population(&self) -> usize {
        self.batch * self.plane
    }

    /// Flat indices of channel `c` in batch-major order.
    fn indices(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.batch).flat_map(move |n| {
            let base = (n * self.channels + c) * self.plane;
            base..base + self.plane
        })
    }
}

fn channel_stats<T: Real>(x: &ComplexTensor<T>, lay: &Layout, c: usize) -> ([f64; 2], Sym2) {
    let (re, im) = (x.re().data(), x.im().data());
    let n = lay.population() as f64;
    let (mut sr, mut si) = (0.0, 0.0);
    for i in lay.indices(c) {
        sr += re[i].as_f64();
        si += im[i].as_f64();
    }
    let mu = [sr / n, si / n];
    let (mut vrr, mut vii, mut vri) = (0.0, 0.0, 0.0);
    for i in lay.indices(c) {
        let dr = re[i].as_f64() - mu[0];
        let di = im[i].as_f64() - mu[1];
        vrr += dr * dr;
        vii += di * di;
        vri += dr * di;
    }
    (mu, Sym2::new(vrr / n, vii / n, vri / n))
}

/// Forward pass. In training mode the batch statistics are used and
/// returned (the caller folds them into the running statistics with
/// [`ComplexBnParams::update_running`]); in eval mode the running
/// statistics are used.
pub fn complex_bn_forward<T: Real>(
    x: &ComplexTensor<T>,
    params: &ComplexBnParams<T>,
    training: bool,
) -> Result<(ComplexTensor<T>, Option<BatchStats>)> {
    let lay = Layout::of(x, params)?;
    if training && lay.population() < 2 {
        return Err(Error::Numeric(format!(
            "batch normalization needs at least 2 values per channel in training mode, got {}",
            lay.population()
        )));
    }
    let mut out = ComplexTensor::zeros(x.shape().clone());
    let mut stats = BatchStats {
        mean: Vec::with_capacity(lay.channels),
        cov: Vec::with_capacity(lay.channels),
    };
    let (re, im) = (x.re().data(), x.im().data());
    let (ore, oim) = out.parts_mut();
    for c in 0..lay.channels {
        let (mu, v) = if training {
            channel_stats(x, &lay, c)
        } else {
            params.running_stats(c)
        };
        let r = inv_sqrt_2x2(v, params.eps).map_err(|e| Error::Numeric(format!("channel {c}: {e}")))?;
        let g = params.gamma_matrix(c);
        let beta = params.beta_vector(c);
        // Fold gamma and the whitening matrix into one 2x2 map.
        let gr = g.mul(&r);
        for i in lay.indices(c) {
            let d = [re[i].as_f64() - mu[0], im[i].as_f64() - mu[1]];
            ore[i] = T::of(gr[0][0] * d[0] + gr[0][1] * d[1] + beta[0]);
            oim[i] = T::of(gr[1][0] * d[0] + gr[1][1] * d[1] + beta[1]);
        }
        if training {
            stats.mean.push(mu);
            stats.cov.push(v);
        }
    }
    Ok((out, training.then_some(stats)))
}

/// Exact reverse-mode pass of the training-mode forward, where the mean
/// and covariance are themselves functions of `x`.
pub fn complex_bn_backward<T: Real>(
    x: &ComplexTensor<T>,
    params: &ComplexBnParams<T>,
    grad_out: &ComplexTensor<T>,
) -> Result<BnGrad<T>> {
    let lay = Layout::of(x, params)?;
    if grad_out.shape() != x.shape() {
        return Err(Error::shape("complex_bn_backward grad_out", grad_out.shape(), x.shape()));
    }
    let n = lay.population() as f64;
    let (re, im) = (x.re().data(), x.im().data());
    let (gre, gim) = (grad_out.re().data(), grad_out.im().data());
    let mut grad_in = ComplexTensor::zeros(x.shape().clone());
    let mut dgamma = vec![T::zero(); 3 * lay.channels];
    let mut dbeta = vec![T::zero(); 2 * lay.channels];
    let (dre, dim) = grad_in.parts_mut();
    let mut gd: Vec<[f64; 2]> = Vec::with_capacity(lay.population());

    for c in 0..lay.channels {
        let (mu, v) = channel_stats(x, &lay, c);
        let (q, r) = sqrt_and_inv_sqrt_2x2(v, params.eps)?;
        let gamma = params.gamma_matrix(c);

        let mut db = [0.0; 2];
        let mut dg = [[0.0; 2]; 2];
        let mut grm = [[0.0; 2]; 2];
        for i in lay.indices(c) {
            let d = [re[i].as_f64() - mu[0], im[i].as_f64() - mu[1]];
            let xt = r.apply(d);
            let g = [gre[i].as_f64(), gim[i].as_f64()];
            let h = gamma.apply(g);
            for a in 0..2 {
                db[a] += g[a];
                for b in 0..2 {
                    dg[a][b] += g[a] * xt[b];
                    grm[a][b] += h[a] * d[b];
                }
            }
        }
        dbeta[2 * c] = T::of(db[0]);
        dbeta[2 * c + 1] = T::of(db[1]);
        dgamma[3 * c] = T::of(dg[0][0]);
        dgamma[3 * c + 1] = T::of(dg[1][1]);
        dgamma[3 * c + 2] = T::of(dg[0][1] + dg[1][0]);

        // dL/dR restricted to symmetric directions, pushed through
        // R = Q^-1 and Q^2 = V + eps I.
        let s = Sym2::new(grm[0][0], grm[1][1], 0.5 * (grm[0][1] + grm[1][0]));
        let rsr = r.sandwich(&s);
        let m = Sym2::new(-rsr.xx, -rsr.yy, -rsr.xy);
        let dv = solve_sylvester(&q, &m);

        gd.clear();
        let mut mean_gd = [0.0; 2];
        for i in lay.indices(c) {
            let d = [re[i].as_f64() - mu[0], im[i].as_f64() - mu[1]];
            let g = [gre[i].as_f64(), gim[i].as_f64()];
            let h = gamma.apply(g);
            let direct = r.apply(h);
            let via_cov = dv.apply(d);
            let v = [direct[0] + 2.0 / n * via_cov[0], direct[1] + 2.0 / n * via_cov[1]];
            mean_gd[0] += v[0];
            mean_gd[1] += v[1];
            gd.push(v);
        }
        mean_gd = [mean_gd[0] / n, mean_gd[1] / n];
        for (i, v) in lay.indices(c).zip(&gd) {
            dre[i] = T::of(v[0] - mean_gd[0]);
            dim[i] = T::of(v[1] - mean_gd[1]);
        }
    }

    Ok(BnGrad {
        input: grad_in,
        gamma: Tensor::new(params.gamma.shape().clone(), dgamma)?,
        beta: Tensor::new(params.beta.shape().clone(), dbeta)?,
    })
}
