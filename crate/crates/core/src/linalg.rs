//! Dense matrix primitives: truncated SVD, QR orthonormalization, Frobenius
//! norms and row-space projections.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Every routine here is a pure
//! function of its inputs; the warm-started [`TruncatedSvd`] solver is the
//! only stateful piece and its state only affects iteration counts, not the
//! converged result beyond the solver tolerance.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Singular values below `PINV_RTOL * sigma_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// A (possibly truncated) singular value decomposition `a ≈ left · diag(singvals) · rightᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub left: Mat,
    pub singvals: Vec<f64>,
    pub right: Mat,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singvals.len()
    }

    pub fn reconstruct(&self) -> Mat {
        let mut scaled = self.left.clone();
        for (j, s) in self.singvals.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.transpose()
    }

    fn empty(m: usize, n: usize) -> Self {
        SvdFactors {
            left: Mat::zeros(m, 0),
            singvals: Vec::new(),
            right: Mat::zeros(n, 0),
        }
    }
}

pub fn check_finite(a: &Mat, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % a.nrows(), pos / a.nrows());
        return Err(Error::Input(format!(
            "{what}: non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

pub fn frobenius_sq(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Best rank-`r` approximation factors of `a`, with `1 <= r <= min(rows, cols)`.
///
/// Each left singular vector is flipped so that its largest-magnitude entry
/// is positive; the matching right vector flips with it.
pub fn svd_truncated(a: &Mat, r: usize) -> Result<SvdFactors> {
    let k = a.nrows().min(a.ncols());
    if r == 0 || r > k {
        return Err(Error::Rank(format!(
            "truncation rank {r} outside 1..={k} for a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "svd input")?;
    Ok(dense_svd(a, r))
}

/// Dense thin SVD keeping the leading `r` triplets (`r` may be 0).
pub(crate) fn dense_svd(a: &Mat, r: usize) -> SvdFactors {
    let (m, n) = a.shape();
    if r == 0 || m == 0 || n == 0 {
        return SvdFactors::empty(m, n);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v = svd.v_t.expect("right vectors requested").transpose();
    let s = svd.singular_values;
    canonical_factors(u, s.as_slice(), v, r)
}

/// Sorts triplets by descending singular value (ties by the first differing
/// left-vector entry), applies the sign convention and truncates to `r`.
fn canonical_factors(mut u: Mat, s: &[f64], mut v: Mat, r: usize) -> SvdFactors {
    for j in 0..u.ncols() {
        fix_sign(&mut u, &mut v, j);
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| compare_columns_desc(&u, a, b))
    });
    let r = r.min(order.len());
    let left = Mat::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
    let right = Mat::from_fn(v.nrows(), r, |i, j| v[(i, order[j])]);
    let singvals = order[..r].iter().map(|&j| s[j].max(0.0)).collect();
    SvdFactors {
        left,
        singvals,
        right,
    }
}

fn compare_columns_desc(u: &Mat, a: usize, b: usize) -> Ordering {
    for i in 0..u.nrows() {
        match u[(i, b)].partial_cmp(&u[(i, a)]) {
            Some(Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    Ordering::Equal
}

fn fix_sign(u: &mut Mat, v: &mut Mat, j: usize) {
    let col = u.column(j);
    let mut best = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col.len() > 0 && col[best] < 0.0 {
        u.column_mut(j).neg_mut();
        v.column_mut(j).neg_mut();
    }
}

/// Orthonormal basis for the column space of a full-column-rank matrix.
///
/// Columns are oriented so the corresponding diagonal entry of R is positive.
pub fn qr_orthonormalize(a: &Mat) -> Result<Mat> {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return Err(Error::Shape(format!("cannot orthonormalize a {m}x{n} matrix")));
    }
    if n > m {
        return Err(Error::Shape(format!(
            "qr_orthonormalize needs cols <= rows, got {m}x{n}"
        )));
    }
    check_finite(a, "qr input")?;
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = (0..n).map(|j| a.column(j).norm()).fold(0.0, f64::max);
    for j in 0..n {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Degeneracy(format!(
                "matrix is rank deficient (column {j} is dependent on earlier columns)"
            )));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Orthonormal basis (n × rank) of the row space of `s` (r × n).
pub fn row_space_basis(s: &Mat) -> Mat {
    let n = s.ncols();
    if s.nrows() == 0 || n == 0 {
        return Mat::zeros(n, 0);
    }
    let f = dense_svd(s, s.nrows().min(n));
    let smax = f.singvals.first().copied().unwrap_or(0.0);
    let rank = f
        .singvals
        .iter()
        .take_while(|&&v| smax > 0.0 && v > PINV_RTOL * smax)
        .count();
    f.right.columns(0, rank).into_owned()
}

/// `I − sᵀ(s sᵀ)⁺ s`: the projector onto the orthogonal complement of row(s).
pub fn proj_complement_rows(s: &Mat) -> Mat {
    let n = s.ncols();
    let v = row_space_basis(s);
    Mat::identity(n, n) - &v * v.transpose()
}

/// Right-multiplies `a` by the complement projector of the row space spanned by
/// the orthonormal columns of `basis`, without forming the n × n projector.
pub fn project_out_rows(a: &Mat, basis: &Mat) -> Mat {
    if basis.ncols() == 0 {
        return a.clone();
    }
    a - (a * basis) * basis.transpose()
}

/// Moore–Penrose pseudoinverse with the crate-wide rank cutoff.
pub fn pinv(a: &Mat) -> Mat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Mat::zeros(n, m);
    }
    let f = dense_svd(a, m.min(n));
    let smax = f.singvals.first().copied().unwrap_or(0.0);
    let mut out = Mat::zeros(n, m);
    for (j, &sv) in f.singvals.iter().enumerate() {
        if smax > 0.0 && sv > PINV_RTOL * smax {
            out += (f.right.column(j) / sv) * f.left.column(j).transpose();
        }
    }
    out
}

/// Numerical rank under the pseudoinverse cutoff.
pub fn numerical_rank(a: &Mat) -> usize {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return 0;
    }
    let s = a.clone().singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&v| smax > 0.0 && v > PINV_RTOL * smax).count()
}

/// Principal angles (radians, ascending) between the row spaces of `a` and `b`.
pub fn principal_angles_rows(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "row spaces live in different dimensions ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    let qa = row_space_basis(a);
    let qb = row_space_basis(b);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return Ok(Vec::new());
    }
    let c = qa.transpose() * qb;
    let mut cos: Vec<f64> = c.singular_values().iter().map(|v| v.min(1.0)).collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap_or(Ordering::Equal));
    // acos is ill-conditioned near 1; use the sine form there.
    Ok(cos
        .into_iter()
        .map(|c| {
            if c > 0.9 {
                (1.0 - c * c).max(0.0).sqrt().asin()
            } else {
                c.acos()
            }
        })
        .collect())
}

/// Stacks matrices with equal column counts vertically.
pub fn vstack(parts: &[&Mat]) -> Mat {
    let n = parts.first().map(|p| p.ncols()).unwrap_or(0);
    let m: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(m, n);
    let mut row = 0;
    for p in parts {
        debug_assert_eq!(p.ncols(), n);
        out.rows_mut(row, p.nrows()).copy_from(*p);
        row += p.nrows();
    }
    out
}

/// Least-squares coefficients `β` minimising ‖y − Xβ‖ (X is n × q), via the pseudoinverse.
pub fn least_squares(design: &Mat, y: &DVector<f64>) -> DVector<f64> {
    pinv(design) * y
}

const LANCZOS_MAX_STEPS: usize = 120;
const LANCZOS_RTOL: f64 = 1e-12;
/// Weight of the seeded random direction mixed into a warm start, so the
/// Krylov space does not collapse when the warm vectors are exact.
const WARM_JITTER: f64 = 1e-3;

/// Leading singular triplets by warm-started Golub–Kahan–Lanczos
/// bidiagonalization with full reorthogonalization, falling back to a dense
/// SVD for small problems or when the iteration breaks down or runs out of
/// steps.
///
/// One instance is kept per update site inside an alternating fit so that each
/// call starts from the previous call's leading right singular vectors.
/// A triplet is accepted once `‖aᵀu − σv‖ ≤ 1e-12·σ₁` (`a v = σ u` holds by
/// construction).
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    seed: u64,
    warm: Option<Mat>,
}

impl TruncatedSvd {
    pub fn new(seed: u64) -> Self {
        TruncatedSvd { seed, warm: None }
    }

    pub fn compute(&mut self, a: &Mat, r: usize) -> SvdFactors {
        let (m, n) = a.shape();
        let k = m.min(n);
        if r == 0 || k == 0 {
            return SvdFactors::empty(m, n);
        }
        if k <= 24 || 4 * r >= k {
            return dense_svd(a, r.min(k));
        }
        match self.lanczos(a, r) {
            Some(f) => {
                self.warm = Some(f.right.clone());
                f
            }
            None => {
                log::debug!("Lanczos did not settle on a {m}x{n} matrix; using dense SVD");
                let f = dense_svd(a, r);
                self.warm = Some(f.right.clone());
                f
            }
        }
    }

    fn start_vector(&self, n: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        if let Some(w) = self.warm.as_ref().filter(|w| w.nrows() == n) {
            v *= WARM_JITTER / v.norm();
            for c in w.column_iter() {
                v += c;
            }
        }
        v.normalize()
    }

    fn lanczos(&self, a: &Mat, r: usize) -> Option<SvdFactors> {
        let (m, n) = a.shape();
        let max_steps = m.min(n).min(LANCZOS_MAX_STEPS);
        let mut us: Vec<DVector<f64>> = Vec::new();
        let mut vs: Vec<DVector<f64>> = vec![self.start_vector(n)];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut scale = 0.0f64;
        for j in 0..max_steps {
            let mut u = a * &vs[j];
            if j > 0 {
                u.axpy(-beta[j - 1], &us[j - 1], 1.0);
            }
            reorthogonalize(&mut u, &us);
            let a_j = u.norm();
            scale = scale.max(a_j);
            if scale == 0.0 {
                // a annihilates the start vector; let the dense path decide
                return None;
            }
            if a_j <= 1e-14 * scale {
                return None;
            }
            us.push(u / a_j);
            alpha.push(a_j);
            let mut v = a.tr_mul(&us[j]);
            v.axpy(-a_j, &vs[j], 1.0);
            reorthogonalize(&mut v, &vs);
            let b_j = v.norm();
            scale = scale.max(b_j);
            let steps = j + 1;
            let exhausted = b_j <= 1e-14 * scale;
            if steps >= r && (exhausted || steps <= 24 || steps % 4 == 0 || steps == max_steps) {
                let bidiag = Mat::from_fn(steps, steps, |p, q| {
                    if p == q {
                        alpha[p]
                    } else if q == p + 1 {
                        beta[p]
                    } else {
                        0.0
                    }
                });
                let f = dense_svd(&bidiag, r);
                let top = f.singvals[0];
                let converged = (0..r).all(|i| b_j * f.left[(steps - 1, i)].abs() <= LANCZOS_RTOL * top);
                // an exhausted Krylov space is invariant, so its Ritz triplets are exact
                if exhausted || converged {
                    let mut left = Mat::zeros(m, r);
                    let mut right = Mat::zeros(n, r);
                    for (idx, (uu, vv)) in us.iter().zip(&vs).enumerate() {
                        for i in 0..r {
                            left.column_mut(i).axpy(f.left[(idx, i)], uu, 1.0);
                            right.column_mut(i).axpy(f.right[(idx, i)], vv, 1.0);
                        }
                    }
                    for i in 0..r {
                        fix_sign(&mut left, &mut right, i);
                    }
                    return Some(SvdFactors {
                        left,
                        singvals: f.singvals,
                        right,
                    });
                }
            }
            if exhausted {
                return None;
            }
            vs.push(v / b_j);
            beta.push(b_j);
        }
        None
    }
}

/// Two passes of classical Gram–Schmidt against an orthonormal set.
fn reorthogonalize(x: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(x);
            x.axpy(-c, q, 1.0);
        }
    }
}
