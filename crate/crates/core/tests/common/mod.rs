//! Independent reference computations shared by the integration tests. None of
//! these call into the crate's numerics.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub type M = DMatrix<f64>;

/// Rank-`r` truncation via nalgebra's full SVD: (approximation, right vectors n × r).
pub fn truncate(a: &M, r: usize) -> (M, M) {
    let n = a.ncols();
    if r == 0 {
        return (M::zeros(a.nrows(), n), M::zeros(n, 0));
    }
    let svd = a.clone().svd(true, true);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut approx = M::zeros(a.nrows(), n);
    let mut right = M::zeros(n, r);
    for (c, &i) in idx.iter().take(r).enumerate() {
        approx += u.column(i) * vt.row(i) * svd.singular_values[i];
        right.set_column(c, &vt.row(i).transpose());
    }
    (approx, right)
}

pub struct JiveOracle {
    pub joint: Vec<M>,
    pub indiv: Vec<M>,
    /// Orthonormal basis (n × r_J) of the joint row space.
    pub joint_rows: M,
    pub objective: f64,
    pub iterations: usize,
}

/// Plain JIVE alternation: J = best rank-r_J fit of the stacked X − A, then each
/// A_i = best rank-r_i fit of (X_i − J_i) projected off J's row space.
pub fn jive_oracle(blocks: &[M], r_joint: usize, r_indiv: &[usize], tol: f64, max_iter: usize) -> JiveOracle {
    let n = blocks[0].ncols();
    let dims: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
    let total: usize = dims.iter().sum();
    let mut indiv: Vec<M> = dims.iter().map(|&p| M::zeros(p, n)).collect();
    let mut joint: Vec<M> = Vec::new();
    let mut joint_rows = M::zeros(n, r_joint);
    let mut prev = f64::INFINITY;
    let mut objective = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let mut stacked = M::zeros(total, n);
        let mut row = 0;
        for (b, a) in blocks.iter().zip(&indiv) {
            stacked.rows_mut(row, b.nrows()).copy_from(&(b - a));
            row += b.nrows();
        }
        let (j, v) = truncate(&stacked, r_joint);
        joint_rows = v;
        let proj = M::identity(n, n) - &joint_rows * joint_rows.transpose();
        joint.clear();
        let mut row = 0;
        for (i, b) in blocks.iter().enumerate() {
            let ji = j.rows(row, b.nrows()).into_owned();
            row += b.nrows();
            indiv[i] = truncate(&((b - &ji) * &proj), r_indiv[i]).0;
            joint.push(ji);
        }
        objective = blocks
            .iter()
            .zip(joint.iter().zip(&indiv))
            .map(|(b, (j, a))| (b - j - a).norm_squared())
            .sum();
        if prev.is_finite() && (prev - objective).abs() <= tol * prev {
            break;
        }
        prev = objective;
    }
    JiveOracle {
        joint,
        indiv,
        joint_rows,
        objective,
        iterations,
    }
}

/// Orthonormal basis (n × r) of the row space of an r × n matrix, via Gram–Schmidt.
pub fn row_basis(s: &M) -> M {
    let t = s.transpose();
    let mut q = M::zeros(t.nrows(), 0);
    for c in 0..t.ncols() {
        let mut v = t.column(c).into_owned();
        for _ in 0..2 {
            for k in 0..q.ncols() {
                let d = q.column(k).dot(&v);
                v -= q.column(k) * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * t.column(c).norm().max(1e-300) {
            let last = q.ncols();
            q = q.insert_column(last, 0.0);
            q.set_column(last, &(v / norm));
        }
    }
    q
}

/// Largest principal angle (radians) between two column spaces with orthonormal
/// bases, from the sine form ‖(I − AAᵀ)B‖₂ which keeps precision for tiny angles.
pub fn max_principal_angle(a: &M, b: &M) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    let resid = b - a * (a.transpose() * b);
    let s = resid.svd(false, false).singular_values;
    s.iter().cloned().fold(0.0f64, f64::max).min(1.0).asin()
}

/// SSE of the least-squares fit of y on an intercept plus the given columns,
/// solved through the normal equations.
pub fn sse_normal_equations(columns: &[DVector<f64>], y: &DVector<f64>) -> f64 {
    let n = y.len();
    let q = columns.len() + 1;
    let x = M::from_fn(n, q, |r, c| if c == 0 { 1.0 } else { columns[c - 1][r] });
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let beta = xtx.cholesky().expect("design has full column rank").solve(&xty);
    (y - x * beta).norm_squared()
}

/// Regularized incomplete beta I_x(a, b) by the modified Lentz continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        for step in [num, -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0))] {
            d = 1.0 + step * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = 1.0 + step / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut s = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        s += g / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Upper tail of F(d1, d2) at f.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

pub struct NestedTest {
    pub partial_r2: f64,
    pub f_stat: f64,
    pub p_value: f64,
}

/// Brute-force nested-model test of each group of columns.
pub fn nested_tests(groups: &[Vec<DVector<f64>>], y: &DVector<f64>) -> Vec<NestedTest> {
    let all: Vec<DVector<f64>> = groups.iter().flatten().cloned().collect();
    let n = y.len() as f64;
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse_full = sse_normal_equations(&all, y);
    let df2 = n - all.len() as f64 - 1.0;
    groups
        .iter()
        .enumerate()
        .map(|(g, cols)| {
            let reduced: Vec<DVector<f64>> = groups
                .iter()
                .enumerate()
                .filter(|(h, _)| *h != g)
                .flat_map(|(_, c)| c.iter().cloned())
                .collect();
            let sse_red = sse_normal_equations(&reduced, y);
            let q = cols.len() as f64;
            let f = ((sse_red - sse_full) / q) / (sse_full / df2);
            NestedTest {
                partial_r2: (sse_red - sse_full) / sst,
                f_stat: f,
                p_value: f_sf(f, q, df2),
            }
        })
        .collect()
}
