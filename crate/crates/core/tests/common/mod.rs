//! Test helpers and independent oracles. Nothing here calls into the
//! library's numerical routines.

#![allow(dead_code)]

use std::path::PathBuf;

use ivkit_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Plain CSV reader for fixtures: header plus numeric rows, by column.
pub fn read_fixture(name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for (c, cell) in cols.iter_mut().zip(line.split(',')) {
            c.push(cell.trim().parse::<f64>().unwrap());
        }
    }
    (header, cols)
}

pub fn column<'a>(header: &[String], cols: &'a [Vec<f64>], name: &str) -> &'a [f64] {
    &cols[header.iter().position(|h| h == name).unwrap()]
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular system.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Least squares by the normal equations. `regressors` are columns; an
/// intercept column is prepended. Returns coefficients (intercept first).
pub fn normal_equations(y: &[f64], regressors: &[&[f64]]) -> Vec<f64> {
    let n = y.len();
    let mut design: Vec<Vec<f64>> = vec![vec![1.0; n]];
    design.extend(regressors.iter().map(|c| c.to_vec()));
    let p = design.len();
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| dot(&design[i], &design[j])).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|i| dot(&design[i], y)).collect();
    solve(xtx, xty).expect("full-rank design")
}

/// Residuals of `y` after regressing on an intercept and `regressors`.
pub fn residualize(y: &[f64], regressors: &[&[f64]]) -> Vec<f64> {
    let beta = normal_equations(y, regressors);
    (0..y.len())
        .map(|i| {
            let fit = beta[0] + regressors.iter().zip(&beta[1..]).map(|(c, b)| c[i] * b).sum::<f64>();
            y[i] - fit
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// `AR(b)` written out term by term for one instrument and no covariates:
/// `(N^{-1/2} Σ (z−z̄)(y−bx))² / (N^{-1} Σ (z−z̄)² · σ̂²(b))`, where `σ̂²`
/// is the divisor-N variance of `y − bx`.
pub fn ar_term_by_term(y: &[f64], x: &[f64], z: &[f64], b: f64) -> f64 {
    let n = y.len() as f64;
    let zbar = mean(z);
    let e: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi - b * xi).collect();
    let ebar = mean(&e);
    let mut cross = 0.0;
    let mut zz = 0.0;
    let mut ee = 0.0;
    for i in 0..y.len() {
        cross += (z[i] - zbar) * e[i];
        zz += (z[i] - zbar) * (z[i] - zbar);
        ee += (e[i] - ebar) * (e[i] - ebar);
    }
    let numerator = (cross / n.sqrt()).powi(2);
    numerator / (zz / n * (ee / n))
}

/// LIML variance ratio `e'M_V e / e'M_{ZV} e` with `e = y − b x`.
pub fn liml_ratio(y: &[f64], x: &[f64], z: &[&[f64]], v: &[&[f64]], b: f64) -> f64 {
    let e: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi - b * xi).collect();
    let mv = residualize(&e, v);
    let mut zv: Vec<&[f64]> = z.to_vec();
    zv.extend_from_slice(v);
    let mzv = residualize(&e, &zv);
    dot(&mv, &mv) / dot(&mzv, &mzv)
}

/// Minimize `f` on `[lo, hi]`: coarse grid then golden-section refinement
/// around the best grid point.
pub fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let step = (hi - lo) / (points - 1) as f64;
    let best = (0..points)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = (best - step, best + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-12 * (1.0 + best.abs()) {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Sharp bounds on `E[Y(1) − Y(0)]` by enumerating every vertex of the
/// polytope of joint distributions over (compliance type ∈ {n, c, a},
/// Y(0), Y(1)) that reproduce the observed cell probabilities.
///
/// `p[z][x][y]` is `P(Y=y, X=x | Z=z)`.
pub fn bounds_by_vertex_enumeration(p: [[[f64; 2]; 2]; 2]) -> (f64, f64) {
    // Variable index: type * 4 + y0 * 2 + y1, type 0 = never, 1 = complier, 2 = always.
    let var = |t: usize, y0: usize, y1: usize| t * 4 + y0 * 2 + y1;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for y in 0..2 {
        // Z = 0, X = 0: never-takers and compliers, observed Y(0).
        let mut r = vec![0.0; 12];
        for t in [0, 1] {
            for other in 0..2 {
                r[var(t, y, other)] = 1.0;
            }
        }
        rows.push((r, p[0][0][y]));
        // Z = 0, X = 1: always-takers, observed Y(1).
        let mut r = vec![0.0; 12];
        for other in 0..2 {
            r[var(2, other, y)] = 1.0;
        }
        rows.push((r, p[0][1][y]));
        // Z = 1, X = 0: never-takers, observed Y(0).
        let mut r = vec![0.0; 12];
        for other in 0..2 {
            r[var(0, y, other)] = 1.0;
        }
        rows.push((r, p[1][0][y]));
        // Z = 1, X = 1: compliers and always-takers, observed Y(1).
        let mut r = vec![0.0; 12];
        for t in [1, 2] {
            for other in 0..2 {
                r[var(t, other, y)] = 1.0;
            }
        }
        rows.push((r, p[1][1][y]));
    }
    // The eight rows have rank 7 (both arms sum to one); drop the last.
    rows.pop();
    let objective: Vec<f64> = (0..12)
        .map(|i| {
            let (y0, y1) = ((i % 4) / 2, i % 2);
            y1 as f64 - y0 as f64
        })
        .collect();

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for basis in combinations(12, 7) {
        let a: Vec<Vec<f64>> = rows.iter().map(|(r, _)| basis.iter().map(|&j| r[j]).collect()).collect();
        let b: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
        let Some(sol) = solve(a, b) else { continue };
        if sol.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let value: f64 = basis.iter().zip(&sol).map(|(&j, v)| objective[j] * v).sum();
        lo = lo.min(value);
        hi = hi.max(value);
    }
    assert!(lo.is_finite(), "no feasible vertex: observed cells incompatible with the model");
    (lo, hi)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Linear IV data: `k` standard normal instruments, one covariate when
/// `with_covariate`, first-stage strength `pi` on each instrument.
pub fn random_iv_dataset(seed: u64, n: usize, k: usize, with_covariate: bool, pi: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let z: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| normal()).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| normal()).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let u = normal();
        let v = 0.5 * u + normal();
        let xi = pi * z.iter().map(|c| c[i]).sum::<f64>() + if with_covariate { 0.3 * w[i] } else { 0.0 } + v;
        x.push(xi);
        y.push(0.5 + 1.3 * xi + if with_covariate { -0.7 * w[i] } else { 0.0 } + u);
    }
    let instruments = z
        .into_iter()
        .enumerate()
        .map(|(j, c)| (format!("z{}", j + 1), c))
        .collect();
    let covariates = if with_covariate { vec![("w".to_string(), w)] } else { vec![] };
    Dataset::new(("y".into(), y), ("x".into(), x), instruments, covariates).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
