//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}` and the
//! reference edge `[0, 1]`.
//!
//! Edge rules are Gauss–Legendre. Triangle rules are collapsed
//! Gauss–Legendre product rules symmetrised over the six permutations of the
//! barycentric coordinates, so every rule is invariant under the symmetry
//! group of the triangle and carries positive weights.

use crate::error::{Error, Result};

pub const MAX_TRIANGLE_DEGREE: usize = 10;
pub const MAX_EDGE_DEGREE: usize = 20;

/// A quadrature rule. Triangle rules store barycentric coordinates
/// `(l0, l1, l2)` with `(x, y) = (l1, l2)`; edge rules store `[t, 0, 0]`,
/// see [`QuadRule::edge_points`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference edge coordinates `t`.
    pub fn edge_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p[0])
    }

    /// Reference-triangle Cartesian coordinates.
    pub fn cartesian(&self, i: usize) -> [f64; 2] {
        [self.points[i][1], self.points[i][2]]
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Gauss–Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<QuadRule> {
    if !(1..=MAX_EDGE_DEGREE).contains(&degree) {
        return Err(Error::UnsupportedDegree {
            degree,
            max: MAX_EDGE_DEGREE,
        });
    }
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadRule {
        degree,
        points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0, 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
    })
}

/// Symmetric rule on the reference triangle exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<QuadRule> {
    if !(1..=MAX_TRIANGLE_DEGREE).contains(&degree) {
        return Err(Error::UnsupportedDegree {
            degree,
            max: MAX_TRIANGLE_DEGREE,
        });
    }
    if degree == 1 {
        return Ok(QuadRule {
            degree,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
        });
    }
    // x = s, y = r (1 - s): the pulled-back integrand has degree degree + 1
    // in s and degree in r.
    let (xs, ws) = gauss_legendre((degree + 3) / 2);
    let (xr, wr) = gauss_legendre((degree + 2) / 2);
    let mut base = Vec::with_capacity(xs.len() * xr.len());
    for (&si, &wsi) in xs.iter().zip(&ws) {
        let s = 0.5 * (si + 1.0);
        for (&ri, &wri) in xr.iter().zip(&wr) {
            let r = 0.5 * (ri + 1.0);
            let x = s;
            let y = r * (1.0 - s);
            base.push(([1.0 - x - y, x, y], 0.25 * wsi * wri * (1.0 - s)));
        }
    }

    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (l, w) in &base {
        for perm in PERMS {
            let q = [l[perm[0]], l[perm[1]], l[perm[2]]];
            let wq = w / 6.0;
            match points
                .iter()
                .position(|p| (0..3).all(|k| (p[k] - q[k]).abs() < 1e-14))
            {
                Some(j) => weights[j] += wq,
                None => {
                    points.push(q);
                    weights.push(wq);
                }
            }
        }
    }
    Ok(QuadRule {
        degree,
        points,
        weights,
    })
}
