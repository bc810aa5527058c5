// SPDX-License-Identifier: Apache-2.0

//! Fixed-size 3-vector and 3×3 helpers. Lattice matrices are row-major with
//! one lattice vector per row, so Cartesian = fractional · M.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn diag(a: f64) -> Mat3 {
    [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]]
}

pub fn scale(m: &Mat3, k: f64) -> Mat3 {
    m.map(|row| row.map(|x| x * k))
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inverse(m: &Mat3) -> Option<Mat3> {
    let d = det(m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor of (j, i)
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / d;
        }
    }
    Some(inv)
}

/// Row vector times matrix.
pub fn row_times(v: &Vec3, m: &Mat3) -> Vec3 {
    [0, 1, 2].map(|k| v[0] * m[0][k] + v[1] * m[1][k] + v[2] * m[2][k])
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Perpendicular distances between opposite cell faces. Any vector with
/// fractional component u along axis i has length at least |u|·widths[i].
pub fn face_widths(m: &Mat3) -> Vec3 {
    let vol = det(m).abs();
    [0, 1, 2].map(|i| {
        let c = cross(&m[(i + 1) % 3], &m[(i + 2) % 3]);
        vol / norm(&c)
    })
}

/// Integer 3×3 matrix with determinant ±1.
pub type Unimodular = [[i64; 3]; 3];

/// Pairwise size reduction of the rows of `m`: repeatedly subtracts integer
/// multiples of one row from another until no row can be shortened that way.
/// Returns `(u · m, u)`; `u` has determinant +1.
pub fn reduce_basis(m: &Mat3) -> (Mat3, Unimodular) {
    let mut b = *m;
    let mut u: Unimodular = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    for _ in 0..200 {
        let mut changed = false;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let nj = dot(&b[j], &b[j]);
                if !(nj > 0.0) {
                    continue;
                }
                let q = (dot(&b[i], &b[j]) / nj).round();
                if q == 0.0 || !q.is_finite() || q.abs() > 1e9 {
                    continue;
                }
                let qi = q as i64;
                for k in 0..3 {
                    b[i][k] -= q * b[j][k];
                    u[i][k] -= qi * u[j][k];
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (b, u)
}

/// Row vector of integers times a unimodular matrix.
pub fn int_row_times(v: &[i64; 3], u: &Unimodular) -> [i64; 3] {
    [0, 1, 2].map(|k| v[0] * u[0][k] + v[1] * u[1][k] + v[2] * u[2][k])
}
