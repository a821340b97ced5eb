//! Dense vector and matrix helpers.
//!
//! Problem sizes here are small (d <= a few hundred), so everything is plain
//! `Vec<f64>` with row-major matrices. `nalgebra` is only pulled in where an
//! eigendecomposition is needed.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Deref, DerefMut, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VIError};

/// A point of R^d. Construction through [`Point::new`] rejects NaN/Inf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VIError::NonFinite(format!("point entry {i} = {}", values[i])));
        }
        Ok(Point(values))
    }

    /// Wraps values without the finiteness check. Solver internals use this
    /// on hot paths; divergence is detected by the run loop instead.
    pub fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Point(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        dist_sq(&self.0, &other.0)
    }

    /// Euclidean distance. Falls back to a rescaled sum when the plain sum of
    /// squares underflows or overflows.
    pub fn dist(&self, other: &Point) -> f64 {
        let s = self.dist_sq(other);
        if s > 1e-280 && s.is_finite() {
            return s.sqrt();
        }
        let m = self.max_abs_diff(other);
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        let scaled: f64 = self.0.iter().zip(&other.0).map(|(a, b)| ((a - b) / m).powi(2)).sum();
        m * scaled.sqrt()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.0, &other.0)
    }

    /// `self + scale * other`
    pub fn add_scaled(&self, scale: f64, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + scale * b).collect())
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Point, b: f64) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|v| s * v).collect())
    }

    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.to_vec())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        VIError::check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            VIError::check_dim(c, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        VIError::check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        Ok(out)
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self^T * x`
    pub fn matvec_t_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
    }

    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(x, &mut out);
        out
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows.min(self.cols) {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Largest singular value by power iteration on `A^T A`.
    ///
    /// Iterates until the relative change of the estimate drops below `tol`.
    /// The start vector is the all-ones vector plus a fixed ramp so that the
    /// result is deterministic and not orthogonal to the top singular vector
    /// for the structured matrices used here.
    pub fn spectral_norm(&self, tol: f64) -> f64 {
        if self.data.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        let n = self.cols;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut av = vec![0.0; self.rows];
        let mut w = vec![0.0; n];
        let mut sigma_sq = 0.0f64;
        for _ in 0..100_000 {
            self.matvec_into(&v, &mut av);
            self.matvec_t_into(&av, &mut w);
            let new_sigma_sq = dot(&v, &w);
            let nw = norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / nw;
            }
            if (new_sigma_sq - sigma_sq).abs() <= tol * new_sigma_sq {
                sigma_sq = new_sigma_sq;
                break;
            }
            sigma_sq = new_sigma_sq;
        }
        // One more Rayleigh quotient at the converged vector.
        self.matvec_into(&v, &mut av);
        dot(&av, &av).sqrt().max(sigma_sq.max(0.0).sqrt())
    }

    /// Reads a dense matrix from CSV: one row per line, comma separated,
    /// no header. Blank lines and lines starting with `#` are skipped.
    pub fn read_csv(reader: impl BufRead) -> Result<Matrix> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row = trimmed
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| VIError::Parse(format!("line {}: {:?}: {e}", lineno + 1, tok.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(VIError::Parse("empty matrix".into()));
        }
        Matrix::from_rows(&rows)
    }

    /// Writes the matrix row-major as CSV with `%.17g` number formatting.
    pub fn write_csv(&self, mut writer: impl Write) -> Result<()> {
        let mut line = String::new();
        for i in 0..self.rows {
            line.clear();
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_g17(*v));
            }
            line.push('\n');
            writer.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// C `printf("%.17g")` formatting. 17 significant digits round-trip every f64.
pub fn format_g17(x: f64) -> String {
    const P: i32 = 17;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Exponent after rounding to P significant digits.
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let decimals = (P - 1 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        strip_fraction_zeros(&fixed)
    } else {
        let mut out = strip_fraction_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        let _ = write!(out, "e{sign}{:02}", exp.abs());
        out
    }
}

fn strip_fraction_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_survives_underflow_and_overflow() {
        let a = Point::from([3e-200, 0.0]);
        let b = Point::from([0.0, 4e-200]);
        assert!((a.dist(&b) / 5e-200 - 1.0).abs() < 1e-15);
        let c = Point::from([3e200, 4e200]);
        assert!((c.dist(&Point::zeros(2)) / 5e200 - 1.0).abs() < 1e-15);
        assert_eq!(a.dist(&a), 0.0);
    }

    #[test]
    fn g17_matches_printf() {
        // Reference strings from C printf("%.17g").
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(123456.0), "123456");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(format_g17(0.0001), "0.0001");
    }

    #[test]
    fn g17_round_trips() {
        for &x in &[std::f64::consts::PI, -1e-300, 6.02214076e23, 0.3, 1.0 / 7.0] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_fn(3, 3, |i, j| if i == j { [1.0, -4.0, 2.0][i] } else { 0.0 });
        assert!((m.spectral_norm(1e-12) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let m = Matrix::from_fn(2, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = Matrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let err = Matrix::read_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VIError::DimensionMismatch { .. }));
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point::new(vec![0.0, f64::NAN]).is_err());
    }
}
