//! Scalar abstraction shared by the f64 and exact-rational code paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{BigInt, BigRational, FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Field operations needed by the distribution and Markov-chain code.
///
/// `f64` is the fast numeric mode; [`BigRational`] is the exact mode.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Exact conversion of a finite float. Every finite `f64` is a dyadic
    /// rational, so this never loses information in either mode.
    fn from_f64_exact(x: f64) -> Self;
    fn from_usize(n: usize) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_value(&self) -> Self;
    /// Whether a pivot of this magnitude should be treated as zero.
    fn is_negligible(&self) -> bool;
}

impl Scalar for f64 {
    fn from_f64_exact(x: f64) -> Self {
        x
    }

    fn from_usize(n: usize) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_value(&self) -> Self {
        self.abs()
    }

    fn is_negligible(&self) -> bool {
        self.abs() < 1e-300
    }
}

impl Scalar for BigRational {
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_f64(x).expect("finite float")
    }

    fn from_usize(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_value(&self) -> Self {
        self.abs()
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

/// Parses `p/q`, an integer, or a decimal literal as an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = num::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(numer, denom);
    Some(if negative { -value } else { value })
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is singular.
pub fn solve_linear<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs_value()
                .partial_cmp(&a[j][col].abs_value())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].is_negligible() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / a[col][col].clone();
            let (top, bottom) = a.split_at_mut(row);
            for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x = x.clone() - factor.clone() * p.clone();
            }
            let delta = factor * b[col].clone();
            b[row] = b[row].clone() - delta;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Some(x)
}
