//! Angular-momentum algebra: Clebsch-Gordan coefficients and orthonormal
//! irreducible spherical tensor operators on the coupled `|F, m>` basis.
//!
//! Phases follow Condon-Shortley. Tensor operators are
//!
//! ```text
//! T_LM(F, F') = sum_{m, m'} (-1)^(F' - m') <F m; F' -m' | L M> |F m><F' m'|
//! ```
//!
//! which gives `Tr(T_LM(F,F')^dag T_L'M'(F'',F''')) = delta...` and
//! `T_LM(F,F')^dag = (-1)^(F - F' + M) T_L,-M(F',F)`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::sync::OnceLock;

use crate::hilbert::SpinSystem;
use crate::{CMatrix, C64};

/// An integer or half-integer quantum number, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice_value: i32) -> Self {
        HalfInt(twice_value)
    }

    pub const fn integer(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }

    /// Multiplicity `2j + 1`.
    pub fn multiplicity(self) -> usize {
        (self.0 + 1).max(0) as usize
    }

    /// Projections `j, j-1, ..., -j`.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let j = self.0;
        (0..=2 * j).step_by(2).map(move |k| HalfInt(j - k))
    }

    /// The value as an integer, if it is one.
    pub fn as_integer(self) -> Option<i32> {
        self.is_integer().then_some(self.0 / 2)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

const MAX_FACTORIAL: usize = 33;

fn factorials() -> &'static [f64; MAX_FACTORIAL + 1] {
    static TABLE: OnceLock<[f64; MAX_FACTORIAL + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut exact: u128 = 1;
        let mut table = [1.0; MAX_FACTORIAL + 1];
        for (n, slot) in table.iter_mut().enumerate().skip(1) {
            exact *= n as u128;
            *slot = exact as f64;
        }
        table
    })
}

fn fact(twice_n: i32) -> f64 {
    debug_assert!(twice_n % 2 == 0 && twice_n >= 0);
    let n = (twice_n / 2) as usize;
    assert!(n <= MAX_FACTORIAL, "factorial argument {n} exceeds table");
    factorials()[n]
}

/// `<j1 m1; j2 m2 | J M>` in the Condon-Shortley convention (Racah formula).
///
/// Returns 0 outside the triangle, for `m1 + m2 != M`, or for inconsistent
/// projections.
pub fn clebsch_gordan(j1: HalfInt, j2: HalfInt, m1: HalfInt, m2: HalfInt, j: HalfInt, m: HalfInt) -> f64 {
    let (j1, j2, m1, m2, j, m) = (j1.0, j2.0, m1.0, m2.0, j.0, m.0);
    if j1 < 0 || j2 < 0 || j < 0 {
        return 0.0;
    }
    if m1 + m2 != m || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if (j1 - m1) % 2 != 0 || (j2 - m2) % 2 != 0 || (j - m) % 2 != 0 {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 || (j1 + j2 + j) % 2 != 0 {
        return 0.0;
    }

    let triangle = fact(j1 + j2 - j) * fact(j1 - j2 + j) * fact(-j1 + j2 + j) / fact(j1 + j2 + j + 2);
    let projections =
        fact(j1 + m1) * fact(j1 - m1) * fact(j2 + m2) * fact(j2 - m2) * fact(j + m) * fact(j - m);
    let prefactor = ((j + 1) as f64 * triangle * projections).sqrt();

    // Summation bounds in twice-units; k runs over integers.
    let k_min = 0.max(j2 - j - m1).max(j1 - j + m2);
    let k_max = (j1 + j2 - j).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    let mut k = k_min;
    while k <= k_max {
        let denom = fact(k)
            * fact(j1 + j2 - j - k)
            * fact(j1 - m1 - k)
            * fact(j2 + m2 - k)
            * fact(j - j2 + m1 + k)
            * fact(j - j1 - m2 + k);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
        k += 2;
    }
    prefactor * sum
}

/// Identifies one irreducible tensor operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorKey {
    pub l: i32,
    pub m: i32,
    pub f: HalfInt,
    pub fp: HalfInt,
}

impl TensorKey {
    pub fn new(l: i32, m: i32, f: HalfInt, fp: HalfInt) -> Self {
        TensorKey { l, m, f, fp }
    }
}

#[derive(Clone, Debug)]
pub struct TensorOperator {
    pub l: i32,
    pub m: i32,
    pub f: HalfInt,
    pub fp: HalfInt,
    /// Full coupled-space matrix; nonzero only on the `F` rows and `F'` columns.
    pub matrix: CMatrix,
}

impl TensorOperator {
    pub fn key(&self) -> TensorKey {
        TensorKey::new(self.l, self.m, self.f, self.fp)
    }
}

/// Complete orthonormal operator basis `{T_LM(F,F')}` of a spin system.
#[derive(Clone, Debug)]
pub struct TensorBasis {
    ops: Vec<TensorOperator>,
    index: HashMap<TensorKey, usize>,
}

impl TensorBasis {
    pub fn new(system: &SpinSystem) -> Self {
        let manifolds = system.manifolds();
        let mut ops = Vec::new();
        for &f in &manifolds {
            for &fp in &manifolds {
                let l_min = (f - fp).abs().twice() / 2;
                let l_max = (f + fp).twice() / 2;
                for l in l_min..=l_max {
                    for m in -l..=l {
                        let matrix = tensor_matrix(system, l, m, f, fp);
                        ops.push(TensorOperator { l, m, f, fp, matrix });
                    }
                }
            }
        }
        let index = ops.iter().enumerate().map(|(i, t)| (t.key(), i)).collect();
        TensorBasis { ops, index }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TensorOperator> {
        self.ops.iter()
    }

    pub fn get(&self, key: TensorKey) -> Option<&TensorOperator> {
        self.index.get(&key).map(|&i| &self.ops[i])
    }

    pub fn position(&self, key: TensorKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = TensorKey> + '_ {
        self.ops.iter().map(TensorOperator::key)
    }
}

impl std::ops::Index<usize> for TensorBasis {
    type Output = TensorOperator;
    fn index(&self, i: usize) -> &TensorOperator {
        &self.ops[i]
    }
}

/// All `T_LM(F,F')` of the system, hyperfine blocks included.
pub fn tensor_basis(system: &SpinSystem) -> TensorBasis {
    TensorBasis::new(system)
}

fn tensor_matrix(system: &SpinSystem, l: i32, m: i32, f: HalfInt, fp: HalfInt) -> CMatrix {
    let dim = system.dim();
    let mut out = CMatrix::zeros(dim, dim);
    let big_l = HalfInt::integer(l);
    let big_m = HalfInt::integer(m);
    for mf in f.projections() {
        for mfp in fp.projections() {
            let cg = clebsch_gordan(f, fp, mf, -mfp, big_l, big_m);
            if cg == 0.0 {
                continue;
            }
            let phase = if ((fp - mfp).twice() / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let row = system.index_of(f, mf).expect("projection inside manifold");
            let col = system.index_of(fp, mfp).expect("projection inside manifold");
            out[(row, col)] = C64::new(phase * cg, 0.0);
        }
    }
    out
}
