//! Direct factorizations: banded LU with partial pivoting and a dense LU.
//!
//! The banded layout follows the classic band-storage convention: a matrix
//! with `kl` subdiagonals and `ku` superdiagonals is stored column-major in
//! an array of `2*kl + ku + 1` rows, entry `(i, j)` at storage row
//! `kl + ku + i - j`. The extra `kl` rows absorb the fill that partial
//! pivoting introduces above the original band.

/// Banded square system that can be filled, factorized in place, and solved
/// repeatedly. Refilling after a factorization restores the unfactored state.
#[derive(Debug, Clone)]
pub struct BandedSystem {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// Column-major band storage, `ab[row + col * ldab]`.
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl BandedSystem {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0, "empty system");
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Zeroes the storage for a fresh fill.
    pub fn clear(&mut self) {
        self.ab.fill(0.0);
        self.factored = false;
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            (j as i64 - i as i64) <= self.ku as i64 && (i as i64 - j as i64) <= self.kl as i64,
            "entry ({i}, {j}) outside the declared band (kl = {}, ku = {})",
            self.kl,
            self.ku
        );
        self.kl + self.ku + i - j + j * self.ldab
    }

    /// Adds `v` to entry `(i, j)`; the entry must lie within the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.factored, "filling a factored system; call clear()");
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    /// In-place LU factorization with partial pivoting. On failure returns
    /// the column with a vanishing pivot.
    pub fn factor(&mut self) -> Result<(), String> {
        assert!(!self.factored, "system already factored");
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let row0 = kl + ku; // storage row of the diagonal
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search down the column.
            let mut p = 0;
            let mut pmax = self.ab[row0 + j * ldab].abs();
            for i in 1..=km {
                let v = self.ab[row0 + i + j * ldab].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(format!(
                    "zero or non-finite pivot in column {j} (magnitude {pmax:.3e})"
                ));
            }
            self.ipiv[j] = j + p;
            let ju = (j + kl + ku).min(n - 1);
            if p > 0 {
                // Swap rows j and j+p across the active columns.
                for c in j..=ju {
                    let a = row0 + j - c + c * ldab + p;
                    let b = row0 + j - c + c * ldab;
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[row0 + j * ldab];
            for i in 1..=km {
                let m = self.ab[row0 + i + j * ldab] / piv;
                self.ab[row0 + i + j * ldab] = m;
                if m != 0.0 {
                    for c in j + 1..=ju {
                        let upd = self.ab[row0 + j - c + c * ldab];
                        if upd != 0.0 {
                            self.ab[row0 + i + j - c + c * ldab] -= m * upd;
                        }
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factorization.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "solve before factor");
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let row0 = kl + ku;
        // Forward: apply pivots and the unit-lower factor.
        for j in 0..n {
            let pj = self.ipiv[j];
            if pj != j {
                b.swap(j, pj);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = kl.min(n - 1 - j);
                for i in 1..=km {
                    b[j + i] -= self.ab[row0 + i + j * ldab] * bj;
                }
            }
        }
        // Backward: the upper factor has bandwidth kl + ku after pivoting.
        for j in (0..n).rev() {
            let x = b[j] / self.ab[row0 + j * ldab];
            b[j] = x;
            if x != 0.0 {
                let top = j.saturating_sub(kl + ku);
                for i in top..j {
                    b[i] -= self.ab[row0 - (j - i) + j * ldab] * x;
                }
            }
        }
    }
}

/// Dense LU with partial pivoting (row-major), used by the Schur-complement
/// solver and as an oracle for the banded path.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    ipiv: Vec<usize>,
}

impl DenseLu {
    /// Factors the row-major `n x n` matrix `a`.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, String> {
        assert_eq!(a.len(), n * n, "matrix size mismatch");
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let mut p = j;
            let mut pmax = a[j * n + j].abs();
            for i in j + 1..n {
                let v = a[i * n + j].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(format!(
                    "zero or non-finite pivot in column {j} (magnitude {pmax:.3e})"
                ));
            }
            ipiv[j] = p;
            if p != j {
                for c in 0..n {
                    a.swap(j * n + c, p * n + c);
                }
            }
            let piv = a[j * n + j];
            for i in j + 1..n {
                let m = a[i * n + j] / piv;
                a[i * n + j] = m;
                if m != 0.0 {
                    for c in j + 1..n {
                        a[i * n + c] -= m * a[j * n + c];
                    }
                }
            }
        }
        Ok(Self { n, a, ipiv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let n = self.n;
        for j in 0..n {
            let pj = self.ipiv[j];
            if pj != j {
                b.swap(j, pj);
            }
        }
        for j in 0..n {
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..n {
                    b[i] -= self.a[i * n + j] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut x = b[j];
            for c in j + 1..n {
                x -= self.a[j * n + c] * b[c];
            }
            b[j] = x / self.a[j * n + j];
        }
    }
}
