//! Deterministic systematic MDS generators from Cauchy matrices.
//!
//! A generator is the `n x k` matrix `[I_k; C]` whose every `k`-row
//! submatrix is invertible. `C` is the Cauchy matrix on row points
//! `x_j = j - 1` (j = 1..n-k) and column points `y_i = n + i - 1`
//! (i = 1..k): all `n + k` points are distinct integers below `n + k`, so
//! they stay distinct mod p whenever `p >= n + k` (the commonly quoted
//! `p >= 2n` is the k = n worst case) and every square submatrix of `C` is
//! invertible. Construction is a pure function of `(n, k, p)` — two
//! requests for the same shape yield identical generators, which is what
//! lets same-shape codewords be summed and completed as one codeword.

use crate::gf::{Matrix, PrimeField};
use crate::{Error, Result};

/// Systematic MDS generator over a prime field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MdsGenerator {
    field: PrimeField,
    length: usize,
    dimension: usize,
    matrix: Matrix,
}

/// Builds the deterministic `[I_k; C]` generator for `(n, k)` over `field`.
///
/// Requires `k <= n` and `p >= n + k` (distinct Cauchy points). `n = k` is
/// the degenerate identity code.
pub fn build_mds(n: usize, k: usize, field: &PrimeField) -> Result<MdsGenerator> {
    if k > n {
        return Err(Error::DimensionMismatch(format!(
            "MDS dimension {k} exceeds length {n}"
        )));
    }
    if (field.modulus() as u128) < (n + k) as u128 {
        return Err(Error::FieldTooSmall {
            modulus: field.modulus(),
            required: (n + k) as u64,
        });
    }
    let mut m = Matrix::zeros(n, k);
    for i in 0..k {
        m.set(i, i, 1);
    }
    for j in 0..n - k {
        for i in 0..k {
            // 1 / (x_j - y_i) with x_j = j, y_i = n + i (0-based points).
            let diff = field.sub(field.element(j as u64), field.element((n + i) as u64));
            m.set(
                k + j,
                i,
                field.inv(diff).expect("points distinct when p >= 2n"),
            );
        }
    }
    Ok(MdsGenerator {
        field: *field,
        length: n,
        dimension: k,
        matrix: m,
    })
}

impl MdsGenerator {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    /// The full `n x k` generator matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// One generator row (the coefficient pattern of codeword coordinate `i`).
    pub fn row(&self, i: usize) -> &[u64] {
        self.matrix.row(i)
    }

    /// Encodes `k` information symbols into the full codeword. The first
    /// `k` coordinates equal the information symbols (systematic prefix).
    pub fn encode(&self, info: &[u64]) -> Result<Vec<u64>> {
        if info.len() != self.dimension {
            return Err(Error::DimensionMismatch(format!(
                "info length {} != dimension {}",
                info.len(),
                self.dimension
            )));
        }
        self.matrix.mat_vec(info, &self.field)
    }

    /// Reconstructs the full codeword from any `>= k` known coordinates.
    ///
    /// The first `k` known positions (in ascending coordinate order)
    /// determine the information vector; every surplus coordinate is then
    /// verified against the reconstruction and a mismatch is an integrity
    /// error, not a silent repair.
    pub fn complete_codeword(&self, known: &[(usize, u64)]) -> Result<Vec<u64>> {
        let mut seen = vec![false; self.length];
        let mut sorted: Vec<(usize, u64)> = Vec::with_capacity(known.len());
        for &(pos, val) in known {
            if pos >= self.length {
                return Err(Error::DimensionMismatch(format!(
                    "coordinate {pos} out of range for length {}",
                    self.length
                )));
            }
            if seen[pos] {
                return Err(Error::Inconsistent(format!(
                    "coordinate {pos} supplied twice"
                )));
            }
            seen[pos] = true;
            sorted.push((pos, val));
        }
        sorted.sort_unstable_by_key(|&(pos, _)| pos);
        if sorted.len() < self.dimension {
            return Err(Error::InsufficientData {
                have: sorted.len(),
                need: self.dimension,
            });
        }
        let base = &sorted[..self.dimension];
        let rows: Vec<usize> = base.iter().map(|&(pos, _)| pos).collect();
        let vals: Vec<u64> = base.iter().map(|&(_, val)| val).collect();
        // Systematic prefix: those rows form the identity, so the values
        // are the information vector — no solve needed.
        let info = if rows.iter().enumerate().all(|(i, &pos)| pos == i) {
            vals
        } else {
            self.matrix
                .select_rows(&rows)
                .solve(&vals, &self.field)
                .map_err(|e| match e {
                    // Any k rows of an MDS generator are invertible; hitting
                    // this means the generator itself is corrupted.
                    Error::Singular { rank, dim } => Error::Internal(format!(
                        "MDS row submatrix singular (rank {rank} of {dim})"
                    )),
                    other => other,
                })?
        };
        let word = self.encode(&info)?;
        for &(pos, val) in &sorted[self.dimension..] {
            if word[pos] != val {
                return Err(Error::Inconsistent(format!(
                    "surplus coordinate {pos} disagrees with reconstruction"
                )));
            }
        }
        Ok(word)
    }
}
