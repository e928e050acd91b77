//! Sparse storage for partially observed binary response matrices.
//!
//! Observed entries are kept in row-major (CSR) order; a column index maps
//! each column's observed rows back to their CSR position so that both the
//! per-row and per-column kernels run in `O(|Ω|)`. Missing entries are never
//! stored.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResponseError {
    #[error("matrix dimensions must be positive (got {n_models}x{n_items})")]
    ZeroDimension { n_models: usize, n_items: usize },
    #[error("entry ({i}, {j}) is outside the {n_models}x{n_items} grid")]
    OutOfRange {
        i: usize,
        j: usize,
        n_models: usize,
        n_items: usize,
    },
    #[error("entry ({0}, {1}) is given more than once")]
    DuplicateEntry(usize, usize),
    #[error("invalid response {0}; expected -1 or +1")]
    InvalidResponse(i64),
}

/// A single observed binary response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Response {
    Incorrect,
    Correct,
}

impl Response {
    pub fn from_sign(y: i64) -> Result<Self, ResponseError> {
        match y {
            1 => Ok(Response::Correct),
            -1 => Ok(Response::Incorrect),
            other => Err(ResponseError::InvalidResponse(other)),
        }
    }

    /// The response as `+1.0` / `-1.0`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Response::Correct => 1.0,
            Response::Incorrect => -1.0,
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Response::Correct => 1,
            Response::Incorrect => -1,
        }
    }

    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Response::Correct => Response::Incorrect,
            Response::Incorrect => Response::Correct,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// Scaled response `γ = (1 + y) / 2`, i.e. 1 for a correct answer and 0 otherwise.
#[inline]
pub fn scaled_response(y: Response) -> f64 {
    0.5 * (1.0 + y.sign())
}

/// Observed entries of an `N x J` response grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    n_models: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Response>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_pos: Vec<usize>,
}

impl ResponseMatrix {
    /// Builds and validates a matrix from `(row, column, response)` triplets.
    pub fn from_triplets(
        n_models: usize,
        n_items: usize,
        triplets: &[(usize, usize, i64)],
    ) -> Result<Self, ResponseError> {
        let mut typed = Vec::with_capacity(triplets.len());
        for &(i, j, y) in triplets {
            typed.push((i, j, Response::from_sign(y)?));
        }
        Self::from_entries(n_models, n_items, typed)
    }

    pub fn from_entries(
        n_models: usize,
        n_items: usize,
        mut entries: Vec<(usize, usize, Response)>,
    ) -> Result<Self, ResponseError> {
        if n_models == 0 || n_items == 0 {
            return Err(ResponseError::ZeroDimension { n_models, n_items });
        }
        for &(i, j, _) in &entries {
            if i >= n_models || j >= n_items {
                return Err(ResponseError::OutOfRange {
                    i,
                    j,
                    n_models,
                    n_items,
                });
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(ResponseError::DuplicateEntry(w[0].0, w[0].1));
            }
        }
        Ok(Self::from_sorted_unique(n_models, n_items, &entries))
    }

    /// Fully observed matrix from a row-major sign grid (`+1` / `-1`).
    pub fn from_dense(n_models: usize, n_items: usize, signs: &[i64]) -> Result<Self, ResponseError> {
        assert_eq!(signs.len(), n_models * n_items, "dense grid has wrong length");
        let mut entries = Vec::with_capacity(signs.len());
        for (k, &y) in signs.iter().enumerate() {
            entries.push((k / n_items, k % n_items, Response::from_sign(y)?));
        }
        Self::from_entries(n_models, n_items, entries)
    }

    // Callers guarantee entries are in range, sorted by (i, j), and unique.
    fn from_sorted_unique(n_models: usize, n_items: usize, entries: &[(usize, usize, Response)]) -> Self {
        let nnz = entries.len();
        let mut row_ptr = vec![0usize; n_models + 1];
        let mut cols = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut col_counts = vec![0usize; n_items];
        for &(i, j, y) in entries {
            row_ptr[i + 1] += 1;
            cols.push(j);
            values.push(y);
            col_counts[j] += 1;
        }
        for i in 0..n_models {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_ptr = vec![0usize; n_items + 1];
        for j in 0..n_items {
            col_ptr[j + 1] = col_ptr[j] + col_counts[j];
        }
        let mut next = col_ptr[..n_items].to_vec();
        let mut col_rows = vec![0usize; nnz];
        let mut col_pos = vec![0usize; nnz];
        // Walking CSR in row order keeps each column's rows sorted.
        for (pos, &(i, j, _)) in entries.iter().enumerate() {
            let slot = next[j];
            col_rows[slot] = i;
            col_pos[slot] = pos;
            next[j] += 1;
        }
        ResponseMatrix {
            n_models,
            n_items,
            row_ptr,
            cols,
            values,
            col_ptr,
            col_rows,
            col_pos,
        }
    }

    #[inline]
    pub fn n_models(&self) -> usize {
        self.n_models
    }

    #[inline]
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of observed entries `|Ω|`.
    #[inline]
    pub fn n_observed(&self) -> usize {
        self.values.len()
    }

    /// `ρ = 1 - |Ω| / (N J)`.
    pub fn missing_rate(&self) -> f64 {
        1.0 - self.n_observed() as f64 / (self.n_models as f64 * self.n_items as f64)
    }

    /// Observed columns `Ω_i` of row `i`, sorted.
    #[inline]
    pub fn row_items(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Observed rows `Ω_j` of column `j`, sorted.
    #[inline]
    pub fn col_models(&self, j: usize) -> &[usize] {
        &self.col_rows[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// CSR positions of row `i`'s entries.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// CSR positions of column `j`'s entries, in the same order as [`Self::col_models`].
    #[inline]
    pub fn col_positions(&self, j: usize) -> &[usize] {
        &self.col_pos[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Column index of the entry stored at CSR position `pos`.
    #[inline]
    pub fn col_at(&self, pos: usize) -> usize {
        self.cols[pos]
    }

    #[inline]
    pub fn response_at(&self, pos: usize) -> Response {
        self.values[pos]
    }

    pub fn responses(&self) -> &[Response] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Response> {
        let range = self.row_range(i);
        let start = range.start;
        self.cols[range]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[start + k])
    }

    /// Observed entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Response)> + '_ {
        (0..self.n_models).flat_map(move |i| {
            self.row_range(i)
                .map(move |pos| (i, self.cols[pos], self.values[pos]))
        })
    }

    /// Keeps the entries for which `keep` returns true. Dimensions are unchanged.
    pub fn retain<F>(&self, mut keep: F) -> ResponseMatrix
    where
        F: FnMut(usize, usize, Response) -> bool,
    {
        let kept: Vec<_> = self.entries().filter(|&(i, j, y)| keep(i, j, y)).collect();
        Self::from_sorted_unique(self.n_models, self.n_items, &kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builds_small_matrix() {
        let m = ResponseMatrix::from_triplets(2, 2, &[(0, 0, 1), (1, 1, -1)]).unwrap();
        assert_eq!(m.n_observed(), 2);
        assert_eq!(m.row_items(0), &[0]);
        assert_eq!(m.row_items(1), &[1]);
        assert_eq!(m.col_models(0), &[0]);
        assert_eq!(m.get(1, 1), Some(Response::Incorrect));
        assert_eq!(m.get(0, 1), None);
    }

    #[test]
    fn rejects_duplicates() {
        let err = ResponseMatrix::from_triplets(2, 2, &[(0, 0, 1), (0, 0, 1)]).unwrap_err();
        assert_eq!(err, ResponseError::DuplicateEntry(0, 0));
    }

    #[test]
    fn rejects_zero_response() {
        let err = ResponseMatrix::from_triplets(2, 2, &[(0, 0, 0)]).unwrap_err();
        assert_eq!(err, ResponseError::InvalidResponse(0));
    }

    #[test]
    fn rejects_out_of_range() {
        let err = ResponseMatrix::from_triplets(2, 2, &[(2, 0, 1)]).unwrap_err();
        assert!(matches!(err, ResponseError::OutOfRange { i: 2, j: 0, .. }));
        let err = ResponseMatrix::from_triplets(2, 2, &[(0, 5, 1)]).unwrap_err();
        assert!(matches!(err, ResponseError::OutOfRange { i: 0, j: 5, .. }));
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(ResponseMatrix::from_triplets(0, 3, &[]).is_err());
    }

    #[test]
    fn scaled_response_values() {
        assert_eq!(scaled_response(Response::Correct), 1.0);
        assert_eq!(scaled_response(Response::Incorrect), 0.0);
        for y in [Response::Correct, Response::Incorrect] {
            assert_eq!(scaled_response(y) + scaled_response(y.flip()), 1.0);
        }
    }

    #[test]
    fn missing_rate_examples() {
        let full = ResponseMatrix::from_dense(10, 10, &vec![1; 100]).unwrap();
        assert_eq!(full.missing_rate(), 0.0);
        let empty = ResponseMatrix::from_triplets(10, 10, &[]).unwrap();
        assert_eq!(empty.missing_rate(), 1.0);
        let one = ResponseMatrix::from_triplets(2, 2, &[(1, 0, -1)]).unwrap();
        assert_eq!(one.missing_rate(), 0.75);
    }

    #[test]
    fn empty_rows_and_columns_are_allowed() {
        let m = ResponseMatrix::from_triplets(3, 3, &[(0, 0, 1)]).unwrap();
        assert!(m.row_items(2).is_empty());
        assert!(m.col_models(1).is_empty());
    }

    fn triplets_strategy() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, i64)>)> {
        (1usize..12, 1usize..12).prop_flat_map(|(n, j)| {
            let cells = proptest::collection::btree_map((0..n, 0..j), prop_oneof![Just(1i64), Just(-1i64)], 0..n * j + 1);
            cells.prop_map(move |map| {
                let t = map.into_iter().map(|((i, c), y)| (i, c, y)).collect();
                (n, j, t)
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_index_consistency((n, j, trip) in triplets_strategy()) {
            let m = ResponseMatrix::from_triplets(n, j, &trip).unwrap();
            let back: Vec<_> = m.entries().map(|(i, c, y)| (i, c, y.as_i8() as i64)).collect();
            let mut sorted = trip.clone();
            sorted.sort();
            prop_assert_eq!(back, sorted);

            let row_total: usize = (0..n).map(|i| m.row_items(i).len()).sum();
            let col_total: usize = (0..j).map(|c| m.col_models(c).len()).sum();
            prop_assert_eq!(row_total, m.n_observed());
            prop_assert_eq!(col_total, m.n_observed());

            for c in 0..j {
                for (&i, &pos) in m.col_models(c).iter().zip(m.col_positions(c)) {
                    prop_assert!(m.row_items(i).contains(&c));
                    prop_assert_eq!(m.col_at(pos), c);
                    prop_assert!(m.row_range(i).contains(&pos));
                }
            }
            let rate = m.missing_rate();
            prop_assert!((0.0..=1.0).contains(&rate));
            prop_assert_eq!(rate == 0.0, m.n_observed() == n * j);
        }
    }
}
