use rayon::prelude::*;

use super::dense::{axpy, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric-normalized operator of the user–item bipartite graph over the
/// stacked node space `[users..., items...]`. Entry `(u, n_users + i)` and its
/// mirror carry `1/sqrt(deg(u)·deg(i))`.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency<T> {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    /// Builds the operator from per-user item lists. Degrees are taken from
    /// the lists as given, so the caller decides which edge set is visible.
    pub fn from_user_adjacency(user_adj: &[Vec<usize>], n_items: usize) -> Result<Self> {
        let n_users = user_adj.len();
        let mut item_adj: Vec<Vec<usize>> = vec![Vec::new(); n_items];
        for (u, items) in user_adj.iter().enumerate() {
            for &i in items {
                if i >= n_items {
                    return Err(Error::Dimension(format!(
                        "item {i} out of range for {n_items} items"
                    )));
                }
                item_adj[i].push(u);
            }
        }
        let inv_sqrt = |deg: usize| T::one() / T::of_usize(deg).sqrt();
        let n = n_users + n_items;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for items in user_adj {
            let du = inv_sqrt(items.len());
            for &i in items {
                cols.push(n_users + i);
                values.push(du * inv_sqrt(item_adj[i].len()));
            }
            row_ptr.push(cols.len());
        }
        for users in &item_adj {
            let di = inv_sqrt(users.len());
            for &u in users {
                cols.push(u);
                values.push(di * inv_sqrt(user_adj[u].len()));
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n_users,
            n_items,
            row_ptr,
            cols,
            values,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_nodes()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.n_nodes();
        let mut m = DenseMatrix::zeros(n, n);
        for (r, c, v) in self.entries() {
            m.set(r, c, v);
        }
        m
    }
}

/// Sparse–dense product `adj · h`.
pub fn spmm<T: Scalar>(adj: &NormalizedAdjacency<T>, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if h.rows() != adj.n_nodes() {
        return Err(Error::Dimension(format!(
            "spmm: operator over {} nodes applied to {} rows",
            adj.n_nodes(),
            h.rows()
        )));
    }
    let d = h.cols();
    let mut out = DenseMatrix::zeros(h.rows(), d);
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, out_row)| {
            for k in adj.row_ptr[r]..adj.row_ptr[r + 1] {
                axpy(out_row, adj.values[k], h.row(adj.cols[k]));
            }
        });
    Ok(out)
}
