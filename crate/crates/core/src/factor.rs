//! Envelope (skyline) Cholesky factorization for sparse symmetric
//! positive-definite systems, with reverse Cuthill-McKee ordering.
//!
//! Reduced network Laplacians are banded after RCM reordering, so the
//! envelope stays close to the true fill.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct SmallPivot {
    /// Original (unpermuted) row index where the pivot collapsed.
    pub row: usize,
    pub pivot: f64,
    pub max_diagonal: f64,
}

/// `L Lᵀ = P A Pᵀ`, with `L` stored row-wise inside its envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// first column of the envelope of each (permuted) row
    first: Vec<usize>,
    /// rows[i][k] = L[i][first[i] + k], the last entry being the diagonal
    rows: Vec<Vec<f64>>,
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as adjacency lists.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        // start each component from an unvisited node of minimum degree
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            next.dedup();
            for u in next {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    order
}

impl SkylineCholesky {
    /// Factorizes the symmetric matrix given by its lower or upper triplets
    /// (duplicates are summed; each off-diagonal pair needs to appear once).
    ///
    /// Fails when a pivot drops below `rel_pivot_tol` times the largest
    /// diagonal entry.
    pub fn factor(
        n: usize,
        triplets: &[(usize, usize, f64)],
        rel_pivot_tol: f64,
    ) -> Result<Self, SmallPivot> {
        let mut adj = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in triplets {
            let (a, b) = (inv[i], inv[j]);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            first[hi] = first[hi].min(lo);
        }
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - first[i] + 1]).collect();
        let mut max_diag = 0.0f64;
        for &(i, j, v) in triplets {
            let (a, b) = (inv[i], inv[j]);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            rows[hi][lo - first[hi]] += v;
        }
        for (i, row) in rows.iter().enumerate() {
            max_diag = max_diag.max(row[i - first[i]].abs());
        }
        let floor = rel_pivot_tol * max_diag;

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut s = rows[i][j - fi];
                for k in start..j {
                    s -= rows[i][k - fi] * rows[j][k - fj];
                }
                rows[i][j - fi] = s / rows[j][j - fj];
            }
            let mut d = rows[i][i - fi];
            for k in fi..i {
                let l = rows[i][k - fi];
                d -= l * l;
            }
            if !(d > floor) {
                return Err(SmallPivot {
                    row: perm[i],
                    pivot: d,
                    max_diagonal: max_diag,
                });
            }
            rows[i][i - fi] = d.sqrt();
        }

        Ok(SkylineCholesky { n, perm, first, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = Pb
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        // Lᵀ x = y, sweeping rows of L from the bottom
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            y[i] /= row[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}
