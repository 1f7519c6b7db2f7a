//! ISOMAP: geodesic distances on a symmetrised k-NN graph followed by classical
//! multidimensional scaling.
//!
//! Eigenvector signs are fixed so the first loading with magnitude above
//! `1e-12` is positive; coordinates are then min-max rescaled into `[0, 1]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};

/// Above this many points the top eigenpairs come from Lanczos iteration
/// instead of a full symmetric eigendecomposition.
const DENSE_EIGEN_LIMIT: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// `coords[i]` is the embedded position of point `i`, inside `[0, 1]^d`.
    pub coords: Vec<Vec<f64>>,
    pub neighbors: usize,
    /// Largest MDS eigenvalues, in decreasing order.
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    /// The `j`-th embedded coordinate of every point.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.coords.iter().map(|c| c[j]).collect()
    }
}

/// Symmetrised k-NN adjacency lists with Euclidean edge weights.
pub fn knn_graph(points: &PointCloud, neighbors: usize) -> Vec<Vec<(usize, f64)>> {
    let m = points.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(m);
    for i in 0..m {
        dists.clear();
        dists.extend((0..m).filter(|&j| j != i).map(|j| (points.distance(i, j), j)));
        let k = neighbors.min(dists.len());
        if k == 0 {
            continue;
        }
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &dists[..k] {
            adj[i].push((j, d));
            adj[j].push((i, d));
        }
    }
    for list in &mut adj {
        list.sort_by(|a, b| a.0.cmp(&b.0));
        list.dedup_by_key(|e| e.0);
    }
    adj
}

/// Sizes of the connected components, largest first.
pub fn component_sizes(adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let m = adj.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, list) in adj.iter().enumerate() {
        for &(j, _) in list {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sizes = vec![0usize; m];
    for i in 0..m {
        let r = find(&mut parent, i);
        sizes[r] += 1;
    }
    let mut sizes: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize, out: &mut [f64]) {
    out.fill(f64::INFINITY);
    out[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier(0.0, source));
    while let Some(Frontier(d, u)) = heap.pop() {
        if d > out[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < out[v] {
                out[v] = nd;
                heap.push(Frontier(nd, v));
            }
        }
    }
}

/// All-pairs shortest-path distances, row `i` from source `i`.
pub fn geodesic_distances(adj: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
    let m = adj.len();
    let mut rows = vec![0.0; m * m];
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(m.max(1));
    let chunk = m.div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        for (c, block) in rows.chunks_mut(chunk * m).enumerate() {
            scope.spawn(move || {
                for (r, row) in block.chunks_mut(m).enumerate() {
                    dijkstra(adj, c * chunk + r, row);
                }
            });
        }
    });
    // rows are sources; the matrix is symmetric so row-major data reads the same
    DMatrix::from_row_slice(m, m, &rows)
}

/// `B = -1/2 J D^2 J` with `J` the centring matrix.
fn double_centre(geo: &DMatrix<f64>) -> DMatrix<f64> {
    let m = geo.nrows();
    let mut b = geo.map(|d| d * d);
    let row_means: Vec<f64> = (0..m).map(|i| b.row(i).sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    for j in 0..m {
        for i in 0..m {
            b[(i, j)] = -0.5 * (b[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }
    b
}

/// Largest `d` eigenpairs of a symmetric matrix, eigenvalues decreasing.
fn top_eigenpairs(b: &DMatrix<f64>, d: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let m = b.nrows();
    if m <= DENSE_EIGEN_LIMIT {
        let eig = SymmetricEigen::new(b.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let vals = order[..d].iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = order[..d].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        return Ok((vals, vecs));
    }
    lanczos_top(b, d)
}

/// Lanczos with full reorthogonalisation, grown until the top `d` Ritz pairs
/// have small residuals.
fn lanczos_top(b: &DMatrix<f64>, d: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let m = b.nrows();
    // deterministic start that is not orthogonal to typical eigenvectors
    let mut q = DVector::from_fn(m, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    let max_steps = m.min(600);

    loop {
        let j = basis.len() - 1;
        let mut w = b * &basis[j];
        alpha.push(basis[j].dot(&w));
        // full reorthogonalisation, twice
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&w);
                w.axpy(-c, v, 1.0);
            }
        }
        let nb = w.norm();
        let steps = alpha.len();
        let exhausted = steps == max_steps || nb < 1e-12 * scale;
        if exhausted && steps < d {
            return Err(Error::Numerical("Krylov space smaller than the embedding dimension".into()));
        }
        if exhausted || (steps >= d + 20 && steps % 10 == 0) {
            let t = DMatrix::from_fn(steps, steps, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = &order[..d];
            let lead = eig.eigenvalues[order[0]].abs();
            let converged = top.iter().all(|&i| (nb * eig.eigenvectors[(steps - 1, i)]).abs() <= 1e-10 * lead);
            if converged || exhausted {
                let vals: Vec<f64> = top.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = top
                    .iter()
                    .map(|&i| {
                        let mut v = DVector::zeros(m);
                        for (k, q) in basis.iter().enumerate().take(steps) {
                            v.axpy(eig.eigenvectors[(k, i)], q, 1.0);
                        }
                        let n = v.norm();
                        v / n
                    })
                    .collect();
                if !converged && nb >= 1e-12 * scale {
                    return Err(Error::Numerical("Lanczos iteration did not converge".into()));
                }
                return Ok((vals, vecs));
            }
        }
        beta.push(nb);
        basis.push(w / nb);
    }
}

/// Classical MDS of the geodesic distances on the k-NN graph.
pub fn isomap(points: &PointCloud, neighbors: usize, d: usize) -> Result<Embedding> {
    let m = points.len();
    if d == 0 || d > points.ambient_dim() {
        return Err(Error::InvalidParameter(format!(
            "intrinsic dimension {d} must be in 1..={}",
            points.ambient_dim()
        )));
    }
    if m < d + 2 {
        return Err(Error::InvalidParameter(format!("need at least {} points, got {m}", d + 2)));
    }
    if neighbors == 0 {
        return Err(Error::InvalidParameter("neighbour count must be positive".into()));
    }
    let adj = knn_graph(points, neighbors);
    let sizes = component_sizes(&adj);
    if sizes.len() > 1 {
        return Err(Error::DisconnectedGraph { sizes });
    }
    let geo = geodesic_distances(&adj);
    let b = double_centre(&geo);
    let (vals, vecs) = top_eigenpairs(&b, d)?;
    if let Some(&bad) = vals.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Numerical(format!("non-positive MDS eigenvalue {bad}")));
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for (lambda, mut v) in vals.iter().zip(vecs) {
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        let col: Vec<f64> = v.iter().map(|x| x * lambda.sqrt()).collect();
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let span = hi - lo;
        columns.push(col.iter().map(|x| if span > 0.0 { ((x - lo) / span).clamp(0.0, 1.0) } else { 0.5 }).collect());
    }
    let coords = (0..m).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(Embedding { coords, neighbors, eigenvalues: vals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::spearman;

    #[test]
    fn straight_segment_keeps_order() {
        let ts: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 / 59.0).collect();
        let pts = PointCloud::new(ts.iter().map(|&t| vec![3.0 * t - 1.0, 2.0 * t + 0.5]).collect()).unwrap();
        let e = isomap(&pts, 4, 1).unwrap();
        let r = spearman(&e.column(0), &ts);
        assert!((r.abs() - 1.0).abs() < 1e-12, "{r}");
        assert!(e.coords.iter().all(|c| (0.0..=1.0).contains(&c[0])));
    }

    #[test]
    fn duplicates_are_harmless() {
        let mut rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 29.0, 0.0]).collect();
        rows.push(rows[5].clone());
        rows.push(rows[5].clone());
        let e = isomap(&PointCloud::new(rows).unwrap(), 4, 1).unwrap();
        assert!(e.coords.iter().all(|c| c[0].is_finite()));
        assert!((e.coords[30][0] - e.coords[5][0]).abs() < 1e-9);
    }

    #[test]
    fn disconnected_graph_reports_sizes() {
        let mut rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        rows.push(vec![100.0, 100.0]);
        rows.push(vec![100.1, 100.0]);
        match isomap(&PointCloud::new(rows).unwrap(), 1, 1) {
            Err(Error::DisconnectedGraph { sizes }) => {
                assert_eq!(sizes.iter().sum::<usize>(), 22);
                assert!(sizes.contains(&2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let m = 80;
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let t = i as f64 / m as f64 * 5.0;
                vec![t.cos() * (1.0 + t), t.sin() * (1.0 + t), 0.1 * t]
            })
            .collect();
        let adj = knn_graph(&PointCloud::new(pts).unwrap(), 5);
        let b = double_centre(&geodesic_distances(&adj));
        let (dv, dvec) = top_eigenpairs(&b, 2).unwrap();
        let (lv, lvec) = lanczos_top(&b, 2).unwrap();
        for i in 0..2 {
            assert!((dv[i] - lv[i]).abs() < 1e-8 * dv[0]);
            assert!((dvec[i].dot(&lvec[i]).abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_output() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.2).cos(), (i as f64 * 0.2).sin()]).collect();
        let cloud = PointCloud::new(pts).unwrap();
        assert_eq!(isomap(&cloud, 5, 1).unwrap(), isomap(&cloud, 5, 1).unwrap());
    }

    #[test]
    fn geodesics_are_symmetric() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * i % 17) as f64, (i * 7 % 11) as f64]).collect();
        let g = geodesic_distances(&knn_graph(&PointCloud::new(pts).unwrap(), 6));
        for i in 0..40 {
            for j in 0..40 {
                assert!((g[(i, j)] - g[(j, i)]).abs() < 1e-12);
            }
        }
    }
}
