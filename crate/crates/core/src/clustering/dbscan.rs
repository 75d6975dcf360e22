//! DBSCAN with Euclidean distance.
//!
//! A point is core when at least `min_pts` points (itself included) lie within
//! `eps` (inclusive). Clusters are connected components of core points, numbered
//! in order of their lowest-index core point. A non-core point within `eps` of
//! a core point joins the lowest-numbered such cluster; all others are noise.

use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::scene::NOISE;

/// Number of coordinates hashed by the grid.
const GRID_DIMS: usize = 3;

#[inline]
fn dist_sq(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Uniform grid with cell side `eps` over the highest-variance coordinates.
/// Any two points within `eps` fall in adjacent cells of the projection.
struct GridIndex {
    axes: Vec<usize>,
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    fn build(points: ArrayView2<'_, f64>, eps: f64) -> Self {
        let d = points.ncols();
        let mut axes: Vec<usize> = (0..d).collect();
        if d > GRID_DIMS {
            let var = points.var_axis(Axis(0), 0.0);
            axes.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
            axes.truncate(GRID_DIMS);
            axes.sort_unstable();
        }
        let mut index = Self {
            axes,
            // widened so rounding in the division never splits an eps-pair by two cells
            cell: eps * (1.0 + 1e-9),
            cells: HashMap::new(),
        };
        for (i, p) in points.rows().into_iter().enumerate() {
            let key = index.key(p);
            index.cells.entry(key).or_default().push(i);
        }
        index
    }

    fn key(&self, p: ArrayView1<'_, f64>) -> Vec<i64> {
        self.axes.iter().map(|&a| (p[a] / self.cell).floor() as i64).collect()
    }

    /// Indices within `eps` of point `i`, ascending.
    fn neighbors(&self, points: ArrayView2<'_, f64>, i: usize, eps_sq: f64) -> Vec<usize> {
        let p = points.row(i);
        let center = self.key(p);
        let k = center.len();
        let mut out = Vec::new();
        let mut offset = vec![-1i64; k];
        let mut key = vec![0i64; k];
        loop {
            for j in 0..k {
                key[j] = center[j] + offset[j];
            }
            if let Some(members) = self.cells.get(&key) {
                out.extend(members.iter().copied().filter(|&q| dist_sq(p, points.row(q)) <= eps_sq));
            }
            // odometer over {-1, 0, 1}^k
            let mut j = 0;
            while j < k && offset[j] == 1 {
                offset[j] = -1;
                j += 1;
            }
            if j == k {
                break;
            }
            offset[j] += 1;
        }
        out.sort_unstable();
        out
    }
}

/// Grid-accelerated DBSCAN over the rows of `features`.
pub fn dbscan(features: ArrayView2<'_, f64>, eps: f64, min_pts: usize) -> Vec<i32> {
    let n = features.nrows();
    if n == 0 {
        return Vec::new();
    }
    let eps_sq = eps * eps;
    let grid = GridIndex::build(features, eps);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbors(features, i, eps_sq)).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0i32;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        labels[seed] = next;
        stack.push(seed);
        while let Some(q) = stack.pop() {
            for &r in &neighbors[q] {
                if core[r] && labels[r] == NOISE {
                    labels[r] = next;
                    stack.push(r);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        labels[i] = neighbors[i]
            .iter()
            .filter(|&&q| core[q])
            .map(|&q| labels[q])
            .min()
            .unwrap_or(NOISE);
    }
    labels
}

/// Textbook O(N²) DBSCAN: all-pairs neighborhoods and union-find over core
/// pairs. Kept as the reference for [`dbscan`].
pub fn dbscan_reference(features: ArrayView2<'_, f64>, eps: f64, min_pts: usize) -> Vec<i32> {
    let n = features.nrows();
    let eps_sq = eps * eps;
    let within = |i: usize, j: usize| {
        let mut s = 0.0;
        for k in 0..features.ncols() {
            let d = features[[i, k]] - features[[j, k]];
            s += d * d;
        }
        s <= eps_sq
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && within(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut labels = vec![NOISE; n];
    let mut root_label: HashMap<usize, i32> = HashMap::new();
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = root_label.len() as i32;
            labels[i] = *root_label.entry(root).or_insert(next);
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && within(i, j))
                .map(|j| labels[j])
                .min()
                .unwrap_or(NOISE);
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Array2::from_shape_fn((40, 2), |(i, _)| {
            let center = if i < 20 { 0.0 } else { 10.0 };
            center + rng.random_range(-0.1..0.1)
        });
        let labels = dbscan(pts.view(), 0.5, 4);
        assert!(labels[..20].iter().all(|&l| l == 0));
        assert!(labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn all_noise_when_isolated() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        assert_eq!(dbscan(pts.view(), 0.5, 2), vec![-1; 4]);
        assert_eq!(dbscan_reference(pts.view(), 0.5, 2), vec![-1; 4]);
    }

    #[test]
    fn eps_is_inclusive_and_self_counts() {
        let pts = array![[0.0], [0.5]];
        assert_eq!(dbscan(pts.view(), 0.5, 2), vec![0, 0]);
        assert_eq!(dbscan(pts.view(), 0.5, 3), vec![-1, -1]);
        assert_eq!(dbscan(array![[1.0]].view(), 0.1, 1), vec![0]);
    }

    #[test]
    fn border_point_goes_to_lowest_cluster() {
        // two dense groups with a shared, non-core bridge point
        let pts = array![[0.0], [0.05], [0.1], [0.15], [1.0], [1.85], [1.9], [1.95], [2.0]];
        let labels = dbscan(pts.view(), 0.87, 4);
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(dbscan_reference(pts.view(), 0.87, 4), labels);
    }

    #[test]
    fn high_dimensional_grid_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = Array2::from_shape_fn((150, 12), |(i, k)| ((i % 3) * 2) as f64 * ((k == 0) as u8 as f64) + rng.random_range(0.0..0.6));
        assert_eq!(dbscan(pts.view(), 0.7, 4), dbscan_reference(pts.view(), 0.7, 4));
    }
}
