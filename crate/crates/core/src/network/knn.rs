use crate::tensor::Tensor;

/// ℓ1 distance between two embedding rows.
#[inline]
pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// For every row of `embeddings`, the indices of its `k` nearest rows by ℓ1
/// distance, self first.
///
/// Candidates farther than `2 * delta_v` from the query are treated as
/// outliers and dropped; missing slots are filled with the query's own
/// index. Ties are broken by ascending index.
pub fn knn_embedding(embeddings: &Tensor, k: usize, delta_v: f64) -> Vec<Vec<usize>> {
    let n = embeddings.rows();
    let k = k.max(1);
    let radius = 2.0 * delta_v;
    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let q = embeddings.row(i);
        cand.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = l1(q, embeddings.row(j));
            if d <= radius {
                cand.push((d, j));
            }
        }
        let take = (k - 1).min(cand.len());
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if take > 0 && take < cand.len() {
            cand.select_nth_unstable_by(take - 1, by_dist);
        }
        cand[..take].sort_unstable_by(by_dist);
        let mut row = Vec::with_capacity(k);
        row.push(i);
        row.extend(cand[..take].iter().map(|c| c.1));
        row.resize(k, i);
        out.push(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_one_is_self() {
        let e = Tensor::from_rows(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]]).unwrap();
        assert_eq!(knn_embedding(&e, 1, 0.5), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn clusters_beyond_the_margin_stay_apart() {
        // two 1-D clusters of 5 points, gap far beyond 2 * delta_v
        let vals = [0.0, 0.05, 0.1, 0.15, 0.2, 3.0, 3.05, 3.1, 3.15, 3.2];
        let rows: Vec<[f64; 1]> = vals.iter().map(|&v| [v]).collect();
        let e = Tensor::from_rows(&rows).unwrap();
        let nbrs = knn_embedding(&e, 8, 0.5);
        // brute force: same-cluster members sorted by distance then index,
        // filtered by the 2*delta_v radius, padded with self
        for i in 0..10 {
            let mut expect: Vec<(f64, usize)> = (0..10)
                .filter(|&j| j != i)
                .map(|j| ((vals[i] - vals[j]).abs(), j))
                .filter(|&(d, _)| d <= 1.0)
                .collect();
            expect.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut row = vec![i];
            row.extend(expect.iter().take(7).map(|e| e.1));
            row.resize(8, i);
            assert_eq!(nbrs[i], row, "row {i}");
            let cluster = i / 5;
            assert!(nbrs[i].iter().all(|&j| j / 5 == cluster));
        }
    }

    #[test]
    fn identical_points_tie_break_by_index() {
        let e = Tensor::from_rows(&[[1.0, 1.0]; 6]).unwrap();
        let nbrs = knn_embedding(&e, 3, 0.5);
        assert_eq!(nbrs[0], vec![0, 1, 2]);
        assert_eq!(nbrs[4], vec![4, 0, 1]);
        for (i, row) in nbrs.iter().enumerate() {
            assert!(row.contains(&i));
        }
    }
}
