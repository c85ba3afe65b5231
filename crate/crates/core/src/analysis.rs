//! Pathway geometry versus error flow.
//!
//! Distance matrices between class-pathways, per-class average distances,
//! nearest-k confusion coverage, and Spearman rank correlation between
//! distances and confusion counts.

use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{dim, domain, Error, Result};
use crate::pathway::{pathway_vector, ClassPathway, PathwayConfig, PathwaySet};

/// Square matrix of non-negative pathway distances with a zero diagonal.
///
/// Matrices computed by [`distance_matrix`] are symmetric by construction.
/// Published tables loaded through [`DistanceMatrix::new`] may carry small
/// printed asymmetries; [`DistanceMatrix::max_asymmetry`] reports them.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(dim("distance matrix must be square"));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(domain("distances must be finite and non-negative"));
        }
        if (0..n).any(|i| values[i * n + i] != 0.0) {
            return Err(domain("distance matrix diagonal must be zero"));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    /// Relabels classes: entry `(perm[i], perm[j])` of the result equals `(i, j)` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                values[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Self { n: self.n, values }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix(out, self.n, |i, j| self.get(i, j).to_string())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows = read_matrix(input)?;
        let parsed = rows
            .into_iter()
            .map(|r| r.into_iter().map(|c| parse_cell::<f64>(&c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(parsed)
    }
}

/// Counts of true-class `i` samples predicted as class `j` (row = truth, column = prediction).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(dim("confusion matrix must be square"));
        }
        Ok(Self { n, counts: rows.into_iter().flatten().collect() })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(dim(format!("{} labels but {} predictions", truth.len(), predicted.len())));
        }
        let mut m = Self::zeros(n);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n || p >= n {
                return Err(domain(format!("class index out of range for {n} classes")));
            }
            m.counts[t * n + p] += 1;
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Off-diagonal sum.
    pub fn errors(&self) -> u64 {
        self.total() - self.correct()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.n).map(|j| self.get(truth, j)).sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, predicted)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.n).map(|i| self.counts[i * self.n..(i + 1) * self.n].to_vec()).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut counts = vec![0; self.counts.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                counts[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Self { n: self.n, counts }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix(out, self.n, |i, j| self.get(i, j).to_string())
    }

    /// Reads a matrix CSV; blank cells (missing printed values) count as zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows = read_matrix(input)?;
        let parsed = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| if c.trim().is_empty() { Ok(0) } else { parse_cell::<u64>(&c) })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(parsed)
    }
}

fn parse_cell<T: std::str::FromStr>(cell: &str) -> Result<T> {
    cell.trim().parse().map_err(|_| Error::Parse(format!("cannot parse matrix cell '{cell}'")))
}

/// Matrix CSV layout: header `class,0,1,..,n-1`, then one row per class led by its index.
fn write_matrix<W: Write>(out: W, n: usize, cell: impl Fn(usize, usize) -> String) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["class".to_string()];
    header.extend((0..n).map(|j| j.to_string()));
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec = vec![i.to_string()];
        rec.extend((0..n).map(|j| cell(i, j)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix<R: Read>(input: R) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let width = r.headers()?.len();
    if width < 2 {
        return Err(Error::Parse("matrix CSV needs a label column and at least one class".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
    }
    if rows.len() != width - 1 {
        return Err(dim(format!("matrix CSV has {} columns but {} rows", width - 1, rows.len())));
    }
    Ok(rows)
}

/// Euclidean distance between the selected, flattened node-values of two pathways.
pub fn pathway_distance(a: &ClassPathway, b: &ClassPathway, cfg: &PathwayConfig) -> Result<f64> {
    let va = pathway_vector(a, cfg)?;
    let vb = pathway_vector(b, cfg)?;
    if va.len() != vb.len() {
        return Err(dim(format!("pathway lengths differ: {} vs {}", va.len(), vb.len())));
    }
    if a.layers().iter().map(Vec::len).ne(b.layers().iter().map(Vec::len)) {
        return Err(dim("pathway layer shapes differ"));
    }
    Ok(euclidean(&va, &vb))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// All pairwise pathway distances; the lower triangle mirrors the upper one.
pub fn distance_matrix(set: &PathwaySet, cfg: &PathwayConfig) -> Result<DistanceMatrix> {
    let vectors = set.pathways().iter().map(|p| pathway_vector(p, cfg)).collect::<Result<Vec<_>>>()?;
    let n = vectors.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&vectors[i], &vectors[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Mean distance from each class to the other `n − 1` classes (row means).
pub fn average_distance(d: &DistanceMatrix) -> Result<Vec<f64>> {
    let n = d.n();
    if n < 2 {
        return Err(domain("average distance needs at least two classes"));
    }
    Ok((0..n)
        .map(|i| {
            let sum: f64 = (0..n).filter(|&j| j != i).map(|j| d.get(i, j)).sum();
            sum / (n - 1) as f64
        })
        .collect())
}

/// The `k` classes closest to `class` (excluding itself), nearest first, lower index on ties.
pub fn nearest_k(d: &DistanceMatrix, class: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..d.n()).filter(|&j| j != class).collect();
    others.sort_by(|&a, &b| d.get(class, a).total_cmp(&d.get(class, b)).then(a.cmp(&b)));
    others.truncate(k);
    others
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub k: usize,
    /// Nearest-k classes for each true class.
    pub nearest: Vec<Vec<usize>>,
    pub covered: u64,
    pub total: u64,
    pub fraction: f64,
}

/// Share of all misclassifications that land in each true class's `k` nearest classes.
pub fn topk_coverage(d: &DistanceMatrix, c: &ConfusionMatrix, k: usize) -> Result<CoverageReport> {
    let n = d.n();
    if c.n() != n {
        return Err(dim(format!("distance matrix is {n}x{n}, confusion is {0}x{0}", c.n())));
    }
    if k == 0 || k >= n {
        return Err(domain(format!("k must be in 1..={}, got {k}", n.saturating_sub(1))));
    }
    let total = c.errors();
    if total == 0 {
        return Err(domain("confusion matrix has no errors"));
    }
    let nearest: Vec<Vec<usize>> = (0..n).map(|i| nearest_k(d, i, k)).collect();
    let covered = nearest.iter().enumerate().map(|(i, set)| set.iter().map(|&j| c.get(i, j)).sum::<u64>()).sum();
    Ok(CoverageReport { k, nearest, covered, total, fraction: covered as f64 / total as f64 })
}

/// Coverage for every `k` in `1..n`.
pub fn coverage_curve(d: &DistanceMatrix, c: &ConfusionMatrix) -> Result<Vec<CoverageReport>> {
    (1..d.n()).map(|k| topk_coverage(d, c, k)).collect()
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold equal values; ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman coefficient (Pearson correlation of average ranks); `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCorrelation {
    /// Per true class, over the other classes; `None` where a row is constant.
    pub per_class: Vec<Option<f64>>,
    /// Mean of the defined per-class coefficients.
    pub pooled: Option<f64>,
    pub undefined_classes: Vec<usize>,
}

/// Correlates `D[i][j]` with `C[i][j]` over `j ≠ i` for each true class `i`.
pub fn rank_correlation(d: &DistanceMatrix, c: &ConfusionMatrix) -> Result<RankCorrelation> {
    let n = d.n();
    if c.n() != n {
        return Err(dim(format!("distance matrix is {n}x{n}, confusion is {0}x{0}", c.n())));
    }
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                (0..n).filter(|&j| j != i).map(|j| (d.get(i, j), c.get(i, j) as f64)).unzip();
            spearman(&xs, &ys)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let pooled = if defined.is_empty() { None } else { Some(defined.iter().sum::<f64>() / defined.len() as f64) };
    let undefined_classes = per_class.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect();
    Ok(RankCorrelation { per_class, pooled, undefined_classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::PathwayLayer;

    fn pathway(class: usize, layers: Vec<Vec<f64>>) -> ClassPathway {
        ClassPathway::new(class, layers)
    }

    #[test]
    fn distance_of_identical_pathways_is_zero() {
        let a = pathway(0, vec![vec![0.5, 0.25], vec![1.0]]);
        assert_eq!(pathway_distance(&a, &a, &PathwayConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn distance_hand_example() {
        let a = pathway(0, vec![vec![0.5, 0.0], vec![0.5, 0.0]]);
        let b = pathway(1, vec![vec![0.0, 0.5], vec![0.0, 0.5]]);
        assert_eq!(pathway_distance(&a, &b, &PathwayConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn distance_shape_mismatch() {
        let a = pathway(0, vec![vec![0.5, 0.0]]);
        let b = pathway(1, vec![vec![0.0, 0.5, 1.0]]);
        assert!(matches!(pathway_distance(&a, &b, &PathwayConfig::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn three_class_matrix_by_hand() {
        // vectors (0,0), (3,4), (0,4): d01 = 5, d02 = 4, d12 = 3
        let set = PathwaySet::new(
            vec![pathway(0, vec![vec![0.0, 0.0]]), pathway(1, vec![vec![3.0, 4.0]]), pathway(2, vec![vec![0.0, 4.0]])],
            vec![PathwayLayer::unknown(2)],
        )
        .unwrap();
        let d = distance_matrix(&set, &PathwayConfig::default()).unwrap();
        assert_eq!(d.rows(), vec![vec![0.0, 5.0, 4.0], vec![5.0, 0.0, 3.0], vec![4.0, 3.0, 0.0]]);
        assert_eq!(average_distance(&d).unwrap(), vec![4.5, 4.0, 3.5]);
    }

    #[test]
    fn identical_pathways_give_zero_matrix() {
        let set =
            PathwaySet::new((0..4).map(|c| pathway(c, vec![vec![1.0, 2.0]])).collect(), vec![PathwayLayer::unknown(2)])
                .unwrap();
        let d = distance_matrix(&set, &PathwayConfig::default()).unwrap();
        assert!(d.rows().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_off_diagonal_average() {
        let n = 5;
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 2.5 }).collect()).collect();
        let d = DistanceMatrix::new(rows).unwrap();
        assert!(average_distance(&d).unwrap().iter().all(|&v| v == 2.5));
        let single = DistanceMatrix::new(vec![vec![0.0]]).unwrap();
        assert!(average_distance(&single).is_err());
    }

    #[test]
    fn nearest_ties_prefer_lower_index() {
        let d = DistanceMatrix::new(vec![
            vec![0.0, 1.0, 1.0, 0.5],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![0.5, 1.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(nearest_k(&d, 0, 2), vec![3, 1]);
        assert_eq!(nearest_k(&d, 1, 3), vec![0, 2, 3]);
    }

    #[test]
    fn full_k_covers_everything_and_zero_errors_rejected() {
        let d = DistanceMatrix::new(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]]).unwrap();
        let c = ConfusionMatrix::from_rows(vec![vec![5, 1, 2], vec![0, 5, 3], vec![4, 0, 5]]).unwrap();
        assert_eq!(topk_coverage(&d, &c, 2).unwrap().fraction, 1.0);
        // class 0 -> {1}: 1; class 1 -> {0}: 0; class 2 -> {0}: 4
        let r = topk_coverage(&d, &c, 1).unwrap();
        assert_eq!((r.covered, r.total), (5, 10));
        assert!(topk_coverage(&d, &c, 3).is_err());
        assert!(topk_coverage(&d, &c, 0).is_err());
        let clean = ConfusionMatrix::from_rows(vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        assert!(matches!(topk_coverage(&d, &clean, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_anti_monotone_is_minus_one() {
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[40.0, 30.0, 20.0, 1.0]).unwrap();
        assert!((rho + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn four_class_rank_fixture() {
        // Row 0: d = [_, 1, 2, 3], c = [_, 5, 7, 0]. Ranks d: 1,2,3; c: 2,3,1.
        // rho = 1 - 6 Σd² / (n(n²-1)) = 1 - 6·(1+1+4)/24 = -0.5
        // Row 1: d = [1, _, 4, 2] -> ranks 1,3,2; c = [3, _, 3, 0] -> ranks 2.5,2.5,1.
        // Pearson on ranks: rx - 2 = [-1, 1, 0], ry - 2 = [0.5, 0.5, -1]; sxy = 0, so rho = 0.
        // Rows 2 and 3: constant counts -> undefined.
        let d = DistanceMatrix::new(vec![
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.0, 4.0, 2.0],
            vec![2.0, 4.0, 0.0, 5.0],
            vec![3.0, 2.0, 5.0, 0.0],
        ])
        .unwrap();
        let c =
            ConfusionMatrix::from_rows(vec![vec![9, 5, 7, 0], vec![3, 9, 3, 0], vec![1, 1, 9, 1], vec![0, 0, 0, 9]])
                .unwrap();
        let r = rank_correlation(&d, &c).unwrap();
        assert!((r.per_class[0].unwrap() + 0.5).abs() < 1e-12);
        assert!(r.per_class[1].unwrap().abs() < 1e-12);
        assert_eq!(r.undefined_classes, vec![2, 3]);
        assert!((r.pooled.unwrap() + 0.25).abs() < 1e-12);
    }

    #[test]
    fn confusion_counts_and_csv() {
        let c = ConfusionMatrix::from_predictions(&[0, 0, 1, 2, 2], &[0, 1, 1, 0, 2], 3).unwrap();
        assert_eq!(c.rows(), vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 1]]);
        assert_eq!(c.errors(), 2);
        assert_eq!(c.row_sum(2), 2);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(ConfusionMatrix::read_csv(&buf[..]).unwrap(), c);
    }

    #[test]
    fn rejects_bad_distance_matrices() {
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![1.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
    }
}
