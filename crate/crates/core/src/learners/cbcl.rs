use serde::{Deserialize, Serialize};

use super::{check_input, check_query, sq_dist, Learner};
use crate::error::{Error, Result};

/// How two same-class centroids are combined when the cap is exceeded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// `(c_i w_i + c_j w_j) / (c_i + c_j)`.
    #[default]
    CountWeighted,
    /// `(w_i + w_j) / (c_i + c_j)`, kept for compatibility.
    PrintedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub vector: Vec<f64>,
    pub count: u64,
}

/// Centroid-based concept learning: several centroids per class, created
/// when a sample is at least `threshold` away from every centroid of its
/// class, merged pairwise whenever the total exceeds `max_centroids`.
///
/// Class `k` scores `-(distance to its nearest centroid) * (samples seen
/// for k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cbcl {
    dim: usize,
    threshold: f64,
    max_centroids: usize,
    merge_rule: MergeRule,
    centroids: Vec<Vec<Centroid>>,
    seen: Vec<u64>,
}

impl Cbcl {
    pub fn new(
        num_classes: usize,
        dim: usize,
        threshold: f64,
        max_centroids: usize,
        merge_rule: MergeRule,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "CBCL threshold must be positive, got {threshold}"
            )));
        }
        // Every seen class keeps at least one centroid, so the cap can only
        // be honored when it covers all classes.
        if num_classes > max_centroids {
            return Err(Error::InvalidArgument(format!(
                "CBCL cap of {max_centroids} centroids cannot hold {num_classes} classes"
            )));
        }
        Ok(Self {
            dim,
            threshold,
            max_centroids,
            merge_rule,
            centroids: vec![Vec::new(); num_classes],
            seen: vec![0; num_classes],
        })
    }

    pub fn centroids(&self, class: usize) -> &[Centroid] {
        &self.centroids[class]
    }

    pub fn total_centroids(&self) -> usize {
        self.centroids.iter().map(Vec::len).sum()
    }

    pub fn seen(&self, class: usize) -> u64 {
        self.seen[class]
    }

    pub fn max_centroids(&self) -> usize {
        self.max_centroids
    }

    /// The same-class pair with the smallest distance, as
    /// `(class, i, j)` with `i < j`. Ties go to the first pair in
    /// class-then-index order.
    pub fn closest_pair(&self) -> Option<(usize, usize, usize)> {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (k, cs) in self.centroids.iter().enumerate() {
            for i in 0..cs.len() {
                for j in i + 1..cs.len() {
                    let d = sq_dist(&cs[i].vector, &cs[j].vector);
                    if best.is_none_or(|b| d < b.0) {
                        best = Some((d, k, i, j));
                    }
                }
            }
        }
        best.map(|(_, k, i, j)| (k, i, j))
    }

    fn merge(&mut self, k: usize, i: usize, j: usize) {
        let cj = self.centroids[k].swap_remove(j);
        let ci = &mut self.centroids[k][i];
        let total = ci.count + cj.count;
        let (a, b) = match self.merge_rule {
            MergeRule::CountWeighted => (ci.count as f64, cj.count as f64),
            MergeRule::PrintedSum => (1.0, 1.0),
        };
        for (w, v) in ci.vector.iter_mut().zip(&cj.vector) {
            *w = (a * *w + b * v) / total as f64;
        }
        ci.count = total;
    }
}

impl Learner for Cbcl {
    fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.dim, self.centroids.len(), x, y)?;
        self.seen[y] += 1;
        let nearest = self.centroids[y]
            .iter()
            .enumerate()
            .map(|(i, c)| (i, sq_dist(&c.vector, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, d2)) if d2.sqrt() < self.threshold => {
                let c = &mut self.centroids[y][i];
                let n = c.count as f64;
                for (w, v) in c.vector.iter_mut().zip(x) {
                    *w = (n * *w + v) / (n + 1.0);
                }
                c.count += 1;
            }
            _ => self.centroids[y].push(Centroid {
                vector: x.to_vec(),
                count: 1,
            }),
        }
        while self.total_centroids() > self.max_centroids {
            let (k, i, j) = self
                .closest_pair()
                .expect("cap covers every class, so some class has two centroids");
            self.merge(k, i, j);
        }
        Ok(())
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        Ok(self
            .centroids
            .iter()
            .zip(&self.seen)
            .map(|(cs, &n)| {
                cs.iter()
                    .map(|c| sq_dist(&c.vector, x))
                    .min_by(f64::total_cmp)
                    .map_or(f64::NEG_INFINITY, |d2| -d2.sqrt() * n as f64)
            })
            .collect())
    }

    /// Centroid coordinates and counts plus one seen-count per class.
    fn stored_scalars(&self) -> u64 {
        let c = self.total_centroids() as u64;
        c * self.dim as u64 + c + self.centroids.len() as u64
    }
}
