//! Density-based clustering over embeddings.
//!
//! A point is core when at least `min_pts` points (itself included) lie
//! within `eps` of it. Points are visited in index order, so clusters are
//! numbered by their lowest-index core point, and a border point reachable
//! from several clusters joins the first one to expand over it.

use std::collections::VecDeque;

use crate::encoder::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Noise,
    Cluster(usize),
}

fn region(points: &[Embedding], i: usize, eps_sq: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| points[i].sq_dist(&points[j]) <= eps_sq)
        .collect()
}

/// Labels every point; returns the labels and the number of clusters.
pub fn dbscan(points: &[Embedding], eps: f64, min_pts: usize) -> (Vec<Label>, usize) {
    let eps_sq = eps * eps;
    let mut labels: Vec<Option<Label>> = vec![None; points.len()];
    let mut clusters = 0;
    for i in 0..points.len() {
        if labels[i].is_some() {
            continue;
        }
        let neighbours = region(points, i, eps_sq);
        if neighbours.len() < min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        let c = clusters;
        clusters += 1;
        labels[i] = Some(Label::Cluster(c));
        let mut queue: VecDeque<usize> = neighbours.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(Label::Noise) => labels[j] = Some(Label::Cluster(c)),
                Some(Label::Cluster(_)) => {}
                None => {
                    labels[j] = Some(Label::Cluster(c));
                    let nj = region(points, j, eps_sq);
                    if nj.len() >= min_pts {
                        queue.extend(nj);
                    }
                }
            }
        }
    }
    (labels.into_iter().map(|l| l.expect("all visited")).collect(), clusters)
}

/// Median over points of the distance to the `min_pts`-th nearest point,
/// counting the point itself. Always positive.
pub fn k_distance_eps(points: &[Embedding], min_pts: usize) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let k = min_pts.max(1).min(n) - 1;
    let mut kd: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = points.iter().map(|p| points[i].sq_dist(p).sqrt()).collect();
            d.sort_by(f64::total_cmp);
            d[k]
        })
        .collect();
    kd.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        kd[n / 2]
    } else {
        0.5 * (kd[n / 2 - 1] + kd[n / 2])
    };
    median.max(f64::MIN_POSITIVE)
}
