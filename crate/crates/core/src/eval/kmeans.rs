use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    /// Stop when inertia improves by less than this fraction.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        KMeansConfig {
            k,
            restarts: 10,
            tolerance: 1e-4,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<f64>,
    pub inertia: f64,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins. `points` is row-major with `dim` columns.
pub fn kmeans<R: Rng + ?Sized>(points: &[f64], dim: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<Clustering> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Eval("point matrix does not match dimension".into()));
    }
    let n = points.len() / dim;
    if cfg.k == 0 || n < cfg.k {
        return Err(Error::Eval(format!("cannot form {} clusters from {n} points", cfg.k)));
    }
    let mut best: Option<Clustering> = None;
    for _ in 0..cfg.restarts.max(1) {
        let c = single_run(points, dim, n, cfg, rng);
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn row(points: &[f64], dim: usize, i: usize) -> &[f64] {
    &points[i * dim..(i + 1) * dim]
}

fn plus_plus<R: Rng + ?Sized>(points: &[f64], dim: usize, n: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(points, dim, rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq(row(points, dim, i), &centroids[..dim])).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(row(points, dim, pick));
        let new = &centroids[c * dim..(c + 1) * dim];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(row(points, dim, i), new));
        }
    }
    centroids
}

fn single_run<R: Rng + ?Sized>(points: &[f64], dim: usize, n: usize, cfg: &KMeansConfig, rng: &mut R) -> Clustering {
    let k = cfg.k;
    let mut centroids = plus_plus(points, dim, n, k, rng);
    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        inertia = 0.0;
        for i in 0..n {
            let p = row(points, dim, i);
            let (mut bc, mut bd) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq(p, &centroids[c * dim..(c + 1) * dim]);
                if d < bd {
                    bc = c;
                    bd = d;
                }
            }
            assignments[i] = bc;
            dist[i] = bd;
            inertia += bd;
        }
        if prev.is_finite() && prev - inertia <= cfg.tolerance * prev {
            break;
        }
        prev = inertia;

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(points, dim, i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point farthest from its centroid
                let far = (0..n).max_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap_or(0);
                centroids[c * dim..(c + 1) * dim].copy_from_slice(row(points, dim, far));
                dist[far] = 0.0;
            } else {
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
    Clustering {
        assignments,
        centroids,
        inertia,
    }
}
