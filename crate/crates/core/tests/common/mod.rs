//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use dmsclass::neural::{Mode, Network, Tensor};
use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

/// Central differences of the training loss for every parameter entry. The
/// rng is cloned per evaluation so dropout masks stay fixed.
pub fn numeric_gradients(
    net: &Network,
    x: &Tensor,
    targets: ArrayView2<f64>,
    rng: &ChaCha8Rng,
    eps: f64,
) -> Vec<Vec<Vec<f64>>> {
    let mut work = net.clone();
    let shape: Vec<Vec<usize>> = net
        .layers()
        .iter()
        .map(|l| l.params().iter().map(|(p, _)| p.len()).collect())
        .collect();
    let mut out = Vec::new();
    for (li, sizes) in shape.iter().enumerate() {
        let mut layer_grads = Vec::new();
        for (pi, &len) in sizes.iter().enumerate() {
            let mut g = vec![0.0; len];
            for (j, gj) in g.iter_mut().enumerate() {
                let orig = work.layers()[li].params()[pi].0[j];
                work.layers_mut()[li].params_mut()[pi][j] = orig + eps;
                let up = work.loss(x, targets, Mode::Train, &mut rng.clone()).unwrap();
                work.layers_mut()[li].params_mut()[pi][j] = orig - eps;
                let down = work.loss(x, targets, Mode::Train, &mut rng.clone()).unwrap();
                work.layers_mut()[li].params_mut()[pi][j] = orig;
                *gj = (up - down) / (2.0 * eps);
            }
            layer_grads.push(g);
        }
        out.push(layer_grads);
    }
    out
}

/// Largest `|a - n| / max(|a|, |n|)` over all entries, treating pairs that
/// are both below `floor` in magnitude as agreeing.
pub fn max_relative_error(analytic: &[Vec<Vec<f64>>], numeric: &[Vec<Vec<f64>>], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (la, ln) in analytic.iter().zip(numeric) {
        assert_eq!(la.len(), ln.len());
        for (pa, pn) in la.iter().zip(ln) {
            assert_eq!(pa.len(), pn.len());
            for (&a, &n) in pa.iter().zip(pn) {
                let scale = a.abs().max(n.abs());
                if scale < floor {
                    continue;
                }
                worst = worst.max((a - n).abs() / scale);
            }
        }
    }
    worst
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues in descending order and the matching eigenvectors as rows.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (r, &i) in order.iter().enumerate() {
        vectors.row_mut(r).assign(&v.column(i));
    }
    (values, vectors)
}

/// Sample covariance with the `n - 1` divisor, written out as sums.
pub fn explicit_covariance(x: &Array2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mean: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut c = Array2::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            let mut s = 0.0;
            for i in 0..n {
                s += (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b]);
            }
            c[(a, b)] = s / (n - 1) as f64;
        }
    }
    c
}

/// Ledoit–Wolf shrinkage from the per-sample outer-product form of the
/// optimal intensity. Returns `(shrunk covariance, lambda)`.
pub fn ledoit_wolf_oracle(x: &Array2<f64>) -> (Array2<f64>, f64) {
    let (n, p) = x.dim();
    let mean: Array1<f64> = x.mean_axis(ndarray::Axis(0)).unwrap();
    let xc = x - &mean;
    let mut s = Array2::<f64>::zeros((p, p));
    for row in xc.rows() {
        for a in 0..p {
            for b in 0..p {
                s[(a, b)] += row[a] * row[b] / n as f64;
            }
        }
    }
    let mu = (0..p).map(|i| s[(i, i)]).sum::<f64>() / p as f64;
    let mut d2 = 0.0;
    for a in 0..p {
        for b in 0..p {
            let t = if a == b { mu } else { 0.0 };
            d2 += (s[(a, b)] - t).powi(2);
        }
    }
    d2 /= p as f64;
    let mut b2 = 0.0;
    for row in xc.rows() {
        let mut acc = 0.0;
        for a in 0..p {
            for b in 0..p {
                acc += (row[a] * row[b] - s[(a, b)]).powi(2);
            }
        }
        b2 += acc / p as f64;
    }
    b2 /= (n * n) as f64;
    let b2 = b2.min(d2);
    let lambda = if d2 > 0.0 { b2 / d2 } else { 0.0 };
    let mut shrunk = s.clone() * (1.0 - lambda);
    for i in 0..p {
        shrunk[(i, i)] += lambda * mu;
    }
    (shrunk, lambda)
}

/// Exhaustive-scan nearest-neighbour vote: all distances fully sorted by
/// (distance, training index); ties in the vote go to the smaller summed
/// distance, then the smaller label.
pub fn brute_knn(train: &Array2<f64>, labels: &[usize], query: &[f64], k: usize) -> usize {
    let mut d: Vec<(f64, usize)> = train
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let s: f64 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (s.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_labels = labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; n_labels];
    let mut dist = vec![0.0f64; n_labels];
    for &(di, i) in &d[..k] {
        votes[labels[i]] += 1;
        dist[labels[i]] += di;
    }
    let mut best = None;
    for c in 0..n_labels {
        if votes[c] == 0 {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if votes[c] > votes[b] || (votes[c] == votes[b] && dist[c] < dist[b]) => Some(c),
            keep => keep,
        };
    }
    best.unwrap()
}

/// Leave-one-out nearest-centroid accuracy over flattened samples.
pub fn nearest_centroid_accuracy(x: &Array2<f64>, labels: &[usize]) -> f64 {
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut hits = 0;
    for i in 0..x.nrows() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..n_classes {
            let members: Vec<usize> = (0..x.nrows()).filter(|&j| j != i && labels[j] == c).collect();
            let mut centroid = Array1::<f64>::zeros(x.ncols());
            for &j in &members {
                centroid += &x.row(j);
            }
            centroid /= members.len() as f64;
            let d: f64 = x.row(i).iter().zip(centroid.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        if best.1 == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / x.nrows() as f64
}
