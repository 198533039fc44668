//! Farthest-point (Gonzalez) clustering of the source points.

use crate::points::{sq_dist, PointSet};

/// Greedy farthest-point traversal from point 0.
///
/// Returns center indices in selection order together with the covering
/// radius after each selection: `radii[k]` is the max distance to the nearest
/// of the first `k + 1` centers. Stops after `k_cap` centers or once the
/// radius drops to `stop_radius`.
pub fn gonzalez(x: &PointSet, k_cap: usize, stop_radius: f64) -> (Vec<usize>, Vec<f64>) {
    let n = x.len();
    let k_cap = k_cap.clamp(1, n);
    let mut centers = vec![0usize];
    let mut nearest: Vec<f64> = x.iter().map(|p| sq_dist(p, x.point(0))).collect();
    let mut radii = Vec::with_capacity(k_cap);
    loop {
        let (far, far_d2) = argmax(&nearest);
        radii.push(far_d2.sqrt());
        if centers.len() >= k_cap || far_d2.sqrt() <= stop_radius || far_d2 == 0.0 {
            break;
        }
        centers.push(far);
        let c = x.point(far);
        for (i, p) in x.iter().enumerate() {
            let d2 = sq_dist(p, c);
            if d2 < nearest[i] {
                nearest[i] = d2;
            }
        }
    }
    (centers, radii)
}

/// Index of the maximum, lowest index on ties.
fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Assigns every point to its nearest center (lowest center position on ties).
pub fn assign(x: &PointSet, centers: &[usize]) -> Vec<usize> {
    x.iter()
        .map(|p| {
            let mut best = (0usize, f64::INFINITY);
            for (c, &ci) in centers.iter().enumerate() {
                let d2 = sq_dist(p, x.point(ci));
                if d2 < best.1 {
                    best = (c, d2);
                }
            }
            best.0
        })
        .collect()
}
