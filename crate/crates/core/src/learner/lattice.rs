//! Randomly shifted rank-1 lattices `x_k = frac(k z / n + shift)` over a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Shortest toroidal distance between lattice points of the Korobov generator `(1, a, a^2, ...)`.
fn min_distance(n: usize, z: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 1..n {
        let mut d2 = 0.0;
        for &zi in z {
            let u = ((k * zi) % n) as f64 / n as f64;
            let u = u.min(1.0 - u);
            d2 += u * u;
        }
        best = best.min(d2);
    }
    best.sqrt()
}

/// Korobov generator maximizing the minimum distance. Exhaustive for small n, strided otherwise.
pub fn korobov_generator(n: usize, dim: usize) -> Vec<usize> {
    if n <= 2 || dim == 1 {
        return vec![1; dim];
    }
    let stride = (n / 1500).max(1);
    let mut best = (f64::NEG_INFINITY, vec![1; dim]);
    let mut a = 2;
    while a < n {
        if gcd(a, n) == 1 {
            let mut z = vec![1usize; dim];
            for i in 1..dim {
                z[i] = (z[i - 1] * a) % n;
            }
            let d = min_distance(n, &z);
            if d > best.0 {
                best = (d, z);
            }
        }
        a += stride;
    }
    best.1
}

/// `n` lattice points in the box `[lo, hi]`; the shift is drawn from `seed`.
pub fn lattice_sample(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let z = korobov_generator(n, dim);
    (0..n)
        .map(|k| {
            (0..dim)
                .map(|i| {
                    let u = ((k * z[i]) % n) as f64 / n as f64 + shift[i];
                    lo[i] + u.fract() * (hi[i] - lo[i])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Star discrepancy of a 2-D point set over anchored boxes spanned by point coordinates.
    fn star_discrepancy(p: &[Vec<f64>]) -> f64 {
        let n = p.len() as f64;
        let mut xs: Vec<f64> = p.iter().map(|v| v[0]).chain([1.0]).collect();
        let mut ys: Vec<f64> = p.iter().map(|v| v[1]).chain([1.0]).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut worst: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                let open = p.iter().filter(|v| v[0] < x && v[1] < y).count() as f64;
                let closed = p.iter().filter(|v| v[0] <= x && v[1] <= y).count() as f64;
                let vol = x * y;
                worst = worst.max(vol - open / n).max(closed / n - vol);
            }
        }
        worst
    }

    #[test]
    fn single_point_is_shifted_origin() {
        let p = lattice_sample(&[1.0, 2.0], &[3.0, 4.0], 1, 11);
        assert_eq!(p.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
        assert!((p[0][0] - (1.0 + 2.0 * s[0])).abs() < 1e-15);
        assert!((p[0][1] - (2.0 + 2.0 * s[1])).abs() < 1e-15);
    }

    #[test]
    fn points_inside_region() {
        let lo = [-3.0, -1.0, 0.5];
        let hi = [3.0, 1.0, 0.7];
        for p in lattice_sample(&lo, &hi, 997, 3) {
            for i in 0..3 {
                assert!(p[i] >= lo[i] && p[i] <= hi[i]);
            }
        }
    }

    #[test]
    fn lower_discrepancy_than_iid() {
        let mut lat = Vec::new();
        let mut iid = Vec::new();
        for seed in 0..20 {
            lat.push(star_discrepancy(&lattice_sample(&[0.0, 0.0], &[1.0, 1.0], 100, seed)));
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let pts: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen(), rng.gen()]).collect();
            iid.push(star_discrepancy(&pts));
        }
        lat.sort_by(f64::total_cmp);
        iid.sort_by(f64::total_cmp);
        let med = |v: &[f64]| 0.5 * (v[9] + v[10]);
        assert!(med(&lat) < med(&iid), "{} vs {}", med(&lat), med(&iid));
    }
}
