//! Wasserstein-1 between equal-size point sets.
//!
//! `w1_exact_small` solves the optimal assignment (Hungarian algorithm with
//! potentials, O(n^3)) on the pairwise distance matrix — the oracle every
//! other estimate is checked against. `sliced_w1` is the scalable surrogate:
//! averaged 1D transports along random directions (exact in 1D by sorting).

use rand::Rng;

use crate::error::{Result, TheoryError};

pub const EXACT_ASSIGNMENT_LIMIT: usize = 512;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum-cost perfect matching value on a square cost matrix
/// (shortest-augmenting-path Hungarian with dual potentials).
pub fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    // 1-based arrays; p[j] = row matched to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost[p[j] - 1][j - 1];
    }
    total
}

/// Exact W1 between two equal-size point multisets under the Euclidean
/// metric: the optimal assignment cost divided by n.
pub fn w1_exact_small(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TheoryError::Config(format!(
            "sample counts differ: {} vs {} (subsample to the minimum first)",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(TheoryError::Config("empty point sets".into()));
    }
    if a.len() > EXACT_ASSIGNMENT_LIMIT {
        return Err(TheoryError::Config(format!(
            "{} points exceed the exact-assignment limit {EXACT_ASSIGNMENT_LIMIT}; use sliced_w1",
            a.len()
        )));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| euclid(x, y)).collect()).collect();
    Ok(assignment_cost(&cost) / n as f64)
}

/// Exact W1 between grid-discretized functions under the L2 ground metric
/// scaled by the grid spacing dx: d(f, g) = sqrt(dx * sum (f-g)^2).
pub fn w1_exact_functions(a: &[Vec<f64>], b: &[Vec<f64>], dx: f64) -> Result<f64> {
    let s = dx.sqrt();
    let scale = |set: &[Vec<f64>]| -> Vec<Vec<f64>> {
        set.iter().map(|f| f.iter().map(|v| v * s).collect()).collect()
    };
    w1_exact_small(&scale(a), &scale(b))
}

/// Mean absolute projection of a unit vector onto a random direction in R^d:
/// Gamma(d/2) / (sqrt(pi) Gamma((d+1)/2)). Dividing by it makes the sliced
/// estimate exact for pure translations (and unbiased in scale generally);
/// it is 1 in one dimension.
fn projection_correction(dim: usize) -> f64 {
    if dim == 1 {
        return 1.0;
    }
    libm::tgamma(dim as f64 / 2.0) / (std::f64::consts::PI.sqrt() * libm::tgamma((dim as f64 + 1.0) / 2.0))
}

/// Sliced W1: average over random unit directions of the 1D transport
/// (sorting) distance, divided by the mean projection factor of the
/// dimension. Equals the exact W1 for 1D inputs; in higher dimensions it is
/// a documentedly loose surrogate for the assignment oracle.
pub fn sliced_w1(a: &[Vec<f64>], b: &[Vec<f64>], projections: usize, rng: &mut impl Rng) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TheoryError::Config(format!("sample counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() || projections == 0 {
        return Err(TheoryError::Config("sliced_w1 needs points and projections >= 1".into()));
    }
    let dim = a[0].len();
    let n = a.len();
    let mut total = 0.0;
    let mut pa = vec![0.0f64; n];
    let mut pb = vec![0.0f64; n];
    for _ in 0..projections {
        // Random unit direction (Gaussian normalized).
        let mut dir = Vec::with_capacity(dim);
        while dir.len() < dim {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            dir.push(r * (2.0 * std::f64::consts::PI * u2).cos());
            if dir.len() < dim {
                dir.push(r * (2.0 * std::f64::consts::PI * u2).sin());
            }
        }
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for (i, x) in a.iter().enumerate() {
            pa[i] = x.iter().zip(&dir).map(|(v, d)| v * d).sum::<f64>() / norm;
        }
        for (i, x) in b.iter().enumerate() {
            pb[i] = x.iter().zip(&dir).map(|(v, d)| v * d).sum::<f64>() / norm;
        }
        pa.sort_by(f64::total_cmp);
        pb.sort_by(f64::total_cmp);
        total += pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    }
    Ok(total / projections as f64 / projection_correction(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let a = pts(&[0.3, -1.0, 2.5]);
        assert_eq!(w1_exact_small(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dirac_pair_distance() {
        let a = pts(&[0.0]);
        let b = pts(&[1.7]);
        assert!((w1_exact_small(&a, &b).unwrap() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn two_point_example() {
        // A = {0, 1}, B = {0.5, 1.5}: identity matching costs 1, swap costs 2
        // => W1 = 1/2.
        let a = pts(&[0.0, 1.0]);
        let b = pts(&[0.5, 1.5]);
        assert!((w1_exact_small(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    fn brute_force_w1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        // permutations over <= 8 points
        fn permute(rest: &mut Vec<usize>, chosen: &mut Vec<usize>, best: &mut f64, a: &[Vec<f64>], b: &[Vec<f64>]) {
            if rest.is_empty() {
                let cost: f64 = chosen.iter().enumerate().map(|(i, &j)| euclid(&a[i], &b[j])).sum();
                *best = best.min(cost);
                return;
            }
            for k in 0..rest.len() {
                let j = rest.remove(k);
                chosen.push(j);
                permute(rest, chosen, best, a, b);
                chosen.pop();
                rest.insert(k, j);
            }
        }
        let mut best = f64::INFINITY;
        let mut rest: Vec<usize> = (0..a.len()).collect();
        permute(&mut rest, &mut Vec::new(), &mut best, a, b);
        best / a.len() as f64
    }

    #[test]
    fn assignment_matches_bruteforce_permutations() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for n in [2usize, 3, 5, 7] {
            for _ in 0..5 {
                let a: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
                let b: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
                let exact = w1_exact_small(&a, &b).unwrap();
                let brute = brute_force_w1(&a, &b);
                assert!((exact - brute).abs() < 1e-12, "n={n}: {exact} vs {brute}");
            }
        }
    }

    #[test]
    fn metric_properties_on_small_multisets() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.gen_range(2..=16usize);
            let draw = |rng: &mut ChaCha12Rng| -> Vec<Vec<f64>> {
                (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let c = draw(&mut rng);
            let dab = w1_exact_small(&a, &b).unwrap();
            let dba = w1_exact_small(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-12, "symmetry");
            let dac = w1_exact_small(&a, &c).unwrap();
            let dcb = w1_exact_small(&c, &b).unwrap();
            assert!(dab <= dac + dcb + 1e-12, "triangle: {dab} > {dac} + {dcb}");
            assert!(dab > 0.0, "distinct multisets have positive distance");
        }
    }

    #[test]
    fn mismatched_counts_are_an_error() {
        let a = pts(&[0.0, 1.0]);
        let b = pts(&[0.0]);
        assert!(w1_exact_small(&a, &b).is_err());
    }

    #[test]
    fn sliced_equals_exact_in_1d() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
        let b: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
        let exact = w1_exact_small(&a, &b).unwrap();
        let sliced = sliced_w1(&a, &b, 4, &mut rng).unwrap();
        assert!((exact - sliced).abs() < 1e-12, "{exact} vs {sliced}");
    }

    #[test]
    fn sliced_zero_for_identical_sets_r8() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a: Vec<Vec<f64>> = (0..10).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let d = sliced_w1(&a, &a, 16, &mut rng).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn sliced_within_documented_looseness_of_exact() {
        // n=8, d=2, 512 projections: within 25% relative of the assignment.
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let b: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen_range(1.0..3.0), rng.gen_range(-2.0..0.0)]).collect();
        let exact = w1_exact_small(&a, &b).unwrap();
        let sliced = sliced_w1(&a, &b, 512, &mut rng).unwrap();
        assert!((sliced - exact).abs() / exact < 0.25, "sliced {sliced} vs exact {exact}");
    }

    #[test]
    fn function_metric_scales_with_grid_spacing() {
        // Two constant functions at distance |c1 - c2| in L2[0,1] regardless
        // of resolution.
        for grid in [64usize, 256] {
            let a = vec![vec![1.0; grid]];
            let b = vec![vec![3.5; grid]];
            let d = w1_exact_functions(&a, &b, 1.0 / grid as f64).unwrap();
            assert!((d - 2.5).abs() < 1e-12);
        }
    }
}
