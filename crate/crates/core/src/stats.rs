//! Small-sample statistics: percentiles, percentile bootstrap, rank
//! correlations and permutation tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::par;
use crate::seed;

/// Linear-interpolation percentile (numpy's default) of unsorted data.
/// `q` is in percent and clamped to `[0, 100]`. Returns NaN for empty input.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let q = q.clamp(0.0, 100.0);
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    }
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-sided 95% percentile bootstrap interval of the mean of `values`.
///
/// Resample `b` draws its indices from the `bootstrap` substream `(seed, b)`,
/// so the interval does not depend on the number of workers.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = values.len();
    if n == 0 || resamples == 0 {
        let m = if n == 0 { f64::NAN } else { mean(values) };
        return (m, m);
    }
    let mut means = par::map_range(resamples, |b| {
        let mut rng = seed::indexed_substream(seed, seed::BOOTSTRAP, b as u64);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)];
        }
        sum / n as f64
    });
    means.sort_by(f64::total_cmp);
    (
        percentile_sorted(&means, 2.5),
        percentile_sorted(&means, 97.5),
    )
}

/// Average (fractional) ranks, 1-based; ties share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rho with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b; 0 when either side is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tied_x += 1,
                (_, 0) => tied_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n_x = (concordant + discordant + tied_y) as f64;
    let n_y = (concordant + discordant + tied_x) as f64;
    if n_x == 0.0 || n_y == 0.0 {
        return 0.0;
    }
    ((concordant - discordant) as f64 / (n_x * n_y).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided permutation p-value for a correlation statistic: `y` is
/// shuffled `permutations` times against fixed `x`, and
/// `p = (1 + #{|stat_perm| >= |stat_obs|}) / (1 + permutations)`.
pub fn permutation_p_value<F>(x: &[f64], y: &[f64], stat: F, permutations: usize, seed: u64, stream: &str) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
{
    let observed = stat(x, y).abs();
    // ties with the observed value count as extreme
    let tol = 1e-12;
    let hits = par::map_range(permutations, |b| {
        let mut rng = seed::indexed_substream(seed, stream, b as u64);
        let mut shuffled = y.to_vec();
        shuffled.shuffle(&mut rng);
        (stat(x, &shuffled).abs() >= observed - tol) as usize
    });
    (1 + hits.iter().sum::<usize>()) as f64 / (1 + permutations) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Expected values computed with scipy.stats / numpy.percentile.

    #[test]
    fn spearman_and_kendall_match_reference() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [5.0, 6.0, 7.0, 8.0, 7.0];
        assert!((spearman(&x, &y) - 0.8207826816681233).abs() < 1e-12);
        assert!((kendall_tau_b(&x, &y) - 0.7378647873726218).abs() < 1e-12);
    }

    #[test]
    fn tied_inputs_match_reference() {
        let x = [1.2, 3.4, 3.4, 0.5, 9.9, 2.2, 7.1];
        let y = [0.5, 0.6, 0.55, 0.61, 0.9, 0.5, 0.7];
        assert!((spearman(&x, &y) - 0.6181818181818182).abs() < 1e-12);
        assert!((kendall_tau_b(&x, &y) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn constant_side_gives_zero() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.7; 4];
        assert_eq!(spearman(&x, &y), 0.0);
        assert_eq!(kendall_tau_b(&x, &y), 0.0);
        let p = permutation_p_value(&x, &y, spearman, 200, 1, "t");
        assert_eq!(p, 1.0);
    }

    #[test]
    fn percentiles_match_numpy() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        assert_eq!(percentile(&v, 2.5), 1.0);
        assert_eq!(percentile(&v, 50.0), 3.5);
        assert!((percentile(&v, 97.5) - 8.475).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 9.0);
        assert!(percentile(&[], 50.0).is_nan());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn perfect_monotone_relation_is_significant() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert_eq!(spearman(&x, &y), 1.0);
        let p = permutation_p_value(&x, &y, spearman, 10_000, 3, "t");
        // exact two-sided p is 2/8! ~ 5e-5
        assert!(p < 1e-3, "{p}");
    }

    #[test]
    fn bootstrap_is_deterministic_and_degenerate_for_constants() {
        let ones = vec![1.0; 50];
        assert_eq!(bootstrap_mean_ci(&ones, 200, 9), (1.0, 1.0));
        let v: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let a = bootstrap_mean_ci(&v, 500, 4);
        assert_eq!(a, bootstrap_mean_ci(&v, 500, 4));
        assert!(a.0 < 0.5 && a.1 > 0.5);
        assert!(a.1 - a.0 < 0.25);
    }
}
