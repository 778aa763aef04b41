//! Numerical checks of the message-difference algebra behind the prior,
//! and the PCA retained-variance diagnostic for a dissimilarity matrix.
//!
//! Throughout, `Δ(r1, r2)` is the squared Euclidean norm of the change in a
//! message when an edge's relation is switched from `r1` to `r2`. With a
//! shared kernel and concatenated heads, `Δ = ‖α_{r1} − α_{r2}‖² ‖W h‖²`, so
//! ratios of `Δ` are ratios of squared attention distances.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::IsostericityMatrix;
use crate::layers::AttentionTable;
use crate::tensor::Tensor;

pub const CONCAT_TOLERANCE: f64 = 1e-10;
pub const DELTA_RATIO_TOLERANCE: f64 = 1e-10;
/// Relative gap above which the summed-head and ℓ2 forms count as different.
pub const COUNTEREXAMPLE_MARGIN: f64 = 0.01;
/// Floating-point slack allowed on the right-hand side of the norm bound.
pub const BOUND_SLACK: f64 = 1e-12;

fn matvec(w: &Tensor, h: &[f64]) -> Result<Vec<f64>> {
    if w.rank() != 2 || w.cols() != h.len() {
        return Err(Error::shape("matvec", w.shape(), &[h.len()]));
    }
    Ok((0..w.rows())
        .map(|i| w.row(i).iter().zip(h).map(|(a, b)| a * b).sum())
        .collect())
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn diff_norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Concatenated multi-head message `⊕_k α[k] · W h`.
fn multi_head_message(alpha: &[f64], w: &Tensor, h: &[f64]) -> Result<Vec<f64>> {
    let wh = matvec(w, h)?;
    Ok(alpha
        .iter()
        .flat_map(|a| wh.iter().map(move |x| a * x))
        .collect())
}

/// `Δ = ‖⊕_k α1[k] W1 h − ⊕_k α2[k] W2 h‖²`. A single head gives the scalar
/// attention case.
pub fn message_delta(
    alpha1: &[f64],
    alpha2: &[f64],
    w1: &Tensor,
    w2: &Tensor,
    h: &[f64],
) -> Result<f64> {
    if alpha1.len() != alpha2.len() || alpha1.is_empty() {
        return Err(Error::shape(
            "message_delta",
            &[alpha1.len()],
            &[alpha2.len()],
        ));
    }
    if w1.shape() != w2.shape() {
        return Err(Error::shape("message_delta", w1.shape(), w2.shape()));
    }
    let m1 = multi_head_message(alpha1, w1, h)?;
    let m2 = multi_head_message(alpha2, w2, h)?;
    Ok(diff_norm_sq(&m1, &m2))
}

/// Both sides of `Δ_concat = ‖α1 − α2‖² ‖W h‖²` for a shared kernel.
pub fn concat_factorization(
    alpha1: &[f64],
    alpha2: &[f64],
    w: &Tensor,
    h: &[f64],
) -> Result<(f64, f64)> {
    let lhs = message_delta(alpha1, alpha2, w, w, h)?;
    let rhs = diff_norm_sq(alpha1, alpha2) * norm_sq(&matvec(w, h)?);
    Ok((lhs, rhs))
}

/// Summed-head message distance `|Σ_k (α1[k] − α2[k])| ‖W h‖` next to the
/// ℓ2 form `‖α1 − α2‖ ‖W h‖`.
pub fn summed_heads_distance(
    alpha1: &[f64],
    alpha2: &[f64],
    w: &Tensor,
    h: &[f64],
) -> Result<(f64, f64)> {
    if alpha1.len() != alpha2.len() {
        return Err(Error::shape(
            "summed_heads_distance",
            &[alpha1.len()],
            &[alpha2.len()],
        ));
    }
    let wh = norm_sq(&matvec(w, h)?).sqrt();
    let summed: f64 = alpha1.iter().zip(alpha2).map(|(a, b)| a - b).sum();
    Ok((summed.abs() * wh, diff_norm_sq(alpha1, alpha2).sqrt() * wh))
}

/// `(Δ, ‖α1 W1 − α2 W2‖_F² ‖h‖²)` for scalar attention. The Frobenius norm
/// dominates the operator norm, so `Δ` never exceeds the second value.
pub fn operator_bound(
    alpha1: f64,
    alpha2: f64,
    w1: &Tensor,
    w2: &Tensor,
    h: &[f64],
) -> Result<(f64, f64)> {
    let delta = message_delta(&[alpha1], &[alpha2], w1, w2, h)?;
    let combined = w1.scale(alpha1).sub(&w2.scale(alpha2))?;
    Ok((delta, combined.l2_norm_sq() * norm_sq(h)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaRatio {
    /// `Δ(r1, r2) / Δ(r1, r3)`.
    pub delta_ratio: f64,
    /// `‖α_{r1} − α_{r2}‖² / ‖α_{r1} − α_{r3}‖²`; equals `delta_ratio`.
    pub squared_alpha_ratio: f64,
    /// `‖α_{r1} − α_{r2}‖ / ‖α_{r1} − α_{r3}‖`, the square root of the above.
    pub alpha_ratio: f64,
}

/// Compares how much a message changes under two different relation swaps,
/// with a shared kernel and concatenated heads.
pub fn delta_ratio(
    alpha: &AttentionTable,
    w: &Tensor,
    h: &[f64],
    r1: usize,
    r2: usize,
    r3: usize,
) -> Result<DeltaRatio> {
    let n = alpha.num_relations();
    if r1 >= n || r2 >= n || r3 >= n {
        return Err(Error::Argument(format!(
            "relation out of range for {n} relations"
        )));
    }
    let d12 = message_delta(alpha.row(r1), alpha.row(r2), w, w, h)?;
    let d13 = message_delta(alpha.row(r1), alpha.row(r3), w, w, h)?;
    let a12 = diff_norm_sq(alpha.row(r1), alpha.row(r2));
    let a13 = diff_norm_sq(alpha.row(r1), alpha.row(r3));
    if d13 == 0.0 || a13 == 0.0 {
        return Err(Error::Degenerate(format!(
            "message difference between relations {r1} and {r3} is zero"
        )));
    }
    Ok(DeltaRatio {
        delta_ratio: d12 / d13,
        squared_alpha_ratio: a12 / a13,
        alpha_ratio: (a12 / a13).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Passes when the largest relative discrepancy is within tolerance.
    Identity,
    /// Passes when no instance violates the inequality.
    Inequality,
    /// Passes when enough instances break the (false) identity.
    Counterexample,
}

/// Outcome of one randomized check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub kind: CheckKind,
    pub instances: usize,
    pub max_abs_discrepancy: f64,
    pub max_rel_discrepancy: f64,
    pub tolerance: f64,
    /// Violations for an inequality; counterexamples found for a
    /// counterexample search; instances over tolerance for an identity.
    pub flagged: usize,
    /// Counterexamples needed to pass (counterexample checks only).
    pub required: usize,
    pub passed: bool,
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match self.kind {
            CheckKind::Identity => write!(
                f,
                "{status} {}: {} instances, max abs {:.3e}, max rel {:.3e} (tol {:.0e})",
                self.name,
                self.instances,
                self.max_abs_discrepancy,
                self.max_rel_discrepancy,
                self.tolerance
            ),
            CheckKind::Inequality => write!(
                f,
                "{status} {}: {} instances, {} violations, worst margin {:.3e}",
                self.name, self.instances, self.flagged, self.max_rel_discrepancy
            ),
            CheckKind::Counterexample => write!(
                f,
                "{status} {}: {}/{} instances differ by more than {:.0}% (need {})",
                self.name,
                self.flagged,
                self.instances,
                self.tolerance * 100.0,
                self.required
            ),
        }
    }
}

struct Accumulator {
    max_abs: f64,
    max_rel: f64,
    flagged: usize,
    instances: usize,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            max_abs: 0.0,
            max_rel: 0.0,
            flagged: 0,
            instances: 0,
        }
    }

    fn identity(&mut self, lhs: f64, rhs: f64, tol: f64) {
        let abs = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale == 0.0 { 0.0 } else { abs / scale };
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
        self.flagged += usize::from(rel > tol);
        self.instances += 1;
    }
}

fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_parts(vec![rows, cols], normal_vec(rng, rows * cols))
}

/// Randomized check of the concatenated-head factorization with up to 8
/// heads and 16-dimensional messages and inputs.
pub fn check_concat_factorization(instances: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new();
    for _ in 0..instances {
        let heads = rng.random_range(1..=8);
        let d_msg = rng.random_range(1..=16);
        let d_in = rng.random_range(1..=16);
        let a1 = normal_vec(&mut rng, heads);
        let a2 = normal_vec(&mut rng, heads);
        let w = normal_matrix(&mut rng, d_msg, d_in);
        let h = normal_vec(&mut rng, d_in);
        let (lhs, rhs) = concat_factorization(&a1, &a2, &w, &h).expect("shapes are consistent");
        acc.identity(lhs, rhs, CONCAT_TOLERANCE);
    }
    IdentityReport {
        name: "concat-factorization".into(),
        kind: CheckKind::Identity,
        instances: acc.instances,
        max_abs_discrepancy: acc.max_abs,
        max_rel_discrepancy: acc.max_rel,
        tolerance: CONCAT_TOLERANCE,
        flagged: acc.flagged,
        required: 0,
        passed: acc.max_rel <= CONCAT_TOLERANCE,
    }
}

/// Searches random instances for cases where summing heads breaks the ℓ2
/// factorization. Passes when at least `required` counterexamples are
/// found.
pub fn check_sum_counterexample(
    instances: usize,
    heads: usize,
    required: usize,
    seed: u64,
) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for _ in 0..instances {
        let d_msg = rng.random_range(1..=16);
        let d_in = rng.random_range(1..=16);
        let a1 = normal_vec(&mut rng, heads);
        let a2 = normal_vec(&mut rng, heads);
        let w = normal_matrix(&mut rng, d_msg, d_in);
        let h = normal_vec(&mut rng, d_in);
        let (summed, l2) = summed_heads_distance(&a1, &a2, &w, &h).expect("shapes are consistent");
        let abs = (summed - l2).abs();
        let rel = if l2 == 0.0 { 0.0 } else { abs / l2 };
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
        found += usize::from(rel > COUNTEREXAMPLE_MARGIN);
    }
    IdentityReport {
        name: format!("sum-aggregation-counterexample-k{heads}"),
        kind: CheckKind::Counterexample,
        instances,
        max_abs_discrepancy: max_abs,
        max_rel_discrepancy: max_rel,
        tolerance: COUNTEREXAMPLE_MARGIN,
        flagged: found,
        required,
        passed: found >= required,
    }
}

/// Randomized check that the message change never exceeds the kernel
/// difference norm times the input norm.
pub fn check_operator_bound(instances: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_abs = f64::NEG_INFINITY;
    let mut worst_rel = f64::NEG_INFINITY;
    for _ in 0..instances {
        let d_out = rng.random_range(1..=16);
        let d_in = rng.random_range(1..=16);
        let a1: f64 = rng.sample(StandardNormal);
        let a2: f64 = rng.sample(StandardNormal);
        let w1 = normal_matrix(&mut rng, d_out, d_in);
        let w2 = normal_matrix(&mut rng, d_out, d_in);
        let h = normal_vec(&mut rng, d_in);
        let (lhs, rhs) = operator_bound(a1, a2, &w1, &w2, &h).expect("shapes are consistent");
        let margin = lhs - rhs;
        worst_abs = worst_abs.max(margin);
        worst_rel = worst_rel.max(if rhs > 0.0 { margin / rhs } else { margin });
        violations += usize::from(lhs > rhs * (1.0 + BOUND_SLACK));
    }
    IdentityReport {
        name: "operator-norm-bound".into(),
        kind: CheckKind::Inequality,
        instances,
        max_abs_discrepancy: if instances == 0 { 0.0 } else { worst_abs },
        max_rel_discrepancy: if instances == 0 { 0.0 } else { worst_rel },
        tolerance: BOUND_SLACK,
        flagged: violations,
        required: 0,
        passed: violations == 0,
    }
}

/// Randomized check that `Δ(r1,r2)/Δ(r1,r3)` equals the ratio of squared
/// attention distances.
pub fn check_delta_ratio(instances: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::new();
    while acc.instances < instances {
        let relations = rng.random_range(3..=8);
        let heads = rng.random_range(1..=8);
        let d_msg = rng.random_range(1..=16);
        let d_in = rng.random_range(1..=16);
        let table = AttentionTable::new(normal_matrix(&mut rng, relations, heads)).expect("finite");
        let w = normal_matrix(&mut rng, d_msg, d_in);
        let h = normal_vec(&mut rng, d_in);
        let r1 = rng.random_range(0..relations);
        let r2 = (r1 + rng.random_range(1..relations)) % relations;
        let r3 = (r1 + rng.random_range(1..relations)) % relations;
        match delta_ratio(&table, &w, &h, r1, r2, r3) {
            Ok(r) => acc.identity(r.delta_ratio, r.squared_alpha_ratio, DELTA_RATIO_TOLERANCE),
            Err(_) => continue,
        }
    }
    IdentityReport {
        name: "delta-ratio-squared".into(),
        kind: CheckKind::Identity,
        instances: acc.instances,
        max_abs_discrepancy: acc.max_abs,
        max_rel_discrepancy: acc.max_rel,
        tolerance: DELTA_RATIO_TOLERANCE,
        flagged: acc.flagged,
        required: 0,
        passed: acc.max_rel <= DELTA_RATIO_TOLERANCE,
    }
}

/// Instances, head count and pass threshold of the summation search in the
/// standard suite.
pub const SUM_COUNTEREXAMPLE_INSTANCES: usize = 100;
pub const SUM_COUNTEREXAMPLE_HEADS: usize = 4;
pub const SUM_COUNTEREXAMPLE_REQUIRED: usize = 95;

/// The full identity suite: factorization, bound, summation counterexample
/// and ratio law. Each check draws from its own seed stream.
pub fn identity_suite(instances: usize, seed: u64) -> Vec<IdentityReport> {
    vec![
        check_concat_factorization(instances, seed),
        check_operator_bound(instances, seed.wrapping_add(1)),
        check_sum_counterexample(
            SUM_COUNTEREXAMPLE_INSTANCES,
            SUM_COUNTEREXAMPLE_HEADS,
            SUM_COUNTEREXAMPLE_REQUIRED,
            seed.wrapping_add(2),
        ),
        check_delta_ratio(instances, seed.wrapping_add(3)),
    ]
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
/// descending order.
pub fn symmetric_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    if m.rank() != 2 || m.rows() != m.cols() {
        return Err(Error::shape("symmetric_eigenvalues", m.shape(), &[]));
    }
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= f64::EPSILON * f64::EPSILON * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
                let (upper, lower) = a.split_at_mut(q);
                for (xp, xq) in upper[p].iter_mut().zip(lower[0].iter_mut()) {
                    let (vp, vq) = (*xp, *xq);
                    *xp = c * vp - s * vq;
                    *xq = s * vp + c * vq;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Fraction of total variance along each of the top `k` principal axes of
/// the rows of `points`, descending.
pub fn explained_variance_ratios(points: &Tensor, k: usize) -> Result<Vec<f64>> {
    if points.rank() != 2 || points.rows() < 2 {
        return Err(Error::Argument(format!(
            "PCA needs at least two points, got shape {:?}",
            points.shape()
        )));
    }
    let (n, d) = (points.rows(), points.cols());
    if k == 0 || k > d {
        return Err(Error::Argument(format!(
            "component count {k} outside 1..={d}"
        )));
    }
    let means: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| points.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let mut cov = Tensor::zeros(&[d, d]);
    for i in 0..n {
        let centered: Vec<f64> = points
            .row(i)
            .iter()
            .zip(&means)
            .map(|(x, m)| x - m)
            .collect();
        let data = cov.data_mut();
        for a in 0..d {
            for b in 0..d {
                data[a * d + b] += centered[a] * centered[b];
            }
        }
    }
    let cov = cov.scale(1.0 / (n - 1) as f64);
    let total: f64 = (0..d).map(|j| cov.get(j, j)).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("points have zero total variance".into()));
    }
    Ok(symmetric_eigenvalues(&cov)?
        .into_iter()
        .take(k)
        .map(|l| l.max(0.0) / total)
        .collect())
}

/// Retained variance of the top `k` components when each relation's row of
/// dissimilarities is treated as a point.
pub fn pca_explained_variance(iso: &IsostericityMatrix, k: usize) -> Result<Vec<f64>> {
    if iso.num_relations() < 2 {
        return Err(Error::Argument("PCA needs at least two relations".into()));
    }
    explained_variance_ratios(iso.values(), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        let w = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let h = [0.7, -0.3];
        assert_eq!(
            message_delta(&[0.4, 1.1], &[0.4, 1.1], &w, &w, &h).unwrap(),
            0.0
        );

        let wh_sq = norm_sq(&matvec(&w, &h).unwrap());
        let d = message_delta(&[1.5], &[-0.5], &w, &w, &h).unwrap();
        assert!((d - 4.0 * wh_sq).abs() < 1e-12 * d);

        let w2 = Tensor::from_rows(&[vec![0.2, 0.1], vec![-1.0, 2.0]]).unwrap();
        // Direct evaluation: messages 1.5 * W h and 0.5 * W2 h.
        let m1: Vec<f64> = matvec(&w, &h).unwrap().iter().map(|x| 1.5 * x).collect();
        let m2: Vec<f64> = matvec(&w2, &h).unwrap().iter().map(|x| 0.5 * x).collect();
        let direct: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(
            (message_delta(&[1.5], &[0.5], &w, &w2, &h).unwrap() - direct).abs() < 1e-12 * direct
        );

        assert!(matches!(
            message_delta(&[1.0], &[1.0, 2.0], &w, &w, &h),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            message_delta(&[1.0], &[1.0], &w, &w, &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn concat_examples() {
        let w = Tensor::from_rows(&[vec![2.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let h = [1.0, 1.0];
        let (l, r) = concat_factorization(&[0.3, 0.9], &[0.3, 0.9], &w, &h).unwrap();
        assert_eq!((l, r), (0.0, 0.0));

        let c = norm_sq(&matvec(&w, &h).unwrap());
        let (l, r) = concat_factorization(&[1.0, 0.0], &[0.0, 1.0], &w, &h).unwrap();
        assert_eq!(l, 2.0 * c);
        assert_eq!(r, 2.0 * c);
    }

    #[test]
    fn concat_suite_passes() {
        let report = check_concat_factorization(1000, 1);
        assert!(report.passed, "{report}");
        assert!(report.max_rel_discrepancy < 1e-10);
        assert_eq!(report.instances, 1000);
    }

    #[test]
    fn summation_examples() {
        let w = Tensor::identity(2);
        let h = [3.0, 4.0];
        let (s, l) = summed_heads_distance(&[1.0, -1.0], &[0.0, 0.0], &w, &h).unwrap();
        assert_eq!(s, 0.0);
        assert!((l - 2f64.sqrt() * 5.0).abs() < 1e-12);

        let k1 = check_sum_counterexample(200, 1, 0, 3);
        assert_eq!(k1.flagged, 0, "{k1}");
        assert!(k1.max_rel_discrepancy < 1e-12);

        let k4 = check_sum_counterexample(100, 4, 95, 4);
        assert!(k4.passed, "{k4}");
        for (heads, seed) in [(2, 5), (3, 6), (8, 7)] {
            let r = check_sum_counterexample(100, heads, 1, seed);
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn bound_examples() {
        let w = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            operator_bound(0.7, -0.2, &w, &w.scale(2.0), &[0.0, 0.0]).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            operator_bound(0.7, 0.7, &w, &w, &[1.0, -1.0]).unwrap(),
            (0.0, 0.0)
        );
        let r = check_operator_bound(1000, 8);
        assert!(r.passed && r.flagged == 0, "{r}");
        assert!(r.max_rel_discrepancy <= BOUND_SLACK, "{r}");
    }

    #[test]
    fn ratio_examples() {
        let w = Tensor::from_rows(&[vec![1.0, 0.5], vec![-0.5, 2.0]]).unwrap();
        let h = [0.3, 0.8];
        let same =
            AttentionTable::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let r = delta_ratio(&same, &w, &h, 0, 1, 2).unwrap();
        assert_eq!(r.delta_ratio, 1.0);

        // ‖α0 − α1‖ = 2, ‖α0 − α2‖ = 1.
        let t =
            AttentionTable::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = delta_ratio(&t, &w, &h, 0, 1, 2).unwrap();
        assert!((r.delta_ratio - 4.0).abs() < 1e-12);
        assert_eq!(r.squared_alpha_ratio, 4.0);
        assert_eq!(r.alpha_ratio, 2.0);

        assert!(matches!(
            delta_ratio(&t, &w, &h, 0, 1, 0),
            Err(Error::Degenerate(_))
        ));
        let report = check_delta_ratio(1000, 9);
        assert!(report.passed, "{report}");
    }

    #[test]
    fn suite_is_deterministic() {
        assert_eq!(identity_suite(50, 3), identity_suite(50, 3));
        assert!(identity_suite(50, 3).iter().all(|r| r.passed));
    }

    #[test]
    fn jacobi_diagonal_and_two_by_two() {
        let d = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        assert_eq!(symmetric_eigenvalues(&d).unwrap(), vec![3.0, 2.0, 1.0]);
        let m = Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigenvalues(&m).unwrap();
        assert!((e[0] - 3.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_points_have_one_component() {
        let base = [1.0, -2.0, 0.5];
        let rows: Vec<Vec<f64>> = [0.0, 1.0, 2.5, -1.0]
            .iter()
            .map(|t| base.iter().map(|b| b * t).collect())
            .collect();
        let r = explained_variance_ratios(&Tensor::from_rows(&rows).unwrap(), 3).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
    }

    #[test]
    fn square_in_four_dimensions_splits_evenly() {
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0],
        ];
        let r = explained_variance_ratios(&Tensor::from_rows(&rows).unwrap(), 4).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-12);
        assert!(r[2].abs() < 1e-12);
    }

    #[test]
    fn pca_argument_errors() {
        let one = IsostericityMatrix::new(Tensor::zeros(&[1, 1])).unwrap();
        assert!(matches!(
            pca_explained_variance(&one, 1),
            Err(Error::Argument(_))
        ));
        let two =
            IsostericityMatrix::new(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
                .unwrap();
        assert!(matches!(
            pca_explained_variance(&two, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            pca_explained_variance(&two, 3),
            Err(Error::Argument(_))
        ));
        let zeros = IsostericityMatrix::new(Tensor::zeros(&[3, 3])).unwrap();
        assert!(matches!(
            pca_explained_variance(&zeros, 2),
            Err(Error::Degenerate(_))
        ));
        let r = pca_explained_variance(&two, 2).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_render_and_serialize() {
        let r = check_operator_bound(10, 1);
        assert!(r.to_string().starts_with("PASS operator-norm-bound"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"kind\":\"inequality\""), "{json}");
    }
}
