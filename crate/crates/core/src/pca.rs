//! Two-component PCA over plan embeddings, for scatter exports.
//!
//! Power iteration against an implicit covariance operator: the matrix is
//! never materialized, every multiply streams over the centered points, so
//! memory stays linear in the input. The second component comes from
//! deflating the first out of each product.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative eigenvalue change below which an iteration counts as converged.
const CONVERGENCE: f64 = 1e-10;
/// Iteration cap per component.
const MAX_ITERATIONS: usize = 1000;
/// An eigenvalue this far below the leading one (or below the total
/// variance, for the first component) is treated as numerically zero.
const RANK_CUTOFF: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum PcaError {
    /// A plane needs at least three points.
    TooFewPoints { count: usize },
    /// All points (and any projected probe) must share one dimension.
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for PcaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaError::TooFewPoints { count } => {
                write!(f, "pca needs at least 3 points, got {count}")
            }
            PcaError::DimensionMismatch { expected, got } => {
                write!(f, "expected dimension {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for PcaError {}

/// The fitted projection plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit principal directions; a numerically rank-deficient input zeroes
    /// the missing ones.
    pub components: [Vec<f64>; 2],
    /// Variance captured along each component, descending.
    pub eigenvalues: [f64; 2],
    /// True when the centered data had rank below 2, so pc2 (and for rank
    /// zero also pc1) was zeroed rather than fabricated from noise.
    pub degenerate: bool,
}

impl Pca2 {
    /// Coordinates of one point on the fitted plane.
    pub fn project(&self, point: &[f64]) -> Result<(f64, f64), PcaError> {
        if point.len() != self.mean.len() {
            return Err(PcaError::DimensionMismatch {
                expected: self.mean.len(),
                got: point.len(),
            });
        }
        let mut coords = [0.0f64; 2];
        for (c, component) in coords.iter_mut().zip(&self.components) {
            *c = point
                .iter()
                .zip(&self.mean)
                .zip(component)
                .map(|((x, m), w)| (x - m) * w)
                .sum();
        }
        Ok((coords[0], coords[1]))
    }
}

/// Applies the sample covariance of the centered points to `v`.
fn covariance_mul(points: &[&[f64]], mean: &[f64], v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let denominator = (points.len() - 1) as f64;
    for point in points {
        let dot: f64 = point
            .iter()
            .zip(mean)
            .zip(v)
            .map(|((x, m), w)| (x - m) * w)
            .sum();
        let weight = dot / denominator;
        for (o, (x, m)) in out.iter_mut().zip(point.iter().zip(mean)) {
            *o += weight * (x - m);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Flips `v` so its first nonzero coordinate is positive.
fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x != 0.0 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// One power-iteration run. `deflate` holds already-found components that
/// get projected out of every product, which steers the iteration to the
/// next eigenvector down.
fn power_iterate(
    points: &[&[f64]],
    mean: &[f64],
    deflate: &[&[f64]],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let dimension = mean.len();
    let mut v: Vec<f64> = (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for d in deflate {
        let dot: f64 = v.iter().zip(*d).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(*d) {
            *x -= dot * y;
        }
    }
    if normalize(&mut v) == 0.0 {
        return (vec![0.0; dimension], 0.0);
    }

    let mut product = vec![0.0f64; dimension];
    let mut eigenvalue = 0.0f64;
    for _ in 0..MAX_ITERATIONS {
        covariance_mul(points, mean, &v, &mut product);
        for d in deflate {
            let dot: f64 = product.iter().zip(*d).map(|(a, b)| a * b).sum();
            for (x, y) in product.iter_mut().zip(*d) {
                *x -= dot * y;
            }
        }
        let next = normalize(&mut product);
        if next == 0.0 {
            return (vec![0.0; dimension], 0.0);
        }
        v.copy_from_slice(&product);
        if (next - eigenvalue).abs() < CONVERGENCE * next {
            eigenvalue = next;
            break;
        }
        eigenvalue = next;
    }
    (v, eigenvalue)
}

/// Fits the top two principal components of `points` by power iteration.
///
/// Deterministic: the starting vectors come from a fixed internal seed, and
/// each component's sign follows the first-nonzero-positive convention.
pub fn pca2(points: &[&[f64]]) -> Result<Pca2, PcaError> {
    if points.len() < 3 {
        return Err(PcaError::TooFewPoints {
            count: points.len(),
        });
    }
    let dimension = points[0].len();
    for p in points {
        if p.len() != dimension {
            return Err(PcaError::DimensionMismatch {
                expected: dimension,
                got: p.len(),
            });
        }
    }

    let mut mean = vec![0.0f64; dimension];
    for p in points {
        for (m, x) in mean.iter_mut().zip(*p) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= points.len() as f64;
    }

    let total_variance: f64 = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        / (points.len() - 1) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(0x9c0f);
    let (mut first, lambda1) = power_iterate(points, &mean, &[], &mut rng);
    if total_variance == 0.0 || lambda1 <= total_variance * RANK_CUTOFF {
        // Every point sits at the mean: there is no plane to find.
        return Ok(Pca2 {
            mean,
            components: [vec![0.0; dimension], vec![0.0; dimension]],
            eigenvalues: [0.0, 0.0],
            degenerate: true,
        });
    }
    fix_sign(&mut first);

    let (mut second, lambda2) = power_iterate(points, &mean, &[&first], &mut rng);
    let degenerate = lambda2 <= lambda1 * RANK_CUTOFF;
    if degenerate {
        second = vec![0.0; dimension];
    } else {
        fix_sign(&mut second);
    }

    Ok(Pca2 {
        mean,
        components: [first, second],
        eigenvalues: [lambda1, if degenerate { 0.0 } else { lambda2 }],
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(points: &[Vec<f64>]) -> Pca2 {
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        pca2(&refs).unwrap()
    }

    #[test]
    fn too_few_points_is_rejected() {
        let points = [vec![0.0, 1.0], vec![2.0, 3.0]];
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        assert_eq!(pca2(&refs), Err(PcaError::TooFewPoints { count: 2 }));
    }

    #[test]
    fn ragged_points_are_rejected() {
        let points: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![2.0], vec![3.0, 4.0]];
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        assert_eq!(
            pca2(&refs),
            Err(PcaError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn axis_aligned_spread_recovers_the_axes() {
        // Every x pairs with both y values, so the cross-covariance is
        // exactly zero and the true components are the coordinate axes.
        let mut points = Vec::new();
        for &x in &[-9.0, -3.0, 3.0, 9.0] {
            for &y in &[-1.0, 1.0] {
                points.push(vec![x, y]);
            }
        }
        let fitted = fit(&points);
        assert!(!fitted.degenerate);
        assert!(fitted.components[0][0] > 0.999);
        assert!(fitted.components[0][1].abs() < 1e-3);
        assert!(fitted.components[1][1] > 0.999);
        assert!(fitted.eigenvalues[0] >= fitted.eigenvalues[1]);
        assert!(fitted.eigenvalues[1] > 0.0);
    }

    #[test]
    fn projection_recovers_centered_coordinates() {
        let points = vec![
            vec![4.0, 0.5],
            vec![4.0, -0.5],
            vec![-4.0, 0.5],
            vec![-4.0, -0.5],
        ];
        let fitted = fit(&points);
        for p in &points {
            let (pc1, pc2) = fitted.project(p).unwrap();
            assert!((pc1 - p[0]).abs() < 1e-3);
            assert!((pc2 - p[1]).abs() < 1e-3);
        }
    }

    #[test]
    fn tilted_cloud_finds_its_long_axis() {
        // Points hug the direction (3, 4)/5 with a faint orthogonal wobble.
        let axis = [0.6, 0.8];
        let ortho = [-0.8, 0.6];
        let mut points = Vec::new();
        for i in 0..12 {
            let t = i as f64 - 5.5;
            let w = 0.05 * if i % 3 == 0 { 1.0 } else { -0.5 };
            points.push(vec![
                t * axis[0] + w * ortho[0],
                t * axis[1] + w * ortho[1],
            ]);
        }
        let fitted = fit(&points);
        let dot = fitted.components[0][0] * axis[0] + fitted.components[0][1] * axis[1];
        assert!(dot.abs() > 0.9999);
    }

    #[test]
    fn collinear_points_zero_the_second_component() {
        let points: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let t = i as f64;
                vec![1.0 + 2.0 * t, -3.0 * t, 0.5 * t]
            })
            .collect();
        let fitted = fit(&points);
        assert!(fitted.degenerate);
        assert_eq!(fitted.components[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(fitted.eigenvalues[1], 0.0);
        assert!(fitted.eigenvalues[0] > 0.0);
        let (_, pc2) = fitted.project(&points[3]).unwrap();
        assert_eq!(pc2, 0.0);
    }

    #[test]
    fn identical_points_zero_everything() {
        let points = vec![vec![2.0, 5.0]; 4];
        let fitted = fit(&points);
        assert!(fitted.degenerate);
        assert_eq!(fitted.eigenvalues, [0.0, 0.0]);
        assert_eq!(fitted.project(&[2.0, 5.0]).unwrap(), (0.0, 0.0));
        assert_eq!(fitted.project(&[9.0, 9.0]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn components_are_orthonormal() {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![
                    libm::sin(t) * 3.0,
                    libm::cos(t * 0.7) * 2.0,
                    libm::sin(t * 1.3),
                    t * 0.1,
                ]
            })
            .collect();
        let fitted = fit(&points);
        let c1 = &fitted.components[0];
        let c2 = &fitted.components[1];
        let n1: f64 = c1.iter().map(|x| x * x).sum();
        let n2: f64 = c2.iter().map(|x| x * x).sum();
        let cross: f64 = c1.iter().zip(c2).map(|(a, b)| a * b).sum();
        assert!((n1 - 1.0).abs() < 1e-9);
        assert!((n2 - 1.0).abs() < 1e-9);
        assert!(cross.abs() < 1e-6);
        assert!(fitted.eigenvalues[0] >= fitted.eigenvalues[1]);
    }

    #[test]
    fn fitting_is_deterministic() {
        let points: Vec<Vec<f64>> = (0..9)
            .map(|i| vec![(i * i) as f64 * 0.3, (i as f64) - 4.0, libm::exp(i as f64 * 0.1)])
            .collect();
        assert_eq!(fit(&points), fit(&points));
    }

    #[test]
    fn projection_checks_the_dimension() {
        let points = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
        let fitted = fit(&points);
        assert_eq!(
            fitted.project(&[1.0, 2.0, 3.0]),
            Err(PcaError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn sign_convention_points_first_nonzero_up() {
        let points = vec![
            vec![-5.0, 0.0],
            vec![5.0, 0.0],
            vec![-3.0, 0.1],
            vec![3.0, -0.1],
        ];
        let fitted = fit(&points);
        assert!(fitted.components[0][0] > 0.0);
        let first_nonzero = fitted.components[1].iter().find(|x| **x != 0.0).unwrap();
        assert!(*first_nonzero > 0.0);
    }
}
