use jmm_core::jacobian::{quadratic_slope, stencil, total_variation};
use jmm_core::{smoothed_jacobian, FnModel, JacobianConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const N: usize = 4;
const M: usize = 3;

/// `l_i = c_i + b_iᵀθ + θᵀA_iθ` with symmetric `A_i`.
#[derive(Debug, Clone)]
struct Quadratic {
    c: Vec<f64>,
    b: Vec<DVector<f64>>,
    a: Vec<DMatrix<f64>>,
}

impl Quadratic {
    fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (0..M).map(|i| self.c[i] + self.b[i].dot(&t) + t.dot(&(&self.a[i] * &t))).collect()
    }

    fn gradient(&self, theta: &[f64]) -> DMatrix<f64> {
        let t = DVector::from_column_slice(theta);
        let mut g = DMatrix::zeros(M, N);
        for i in 0..M {
            let row = &self.b[i] + (&self.a[i] + self.a[i].transpose()) * &t;
            g.row_mut(i).copy_from(&row.transpose());
        }
        g
    }
}

fn quadratic() -> impl Strategy<Value = Quadratic> {
    let coef = -50.0f64..50.0;
    (
        prop::collection::vec(coef.clone(), M),
        prop::collection::vec(prop::collection::vec(coef.clone(), N), M),
        prop::collection::vec(prop::collection::vec(coef, N * N), M),
    )
        .prop_map(|(c, b, a)| Quadratic {
            c,
            b: b.into_iter().map(DVector::from_vec).collect(),
            a: a.into_iter().map(|v| DMatrix::from_vec(N, N, v)).collect(),
        })
}

fn limits() -> Vec<(f64, f64)> {
    vec![(-0.5, 1.6), (-0.6, 1.2), (-0.7, 0.7), (-0.26, 2.09)]
}

fn posture() -> impl Strategy<Value = Vec<f64>> {
    limits().into_iter().map(|(lo, hi)| lo..=hi).collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadratic_mappings_are_reproduced_exactly(q in quadratic(), theta in posture()) {
        let model = FnModel::new(N, M, |t: &[f64]| q.eval(t));
        let g = smoothed_jacobian(&model, &theta, &limits(), &JacobianConfig::default()).unwrap();
        let exact = q.gradient(&theta);
        let scale = exact.amax().max(1e-12);
        for (a, b) in g.iter().zip(exact.iter()) {
            prop_assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn stencil_stays_inside_limits(center in -0.7f64..0.7, lo in -1.0f64..-0.05, width in 0.1f64..3.0) {
        let hi = lo + width;
        let offsets = JacobianConfig::default().offsets();
        let xs = stencil(center.clamp(lo, hi), (lo, hi), &offsets);
        prop_assert_eq!(xs.len(), 5);
        for w in xs.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        prop_assert!(xs[0] >= lo - 1e-12 && xs[4] <= hi + 1e-12);
    }

    #[test]
    fn slope_of_a_parabola_is_exact(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, at in -1.0f64..1.0) {
        let x = [-0.35, -0.17, 0.0, 0.17, 0.35];
        let y: Vec<f64> = x.iter().map(|x| a * x * x + b * x + c).collect();
        let s = quadratic_slope(&x, &y, at).unwrap();
        prop_assert!((s - (2.0 * a * at + b)).abs() < 1e-9);
    }
}

#[test]
fn cubic_term_is_biased_by_the_stencil_width() {
    // Least squares on {±d2, ±d1, 0} differentiates x³ to 3x² + c with
    // c = (d1⁴ + d2⁴) / (d1² + d2²) at x = 0.
    let cfg = JacobianConfig::default();
    let model = FnModel::new(1, 1, |t: &[f64]| vec![t[0].powi(3)]);
    let g = smoothed_jacobian(&model, &[0.0], &[(-1.0, 1.0)], &cfg).unwrap();
    let (d1, d2) = (cfg.d1, cfg.d2);
    let expected = (d1.powi(4) + d2.powi(4)) / (d1 * d1 + d2 * d2);
    assert!((g[(0, 0)] - expected).abs() < 1e-12, "{} vs {expected}", g[(0, 0)]);
}

#[test]
fn total_variation_of_monotone_and_zigzag() {
    assert_eq!(total_variation(&[0.0, 1.0, 3.0, 6.0]), 6.0);
    assert_eq!(total_variation(&[0.0, 1.0, 0.0, 1.0]), 3.0);
    assert_eq!(total_variation(&[2.0]), 0.0);
}
