mod common;

use dppsd::channel::Constellation;
use dppsd::numerics::{
    counted_residual_metric, gaussian_complex_vector, qrd, seeded_rng, substream_rng, ComplexMatrix,
    ComplexVector, OpCounter,
};
use dppsd::search::{branch_metric, SearchProblem};
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::new(rows, cols, gaussian_complex_vector(rows * cols, 1.0, rng).into_inner()).unwrap()
}

#[test]
fn qr_reconstruction_and_unitarity_corpus() {
    let mut worst_rec: f64 = 0.0;
    let mut worst_unit: f64 = 0.0;
    for &n in &[2usize, 4, 8] {
        for i in 0..1000u64 {
            let mut rng = substream_rng(100 + n as u64, 0, i);
            let h = random_matrix(n, n, &mut rng);
            let f = qrd(&h).unwrap();
            worst_rec = worst_rec.max(f.q1.matmul(&f.r).max_abs_diff(&h));
            let q = f.q();
            worst_unit = worst_unit.max(q.conj_transpose().matmul(&q).max_abs_diff(&ComplexMatrix::identity(n)));
            assert!(f.r.is_upper_triangular(0.0));
            assert!((0..n).all(|k| f.r[(k, k)].im == 0.0 && f.r[(k, k)].re > 0.0));
        }
    }
    assert!(worst_rec < 1e-9, "reconstruction error {worst_rec:e}");
    assert!(worst_unit < 1e-9, "unitarity error {worst_unit:e}");
}

#[test]
fn residual_metric_equals_sum_of_branch_metrics() {
    let c = Constellation::qpsk();
    for i in 0..50u64 {
        let mut rng = substream_rng(5, 1, i);
        let n = 1 + (i as usize % 6);
        let h = random_matrix(n, n, &mut rng);
        let f = qrd(&h).unwrap();
        let z = gaussian_complex_vector(n, 2.0, &mut rng);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let x = c.vector(&idx);

        let mut direct = OpCounter::new();
        let total = counted_residual_metric(&z, &f.r, &x, &mut direct);
        let mut p = SearchProblem::new(&z, &f.r, &c, f64::INFINITY).unwrap();
        let layered: f64 = (0..n).map(|l| branch_metric(&mut p, l, &x)).sum();
        assert!((total - layered).abs() < 1e-9);
        assert_eq!(direct, p.counter, "same arithmetic either way");
    }
}

#[test]
fn counter_totals_are_reproducible() {
    let run = || {
        let mut rng = seeded_rng(77);
        let h = random_matrix(6, 6, &mut rng);
        let f = qrd(&h).unwrap();
        let z = gaussian_complex_vector(6, 1.0, &mut rng);
        let mut counter = OpCounter::new();
        for _ in 0..10 {
            let x = gaussian_complex_vector(6, 1.0, &mut rng);
            counted_residual_metric(&z, &f.r, &x, &mut counter);
        }
        counter
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // ‖y − Hx‖² = ‖z − Rx‖² + ‖Q2ᴴy‖² for tall channels
    #[test]
    fn metric_splits_across_q1_and_q2(seed in any::<u64>(), n_t in 1usize..6, extra in 0usize..4) {
        let n_r = n_t + extra;
        let mut rng = seeded_rng(seed);
        let h = random_matrix(n_r, n_t, &mut rng);
        let y = gaussian_complex_vector(n_r, 3.0, &mut rng);
        let x = gaussian_complex_vector(n_t, 1.0, &mut rng);
        let f = qrd(&h).unwrap();
        let z = f.q1.conj_transpose_mul_vec(&y);
        let outside = if f.q2.cols() > 0 { f.q2.conj_transpose_mul_vec(&y).norm_sqr() } else { 0.0 };
        let hx = h.mul_vec(&x);
        let full: f64 = y.iter().zip(hx.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let reduced = counted_residual_metric(&z, &f.r, &x, &mut OpCounter::new());
        prop_assert!((full - (reduced + outside)).abs() <= 1e-8 * full.max(1.0));
    }

    #[test]
    fn qr_of_tall_matrices(seed in any::<u64>(), n_t in 1usize..7, extra in 0usize..5) {
        let mut rng = seeded_rng(seed);
        let h = random_matrix(n_t + extra, n_t, &mut rng);
        let f = qrd(&h).unwrap();
        prop_assert!(f.q1.matmul(&f.r).max_abs_diff(&h) < 1e-9);
        let q = f.q();
        prop_assert!(q.conj_transpose().matmul(&q).max_abs_diff(&ComplexMatrix::identity(n_t + extra)) < 1e-9);
    }
}

#[test]
fn exact_fit_has_zero_metric() {
    let c = Constellation::qpsk();
    let mut rng = seeded_rng(4);
    let h = random_matrix(4, 4, &mut rng);
    let f = qrd(&h).unwrap();
    let x = c.vector(&[0, 1, 2, 3]);
    let z: ComplexVector = f.r.mul_vec(&x);
    let m = counted_residual_metric(&z, &f.r, &x, &mut OpCounter::new());
    assert!(m < 1e-24);
}
