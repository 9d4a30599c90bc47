use num_complex::Complex64;
use proptest::prelude::*;

use harmrej_core::lti::{is_hurwitz, poly_mul, routh_hurwitz, tf_to_statespace, Polynomial, TransferFunction};

fn coeffs(max_deg: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, 1..=max_deg + 1)
}

fn close(a: &Polynomial, b: &Polynomial) -> bool {
    let n = a.coeffs().len().max(b.coeffs().len());
    let scale = a.coeffs().iter().chain(b.coeffs()).fold(1.0_f64, |m, c| m.max(c.abs()));
    (0..n).all(|i| {
        let x = a.coeffs().get(i).copied().unwrap_or(0.0);
        let y = b.coeffs().get(i).copied().unwrap_or(0.0);
        (x - y).abs() <= 1e-12 * scale
    })
}

proptest! {
    #[test]
    fn multiplication_commutes(p in coeffs(5), q in coeffs(5)) {
        let (p, q) = (Polynomial::new(p), Polynomial::new(q));
        prop_assert!(close(&poly_mul(&p, &q), &poly_mul(&q, &p)));
    }

    #[test]
    fn multiplication_associates(p in coeffs(4), q in coeffs(4), r in coeffs(4)) {
        let (p, q, r) = (Polynomial::new(p), Polynomial::new(q), Polynomial::new(r));
        prop_assert!(close(&poly_mul(&poly_mul(&p, &q), &r), &poly_mul(&p, &poly_mul(&q, &r))));
    }

    #[test]
    fn realization_matches_transfer_function(num in coeffs(3), den_roots in proptest::collection::vec(0.2f64..5.0, 4),
                                             omega in 0.01f64..100.0) {
        let den = den_roots.iter().fold(Polynomial::one(), |acc, r| poly_mul(&acc, &Polynomial::new(vec![*r, 1.0])));
        let tf = TransferFunction::new(Polynomial::new(num), den).unwrap();
        let ss = tf_to_statespace(&tf).unwrap();
        let s = Complex64::new(0.0, omega);
        let (a, b) = (tf.eval(s), ss.eval(s));
        prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()), "{} vs {}", a, b);
    }

    #[test]
    fn biproper_realization_matches(num in proptest::collection::vec(0.5f64..3.0, 3), r1 in 0.2f64..4.0, r2 in 0.2f64..4.0,
                                    omega in 0.01f64..100.0) {
        let den = poly_mul(&Polynomial::new(vec![r1, 1.0]), &Polynomial::new(vec![r2, 1.0]));
        let tf = TransferFunction::new(Polynomial::new(num), den).unwrap();
        let ss = tf_to_statespace(&tf).unwrap();
        let s = Complex64::new(0.0, omega);
        prop_assert!((tf.eval(s) - ss.eval(s)).norm() <= 1e-9 * (1.0 + tf.eval(s).norm()));
    }
}

#[test]
fn hurwitz_tests_agree_on_random_polynomials() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut stable = 0;
    for _ in 0..200 {
        let deg = rng.gen_range(1..=6);
        // mix of products of stable/unstable factors and raw coefficients
        let p = if rng.gen_bool(0.5) {
            (0..deg).fold(Polynomial::one(), |acc, _| {
                poly_mul(&acc, &Polynomial::new(vec![rng.gen_range(-1.0..4.0), 1.0]))
            })
        } else {
            let mut c: Vec<f64> = (0..deg).map(|_| rng.gen_range(-1.0..5.0)).collect();
            c.push(1.0);
            Polynomial::new(c)
        };
        let a = is_hurwitz(&p).unwrap();
        let b = routh_hurwitz(&p).unwrap();
        assert_eq!(a, b, "{p}");
        stable += a as usize;
    }
    assert!(stable > 20 && stable < 180, "{stable}");
}
