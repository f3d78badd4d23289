use kml_core::automorphism::Automorphism;
use kml_core::invariance::{is_rescaling, multiplier, projective_invariance_check, SampleConfig, Verdict};
use kml_core::wirtinger::DiffConfig;
use kml_core::{compile_str, Domain};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn criteria_agree_on_pair_suite() {
    let disk = Domain::disk();
    let suite = [
        ("bergman", "bergman", true),
        ("bergman", "rescale(bergman, exp(z))", true),
        ("bergman", "szego", false),
        ("bergman", "product(const(4*pi), power(szego, 2))", true),
        ("fock", "bergman", false),
        ("rank1(exp(z))", "rank1(z + 2)", true),
        ("power(bergman, 3)", "rescale(power(szego, 6), z + 3)", true),
    ];
    let s = SampleConfig::new(12, 11);
    for (a, b, expected) in suite {
        let r = is_rescaling(&compile_str(a, &disk).unwrap(), &compile_str(b, &disk).unwrap(), &s, 1e-8, &DiffConfig::default()).unwrap();
        assert_eq!(r.details["criteria_agree"], true, "{a} vs {b}: {:?}", r.details);
        assert_eq!(r.passed(), expected, "{a} vs {b}: {:?}", r.details);
    }
}

#[test]
fn invariance_survives_composition_inversion_and_products() {
    let disk = Domain::disk();
    let s = SampleConfig::new(10, 12);
    let phi = Automorphism::disk_moebius(disk, 0.9, c(0.4, -0.3)).unwrap();
    let psi = Automorphism::disk_moebius(disk, -0.2, c(-0.1, 0.6)).unwrap();
    let maps = [Automorphism::compose(&phi, &psi).unwrap(), phi.inverse(), psi.inverse()];
    for text in ["bergman", "szego", "product(bergman, szego)", "power(szego, 1.5)", "rescale(bergman, exp(z))"] {
        let k = compile_str(text, &disk).unwrap();
        for m in &maps {
            let r = projective_invariance_check(&k, std::slice::from_ref(m), &s, 1e-9).unwrap();
            assert!(r.passed(), "{text} under {m}: {}", r.max_dev);
        }
    }
}

#[test]
fn ball_and_polydisk_bergman_are_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = SampleConfig::new(10, 13);
    for (domain, text) in [(Domain::ball(2).unwrap(), "bergman"), (Domain::polydisk(2).unwrap(), "bergman"), (Domain::ball(3).unwrap(), "szego")] {
        let k = compile_str(text, &domain).unwrap();
        let gens: Vec<_> = (0..3).map(|_| Automorphism::random(domain, &mut rng, 0.6).unwrap()).collect();
        let r = projective_invariance_check(&k, &gens, &s, 1e-9).unwrap();
        assert!(r.passed(), "{text} on {domain}: {}", r.max_dev);
        let w = multiplier(&k, &gens[0], &domain.center(), &s, 1e-9).unwrap();
        for x in s.points(&domain, 21) {
            let expected = k.diag(&x).unwrap() / k.diag(&gens[0].apply_point(&x).unwrap()).unwrap();
            assert!((w.value(&x).unwrap().norm_sqr() - expected).abs() <= 1e-9 * expected);
        }
    }
}

#[test]
fn fock_fails_under_moebius_with_witness() {
    let disk = Domain::disk();
    let k = compile_str("fock", &disk).unwrap();
    let phi = Automorphism::disk_moebius(disk, 0.0, c(0.3, 0.0)).unwrap();
    let r = projective_invariance_check(&k, &[phi], &SampleConfig::new(16, 14), 1e-9).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.max_dev > 0.01);
    assert!(r.witnesses.iter().all(|w| w.points.len() == 2 && w.deviation > 1e-9));
}
