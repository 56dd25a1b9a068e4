use qsv_core::device::{build_device, pass_probability, NoiseChannel};
use qsv_core::linalg::{hermitian_eigen, ComplexVector};
use qsv_core::mub::build_mub;
use qsv_core::sampler::RandomStream;
use qsv_core::strategy::{build_strategy, pass_probability_of, worst_case_pass_probability};
use qsv_core::C64;

fn random_vector(rng: &mut RandomStream, dim: usize) -> Vec<C64> {
    (0..dim)
        .map(|_| C64::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5))
        .collect()
}

#[test]
fn states_orthogonal_to_target_pass_at_most_lambda2() {
    for d in [2, 3, 5] {
        let s = build_strategy(build_mub(d).unwrap()).unwrap();
        let psi = s.target().clone();
        let mut rng = RandomStream::new(11, d as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let v = ComplexVector::new(random_vector(&mut rng, d * d));
            let overlap = psi.inner(&v).unwrap();
            let chi: Vec<C64> = v
                .entries()
                .iter()
                .zip(psi.entries())
                .map(|(a, p)| a - overlap * p)
                .collect();
            let chi = ComplexVector::normalized(chi).unwrap();
            let p = pass_probability_of(&s, &chi.outer()).unwrap();
            worst = worst.max(p);
        }
        assert!(worst <= s.lambda2() + 1e-9, "d={d}: worst {worst}");
    }
}

#[test]
fn fidelity_bound_is_tight_on_second_eigenvector() {
    let s = build_strategy(build_mub(3).unwrap()).unwrap();
    let eig = hermitian_eigen(s.omega()).unwrap();
    let psi = s.target();
    let chi = &eig.eigenvectors[1];
    assert!(psi.inner(chi).unwrap().norm() < 1e-9);
    for eps in [0.01, 0.05, 0.1, 0.5] {
        // ρ = (1-ε)ΨΨ + ε χχ has fidelity 1-ε and attains the worst case.
        let rho = psi.outer().scale_real(1.0 - eps).add(&chi.outer().scale_real(eps)).unwrap();
        let p = pass_probability_of(&s, &rho).unwrap();
        assert!((p - worst_case_pass_probability(eps, s.lambda2())).abs() < 1e-10);
    }
}

#[test]
fn noisy_devices_respect_the_worst_case_bound() {
    let s = build_strategy(build_mub(3).unwrap()).unwrap();
    let mut rng = RandomStream::new(5, 5);
    for _ in 0..200 {
        let coeffs = random_vector(&mut rng, 3);
        let noise = NoiseChannel::White {
            visibility: rng.next_f64(),
        };
        let dev = build_device(3, &coeffs, noise).unwrap();
        let fid = qsv_core::linalg::fidelity_pure(dev.rho(), s.target()).unwrap();
        let p = pass_probability(&dev, &s).unwrap();
        assert!(p <= worst_case_pass_probability(1.0 - fid, s.lambda2()) + 1e-10);
        assert!(p >= fid - 1e-10);
    }
}
