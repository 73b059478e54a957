use gbbm::energy::{energy_derivative_decomposed, energy_derivative_spectral};
use gbbm::flow::{
    conserved_quantity, divergence_report, evolve, forced_linear_flow, free_evolution, gbbm_rhs, integrate, GbbmParams,
};
use gbbm::measures::{sample_mu_s, MeasureSpec};
use gbbm::measures::cutoff_chi_r;
use gbbm::spectral::{
    dirichlet_project, fractional_derivative, l2_norm, lebesgue_norm, lp_decompose, pointwise_product, sobolev_norm,
    sobolev_norm_sq, truncated_convolution, LpMode, SpectralField,
};
use gbbm::stats::{sample_seed, EstimateWithError};
use gbbm::transport::holder_exponent_check;
use num_complex::Complex64;
use proptest::prelude::*;

fn field(max_modes: usize) -> impl Strategy<Value = SpectralField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=max_modes)
        .prop_map(|v| SpectralField::new(v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap())
}

fn gamma() -> impl Strategy<Value = f64> {
    1.05f64..3.0
}

fn dist(a: &SpectralField, b: &SpectralField) -> f64 {
    sobolev_norm(&(a - b), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn free_evolution_is_an_isometry(u in field(16), g in gamma(), t in -5.0f64..5.0, sigma in -1.0f64..3.0) {
        let v = free_evolution(&u, g, t);
        let (a, b) = (sobolev_norm_sq(&u, sigma), sobolev_norm_sq(&v, sigma));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        prop_assert!(dist(&free_evolution(&v, g, -t), &u) < 1e-12);
    }

    #[test]
    fn free_evolution_is_a_group(u in field(12), g in gamma(), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let a = free_evolution(&free_evolution(&u, g, t1), g, t2);
        prop_assert!(dist(&a, &free_evolution(&u, g, t1 + t2)) < 1e-12);
    }

    #[test]
    fn conserved_quantity_has_zero_rate(u in field(12), g in gamma()) {
        let p = GbbmParams::new(g, 1, u.n_max()).unwrap();
        let r = gbbm_rhs(&u, &p).unwrap();
        let rate: f64 = u.coeffs().iter().zip(r.coeffs()).enumerate()
            .map(|(i, (a, b))| (1.0 + ((i + 1) as f64).powf(g)) * (a.conj() * b).re)
            .sum();
        let scale: f64 = u.coeffs().iter().zip(r.coeffs()).enumerate()
            .map(|(i, (a, b))| (1.0 + ((i + 1) as f64).powf(g)) * a.norm() * b.norm())
            .sum();
        prop_assert!(rate.abs() <= 1e-12 * scale.max(1e-300), "rate {rate} scale {scale}");
    }

    #[test]
    fn short_runs_conserve(u in field(8), g in gamma()) {
        let p = GbbmParams::new(g, 1, 8).unwrap();
        let traj = integrate(&u.resized(8).scale(0.5), &p, 0.5, 1e-3).unwrap();
        prop_assert!(traj.max_relative_drift() < 1e-9, "{}", traj.max_relative_drift());
    }

    #[test]
    fn flow_is_time_reversible(u in field(6), g in gamma()) {
        let p = GbbmParams::new(g, 1, 6).unwrap();
        let u = u.resized(6).scale(0.5);
        let back = evolve(&evolve(&u, &p, 0.4, 1e-3).unwrap(), &p, -0.4, 1e-3).unwrap();
        prop_assert!(dist(&back, &u) < 1e-9);
    }

    #[test]
    fn per_mode_divergence_vanishes(u in field(10), g in gamma()) {
        let p = GbbmParams::new(g, 1, u.n_max()).unwrap();
        let report = divergence_report(&u, &p).unwrap();
        prop_assert!(report.max_mode_divergence < 1e-12);
        prop_assert!(report.total_divergence.abs() < 1e-11);
    }

    #[test]
    fn forced_flow_is_linear(h1 in field(10), h2 in field(10), a in -3.0f64..3.0, g in gamma(), t in -2.0f64..2.0) {
        let n = h1.n_max().max(h2.n_max());
        let (h1, h2) = (h1.resized(n), h2.resized(n));
        let lhs = forced_linear_flow(&h1.axpy(a, &h2), g, t);
        let rhs = forced_linear_flow(&h1, g, t).axpy(a, &forced_linear_flow(&h2, g, t));
        prop_assert!(dist(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn lp_blocks_reassemble(u in field(40), sharp in any::<bool>()) {
        let mode = if sharp { LpMode::Sharp } else { LpMode::Smooth };
        let total = lp_decompose(&u, mode)
            .iter()
            .fold(SpectralField::zeros(u.n_max()), |acc, (_, b)| acc.axpy(1.0, &b.resized(u.n_max())));
        prop_assert!(dist(&total, &u) < 1e-13);
    }

    #[test]
    fn product_matches_pointwise_values(u in field(8), v in field(8), x in 0.0f64..6.3) {
        let w = pointwise_product(&u, &v);
        // zero-mean part of u v: subtract the mean 2 Re Σ û conj(v̂)
        let mean: f64 = u.coeffs().iter().zip(v.coeffs()).map(|(a, b)| 2.0 * (a * b.conj()).re).sum();
        let direct = u.value_at(x) * v.value_at(x) - mean;
        prop_assert!((w.value_at(x) - direct).abs() < 1e-11);
    }

    #[test]
    fn truncated_convolution_is_a_projection_of_the_product(u in field(8), v in field(8), n in 1usize..20) {
        let full = pointwise_product(&dirichlet_project(&u, n), &dirichlet_project(&v, n));
        let cut = truncated_convolution(&u, &v, n);
        for k in 1..=n {
            prop_assert!((cut.coeff(k) - full.coeff(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn sobolev_norm_is_monotone(u in field(16), a in -2.0f64..2.0, b in 0.0f64..2.0) {
        prop_assert!(sobolev_norm(&u, a) <= sobolev_norm(&u, a + b) * (1.0 + 1e-14));
    }

    #[test]
    fn energy_decomposition_matches_spectral(u in field(16), g in 1.05f64..2.5, s in 1u32..3) {
        let p = GbbmParams::new(g, s, u.n_max()).unwrap();
        let (i1, i2) = energy_derivative_decomposed(&u, &p, 2).unwrap();
        let d = energy_derivative_spectral(&u, &p).unwrap();
        prop_assert!((i1 + i2 - d).abs() <= 1e-9 * d.abs().max(1.0));
    }

    #[test]
    fn samples_are_prefix_consistent(seed in any::<u64>(), n1 in 1usize..16, extra in 0usize..32, g in 1.05f64..2.0) {
        let short = sample_mu_s(&MeasureSpec::new(1, g, n1, None).unwrap(), seed);
        let long = sample_mu_s(&MeasureSpec::new(1, g, n1 + extra, None).unwrap(), seed);
        prop_assert_eq!(short.coeffs(), &long.coeffs()[..n1]);
    }

    #[test]
    fn sample_seeds_are_deterministic_and_distinct(master in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(sample_seed(master, i), sample_seed(master, i));
        prop_assert_ne!(sample_seed(master, i), sample_seed(master, i + 1));
    }

    #[test]
    fn real_coordinates_round_trip(u in field(16)) {
        prop_assert_eq!(SpectralField::from_real_coords(&u.to_real_coords()).unwrap(), u);
    }

    #[test]
    fn conserved_quantity_scales_quadratically(u in field(10), g in gamma(), a in -4.0f64..4.0) {
        let q = conserved_quantity(&u, g);
        prop_assert!((conserved_quantity(&u.scale(a), g) - a * a * q).abs() <= 1e-12 * q.max(1e-300) * a * a + 1e-300);
    }

    #[test]
    fn constant_samples_have_zero_stderr(x in -1e3f64..1e3, n in 2usize..50) {
        let e = EstimateWithError::from_samples(&vec![x; n], 0);
        prop_assert!((e.value - x).abs() <= 1e-12 * x.abs().max(1.0));
        prop_assert!(e.stderr <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn holder_check_decided_by_delta(alpha in 0.01f64..0.99, delta in 0.001f64..0.5, c in 0.1f64..5.0) {
        let m: Vec<f64> = (1..=50).map(|k| 10f64.powf(-(k as f64))).collect();
        prop_assert!(holder_exponent_check(&m, 1.0, c, alpha, delta).unwrap().bounded);
        prop_assert!(!holder_exponent_check(&m, 1.0, c, alpha, 0.0).unwrap().bounded);
    }

    #[test]
    fn parseval(u in field(24), oversample in 2usize..6) {
        let a = l2_norm(&u);
        prop_assert!((lebesgue_norm(&u, 2.0, oversample) - a).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn projectors_compose(u in field(24), m in 0usize..30, n in 0usize..30) {
        prop_assert_eq!(dirichlet_project(&dirichlet_project(&u, m), n), dirichlet_project(&u, m.min(n)));
    }

    #[test]
    fn product_is_bilinear_and_commutative(u in field(8), v in field(8), w in field(8), a in -2.0f64..2.0) {
        let uv = pointwise_product(&u, &v);
        prop_assert!(dist(&uv, &pointwise_product(&v, &u)) < 1e-13);
        let n = u.n_max().max(w.n_max());
        let lhs = pointwise_product(&u.resized(n).axpy(a, &w.resized(n)), &v);
        let m = lhs.n_max();
        let rhs = uv.resized(m).axpy(a, &pointwise_product(&w, &v).resized(m));
        prop_assert!(dist(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn fractional_derivatives_compose(u in field(16), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let lhs = fractional_derivative(&fractional_derivative(&u, a), b);
        let rhs = fractional_derivative(&u, a + b);
        prop_assert!(dist(&lhs, &rhs) <= 1e-13 * sobolev_norm(&rhs, 0.0).max(1.0));
    }

    #[test]
    fn sharp_blocks_are_orthogonal(u in field(64)) {
        let blocks = lp_decompose(&u, LpMode::Sharp);
        for (i, (_, a)) in blocks.iter().enumerate() {
            for (_, b) in &blocks[i + 1..] {
                let n = a.n_max().min(b.n_max());
                let inner: Complex64 = a.coeffs()[..n].iter().zip(&b.coeffs()[..n]).map(|(x, y)| x * y.conj()).sum();
                prop_assert_eq!(inner, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn cutoff_is_monotone_in_radius(u in field(8), g in gamma(), r1 in 0.1f64..100.0, r2 in 0.0f64..100.0) {
        let spec = MeasureSpec::new(2, g, 8, None).unwrap();
        let lo = cutoff_chi_r(&u, &spec.with_cutoff(Some(r1)));
        let hi = cutoff_chi_r(&u, &spec.with_cutoff(Some(r1 + r2)));
        prop_assert!(lo <= hi);
        prop_assert_eq!(cutoff_chi_r(&u, &spec), 1);
    }
}
