mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ssgpfa::data::csv::{read_series, write_series};
use ssgpfa::data::LabeledSeries;
use ssgpfa::eval::standardize;
use ssgpfa::kalman::{RobustConfig, RobustFilter};
use ssgpfa::kernels::KernelExpr;
use ssgpfa::linalg::min_eigenvalue;
use ssgpfa::ssgpfa::{assemble_joint, orthogonality_defect, orthogonalize, Mode, NoiseModel, SsgpfaModel};

fn leaf() -> impl Strategy<Value = KernelExpr> {
    prop_oneof![
        (0.5f64..50.0, 0.1f64..3.0).prop_map(|(l, v)| KernelExpr::matern32(l, v)),
        (2.0f64..100.0, 0.1f64..3.0).prop_map(|(p, v)| KernelExpr::cosine(p, v)),
        (0.01f64..2.0).prop_map(KernelExpr::brownian),
    ]
}

fn expr() -> impl Strategy<Value = KernelExpr> {
    leaf().prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.plus(b)),
            (inner.clone(), inner).prop_map(|(a, b)| a.times(b)),
        ]
    })
}

fn stationary_expr() -> impl Strategy<Value = KernelExpr> {
    expr().prop_filter("stationary", |e| !e.to_string().contains("brownian"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_text_round_trips(e in expr()) {
        let parsed: KernelExpr = e.to_string().parse().unwrap();
        prop_assert_eq!(parsed, e);
    }

    #[test]
    fn discretization_composes_and_noise_is_psd(e in expr(), a in 0.05f64..3.0, b in 0.05f64..3.0) {
        let Ok(k) = e.build() else { return Ok(()) };
        let (ta, tb, tab) = (k.discretize(a).unwrap(), k.discretize(b).unwrap(), k.discretize(a + b).unwrap());
        let scale = tab.a.amax().max(1.0);
        prop_assert!((&tb.a * &ta.a - &tab.a).amax() < 1e-8 * scale);
        // Q(a+b) = A(b) Q(a) A(b)ᵀ + Q(b).
        let composed = &tb.a * &ta.q * tb.a.transpose() + &tb.q;
        prop_assert!((composed - &tab.q).amax() < 1e-7 * tab.q.amax().max(1.0));
        prop_assert!(min_eigenvalue(&tab.q) > -1e-9 * tab.q.amax().max(1.0));
    }

    #[test]
    fn stationary_kernels_match_closed_form(e in stationary_expr(), tau in 0.0f64..20.0) {
        let k = e.build().unwrap();
        let got = k.prior_covariance(tau).unwrap();
        let want = kernel_cov(&e, tau, 0.0, 0.0);
        prop_assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn orthogonalize_returns_orthonormal_columns(d in 2usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = 1 + (seed as usize % d);
        let c = DMatrix::from_fn(d, k, |_, _| normal(&mut r));
        let q = orthogonalize(&c).unwrap();
        prop_assert!(orthogonality_defect(&q) < 1e-10);
        // Closest orthonormal matrix: qᵀc is symmetric positive semidefinite.
        let m = q.transpose() * &c;
        prop_assert!((&m - m.transpose()).amax() < 1e-9 * m.amax().max(1.0));
        prop_assert!(min_eigenvalue(&m) > -1e-9);
    }

    #[test]
    fn filter_covariance_stays_psd(seed in any::<u64>(), missing in 0.0f64..0.6, log_rho in -30.0f64..-1.0) {
        let mut r = rng(seed);
        let model = SsgpfaModel::new(
            vec![KernelExpr::matern32(3.0, 1.0), KernelExpr::cosine(7.0, 1.0).times(KernelExpr::matern32(30.0, 1.0))],
            DMatrix::from_fn(4, 2, |_, _| normal(&mut r)),
            DVector::zeros(4),
            NoiseModel::Diagonal(vec![0.01, 0.1, 1.0, 0.5]),
            Mode::Unconstrained,
        ).unwrap();
        let mut f = RobustFilter::new(assemble_joint(&model).unwrap(), RobustConfig::with_log_rho(log_rho));
        let times = irregular_times(60, 0.0, &mut r);
        let ys = random_observations(60, 4, missing, &mut r);
        for (t, y) in times.iter().zip(&ys) {
            let step = f.step(*t, &(y * 3.0)).unwrap();
            let cov = &step.updated.cov;
            prop_assert!((cov - cov.transpose()).amax() == 0.0);
            prop_assert!(min_eigenvalue(cov) > -1e-9);
            prop_assert!(step.log_likelihood.is_finite());
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(seed in any::<u64>(), n in 1usize..30, d in 1usize..5, labeled in any::<bool>()) {
        let mut r = rng(seed);
        let times: Vec<f64> = irregular_times(n, -5.0, &mut r);
        let values = random_observations(n, d, 0.2, &mut r).into_iter().map(|v| v * 1e3).collect();
        let labels = labeled.then(|| (0..n).map(|i| (seed >> (i % 64)) & 1 == 1).collect());
        let series = LabeledSeries::new(times, values, labels).unwrap();
        let mut buf = Vec::new();
        write_series(&mut buf, &series).unwrap();
        let back = read_series(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.times, &series.times);
        prop_assert_eq!(&back.labels, &series.labels);
        for (a, b) in back.values.iter().zip(&series.values) {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn standardized_training_data_is_centered_and_scaled(seed in any::<u64>(), n in 2usize..50) {
        let mut r = rng(seed);
        let train: Vec<DVector<f64>> = random_observations(n, 3, 0.1, &mut r)
            .into_iter()
            .map(|v| DVector::from_fn(3, |i, _| 10.0 * i as f64 + (i + 1) as f64 * v[i]))
            .collect();
        let empty_dim = (0..3).any(|i| train.iter().all(|v| v[i].is_nan()));
        let result = standardize(&train, &[]);
        if empty_dim {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let (z, _, st) = result.unwrap();
        for i in 0..3 {
            let col: Vec<f64> = z.iter().map(|v| v[i]).filter(|x| !x.is_nan()).collect();
            prop_assume!(col.len() >= 2);
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9 || st.std[i] == 1.0);
        }
    }

    #[test]
    fn model_json_round_trips(seed in any::<u64>(), unconstrained in any::<bool>()) {
        let mut r = rng(seed);
        let (mode, c, noise) = if unconstrained {
            (Mode::Unconstrained, DMatrix::from_fn(5, 2, |_, _| normal(&mut r)), NoiseModel::Diagonal(vec![0.3, 0.1, 0.2, 0.4, 0.5]))
        } else {
            (Mode::Orthogonal, orthonormal(5, 2, &mut r), NoiseModel::Isotropic(0.25))
        };
        let mut model = SsgpfaModel::new(
            vec![KernelExpr::matern32(12.5, 0.75), KernelExpr::brownian(0.1).plus(KernelExpr::cosine(24.0, 1.0))],
            c,
            DVector::from_fn(5, |_, _| normal(&mut r)),
            noise,
            mode,
        ).unwrap();
        model.training_log = vec![-10.5, -3.25];
        let back = SsgpfaModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.loading(), model.loading());
        prop_assert_eq!(back.offset(), model.offset());
        prop_assert_eq!(back.noise(), model.noise());
        prop_assert_eq!(back.latents(), model.latents());
        prop_assert_eq!(back.mode(), model.mode());
        prop_assert_eq!(&back.training_log, &model.training_log);
    }
}
