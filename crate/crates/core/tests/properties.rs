//! Randomized invariants of the public API.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spdnet_geo::align::{dataset_fisher_stats, ra_apply, ra_fit, RaScope, ReferenceMean};
use spdnet_geo::data::{loso_splits, synth_generate, CovarianceSet, SynthConfig};
use spdnet_geo::harness::TableColumn;
use spdnet_geo::sampling::{random_full_rank, random_orthogonal, random_spd, random_sym_spectrum};
use spdnet_geo::spd::{
    airm_distance, congruence, jacobi_eigen, karcher_mean, spd_exp, spd_log, Mat, SpdMatrix,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_set(seed: u64) -> CovarianceSet {
    synth_generate(&SynthConfig {
        dim: 4,
        n_subjects: 3,
        trials_per_class: 5,
        ..SynthConfig::high_distortion(seed)
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn congruence_by_full_column_rank_stays_spd(seed: u64, d in 1usize..12, k in 0usize..12, lc in 0.0f64..8.0) {
        let mut r = rng(seed);
        let d_out = 1 + k % d;
        let c = random_spd(&mut r, d, 10f64.powf(lc));
        let w = random_full_rank(&mut r, d, d_out);
        let out = congruence(&c, &w).unwrap();
        prop_assert!(jacobi_eigen(out.as_mat()).unwrap().min_eigenvalue() > 0.0);
    }

    #[test]
    fn invertible_congruence_is_an_isometry(seed: u64, d in 2usize..12, lc in 0.0f64..8.0) {
        let mut r = rng(seed);
        let cond = 10f64.powf(lc);
        let (a, b) = (random_spd(&mut r, d, cond), random_spd(&mut r, d, cond));
        let w = random_full_rank(&mut r, d, d);
        let before = airm_distance(&a, &b).unwrap();
        let after = airm_distance(&congruence(&a, &w).unwrap(), &congruence(&b, &w).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 1e-8 * before, "{before} vs {after}");
    }

    #[test]
    fn log_and_exp_are_inverse(seed: u64, d in 1usize..12, lc in 0.0f64..8.0) {
        let mut r = rng(seed);
        let c = random_spd(&mut r, d, 10f64.powf(lc));
        let back = spd_exp(&spd_log(&c).unwrap()).unwrap();
        prop_assert!((back.as_mat() - c.as_mat()).norm() < 1e-8 * c.as_mat().norm());
        let half = 0.5 * lc * std::f64::consts::LN_10;
        let s = random_sym_spectrum(&mut r, d, -half, half);
        let back = spd_log(&spd_exp(&s).unwrap()).unwrap();
        prop_assert!((back.as_mat() - s.as_mat()).norm() <= 1e-8 * s.as_mat().norm().max(1e-300));
    }

    #[test]
    fn distance_from_identity_is_log_norm(seed: u64, d in 1usize..12, lc in 0.0f64..8.0) {
        let mut r = rng(seed);
        let c = random_spd(&mut r, d, 10f64.powf(lc));
        let dist = airm_distance(&SpdMatrix::identity(d), &c).unwrap();
        let norm = spd_log(&c).unwrap().as_mat().norm();
        prop_assert!((dist - norm).abs() <= 1e-10 * norm.max(1.0));
    }

    #[test]
    fn distance_is_a_metric(seed: u64, d in 2usize..10, lc in 0.0f64..6.0) {
        let mut r = rng(seed);
        let cond = 10f64.powf(lc);
        let (a, b, c) = (random_spd(&mut r, d, cond), random_spd(&mut r, d, cond), random_spd(&mut r, d, cond));
        let (ab, ba) = (airm_distance(&a, &b).unwrap(), airm_distance(&b, &a).unwrap());
        let (ac, bc) = (airm_distance(&a, &c).unwrap(), airm_distance(&b, &c).unwrap());
        prop_assert!(airm_distance(&a, &a).unwrap() < 1e-8);
        prop_assert!((ab - ba).abs() <= 1e-8 * ab);
        prop_assert!(ac <= ab + bc + 1e-9 * (ab + bc));
    }

    #[test]
    fn fisher_ratio_ignores_a_global_rotation(seed in 0u64..1000) {
        let ds = small_set(seed);
        let q = random_orthogonal(&mut rng(seed ^ 0x5eed), ds.dim());
        let rotated = ds.with_covs(ds.covs().iter().map(|c| congruence(c, &q).unwrap()).collect()).unwrap();
        let (a, b) = (dataset_fisher_stats(&ds).unwrap(), dataset_fisher_stats(&rotated).unwrap());
        let (ra, rb) = (a.within_action / a.between_action, b.within_action / b.between_action);
        prop_assert!((ra - rb).abs() < 1e-8 * ra);
    }

    #[test]
    fn ra_centres_every_subject_at_identity(seed in 0u64..1000) {
        let ds = small_set(seed);
        let model = ra_fit(&ds, RaScope::Subject, ReferenceMean::Karcher).unwrap();
        let out = ra_apply(&model, &ds).unwrap();
        for s in out.subjects() {
            let covs: Vec<SpdMatrix> = out.indices_of(s).into_iter().map(|i| out.items()[i].cov.clone()).collect();
            let m = karcher_mean(&covs, 1e-12, 200).unwrap();
            prop_assert!((m.as_mat() - Mat::identity(ds.dim(), ds.dim())).amax() < 1e-6);
        }
    }

    #[test]
    fn loso_folds_partition_items(seed in 0u64..1000) {
        let ds = small_set(seed);
        let splits = loso_splits(&ds).unwrap();
        prop_assert_eq!(splits.len(), ds.subjects().len());
        let mut seen = vec![0usize; ds.len()];
        for split in &splits {
            prop_assert_eq!(split.train.len() + split.test.len(), ds.len());
            prop_assert!(split.train.iter().all(|&i| ds.items()[i].subject != split.held_out));
            prop_assert!(split.test.iter().all(|&i| ds.items()[i].subject == split.held_out));
            for &i in &split.test {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn column_summary_is_bounded(values in prop::collection::vec(0.0f64..100.0, 1..12)) {
        let rows = values.iter().enumerate().map(|(i, v)| (format!("S{i}"), *v)).collect();
        let col = TableColumn::new("acc", rows);
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        prop_assert!(col.mean() >= lo - 1e-9 && col.mean() <= hi + 1e-9);
        prop_assert!(col.std() >= 0.0 && col.std() <= (hi - lo) + 1e-9);
    }
}
