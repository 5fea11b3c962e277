//! End-to-end acceptance criteria.
//!
//! Prints one line per criterion. The run fails when a criterion fails that is
//! not listed in `KNOWN_FAILURES`; those stay visible as FAIL/BLOCKED lines.

use std::fs;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spdnet_geo::align::{dataset_fisher_stats, ra_apply, ra_fit, rifu_apply, rifu_fit, RaScope, ReferenceMean, RifuConfig};
use spdnet_geo::classify::{softmax, Classifier, ClassifierSpec, DcNetConfig, DcNetModel, RifuNetModel, TslrBase};
use spdnet_geo::data::{synth_generate, CovarianceSet, SynthConfig};
use spdnet_geo::harness::{emit_table, gradcheck_suite, run_loso, DataSource, LosoRun, RunConfig, TableColumn};
use spdnet_geo::nets::{TrainConfig, UNet, UPSAMPLE_EPS};
use spdnet_geo::sampling::{random_full_rank, random_spd, random_sym_spectrum};
use spdnet_geo::spd::{
    airm_distance, congruence, congruence_mat, jacobi_eigen, karcher_mean, log_euclidean_mean,
    log_euclidean_merge, spd_exp, spd_log, spd_power, spectral_mat, vec_upper_mat, Mat,
    SpdMatrix, SpectralFn,
};

/// Criteria expected to fail; see the README section on acceptance results.
const KNOWN_FAILURES: &[&str] = &["5b-acc", "6b"];

const FIXTURE_SEED: u64 = 1;
const ENV_BCI_DATA: &str = "SPDNET_GEO_BCI_SPDC";

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Blocked,
    Skip,
}

struct Outcome {
    id: &'static str,
    title: &'static str,
    status: Status,
    detail: String,
}

struct Suite {
    outcomes: Vec<Outcome>,
}

impl Suite {
    fn record(&mut self, id: &'static str, title: &'static str, status: Status, detail: String) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Blocked => "BLOCKED",
            Status::Skip => "SKIP",
        };
        println!("[{tag:<7}] {id:<7} {title}: {detail}");
        self.outcomes.push(Outcome { id, title, status, detail });
    }

    fn check(&mut self, id: &'static str, title: &'static str, ok: bool, detail: String) {
        self.record(id, title, if ok { Status::Pass } else { Status::Fail }, detail);
    }
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn low_fixture() -> CovarianceSet {
    synth_generate(&SynthConfig::low_distortion(FIXTURE_SEED)).expect("low fixture")
}

fn high_fixture() -> CovarianceSet {
    synth_generate(&SynthConfig::high_distortion(FIXTURE_SEED)).expect("high fixture")
}

fn loso(cfg_json: &str, ds: &CovarianceSet, jobs: usize) -> LosoRun {
    let cfg = RunConfig::from_json(cfg_json).expect("config");
    run_loso(&cfg, ds, jobs).expect("loso run")
}

fn mean_of(run: &LosoRun) -> f64 {
    run.report.mean.unwrap_or(f64::NAN)
}

// --- 1 -------------------------------------------------------------------

fn manifold_suite(suite: &mut Suite) {
    const INSTANCES: usize = 1000;
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut closure_min, mut iso_err, mut rt_err, mut axiom_err) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    let mut triangle_ok = true;
    for _ in 0..INSTANCES {
        let d = rng.random_range(2..=22);
        let draw = |rng: &mut ChaCha8Rng| {
            let cond = 10f64.powf(rng.random_range(0.0..=8.0));
            random_spd(rng, d, cond)
        };
        let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));

        // congruence by full column rank W stays SPD
        let d_out = rng.random_range(1..=d);
        let w = random_full_rank(&mut rng, d, d_out);
        let out = congruence_mat(a.as_mat(), &w);
        let eig = jacobi_eigen(&out).unwrap();
        closure_min = closure_min.min(eig.min_eigenvalue() / eig.max_eigenvalue());

        // congruence by invertible W is an isometry
        let w = random_full_rank(&mut rng, d, d);
        let dab = airm_distance(&a, &b).unwrap();
        let dw = airm_distance(&congruence(&a, &w).unwrap(), &congruence(&b, &w).unwrap()).unwrap();
        iso_err = iso_err.max((dw - dab).abs() / dab);

        // round trips
        rt_err = rt_err.max(rel(spd_exp(&spd_log(&a).unwrap()).unwrap().as_mat(), a.as_mat()));
        let half = 0.5 * 1e8f64.ln();
        let s = random_sym_spectrum(&mut rng, d, -half, half);
        rt_err = rt_err.max(rel(spd_log(&spd_exp(&s).unwrap()).unwrap().as_mat(), s.as_mat()));

        // metric axioms
        let dba = airm_distance(&b, &a).unwrap();
        let dac = airm_distance(&a, &c).unwrap();
        let dbc = airm_distance(&b, &c).unwrap();
        axiom_err = axiom_err.max((dab - dba).abs() / dab).max(airm_distance(&a, &a).unwrap());
        triangle_ok &= dab > 1e-8 && dac <= dab + dbc + 1e-9 * (dab + dbc);
    }
    let elapsed = t0.elapsed();
    let ok = closure_min > 0.0
        && iso_err < 1e-8
        && rt_err < 1e-8
        && axiom_err < 1e-8
        && triangle_ok
        && elapsed < Duration::from_secs(60);
    suite.check(
        "1",
        "manifold property suite",
        ok,
        format!(
            "{INSTANCES} instances, dims 2-22, cond <= 1e8: min relative eig {closure_min:.1e}, isometry err {iso_err:.1e}, \
             round-trip err {rt_err:.1e}, symmetry/identity err {axiom_err:.1e}, triangle {triangle_ok}, {}",
            secs(elapsed)
        ),
    );
}

// --- 2 -------------------------------------------------------------------

fn gradient_suite(suite: &mut Suite) {
    let t0 = Instant::now();
    let rep = gradcheck_suite(7, 10).expect("gradient suite");
    let elapsed = t0.elapsed();
    let worst = rep
        .entries
        .iter()
        .max_by(|a, b| a.worst_rel_err.total_cmp(&b.worst_rel_err))
        .expect("entries");
    let has_gap = rep.entries.iter().any(|e| e.name.contains("gap 1e-10"));
    let losses = rep.entries.iter().filter(|e| e.name.starts_with("loss")).count();
    suite.check(
        "2",
        "gradient suite",
        rep.passed() && has_gap && losses == 4 && elapsed < Duration::from_secs(120),
        format!(
            "{} cases x 10 instances at step {:e}: worst {:.2e} ({}), tolerance {:e}, {}",
            rep.entries.len(),
            rep.step,
            worst.worst_rel_err,
            worst.name,
            rep.tolerance,
            secs(elapsed)
        ),
    );
}

// --- 3 -------------------------------------------------------------------

/// Compass search over Cholesky factors minimising `Σ‖log C − log Cᵢ‖²`.
fn brute_force_le_mean(cs: &[SpdMatrix]) -> Mat {
    let logs: Vec<Mat> = cs.iter().map(|c| spd_log(c).unwrap().into_mat()).collect();
    let cost = |p: &[f64; 3]| -> f64 {
        let l = Mat::from_row_slice(2, 2, &[p[0].exp(), 0.0, p[1], p[2].exp()]);
        let c = SpdMatrix::new(&l * l.transpose()).unwrap();
        let lc = spd_log(&c).unwrap().into_mat();
        logs.iter().map(|li| (&lc - li).norm_squared()).sum()
    };
    let mut p = [0.0; 3];
    let mut best = cost(&p);
    let mut step = 1.0;
    while step > 1e-10 {
        let mut moved = false;
        for k in 0..3 {
            for dir in [1.0, -1.0] {
                let mut q = p;
                q[k] += dir * step;
                let v = cost(&q);
                if v < best {
                    best = v;
                    p = q;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let l = Mat::from_row_slice(2, 2, &[p[0].exp(), 0.0, p[1], p[2].exp()]);
    &l * l.transpose()
}

fn dcnet_oracle(model: &DcNetModel, c: &SpdMatrix) -> Vec<f64> {
    let mut x = c.as_mat().clone();
    for w in &model.stack {
        x = congruence_mat(&x, w);
        for i in 0..x.nrows() {
            x[(i, i)] += model.eps;
        }
    }
    let z = vec_upper_mat(&spectral_mat(&x, SpectralFn::Log).unwrap().0);
    let z = Mat::from_row_slice(1, z.len(), &z);
    let mut logits = (z * model.head_in.transpose()) * model.head_out.transpose();
    for j in 0..logits.ncols() {
        logits[(0, j)] += model.bias[(j, 0)];
    }
    softmax(&logits.row(0).iter().copied().collect::<Vec<_>>())
}

fn unet_oracle(net: &UNet, c: &SpdMatrix) -> Mat {
    let mut acts = vec![c.as_mat().clone()];
    let mut x = c.as_mat().clone();
    for e in &net.enc {
        x = congruence_mat(&x, e);
        acts.push(x.clone());
    }
    for l in (0..net.dec.len()).rev() {
        x = congruence_mat(&x, &net.dec[l]);
        if net.dims[l] > net.dims[l + 1] {
            for i in 0..x.nrows() {
                x[(i, i)] += UPSAMPLE_EPS;
            }
        }
        x = log_euclidean_merge(&SpdMatrix::new(x).unwrap(), &SpdMatrix::new(acts[l].clone()).unwrap())
            .unwrap()
            .into_mat();
    }
    x
}

fn rifunet_oracle(model: &RifuNetModel, c: &SpdMatrix) -> Vec<f64> {
    let out = unet_oracle(&model.net, c);
    let l = spectral_mat(&out, SpectralFn::Log).unwrap().0;
    let z = vec_upper_mat(&(l - &model.train_mean_log));
    let z = Mat::from_row_slice(1, z.len(), &z);
    let mut logits = z * model.weights.transpose();
    for j in 0..logits.ncols() {
        logits[(0, j)] += model.bias[(j, 0)];
    }
    softmax(&logits.row(0).iter().copied().collect::<Vec<_>>())
}

fn oracles(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(33);

    let mut mid_err = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(2..=8);
        let a = random_spd(&mut rng, d, 1e3);
        let b = random_spd(&mut rng, d, 1e3);
        let ah = spd_power(&a, 0.5).unwrap().into_mat();
        let aih = spd_power(&a, -0.5).unwrap().into_mat();
        let inner = SpdMatrix::new(congruence_mat(b.as_mat(), &aih)).unwrap();
        let mid = congruence_mat(spd_power(&inner, 0.5).unwrap().as_mat(), &ah);
        let k = karcher_mean(&[a, b], 1e-12, 500).unwrap();
        mid_err = mid_err.max(rel(k.as_mat(), &mid));
    }
    suite.check(
        "3-karch",
        "Karcher two-point midpoint oracle",
        mid_err < 1e-6,
        format!("20 pairs, dims 2-8: max rel err {mid_err:.1e} (tolerance 1e-6)"),
    );

    let mut le_err = 0.0f64;
    for _ in 0..3 {
        let cs: Vec<SpdMatrix> = (0..3).map(|_| random_spd(&mut rng, 2, 20.0)).collect();
        let brute = brute_force_le_mean(&cs);
        le_err = le_err.max((log_euclidean_mean(&cs).unwrap().as_mat() - brute).amax());
    }
    suite.check(
        "3-le",
        "log-Euclidean mean vs brute-force minimiser",
        le_err < 1e-4,
        format!("3 random 2x2 triples: max abs err {le_err:.1e} (tolerance 1e-4)"),
    );

    // briefly trained networks so weights are not at their initial values
    let ds = low_fixture();
    let short = TrainConfig { steps: 20, batch_size: 64, ..TrainConfig::default() };
    let dc = ClassifierSpec::Dcnet(DcNetConfig { train: short.clone(), ..DcNetConfig::default() })
        .fit(&ds, None)
        .unwrap()
        .model;
    let rn = ClassifierSpec::Rifunet(spdnet_geo::classify::RifuNetConfig { train: short.clone(), ..Default::default() })
        .fit(&ds, None)
        .unwrap()
        .model;
    let rifu = rifu_fit(&ds, &RifuConfig { train: short, ..RifuConfig::default() }).unwrap().model;
    let inputs: Vec<SpdMatrix> = (0..10).map(|_| random_spd(&mut rng, ds.dim(), 100.0)).collect();
    let set = CovarianceSet::new(
        ds.dim(),
        inputs
            .iter()
            .map(|c| spdnet_geo::data::CovItem { subject: spdnet_geo::data::SubjectId(99), label: 0, cov: c.clone() })
            .collect(),
    )
    .unwrap();
    let mut mismatches = 0;
    for (clf, oracle) in [
        (&dc, &(|c: &SpdMatrix| match &dc { Classifier::Dcnet(m) => dcnet_oracle(m, c), _ => unreachable!() }) as &dyn Fn(&SpdMatrix) -> Vec<f64>),
        (&rn, &|c: &SpdMatrix| match &rn {
            Classifier::Rifunet(m) => {
                assert_eq!(m.base, TslrBase::Train);
                rifunet_oracle(m, c)
            }
            _ => unreachable!(),
        }),
    ] {
        let pred = clf.predict(&set).unwrap();
        let probs = pred.probabilities.expect("network probabilities");
        for (i, c) in inputs.iter().enumerate() {
            if probs[i] != oracle(c) {
                mismatches += 1;
            }
        }
    }
    for c in &inputs {
        if rifu.net.apply(c).unwrap().as_mat() != &unet_oracle(&rifu.net, c) {
            mismatches += 1;
        }
    }
    suite.check(
        "3-net",
        "network predict paths vs straight-line forward",
        mismatches == 0,
        format!("SPD-DCNet, RiFUNet, RiFU U-Net on 10 random inputs each: {mismatches} non-identical outputs"),
    );
}

// --- 4 -------------------------------------------------------------------

fn ra_behaviour(suite: &mut Suite) {
    let ds = high_fixture();
    let mut worst = 0.0f64;
    for scope in [RaScope::Subject, RaScope::TrainGlobal] {
        for mean in [ReferenceMean::LogEuclidean, ReferenceMean::Karcher] {
            let model = ra_fit(&ds, scope, mean).unwrap();
            for r in model.references.values().chain(model.global.iter()) {
                let w = congruence_mat(r.reference.as_mat(), &r.whitener);
                worst = worst.max((w - Mat::identity(ds.dim(), ds.dim())).amax());
            }
        }
    }
    suite.check(
        "4-white",
        "RA references whiten to I",
        worst < 1e-8,
        format!("per-subject and train-global scopes, both means: max |W R W - I| {worst:.1e}"),
    );

    let cfg = r#"{"align":[{"ra":{}},{"dcr":{"train":{"steps":20}}},{"rifu":{"train":{"steps":5,"batch_size":64}}}],
                  "classifier":{"tslr":{"train":{"steps":20}}},"seed":3}"#;
    let run = loso(cfg, &ds, 1);
    let supervised: Vec<_> = run.audit.iter().filter(|e| e.supervised).collect();
    let leaks = supervised.iter().filter(|e| e.subjects.contains(&e.fold)).count();
    let test_side_ok = run
        .audit
        .iter()
        .filter(|e| e.subjects.contains(&e.fold))
        .all(|e| !e.supervised && e.subjects == vec![e.fold]);
    let folds = run.report.subjects.len();
    suite.check(
        "4-audit",
        "zero-shot audit",
        leaks == 0 && test_side_ok && supervised.len() == 3 * folds && !run.failed(),
        format!(
            "{folds} folds, {} supervised fits, {leaks} touched the held-out subject; held-out items only reached label-free fits: {test_side_ok}",
            supervised.len()
        ),
    );
}

// --- 5 -------------------------------------------------------------------

fn training_accuracy(spec: &ClassifierSpec, ds: &CovarianceSet) -> f64 {
    let fit = spec.fit(ds, None).unwrap();
    let pred = fit.model.predict(ds).unwrap();
    let hits = pred.labels.iter().zip(ds.labels()).filter(|(p, t)| **p == *t).count();
    100.0 * hits as f64 / ds.len() as f64
}

fn ladder(suite: &mut Suite) {
    let low = low_fixture();
    let high = high_fixture();

    let ra_mdm = r#"{"align":[{"ra":{}}],"classifier":{"mdm":{}},"seed":1}"#;
    let (lo, hi) = (mean_of(&loso(ra_mdm, &low, 1)), mean_of(&loso(ra_mdm, &high, 1)));
    suite.check(
        "5a",
        "RA->MDM on synthetic fixtures",
        lo >= 90.0 && hi >= 55.0,
        format!("low distortion {lo:.2}% (>= 90), high distortion {hi:.2}% (>= 55)"),
    );

    let tslr = mean_of(&loso(r#"{"align":[{"ra":{}}],"classifier":{"tslr":{}},"seed":1}"#, &high, 1));
    let dcr_run = loso(r#"{"align":[{"ra":{}},{"dcr":{}}],"classifier":{"tslr":{}},"seed":1}"#, &high, 1);
    let dcr = mean_of(&dcr_run);
    suite.check(
        "5b-acc",
        "RA->DCR->TSLR vs RA->TSLR (high distortion)",
        dcr >= tslr - 1.0,
        format!("{dcr:.2}% vs {tslr:.2}% (needs >= {:.2}%)", tslr - 1.0),
    );
    let losses: Vec<(f64, f64)> = dcr_run
        .report
        .subjects
        .iter()
        .filter_map(|r| r.dcr_initial_loss.zip(r.dcr_final_loss))
        .collect();
    suite.check(
        "5b-loss",
        "DCR training loss decreases",
        losses.len() == dcr_run.report.subjects.len() && losses.iter().all(|(a, b)| b < a),
        format!(
            "per fold initial -> final: {}",
            losses.iter().map(|(a, b)| format!("{a:.4}->{b:.4}")).collect::<Vec<_>>().join(", ")
        ),
    );

    let t0 = Instant::now();
    let ra = ra_apply(&ra_fit(&high, RaScope::Subject, ReferenceMean::LogEuclidean).unwrap(), &high).unwrap();
    let rifu = rifu_fit(&ra, &RifuConfig::default()).unwrap();
    let after = rifu_apply(&rifu.model, &ra).unwrap();
    let (ws0, ws1) = (
        dataset_fisher_stats(&ra).unwrap().within_subject,
        dataset_fisher_stats(&after).unwrap().within_subject,
    );
    suite.check(
        "5c",
        "RA->RiFU reduces subject scatter W(S)",
        ws1 < ws0,
        format!("W(S) {ws0:.4} -> {ws1:.4} ({})", secs(t0.elapsed())),
    );

    let ra_low = ra_apply(&ra_fit(&low, RaScope::Subject, ReferenceMean::LogEuclidean).unwrap(), &low).unwrap();
    for (id, title, spec) in [
        ("5d-dc", "SPD-DCNet on low-distortion fixture", r#"{"dcnet":{}}"#),
        ("5d-rn", "RiFUNet on low-distortion fixture", r#"{"rifunet":{}}"#),
    ] {
        let t0 = Instant::now();
        let spec: ClassifierSpec = serde_json::from_str(spec).unwrap();
        let train_acc = training_accuracy(&spec, &ra_low);
        let cfg = RunConfig {
            align: vec![serde_json::from_str(r#"{"ra":{}}"#).unwrap()],
            seed: Some(1),
            ..RunConfig::new(Vec::new(), spec)
        };
        let run = run_loso(&cfg, &low, 1).unwrap();
        let elapsed = t0.elapsed();
        let acc = mean_of(&run);
        suite.check(
            id,
            title,
            train_acc >= 95.0 && acc >= 80.0 && elapsed < Duration::from_secs(600),
            format!("1000 steps: train {train_acc:.2}% (>= 95), LOSO {acc:.2}% (>= 80), {} (< 600s)", secs(elapsed)),
        );
    }
}

// --- 6 -------------------------------------------------------------------

fn table_fidelity(suite: &mut Suite) {
    let subjects = ["A01", "A02", "A03", "A04", "A05", "A06", "A07", "A08", "A09"];
    let columns: [(&str, [f64; 9], &str); 7] = [
        ("MDM", [61.81, 26.39, 72.92, 44.79, 42.71, 32.29, 59.38, 71.18, 60.42], "52.43 ± 15.66"),
        ("TSLR", [61.46, 29.51, 64.93, 44.44, 38.54, 42.36, 45.49, 68.06, 60.42], "50.58 ± 12.68"),
        ("TSA-LDA", [67.71, 28.82, 73.96, 47.92, 43.40, 37.50, 47.22, 72.57, 62.50], "53.51 ± 15.29"),
        ("CSP-LDA", [53.47, 24.31, 59.03, 35.76, 31.25, 25.00, 28.82, 70.83, 50.69], "42.13 ± 15.84"),
        ("CSP-LDA-Z", [58.68, 25.35, 65.97, 39.58, 27.78, 24.31, 52.78, 64.58, 51.39], "45.60 ± 15.81"),
        ("RiFUNet", [67.36, 27.08, 80.21, 44.79, 45.49, 41.67, 50.00, 76.74, 62.85], "55.13 ± 16.66"),
        ("SPD-DCNet", [68.40, 29.86, 82.64, 43.06, 44.79, 40.28, 54.51, 76.39, 65.62], "56.17 ± 16.99"),
    ];
    let cols: Vec<TableColumn> = columns
        .iter()
        .map(|(name, vals, _)| {
            TableColumn::new(*name, subjects.iter().zip(vals).map(|(s, v)| (s.to_string(), *v)).collect())
        })
        .collect();
    let (text, _) = emit_table(&cols).unwrap();
    let summary = text.lines().last().unwrap_or_default().to_string();
    let matched: Vec<&str> = columns.iter().filter(|(_, _, want)| summary.contains(want)).map(|c| c.0).collect();
    suite.check(
        "6a",
        "benchmark table reproduces printed Mean ± Std",
        matched.len() == columns.len() && summary.contains("52.43 ± 15.66"),
        format!("{}/{} columns match (MDM renders \"{}\")", matched.len(), columns.len(), cols[0].summary()),
    );
    suite.record(
        "6b",
        "preprocessing table RA/TSLR row",
        Status::Blocked,
        "per-subject accuracies for the \"52.89 ± 14.48\" row are not published, so there is nothing to render".into(),
    );
}

// --- 7 -------------------------------------------------------------------

fn determinism(suite: &mut Suite) {
    let ds = high_fixture();
    let cfg = r#"{"align":[{"ra":{}},{"dcr":{"train":{"steps":100}}}],
                  "classifier":{"dcnet":{"train":{"steps":100,"batch_size":64}}},"seed":11}"#;
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (k, jobs) in [1usize, 1, 4].into_iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        loso(cfg, &ds, jobs).write_to(&out).unwrap();
        bytes.push(fs::read(out.join("report.json")).unwrap());
    }
    let same = bytes.windows(2).all(|w| w[0] == w[1]);
    suite.check(
        "7",
        "bit-identical report.json",
        same,
        format!("RA->DCR->SPD-DCNet LOSO: two runs with 1 job and one with 4 jobs, {} bytes each, identical: {same}", bytes[0].len()),
    );
}

// --- 8 -------------------------------------------------------------------

fn real_data(suite: &mut Suite) {
    let Ok(path) = std::env::var(ENV_BCI_DATA) else {
        suite.record(
            "8",
            "BCI-IV 2a (optional)",
            Status::Skip,
            format!("set {ENV_BCI_DATA} to a .spdc file of trial covariances to run"),
        );
        return;
    };
    let ds = DataSource::from_path(&path).and_then(|s| s.load()).expect("dataset");
    let tslr = mean_of(&loso(r#"{"align":[{"ra":{}}],"classifier":{"tslr":{}}}"#, &ds, 1));
    let dcnet = mean_of(&loso(r#"{"align":[{"ra":{}}],"classifier":{"dcnet":{}}}"#, &ds, 1));
    suite.check(
        "8",
        "BCI-IV 2a (optional)",
        (tslr - 52.89).abs() <= 3.0 && (dcnet - 56.17).abs() <= 4.0,
        format!("RA->TSLR {tslr:.2}% (52.89 ± 3), RA->SPD-DCNet {dcnet:.2}% (56.17 ± 4)"),
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let t0 = Instant::now();
    let mut suite = Suite { outcomes: Vec::new() };
    // optional positional filters select groups by name, e.g. `-- manifold ladder`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let groups: [(&str, fn(&mut Suite)); 8] = [
        ("manifold", manifold_suite),
        ("gradient", gradient_suite),
        ("oracles", oracles),
        ("ra", ra_behaviour),
        ("table", table_fidelity),
        ("determinism", determinism),
        ("ladder", ladder),
        ("real-data", real_data),
    ];
    for (name, run) in groups {
        if filters.is_empty() || filters.iter().any(|f| f == name) {
            run(&mut suite);
        }
    }

    let unexpected: Vec<&Outcome> = suite
        .outcomes
        .iter()
        .filter(|o| matches!(o.status, Status::Fail | Status::Blocked) && !KNOWN_FAILURES.contains(&o.id))
        .collect();
    let passed = suite.outcomes.iter().filter(|o| o.status == Status::Pass).count();
    println!(
        "acceptance: {passed}/{} passed, known failures {:?}, {}",
        suite.outcomes.len(),
        KNOWN_FAILURES,
        secs(t0.elapsed())
    );
    if !unexpected.is_empty() {
        for o in &unexpected {
            eprintln!("unexpected failure: {} {}: {}", o.id, o.title, o.detail);
        }
        std::process::exit(1);
    }
}
