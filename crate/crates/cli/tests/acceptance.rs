//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use longadapt::adaptation::{coral_align, coral_transform, reweight, AdaptationConfig};
use longadapt::analysis::{
    auroc, fleiss_kappa, roc_points, trapezoid_area, wilcoxon_one_sided, PairedSample, WilcoxonMode, ZeroMethod,
};
use longadapt::classifiers::{train_classifier, ModelKind, ModelSpec, WeightedDataset};
use longadapt::dataset::Task;
use longadapt::preprocess::WindowConfig;
use longadapt::protocol::{
    assemble, audit_plan, plan_study, run_experiment, run_study, test_fingerprint, ExperimentPlan,
    ExperimentResult, Method, PreparedStudy, StudyConfig, StudyResults,
};
use longadapt::synthgen::{bayes_auroc, generate_study, PerTask, SynthConfig};

/// splitmix64
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let u = self.unit().max(1e-300);
        let v = self.unit();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn synth_study(cfg: &SynthConfig) -> PreparedStudy {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_study(cfg, dir.path()).unwrap();
    PreparedStudy::load(&manifest, &WindowConfig::default()).unwrap()
}

fn pair_oracle(s: &[f64], l: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn c1_metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng(1);
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    while sets < 500 {
        let n = 2 + rng.below(49) as usize;
        let ties = rng.below(2) == 0;
        let s: Vec<f64> = (0..n)
            .map(|_| if ties { rng.below(8) as f64 } else { rng.unit() })
            .collect();
        let l: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        if !(l.contains(&0) && l.contains(&1)) {
            continue;
        }
        sets += 1;
        let a = auroc(&s, &l).unwrap();
        worst = worst
            .max((a - pair_oracle(&s, &l)).abs())
            .max((trapezoid_area(&roc_points(&s, &l).unwrap()) - a).abs());
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-12 && t < Duration::from_secs(10),
        format!("500 sets, max deviation {worst:.1e}, {:.2}s", t.as_secs_f64()),
    )
}

fn enumerate_upper_tail(n: usize, w: f64) -> f64 {
    let hits = (0u32..(1 << n))
        .filter(|mask| (0..n).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).sum::<usize>() as f64 >= w)
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn c2_wilcoxon() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng(2);
    let mut worst: f64 = 0.0;
    let mut all_exact = true;
    for fixture in 0..60 {
        let n = 1 + fixture % 10;
        let mut mags: Vec<u64> = (1..=40).collect();
        for i in (1..mags.len()).rev() {
            mags.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let d: Vec<f64> = mags[..n]
            .iter()
            .map(|&m| if rng.below(2) == 0 { m as f64 } else { -(m as f64) })
            .collect();
        let out = wilcoxon_one_sided(&PairedSample::new("a", "b", d, vec![0.0; n]).unwrap(), ZeroMethod::Wilcox).unwrap();
        all_exact &= out.mode == WilcoxonMode::Exact;
        worst = worst.max((out.p_one_sided - enumerate_upper_tail(n, out.w_plus)).abs());
    }
    let worked = wilcoxon_one_sided(
        &PairedSample::new("a", "b", vec![1.0, 2.0, 3.0, -1.0, 4.0, 5.0], vec![0.0; 6]).unwrap(),
        ZeroMethod::Wilcox,
    )
    .unwrap();
    let t = start.elapsed();
    outcome(
        all_exact && worst <= 1e-12 && worked.w_plus == 19.5 && t < Duration::from_secs(10),
        format!(
            "60 fixtures, max |p - enumeration| {worst:.1e}; worked W+ = {}; {:.2}s",
            worked.w_plus,
            t.as_secs_f64()
        ),
    )
}

fn c3_reweighting() -> Outcome {
    let mut rng = Rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let nt = 1 + rng.below(300) as usize;
        let ns = 1 + rng.below(300) as usize;
        let alpha = rng.unit();
        let lt: Vec<f64> = (0..nt).map(|_| rng.unit() * 3.0).collect();
        let ls: Vec<f64> = (0..ns).map(|_| rng.unit() * 3.0).collect();
        let (wt, ws) = reweight(nt, ns, alpha).unwrap();
        let weighted = (lt.iter().map(|l| wt * l).sum::<f64>() + ls.iter().map(|l| ws * l).sum::<f64>())
            / (nt + ns) as f64;
        let mean_t = lt.iter().sum::<f64>() / nt as f64;
        let mean_s = ls.iter().sum::<f64>() / ns as f64;
        worst = worst.max((weighted - (alpha * mean_t + (1.0 - alpha) * mean_s)).abs());
    }
    outcome(worst <= 1e-12, format!("1000 draws, max deviation {worst:.1e}"))
}

fn c4_endpoints() -> Outcome {
    let study = synth_study(&SynthConfig {
        session_seconds: 60.0,
        seed: 4,
        ..SynthConfig::default()
    });
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for kind in [ModelKind::Gbdt, ModelKind::Logreg] {
        let cfg = StudyConfig {
            methods: vec![Method::PersonalizedSda],
            kinds: vec![kind],
            ..StudyConfig::default()
        };
        let spec = cfg.spec_for(kind);
        for (_, plan) in plan_study(&study.layout, &cfg).unwrap() {
            for (alpha, baseline) in [(1.0, Method::Individualized), (0.0, Method::Generic)] {
                let forced = AdaptationConfig {
                    alpha_grid: vec![alpha],
                    ..AdaptationConfig::default()
                };
                let base = ExperimentPlan {
                    method: baseline,
                    ..plan.clone()
                };
                let p = run_experiment(&plan, &study, &spec, &forced, 0);
                let b = run_experiment(&base, &study, &spec, &forced, 0);
                match (p, b) {
                    (Ok(p), Ok(b)) => {
                        compared += 1;
                        let same = p.scores.len() == b.scores.len()
                            && p.scores.iter().zip(&b.scores).all(|(x, y)| x.to_bits() == y.to_bits());
                        if !same {
                            mismatches.push(format!("{} alpha={alpha}", plan.key()));
                        }
                    }
                    (Err(_), Err(_)) => {}
                    (p, b) => mismatches.push(format!("{} alpha={alpha}: {:?} vs {:?}", plan.key(), p.err(), b.err())),
                }
            }
        }
    }
    outcome(
        mismatches.is_empty() && compared > 0,
        format!("{compared} cell pairs bit-identical; mismatches {mismatches:?}"),
    )
}

fn c5_duplication() -> Outcome {
    let mut rng = Rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = 20 + rng.below(20) as usize;
        let d = 1 + rng.below(4) as usize;
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| (0..d).map(|_| rng.normal() + f64::from(y)).collect())
            .collect();
        let counts: Vec<usize> = (0..n).map(|_| 1 + rng.below(4) as usize).collect();
        let weighted = WeightedDataset::new(&rows, labels.clone(), counts.iter().map(|&c| c as f64).collect()).unwrap();
        let (mut dr, mut dl) = (Vec::new(), Vec::new());
        for i in 0..n {
            for _ in 0..counts[i] {
                dr.push(rows[i].clone());
                dl.push(labels[i]);
            }
        }
        let dup = WeightedDataset::unweighted(&dr, dl).unwrap();
        let probes: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| 2.0 * rng.normal()).collect()).collect();
        for kind in [ModelKind::Gbdt, ModelKind::Logreg] {
            let spec = ModelSpec::new(kind, 0);
            let a = train_classifier(&spec, &weighted).unwrap();
            let b = train_classifier(&spec, &dup).unwrap();
            for p in &probes {
                worst = worst.max((a.predict_score(p).unwrap() - b.predict_score(p).unwrap()).abs());
            }
        }
    }
    outcome(worst <= 1e-9, format!("20 fixtures, gbdt and logreg, max score gap {worst:.1e}"))
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect()
}

fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn correlated_rows(rng: &mut Rng, n: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.normal()).collect();
            (0..z.len()).map(|j| z[j] + 0.5 * z[(j + 1) % z.len()]).collect()
        })
        .collect()
}

fn c6_coral() -> Outcome {
    let mut rng = Rng(6);
    let source = correlated_rows(&mut rng, 500, &[1.0, 2.0, 0.5, 1.5, 0.8]);
    let target = correlated_rows(&mut rng, 500, &[0.4, 1.0, 3.0, 0.7, 1.2]);
    let ct = covariance(&target);
    // covariance of the aligned output in the small-ridge limit
    let small_ridge = 1e-8;
    let aligned = coral_align(&source, &target, small_ridge).unwrap();
    let err_small = frobenius(&covariance(&aligned), &ct);
    // ridge-regularized covariances at the default ridge: Aᵀ(C_s + rI)A = C_t + rI
    let r = AdaptationConfig::default().coral_ridge;
    let a = coral_transform(&source, &target, r).unwrap();
    let cs = covariance(&source);
    let d = 5;
    let mut lhs = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let c = cs[k][l] + if k == l { r } else { 0.0 };
                    lhs[i][j] += a[(k, i)] * c * a[(l, j)];
                }
            }
        }
    }
    let rhs: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| ct[i][j] + if i == j { r } else { 0.0 }).collect())
        .collect();
    let err_ridge = frobenius(&lhs, &rhs);
    let same = coral_align(&source, &source, r).unwrap();
    let err_identity = same
        .iter()
        .flatten()
        .zip(source.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    outcome(
        err_small <= 1e-6 && err_ridge <= 1e-6 && err_identity <= 1e-8,
        format!(
            "Frobenius {err_small:.1e} (ridge {small_ridge:e}), {err_ridge:.1e} (ridge {r}); identity max gap {err_identity:.1e}"
        ),
    )
}

fn wave_of(results: &StudyResults, method: Method, participant: Option<&str>) -> f64 {
    let rs: Vec<&ExperimentResult> = results
        .successful()
        .filter(|r| r.plan.method == method && participant.is_none_or(|p| r.plan.test_participant == p))
        .collect();
    let n: usize = rs.iter().map(|r| r.n_test_instances).sum();
    rs.iter().map(|r| r.auroc * r.n_test_instances as f64).sum::<f64>() / n as f64
}

fn cell_aurocs(results: &StudyResults, method: Method) -> BTreeMap<(String, u32), f64> {
    results
        .successful()
        .filter(|r| r.plan.method == method)
        .map(|r| ((r.plan.test_participant.clone(), r.plan.test_session), r.auroc))
        .collect()
}

fn one_sided_p(a: &BTreeMap<(String, u32), f64>, b: &BTreeMap<(String, u32), f64>) -> f64 {
    let keys: Vec<_> = a.keys().filter(|k| b.contains_key(*k)).cloned().collect();
    let va: Vec<f64> = keys.iter().map(|k| a[k]).collect();
    let vb: Vec<f64> = keys.iter().map(|k| b[k]).collect();
    PairedSample::new("a", "b", va, vb)
        .ok()
        .and_then(|s| wilcoxon_one_sided(&s, ZeroMethod::Wilcox).ok())
        .map_or(1.0, |o| o.p_one_sided)
}

fn personalization_config(seed: u64, concept_shift: f64) -> SynthConfig {
    SynthConfig {
        session_seconds: 120.0,
        class_separation: PerTask {
            arousal: 0.8,
            valence: 0.8,
        },
        participant_shift: 0.5,
        concept_shift,
        label_persistence: 0.95,
        dropout_rate: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn logreg_study(methods: Vec<Method>, seed: u64) -> StudyConfig {
    StudyConfig {
        methods,
        kinds: vec![ModelKind::Logreg],
        tasks: vec![Task::Arousal],
        seed,
        ..StudyConfig::default()
    }
}

fn c7_personalization() -> Outcome {
    let start = Instant::now();
    let seeds = 10;
    let methods = [Method::Individualized, Method::Generic, Method::PersonalizedSda];
    let mut per_participant: BTreeMap<(String, Method), f64> = BTreeMap::new();
    let mut overall: BTreeMap<Method, f64> = BTreeMap::new();
    let mut significant = 0;
    let mut alternating = Vec::new();
    for seed in 0..seeds {
        let study = synth_study(&personalization_config(seed, 0.6));
        let res = run_study(&study, &logreg_study(methods.to_vec(), seed)).unwrap();
        for m in methods {
            *overall.entry(m).or_default() += wave_of(&res, m, None) / seeds as f64;
            for (pid, _) in &study.layout.participants {
                *per_participant.entry((pid.clone(), m)).or_default() += wave_of(&res, m, Some(pid)) / seeds as f64;
            }
        }
        let (ind, gen, per) = (
            cell_aurocs(&res, Method::Individualized),
            cell_aurocs(&res, Method::Generic),
            cell_aurocs(&res, Method::PersonalizedSda),
        );
        let ind_best = ind.iter().filter(|(k, v)| gen.get(*k).is_some_and(|g| *v > g)).count();
        alternating.push(format!("{ind_best}/{}", ind.len()));
        if one_sided_p(&per, &gen) < 0.05 || one_sided_p(&per, &ind) < 0.05 {
            significant += 1;
        }
    }
    let mut worst_margin = f64::INFINITY;
    let participants: Vec<String> = per_participant.keys().map(|(p, _)| p.clone()).collect();
    for p in &participants {
        let get = |m| per_participant[&(p.clone(), m)];
        let best = get(Method::Individualized).max(get(Method::Generic));
        worst_margin = worst_margin.min(get(Method::PersonalizedSda) - best);
    }
    let per = overall[&Method::PersonalizedSda];
    let (ind, gen) = (overall[&Method::Individualized], overall[&Method::Generic]);
    let gain = (per - ind).max(per - gen);
    let t = start.elapsed();
    outcome(
        worst_margin >= -0.01 && gain >= 0.02 && significant >= 8 && t < Duration::from_secs(600),
        format!(
            "wAVE PER {per:.3} IND {ind:.3} GEN {gen:.3}; worst per-participant PER - best {worst_margin:+.3}; \
             Wilcoxon p<0.05 in {significant}/{seeds} seeds; IND best in {} sessions; {:.0}s",
            alternating.join(","),
            t.as_secs_f64()
        ),
    )
}

fn c8_uda_vs_sda() -> Outcome {
    let seeds = 3;
    let (mut sda, mut uda) = (0.0, 0.0);
    for seed in 0..seeds {
        let study = synth_study(&personalization_config(seed, 1.0));
        let res = run_study(
            &study,
            &logreg_study(vec![Method::PersonalizedSda, Method::PersonalizedUda], seed),
        )
        .unwrap();
        sda += wave_of(&res, Method::PersonalizedSda, None) / seeds as f64;
        uda += wave_of(&res, Method::PersonalizedUda, None) / seeds as f64;
    }
    outcome(
        sda - uda >= 0.05,
        format!("concept-shifted study, {seeds} seeds: s-DA {sda:.3} u-DA {uda:.3}"),
    )
}

fn c9_audit() -> Outcome {
    let study = synth_study(&SynthConfig {
        session_seconds: 60.0,
        seed: 9,
        ..SynthConfig::default()
    });
    let cfg = StudyConfig {
        kinds: ModelKind::ALL.to_vec(),
        ..StudyConfig::default()
    };
    let plans = plan_study(&study.layout, &cfg).unwrap();
    let mut per_combo: BTreeMap<String, usize> = BTreeMap::new();
    let mut prints: BTreeMap<(usize, u32, ModelKind, Task), Vec<u64>> = BTreeMap::new();
    let mut leaks = 0;
    for (round, plan) in &plans {
        *per_combo
            .entry(format!("{}/{}/{}", plan.method, plan.kind, plan.task))
            .or_default() += 1;
        let data = assemble(plan, &study);
        let late = data
            .target
            .iter()
            .filter(|w| w.participant_id != plan.test_participant || w.session_index >= plan.test_session)
            .count()
            + data.source.iter().filter(|w| w.participant_id == plan.test_participant).count();
        if late > 0 || audit_plan(plan, &data).is_err() {
            leaks += 1;
        }
        prints
            .entry((*round, plan.test_session, plan.kind, plan.task))
            .or_default()
            .push(test_fingerprint(&data.test, plan.task));
    }
    let shapes_ok = per_combo.values().all(|&n| n == 15);
    let shared = prints.values().all(|v| v.len() == Method::ALL.len() && v.iter().all(|f| *f == v[0]));
    outcome(
        leaks == 0 && shapes_ok && shared,
        format!(
            "{} plans over {} combinations ({} cells each); leaking plans {leaks}; test sets shared: {shared}",
            plans.len(),
            per_combo.len(),
            per_combo.values().next().unwrap_or(&0)
        ),
    )
}

fn c10_bayes_bound() -> Outcome {
    let start = Instant::now();
    // Φ(sep·√6/√2) = 0.90 for six-frame windows
    let sep = 2f64.sqrt() * 1.281_551_565_545 / 6f64.sqrt();
    let mut worst = f64::NEG_INFINITY;
    let mut min_test = usize::MAX;
    for seed in 0..20 {
        let cfg = SynthConfig {
            n_participants: 1,
            sessions_per_participant: vec![2],
            session_seconds: 5010.0,
            class_separation: PerTask {
                arousal: sep,
                valence: sep,
            },
            session_drift: 0.0,
            dropout_rate: 0.0,
            seed,
            ..SynthConfig::default()
        };
        let bound = bayes_auroc(&cfg, 0, Task::Arousal, 6).unwrap();
        let study = synth_study(&cfg);
        let sc = StudyConfig {
            methods: vec![Method::Individualized],
            kinds: vec![ModelKind::Gbdt],
            tasks: vec![Task::Arousal],
            seed,
            ..StudyConfig::default()
        };
        let res = run_study(&study, &sc).unwrap();
        for r in res.successful() {
            worst = worst.max(r.auroc - bound);
            min_test = min_test.min(r.n_test_instances);
        }
    }
    outcome(
        worst <= 0.02 && min_test >= 5000,
        format!(
            "20 seeds, bound {:.3}, max AUROC - bound {worst:+.4}, smallest test set {min_test}, {:.0}s",
            bayes_auroc(&SynthConfig { class_separation: PerTask { arousal: sep, valence: sep }, ..SynthConfig::default() }, 0, Task::Arousal, 6).unwrap(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c11_kappa() -> Outcome {
    let zero = fleiss_kappa(&[vec![3, 0], vec![2, 1], vec![1, 2]]).unwrap();
    let perfect = [
        fleiss_kappa(&[vec![2, 0], vec![0, 2]]).unwrap(),
        fleiss_kappa(&[vec![0, 5, 0], vec![5, 0, 0], vec![0, 0, 5]]).unwrap(),
        fleiss_kappa(&[vec![3, 0], vec![3, 0], vec![0, 3]]).unwrap(),
    ];
    outcome(
        zero == 0.0 && perfect.iter().all(|k| *k == 1.0),
        format!("worked example {zero}, perfect agreement {perfect:?}"),
    )
}

fn run_cli(args: &[&str], threads: Option<&str>) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_longadapt"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("LONGADAPT_THREADS", t),
        None => cmd.env_remove("LONGADAPT_THREADS"),
    };
    let out = cmd.output().map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if out.status.success() {
        Ok(stdout)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline(root: &Path, threads: Option<&str>) -> Result<(BTreeMap<PathBuf, Vec<u8>>, String), String> {
    std::fs::write(
        root.join("synth.json"),
        r#"{"n_participants": 3, "sessions_per_participant": [3, 4, 2], "session_seconds": 90, "seed": 12}"#,
    )
    .unwrap();
    std::fs::write(
        root.join("run.json"),
        r#"{"manifest": "study/manifest.json", "windows": "cache/windows.csv", "output_dir": "out",
            "kinds": ["logreg", "gbdt"], "tasks": ["arousal"], "seed": 5,
            "adaptation": {"alpha_grid": [0.0, 0.5, 1.0]}}"#,
    )
    .unwrap();
    let p = |x: &str| root.join(x).to_string_lossy().into_owned();
    let mut stdout = String::new();
    run_cli(&["synth", "--config", &p("synth.json"), "--out", &p("study")], threads)?;
    run_cli(&["preprocess", "--manifest", &p("study/manifest.json"), "--out", &p("cache")], threads)?;
    stdout += &run_cli(&["evaluate", "--config", &p("run.json")], threads)?;
    stdout += &run_cli(
        &["stats", "--results", &p("out/results.csv"), "--compare", "PER:GEN", "PER:IND", "IND:GEN", "--out", &p("out/stats.json")],
        threads,
    )?;
    run_cli(&["report", "--results", &p("out")], threads)?;
    Ok((tree(root), stdout))
}

fn c12_determinism() -> Outcome {
    let runs: Vec<_> = [None, Some("1"), Some("3")]
        .into_iter()
        .map(|t| {
            let dir = tempfile::tempdir().unwrap();
            (pipeline(dir.path(), t), dir)
        })
        .collect();
    let mut errors = Vec::new();
    let mut results = Vec::new();
    for (r, _) in &runs {
        match r {
            Ok(v) => results.push(v),
            Err(e) => errors.push(e.clone()),
        }
    }
    if !errors.is_empty() {
        return outcome(false, format!("pipeline failed: {errors:?}"));
    }
    let (first, first_out) = results[0];
    let same = results.iter().all(|(t, o)| t == first && o == first_out);
    outcome(
        same,
        format!(
            "{} output files, identical across runs with LONGADAPT_THREADS unset/1/3: {same}",
            first.len()
        ),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("metric oracle equivalence", c1_metric_oracle),
        ("Wilcoxon correctness", c2_wilcoxon),
        ("reweighting algebra", c3_reweighting),
        ("endpoint equivalence", c4_endpoints),
        ("weight-duplication equivalence", c5_duplication),
        ("CORAL covariance matching", c6_coral),
        ("personalization direction", c7_personalization),
        ("u-DA vs s-DA direction", c8_uda_vs_sda),
        ("protocol temporal audit", c9_audit),
        ("Bayes-bound sanity", c10_bayes_bound),
        ("Fleiss' kappa", c11_kappa),
        ("end-to-end determinism", c12_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = run();
        println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
