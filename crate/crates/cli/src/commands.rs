use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use spinesim_core::genealogy::{
    compute_m, dump_tree, simulate_tree_p, simulate_tree_qtilde, MarkedTree,
};
use spinesim_core::model::{validate_model, Field, FiniteChainMotion, KilledDiffusion1D, StateSpace};
use spinesim_core::spectral::{
    iu_convergence_profile, llogl_criterion, principal_eigentriple, spectral_gap, validate_eigentriple,
    EigenDiagnostics, Tiltable, DEFAULT_RK4_STEP, INVARIANCE_TOL, NORMALIZATION_TOL,
};
use spinesim_core::verify::{
    change_of_measure_test, dichotomy_contrast, dichotomy_experiment, eta_mean_test, laplace_functional_test,
    many_to_one_test, martingale_mean_test, spine_decomposition_test, spine_dynamics_test, with_rerun,
    DichotomyReport, EstimatorReport, Harness, StartPoint, SuiteOutcome, TreeFunctional,
};
use spinesim_core::{Eigentriple, Error, ModelSpec};

use crate::config::{Measure, RunConfig, Suite, DEFAULT_DICHOTOMY_GRID, DEFAULT_DICHOTOMY_REPLICAS, DEFAULT_T_GRID};
use crate::CliError;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

fn write(dir: &Path, name: String, body: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_json(cfg: &RunConfig, command: &str, value: &Value) -> Result<PathBuf, CliError> {
    let body = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    write(&cfg.out_dir(), format!("{command}-{}.json", cfg.hash()), &body)
}

fn provenance(cfg: &RunConfig, command: &str) -> Value {
    json!({ "command": command, "config_hash": cfg.hash(), "seed": cfg.seed })
}

fn harness(cfg: &RunConfig) -> Harness {
    let mut h = Harness::new(cfg.seed, cfg.workers());
    if let Some(n) = cfg.n_max {
        h.n_max = n;
    }
    h
}

/// Model checks, eigentriple and the configured override.
fn prepare(cfg: &RunConfig, spec: &ModelSpec) -> Result<Eigentriple, CliError> {
    let report = validate_model(spec, None);
    if !report.passed() {
        let msg: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(CliError::Config(format!("{}: {}", spec.label(), msg.join(", "))));
    }
    let eig = principal_eigentriple(spec)?;
    Ok(match &cfg.eigentriple_override {
        Some(o) => eig.with_phi_tilde_scaled(o.phi_tilde_scale),
        None => eig,
    })
}

fn table_of(spec: &ModelSpec, f: &Field) -> Value {
    match spec {
        ModelSpec::Chain(m) => json!((0..m.motion.len()).map(|s| s.eval(f)).collect::<Vec<_>>()),
        ModelSpec::Diffusion(m) => {
            let (a, b) = (m.motion.a, m.motion.b);
            let grid: Vec<f64> = (0..=100).map(|i| a + (b - a) * i as f64 / 100.0).collect();
            json!({ "x": grid, "value": grid.iter().map(|x| x.eval(f)).collect::<Vec<_>>() })
        }
    }
}

fn eigen_reports(diag: &EigenDiagnostics) -> Vec<EstimatorReport> {
    let mut out = vec![EstimatorReport::tolerance(
        "eigentriple normalization",
        diag.normalization_error,
        0.0,
        NORMALIZATION_TOL,
        1,
    )];
    for (t, r) in &diag.invariance {
        out.push(EstimatorReport::tolerance(format!("right invariance t={t}"), *r, 0.0, INVARIANCE_TOL, 1));
    }
    for (t, r) in &diag.left_invariance {
        out.push(EstimatorReport::tolerance(format!("left invariance t={t}"), *r, 0.0, INVARIANCE_TOL, 1));
    }
    out
}

pub fn cmd_spectral(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut reports = Vec::new();
    let mut passed = true;
    for spec in cfg.models()? {
        let eig = prepare(cfg, &spec)?;
        let diag = validate_eigentriple(&spec, &eig);
        passed &= diag.passed();
        let mut r = json!({
            "label": spec.label(),
            "backend": spec.backend(),
            "lambda1": eig.lambda1,
            "phi": table_of(&spec, &eig.phi),
            "phi_tilde": table_of(&spec, &eig.phi_tilde),
            "phi_sq_m": eig.phi_sq_m,
            "criterion": llogl_criterion(&spec, &eig),
            "diagnostics": diag,
            "validation": validate_model(&spec, Some(&eig)),
        });
        if let ModelSpec::Chain(m) = &spec {
            r["spectral_gap"] = json!(spectral_gap(m));
            if diag.passed() {
                r["iu_profile"] = json!(iu_convergence_profile(m, &eig, &[0.5, 1.0, 2.0, 4.0])?);
            }
        }
        reports.push(r);
    }
    let mut doc = provenance(cfg, "spectral");
    doc["models"] = Value::Array(reports);
    doc["passed"] = json!(passed);
    Ok(Outcome {
        passed,
        files: vec![write_json(cfg, "spectral", &doc)?],
    })
}

#[derive(Serialize)]
struct TreeSummary {
    replica: u64,
    nodes: usize,
    alive: usize,
    overflowed: bool,
    m: Option<f64>,
}

fn summarize<S: StateSpace>(i: u64, tree: &MarkedTree<S>, eig: &Eigentriple) -> TreeSummary {
    TreeSummary {
        replica: i,
        nodes: tree.len(),
        alive: tree.alive_count(),
        overflowed: tree.overflowed,
        m: compute_m(tree, eig).m,
    }
}

/// Simulates `replicas` trees (default 1) and writes their dumps.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.single_model()?;
    let eig = prepare(cfg, &spec)?;
    let h = harness(cfg);
    let n = cfg.replicas.unwrap_or(1);
    let t = cfg.horizon();
    let x = cfg.start_for(&spec);
    let measure = cfg.measure.unwrap_or_default();
    let results: Vec<(TreeSummary, String)> = match &spec {
        ModelSpec::Chain(m) => {
            let xs = x.state(m.motion.len())?;
            let tilted = FiniteChainMotion::tilt(m, &eig)?;
            h.map(n, |i| {
                let key = h.streams.replica_key(i);
                let tree = match measure {
                    Measure::P => simulate_tree_p(m, xs, t, key, h.n_max),
                    Measure::Qtilde => simulate_tree_qtilde(m, &tilted, xs, t, key, h.n_max).0,
                };
                (summarize(i, &tree, &eig), dump_tree(&tree))
            })
        }
        ModelSpec::Diffusion(m) => {
            let xp = x.point();
            let tilted = KilledDiffusion1D::tilt(m, &eig)?;
            h.map(n, |i| {
                let key = h.streams.replica_key(i);
                let tree = match measure {
                    Measure::P => simulate_tree_p(m, xp, t, key, h.n_max),
                    Measure::Qtilde => simulate_tree_qtilde(m, &tilted, xp, t, key, h.n_max).0,
                };
                (summarize(i, &tree, &eig), dump_tree(&tree))
            })
        }
    };
    let mut dump = String::new();
    for (s, d) in &results {
        dump.push_str(&format!("# replica {}\n", s.replica));
        dump.push_str(d);
    }
    let mut doc = provenance(cfg, "simulate");
    doc["label"] = json!(spec.label());
    doc["measure"] = json!(measure);
    doc["horizon"] = json!(t);
    doc["trees"] = json!(results.iter().map(|r| &r.0).collect::<Vec<_>>());
    let tsv = write(&cfg.out_dir(), format!("simulate-{}.tsv", cfg.hash()), &dump)?;
    Ok(Outcome {
        passed: true,
        files: vec![write_json(cfg, "simulate", &doc)?, tsv],
    })
}

fn failure_report(suite: &str, e: Error) -> Vec<EstimatorReport> {
    vec![EstimatorReport::tolerance(format!("{suite}: {e}"), f64::NAN, 0.0, 0.0, 0)]
}

fn or_failure(suite: &str, r: spinesim_core::Result<Vec<EstimatorReport>>) -> Vec<EstimatorReport> {
    r.unwrap_or_else(|e| failure_report(suite, e))
}

pub fn com_functionals() -> Vec<TreeFunctional> {
    vec![
        TreeFunctional::One,
        TreeFunctional::CappedPopulation { cap: 50 },
        TreeFunctional::PopulationAtLeast { k: 3 },
        TreeFunctional::CappedPhiMass {
            slots: vec![0],
            cap: 50.0,
        },
    ]
}

/// Runs one suite under the re-run policy.
pub fn run_suite(
    suite: Suite,
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    cfg: &RunConfig,
) -> Option<SuiteOutcome> {
    let x: StartPoint = cfg.start_for(spec);
    let n = cfg.replicas();
    let t = cfg.horizon();
    let grid = cfg.t_grid(&DEFAULT_T_GRID);
    let name = suite.name();
    let out = match suite {
        Suite::ManyToOne => with_rerun(name, h, |h| {
            let mut fs = vec![eig.phi.clone(), Field::Constant(1.0)];
            if let ModelSpec::Chain(m) = spec {
                let mut ind = vec![0.0; m.motion.len()];
                ind[0] = 1.0;
                fs.insert(1, Field::Table(ind));
            }
            or_failure(name, fs.iter().map(|f| many_to_one_test(h, spec, f, x, t, n)).collect())
        }),
        Suite::Martingale => with_rerun(name, h, |h| or_failure(name, martingale_mean_test(h, spec, eig, x, &grid, n))),
        Suite::Eta => with_rerun(name, h, |h| {
            let mut out = Vec::new();
            for &tt in &grid {
                match eta_mean_test(&h.fork(&format!("T={tt}")), spec, eig, x, tt, n) {
                    Ok(r) => out.extend(r),
                    Err(e) => return failure_report(name, e),
                }
            }
            out
        }),
        Suite::Spine => with_rerun(name, h, |h| or_failure(name, spine_dynamics_test(h, spec, eig, x, t, n))),
        Suite::Decomp => with_rerun(name, h, |h| {
            let (r, s) = (cfg.spines.unwrap_or(200), cfg.resamples.unwrap_or(200));
            or_failure(name, spine_decomposition_test(h, spec, eig, x, t, r, s).map(|r| vec![r]))
        }),
        Suite::Com => with_rerun(name, h, |h| {
            or_failure(name, change_of_measure_test(h, spec, eig, x, t, n, &com_functionals()))
        }),
        Suite::Laplace => {
            spec.as_chain()?;
            with_rerun(name, h, |h| {
                let len = spec.as_chain().map_or(0, |m| m.motion.len());
                let step = cfg.rk4_step.unwrap_or(DEFAULT_RK4_STEP);
                let mut out = Vec::new();
                for f in [vec![0.0; len], vec![0.5; len]] {
                    match laplace_functional_test(h, spec, x, &f, t, n, step) {
                        Ok(r) => out.extend(r),
                        Err(e) => return failure_report(name, e),
                    }
                }
                out
            })
        }
        Suite::All => unreachable!("expanded by the caller"),
    };
    Some(out)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.single_model()?;
    let eig = prepare(cfg, &spec)?;
    if let (ModelSpec::Chain(m), Some(StartPoint::State(_)) | None) = (&spec, cfg.start) {
        cfg.start_for(&spec).state(m.motion.len())?;
    }
    let suite = cfg.suite.unwrap_or(Suite::All);
    if suite == Suite::Laplace && spec.as_chain().is_none() {
        return Err(Error::UnsupportedBackend {
            op: "laplace",
            backend: spec.backend(),
        }
        .into());
    }
    let diag = validate_eigentriple(&spec, &eig);
    let mut outcomes = vec![SuiteOutcome {
        suite: "eigentriple".into(),
        rerun: false,
        reports: eigen_reports(&diag),
    }];
    if diag.passed() {
        let list: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
        let h = harness(cfg);
        outcomes.extend(list.into_iter().filter_map(|s| run_suite(s, &h, &spec, &eig, cfg)));
    }
    let passed = outcomes.iter().all(SuiteOutcome::passed);
    let mut doc = provenance(cfg, "verify");
    doc["label"] = json!(spec.label());
    doc["suites"] = json!(outcomes);
    doc["passed"] = json!(passed);
    Ok(Outcome {
        passed,
        files: vec![write_json(cfg, "verify", &doc)?],
    })
}

fn dichotomy_csv(reports: &[DichotomyReport]) -> String {
    let mut out = String::from("model,T,mean,median,frac_below_eps,overflow,criterion_finite\n");
    for r in reports {
        for line in r.to_csv().lines().skip(1) {
            out.push_str(&format!("{},{line}\n", r.label));
        }
    }
    out
}

/// One report per model; with a finite-criterion and a divergent-criterion
/// model the contrast thresholds decide the exit status.
pub fn cmd_dichotomy(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let specs = cfg.models()?;
    let grid = cfg.t_grid(&DEFAULT_DICHOTOMY_GRID);
    let n = cfg.replicas.unwrap_or(DEFAULT_DICHOTOMY_REPLICAS);
    let [t_lo, t_hi] = cfg.contrast_times.unwrap_or([2.0, 8.0]);
    let h = harness(cfg);
    let mut prepared = Vec::new();
    for spec in &specs {
        prepared.push(prepare(cfg, spec)?);
    }
    let mut reports = Vec::new();
    for (spec, eig) in specs.iter().zip(&prepared) {
        let x = cfg.start_for(spec);
        reports.push(dichotomy_experiment(&h.fork(spec.label()), spec, eig, x, &grid, n)?);
    }
    let finite = reports.iter().find(|r| r.criterion.is_finite());
    let divergent = reports.iter().find(|r| !r.criterion.is_finite());
    let contrast = match (finite, divergent) {
        (Some(f), Some(d)) if reports.len() >= 2 => Some(dichotomy_contrast(f.clone(), d.clone(), t_lo, t_hi)?),
        _ => None,
    };
    let passed = contrast.as_ref().is_none_or(|c| c.passed());
    let mut doc = provenance(cfg, "dichotomy");
    doc["replicas"] = json!(n);
    doc["reports"] = json!(reports);
    if let Some(c) = &contrast {
        doc["contrast"] = json!(c.checks);
    }
    doc["passed"] = json!(passed);
    let json_path = write_json(cfg, "dichotomy", &doc)?;
    let csv = write(&cfg.out_dir(), format!("dichotomy-{}.csv", cfg.hash()), &dichotomy_csv(&reports))?;
    Ok(Outcome {
        passed,
        files: vec![json_path, csv],
    })
}
