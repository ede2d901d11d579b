//! Acceptance checks, one line per criterion. Run with
//! `cargo test --test acceptance`; exits nonzero if any hard criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use leaky_dlms::analysis::{
    detect_divergence, leaky_fixed_point, settling_index, steady_state_msd, steady_state_of,
    step_size_upper_bound, DEFAULT_DIVERGENCE_THRESHOLD,
};
use leaky_dlms::cli::config::{ConfigFile, SourceKindName};
use leaky_dlms::experiment::{
    denoise_speech, run_ensemble, sweep_leakage, sweep_step_size, ExperimentConfig, SweepPoint,
    SweepValue,
};
use leaky_dlms::filters::{init_state, step, AlgorithmSpec, NodeState, Strategy};
use leaky_dlms::network::{CombinationWeights, Topology};
use leaky_dlms::signal::{gaussian_source, NoiseSpec, SampleFrame, SourceSpec, UnknownSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LABELS: [&str; 4] = ["atc_dlms", "cta_dlms", "atc_leaky", "cta_leaky"];

/// Levels quoted for the four algorithms, in `LABELS` order.
const QUOTED_LEVELS_DB: [f64; 4] = [-16.0, -12.0, -18.0, -14.0];

struct Outcome {
    pass: bool,
    soft: bool,
    detail: String,
}

impl Outcome {
    fn hard(pass: bool, detail: String) -> Self {
        Self {
            pass,
            soft: false,
            detail,
        }
    }
}

fn report(id: &str, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if elapsed > limit {
        out.pass = false;
        out.detail
            .push_str(&format!("; exceeded {:.0?} budget", limit));
    }
    let status = match (out.pass, out.soft) {
        (true, _) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (soft)",
    };
    println!("[{status}] {id} {name}: {} ({:.2?})", out.detail, elapsed);
    out.pass || out.soft
}

fn example_one() -> ExperimentConfig {
    ConfigFile::default()
        .to_experiment(Path::new("."))
        .unwrap()
        .0
}

fn steady(points: &[SweepPoint], label: &str) -> Vec<Option<f64>> {
    points
        .iter()
        .map(|p| match p.get(label) {
            Some(SweepValue::SteadyState(v)) => Some(v),
            _ => None,
        })
        .collect()
}

// Criterion 1 ---------------------------------------------------------------

fn random_frame(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SampleFrame {
    let u: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    SampleFrame::new(u, d, &UnknownSystem::new(vec![0.0; m]).unwrap())
}

fn random_topology(rng: &mut ChaCha8Rng, n: usize) -> Topology {
    match n {
        1 => Topology::from_neighbors(vec![vec![0]]).unwrap(),
        3 => Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap(),
        _ => Topology::random_geometric(n, 0.35, rng.gen()).unwrap(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain diffusion LMS written directly from the recursions.
fn reference_dlms(
    strategy: Strategy,
    w: &[Vec<f64>],
    frame: &SampleFrame,
    mu: f64,
    topo: &Topology,
    weights: &CombinationWeights,
) -> Vec<Vec<f64>> {
    let n = w.len();
    let m = w[0].len();
    let adapt = |k: usize, base: &[f64]| -> Vec<f64> {
        let mut out = base.to_vec();
        for &l in topo.neighbors(k) {
            let err = frame.d(l) - dot(frame.u(l), base);
            for (o, u) in out.iter_mut().zip(frame.u(l)) {
                *o += mu * weights.c(l, k) * u * err;
            }
        }
        out
    };
    let combine = |k: usize, src: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for &l in topo.neighbors(k) {
            for j in 0..m {
                out[j] += weights.a(l, k) * src[l][j];
            }
        }
        out
    };
    match strategy {
        Strategy::Atc => {
            let phi: Vec<Vec<f64>> = (0..n).map(|k| adapt(k, &w[k])).collect();
            (0..n).map(|k| combine(k, &phi)).collect()
        }
        Strategy::Cta => {
            let phi: Vec<Vec<f64>> = (0..n).map(|k| combine(k, w)).collect();
            (0..n).map(|k| adapt(k, &phi[k])).collect()
        }
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &n in &[1usize, 3, 20] {
        for &m in &[1usize, 5] {
            let topo = random_topology(&mut rng, n);
            let weights = CombinationWeights::uniform(&topo);
            for _ in 0..100 / 6 + 1 {
                let w: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let state = NodeState::from_estimates(n, m, w.concat()).unwrap();
                let frame = random_frame(&mut rng, n, m);
                let mu = rng.gen_range(0.001..0.1);
                for strategy in [Strategy::Atc, Strategy::Cta] {
                    let spec = AlgorithmSpec::new(strategy, mu, 0.0).unwrap();
                    let got = step(&state, &frame, &spec, &weights, &topo);
                    let want = reference_dlms(strategy, &w, &frame, mu, &topo, &weights);
                    for (k, row) in want.iter().enumerate() {
                        worst = worst.max(max_abs_diff(got.w(k), row));
                    }
                    cases += 1;
                }
            }
        }
    }
    Outcome::hard(
        worst <= 1e-15,
        format!("{cases} random steps, max |leaky(γ=0) - reference| = {worst:.1e} (limit 1e-15)"),
    )
}

// Criteria 2 and 3 ------------------------------------------------------------

fn single_node() -> (Topology, CombinationWeights) {
    let topo = Topology::from_neighbors(vec![vec![0]]).unwrap();
    let weights = CombinationWeights::uniform(&topo);
    (topo, weights)
}

/// Runs a single node over `frames`, returning the final estimate or the
/// round at which divergence was flagged.
fn run_single(
    spec: &AlgorithmSpec,
    m: usize,
    frames: impl Iterator<Item = SampleFrame>,
) -> Result<Vec<f64>, usize> {
    let (topo, weights) = single_node();
    let mut state = init_state(1, m);
    for (i, frame) in frames.enumerate() {
        state = step(&state, &frame, spec, &weights, &topo);
        if detect_divergence(&state, DEFAULT_DIVERGENCE_THRESHOLD).is_some() {
            return Err(i + 1);
        }
    }
    Ok(state.w(0).to_vec())
}

/// A fixed regressor with `‖u‖² = σ²`: noiseless updates then follow the mean
/// recursion with `R = u uᵀ`, whose largest eigenvalue is `σ²`.
fn constant_regressor(rng: &mut ChaCha8Rng, m: usize, sigma_sq: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dot(&raw, &raw).sqrt();
    raw.iter().map(|x| x / norm * sigma_sq.sqrt()).collect()
}

fn constant_frames(
    u: Vec<f64>,
    system: &UnknownSystem,
    rounds: usize,
) -> impl Iterator<Item = SampleFrame> + '_ {
    (0..rounds).map(move |_| {
        let d = dot(&u, system.taps());
        SampleFrame::new(u.clone(), vec![d], system)
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let sigma_sq = 0.35;
    let gamma = 0.002;
    let system = UnknownSystem::new(vec![0.5, -0.3, 0.2, 0.1, -0.4]).unwrap();
    let m = system.len();
    let mut notes = Vec::new();
    let mut pass = true;

    // Plain LMS on white Gaussian regressors: w° is a fixed point of every update.
    let mu = step_size_upper_bound(sigma_sq, m, 0.0).unwrap() / 50.0;
    let source = SourceSpec::white_gaussian(vec![sigma_sq]).unwrap();
    let frames = || gaussian_source(&source, &system, &NoiseSpec::Noiseless, 11, 3000).unwrap();
    let atc = run_single(
        &AlgorithmSpec::new(Strategy::Atc, mu, 0.0).unwrap(),
        m,
        frames(),
    );
    let cta = run_single(
        &AlgorithmSpec::new(Strategy::Cta, mu, 0.0).unwrap(),
        m,
        frames(),
    );
    match (&atc, &cta) {
        (Ok(a), Ok(c)) => {
            let err = max_abs_diff(a, system.taps());
            pass &= err < 1e-6 && a == c;
            notes.push(format!("lms |w-w°|={err:.1e}, atc==cta {}", a == c));
        }
        _ => {
            pass = false;
            notes.push("lms diverged".into());
        }
    }

    // Leaky LMS on a fixed regressor: converges to the leaky fixed point of R = u uᵀ.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for taps in [1usize, m] {
        let sys = UnknownSystem::new(system.taps()[..taps].to_vec()).unwrap();
        let u = constant_regressor(&mut rng, taps, sigma_sq);
        let r = DMatrix::from_fn(taps, taps, |i, j| u[i] * u[j]);
        let target = leaky_fixed_point(&r, gamma, sys.taps()).unwrap();
        let mu = step_size_upper_bound(sigma_sq, taps, gamma).unwrap() / 50.0;
        let atc = run_single(
            &AlgorithmSpec::new(Strategy::Atc, mu, gamma).unwrap(),
            taps,
            constant_frames(u.clone(), &sys, 3000),
        );
        let cta = run_single(
            &AlgorithmSpec::new(Strategy::Cta, mu, gamma).unwrap(),
            taps,
            constant_frames(u.clone(), &sys, 3000),
        );
        match (&atc, &cta) {
            (Ok(a), Ok(c)) => {
                let err = max_abs_diff(a, &target);
                pass &= err < 1e-6 && a == c;
                notes.push(format!(
                    "leaky M={taps} |w-fixed point|={err:.1e}, atc==cta {}",
                    a == c
                ));
            }
            _ => {
                pass = false;
                notes.push(format!("leaky M={taps} diverged"));
            }
        }
    }
    Outcome::hard(pass, notes.join("; "))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let system = UnknownSystem::new(vec![0.2; 5]).unwrap();
    let mut failures = Vec::new();
    for _ in 0..10 {
        let sigma_sq = rng.gen_range(0.1..2.0);
        let gamma = rng.gen_range(0.0005..0.1);
        let bound = step_size_upper_bound(sigma_sq, 5, gamma).unwrap();
        let u = constant_regressor(&mut rng, 5, sigma_sq);
        let r = DMatrix::from_fn(5, 5, |i, j| u[i] * u[j]);
        let target = leaky_fixed_point(&r, gamma, system.taps()).unwrap();
        let run = |factor: f64| {
            let spec = AlgorithmSpec::new(Strategy::Atc, factor * bound, gamma).unwrap();
            run_single(&spec, 5, constant_frames(u.clone(), &system, 1000))
        };
        match run(0.9) {
            Ok(w) if max_abs_diff(&w, &target) < 1e-9 => {}
            _ => failures.push(format!(
                "σ²={sigma_sq:.3} γ={gamma:.4} did not converge at 0.9×"
            )),
        }
        if run(1.5).is_ok() {
            failures.push(format!("σ²={sigma_sq:.3} γ={gamma:.4} not flagged at 1.5×"));
        }
    }
    let detail = if failures.is_empty() {
        "10 random (σ², γ): converged at 0.9× bound, flagged at 1.5×".to_string()
    } else {
        failures.join("; ")
    };
    Outcome::hard(failures.is_empty(), detail)
}

// Criterion 4 -------------------------------------------------------------------

const SMOOTHING: usize = 20;

/// Trailing moving average; entry `j` covers rounds `j+1 ..= j+SMOOTHING`.
fn smoothed(values: &[f64]) -> Vec<f64> {
    values
        .windows(SMOOTHING)
        .map(|w| w.iter().sum::<f64>() / SMOOTHING as f64)
        .collect()
}

fn criterion_4(cfg: &ExperimentConfig) -> [Outcome; 3] {
    let result = run_ensemble(cfg).unwrap();
    let traces: Vec<_> = LABELS
        .iter()
        .map(|l| result.get(l).unwrap().as_ref().unwrap().clone())
        .collect();
    let levels: Vec<f64> = traces
        .iter()
        .map(|t| steady_state_msd(t, cfg.steady_window).unwrap())
        .collect();

    let mut settle_notes = Vec::new();
    let mut settled = true;
    for (label, trace) in LABELS.iter().zip(&traces) {
        let smooth = smoothed(&trace.per_iteration_db);
        let level = steady_state_of(&smooth, cfg.steady_window).unwrap();
        match settling_index(&smooth, level, 1.0) {
            Some(j) => {
                let round = j + SMOOTHING;
                settled &= round <= 100;
                settle_notes.push(format!("{label} round {round}"));
            }
            None => {
                settled = false;
                settle_notes.push(format!("{label} never"));
            }
        }
    }

    let ordering = levels[0] < levels[1] && levels[2] < levels[3];
    let level_notes: Vec<String> = LABELS
        .iter()
        .zip(&levels)
        .zip(QUOTED_LEVELS_DB)
        .map(|((l, v), q)| format!("{l} {v:.2} dB (quoted {q})"))
        .collect();
    let within = levels
        .iter()
        .zip(QUOTED_LEVELS_DB)
        .all(|(v, q)| (v - q).abs() <= 3.0);

    [
        Outcome::hard(
            settled,
            format!(
                "{SMOOTHING}-round mean within ±1 dB of steady state by round 100: {}",
                settle_notes.join(", ")
            ),
        ),
        Outcome::hard(
            ordering,
            format!(
                "atc_dlms {:.2} < cta_dlms {:.2}, atc_leaky {:.2} < cta_leaky {:.2}",
                levels[0], levels[1], levels[2], levels[3]
            ),
        ),
        Outcome {
            pass: within,
            soft: true,
            detail: format!("±3 dB of quoted levels: {}", level_notes.join(", ")),
        },
    ]
}

// Criteria 5 and 6 --------------------------------------------------------------

fn criterion_5(cfg: &ExperimentConfig) -> Outcome {
    let grid = [0.0005, 0.001, 0.002, 0.005, 0.01];
    let points = sweep_leakage(cfg, &grid).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for label in LABELS {
        let values = steady(&points, label);
        if values.iter().any(Option::is_none) {
            pass = false;
            notes.push(format!("{label} divergent"));
            continue;
        }
        let v: Vec<f64> = values.into_iter().flatten().collect();
        let spread =
            v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        pass &= spread < 2.0;
        notes.push(format!("{label} {spread:.3} dB"));
    }
    Outcome::hard(
        pass,
        format!("spread over γ grid (limit 2 dB): {}", notes.join(", ")),
    )
}

fn criterion_6(cfg: &ExperimentConfig) -> Outcome {
    let grid = [0.01, 0.02, 0.04, 0.08, 0.16];
    let points = sweep_step_size(cfg, &grid).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for label in LABELS {
        let values = steady(&points, label);
        let monotone = values.iter().all(Option::is_some)
            && values.windows(2).all(|w| w[0].unwrap() <= w[1].unwrap());
        pass &= monotone;
        let shown: Vec<String> = values
            .iter()
            .map(|v| v.map_or("divergent".into(), |x| format!("{x:.1}")))
            .collect();
        notes.push(format!("{label} [{}]", shown.join(", ")));
    }
    Outcome::hard(
        pass,
        format!("steady state over μ grid: {}", notes.join("; ")),
    )
}

// Criterion 7 ---------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut file = ConfigFile::default();
    file.signal.source = SourceKindName::DelayLine;
    let (cfg, _) = file.to_experiment(Path::new(".")).unwrap();
    let out = denoise_speech(&cfg, 14).unwrap();
    let finite = out
        .filtered
        .iter()
        .chain(&out.residual)
        .all(|x| x.is_finite());
    let input = out.input_snr_db(200);
    let output = out.output_snr_db(200);
    Outcome::hard(
        finite && output - input >= 5.0,
        format!(
            "{} node 14: input SNR {input:.2} dB, output SNR {output:.2} dB, gain {:.2} dB (limit 5), finite {finite}",
            cfg.denoise_algorithm,
            output - input
        ),
    )
}

// Criterion 8 ---------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("example1.toml");
    std::fs::write(&config, "# all defaults\n").unwrap();
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_leaky-dlms"))
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::hard(false, format!("run exited with {}", status.status));
        }
        outputs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&outputs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(outputs[0].join(n)).unwrap() == std::fs::read(outputs[1].join(n)).unwrap()
    });
    Outcome::hard(
        identical && names.len() == 5,
        format!(
            "{} CSVs from two runs byte-identical: {identical}",
            names.len()
        ),
    )
}

fn main() {
    let cfg = example_one();
    let mut ok = true;
    ok &= report(
        "1",
        "reduction identity",
        Duration::from_secs(1),
        criterion_1,
    );
    ok &= report(
        "2",
        "single-node oracle",
        Duration::from_secs(5),
        criterion_2,
    );
    ok &= report(
        "3",
        "stability bisection",
        Duration::from_secs(10),
        criterion_3,
    );
    let start = Instant::now();
    let [a, b, c] = criterion_4(&cfg);
    let elapsed = start.elapsed();
    for (id, name, outcome) in [
        ("4a", "steady state by round 100", a),
        ("4b", "ATC below CTA", b),
        ("4c", "steady-state levels", c),
    ] {
        ok &= report(id, name, Duration::from_secs(60), || Outcome {
            detail: format!("{}; ensemble {:.2?}", outcome.detail, elapsed),
            ..outcome
        });
    }
    ok &= report(
        "5",
        "leakage insensitivity",
        Duration::from_secs(300),
        || criterion_5(&cfg),
    );
    ok &= report(
        "6",
        "step-size monotonicity",
        Duration::from_secs(300),
        || criterion_6(&cfg),
    );
    ok &= report(
        "7",
        "speech denoising",
        Duration::from_secs(30),
        criterion_7,
    );
    ok &= report("8", "determinism", Duration::from_secs(120), criterion_8);
    if !ok {
        std::process::exit(1);
    }
}
