// Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
// exits nonzero if any fails. Run with `cargo test --release --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use nlos_track::calibration::{channel_surrogate_nees, detector_calibration, position_kf_nees, DetectorRunConfig};
use nlos_track::channel::{make_codebook, ArrayConfig, CodebookKind, PathGain};
use nlos_track::chi2;
use nlos_track::pipeline::{run_campaign, run_tagged, ChannelSettings, Mode, RunConfig, RunOutput};
use nlos_track::position::ImuConfig;
use nlos_track::report::{cdf_quantile, write_trace, ReportBundle};
use nlos_track::rng::{stream, Stream};
use nlos_track::scene::{compute_geometry, place_scatterers, wrap_to_pi, Point2};
use nlos_track::tracker::{ChannelMeasurement, MeasurementModel};
use nlos_track::triangulate::{cost, solve_pose, PathMeasurement, SolveOptions};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noiseless_chain() -> Outcome {
    let mut cfg = RunConfig { snr_db: f64::INFINITY, n_steps: Some(100), ..RunConfig::default() };
    cfg.trajectory.speed = 0.0;
    cfg.scatterers.redraw_distance = f64::INFINITY;
    cfg.channel = ChannelSettings { ar: vec![1.0], process_var: 0.0, init_std: 0.0 };
    cfg.imu = ImuConfig { vel_std: 0.0, acc_std: 0.0 };
    let mut worst = 0.0f64;
    let mut elapsed = 0.0f64;
    for mode in Mode::ALL {
        let start = Instant::now();
        let recs = run_tagged(&RunConfig { mode, ..cfg.clone() }, 0).map_err(|e| e.to_string())?;
        elapsed = elapsed.max(start.elapsed().as_secs_f64());
        if recs.len() != 100 {
            return Err(format!("{} steps instead of 100", recs.len()));
        }
        worst = recs.iter().map(|r| r.pos_error).fold(worst, |a, e| if e.is_nan() { f64::INFINITY } else { a.max(e) });
    }
    check(worst <= 1e-6 && elapsed < 5.0, format!("max error {worst:.2e} m, slowest run {elapsed:.2} s"))
}

fn jacobian_vs_finite_differences() -> Outcome {
    let arrays = ArrayConfig { n_tx: 16, n_rx: 4, ..ArrayConfig::default() };
    let cb = make_codebook(&arrays, CodebookKind::Dft);
    let mut rng = stream(2, Stream::Scene);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let gains: Vec<PathGain> = (0..4)
            .map(|_| PathGain::from_parts(rng.random_range(0.5..2.0), rng.random_range(0.0..50.0), &arrays))
            .collect();
        let psi = DVector::from_fn(8, |_, _| rng.random_range(0.15..std::f64::consts::PI - 0.15));
        let model = ChannelMeasurement { cb: &cb, gains: &gains, noise_var: 1.0 };
        let analytic = model.jacobian(&psi);
        let mut numeric = analytic.clone();
        for k in 0..8 {
            let mut up = psi.clone();
            let mut down = psi.clone();
            up[k] += h;
            down[k] -= h;
            numeric.set_column(k, &((model.predict(&up) - model.predict(&down)) / (2.0 * h)));
        }
        let rel = (&analytic - &numeric).amax() / numeric.amax();
        worst = worst.max(rel);
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over 100 states"))
}

fn triangulation_round_trip() -> Outcome {
    let bs = Point2::ORIGIN;
    let opts = SolveOptions::default();
    let mut rng = stream(3, Stream::Scene);
    let (mut pos, mut head, mut grad) = (0.0f64, 0.0f64, 0.0f64);
    let mut scenes = 0;
    while scenes < 1000 {
        let ue = Point2::new(rng.random_range(50.0..500.0), rng.random_range(-600.0..0.0));
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let Ok(scatterers) = place_scatterers(ue, bs, 4, 100.0, &mut rng) else { continue };
        let Ok(geo) = compute_geometry(bs, ue, heading, &scatterers) else { continue };
        let paths: Vec<PathMeasurement> = (0..4)
            .map(|l| PathMeasurement { aod: geo.aod[l], aoa: geo.aoa[l], length: geo.path_lengths[l], weight: 1.0 })
            .collect();
        let est = solve_pose(&paths, bs, None, &opts);
        if !est.is_valid() {
            return Err(format!("solver failed on scene {scenes}: {:?}", est.status));
        }
        pos = pos.max(est.position().distance(&ue));
        head = head.max(wrap_to_pi(est.gamma - heading).abs());
        let step = 1e-6;
        let f = |x: f64, y: f64, g: f64| cost(&paths, bs, x, y, g);
        let gx = (f(est.x + step, est.y, est.gamma) - f(est.x - step, est.y, est.gamma)) / (2.0 * step);
        let gy = (f(est.x, est.y + step, est.gamma) - f(est.x, est.y - step, est.gamma)) / (2.0 * step);
        let gg = (f(est.x, est.y, est.gamma + step) - f(est.x, est.y, est.gamma - step)) / (2.0 * step);
        grad = grad.max((gx * gx + gy * gy + gg * gg).sqrt());
        scenes += 1;
    }
    check(
        pos <= 1e-6 && head <= 1e-8 && grad <= 1e-6,
        format!("max position error {pos:.2e} m, heading {head:.2e} rad, gradient {grad:.2e}"),
    )
}

fn noise_variance() -> Outcome {
    let cfg = RunConfig::default();
    let var = cfg.noise_var().map_err(|e| e.to_string())?;
    let expected = (cfg.arrays.n_tx * cfg.arrays.n_rx) as f64 / 10f64.powf(cfg.snr_db / 10.0);
    check(
        cfg.arrays.n_tx == 64 && cfg.arrays.n_rx == 8 && cfg.snr_db == 20.0 && (var - 5.12).abs() <= 1e-12 && var == expected,
        format!("σ_w² = {var} for {}x{} at {} dB", cfg.arrays.n_rx, cfg.arrays.n_tx, cfg.snr_db),
    )
}

fn detector() -> Outcome {
    let q = chi2::quantile(0.95, 2.0);
    // Closed form for two degrees of freedom: −2 ln(p_fa).
    let oracle = -2.0 * 0.05f64.ln();
    let cal = detector_calibration(&DetectorRunConfig { steps: 2000, ..DetectorRunConfig::default() })
        .map_err(|e| e.to_string())?;
    check(
        (q - 5.9915).abs() <= 1e-3 && (q - oracle).abs() <= 1e-9 && (0.025..=0.075).contains(&cal.false_alarm_rate),
        format!(
            "false-alarm rate {:.4} ({}/2000, dof {}), KS {:.3}; χ²₂ 95% quantile {q:.4}",
            cal.false_alarm_rate, cal.triggers, cal.dof, cal.ks_distance
        ),
    )
}

fn two_stage_beats_single_stage(runs: &[RunOutput]) -> Outcome {
    let report = ReportBundle::from_runs(runs, 3).map_err(|e| e.to_string())?;
    let two = report.mode(Mode::TwoStage).ok_or("no two-stage runs")?;
    let single = report.mode(Mode::SingleStage).ok_or("no single-stage runs")?;
    let wins = two.per_run_median_m.iter().zip(&single.per_run_median_m).filter(|(a, b)| a <= b).count();
    let steps = two.steps / two.runs;
    check(
        two.runs >= 20 && steps >= 500 && wins >= 18,
        format!(
            "two-stage median ≤ single-stage in {wins}/{} seeds ({steps} steps); pooled medians {:.2} m vs {:.2} m",
            two.runs, two.median_m, single.median_m
        ),
    )
}

fn aod_vs_aoa(runs: &[RunOutput]) -> Outcome {
    let report = ReportBundle::from_runs(runs, 3).map_err(|e| e.to_string())?;
    let a = &report.angle_mse;
    check(
        a.within_epoch_steps > 0 && a.within_epoch_aod <= a.within_epoch_aoa,
        format!("within-epoch MSE AoD {:.3e} rad² ≤ AoA {:.3e} rad² over {} steps", a.within_epoch_aod, a.within_epoch_aoa, a.within_epoch_steps),
    )
}

fn a1_comparison(cfg: &RunConfig, seeds: usize, default_runs: &[RunOutput]) -> Outcome {
    let mut random_walk = cfg.clone();
    random_walk.channel.ar = vec![1.0];
    let rw_runs = run_campaign(&random_walk, seeds, &Mode::ALL).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut medians = Vec::new();
    for (a1, runs) in [(1.0, rw_runs.as_slice()), (cfg.channel.ar[0], default_runs)] {
        let report = ReportBundle::from_runs(runs, 3).map_err(|e| e.to_string())?;
        for m in &report.modes {
            let q: Vec<String> = [0.1, 0.25, 0.5, 0.75, 0.9].iter().map(|p| format!("{:7.2}", cdf_quantile(&m.cdf, *p))).collect();
            lines.push(format!("      a1 {a1:.2} {:<13}{}", m.mode.as_str(), q.join("")));
        }
        medians.push(report.mode(Mode::TwoStage).map(|m| m.median_m).unwrap_or(f64::NAN));
    }
    println!("      error quantiles (m) at p =  0.10   0.25   0.50   0.75   0.90");
    for l in &lines {
        println!("{l}");
    }
    // The reported gain is informational only.
    check(
        lines.len() == 4,
        format!("tables emitted; two-stage median a1=1: {:.2} m, a1=0.95: {:.2} m (gain {:+.2} m, not asserted)", medians[0], medians[1], medians[0] - medians[1]),
    )
}

fn filter_consistency() -> Outcome {
    let cfg = RunConfig::default().position_kf();
    let pos = position_kf_nees(&cfg, 50, 100, 9).map_err(|e| e.to_string())?;
    let sigma_u = 0.5f64.to_radians();
    let ch = channel_surrogate_nees(4, 1.0, sigma_u * sigma_u, 32, 1e-4, 50, 100, 9).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, s) in [("position", &pos), ("channel", &ch)] {
        let (lo, hi) = s.band();
        let mean = s.overall_mean();
        ok &= (lo..=hi).contains(&mean) && s.fraction_in_band() >= 0.85;
        parts.push(format!("{name} dim {} mean {mean:.2} in [{lo:.2}, {hi:.2}], {:.0}% steps in band", s.dim, 100.0 * s.fraction_in_band()));
    }
    check(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let trace = |seed: u64, mode: Mode| -> Result<Vec<u8>, String> {
        let cfg = RunConfig { seed, mode, n_steps: Some(150), ..RunConfig::default() };
        let mut buf = Vec::new();
        write_trace(&run_tagged(&cfg, 0).map_err(|e| e.to_string())?, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    for (seed, mode) in [(7, Mode::TwoStage), (11, Mode::SingleStage)] {
        let (a, b) = (trace(seed, mode)?, trace(seed, mode)?);
        if a != b {
            return Err(format!("seed {seed} {} traces differ", mode.as_str()));
        }
    }
    let cfg = RunConfig { n_steps: Some(80), ..RunConfig::default() };
    let bytes = |runs: Vec<RunOutput>| -> Result<Vec<Vec<u8>>, String> {
        runs.iter()
            .map(|r| {
                let mut buf = Vec::new();
                write_trace(&r.records, &mut buf).map_err(|e| e.to_string())?;
                Ok(buf)
            })
            .collect()
    };
    let first = bytes(run_campaign(&cfg, 4, &Mode::ALL).map_err(|e| e.to_string())?)?;
    let second = bytes(run_campaign(&cfg, 4, &Mode::ALL).map_err(|e| e.to_string())?)?;
    check(first == second, format!("single runs and a {}-trace campaign repeat byte for byte", first.len()))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        // Keeps `cargo test -- --list` quiet for this target.
        return ExitCode::SUCCESS;
    }
    let cfg = RunConfig::default();
    let seeds = 20;
    let start = Instant::now();
    let campaign = run_campaign(&cfg, seeds, &Mode::ALL);
    let campaign_secs = start.elapsed().as_secs_f64();

    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n:>2}] {name}: {detail}");
    };
    report(1, "noiseless exactness chain", noiseless_chain());
    report(2, "measurement Jacobian", jacobian_vs_finite_differences());
    report(3, "triangulation round trip", triangulation_round_trip());
    report(4, "noise variance", noise_variance());
    report(5, "detector calibration", detector());
    match &campaign {
        Ok(runs) => {
            println!("      paired campaign: {seeds} seeds x 2 modes in {campaign_secs:.1} s");
            report(6, "two-stage vs single-stage", two_stage_beats_single_stage(runs));
            report(7, "AoD vs AoA error", aod_vs_aoa(runs));
            report(8, "a1 comparison", a1_comparison(&cfg, seeds, runs));
        }
        Err(e) => {
            for (n, name) in [(6, "two-stage vs single-stage"), (7, "AoD vs AoA error"), (8, "a1 comparison")] {
                report(n, name, Err(format!("campaign failed: {e}")));
            }
        }
    }
    report(9, "filter consistency", filter_consistency());
    report(10, "determinism", determinism());
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
