//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omsim::analytic::{optimal_k, stokes_closed_form, stokes_linear_solve};
use omsim::cumulant::{build_moment_ode, vacuum_state, CumulantState, MomentOde, FULL_DIM};
use omsim::dynamics::{detect_steady, integrate, integrate_sampled, lab_component, solver_for, SteadyOptions, SteadyState};
use omsim::model::{preset, Cavity, Detuning, DriveConfig, SystemParams, PRESET_NAMES};
use omsim::spectrum::{spectrum_from_steady, PeakKind, SpectrumOptions, SpectrumRun};

const I: Complex64 = Complex64::new(0.0, 1.0);

type Check = Result<String, String>;

struct Solved {
    ode: MomentOde,
    steady: SteadyState,
    run: SpectrumRun,
}

/// Steady states and spectra shared between criteria.
#[derive(Default)]
struct Cache {
    solved: BTreeMap<String, Solved>,
}

impl Cache {
    fn get(&mut self, key: &str, params: &SystemParams, drive: &DriveConfig) -> Result<&Solved, String> {
        if !self.solved.contains_key(key) {
            let ode = build_moment_ode(params, drive).map_err(|e| e.to_string())?;
            let steady = detect_steady(&ode, &vacuum_state(), &SteadyOptions::default()).map_err(|e| format!("{key}: {e}"))?;
            let run = spectrum_from_steady(&ode, &steady, &SpectrumOptions::default()).map_err(|e| format!("{key}: {e}"))?;
            self.solved.insert(key.to_string(), Solved { ode, steady, run });
        }
        Ok(&self.solved[key])
    }

    fn preset(&mut self, name: &str) -> Result<&Solved, String> {
        let p = preset(name).map_err(|e| e.to_string())?;
        self.get(name, &p.params, &p.drive)
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eta(s: &Solved, kind: PeakKind) -> Result<f64, String> {
    s.run
        .peaks
        .of_kind(kind)
        .map(|p| p.eta)
        .ok_or_else(|| format!("no {kind:?} peak"))
}

fn argmax_delta(s: &Solved) -> f64 {
    let sp = &s.run.spectrum;
    sp.detuning_grid[sp.argmax]
}

fn random_ansatz(rng: &mut ChaCha8Rng) -> (SystemParams, DriveConfig) {
    let log = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-5.0..-3.0));
    let kappa = rng.random_range(0.1..0.5);
    let (g0, gamma, k) = (log(rng), log(rng), log(rng));
    let mut amp = || Complex64::from_polar(rng.random_range(0.5..4.0), rng.random_range(0.0..std::f64::consts::TAU));
    let mut d = DriveConfig::new(vec![]);
    d.set_tone(Cavity::Controller, Detuning::ZERO, amp());
    d.set_tone(Cavity::Controller, Detuning::ONE, amp());
    d.set_tone(Cavity::Target, Detuning::ONE, amp());
    (SystemParams::new(g0, kappa, gamma, k), d)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<_> = (0..1000).map(|_| random_ansatz(&mut rng)).collect();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (p, d) in &draws {
        let a = stokes_closed_form(p, d).map_err(|e| e.to_string())?.a_t0.unwrap();
        let b = stokes_linear_solve(p, d).map_err(|e| e.to_string())?.a_t0.unwrap();
        worst = worst.max((a - b).norm() / b.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-10, || format!("max relative difference {worst:.2e}"))?;
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("1000 draws, max relative difference {worst:.2e}, {:.1} ms", secs * 1e3))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let (p, d) = random_ansatz(&mut rng);
        let a = stokes_closed_form(&p.with_coupling(0.0), &d).unwrap().a_t0.unwrap();
        ensure(a.norm() == 0.0, || format!("analytic |a_t0| = {:e} at K = 0", a.norm()))?;
    }
    let p = preset("fig2_blue").unwrap();
    let params = p.params.with_coupling(0.0);
    let ode = build_moment_ode(&params, &p.drive).map_err(|e| e.to_string())?;
    let steady = detect_steady(&ode, &vacuum_state(), &SteadyOptions::default()).map_err(|e| e.to_string())?;
    let h = lab_component(&ode, &steady, Cavity::Target, Detuning::ZERO).map_err(|e| e.to_string())?;
    ensure(h.norm() < 1e-10, || format!("numerical Stokes harmonic {:.2e}", h.norm()))?;
    Ok(format!("analytic exactly 0 over 1000 draws; numerical Stokes harmonic {:.2e}", h.norm()))
}

fn criterion_3() -> Check {
    let p = preset("fig2_blue").unwrap();
    let start = Instant::now();
    let mut parts = Vec::new();
    for ratio in [1.0, 1.5, 2.0] {
        let gamma = ratio * p.params.g0;
        let opt = optimal_k(&p.params, &p.drive, gamma).map_err(|e| e.to_string())?;
        let r = opt.k_star / (gamma / 2.0);
        ensure((r - 1.0).abs() < 0.2, || format!("gamma/g0 = {ratio}: K*/(gamma/2) = {r:.3}"))?;
        parts.push(format!("{r:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("K*/(gamma/2) = {} for gamma/g0 = 1, 1.5, 2", parts.join(", ")))
}

/// Closed-form mean of a linear cavity driven from vacuum in the rotating frame.
fn linear_cavity(params: &SystemParams, drive: &DriveConfig, cavity: Cavity, t: f64) -> Complex64 {
    let lambda = I * drive.frame_detuning.as_f64() * params.omega0 - params.kappa / 2.0;
    drive
        .tones_on(cavity)
        .map(|tone| {
            let nu = drive.frame_frequency(tone, params.omega0);
            tone.amplitude * ((I * nu * t).exp() - (lambda * t).exp()) / (I * nu - lambda)
        })
        .sum()
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    let mut cumulant: f64 = 0.0;
    for name in ["fig2_red", "fig2_blue", "fig3_yellow"] {
        let p = preset(name).unwrap();
        let params = SystemParams { g0: 0.0, ..p.params };
        let ode = build_moment_ode(&params, &p.drive).map_err(|e| e.to_string())?;
        let times: Vec<f64> = (1..=500).map(|k| k as f64 * 2.0).collect();
        let tr = integrate_sampled(&ode, &vacuum_state(), &times, 1e-10).map_err(|e| e.to_string())?;
        for (t, s) in times.iter().zip(&tr.states) {
            for (cavity, m) in [(Cavity::Controller, 0), (Cavity::Target, 1)] {
                let exact = linear_cavity(&params, &p.drive, cavity, *t);
                if exact.norm() > 0.0 {
                    worst = worst.max((s.means[m] - exact).norm() / exact.norm());
                } else {
                    worst = worst.max(s.means[m].norm());
                }
            }
            let c = s.normal.iter().chain(s.anomalous.iter()).map(|z| z.norm()).fold(0.0, f64::max);
            cumulant = cumulant.max(c);
        }
    }
    ensure(worst < 1e-6, || format!("max relative error {worst:.2e}"))?;
    ensure(cumulant < 1e-12, || format!("cumulants reach {cumulant:.2e}"))?;
    Ok(format!("max relative error {worst:.2e}; max cumulant {cumulant:.1e}"))
}

fn criterion_5() -> Check {
    let params = SystemParams { g0: 0.0, ..SystemParams::reference() };
    let ode = build_moment_ode(&params, &DriveConfig::default()).map_err(|e| e.to_string())?;
    let mut s = vacuum_state();
    s.means[2] = Complex64::new(1.0, 0.0);
    let k = params.k_coupling;
    let dt = 2.0;
    let times: Vec<f64> = (1..=(3.2 * std::f64::consts::PI / k / dt) as usize).map(|j| j as f64 * dt).collect();
    let tr = integrate_sampled(&ode, &s, &times, 1e-10).map_err(|e| e.to_string())?;
    let env: Vec<f64> = tr.states.iter().map(|s| s.means[2].norm()).collect();
    let mut minima = Vec::new();
    for j in 1..env.len() - 1 {
        if env[j] < env[j - 1] && env[j] <= env[j + 1] {
            let (a, b, c) = (env[j - 1], env[j], env[j + 1]);
            minima.push(times[j] + 0.5 * (a - c) / (a - 2.0 * b + c) * dt);
        }
    }
    ensure(minima.len() >= 3, || format!("only {} envelope minima", minima.len()))?;
    let beat = (minima[minima.len() - 1] - minima[0]) / (minima.len() - 1) as f64;
    // diagonalization: the phonon block has eigenvalues -i Omega0 - gamma/2 +- i K
    let m = nalgebra::Matrix2::new(
        Complex64::new(-params.gamma / 2.0, -1.0),
        I * k,
        I * k,
        Complex64::new(-params.gamma / 2.0, -1.0),
    );
    let eig = m.eigenvalues().ok_or("eigenvalues did not converge")?;
    let split = (eig[0].im - eig[1].im).abs();
    let oracle = 2.0 * std::f64::consts::PI / split;
    let err = beat / oracle - 1.0;
    ensure(err.abs() < 0.01, || format!("beat {beat:.2} vs {oracle:.2}"))?;
    ensure((oracle / (std::f64::consts::PI / k) - 1.0).abs() < 1e-9, || "oracle differs from pi/K".into())?;
    Ok(format!("beat period {beat:.2} vs pi/K = {oracle:.2} ({:+.2e})", err))
}

fn criterion_6(cache: &mut Cache) -> Check {
    let mut argmax = Vec::new();
    for name in ["fig2_red", "fig2_green", "fig2_orange", "fig2_blue"] {
        let d = argmax_delta(cache.preset(name)?);
        ensure((d - 1.0).abs() < 1e-9, || format!("{name} peaks at delta = {d}"))?;
        argmax.push(d);
    }
    // the resonant-input reference curve peaks at its own drive tone
    let black = argmax_delta(cache.preset("fig2b_black")?);
    ensure(black.abs() < 1e-9, || format!("fig2b_black peaks at delta = {black}"))?;
    let blue = eta(cache.preset("fig2_blue")?, PeakKind::Stokes)?;
    ensure((1e2..=10f64.powf(3.5)).contains(&blue), || format!("fig2_blue Stokes eta {blue:.3e}"))?;
    let red = eta(cache.preset("fig2_red")?, PeakKind::Stokes)?;
    ensure(red < 1.05, || format!("fig2_red Stokes eta {red}"))?;
    let orange = eta(cache.preset("fig2_orange")?, PeakKind::Stokes)?;
    let green = eta(cache.preset("fig2_green")?, PeakKind::Stokes)?;
    ensure(orange > green, || format!("orange {orange} <= green {green}"))?;
    Ok(format!(
        "argmax +1 for red/green/orange/blue; eta blue {blue:.0} (10^{:.2}), red {red:.4}, orange {orange:.7} > green {green:.7}",
        blue.log10()
    ))
}

fn criterion_7(cache: &mut Cache) -> Check {
    let mut best = (String::new(), 0.0);
    let mut parts = Vec::new();
    for name in ["fig3_orange", "fig3_purple", "fig3_green", "fig3_red"] {
        let e = eta(cache.preset(name)?, PeakKind::AntiStokes)?;
        parts.push(format!("{name} {e:.3}"));
        if e > best.1 {
            best = (name.to_string(), e);
        }
    }
    ensure(best.0 == "fig3_red", || format!("largest anti-Stokes eta from {}: {}", best.0, parts.join(", ")))?;
    let blue = cache.preset("fig3_blue")?;
    let first = eta(blue, PeakKind::Stokes)?.max(eta(blue, PeakKind::AntiStokes)?);
    ensure(first < 1.1, || format!("fig3_blue first-order eta {first}"))?;
    let yellow = eta(cache.preset("fig3_yellow")?, PeakKind::Stokes)?;
    ensure(yellow > 1e2, || format!("fig3_yellow Stokes eta {yellow}"))?;
    Ok(format!(
        "anti-Stokes eta: {}; fig3_blue first order {first:.4}; fig3_yellow Stokes {yellow:.0}",
        parts.join(", ")
    ))
}

fn criterion_8(cache: &mut Cache) -> Check {
    let p = preset("fig2_blue").unwrap();
    let analytic = stokes_closed_form(&p.params, &p.drive).map_err(|e| e.to_string())?.a_t0.unwrap().norm();
    let s = cache.preset("fig2_blue")?;
    let numeric = lab_component(&s.ode, &s.steady, Cavity::Target, Detuning::ZERO).map_err(|e| e.to_string())?.norm();
    let ratio = numeric / analytic;
    ensure((0.5..=2.0).contains(&ratio), || format!("numeric {numeric:.3e} vs analytic {analytic:.3e}"))?;
    Ok(format!("numeric {numeric:.4e} vs analytic {analytic:.4e} (ratio {ratio:.3})"))
}

fn criterion_9(cache: &mut Cache) -> Check {
    let p = preset("fig2_blue").unwrap();
    let base = cache.preset("fig2_blue")?.run.spectrum.normalized.clone();
    let other = cache.get("fig2_blue@frame0", &p.params, &p.drive.clone().with_frame(Detuning::ZERO))?;
    let worst = other
        .run
        .spectrum
        .normalized
        .iter()
        .zip(&base)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    ensure(worst < 0.01, || format!("max pointwise change {worst:.3e}"))?;
    Ok(format!("max pointwise relative change {worst:.2e} over {} points", base.len()))
}

fn structure_along_full_trajectory(ode: &MomentOde, t_end: f64) -> Result<f64, String> {
    let mut y = vacuum_state().pack_full();
    let mut h = 0.0;
    let mut f = |t: f64, y: &[f64], dy: &mut [f64]| ode.rhs_full(t, y, dy);
    let mut worst: f64 = 0.0;
    let mut buf = vec![0.0; FULL_DIM];
    solver_for(ode, 1e-9)
        .solve(&mut f, 0.0, &mut y, t_end, &mut h, |step| {
            step.eval(step.t1(), &mut buf);
            worst = worst.max(CumulantState::unpack_full(step.t1(), &buf).structure_residual());
        })
        .map_err(|e| e.to_string())?;
    Ok(worst)
}

fn omsim(args: &[&str], out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_omsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("omsim {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
}

/// Relative path to contents for every file under `dir`; the wall-clock
/// line is dropped from manifests.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let mut bytes = std::fs::read(&path).unwrap();
            if path.file_name().unwrap() == "manifest.json" {
                let text = String::from_utf8(bytes).unwrap();
                bytes = text
                    .lines()
                    .filter(|l| !l.contains("\"wall_clock_seconds\""))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes();
            }
            out.insert(path.strip_prefix(dir).unwrap().display().to_string(), bytes);
        }
    }
    out
}

fn criterion_10(cache: &mut Cache) -> Check {
    let mut worst: f64 = 0.0;
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        let ode = build_moment_ode(&p.params, &p.drive).map_err(|e| e.to_string())?;
        worst = worst.max(structure_along_full_trajectory(&ode, 1500.0)?);
        let tr = integrate(&ode, &vacuum_state(), 200.0, 1e-9).map_err(|e| e.to_string())?;
        worst = worst.max(tr.stats.max_structure_residual);
    }
    for s in cache.solved.values() {
        worst = worst.max(s.steady.cycle.iter().map(|c| c.structure_residual()).fold(0.0, f64::max));
    }
    ensure(worst < 1e-9, || format!("structure residual {worst:.2e}"))?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 4] = [
        &["sweep"],
        &["steady", "-p", "fig2_blue", "--set", "K=1.5e-4"],
        &["evolve", "-p", "fig2_blue", "--T", "2000", "--dt", "0.5"],
        &["spectrum", "-p", "fig2_red", "-p", "fig2b_black", "--grid", "-1.5:3.5:4001"],
    ];
    let mut files = 0;
    for (k, args) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("{k}a"));
        let b = tmp.path().join(format!("{k}b"));
        omsim(&[args, &["--jobs", "2"][..]].concat(), &a)?;
        omsim(&[args, &["--jobs", "1"][..]].concat(), &b)?;
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        ensure(!sa.is_empty() && sa == sb, || format!("omsim {args:?} artifacts differ between reruns"))?;
        files += sa.len();
    }
    Ok(format!("max structure residual {worst:.1e}; {files} CLI artifacts byte-identical across reruns"))
}

fn main() {
    let mut cache = Cache::default();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut(&mut Cache) -> Check| {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut cache))).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS ({detail}; {secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL ({detail}; {secs:.1} s)");
            }
        }
    };
    report(1, "analytic oracle equivalence", &mut |_| criterion_1());
    report(2, "zero-coupling nullity", &mut |_| criterion_2());
    report(3, "optimal coupling near gamma/2", &mut |_| criterion_3());
    report(4, "linear-limit oracle", &mut |_| criterion_4());
    report(5, "normal-mode splitting", &mut |_| criterion_5());
    report(6, "two-system spectra", &mut criterion_6);
    report(7, "target detuning spectra", &mut criterion_7);
    report(8, "cross-method consistency", &mut criterion_8);
    report(9, "frame invariance", &mut criterion_9);
    report(10, "structural invariants and determinism", &mut criterion_10);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
