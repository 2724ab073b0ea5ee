//! Sequential versus rayon evaluation of the two embarrassingly parallel
//! workloads: sweep grid cells and spectrum grid points.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use omsim::analytic::stokes_closed_form;
use omsim::cumulant::{build_moment_ode, vacuum_state};
use omsim::dynamics::{detect_steady, SteadyOptions};
use omsim::model::{preset, Cavity};
use omsim::par;
use omsim::spectrum::{detuning_grid, floquet_correlation, FloquetWindow, Transform};

fn sweep(c: &mut Criterion) {
    let p = preset("fig2_blue").unwrap();
    let (ng, nk) = (60, 80);
    let cell = |idx: usize| {
        let gamma = 1e-4 + 9e-4 * (idx / nk) as f64 / ng as f64;
        let k = 1e-3 * (idx % nk) as f64 / nk as f64;
        let params = p.params.with_gamma(gamma).with_coupling(k);
        stokes_closed_form(&params, &p.drive).map(|s| s.a_t0.unwrap().norm()).ok()
    };
    let mut g = c.benchmark_group("sweep_grid");
    g.bench_function(BenchmarkId::new("sequential", ng * nk), |b| {
        b.iter(|| black_box(par::map_indexed_seq(ng * nk, cell)))
    });
    #[cfg(feature = "parallel")]
    g.bench_function(BenchmarkId::new("rayon", ng * nk), |b| {
        b.iter(|| black_box(par::map_indexed_par(ng * nk, cell)))
    });
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    // uncoupled optics settle within a few hundred periods
    let p = preset("fig2_red").unwrap();
    let mut params = p.params;
    params.g0 = 0.0;
    let ode = build_moment_ode(&params, &p.drive).unwrap();
    let steady = detect_steady(&ode, &vacuum_state(), &SteadyOptions::default()).unwrap();
    let data = floquet_correlation(&ode, &steady, Cavity::Target, 128, 1e-9).unwrap();
    let window = FloquetWindow::new(&data, 300_000);
    let grid = detuning_grid(-1.5, 3.5, 4001);
    let point = |i: usize| window.transform((grid[i] - 1.0) * params.omega0, 1e-5);

    let mut g = c.benchmark_group("spectrum_grid");
    g.sample_size(20);
    g.bench_function(BenchmarkId::new("sequential", grid.len()), |b| {
        b.iter(|| black_box(par::map_indexed_seq(grid.len(), point)))
    });
    #[cfg(feature = "parallel")]
    g.bench_function(BenchmarkId::new("rayon", grid.len()), |b| {
        b.iter(|| black_box(par::map_indexed_par(grid.len(), point)))
    });
    g.finish();
}

criterion_group!(benches, sweep, spectrum);
criterion_main!(benches);
