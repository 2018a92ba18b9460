use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hydrodarcy::config::RunConfig;
use hydrodarcy::driver::build;
use hydrodarcy::par::Execution;

/// One coupled step (ten free-flow subcycles and one Darcy step) of the
/// manufactured problem, with both solvers on the same execution mode.
fn coupled_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_step");
    group.sample_size(10);
    for (j, p) in [(2u32, 1usize), (3, 1), (2, 2)] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let mut sim = build(&RunConfig::manufactured(j, p)).unwrap();
            sim.free.exec = exec;
            sim.darcy.exec = exec;
            let id = BenchmarkId::new(format!("{exec:?}"), format!("j{j}_p{p}"));
            group.bench_function(id, |b| b.iter(|| sim.step().unwrap()));
        }
    }
    group.finish();
}

/// Right-hand side of the free flow alone.
fn free_flow_rates(c: &mut Criterion) {
    let mut group = c.benchmark_group("free_flow_rates");
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut sim = build(&RunConfig::manufactured(3, 2)).unwrap();
        sim.free.exec = exec;
        let flux = sim.darcy.interface_flux(&sim.subsurface, &sim.mesh);
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| sim.free.evaluate(&mut sim.hydro, &sim.mesh, &flux, None, 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, coupled_step, free_flow_rates);
criterion_main!(benches);
