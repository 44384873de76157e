//! Per-call cost of the certification primitives; these sit inside the
//! bootstrap loop, so microseconds matter.

use criterion::{criterion_group, criterion_main, Criterion};
use entsim_bench::reference_state;
use entsim_core::gaussian::{
    check_physicality, entanglement_witness, negativity, squeezing_minima, symplectic_eigenvalues,
};

fn certification(c: &mut Criterion) {
    let state = reference_state();
    c.bench_function("entanglement_witness", |b| {
        b.iter(|| entanglement_witness(&state))
    });
    c.bench_function("negativity", |b| b.iter(|| negativity(&state).unwrap()));
    c.bench_function("symplectic_eigenvalues", |b| {
        b.iter(|| symplectic_eigenvalues(state.sigma()).unwrap())
    });
    c.bench_function("check_physicality", |b| b.iter(|| check_physicality(&state)));
    c.bench_function("squeezing_minima", |b| b.iter(|| squeezing_minima(&state)));
}

criterion_group!(benches, certification);
criterion_main!(benches);
