use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nonbloch_core::dynamics::{delta_state, DdState, TaylorPropagator};
use nonbloch_core::lattice::{self, assemble, Boundary};
use nonbloch_core::model::{CHAIN_A, CHAIN_B};
use nonbloch_core::saddle::find_saddles;
use nonbloch_core::thimble::{self, Contour};

fn eigensolve(c: &mut Criterion) {
    let h = assemble(&CHAIN_A.symbol().into(), 140, Boundary::Open).unwrap();
    c.bench_function("obc_spectrum_l140", |b| b.iter(|| lattice::spectrum(black_box(&h)).unwrap()));
}

fn saddles(c: &mut Criterion) {
    let sym = CHAIN_B.symbol();
    c.bench_function("find_saddles", |b| b.iter(|| find_saddles(black_box(&sym), 0.0).unwrap()));
    c.bench_function("classify_bz", |b| b.iter(|| thimble::classify(black_box(&sym), 0.0, &Contour::Bz).unwrap()));
}

fn taylor_step(c: &mut Criterion) {
    let h = assemble(&CHAIN_A.symbol().into(), 140, Boundary::Open).unwrap();
    let prop = TaylorPropagator::new(h.sparse(), 0.02);
    let mut state = DdState::new(&delta_state(140, 1, 0, 0));
    c.bench_function("taylor_step_l140", |b| b.iter(|| prop.step(black_box(&mut state))));
}

criterion_group!(kernels, eigensolve, saddles, taylor_step);
criterion_main!(kernels);
