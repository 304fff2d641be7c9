//! Order-of-growth check of per-step tracker cost in the ambient dimension.

mod common;

use std::time::Instant;

use common::*;
use mousse_core::tracking::{grouse_step, orthonormalize_fo, orthonormalize_gs, petrels_step};
use mousse_core::PetrelsState;

const DIMS: [usize; 3] = [100, 200, 400];
const STEPS: usize = 400;

fn per_step_nanos(rule: BasisRule, dim: usize) -> f64 {
    let d = 2;
    let mut r = rng(dim as u64);
    let mut node = random_node(&mut r, dim, d);
    let obs: Vec<_> = (0..64)
        .map(|t| masked(t, &gaussian_vec(&mut r, dim, 1.0), random_mask(&mut r, dim, dim * 6 / 10)))
        .collect();
    let mut state = PetrelsState::new(dim, d);
    let mut best = f64::INFINITY;
    for _ in 0..7 {
        let start = Instant::now();
        for i in 0..STEPS {
            let o = &obs[i % obs.len()];
            let pr = node.project(o).unwrap();
            match rule {
                BasisRule::Grouse => grouse_step(&mut node.basis, o, &pr, 0.1),
                BasisRule::PetrelsGs | BasisRule::PetrelsFo => {
                    let mut raw = node.basis.clone();
                    petrels_step(&mut raw, &mut state, o, &pr, 0.95);
                    node.basis = if rule == BasisRule::PetrelsFo {
                        orthonormalize_fo(&raw).unwrap()
                    } else {
                        orthonormalize_gs(&raw).unwrap()
                    };
                }
            }
        }
        best = best.min(start.elapsed().as_nanos() as f64 / STEPS as f64);
    }
    best
}

#[test]
fn per_step_cost_grows_linearly_in_dimension() {
    for rule in [BasisRule::Grouse, BasisRule::PetrelsGs, BasisRule::PetrelsFo] {
        let times: Vec<f64> = DIMS.iter().map(|&dim| per_step_nanos(rule, dim)).collect();
        let ratio = times[2] / times[0];
        println!("{rule:?}: {times:?} ns/step, ratio 400/100 = {ratio:.2}");
        assert!(ratio < 8.0, "{rule:?} cost grew {ratio:.2}x from D=100 to D=400: {times:?}");
    }
}
