#![allow(dead_code)]

use pal::autodiff::Array;
use pal::backbone::{forward, ForwardTrace, ModelSpec, Parameters};
use pal::autodiff::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

/// Forward pass of a random network on a random batch, input on `tape`.
pub fn random_trace(tape: &Tape, spec: &ModelSpec, n: usize, seed: u64) -> ForwardTrace {
    let params = Parameters::init(spec, seed).unwrap();
    let (c, h, w) = spec.input;
    let x = uniform(&mut rng(seed ^ 0x5eed), &[n, c, h, w], 0.0, 1.0);
    forward(spec, &params.on_tape(tape), &tape.leaf(x)).unwrap()
}
