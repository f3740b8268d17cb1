//! Second-order gradients on the tape.
//!
//! Takes `g = ∂y/∂x` with the backward pass recorded, then differentiates a
//! loss built from `g` again. This is the mechanism the prior loss relies on.
//!
//! ```bash
//! cargo run --example double_backprop
//! ```

use pal::autodiff::{backward, finite_diff, Array, Tape};

fn main() -> pal::Result<()> {
    let tape = Tape::new();
    let x = tape.leaf(Array::from_vec(vec![0.5, -1.0, 2.0]));
    let w = tape.leaf(Array::from_vec(vec![1.5, 0.3, -0.7]));

    // y = Σ w·x³
    let y = w.mul(&x.mul(&x)?.mul(&x)?)?.sum_all()?;
    // g = ∂y/∂x = 3 w x², kept on the tape.
    let g = backward(&y, &[&x], true)?.remove(0);
    println!("dy/dx        = {:?}", g.data());

    // Penalise the gradient itself and differentiate with respect to w.
    let penalty = g.mul(&g)?.sum_all()?;
    let dw = backward(&penalty, &[&w], false)?.remove(0);
    println!("d|g|²/dw     = {:?}", dw.data());

    // Analytic: d/dw Σ (3 w x²)² = 18 w x⁴.
    let xs = [0.5f64, -1.0, 2.0];
    let ws = [1.5f64, 0.3, -0.7];
    let closed: Vec<f64> = xs.iter().zip(ws).map(|(x, w)| 18.0 * w * x.powi(4)).collect();
    println!("closed form  = {closed:?}");

    let numeric = finite_diff(
        |wv| {
            let sum: f64 = xs.iter().zip(wv.data()).map(|(x, w)| (3.0 * w * x * x).powi(2)).sum();
            Ok(sum)
        },
        w.value(),
        1e-5,
    )?;
    println!("finite diff  = {:?}", numeric.data());
    println!("tape nodes   = {}", tape.len());
    Ok(())
}
