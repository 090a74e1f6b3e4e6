//! Build a small graph on the tape, differentiate it, check it against central
//! differences, then run the primitive suite and its negative control.
//!
//! cargo run --release -p nf-autograd --example gradient_check

use nf_autograd::verify::{corrupted_backward_check, primitive_suite};
use nf_autograd::{grad_check, uniform_fan_in, GradCheckConfig, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nf_autograd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", uniform_fan_in(vec![3, 4], 4, &mut rng))?;
    let b = store.add("b", uniform_fan_in(vec![3], 4, &mut rng))?;
    let x = Tensor::from_f64(vec![2, 4], &[0.5, -1.0, 2.0, 0.1, 1.5, 0.3, -0.7, 0.9])?;

    let report = grad_check(&mut store, GradCheckConfig::default(), |s| {
        let mut tape = nf_autograd::Tape::new();
        let input = tape.input(x.clone());
        let (wv, bv) = (tape.param(s, w), tape.param(s, b));
        let h = tape.dense(input, wv, Some(bv))?;
        let h = tape.sigmoid(h);
        let loss = tape.softmax_cross_entropy(h, &[0, 2])?;
        Ok((tape, loss))
    })?;
    println!("{report}");

    for out in primitive_suite(10)? {
        println!("{:<28} max rel. error {:.2e} {}", out.name, out.max_rel_error, if out.passed() { "ok" } else { "FAILED" });
    }
    let control = corrupted_backward_check()?;
    println!("corrupted backward detected: {} (max rel. error {:.2e})", !control.passed, control.max_rel_error);
    Ok(())
}
