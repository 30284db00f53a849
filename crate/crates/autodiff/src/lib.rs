//! Tape-based reverse-mode automatic differentiation over dense f64 tensors,
//! plus the transformer building blocks and optimizer machinery shared by the
//! model crates.
//!
//! Gradients are recorded as ordinary tape nodes, so they can be
//! differentiated again — the higher modules rely on this for PDE residuals
//! (second derivatives of network outputs w.r.t. input coordinates) and for
//! gradients of physics losses w.r.t. parameters.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod store;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use store::{AdamW, ParamStore, ParamVars};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;

use std::collections::BTreeMap;

/// Evaluate a program over a parameter store and return the forward value
/// together with reverse-mode gradients for every trainable parameter.
///
/// `seed_output` is the cotangent of the program output (ones when `None`,
/// i.e. the gradient of the summed output). The forward value is identical to
/// running the program without the gradient request.
pub fn evaluate_with_gradients(
    params: &ParamStore,
    program: impl FnOnce(&Tape, &ParamVars) -> Result<Var>,
    seed_output: Option<Tensor>,
) -> Result<(Tensor, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let vars = params.vars(&tape);
    let out = program(&tape, &vars)?;
    let value = out.value();
    let grads = tape.grad(&out, seed_output)?;
    tape.health()?;
    let mut map = BTreeMap::new();
    for name in params.trainable_names() {
        map.insert(name.clone(), grads.tensor(vars.get(&name)));
    }
    Ok((value, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_with_gradients_over_store() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::new(vec![1], vec![3.0]).unwrap());
        let (value, grads) = evaluate_with_gradients(
            &store,
            |_, p| {
                let x = p.get("x");
                Ok(&x.clone() * x)
            },
            None,
        )
        .unwrap();
        assert_eq!(value.data(), &[9.0]);
        assert_eq!(grads["x"].data(), &[6.0]);
    }
}
