use std::collections::HashMap;

use super::array::Array;
use super::tape::Input;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients of a one-element `output` with respect to each tensor in `wrt`.
///
/// Only nodes lying on a path from some `wrt` tensor to `output` are
/// visited. With `create_graph` the backward computation is itself recorded
/// on the tape and the returned gradients are tracked, so they can feed a
/// second differentiation. Without it the returned tensors are untracked and
/// nothing is appended to the tape.
///
/// A `wrt` tensor that does not influence `output` gets a zero gradient.
pub fn backward(output: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(Error::Tape(format!(
            "backward needs a one-element output, got shape {:?}",
            output.shape()
        )));
    }
    let out_ref = output
        .node_ref()
        .ok_or_else(|| Error::Tape("backward output is not tracked".into()))?;
    let tape = out_ref.tape.clone();
    let out_id = out_ref.id;

    let mut wrt_ids = Vec::with_capacity(wrt.len());
    for w in wrt {
        let r = w
            .node_ref()
            .ok_or_else(|| Error::Tape("wrt tensor is not on the tape".into()))?;
        if !r.tape.same(&tape) {
            return Err(Error::Tape("wrt tensor is on a different tape".into()));
        }
        wrt_ids.push(r.id);
    }
    let Some(&lo) = wrt_ids.iter().min() else {
        return Ok(Vec::new());
    };
    if lo > out_id {
        return Ok(wrt.iter().map(|w| Tensor::constant(Array::zeros(w.shape().to_vec()))).collect());
    }
    let span = out_id + 1 - lo;

    // Relevant nodes: descendants of some wrt node that are also ancestors
    // of the output.
    let mut inputs = Vec::new();
    let mut desc = vec![false; span];
    for &id in &wrt_ids {
        desc[id - lo] = true;
    }
    for id in lo..=out_id {
        if desc[id - lo] {
            continue;
        }
        tape.input_ids(id, &mut inputs);
        desc[id - lo] = inputs.iter().any(|&i| i >= lo && desc[i - lo]);
    }
    let mut anc = vec![false; span];
    anc[span - 1] = true;
    for id in (lo..=out_id).rev() {
        if !anc[id - lo] {
            continue;
        }
        tape.input_ids(id, &mut inputs);
        for &i in &inputs {
            if i >= lo {
                anc[i - lo] = true;
            }
        }
    }
    let relevant: Vec<bool> = desc.iter().zip(&anc).map(|(d, a)| *d && *a).collect();

    let mut grads: Vec<Option<Tensor>> = vec![None; span];
    grads[span - 1] = Some(Tensor::constant(Array::full(output.shape().to_vec(), 1.0)));
    let mut found: HashMap<usize, Tensor> = HashMap::new();

    for id in (lo..=out_id).rev() {
        if !relevant[id - lo] {
            continue;
        }
        let Some(g) = grads[id - lo].take() else {
            continue;
        };
        if wrt_ids.contains(&id) {
            found.insert(id, g.clone());
        }
        let node = tape.node(id);
        if node.inputs.is_empty() {
            continue;
        }
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|i| matches!(i, Input::Node(n) if *n >= lo && relevant[*n - lo]))
            .collect();
        if !needs.iter().any(|&b| b) {
            continue;
        }
        let operand = |i: &Input| match i {
            Input::Node(n) if create_graph => Tensor::tracked(tape.value(*n), tape.clone(), *n),
            Input::Node(n) => Tensor::constant(tape.value(*n)),
            Input::Const(a) => Tensor::constant(a.clone()),
        };
        let xs: Vec<Tensor> = node.inputs.iter().map(operand).collect();
        let out = if create_graph {
            Tensor::tracked(node.value.clone(), tape.clone(), id)
        } else {
            Tensor::constant(node.value.clone())
        };
        let gs = node.op.vjp(&xs, &out, &g, &needs)?;
        for ((input, gi), need) in node.inputs.iter().zip(gs).zip(&needs) {
            let (Input::Node(n), Some(gi), true) = (input, gi, *need) else {
                continue;
            };
            let slot = &mut grads[*n - lo];
            *slot = Some(match slot.take() {
                None => gi,
                Some(acc) => acc.add(&gi)?,
            });
        }
    }

    Ok(wrt
        .iter()
        .zip(&wrt_ids)
        .map(|(w, id)| {
            found
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::constant(Array::zeros(w.shape().to_vec())))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn relu_sum_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![-1.0, 2.0]));
        let y = x.relu().unwrap().sum_all().unwrap();
        let g = backward(&y, &[&x], false).unwrap();
        assert_eq!(g[0].data(), &[0.0, 1.0]);
        assert!(!g[0].is_tracked());
    }

    #[test]
    fn abs_backward_uses_zero_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![-2.0, 0.0, 5.0]));
        let y = x.abs().unwrap().sum_all().unwrap();
        assert_eq!(backward(&y, &[&x], false).unwrap()[0].data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn second_order_square() {
        // g = d/dx sum(x^2) = 2x ; d/dx sum(g^2) = 8x
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![1.0, 3.0]));
        let y = x.mul(&x).unwrap().sum_all().unwrap();
        let g = backward(&y, &[&x], true).unwrap().remove(0);
        assert!(g.is_tracked());
        assert_eq!(g.data(), &[2.0, 6.0]);
        let z = g.mul(&g).unwrap().sum_all().unwrap();
        let h = backward(&z, &[&x], false).unwrap();
        assert_eq!(h[0].data(), &[8.0, 24.0]);
    }

    #[test]
    fn no_graph_backward_appends_nothing() {
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![1.0, 2.0, 3.0]));
        let y = x.exp().unwrap().mul(&x).unwrap().sum_all().unwrap();
        let before = tape.len();
        backward(&y, &[&x], false).unwrap();
        assert_eq!(tape.len(), before);
        backward(&y, &[&x], true).unwrap();
        assert!(tape.len() > before);
    }

    #[test]
    fn errors() {
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![1.0, 2.0]));
        assert!(backward(&x, &[&x], false).is_err());
        let s = x.sum_all().unwrap();
        let loose = Tensor::constant(Array::scalar(1.0));
        assert!(backward(&s, &[&loose], false).is_err());
        let other = Tape::new().leaf(Array::scalar(1.0));
        assert!(backward(&s, &[&other], false).is_err());
    }

    #[test]
    fn unrelated_wrt_gets_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Array::from_vec(vec![1.0, 2.0]));
        let unused = tape.leaf(Array::from_vec(vec![5.0]));
        let s = x.sum_all().unwrap();
        let g = backward(&s, &[&unused, &x], false).unwrap();
        assert_eq!(g[0].data(), &[0.0]);
        assert_eq!(g[1].data(), &[1.0, 1.0]);
    }
}
