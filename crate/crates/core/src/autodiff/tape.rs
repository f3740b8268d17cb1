use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::array::Array;
use super::ops::Op;
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

/// An operand of a recorded node: another node on the same tape, or a
/// constant captured by value.
#[derive(Clone, Debug)]
pub(crate) enum Input {
    Node(usize),
    Const(Array),
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<Input>,
    pub value: Array,
}

struct TapeInner {
    generation: u64,
    nodes: Vec<Node>,
}

/// Append-only record of tensor operations.
///
/// A tape is single-threaded (`!Send`). Build one per training step and drop
/// it afterwards; independent tapes may live on different threads.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tape(gen={}, nodes={})", self.generation(), self.len())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                generation: NEXT_GENERATION.fetch_add(1, Ordering::Relaxed),
                nodes: Vec::new(),
            })),
        }
    }

    /// Unique identifier of this tape within the process.
    pub fn generation(&self) -> u64 {
        self.inner.borrow().generation
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Registers `value` as a differentiable leaf.
    pub fn leaf(&self, value: Array) -> Tensor {
        let id = self.push(Op::Leaf, Vec::new(), value.clone());
        Tensor::tracked(value, self.clone(), id)
    }

    pub(crate) fn push(&self, op: Op, inputs: Vec<Input>, value: Array) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { op, inputs, value });
        inner.nodes.len() - 1
    }

    pub(crate) fn node(&self, id: usize) -> Node {
        self.inner.borrow().nodes[id].clone()
    }

    pub(crate) fn value(&self, id: usize) -> Array {
        self.inner.borrow().nodes[id].value.clone()
    }

    /// Node ids feeding node `id`.
    pub(crate) fn input_ids(&self, id: usize, out: &mut Vec<usize>) {
        out.clear();
        let inner = self.inner.borrow();
        out.extend(inner.nodes[id].inputs.iter().filter_map(|i| match i {
            Input::Node(n) => Some(*n),
            Input::Const(_) => None,
        }));
    }

    /// Re-evaluates every recorded node from its inputs' stored values and
    /// checks the result is bit-identical to what was recorded.
    pub fn replay(&self) -> Result<()> {
        let inner = self.inner.borrow();
        for (id, node) in inner.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let vals: Vec<&Array> = node
                .inputs
                .iter()
                .map(|i| match i {
                    Input::Node(n) => &inner.nodes[*n].value,
                    Input::Const(a) => a,
                })
                .collect();
            let again = node.op.eval(&vals)?;
            if !again.bit_eq(&node.value) {
                return Err(Error::Tape(format!(
                    "replay of node {id} ({}) diverged",
                    node.op.name()
                )));
            }
        }
        Ok(())
    }
}
