//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a straight-line computation as nodes with at most two
//! parents each, storing the local partial derivative on every edge at
//! forward time. [`Tape::gradients`] then runs one reverse sweep and returns
//! d(output)/d(node) for every node. This is deliberately tiny: the trainer
//! in this crate works on toy-sized maps, so clarity wins over throughput.
//!
//! Non-smooth points use fixed subgradients: `abs` picks 0 at the origin,
//! `clamp` passes the gradient on the closed interval, and `min2`/`max2`
//! route the gradient to the first argument on ties (so folds over pixels in
//! raster order resolve ties toward the earliest pixel).

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(u32);

#[derive(Clone, Copy)]
struct Node {
    value: f64,
    // (parent index, d value / d parent); unused slots have weight 0 on self
    parents: [(u32, f64); 2],
    arity: u8,
}

/// Gradient of one recorded output with respect to every node.
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn get(&self, v: Var) -> f64 {
        self.0[v.0 as usize]
    }
}

/// A Wengert list: append-only record of scalar operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0 as usize].value
    }

    fn push(&mut self, value: f64, parents: [(u32, f64); 2], arity: u8) -> Var {
        let id = u32::try_from(self.nodes.len()).expect("tape exceeds u32 nodes");
        self.nodes.push(Node {
            value,
            parents,
            arity,
        });
        Var(id)
    }

    /// A leaf node: parameter, input, or constant.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, [(0, 0.0); 2], 0)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, [(a.0, 1.0), (b.0, 1.0)], 2)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, [(a.0, 1.0), (b.0, -1.0)], 2)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, [(a.0, vb), (b.0, va)], 2)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va / vb, [(a.0, 1.0 / vb), (b.0, -va / (vb * vb))], 2)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(v, [(a.0, -1.0), (0, 0.0)], 1)
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, [(a.0, c), (0, 0.0)], 1)
    }

    /// Add a constant.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, [(a.0, 1.0), (0, 0.0)], 1)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let va = self.value(a);
        self.push(va.ln(), [(a.0, 1.0 / va), (0, 0.0)], 1)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.push(t, [(a.0, 1.0 - t * t), (0, 0.0)], 1)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = 1.0 / (1.0 + (-self.value(a)).exp());
        self.push(s, [(a.0, s * (1.0 - s)), (0, 0.0)], 1)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let sign = if va > 0.0 {
            1.0
        } else if va < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.push(va.abs(), [(a.0, sign), (0, 0.0)], 1)
    }

    /// Clamp to `[lo, hi]`; gradient passes on the closed interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let va = self.value(a);
        let pass = if (lo..=hi).contains(&va) { 1.0 } else { 0.0 };
        self.push(va.clamp(lo, hi), [(a.0, pass), (0, 0.0)], 1)
    }

    /// Pairwise minimum; the first argument wins ties.
    pub fn min2(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va <= vb {
            self.push(va, [(a.0, 1.0), (b.0, 0.0)], 2)
        } else {
            self.push(vb, [(a.0, 0.0), (b.0, 1.0)], 2)
        }
    }

    /// Pairwise maximum; the first argument wins ties.
    pub fn max2(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        if va >= vb {
            self.push(va, [(a.0, 1.0), (b.0, 0.0)], 2)
        } else {
            self.push(vb, [(a.0, 0.0), (b.0, 1.0)], 2)
        }
    }

    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let mut it = vars.iter();
        let first = *it.next().expect("sum of an empty list");
        it.fold(first, |acc, &v| self.add(acc, v))
    }

    pub fn mean(&mut self, vars: &[Var]) -> Var {
        let s = self.sum(vars);
        self.scale(s, 1.0 / vars.len() as f64)
    }

    /// One reverse sweep from `output`.
    pub fn gradients(&self, output: Var) -> Gradients {
        let mut grads = vec![0.0; self.nodes.len()];
        grads[output.0 as usize] = 1.0;
        for i in (0..=output.0 as usize).rev() {
            let g = grads[i];
            if g == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for &(p, w) in &node.parents[..node.arity as usize] {
                grads[p as usize] += g * w;
            }
        }
        Gradients(grads)
    }
}
