use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Append-only record of scalar operations.
///
/// Each node keeps its value and a contiguous run of `(parent, ∂node/∂parent)`
/// edges. Parents always precede children, so one reverse sweep suffices.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<f64>,
    edge_end: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

/// Adjoints indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn get(&self, v: Var) -> f64 {
        self.0.get(v.index()).copied().unwrap_or(0.0)
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            values: Vec::with_capacity(nodes),
            edge_end: Vec::with_capacity(nodes),
            edges: Vec::with_capacity(edges),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.clear();
        self.edge_end.clear();
        self.edges.clear();
    }

    fn push(&mut self, value: f64) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.edge_end.push(self.edges.len() as u32);
        Var(id)
    }

    /// New leaf.
    pub fn var(&mut self, value: f64) -> Var {
        self.push(value)
    }

    /// Leaf whose gradient is simply never read.
    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn values(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.value(v)).collect()
    }

    /// Node with caller-supplied value and local partials. This is how fused
    /// operations enter the tape.
    pub fn custom(&mut self, value: f64, parents: &[(Var, f64)]) -> Var {
        self.edges.extend(parents.iter().map(|&(p, d)| (p.0, d)));
        self.push(value)
    }

    pub fn custom_iter(&mut self, value: f64, parents: impl IntoIterator<Item = (Var, f64)>) -> Var {
        self.edges.extend(parents.into_iter().map(|(p, d)| (p.0, d)));
        self.push(value)
    }

    fn unary(&mut self, a: Var, value: f64, d: f64) -> Var {
        self.custom(value, &[(a, d)])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.custom(v, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.custom(v, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.custom(x * y, &[(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.custom(x / y, &[(a, 1.0 / y), (b, -x / (y * y))])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.unary(a, v, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, 1.0)
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.unary(a, v, c)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x * x, 2.0 * x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.unary(a, v, v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.ln(), 1.0 / x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        self.unary(a, s, s * (1.0 - s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.unary(a, t, 1.0 - t * t)
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        if x > 0.0 {
            self.unary(a, x, 1.0)
        } else {
            let e = x.exp();
            self.unary(a, e - 1.0, e)
        }
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        if x > 0.0 {
            self.unary(a, x, 1.0)
        } else {
            self.unary(a, 0.0, 0.0)
        }
    }

    /// `|a|` with subgradient 0 at the kink.
    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let d = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(a, x.abs(), d)
    }

    pub fn max0(&mut self, a: Var) -> Var {
        self.relu(a)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.value(x)).sum();
        self.custom_iter(v, xs.iter().map(|&x| (x, 1.0)))
    }

    pub fn mean(&mut self, xs: &[Var]) -> Var {
        let s = self.sum(xs);
        self.mul_const(s, 1.0 / xs.len() as f64)
    }

    /// Adjoints of every node with respect to `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut adj = vec![0.0; out.index() + 1];
        adj[out.index()] = 1.0;
        for i in (0..=out.index()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { self.edge_end[i - 1] as usize };
            let end = self.edge_end[i] as usize;
            for &(p, d) in &self.edges[start..end] {
                adj[p as usize] += g * d;
            }
        }
        Gradients(adj)
    }

    /// Like [`Tape::backward`] but rejects anything other than a single output.
    pub fn backward_outputs(&self, outs: &[Var]) -> Result<Gradients> {
        match outs {
            [out] => Ok(self.backward(*out)),
            _ => Err(Error::NonScalarOutput(outs.len())),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
