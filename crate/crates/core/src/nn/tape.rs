//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Operations are recorded in execution order on a [`Tape`]; [`Tape::backward`]
//! walks the tape in reverse and accumulates adjoints. Every value is a 2-D
//! array; scalars are 1 × 1 and per-row reductions are N × 1.

use ndarray::{s, Array2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Relu(usize),
    Tanh(usize),
    RowNorm(usize),
    RowSumSq(usize),
    AddScalar(usize),
    Scale(usize, f64),
    Mean(usize),
    Rows(usize, usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every tape node with respect to the differentiated output.
pub struct Gradients(Vec<Option<Array2<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    /// `a + 1·bias` with `bias` of shape 1 × cols.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddBias(a.0, bias.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    /// Euclidean norm of each row, N × 1.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).map_axis(Axis(1), |r| r.dot(&r).sqrt()).insert_axis(Axis(1));
        self.push(v, Op::RowNorm(a.0))
    }

    /// Squared Euclidean norm of each row, N × 1.
    pub fn row_sum_sq(&mut self, a: Var) -> Var {
        let v = self.value(a).map_axis(Axis(1), |r| r.dot(&r)).insert_axis(Axis(1));
        self.push(v, Op::RowSumSq(a.0))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        self.push(v, Op::AddScalar(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x * c);
        self.push(v, Op::Scale(a.0, c))
    }

    /// Mean over all entries, 1 × 1.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean().unwrap_or(0.0);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a.0))
    }

    /// Rows `start..start + len` of `a`.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::Rows(a.0, start))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Back-propagates from the 1 × 1 node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones(self.nodes[out.0].value.raw_dim()));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, a, g.dot(&self.nodes[b].value.t()));
                    accumulate(&mut grads, b, self.nodes[a].value.t().dot(&g));
                }
                Op::AddBias(a, b) => {
                    accumulate(&mut grads, b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, b, g.clone());
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, b, -&g);
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, a, &g * &mask);
                }
                Op::Tanh(a) => {
                    let d = node.value.mapv(|y| 1.0 - y * y);
                    accumulate(&mut grads, a, &g * &d);
                }
                Op::RowNorm(a) => {
                    let x = &self.nodes[a].value;
                    let mut d = Array2::zeros(x.raw_dim());
                    for (i, mut row) in d.rows_mut().into_iter().enumerate() {
                        let n = node.value[[i, 0]];
                        if n > 0.0 {
                            row.assign(&(&x.row(i) * (g[[i, 0]] / n)));
                        }
                    }
                    accumulate(&mut grads, a, d);
                }
                Op::RowSumSq(a) => {
                    let x = &self.nodes[a].value;
                    accumulate(&mut grads, a, x * &(&g * 2.0));
                }
                Op::AddScalar(a) => accumulate(&mut grads, a, g.clone()),
                Op::Scale(a, c) => accumulate(&mut grads, a, g.mapv(|x| x * c)),
                Op::Mean(a) => {
                    let shape = self.nodes[a].value.raw_dim();
                    let len = self.nodes[a].value.len().max(1) as f64;
                    accumulate(&mut grads, a, Array2::from_elem(shape, g[[0, 0]] / len));
                }
                Op::Rows(a, start) => {
                    let shape = self.nodes[a].value.raw_dim();
                    let mut d = Array2::zeros(shape);
                    d.slice_mut(s![start..start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, a, d);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients(grads)
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], idx: usize, g: Array2<f64>) {
    match &mut grads[idx] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
