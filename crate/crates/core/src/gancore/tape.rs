//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Gradients are themselves recorded as tape operations, so a gradient can
//! be differentiated again. The gradient penalty needs exactly that: the
//! input-gradient norm of the critic is part of the loss whose parameter
//! gradient drives the critic update.
//!
//! Nodes are appended in evaluation order, which makes the node index a
//! topological order. Piecewise-linear activations, dropout and clamping are
//! recorded as multiplication by a constant mask, so their second derivative
//! is zero (exact away from the kinks).

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{self, ConvGeom, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Shift(Var),
    Masked(Var, Rc<Vec<T>>),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Reshape(Var),
    Swap01(Var),
    SumAll(Var),
    BroadcastAll(Var),
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    ChannelSum(Var),
    ChannelBroadcast(Var),
    Unfold(Var, ConvGeom),
    Fold(Var, ConvGeom),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
}

impl<T> Op<T> {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul { a, b, .. } => [Some(a), Some(b)],
            Scale(a, _) | Masked(a, _) | Unfold(a, _) | Fold(a, _) => [Some(a), None],
            Shift(a) | Reshape(a) | Swap01(a) | SumAll(a) | BroadcastAll(a) | SumRows(a) | BroadcastRows(a)
            | SumCols(a) | BroadcastCols(a) | ChannelSum(a) | ChannelBroadcast(a) | Tanh(a) | Sigmoid(a)
            | Exp(a) | Log(a) | Sqrt(a) => [Some(a), None],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// First element of a node (the value of a scalar node).
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.data[0]
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Copy of `v` as a fresh leaf; no gradient flows back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.leaf(t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let t = self.value(a).zip(self.value(b), |x, y| x / y);
        self.push(t, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a).map(|x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn shift(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::Shift(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Elementwise product with a constant mask.
    pub fn mask_mul(&mut self, a: Var, mask: Rc<Vec<T>>) -> Var {
        let x = self.value(a);
        assert_eq!(x.data.len(), mask.len(), "mask length");
        let t = Tensor::new(x.shape.clone(), x.data.iter().zip(mask.iter()).map(|(&v, &m)| v * m).collect());
        self.push(t, Op::Masked(a, mask))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let mask: Vec<T> = self
            .value(a)
            .data
            .iter()
            .map(|&v| if v > T::zero() { T::one() } else { slope })
            .collect();
        self.mask_mul(a, Rc::new(mask))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping happened.
    /// Returns the node and whether any element was clamped.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> (Var, bool) {
        let x = self.value(a);
        let mut clamped = false;
        let mut mask = Vec::with_capacity(x.data.len());
        let mut data = Vec::with_capacity(x.data.len());
        for &v in &x.data {
            if v < lo || v > hi {
                clamped = true;
                mask.push(T::zero());
                data.push(if v < lo { lo } else { hi });
            } else {
                mask.push(T::one());
                data.push(v);
            }
        }
        let t = Tensor::new(x.shape.clone(), data);
        (self.push(t, Op::Masked(a, Rc::new(mask))), clamped)
    }

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let t = tensor::matmul(self.value(a), self.value(b), ta, tb);
        self.push(t, Op::MatMul { a, b, ta, tb })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.value(a).clone().reshaped(shape);
        self.push(t, Op::Reshape(a))
    }

    /// `[A, B, L] → [B, A, L]`.
    pub fn swap01(&mut self, a: Var) -> Var {
        let t = tensor::swap01(self.value(a));
        self.push(t, Op::Swap01(a))
    }

    /// Sum of every element, as a `[1]` node.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// `[1] → shape`.
    pub fn broadcast_all(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.item(a);
        self.push(Tensor::full(shape, v), Op::BroadcastAll(a))
    }

    /// `[n, m] → [m]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = tensor::sum_rows(self.value(a));
        self.push(t, Op::SumRows(a))
    }

    /// `[m] → [n, m]`.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let v = self.value(a);
        let m = v.len();
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            data.extend_from_slice(&v.data);
        }
        self.push(Tensor::new(vec![n, m], data), Op::BroadcastRows(a))
    }

    /// `[n, m] → [n]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = tensor::sum_cols(self.value(a));
        self.push(t, Op::SumCols(a))
    }

    /// `[n] → [n, m]`.
    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Var {
        let v = self.value(a);
        let n = v.len();
        let mut data = Vec::with_capacity(n * m);
        for &x in &v.data {
            data.extend(core::iter::repeat(x).take(m));
        }
        self.push(Tensor::new(vec![n, m], data), Op::BroadcastCols(a))
    }

    /// `[N, C, ...] → [C]`.
    pub fn channel_sum(&mut self, a: Var) -> Var {
        let t = tensor::channel_sum(self.value(a));
        self.push(t, Op::ChannelSum(a))
    }

    /// `[C] → shape` with `shape[1] == C`.
    pub fn channel_broadcast(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = tensor::channel_broadcast(self.value(a), shape);
        self.push(t, Op::ChannelBroadcast(a))
    }

    pub fn unfold(&mut self, a: Var, g: ConvGeom) -> Var {
        let t = tensor::unfold(self.value(a), &g);
        self.push(t, Op::Unfold(a, g))
    }

    pub fn fold(&mut self, a: Var, g: ConvGeom) -> Var {
        let t = tensor::fold(self.value(a), &g);
        self.push(t, Op::Fold(a, g))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.tanh());
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| {
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        });
        self.push(t, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.exp());
        self.push(t, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.ln());
        self.push(t, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.sqrt());
        self.push(t, Op::Sqrt(a))
    }

    /// Gradients of the single-element node `out` with respect to `wrt`.
    ///
    /// The backward pass is recorded on this tape, so the returned nodes can
    /// enter further computation and be differentiated again. Nodes in `wrt`
    /// that `out` does not depend on get a zero gradient.
    pub fn grad(&mut self, out: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.value(out).len(), 1, "grad needs a scalar output");
        let n = out.0 + 1;
        let mut dep = vec![false; n];
        for w in wrt {
            if w.0 < n {
                dep[w.0] = true;
            }
        }
        for i in 0..n {
            if !dep[i] {
                dep[i] = self.nodes[i].op.parents().iter().flatten().any(|p| dep[p.0]);
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; n];
        if dep[out.0] {
            grads[out.0] = Some(self.leaf(Tensor::full(&self.value(out).shape.clone(), T::one())));
        }
        for i in (0..n).rev() {
            if !dep[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let y = Var(i);
            let op = self.nodes[i].op.clone();
            let mut contributions: [(Option<Var>, Option<Var>); 2] = [(None, None), (None, None)];
            let needs = |v: Var| dep[v.0];
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    contributions = [(Some(a), Some(g)), (Some(b), Some(g))];
                }
                Op::Sub(a, b) => {
                    let gb = if needs(b) { Some(self.neg(g)) } else { None };
                    contributions = [(Some(a), Some(g)), (Some(b), gb)];
                }
                Op::Mul(a, b) => {
                    let ga = if needs(a) { Some(self.mul(g, b)) } else { None };
                    let gb = if needs(b) { Some(self.mul(g, a)) } else { None };
                    contributions = [(Some(a), ga), (Some(b), gb)];
                }
                Op::Div(a, b) => {
                    let ga = if needs(a) { Some(self.div(g, b)) } else { None };
                    let gb = if needs(b) {
                        let gy = self.mul(g, y);
                        let q = self.div(gy, b);
                        Some(self.neg(q))
                    } else {
                        None
                    };
                    contributions = [(Some(a), ga), (Some(b), gb)];
                }
                Op::Scale(a, c) => contributions[0] = (Some(a), Some(self.scale(g, c))),
                Op::Shift(a) => contributions[0] = (Some(a), Some(g)),
                Op::Masked(a, mask) => contributions[0] = (Some(a), Some(self.mask_mul(g, mask))),
                Op::MatMul { a, b, ta, tb } => {
                    let ga = if needs(a) {
                        Some(match (ta, tb) {
                            (false, false) => self.matmul(g, b, false, true),
                            (false, true) => self.matmul(g, b, false, false),
                            (true, false) => self.matmul(b, g, false, true),
                            (true, true) => self.matmul(b, g, true, true),
                        })
                    } else {
                        None
                    };
                    let gb = if needs(b) {
                        Some(match (ta, tb) {
                            (false, false) => self.matmul(a, g, true, false),
                            (false, true) => self.matmul(g, a, true, false),
                            (true, false) => self.matmul(a, g, false, false),
                            (true, true) => self.matmul(g, a, true, true),
                        })
                    } else {
                        None
                    };
                    contributions = [(Some(a), ga), (Some(b), gb)];
                }
                Op::Reshape(a) => {
                    let s = self.value(a).shape.clone();
                    contributions[0] = (Some(a), Some(self.reshape(g, &s)));
                }
                Op::Swap01(a) => contributions[0] = (Some(a), Some(self.swap01(g))),
                Op::SumAll(a) => {
                    let s = self.value(a).shape.clone();
                    contributions[0] = (Some(a), Some(self.broadcast_all(g, &s)));
                }
                Op::BroadcastAll(a) => contributions[0] = (Some(a), Some(self.sum_all(g))),
                Op::SumRows(a) => {
                    let rows = self.value(a).shape[0];
                    contributions[0] = (Some(a), Some(self.broadcast_rows(g, rows)));
                }
                Op::BroadcastRows(a) => contributions[0] = (Some(a), Some(self.sum_rows(g))),
                Op::SumCols(a) => {
                    let cols = self.value(a).shape[1];
                    contributions[0] = (Some(a), Some(self.broadcast_cols(g, cols)));
                }
                Op::BroadcastCols(a) => contributions[0] = (Some(a), Some(self.sum_cols(g))),
                Op::ChannelSum(a) => {
                    let s = self.value(a).shape.clone();
                    contributions[0] = (Some(a), Some(self.channel_broadcast(g, &s)));
                }
                Op::ChannelBroadcast(a) => contributions[0] = (Some(a), Some(self.channel_sum(g))),
                Op::Unfold(a, geom) => contributions[0] = (Some(a), Some(self.fold(g, geom))),
                Op::Fold(a, geom) => contributions[0] = (Some(a), Some(self.unfold(g, geom))),
                Op::Tanh(a) => {
                    let y2 = self.square(y);
                    let neg = self.neg(y2);
                    let d = self.shift(neg, T::one());
                    contributions[0] = (Some(a), Some(self.mul(g, d)));
                }
                Op::Sigmoid(a) => {
                    let neg = self.neg(y);
                    let one_minus = self.shift(neg, T::one());
                    let d = self.mul(y, one_minus);
                    contributions[0] = (Some(a), Some(self.mul(g, d)));
                }
                Op::Exp(a) => contributions[0] = (Some(a), Some(self.mul(g, y))),
                Op::Log(a) => contributions[0] = (Some(a), Some(self.div(g, a))),
                Op::Sqrt(a) => {
                    let two_y = self.scale(y, T::of(2.0));
                    contributions[0] = (Some(a), Some(self.div(g, two_y)));
                }
            }
            for (p, c) in contributions {
                if let (Some(p), Some(c)) = (p, c) {
                    if !dep[p.0] {
                        continue;
                    }
                    grads[p.0] = Some(match grads[p.0] {
                        None => c,
                        Some(e) => self.add(e, c),
                    });
                }
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let s = self.value(*w).shape.clone();
                    self.leaf(Tensor::zeros(&s))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    /// Central finite differences of `f` at `x`.
    fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn check(build: &dyn Fn(&mut Tape<f64>, Var) -> Var, shape: &[usize], x: &[f64]) {
        let f = |v: &[f64]| {
            let mut t = Tape::new();
            let xv = t.leaf(Tensor::new(shape.to_vec(), v.to_vec()));
            let o = build(&mut t, xv);
            t.item(o)
        };
        let mut t = Tape::new();
        let xv = t.leaf(Tensor::new(shape.to_vec(), x.to_vec()));
        let o = build(&mut t, xv);
        let g = t.grad(o, &[xv])[0];
        let num = numeric_grad(&f, x);
        for (a, b) in t.value(g).data.iter().zip(&num) {
            assert!(close(*a, *b, 1e-6), "analytic {a} numeric {b}");
        }
    }

    #[test]
    fn elementwise_gradients() {
        let x = [0.3, -0.7, 1.2, 0.5];
        check(&|t, x| { let y = t.tanh(x); t.sum_all(y) }, &[4], &x);
        check(&|t, x| { let y = t.sigmoid(x); let z = t.mul(y, x); t.sum_all(z) }, &[4], &x);
        check(&|t, x| { let e = t.exp(x); let s = t.shift(e, 1.0); let l = t.log(s); t.sum_all(l) }, &[4], &x);
        check(&|t, x| { let s = t.square(x); let s = t.shift(s, 0.1); let r = t.sqrt(s); let d = t.div(x, r); t.sum_all(d) }, &[4], &x);
        check(&|t, x| { let y = t.leaky_relu(x, 0.2); let y = t.mul(y, y); t.mean_all(y) }, &[4], &x);
    }

    #[test]
    fn structural_gradients() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        check(
            &|t, x| {
                let w = t.leaf(Tensor::new(vec![4, 2], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8]));
                let y = t.matmul(x, w, false, false);
                let y = t.tanh(y);
                let s = t.sum_rows(y);
                let b = t.broadcast_rows(s, 3);
                let c = t.sum_cols(b);
                let c = t.square(c);
                t.sum_all(c)
            },
            &[3, 4],
            &x,
        );
        check(
            &|t, x| {
                let xt = t.matmul(x, x, true, false);
                let y = t.matmul(x, xt, false, true);
                let r = t_reshape(t, y);
                let s = t.swap01(r);
                let s = t.tanh(s);
                t.sum_all(s)
            },
            &[3, 4],
            &x,
        );
        fn t_reshape(t: &mut Tape<f64>, y: Var) -> Var {
            t.reshape(y, &[3, 2, 2])
        }
    }

    #[test]
    fn conv_and_channel_gradients() {
        let g = ConvGeom {
            batch: 2,
            channels: 2,
            height: 4,
            width: 4,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.91).cos()).collect();
        check(
            &move |t, x| {
                let cols = t.unfold(x, g);
                let w = t.leaf(Tensor::new(vec![1, 18], (0..18).map(|i| 0.05 * i as f64 - 0.4).collect()));
                let y = t.matmul(w, cols, false, false);
                let y = t.tanh(y);
                let back = t.matmul(w, y, true, false);
                let img = t.fold(back, g);
                let cs = t.channel_sum(img);
                let cb = t.channel_broadcast(cs, &[2, 2, 4, 4]);
                let p = t.mul(cb, img);
                let p = t.tanh(p);
                t.sum_all(p)
            },
            &[2, 2, 4, 4],
            &x,
        );
    }

    #[test]
    fn second_order_gradient() {
        // f(x) = sum(tanh(x)^2); check d/dx of ||df/dx||^2 against finite differences of the
        // analytic first derivative.
        let x = [0.4, -0.3, 0.9];
        let first = |v: &[f64]| -> f64 {
            let mut t = Tape::new();
            let xv = t.leaf(Tensor::new(vec![3], v.to_vec()));
            let y = t.tanh(xv);
            let y = t.square(y);
            let s = t.sum_all(y);
            let g = t.grad(s, &[xv])[0];
            let g2 = t.square(g);
            let o = t.sum_all(g2);
            t.item(o)
        };
        let mut t = Tape::new();
        let xv = t.leaf(Tensor::new(vec![3], x.to_vec()));
        let y = t.tanh(xv);
        let y = t.square(y);
        let s = t.sum_all(y);
        let g = t.grad(s, &[xv])[0];
        let g2 = t.square(g);
        let o = t.sum_all(g2);
        let gg = t.grad(o, &[xv])[0];
        let num = numeric_grad(&first, &x);
        for (a, b) in t.value(gg).data.iter().zip(&num) {
            assert!(close(*a, *b, 1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn unreachable_wrt_gets_zero() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let b = t.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let s = t.sum_all(a);
        let g = t.grad(s, &[a, b]);
        assert_eq!(t.value(g[0]).data, vec![1.0, 1.0]);
        assert_eq!(t.value(g[1]).data, vec![0.0; 3]);
    }

    #[test]
    fn clamp_blocks_gradient() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::new(vec![3], vec![-1.0, 0.5, 2.0]));
        let (c, clamped) = t.clamp(a, 0.0, 1.0);
        assert!(clamped);
        assert_eq!(t.value(c).data, vec![0.0, 0.5, 1.0]);
        let s = t.sum_all(c);
        let g = t.grad(s, &[a])[0];
        assert_eq!(t.value(g).data, vec![0.0, 1.0, 0.0]);
    }
}
