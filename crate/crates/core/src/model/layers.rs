//! Dense layers over slices of a flat parameter vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A named region of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    /// `[rows, cols]` for matrices, `[len]` for vectors.
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Incrementally assigns parameter offsets.
#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    pub blocks: Vec<ParamBlock>,
    next: usize,
}

impl LayoutBuilder {
    fn alloc(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.next;
        let block = ParamBlock {
            name,
            offset,
            shape,
        };
        self.next += block.len();
        self.blocks.push(block);
        offset
    }

    pub fn dense(&mut self, name: &str, input: usize, output: usize, bias: bool) -> Dense {
        let w = self.alloc(format!("{name}.weight"), vec![output, input]);
        let b = bias.then(|| self.alloc(format!("{name}.bias"), vec![output]));
        Dense {
            input,
            output,
            w,
            b,
        }
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

/// `y = W x + b` with `W` stored row-major as `output x input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: usize,
    pub b: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
    /// Uniform in `±sqrt(6 / fan_in)`, for layers followed by a rectifier.
    He,
}

impl Dense {
    fn weights<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.w..self.w + self.input * self.output]
    }

    pub fn init<R: Rng>(&self, params: &mut [f64], init: Init, rng: &mut R) {
        let bound = match init {
            Init::Xavier => (6.0 / (self.input + self.output) as f64).sqrt(),
            Init::He => (6.0 / self.input as f64).sqrt(),
        };
        for w in &mut params[self.w..self.w + self.input * self.output] {
            *w = rng.random_range(-bound..bound);
        }
        if let Some(b) = self.b {
            params[b..b + self.output].fill(0.0);
        }
    }

    /// `out = W x + b`, overwriting `out`.
    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input);
        debug_assert_eq!(out.len(), self.output);
        let w = self.weights(params);
        for (o, y) in out.iter_mut().enumerate() {
            let row = &w[o * self.input..(o + 1) * self.input];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *y = acc + self.b.map_or(0.0, |b| params[b + o]);
        }
    }

    /// `out += W x` (no bias).
    pub fn forward_add(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let w = self.weights(params);
        for (o, y) in out.iter_mut().enumerate() {
            let row = &w[o * self.input..(o + 1) * self.input];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *y += acc;
        }
    }

    /// Accumulate parameter gradients for upstream gradient `dout` at input
    /// `x`, and add `W^T dout` into `dx` when given.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dout: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        {
            let gw = &mut grad[self.w..self.w + self.input * self.output];
            for (o, &g) in dout.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut gw[o * self.input..(o + 1) * self.input];
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += g * xi;
                }
            }
        }
        if let Some(b) = self.b {
            for (gb, g) in grad[b..b + self.output].iter_mut().zip(dout) {
                *gb += g;
            }
        }
        if let Some(dx) = dx {
            let w = self.weights(params);
            for (o, &g) in dout.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * self.input..(o + 1) * self.input];
                for (d, wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
    }
}

pub(crate) fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zero the entries of `grad` whose activation was clipped by the rectifier.
pub(crate) fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
