//! Forward and backward passes of the recurrent model and the MLP baseline.
//!
//! Both share one parameter layout scheme: an optional Elman trunk followed by
//! a regression head and, for the recurrent model, a classification head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu_backward, relu_inplace, Dense, Init, LayoutBuilder, ParamBlock};
use super::loss::{joint_loss_grad, LossWeights};
use super::{ModelError, Sample};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_REG_HIDDEN: [usize; 3] = [64, 64, 32];
pub const DEFAULT_CLS_HIDDEN: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    /// Elman recurrence over the sequence, regression and classification heads.
    Rnn,
    /// Feedforward regression on the last vector of the sequence.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    pub kind: ArchKind,
    pub input_dim: usize,
    /// Recurrent state size; unused by the MLP.
    pub hidden: usize,
    /// Number of classes; 0 disables the classification head.
    pub k: usize,
    pub reg_hidden: Vec<usize>,
    pub cls_hidden: usize,
    pub dropout: f64,
}

impl Arch {
    pub fn rnn(input_dim: usize, k: usize) -> Self {
        Self {
            kind: ArchKind::Rnn,
            input_dim,
            hidden: DEFAULT_HIDDEN,
            k,
            reg_hidden: DEFAULT_REG_HIDDEN.to_vec(),
            cls_hidden: DEFAULT_CLS_HIDDEN,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn mlp(input_dim: usize) -> Self {
        Self {
            kind: ArchKind::Mlp,
            input_dim,
            hidden: 0,
            k: 0,
            reg_hidden: DEFAULT_REG_HIDDEN.to_vec(),
            cls_hidden: 0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Recurrent {
    wx: Dense,
    wh: Dense,
}

#[derive(Debug, Clone)]
struct ClsHead {
    hidden: Dense,
    out: Dense,
}

/// Parameter layout and pass implementations for one [`Arch`].
#[derive(Debug, Clone)]
pub struct Network {
    arch: Arch,
    blocks: Vec<ParamBlock>,
    n_params: usize,
    rnn: Option<Recurrent>,
    reg: Vec<Dense>,
    cls: Option<ClsHead>,
}

/// Activations of one sample kept for the backward pass.
#[derive(Debug, Default)]
struct Trace {
    /// `hs[0]` is the zero state, `hs[t + 1]` the state after step `t`.
    hs: Vec<Vec<f64>>,
    /// Inputs of each regression layer; `reg_in[0]` is the trunk output.
    reg_in: Vec<Vec<f64>>,
    pred: f64,
    cls_hidden: Vec<f64>,
    mask: Vec<f64>,
    cls_dropped: Vec<f64>,
    logits: Vec<f64>,
}

impl Network {
    pub fn new(arch: Arch) -> Result<Self, ModelError> {
        if arch.input_dim == 0
            || arch.reg_hidden.is_empty()
            || arch.reg_hidden.contains(&0)
            || (arch.kind == ArchKind::Rnn && arch.hidden == 0)
            || (arch.k > 0 && arch.cls_hidden == 0)
            || !(0.0..1.0).contains(&arch.dropout)
        {
            return Err(ModelError::InvalidArch(format!("{arch:?}")));
        }
        let mut lb = LayoutBuilder::default();
        let (rnn, trunk) = match arch.kind {
            ArchKind::Rnn => (
                Some(Recurrent {
                    wx: lb.dense("rnn.input", arch.input_dim, arch.hidden, true),
                    wh: lb.dense("rnn.recurrent", arch.hidden, arch.hidden, false),
                }),
                arch.hidden,
            ),
            ArchKind::Mlp => (None, arch.input_dim),
        };
        let mut reg = Vec::new();
        let mut prev = trunk;
        for (i, &h) in arch.reg_hidden.iter().enumerate() {
            reg.push(lb.dense(&format!("reg.{i}"), prev, h, true));
            prev = h;
        }
        reg.push(lb.dense("reg.out", prev, 1, true));
        let cls = (arch.k > 0).then(|| ClsHead {
            hidden: lb.dense("cls.0", trunk, arch.cls_hidden, true),
            out: lb.dense("cls.out", arch.cls_hidden, arch.k, true),
        });
        let n_params = lb.total();
        Ok(Self {
            arch,
            blocks: lb.blocks,
            n_params,
            rnn,
            reg,
            cls,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    /// Named parameter regions in storage order.
    pub fn layout(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Indices of parameters used only by the classification head.
    pub fn cls_param_range(&self) -> Option<std::ops::Range<usize>> {
        self.cls.as_ref().map(|c| c.hidden.w..self.n_params)
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.n_params];
        if let Some(r) = &self.rnn {
            r.wx.init(&mut p, Init::Xavier, &mut rng);
            r.wh.init(&mut p, Init::Xavier, &mut rng);
        }
        let last = self.reg.len() - 1;
        for (i, d) in self.reg.iter().enumerate() {
            d.init(&mut p, if i == last { Init::Xavier } else { Init::He }, &mut rng);
        }
        if let Some(c) = &self.cls {
            c.hidden.init(&mut p, Init::He, &mut rng);
            c.out.init(&mut p, Init::Xavier, &mut rng);
        }
        p
    }

    fn check(&self, params: &[f64], s: &Sample) -> Result<(), ModelError> {
        if params.len() != self.n_params {
            return Err(ModelError::ShapeMismatch {
                what: "parameters",
                got: params.len(),
                expected: self.n_params,
            });
        }
        if s.steps == 0 || s.seq.len() != s.steps * self.arch.input_dim {
            return Err(ModelError::ShapeMismatch {
                what: "sequence",
                got: s.seq.len(),
                expected: s.steps.max(1) * self.arch.input_dim,
            });
        }
        Ok(())
    }

    /// `dropout_rng` is `Some` in training mode only.
    fn forward(
        &self,
        params: &[f64],
        s: &Sample,
        with_cls: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Trace {
        let d = self.arch.input_dim;
        let mut tr = Trace::default();
        let trunk = match &self.rnn {
            Some(r) => {
                tr.hs.push(vec![0.0; self.arch.hidden]);
                for t in 0..s.steps {
                    let mut h = vec![0.0; self.arch.hidden];
                    r.wx.forward(params, &s.seq[t * d..(t + 1) * d], &mut h);
                    r.wh.forward_add(params, &tr.hs[t], &mut h);
                    h.iter_mut().for_each(|v| *v = v.tanh());
                    tr.hs.push(h);
                }
                tr.hs[s.steps].clone()
            }
            None => s.seq[(s.steps - 1) * d..].to_vec(),
        };
        tr.reg_in.push(trunk);
        for (i, layer) in self.reg.iter().enumerate() {
            let mut out = vec![0.0; layer.output];
            layer.forward(params, &tr.reg_in[i], &mut out);
            if i + 1 < self.reg.len() {
                relu_inplace(&mut out);
                tr.reg_in.push(out);
            } else {
                tr.pred = out[0];
            }
        }
        if let (Some(c), true) = (&self.cls, with_cls) {
            let mut h = vec![0.0; c.hidden.output];
            c.hidden.forward(params, &tr.reg_in[0], &mut h);
            relu_inplace(&mut h);
            let p = self.arch.dropout;
            tr.mask = match dropout_rng {
                Some(rng) if p > 0.0 => (0..h.len())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                    .collect(),
                _ => vec![1.0; h.len()],
            };
            tr.cls_dropped = h.iter().zip(&tr.mask).map(|(a, m)| a * m).collect();
            tr.cls_hidden = h;
            tr.logits = vec![0.0; self.arch.k];
            c.out.forward(params, &tr.cls_dropped, &mut tr.logits);
        }
        tr
    }

    /// Inference: standardized speed and class logits (empty for the MLP).
    pub fn predict(&self, params: &[f64], s: &Sample) -> Result<(f64, Vec<f64>), ModelError> {
        self.check(params, s)?;
        let tr = self.forward(params, s, true, None);
        Ok((tr.pred, tr.logits))
    }

    pub fn predict_speed(&self, params: &[f64], s: &Sample) -> Result<f64, ModelError> {
        self.check(params, s)?;
        Ok(self.forward(params, s, false, None).pred)
    }

    /// Mean joint loss over `batch`; its gradient is added into `grad`.
    /// Returns `(mean loss, mean squared error)`.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        batch: &[Sample],
        weights: &LossWeights,
        rng: &mut ChaCha8Rng,
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let scale = 1.0 / batch.len() as f64;
        let with_cls = self.cls.is_some() && weights.w_cls != 0.0;
        let mut loss = 0.0;
        let mut sq = 0.0;
        let mut dlogits = vec![0.0; self.arch.k];
        for s in batch {
            self.check(params, s)?;
            let tr = self.forward(params, s, with_cls, Some(&mut *rng));
            let logits: &[f64] = if with_cls { &tr.logits } else { &[] };
            let dl = &mut dlogits[..logits.len()];
            let (l, dpred) = joint_loss_grad(tr.pred, s.label, logits, s.cluster, weights, scale, dl)?;
            loss += l;
            sq += (tr.pred - s.label).powi(2);
            self.backward(params, s, &tr, dpred, dl, grad);
        }
        Ok((loss, sq * scale))
    }

    fn backward(
        &self,
        params: &[f64],
        s: &Sample,
        tr: &Trace,
        dpred: f64,
        dlogits: &[f64],
        grad: &mut [f64],
    ) {
        let trunk_dim = tr.reg_in[0].len();
        let mut dz = vec![0.0; trunk_dim];
        let need_dz = self.rnn.is_some();

        let mut g = vec![dpred];
        for i in (0..self.reg.len()).rev() {
            let layer = &self.reg[i];
            let mut dx = vec![0.0; layer.input];
            let want_dx = i > 0 || need_dz;
            layer.backward(params, &tr.reg_in[i], &g, grad, want_dx.then_some(&mut dx[..]));
            if i > 0 {
                relu_backward(&tr.reg_in[i], &mut dx);
            } else if need_dz {
                dz.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            }
            g = dx;
        }

        if let (Some(c), false) = (&self.cls, dlogits.is_empty()) {
            let mut dd = vec![0.0; c.out.input];
            c.out.backward(params, &tr.cls_dropped, dlogits, grad, Some(&mut dd));
            for (v, m) in dd.iter_mut().zip(&tr.mask) {
                *v *= m;
            }
            relu_backward(&tr.cls_hidden, &mut dd);
            let mut dx = vec![0.0; trunk_dim];
            c.hidden.backward(params, &tr.reg_in[0], &dd, grad, need_dz.then_some(&mut dx[..]));
            dz.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }

        if let Some(r) = &self.rnn {
            let d = self.arch.input_dim;
            let mut dh = dz;
            for t in (0..s.steps).rev() {
                let h = &tr.hs[t + 1];
                let da: Vec<f64> = dh.iter().zip(h).map(|(g, h)| g * (1.0 - h * h)).collect();
                r.wx.backward(params, &s.seq[t * d..(t + 1) * d], &da, grad, None);
                let mut prev = vec![0.0; self.arch.hidden];
                let want = t > 0;
                r.wh.backward(params, &tr.hs[t], &da, grad, want.then_some(&mut prev[..]));
                dh = prev;
            }
        }
    }
}
