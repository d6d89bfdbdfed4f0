//! The three-branch complex 3D CNN.
//!
//! Input patches are `[batch, window, window, channels, 1]`: the six coherency
//! channels form the depth axis of the 3D convolution. Branch `k` stacks `k`
//! convolution + CReLU blocks. Branch outputs are concatenated on the feature
//! axis, optionally recalibrated by squeeze-and-excitation, flattened and fed
//! through complex dense layers to complex logits whose magnitudes go through
//! a softmax.

use std::fmt;
use std::str::FromStr;

use crate::cvnn::{
    apply_mask, bottleneck_width, concat_channels, conv3d, conv3d_backward, crelu, crelu_backward, cross_entropy,
    dense, dense_backward, dropout_mask, head_backward, init, magnitude_softmax, one_hot, se_block, se_block_backward,
    split_channels, SeCache,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::ComplexTensor;
use crate::train::AdamState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Branch {
    Shallow,
    Medium,
    Deep,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Shallow, Branch::Medium, Branch::Deep];

    /// Number of convolution blocks.
    pub fn depth(self) -> usize {
        self as usize + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Shallow => "shallow",
            Branch::Medium => "medium",
            Branch::Deep => "deep",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Branch::Shallow => 'S',
            Branch::Medium => 'M',
            Branch::Deep => 'D',
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" | "s" | "shallow" => Ok(Branch::Shallow),
            "M" | "m" | "medium" => Ok(Branch::Medium),
            "D" | "d" | "deep" => Ok(Branch::Deep),
            other => Err(Error::InvalidConfig(format!("unknown branch {other:?}"))),
        }
    }
}

/// Parses a comma-separated branch list such as `S,M,D`. The result is sorted
/// and deduplicated.
pub fn parse_branches(s: &str) -> Result<Vec<Branch>> {
    let mut out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Branch>>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn format_branches(branches: &[Branch]) -> String {
    branches
        .iter()
        .map(|b| b.letter().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attention {
    None,
    /// One SE block at the end of every branch.
    BeforeFusion,
    /// One SE block on the concatenated features.
    AfterFusion,
}

impl FromStr for Attention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Attention::None),
            "before" | "before_fusion" => Ok(Attention::BeforeFusion),
            "after" | "after_fusion" => Ok(Attention::AfterFusion),
            other => Err(Error::InvalidConfig(format!("unknown attention placement {other:?}"))),
        }
    }
}

impl fmt::Display for Attention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attention::None => "none",
            Attention::BeforeFusion => "before",
            Attention::AfterFusion => "after",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub window: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub filters: usize,
    pub kernel: usize,
    pub branches: Vec<Branch>,
    pub attention: Attention,
    pub se_reduction: usize,
    pub dropout_rate: f64,
    pub fc_sizes: Vec<usize>,
}

impl ModelConfig {
    pub fn new(num_classes: usize) -> Self {
        Self {
            window: 13,
            in_channels: 6,
            num_classes,
            filters: 16,
            kernel: 3,
            branches: Branch::ALL.to_vec(),
            attention: Attention::AfterFusion,
            se_reduction: 4,
            dropout_rate: 0.25,
            fc_sizes: vec![128, 64],
        }
    }

    pub fn fused_channels(&self) -> usize {
        self.filters * self.branches.len()
    }

    pub fn flatten_len(&self) -> usize {
        self.window * self.window * self.in_channels * self.fused_channels()
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 5] {
        [batch, self.window, self.window, self.in_channels, 1]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.window < 3 || self.window % 2 == 0 {
            return bad(format!("window must be odd and >= 3, got {}", self.window));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.in_channels == 0 || self.filters == 0 {
            return bad("in_channels and filters must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.branches.is_empty() {
            return bad("at least one branch must be enabled".into());
        }
        if self.branches.windows(2).any(|w| w[0] >= w[1]) {
            return bad("branches must be sorted and distinct".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if self.fc_sizes.contains(&0) {
            return bad("dense layer widths must be positive".into());
        }
        match self.attention {
            Attention::None => {}
            Attention::BeforeFusion => {
                bottleneck_width(self.filters, self.se_reduction)?;
            }
            Attention::AfterFusion => {
                bottleneck_width(self.fused_channels(), self.se_reduction)?;
            }
        }
        Ok(())
    }

    /// Key/value text block, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let fc = self.fc_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!(
            "window = {}\nin_channels = {}\nnum_classes = {}\nfilters = {}\nkernel = {}\n\
             branches = {}\nattention = {}\nse_reduction = {}\ndropout = {}\nfc_sizes = {}\n",
            self.window,
            self.in_channels,
            self.num_classes,
            self.filters,
            self.kernel,
            format_branches(&self.branches),
            self.attention,
            self.se_reduction,
            self.dropout_rate,
            fc
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::new(0);
        let mut seen = std::collections::BTreeSet::new();
        let num = |k: &str, v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("{k}: bad integer {v:?}")))
        };
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "window" => cfg.window = num(k, v)?,
                "in_channels" => cfg.in_channels = num(k, v)?,
                "num_classes" => cfg.num_classes = num(k, v)?,
                "filters" => cfg.filters = num(k, v)?,
                "kernel" => cfg.kernel = num(k, v)?,
                "branches" => cfg.branches = parse_branches(v)?,
                "attention" => cfg.attention = v.parse()?,
                "se_reduction" => cfg.se_reduction = num(k, v)?,
                "dropout" => {
                    cfg.dropout_rate = v
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("dropout: bad number {v:?}")))?
                }
                "fc_sizes" => {
                    cfg.fc_sizes = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| num(k, s.trim()))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
            }
            seen.insert(k.to_string());
        }
        if !seen.contains("num_classes") {
            return Err(Error::InvalidConfig("num_classes missing".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Shape and initialization metadata for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Real-only parameters keep a zero imaginary plane.
    pub complex: bool,
    pub fan_in: usize,
    pub fan_out: usize,
    pub is_bias: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: ComplexTensor,
    pub complex: bool,
}

#[derive(Clone, Copy, Debug)]
struct Pair {
    a: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct BranchPlan {
    convs: Vec<Pair>,
    se: Option<Pair>,
}

/// Parameter indices of every layer, in parameter-list order.
#[derive(Clone, Debug)]
struct Plan {
    branches: Vec<BranchPlan>,
    fusion_se: Option<Pair>,
    dense: Vec<Pair>,
}

fn plan_and_specs(cfg: &ModelConfig) -> (Plan, Vec<ParamSpec>) {
    let mut specs = Vec::new();
    let push = |specs: &mut Vec<ParamSpec>, name: String, shape: Vec<usize>, complex, fi, fo, is_bias| {
        specs.push(ParamSpec {
            name,
            shape,
            complex,
            fan_in: fi,
            fan_out: fo,
            is_bias,
        });
        specs.len() - 1
    };
    let k = cfg.kernel;
    let taps = k * k * k;
    let f = cfg.filters;
    let mut branches = Vec::new();
    for &b in &cfg.branches {
        let mut convs = Vec::new();
        for layer in 0..b.depth() {
            let cin = if layer == 0 { 1 } else { f };
            let prefix = format!("{}.conv{}", b.name(), layer + 1);
            let w = push(
                &mut specs,
                format!("{prefix}.weight"),
                vec![k, k, k, cin, f],
                true,
                taps * cin,
                taps * f,
                false,
            );
            let bias = push(&mut specs, format!("{prefix}.bias"), vec![f], true, 0, 0, true);
            convs.push(Pair { a: w, b: bias });
        }
        let se = (cfg.attention == Attention::BeforeFusion).then(|| {
            let r = f / cfg.se_reduction;
            let w1 = push(
                &mut specs,
                format!("{}.se.w1", b.name()),
                vec![r, f],
                false,
                f,
                r,
                false,
            );
            let w2 = push(
                &mut specs,
                format!("{}.se.w2", b.name()),
                vec![f, r],
                false,
                r,
                f,
                false,
            );
            Pair { a: w1, b: w2 }
        });
        branches.push(BranchPlan { convs, se });
    }
    let c = cfg.fused_channels();
    let fusion_se = (cfg.attention == Attention::AfterFusion).then(|| {
        let r = c / cfg.se_reduction;
        let w1 = push(&mut specs, "fusion.se.w1".into(), vec![r, c], false, c, r, false);
        let w2 = push(&mut specs, "fusion.se.w2".into(), vec![c, r], false, r, c, false);
        Pair { a: w1, b: w2 }
    });
    let mut widths = vec![cfg.flatten_len()];
    widths.extend(&cfg.fc_sizes);
    widths.push(cfg.num_classes);
    let dense = widths
        .windows(2)
        .enumerate()
        .map(|(i, io)| {
            let w = push(
                &mut specs,
                format!("fc{}.weight", i + 1),
                vec![io[0], io[1]],
                true,
                io[0],
                io[1],
                false,
            );
            let b = push(&mut specs, format!("fc{}.bias", i + 1), vec![io[1]], true, 0, 0, true);
            Pair { a: w, b }
        })
        .collect();
    (
        Plan {
            branches,
            fusion_se,
            dense,
        },
        specs,
    )
}

/// Parameter names, shapes and kinds implied by a configuration, in storage
/// order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    plan_and_specs(cfg).1
}

#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    plan: Plan,
    pub params: Vec<Param>,
    pub optimizer: AdamState,
    /// Validation loss at the stored weights; infinite before training.
    pub best_val_loss: f64,
}

/// Activations kept for the backward pass.
struct BranchCache {
    /// Input and pre-activation of every convolution.
    convs: Vec<(ComplexTensor, ComplexTensor)>,
    se: Option<(ComplexTensor, SeCache)>,
}

struct DenseCache {
    input: ComplexTensor,
    pre: ComplexTensor,
    mask: Option<Vec<f64>>,
}

pub struct ForwardPass {
    branches: Vec<BranchCache>,
    branch_shapes: Vec<Vec<usize>>,
    fused_shape: Vec<usize>,
    flatten_len: usize,
    fusion_se: Option<(ComplexTensor, SeCache)>,
    dense: Vec<DenseCache>,
    pub logits: ComplexTensor,
    pub probs: Vec<f64>,
}

impl ForwardPass {
    /// Output shape of each enabled branch, in branch order.
    pub fn branch_shapes(&self) -> &[Vec<usize>] {
        &self.branch_shapes
    }

    /// Shape of the concatenated (and recalibrated) feature map.
    pub fn fused_shape(&self) -> &[usize] {
        &self.fused_shape
    }

    pub fn flatten_len(&self) -> usize {
        self.flatten_len
    }
}

impl Network {
    /// Glorot-initialized network; every tensor draws from its own stream
    /// derived from `seed` and its position.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (plan, specs) = plan_and_specs(config);
        let params = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut r: Rng = rng::rng(rng::derive(seed, i as u64));
                let value = if s.is_bias {
                    ComplexTensor::zeros(&s.shape)
                } else if s.complex {
                    init::glorot_complex(&s.shape, s.fan_in, s.fan_out, &mut r)
                } else {
                    init::glorot_real(&s.shape, s.fan_in, s.fan_out, &mut r)
                };
                Param {
                    name: s.name.clone(),
                    value,
                    complex: s.complex,
                }
            })
            .collect::<Vec<_>>();
        let optimizer = AdamState::new(&params);
        Ok(Self {
            config: config.clone(),
            plan,
            params,
            optimizer,
            best_val_loss: f64::INFINITY,
        })
    }

    /// Reassembles a network from stored parameters, checking them against the
    /// layer graph implied by `config`.
    pub fn from_parts(
        config: ModelConfig,
        params: Vec<Param>,
        optimizer: AdamState,
        best_val_loss: f64,
    ) -> Result<Self> {
        config.validate()?;
        let (plan, specs) = plan_and_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if s.name != p.name || s.shape != p.value.shape() || s.complex != p.complex {
                return Err(Error::InvalidConfig(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    p.name,
                    p.value.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        if optimizer.m.len() != params.len() || optimizer.v.len() != params.len() {
            return Err(Error::InvalidConfig("optimizer state does not match parameters".into()));
        }
        Ok(Self {
            config,
            plan,
            params,
            optimizer,
            best_val_loss,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    /// Values may be edited in place; names and shapes must stay as built.
    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// Complex parameters count once; real-only parameters count once too.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn p(&self, i: usize) -> &ComplexTensor {
        &self.params[i].value
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<usize> {
        let s = x.shape();
        let batch = s.first().copied().unwrap_or(0);
        if s != self.config.input_shape(batch) {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {s:?}",
                self.config.input_shape(batch)
            )));
        }
        Ok(batch)
    }

    /// Runs the network and keeps every activation the backward pass needs.
    /// `dropout_seed = None` is inference mode.
    pub fn forward_pass(&self, x: &ComplexTensor, dropout_seed: Option<u64>) -> Result<ForwardPass> {
        self.run(x, dropout_seed, true)
    }

    /// Class probabilities, `[batch * num_classes]` row-major. Inference mode
    /// when `dropout_seed` is `None`.
    pub fn forward(&self, x: &ComplexTensor, dropout_seed: Option<u64>) -> Result<Vec<f64>> {
        Ok(self.run(x, dropout_seed, false)?.probs)
    }

    fn run(&self, x: &ComplexTensor, dropout_seed: Option<u64>, keep: bool) -> Result<ForwardPass> {
        let batch = self.check_input(x)?;
        let mut branch_caches = Vec::with_capacity(self.plan.branches.len());
        let mut outputs = Vec::with_capacity(self.plan.branches.len());
        for bp in &self.plan.branches {
            let mut h = x.clone();
            let mut convs = Vec::new();
            for pair in &bp.convs {
                let pre = conv3d(&h, self.p(pair.a), self.p(pair.b))?;
                let post = crelu(&pre);
                if keep {
                    convs.push((h, pre));
                }
                h = post;
            }
            let mut se = None;
            if let Some(pair) = bp.se {
                let (y, cache) = se_block(&h, self.p(pair.a), self.p(pair.b))?;
                if keep {
                    se = Some((h, cache));
                }
                h = y;
            }
            branch_caches.push(BranchCache { convs, se });
            outputs.push(h);
        }
        let branch_shapes = outputs.iter().map(|o| o.shape().to_vec()).collect();
        let mut fused = if outputs.len() == 1 {
            outputs.pop().expect("one branch")
        } else {
            concat_channels(&outputs.iter().collect::<Vec<_>>())?
        };
        drop(outputs);
        let mut fusion_se = None;
        if let Some(pair) = self.plan.fusion_se {
            let (y, cache) = se_block(&fused, self.p(pair.a), self.p(pair.b))?;
            if keep {
                fusion_se = Some((fused, cache));
            }
            fused = y;
        }
        let fused_shape = fused.shape().to_vec();
        let flatten_len = fused.len() / batch.max(1);
        let mut h = fused.reshape(&[batch, flatten_len])?;

        let n_dense = self.plan.dense.len();
        let mut dense_caches = Vec::with_capacity(n_dense);
        for (i, pair) in self.plan.dense.iter().enumerate() {
            let pre = dense(&h, self.p(pair.a), self.p(pair.b))?;
            if i + 1 == n_dense {
                if keep {
                    dense_caches.push(DenseCache {
                        input: h,
                        pre: ComplexTensor::zeros(&[0]),
                        mask: None,
                    });
                }
                h = pre;
                break;
            }
            let mut act = crelu(&pre);
            let mask = match dropout_seed {
                Some(seed) if self.config.dropout_rate > 0.0 => {
                    let mut r = rng::rng(rng::derive(seed, i as u64));
                    let m = dropout_mask(act.len(), self.config.dropout_rate, &mut r);
                    act = apply_mask(&act, &m);
                    Some(m)
                }
                _ => None,
            };
            if keep {
                dense_caches.push(DenseCache { input: h, pre, mask });
            }
            h = act;
        }
        let logits = h;
        let probs = magnitude_softmax(&logits)?;
        Ok(ForwardPass {
            branches: branch_caches,
            branch_shapes,
            fused_shape,
            flatten_len,
            fusion_se,
            dense: dense_caches,
            logits,
            probs,
        })
    }

    /// Batch-mean cross-entropy and its gradient for every parameter, in
    /// parameter order. `labels` are class ids `1..=num_classes`.
    pub fn loss_and_grads(
        &self,
        x: &ComplexTensor,
        labels: &[u16],
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<ComplexTensor>)> {
        let targets = self.targets(labels)?;
        let pass = self.forward_pass(x, dropout_seed)?;
        if labels.len() != pass.logits.shape()[0] {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                pass.logits.shape()[0]
            )));
        }
        let loss = cross_entropy(&pass.probs, &targets, self.config.num_classes);
        let grads = self.backward(pass, &targets)?;
        Ok((loss, grads))
    }

    /// Batch-mean cross-entropy in inference mode.
    pub fn loss(&self, x: &ComplexTensor, labels: &[u16]) -> Result<f64> {
        let targets = self.targets(labels)?;
        let probs = self.forward(x, None)?;
        Ok(cross_entropy(&probs, &targets, self.config.num_classes))
    }

    fn targets(&self, labels: &[u16]) -> Result<Vec<f64>> {
        let n = self.config.num_classes;
        let mut idx = Vec::with_capacity(labels.len());
        for &l in labels {
            if l == 0 || l as usize > n {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes: n as u16,
                });
            }
            idx.push(l as usize - 1);
        }
        Ok(one_hot(&idx, n))
    }

    fn backward(&self, pass: ForwardPass, targets: &[f64]) -> Result<Vec<ComplexTensor>> {
        let mut grads: Vec<Option<ComplexTensor>> = vec![None; self.params.len()];
        let mut g = head_backward(&pass.logits, &pass.probs, targets)?;
        drop(pass.logits);

        let n_dense = self.plan.dense.len();
        for (i, (pair, cache)) in self.plan.dense.iter().zip(pass.dense).enumerate().rev() {
            if i + 1 < n_dense {
                if let Some(mask) = &cache.mask {
                    g = apply_mask(&g, mask);
                }
                g = crelu_backward(&cache.pre, &g);
            }
            let d = dense_backward(&cache.input, self.p(pair.a), &g, true)?;
            grads[pair.a] = Some(d.weight);
            grads[pair.b] = Some(d.bias);
            g = d.input.expect("requested");
        }

        let mut g = g.reshape(&pass.fused_shape)?;
        if let (Some(pair), Some((input, cache))) = (self.plan.fusion_se, pass.fusion_se) {
            let s = se_block_backward(&input, self.p(pair.a), self.p(pair.b), &cache, &g)?;
            grads[pair.a] = Some(s.w1);
            grads[pair.b] = Some(s.w2);
            g = s.input;
        }
        let widths = vec![self.config.filters; self.plan.branches.len()];
        let parts = if widths.len() == 1 {
            vec![g]
        } else {
            split_channels(&g, &widths)?
        };

        for ((bp, cache), mut g) in self.plan.branches.iter().zip(pass.branches).zip(parts) {
            if let (Some(pair), Some((input, se_cache))) = (bp.se, cache.se) {
                let s = se_block_backward(&input, self.p(pair.a), self.p(pair.b), &se_cache, &g)?;
                grads[pair.a] = Some(s.w1);
                grads[pair.b] = Some(s.w2);
                g = s.input;
            }
            for (layer, (pair, (input, pre))) in bp.convs.iter().zip(cache.convs).enumerate().rev() {
                let gpre = crelu_backward(&pre, &g);
                let c = conv3d_backward(&input, self.p(pair.a), &gpre, layer > 0)?;
                grads[pair.a] = Some(c.weight);
                grads[pair.b] = Some(c.bias);
                if let Some(gi) = c.input {
                    g = gi;
                }
            }
        }
        Ok(grads
            .into_iter()
            .map(|g| g.expect("every parameter receives a gradient"))
            .collect())
    }
}
