//! Conditional U-Net noise predictor.
//!
//! Input channels are `[x_noisy(3), normal(3), rgb(3), feat(M)]`. Each resolution
//! level runs residual blocks; every block adds a learned projection of the
//! context vector (time MLP output concatenated with the category embedding).
//! The decoder concatenates the encoder output of the matching level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    avgpool2, avgpool2_backward, silu, silu_backward, upsample2, upsample2_backward, Conv, GroupNorm, GroupNormCache,
    Linear, Tensor,
};
use super::scalar::Float;
use crate::error::{Error, Result};

/// Channels of the non-feature condition images (normal + rgb) plus the noisy input.
pub const BASE_INPUT_CHANNELS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub image_size: usize,
    pub feat_channels: usize,
    /// Channel width per resolution level; level `l` runs at `image_size / 2^l`.
    pub channels: Vec<usize>,
    pub res_blocks: usize,
    pub groups: usize,
    pub time_sinusoid_dim: usize,
    pub time_dim: usize,
    pub category_dim: usize,
    /// Number of known categories; the embedding table has one extra row 0 for "unknown".
    pub categories: usize,
    pub zero_init_output: bool,
    pub prediction: Prediction,
}

/// What the last convolution estimates; the network output is always a noise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    /// The convolution output is the noise estimate itself.
    Noise,
    /// The convolution estimates `v = √ᾱ·eps − √(1−ᾱ)·x0`; the noise estimate is
    /// `√(1−ᾱ)·x_k + √ᾱ·v`.
    #[default]
    Velocity,
}

impl Prediction {
    /// Coefficients `(a, b)` with `eps_hat = a·x_k + b·out` at timestep `k`.
    pub fn coefficients(self, alpha_bar: f64) -> (f64, f64) {
        match self {
            Prediction::Noise => (0.0, 1.0),
            Prediction::Velocity => ((1.0 - alpha_bar).sqrt(), alpha_bar.sqrt()),
        }
    }
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            image_size: 64,
            feat_channels: 6,
            channels: vec![32, 64, 128],
            res_blocks: 2,
            groups: 8,
            time_sinusoid_dim: 64,
            time_dim: 128,
            category_dim: 32,
            categories: 3,
            zero_init_output: true,
            prediction: Prediction::Velocity,
        }
    }
}

impl UNetConfig {
    /// Two-level, 8-channel network on 16×16 inputs with random output init.
    pub fn reduced() -> Self {
        UNetConfig {
            image_size: 16,
            feat_channels: 2,
            channels: vec![8, 16],
            res_blocks: 1,
            groups: 4,
            time_sinusoid_dim: 8,
            time_dim: 8,
            category_dim: 4,
            categories: 2,
            zero_init_output: false,
            prediction: Prediction::Noise,
        }
    }

    pub fn input_channels(&self) -> usize {
        BASE_INPUT_CHANNELS + self.feat_channels
    }

    pub fn context_dim(&self) -> usize {
        self.time_dim + self.category_dim
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.channels.len();
        if levels == 0 {
            return Err(Error::invalid("network needs at least one level"));
        }
        if self.res_blocks == 0 || self.groups == 0 {
            return Err(Error::invalid("res_blocks and groups must be positive"));
        }
        if let Some(c) = self.channels.iter().find(|&&c| c == 0 || c % self.groups != 0) {
            return Err(Error::invalid(format!("channel count {c} not divisible by {} groups", self.groups)));
        }
        let factor = 1usize << (levels - 1);
        if self.image_size == 0 || !self.image_size.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "image size {} must be a positive multiple of {factor}",
                self.image_size
            )));
        }
        if self.time_sinusoid_dim < 2 || !self.time_sinusoid_dim.is_multiple_of(2) {
            return Err(Error::invalid("time sinusoid dimension must be even and at least 2"));
        }
        if self.time_dim == 0 || self.category_dim == 0 {
            return Err(Error::invalid("context dimensions must be positive"));
        }
        Ok(())
    }
}

/// Sinusoidal encoding of a timestep: first half sines, second half cosines,
/// frequencies `10000^(−i/half)`.
pub fn sinusoid(k: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = k as f64 * freq;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    gn1: GroupNorm,
    conv1: Conv,
    proj: Linear,
    gn2: GroupNorm,
    conv2: Conv,
    skip: Option<Conv>,
}

/// Parameter layout derived from a configuration.
#[derive(Debug, Clone)]
struct Net {
    in_conv: Conv,
    enc: Vec<Vec<ResBlock>>,
    mid: ResBlock,
    dec: Vec<Vec<ResBlock>>,
    out_norm: GroupNorm,
    out_conv: Conv,
    t1: Linear,
    t2: Linear,
    embed: usize,
}

struct Builder {
    specs: Vec<ParamSpec>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape });
        self.inits.push(init);
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, zero: bool) -> Conv {
        let fan_in = cin * kernel * kernel;
        let init = if zero { Init::Zeros } else { Init::Normal((1.0 / fan_in as f64).sqrt()) };
        Conv {
            weight: self.add(format!("{name}.weight"), vec![cout, cin, kernel, kernel], init),
            bias: self.add(format!("{name}.bias"), vec![cout], Init::Zeros),
            cin,
            cout,
            kernel,
        }
    }

    fn norm(&mut self, name: &str, channels: usize, groups: usize) -> GroupNorm {
        GroupNorm {
            scale: self.add(format!("{name}.scale"), vec![channels], Init::Ones),
            shift: self.add(format!("{name}.shift"), vec![channels], Init::Zeros),
            channels,
            groups,
        }
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> Linear {
        Linear {
            weight: self.add(format!("{name}.weight"), vec![dout, din], Init::Normal((1.0 / din as f64).sqrt())),
            bias: self.add(format!("{name}.bias"), vec![dout], Init::Zeros),
            din,
            dout,
        }
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, cfg: &UNetConfig) -> ResBlock {
        ResBlock {
            gn1: self.norm(&format!("{name}.norm1"), cin, cfg.groups),
            conv1: self.conv(&format!("{name}.conv1"), cin, cout, 3, false),
            proj: self.linear(&format!("{name}.context"), cfg.context_dim(), cout),
            gn2: self.norm(&format!("{name}.norm2"), cout, cfg.groups),
            conv2: self.conv(&format!("{name}.conv2"), cout, cout, 3, false),
            skip: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1, false)),
        }
    }
}

fn build(cfg: &UNetConfig) -> (Net, Vec<ParamSpec>, Vec<Init>) {
    let mut b = Builder {
        specs: Vec::new(),
        inits: Vec::new(),
    };
    let ch = &cfg.channels;
    let levels = ch.len();
    let t1 = b.linear("time.fc1", cfg.time_sinusoid_dim, cfg.time_dim);
    let t2 = b.linear("time.fc2", cfg.time_dim, cfg.time_dim);
    let embed = b.add(
        "category.embedding".into(),
        vec![cfg.categories + 1, cfg.category_dim],
        Init::Normal(1.0),
    );
    let in_conv = b.conv("input", cfg.input_channels(), ch[0], 3, false);
    let mut enc = Vec::new();
    let mut cur = ch[0];
    for (l, &c) in ch.iter().enumerate() {
        let mut blocks = Vec::new();
        for r in 0..cfg.res_blocks {
            blocks.push(b.res(&format!("down{l}.res{r}"), cur, c, cfg));
            cur = c;
        }
        enc.push(blocks);
    }
    let mid = b.res("mid", cur, cur, cfg);
    let mut dec: Vec<Vec<ResBlock>> = vec![Vec::new(); levels];
    for l in (0..levels).rev() {
        let c = ch[l];
        let mut blocks = Vec::new();
        for r in 0..cfg.res_blocks {
            let cin = if r == 0 { cur + c } else { c };
            blocks.push(b.res(&format!("up{l}.res{r}"), cin, c, cfg));
        }
        cur = c;
        dec[l] = blocks;
    }
    let out_norm = b.norm("output.norm", ch[0], cfg.groups);
    let out_conv = b.conv("output.conv", ch[0], 3, 3, cfg.zero_init_output);
    let net = Net {
        in_conv,
        enc,
        mid,
        dec,
        out_norm,
        out_conv,
        t1,
        t2,
        embed,
    };
    (net, b.specs, b.inits)
}

/// All learnable arrays of the network, as named flat blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetParams<T> {
    config: UNetConfig,
    specs: Vec<ParamSpec>,
    values: Vec<Vec<T>>,
}

/// Per-sample network input: the assembled input planes, timesteps and category ids.
#[derive(Debug, Clone)]
pub struct NetInput<T> {
    /// `(input_channels, batch, S, S)`.
    pub x: Tensor<T>,
    pub steps: Vec<usize>,
    pub categories: Vec<usize>,
}

struct ResCache<T> {
    x: Tensor<T>,
    c1: GroupNormCache<T>,
    a1: Tensor<T>,
    s1: Tensor<T>,
    c2: GroupNormCache<T>,
    a2: Tensor<T>,
    s2: Tensor<T>,
}

struct ContextCache<T> {
    sin: Vec<T>,
    a1: Vec<T>,
    s1: Vec<T>,
    ctx: Vec<T>,
    sctx: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    input: Tensor<T>,
    categories: Vec<usize>,
    context: ContextCache<T>,
    enc: Vec<Vec<ResCache<T>>>,
    mid: ResCache<T>,
    dec: Vec<Vec<ResCache<T>>>,
    skip_channels: Vec<usize>,
    out_cache: GroupNormCache<T>,
    out_a: Tensor<T>,
    out_s: Tensor<T>,
}

impl<T: Float> UNetParams<T> {
    pub fn init(config: &UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (_, specs, inits) = build(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = specs
            .iter()
            .zip(&inits)
            .map(|(s, init)| match *init {
                Init::Zeros => vec![T::ZERO; s.len()],
                Init::Ones => vec![T::ONE; s.len()],
                Init::Normal(std) => {
                    let d = Normal::new(0.0, std).expect("finite std");
                    (0..s.len()).map(|_| T::from_f64(d.sample(&mut rng))).collect()
                }
            })
            .collect();
        Ok(UNetParams {
            config: config.clone(),
            specs,
            values,
        })
    }

    /// Assemble parameters from named blocks (e.g. a loaded checkpoint).
    pub fn from_blocks(config: &UNetConfig, blocks: Vec<(String, Vec<usize>, Vec<T>)>) -> Result<Self> {
        config.validate()?;
        let (_, specs, _) = build(config);
        if blocks.len() != specs.len() {
            return Err(Error::shape(format!(
                "expected {} parameter blocks, got {}",
                specs.len(),
                blocks.len()
            )));
        }
        let mut values = Vec::with_capacity(specs.len());
        for (spec, (name, shape, data)) in specs.iter().zip(blocks) {
            if spec.name != name || spec.shape != shape || data.len() != spec.len() {
                return Err(Error::shape(format!(
                    "parameter block {name} {shape:?} does not match expected {} {:?}",
                    spec.name, spec.shape
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("parameter block {name} has non-finite values")));
            }
            values.push(data);
        }
        Ok(UNetParams {
            config: config.clone(),
            specs,
            values,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.values
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.specs.iter().map(ParamSpec::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.values.iter().map(|v| vec![T::ZERO; v.len()]).collect()
    }

    /// Convert element type (e.g. `f32` weights to `f64` for gradient checks).
    pub fn cast<U: Float>(&self) -> UNetParams<U> {
        UNetParams {
            config: self.config.clone(),
            specs: self.specs.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| U::from_f64(x.to_f64())).collect())
                .collect(),
        }
    }

    fn net(&self) -> Net {
        build(&self.config).0
    }

    fn check_input(&self, input: &NetInput<T>) -> Result<()> {
        let s = self.config.image_size;
        let x = &input.x;
        if x.c != self.config.input_channels() || x.h != s || x.w != s {
            return Err(Error::shape(format!(
                "network expects {}x{s}x{s} inputs, got {}x{}x{}",
                self.config.input_channels(),
                x.c,
                x.h,
                x.w
            )));
        }
        if input.steps.len() != x.b || input.categories.len() != x.b {
            return Err(Error::shape("timestep/category count differs from batch size"));
        }
        if let Some(&c) = input.categories.iter().find(|&&c| c > self.config.categories) {
            return Err(Error::invalid(format!(
                "category id {c} outside embedding table of {} rows",
                self.config.categories + 1
            )));
        }
        Ok(())
    }

    /// Context vectors `(context_dim, batch)` before the SiLU applied inside blocks.
    pub fn embed_context(&self, steps: &[usize], categories: &[usize]) -> Result<Vec<T>> {
        if let Some(&c) = categories.iter().find(|&&c| c > self.config.categories) {
            return Err(Error::invalid(format!(
                "category id {c} outside embedding table of {} rows",
                self.config.categories + 1
            )));
        }
        Ok(self.context_forward(&self.net(), steps, categories).ctx)
    }

    fn context_forward(&self, net: &Net, steps: &[usize], categories: &[usize]) -> ContextCache<T> {
        let p = &self.values;
        let cfg = &self.config;
        let b = steps.len();
        let e = cfg.time_sinusoid_dim;
        let mut sin = vec![T::ZERO; e * b];
        for (bi, &k) in steps.iter().enumerate() {
            for (i, v) in sinusoid(k, e).into_iter().enumerate() {
                sin[i * b + bi] = T::from_f64(v);
            }
        }
        let a1 = net.t1.forward(p, &sin, b);
        let s1 = silu(&a1);
        let mut ctx = net.t2.forward(p, &s1, b);
        let table = &p[net.embed];
        let d = cfg.category_dim;
        let mut emb = vec![T::ZERO; d * b];
        for (bi, &c) in categories.iter().enumerate() {
            for j in 0..d {
                emb[j * b + bi] = table[c * d + j];
            }
        }
        ctx.extend_from_slice(&emb);
        let sctx = silu(&ctx);
        ContextCache { sin, a1, s1, ctx, sctx }
    }

    fn res_forward(&self, blk: &ResBlock, x: Tensor<T>, sctx: &[T]) -> (Tensor<T>, ResCache<T>) {
        let p = &self.values;
        let (a1, c1) = blk.gn1.forward(p, &x);
        let s1 = Tensor {
            data: silu(&a1.data),
            ..a1.clone()
        };
        let mut h = blk.conv1.forward(p, &s1);
        let proj = blk.proj.forward(p, sctx, x.b);
        let hw = h.h * h.w;
        for (cb, chunk) in h.data.chunks_mut(hw).enumerate() {
            let add = proj[cb];
            chunk.iter_mut().for_each(|v| *v += add);
        }
        let (a2, c2) = blk.gn2.forward(p, &h);
        let s2 = Tensor {
            data: silu(&a2.data),
            ..a2.clone()
        };
        let mut out = blk.conv2.forward(p, &s2);
        match &blk.skip {
            Some(sk) => out.add_assign(&sk.forward(p, &x)),
            None => out.add_assign(&x),
        }
        (
            out,
            ResCache {
                x,
                c1,
                a1,
                s1,
                c2,
                a2,
                s2,
            },
        )
    }

    fn res_backward(
        &self,
        blk: &ResBlock,
        g: &mut [Vec<T>],
        cache: &ResCache<T>,
        dout: &Tensor<T>,
        sctx: &[T],
        dsctx: &mut [T],
    ) -> Tensor<T> {
        let p = &self.values;
        let mut dx = match &blk.skip {
            Some(sk) => sk.backward(p, g, &cache.x, dout, true).expect("dx requested"),
            None => dout.clone(),
        };
        let mut ds2 = blk.conv2.backward(p, g, &cache.s2, dout, true).expect("dx requested");
        silu_backward(&cache.a2.data, &mut ds2.data);
        let dh = blk.gn2.backward(p, g, &cache.c2, &ds2);
        let b = dh.b;
        let hw = dh.h * dh.w;
        let dproj: Vec<T> = dh.data.chunks(hw).map(|c| c.iter().copied().sum()).collect();
        let d = blk.proj.backward(p, g, sctx, &dproj, b);
        for (acc, v) in dsctx.iter_mut().zip(d) {
            *acc += v;
        }
        let mut ds1 = blk.conv1.backward(p, g, &cache.s1, &dh, true).expect("dx requested");
        silu_backward(&cache.a1.data, &mut ds1.data);
        dx.add_assign(&blk.gn1.backward(p, g, &cache.c1, &ds1));
        dx
    }

    /// Forward pass keeping activations for [`UNetParams::backward`].
    pub fn forward_cached(&self, input: NetInput<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(&input)?;
        let net = self.net();
        let p = &self.values;
        let context = self.context_forward(&net, &input.steps, &input.categories);
        let sctx = &context.sctx;
        let mut h = net.in_conv.forward(p, &input.x);
        let mut enc_caches = Vec::new();
        let mut skips = Vec::new();
        let levels = net.enc.len();
        for (l, blocks) in net.enc.iter().enumerate() {
            let mut caches = Vec::new();
            for blk in blocks {
                let (o, c) = self.res_forward(blk, h, sctx);
                caches.push(c);
                h = o;
            }
            enc_caches.push(caches);
            skips.push(h.clone());
            if l + 1 < levels {
                h = avgpool2(&h);
            }
        }
        let (o, mid_cache) = self.res_forward(&net.mid, h, sctx);
        h = o;
        let mut dec_caches: Vec<Vec<ResCache<T>>> = (0..levels).map(|_| Vec::new()).collect();
        let mut skip_channels = vec![0; levels];
        for l in (0..levels).rev() {
            let skip = skips.pop().expect("one skip per level");
            skip_channels[l] = skip.c;
            h = h.concat(&skip);
            for blk in &net.dec[l] {
                let (o, c) = self.res_forward(blk, h, sctx);
                dec_caches[l].push(c);
                h = o;
            }
            if l > 0 {
                h = upsample2(&h);
            }
        }
        let (out_a, out_cache) = net.out_norm.forward(p, &h);
        let out_s = Tensor {
            data: silu(&out_a.data),
            ..out_a.clone()
        };
        let y = net.out_conv.forward(p, &out_s);
        Ok((
            y,
            ForwardCache {
                input: input.x,
                categories: input.categories,
                context,
                enc: enc_caches,
                mid: mid_cache,
                dec: dec_caches,
                skip_channels,
                out_cache,
                out_a,
                out_s,
            },
        ))
    }

    pub fn forward(&self, input: NetInput<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Gradients of `sum(dy · output)` with respect to every parameter block.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>) -> Vec<Vec<T>> {
        let net = self.net();
        let p = &self.values;
        let mut g = self.zeros_like();
        let sctx = &cache.context.sctx;
        let mut dsctx = vec![T::ZERO; sctx.len()];
        let levels = net.enc.len();

        let mut ds = net.out_conv.backward(p, &mut g, &cache.out_s, dy, true).expect("dx requested");
        silu_backward(&cache.out_a.data, &mut ds.data);
        let mut dh = net.out_norm.backward(p, &mut g, &cache.out_cache, &ds);

        let mut dskips: Vec<Option<Tensor<T>>> = (0..levels).map(|_| None).collect();
        for l in 0..levels {
            if l > 0 {
                dh = upsample2_backward(&dh);
            }
            for (blk, c) in net.dec[l].iter().zip(&cache.dec[l]).rev() {
                dh = self.res_backward(blk, &mut g, c, &dh, sctx, &mut dsctx);
            }
            let (rest, dskip) = dh.split(cache.skip_channels[l]);
            dskips[l] = Some(dskip);
            dh = rest;
        }
        dh = self.res_backward(&net.mid, &mut g, &cache.mid, &dh, sctx, &mut dsctx);
        for l in (0..levels).rev() {
            if l + 1 < levels {
                dh = avgpool2_backward(&dh);
            }
            dh.add_assign(dskips[l].as_ref().expect("set above"));
            for (blk, c) in net.enc[l].iter().zip(&cache.enc[l]).rev() {
                dh = self.res_backward(blk, &mut g, c, &dh, sctx, &mut dsctx);
            }
        }
        net.in_conv.backward(p, &mut g, &cache.input, &dh, false);

        // Context: SiLU, then split into time and category parts.
        let b = cache.categories.len();
        silu_backward(&cache.context.ctx, &mut dsctx);
        let td = self.config.time_dim;
        let (dt, demb) = dsctx.split_at(td * b);
        let d = self.config.category_dim;
        for (bi, &c) in cache.categories.iter().enumerate() {
            for j in 0..d {
                g[net.embed][c * d + j] += demb[j * b + bi];
            }
        }
        let mut ds1 = net.t2.backward(p, &mut g, &cache.context.s1, dt, b);
        silu_backward(&cache.context.a1, &mut ds1);
        net.t1.backward(p, &mut g, &cache.context.sin, &ds1, b);
        g
    }
}
