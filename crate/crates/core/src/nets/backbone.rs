use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::rng::{self, Rng};
use crate::tensor::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use super::BackboneConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvIds {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BlockIds {
    pub conv1: ConvIds,
    pub conv2: ConvIds,
    pub skip: Option<ConvIds>,
}

/// Parameter handles of a residual backbone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackboneIds {
    pub(crate) stem: ConvIds,
    pub(crate) blocks: Vec<BlockIds>,
    pub(crate) total_stride: usize,
}

pub(crate) fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let std = libm::sqrt(2.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| T::of(std * rng::normal(rng))).collect()).expect("positive shape")
}

pub(crate) fn add_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    (cout, cin, k): (usize, usize, usize),
    stride: usize,
    zero: bool,
    rng: &mut Rng,
) -> ConvIds {
    let shape = [cout, cin, k, k];
    let w = if zero { Tensor::zeros(&shape) } else { he_normal(&shape, cin * k * k, rng) };
    ConvIds {
        weight: store.add(format!("{name}.weight"), w),
        bias: store.add(format!("{name}.bias"), Tensor::zeros(&[cout])),
        stride,
        padding: k / 2,
    }
}

impl BackboneIds {
    pub(crate) fn build<T: Scalar>(config: &BackboneConfig, store: &mut ParamStore<T>, rng: &mut Rng) -> Self {
        let stem = add_conv(store, "backbone.stem", (config.stem_channels, 1, 3), 1, false, rng);
        let mut blocks = Vec::new();
        let mut cin = config.stem_channels;
        for (s, ((&c, &n), &stride)) in config.channels.iter().zip(&config.blocks).zip(&config.strides).enumerate() {
            for b in 0..n {
                let st = if b == 0 { stride } else { 1 };
                let name = format!("backbone.s{s}.b{b}");
                let conv1 = add_conv(store, &format!("{name}.conv1"), (c, cin, 3), st, false, rng);
                let conv2 = add_conv(store, &format!("{name}.conv2"), (c, c, 3), 1, config.zero_init_residual, rng);
                let skip = (st != 1 || cin != c).then(|| add_conv(store, &format!("{name}.skip"), (c, cin, 1), st, false, rng));
                blocks.push(BlockIds { conv1, conv2, skip });
                cin = c;
            }
        }
        BackboneIds { stem, blocks, total_stride: config.total_stride() }
    }
}

fn conv<T: Scalar>(g: &mut Graph<'_, T>, x: Var, c: &ConvIds) -> Result<Var> {
    let (w, b) = (g.param(c.weight), g.param(c.bias));
    g.conv2d(x, w, b, c.stride, c.padding)
}

/// Residual feature extractor: `[1,1,H,W] -> [1,C,h,w]`.
pub fn backbone_forward<T: Scalar>(g: &mut Graph<'_, T>, ids: &BackboneIds, image: Var) -> Result<Var> {
    let s = g.shape(image);
    if s.len() != 4 || s[2] < ids.total_stride || s[3] < ids.total_stride {
        return Err(shape_err!(
            "backbone input {s:?} is smaller than its total downsampling {}",
            ids.total_stride
        ));
    }
    let stem = conv(g, image, &ids.stem)?;
    let mut x = g.relu(stem);
    for block in &ids.blocks {
        let h = conv(g, x, &block.conv1)?;
        let h = g.relu(h);
        let h = conv(g, h, &block.conv2)?;
        let skip = match &block.skip {
            Some(c) => conv(g, x, c)?,
            None => x,
        };
        let sum = g.add(h, skip)?;
        x = g.relu(sum);
    }
    Ok(x)
}
