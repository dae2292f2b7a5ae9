use crate::error::{shape_err, Result};
use crate::tensor::{Graph, Scalar, Var};

fn same_shape<T: Scalar>(g: &Graph<'_, T>, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) || g.shape(a).len() != 4 {
        return Err(shape_err!("{what}: prior {:?} and current {:?} feature maps differ", g.shape(a), g.shape(b)));
    }
    Ok(())
}

/// `concat(GAP(current), GAP(prior))`: `[1,C,h,w] × 2 -> [1,2C]`.
pub fn global_compare_forward<T: Scalar>(g: &mut Graph<'_, T>, prior: Var, current: Var) -> Result<Var> {
    same_shape(g, prior, current, "global_compare")?;
    let c = g.global_avg_pool(current)?;
    let p = g.global_avg_pool(prior)?;
    g.concat_channels(c, p)
}

/// `GAP(ReLU(conv1x1(concat(current, prior))))` with a `2C → 2C` kernel.
pub fn align_local_compare_forward<T: Scalar>(g: &mut Graph<'_, T>, prior: Var, current: Var, kernel: Var, bias: Var) -> Result<Var> {
    same_shape(g, prior, current, "align_local_compare")?;
    let both = g.concat_channels(current, prior)?;
    let channels = g.shape(both)[1];
    let ks = g.shape(kernel);
    if ks != [channels, channels, 1, 1] {
        return Err(shape_err!("comparison kernel {ks:?} must be [{channels}, {channels}, 1, 1]"));
    }
    let mixed = g.conv2d(both, kernel, bias, 1, 0)?;
    let act = g.relu(mixed);
    g.global_avg_pool(act)
}
