use alloc::vec::Vec;

use crate::cohort::{ExamPair, Side, View};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::rng;
use crate::tensor::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use super::backbone::{add_conv, BackboneIds};
use super::head::diagonal;
use super::{
    align_local_compare_forward, backbone_forward, global_compare_forward, head_forward, HeadIds, HeadOutput,
    PairModelConfig, Prediction, Variant,
};

/// Variance floor of the representation standardization.
pub const STANDARDIZE_EPS: f64 = 1e-4;

/// Name prefix of every backbone parameter.
pub const BACKBONE_PREFIX: &str = "backbone.";

/// A comparison network and its parameters.
#[derive(Clone, Debug)]
pub struct PairModel<T: Scalar> {
    config: PairModelConfig,
    params: ParamStore<T>,
    backbone: BackboneIds,
    compare: Option<(ParamId, ParamId)>,
    head: HeadIds,
}

/// Per-view predictions and their per-breast averages.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BreastPredictions {
    /// Indexed by [`View::index`].
    pub views: [Prediction; 4],
    /// Indexed by [`Side::index`].
    pub breasts: [Prediction; 2],
}

impl BreastPredictions {
    /// Average the CC and MLO predictions of each breast.
    pub fn from_views(views: [Prediction; 4]) -> Self {
        let breasts = Side::BOTH.map(|side| {
            let [a, b] = side.views().map(|v| views[v.index()]);
            Prediction { benign: (a.benign + b.benign) / 2.0, malignant: (a.malignant + b.malignant) / 2.0 }
        });
        BreastPredictions { views, breasts }
    }

    pub fn breast(&self, side: Side) -> Prediction {
        self.breasts[side.index()]
    }
}

fn non_empty(image: &Image) -> Result<()> {
    if image.height() == 0 || image.width() == 0 {
        return Err(invalid!("cannot run the backbone on an empty {}x{} image", image.height(), image.width()));
    }
    Ok(())
}

impl<T: Scalar> PairModel<T> {
    /// Fresh model with He-initialized weights drawn from `seed`.
    pub fn new(config: PairModelConfig, seed: u64) -> Result<Self> {
        config.backbone.validate()?;
        if config.hidden_dim == 0 {
            return Err(invalid!("hidden_dim must be positive"));
        }
        let mut params = ParamStore::new();
        let backbone = BackboneIds::build(&config.backbone, &mut params, &mut rng::seeded(rng::derive(seed, 1)));
        let compare = (config.variant == Variant::AlignLocalCompare).then(|| {
            let c = 2 * config.backbone.out_channels();
            let ids = add_conv(&mut params, "compare", (c, c, 1), 1, false, &mut rng::seeded(rng::derive(seed, 2)));
            (ids.weight, ids.bias)
        });
        let head = HeadIds::build(&mut params, config.representation_dim(), config.hidden_dim, config.standardize, &mut rng::seeded(rng::derive(seed, 3)));
        let mut model = PairModel { config, params, backbone, compare, head };
        let frozen = model.config.freeze_backbone;
        model.set_backbone_frozen(frozen);
        Ok(model)
    }

    pub fn config(&self) -> &PairModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn head_ids(&self) -> &HeadIds {
        &self.head
    }

    pub fn compare_ids(&self) -> Option<(ParamId, ParamId)> {
        self.compare
    }

    pub fn set_backbone_frozen(&mut self, frozen: bool) {
        self.config.freeze_backbone = frozen;
        self.params.set_trainable(BACKBONE_PREFIX, !frozen);
    }

    /// Copy every backbone parameter by name from `source`.
    pub fn load_backbone(&mut self, source: &ParamStore<T>) -> Result<()> {
        for (name, t) in source.named_values() {
            if !name.starts_with(BACKBONE_PREFIX) {
                continue;
            }
            let id = self.params.find(&name).ok_or_else(|| invalid!("model has no parameter {name}"))?;
            let p = self.params.get_mut(id);
            if p.value.shape() != t.shape() {
                return Err(invalid!("backbone parameter {name} has shape {:?}, expected {:?}", t.shape(), p.value.shape()));
            }
            p.value = t;
        }
        Ok(())
    }

    /// Same model in another precision.
    pub fn cast<U: Scalar>(&self) -> PairModel<U> {
        PairModel {
            config: self.config.clone(),
            params: self.params.cast(),
            backbone: self.backbone.clone(),
            compare: self.compare,
            head: self.head,
        }
    }

    /// Representation of one view from precomputed feature maps.
    pub fn representation_value(&self, prior: Option<&Tensor<T>>, current: &Tensor<T>) -> Result<Vec<f64>> {
        let mut g = Graph::with_params(&self.params);
        let p = prior.map(|t| g.input(t.clone()));
        let c = g.input(current.clone());
        let rep = self.representation(&mut g, p, c)?;
        Ok(g.value(rep).data().iter().map(|v| Scalar::to_f64(*v)).collect())
    }

    /// Set the fixed standardization to `(r - mean) / sqrt(var + eps)`.
    pub fn set_standardizer(&mut self, mean: &[f64], var: &[f64]) -> Result<()> {
        let (w, b) = self.head.norm.ok_or_else(|| invalid!("model has no standardization layer"))?;
        let d = self.config.representation_dim();
        if mean.len() != d || var.len() != d {
            return Err(invalid!("standardizer needs {d} statistics, got {} and {}", mean.len(), var.len()));
        }
        let scale: Vec<f64> = var.iter().map(|&v| 1.0 / libm::sqrt(v.max(0.0) + STANDARDIZE_EPS)).collect();
        if mean.iter().chain(&scale).any(|v| !v.is_finite()) {
            return Err(invalid!("standardizer statistics must be finite"));
        }
        self.params.get_mut(w).value = diagonal(&scale.iter().map(|&s| T::of(s)).collect::<Vec<_>>());
        self.params.get_mut(b).value = Tensor::from_f64(&[d], &mean.iter().zip(&scale).map(|(m, s)| -m * s).collect::<Vec<_>>())?;
        Ok(())
    }

    pub fn backbone_forward(&self, g: &mut Graph<'_, T>, image: Var) -> Result<Var> {
        backbone_forward(g, &self.backbone, image)
    }

    /// Backbone feature map of one image, `[1,C,h,w]`.
    pub fn image_features(&self, image: &Image) -> Result<Tensor<T>> {
        non_empty(image)?;
        let mut g = Graph::with_params(&self.params);
        let x = g.input(image.to_tensor());
        let f = self.backbone_forward(&mut g, x)?;
        Ok(g.value(f).clone())
    }

    /// Variant-specific representation from feature maps. `prior` is ignored by
    /// the single-image baseline and required otherwise.
    pub fn representation(&self, g: &mut Graph<'_, T>, prior: Option<Var>, current: Var) -> Result<Var> {
        match self.config.variant {
            Variant::SingleBaseline => g.global_avg_pool(current),
            Variant::GlobalCompare | Variant::AlignLocalCompare => {
                let prior = prior.ok_or_else(|| invalid!("{} needs prior features", self.config.variant))?;
                match self.compare {
                    Some((w, b)) => {
                        let (w, b) = (g.param(w), g.param(b));
                        align_local_compare_forward(g, prior, current, w, b)
                    }
                    None => global_compare_forward(g, prior, current),
                }
            }
        }
    }

    /// Head outputs from feature maps already in the graph.
    pub fn forward_features(&self, g: &mut Graph<'_, T>, prior: Option<Var>, current: Var) -> Result<HeadOutput> {
        let rep = self.representation(g, prior, current)?;
        head_forward(g, rep, &self.head)
    }

    /// Head outputs from raw images, running the shared backbone on both.
    pub fn forward_images(&self, g: &mut Graph<'_, T>, prior: Option<&Image>, current: &Image) -> Result<HeadOutput> {
        for img in prior.into_iter().chain([current]) {
            non_empty(img)?;
        }
        let cur_in = g.input(current.to_tensor());
        let cur = self.backbone_forward(g, cur_in)?;
        let prior = match (self.config.variant.uses_prior(), prior) {
            (true, Some(img)) => {
                let x = g.input(img.to_tensor());
                Some(self.backbone_forward(g, x)?)
            }
            (true, None) => return Err(invalid!("{} needs a prior image", self.config.variant)),
            (false, _) => None,
        };
        self.forward_features(g, prior, cur)
    }

    pub fn predict_view(&self, prior: &Image, current: &Image) -> Result<Prediction> {
        let mut g = Graph::with_params(&self.params);
        let out = self.forward_images(&mut g, Some(prior), current)?;
        Ok(out.prediction(&g))
    }

    /// Prediction from precomputed feature maps.
    pub fn predict_features(&self, prior: Option<&Tensor<T>>, current: &Tensor<T>) -> Result<Prediction> {
        let mut g = Graph::with_params(&self.params);
        let p = prior.map(|t| g.input(t.clone()));
        let c = g.input(current.clone());
        let out = self.forward_features(&mut g, p, c)?;
        Ok(out.prediction(&g))
    }

    /// Per-view predictions averaged per breast.
    ///
    /// `AlignLocalCompare` requires a pair whose prior has been aligned.
    pub fn predict_pair(&self, pair: &ExamPair) -> Result<BreastPredictions> {
        if self.config.variant.needs_alignment() && !pair.is_aligned() {
            return Err(invalid!("{} expects an aligned pair, got {}", self.config.variant, pair.id()));
        }
        let mut views = [Prediction::default(); 4];
        for v in View::ALL {
            views[v.index()] = self.predict_view(pair.prior().image(v), pair.current().image(v))?;
        }
        Ok(BreastPredictions::from_views(views))
    }
}
