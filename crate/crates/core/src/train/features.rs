use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cohort::{ExamPair, View};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::nets::{PairModel, BACKBONE_PREFIX};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ImageRole {
    Prior,
    Current,
}

/// Identifies one backbone input: an exam view, optionally warped onto another exam.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureKey {
    pub exam_id: String,
    pub view: View,
    /// Exam the image was aligned to, if it was warped.
    pub aligned_to: Option<String>,
}

impl FeatureKey {
    pub fn for_pair(pair: &ExamPair, view: View, role: ImageRole) -> Self {
        match role {
            ImageRole::Current => FeatureKey { exam_id: pair.current().exam_id.clone(), view, aligned_to: None },
            ImageRole::Prior => FeatureKey {
                exam_id: pair.prior().exam_id.clone(),
                view,
                aligned_to: pair.is_aligned().then(|| pair.current().exam_id.clone()),
            },
        }
    }
}

/// Backbone feature maps of a frozen backbone, keyed by input image.
///
/// A bank is bound to the backbone weights it was created for; using it with
/// a model whose backbone differs is an error.
#[derive(Clone, Debug)]
pub struct FeatureBank<T: Scalar> {
    fingerprint: u64,
    maps: BTreeMap<FeatureKey, Tensor<T>>,
}

fn backbone_fingerprint<T: Scalar>(model: &PairModel<T>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for (_, p) in model.params().iter() {
        if !p.name.starts_with(BACKBONE_PREFIX) {
            continue;
        }
        for b in p.name.bytes() {
            eat(b as u64);
        }
        for &v in p.value.data() {
            eat(v.to_f64().to_bits());
        }
    }
    h
}

impl<T: Scalar> FeatureBank<T> {
    pub fn for_model(model: &PairModel<T>) -> Self {
        FeatureBank { fingerprint: backbone_fingerprint(model), maps: BTreeMap::new() }
    }

    /// Error unless `model` has the backbone this bank was built for.
    pub fn check(&self, model: &PairModel<T>) -> Result<()> {
        if backbone_fingerprint(model) != self.fingerprint {
            return Err(invalid!("feature bank was computed with a different backbone"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn get(&self, key: &FeatureKey) -> Option<&Tensor<T>> {
        self.maps.get(key)
    }

    pub fn insert(&mut self, key: FeatureKey, features: Tensor<T>) {
        self.maps.insert(key, features);
    }

    /// Backbone inputs of `pairs` not yet in the bank, deduplicated, in key order.
    pub fn missing<'a>(&self, model: &PairModel<T>, pairs: &'a [ExamPair]) -> Vec<(FeatureKey, &'a Image)> {
        let mut out: BTreeMap<FeatureKey, &'a Image> = BTreeMap::new();
        let roles: &[ImageRole] =
            if model.variant().uses_prior() { &[ImageRole::Current, ImageRole::Prior] } else { &[ImageRole::Current] };
        for pair in pairs {
            for v in View::ALL {
                for &role in roles {
                    let key = FeatureKey::for_pair(pair, v, role);
                    if !self.maps.contains_key(&key) {
                        let img = match role {
                            ImageRole::Current => pair.current().image(v),
                            ImageRole::Prior => pair.prior().image(v),
                        };
                        out.entry(key).or_insert(img);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Compute and store every missing feature map of `pairs`.
    pub fn fill(&mut self, model: &PairModel<T>, pairs: &[ExamPair]) -> Result<()> {
        self.check(model)?;
        for (key, img) in self.missing(model, pairs) {
            let f = model.image_features(img)?;
            self.maps.insert(key, f);
        }
        Ok(())
    }

    /// `(prior, current)` feature maps of one view; `prior` is `None` for
    /// models that ignore it.
    pub fn pair_features(&self, model: &PairModel<T>, pair: &ExamPair, view: View) -> Result<(Option<&Tensor<T>>, &Tensor<T>)> {
        let fetch = |role| {
            let key = FeatureKey::for_pair(pair, view, role);
            self.maps.get(&key).ok_or_else(|| invalid!("no cached features for {key:?}"))
        };
        let prior = if model.variant().uses_prior() { Some(fetch(ImageRole::Prior)?) } else { None };
        Ok((prior, fetch(ImageRole::Current)?))
    }
}
