use serde::{Deserialize, Serialize};

use crate::image::Image;

use super::{View, ViewClass};

/// Full-resolution (height, width) of CC images.
pub const CC_FULL_SIZE: (usize, usize) = (2677, 1942);
/// Full-resolution (height, width) of MLO images.
pub const MLO_FULL_SIZE: (usize, usize) = (2974, 1748);

/// Integer down-scaling of the full-resolution image sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageScale {
    pub divisor: u32,
}

impl ImageScale {
    pub const FULL: ImageScale = ImageScale { divisor: 1 };
    /// Desk scale: CC 134×97, MLO 149×87.
    pub const DESK: ImageScale = ImageScale { divisor: 20 };

    /// (height, width) for a view class, rounded to the nearest pixel.
    pub fn dims(self, class: ViewClass) -> (usize, usize) {
        let (h, w) = match class {
            ViewClass::Cc => CC_FULL_SIZE,
            ViewClass::Mlo => MLO_FULL_SIZE,
        };
        let d = self.divisor.max(1) as usize;
        ((2 * h + d) / (2 * d), (2 * w + d) / (2 * d))
    }
}

impl Default for ImageScale {
    fn default() -> Self {
        Self::DESK
    }
}

/// Center crop / zero pad to the view's standard size at `scale`.
pub fn standardize_size(image: &Image, view: View, scale: ImageScale) -> Image {
    let (h, w) = scale.dims(view.class());
    image.center_fit(h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_sizes() {
        assert_eq!(ImageScale::FULL.dims(ViewClass::Cc), (2677, 1942));
        assert_eq!(ImageScale::FULL.dims(ViewClass::Mlo), (2974, 1748));
        assert_eq!(ImageScale::DESK.dims(ViewClass::Cc), (134, 97));
        assert_eq!(ImageScale::DESK.dims(ViewClass::Mlo), (149, 87));
    }

    #[test]
    fn already_standard_is_unchanged() {
        let img = Image::from_fn(134, 97, |y, x| ((y + x) % 7) as f32 / 7.0);
        assert_eq!(standardize_size(&img, View::RightCc, ImageScale::DESK), img);
    }

    #[test]
    fn center_crop_and_pad() {
        let img = Image::from_fn(10, 10, |y, x| (y * 10 + x) as f32);
        let c = img.center_fit(6, 6);
        assert_eq!(c.get(0, 0), 22.0);
        assert_eq!(c.get(5, 5), 77.0);
        let p = Image::from_fn(2, 2, |_, _| 1.0).center_fit(4, 4);
        assert_eq!(p.data().iter().sum::<f32>(), 4.0);
        assert_eq!(p.get(1, 1), 1.0);
        assert_eq!(p.get(0, 0), 0.0);
    }
}
