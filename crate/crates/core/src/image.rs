//! Single-channel raster images and binary masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-major grayscale image with intensities nominally in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height * width != data.len() {
            return Err(shape_err!("{height}x{width} image needs {} pixels, got {}", height * width, data.len()));
        }
        Ok(Image { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image { height, width, data: vec![0.0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Image { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// `[1, 1, H, W]` network input.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(&[1, 1, self.height, self.width], self.data.iter().map(|&v| T::of(v as f64)).collect())
            .expect("image dims are positive")
    }

    /// Crop or zero-pad to `height × width`, keeping the image centered.
    ///
    /// When the size difference is odd the extra row/column is taken from
    /// (or added to) the bottom/right.
    pub fn center_fit(&self, height: usize, width: usize) -> Image {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let oy = self.height as isize - height as isize;
        let ox = self.width as isize - width as isize;
        // source index = destination index + offset
        let (dy, dx) = (oy.div_euclid(2), ox.div_euclid(2));
        Image::from_fn(height, width, |y, x| {
            let sy = y as isize + dy;
            let sx = x as isize + dx;
            if sy >= 0 && sx >= 0 && (sy as usize) < self.height && (sx as usize) < self.width {
                self.get(sy as usize, sx as usize)
            } else {
                0.0
            }
        })
    }
}

/// One bit per pixel; set where the source image is foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height * width != bits.len() {
            return Err(shape_err!("{height}x{width} mask needs {} bits, got {}", height * width, bits.len()));
        }
        Ok(BinaryMask { height, width, bits })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}
