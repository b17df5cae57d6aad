//! Shared fixtures for the criterion benchmarks.

use vap_core::{ImageTensor, Perturbation};

/// A deterministic `h×w` image on the 8-bit grid.
pub fn gradient_image(h: usize, w: usize) -> ImageTensor {
    let bytes: Vec<u8> = (0..h * w * 3).map(|i| (i * 31 % 256) as u8).collect();
    ImageTensor::from_rgb8(h, w, &bytes).expect("valid shape")
}

/// Alternating ±`magnitude` perturbation matching `image`.
pub fn alternating_delta(image: &ImageTensor, magnitude: f64) -> Perturbation {
    let (h, w) = image.shape();
    let data = (0..image.len())
        .map(|i| if i % 2 == 0 { magnitude } else { -magnitude })
        .collect();
    Perturbation::new(h, w, data).expect("valid shape")
}
