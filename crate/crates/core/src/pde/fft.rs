//! Square 2D FFTs on row-major buffers built from 1D rustfft plans.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        self.transpose(data);
        plan.process_with_scratch(data, &mut scratch);
        self.transpose(data);
    }

    /// Unnormalized forward transform.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Inverse transform scaled by `1/n²`.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
        let s = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}
