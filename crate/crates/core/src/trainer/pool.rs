use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Replay buffer of previously generated fakes for one discriminator. Until
/// full it stores and returns the new fake; once full, each query returns
/// the new fake with probability 1/2 or swaps it against a stored one and
/// returns the old.
pub struct ImagePool {
    capacity: usize,
    images: Vec<Array3<f32>>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            images: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn query(&mut self, fake: Array3<f32>, rng: &mut ChaCha8Rng) -> Array3<f32> {
        if self.capacity == 0 {
            return fake;
        }
        if self.images.len() < self.capacity {
            self.images.push(fake.clone());
            return fake;
        }
        if rng.random_bool(0.5) {
            fake
        } else {
            let idx = rng.random_range(0..self.images.len());
            std::mem::replace(&mut self.images[idx], fake)
        }
    }

    pub fn export(&self) -> &[Array3<f32>] {
        &self.images
    }

    pub fn restore(&mut self, images: Vec<Array3<f32>>) {
        assert!(images.len() <= self.capacity || self.capacity == 0);
        self.images = images;
    }
}
