use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Deterministic `[3, size, size]` textures in `[0, 1]`: a colour gradient,
/// a few oriented gratings, some rectangles and mild noise.
pub fn synthetic_textures(count: usize, size: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| texture(&mut rng, size)).collect()
}

fn texture(rng: &mut ChaCha8Rng, size: usize) -> Tensor {
    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let grad: [[f32; 2]; 3] = std::array::from_fn(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]);
    let gratings: Vec<(f32, f32, f32, [f32; 3])> = (0..rng.random_range(1..4))
        .map(|_| {
            let theta = rng.random_range(0.0..std::f32::consts::PI);
            let freq = rng.random_range(0.01..0.06) * std::f32::consts::TAU;
            let phase = rng.random_range(0.0..std::f32::consts::TAU);
            let amp = std::array::from_fn(|_| rng.random_range(-0.15..0.15));
            (theta, freq, phase, amp)
        })
        .collect();
    let rects: Vec<([usize; 4], [f32; 3])> = (0..rng.random_range(0..4))
        .map(|_| {
            let y0 = rng.random_range(0..size);
            let x0 = rng.random_range(0..size);
            let y1 = rng.random_range(y0..=size);
            let x1 = rng.random_range(x0..=size);
            ([y0, y1, x0, x1], std::array::from_fn(|_| rng.random_range(-0.25..0.25)))
        })
        .collect();
    let noise_amp = rng.random_range(0.0..0.03);
    let s = size as f32;
    let mut data = vec![0.0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f32 / s - 0.5, x as f32 / s - 0.5);
            for c in 0..3 {
                let mut v = base[c] + grad[c][0] * fy + grad[c][1] * fx;
                for &(theta, freq, phase, amp) in &gratings {
                    let u = x as f32 * theta.cos() + y as f32 * theta.sin();
                    v += amp[c] * (freq * u + phase).sin();
                }
                for &([y0, y1, x0, x1], d) in &rects {
                    if (y0..y1).contains(&y) && (x0..x1).contains(&x) {
                        v += d[c];
                    }
                }
                data[(c * size + y) * size + x] = v;
            }
        }
    }
    for v in &mut data {
        *v = (*v + rng.random_range(-noise_amp..=noise_amp)).clamp(0.0, 1.0);
    }
    Tensor::new(&[3, size, size], data).expect("shape matches buffer")
}
