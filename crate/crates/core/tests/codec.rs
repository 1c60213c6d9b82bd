use hcfs_core::codec::{
    decode_image, encode_image, rd_loss, synthetic_textures, train_toy, Model, ModelConfig, TrainConfig,
};
use hcfs_core::coder::{CodedStream, HEADER_LEN};
use hcfs_core::gradcheck::{grad_check_with_params, random_projection, CheckConfig};
use hcfs_core::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small enough for f64 gradient checks, structurally the same as desk.
fn tiny() -> ModelConfig {
    ModelConfig {
        channels: 8,
        latent: 12,
        hyper_latent: 4,
        hyper_width: 8,
        slices: 3,
        slice_hidden: 8,
        heads: 2,
        state: 2,
        main_window: 8,
        entropy_window: 4,
    }
}

fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[3, h, w], |_| rng.random())
}

#[test]
fn latent_shapes_follow_the_downsampling() {
    let (model, store) = Model::new(ModelConfig::desk(), 0).unwrap();
    let mut t = Tape::inference(&store);
    let x = t.constant(random_image(64, 64, 1));
    let y = model.g_a.forward(&mut t, x).unwrap();
    assert_eq!(t.shape(y), &[48, 4, 4]);
    let z = model.h_a.forward(&mut t, y).unwrap();
    assert_eq!(t.shape(z), &[16, 1, 1]);
    let x_hat = model.g_s.forward(&mut t, y).unwrap();
    assert_eq!(t.shape(x_hat), &[3, 64, 64]);
}

#[test]
fn decoder_reproduces_encoder_latents_for_odd_sizes() {
    let (model, store) = Model::new(ModelConfig::desk(), 2).unwrap();
    for (h, w) in [(1, 1), (63, 63), (64, 64), (65, 129)] {
        let img = random_image(h, w, (h * 1000 + w) as u64);
        let enc = encode_image(&model, &store, &img, 2).unwrap();
        let bytes = enc.stream.to_bytes().unwrap();
        let dec = decode_image(&model, &store, &CodedStream::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(dec.y_bar, enc.y_bar, "{h}x{w}");
        assert_eq!(dec.z_hat, enc.z_hat, "{h}x{w}");
        assert_eq!(dec.image.shape(), &[3, h, w]);
        assert!(dec.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(bytes.len(), HEADER_LEN + 4 * (1 + 3) + enc.stream.payload_len());
    }
}

#[test]
fn estimated_rate_matches_payload() {
    let (model, store) = Model::new(ModelConfig::desk(), 3).unwrap();
    for img in synthetic_textures(4, 64, 7) {
        let enc = encode_image(&model, &store, &img, 0).unwrap();
        let actual = enc.stream.payload_len() as f64;
        let est = enc.estimated_bits / 8.0;
        assert!((actual - est).abs() <= 0.01 * est + 32.0, "actual {actual} estimated {est}");
    }
}

#[test]
fn corrupted_streams_error_or_decode_without_panic() {
    let (model, store) = Model::new(tiny(), 4).unwrap();
    let enc = encode_image(&model, &store, &random_image(64, 64, 5), 0).unwrap();
    let bytes = enc.stream.to_bytes().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..40 {
        let mut bad = bytes.clone();
        let i = rng.random_range(HEADER_LEN..bad.len());
        bad[i] ^= 1 << rng.random_range(0..8);
        if let Ok(stream) = CodedStream::from_bytes(&bad) {
            let _ = decode_image(&model, &store, &stream);
        }
    }
    assert!(CodedStream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn external_reflect_padding_is_neutral() {
    // padding by hand first must not change the shared region
    let (model, store) = Model::new(ModelConfig::desk(), 8).unwrap();
    let img = random_image(40, 40, 9);
    let reflect = |i: usize, n: usize| if i < n { i } else { 2 * n - 2 - i };
    let padded = Tensor::from_fn(&[3, 64, 64], |k| {
        let (c, r, col) = (k / 4096, (k / 64) % 64, k % 64);
        img.data()[(c * 40 + reflect(r, 40)) * 40 + reflect(col, 40)]
    });
    let a = decode_image(&model, &store, &encode_image(&model, &store, &img, 0).unwrap().stream).unwrap();
    let b = decode_image(&model, &store, &encode_image(&model, &store, &padded, 0).unwrap().stream).unwrap();
    for c in 0..3 {
        for r in 0..40 {
            for col in 0..40 {
                assert_eq!(a.image.data()[(c * 40 + r) * 40 + col], b.image.data()[(c * 64 + r) * 64 + col]);
            }
        }
    }
}

#[test]
fn loss_is_affine_in_lambda() {
    let (model, store) = Model::new(tiny(), 10).unwrap();
    let medians = model.density.medians(&store);
    let img = random_image(32, 32, 11);
    let eval = |lambda: f64| {
        let mut t = Tape::inference(&store);
        let x = t.constant(img.clone());
        let terms = rd_loss(&mut t, &model, &medians, x, lambda, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let v = |v| t.value(v).item() as f64;
        (v(terms.loss), v(terms.r_y) + v(terms.r_z), v(terms.d))
    };
    let (l1, r1, d1) = eval(0.0025);
    let (l2, r2, d2) = eval(0.05);
    assert_eq!((r1, d1), (r2, d2));
    assert!(((l2 - l1) - (0.05 - 0.0025) * d1).abs() < 1e-3 * l2.abs().max(1.0));
    assert!(r1 > 0.0 && d1 > 0.0);
}

#[test]
fn full_loss_gradients() {
    let (model, store) = Model::new(tiny(), 12).unwrap();
    let mut s64 = store.cast::<f64>();
    let medians = model.density.medians(&s64);
    let x = random_image(16, 16, 13).cast::<f64>();
    let cfg = CheckConfig::default().h(1e-5).limits(24, 96, 14);
    let r = grad_check_with_params(&mut s64, &x, &cfg, |t, v| {
        t.set_ste_identity(true);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let terms = rd_loss(t, &model, &medians, v, 0.013, &mut rng)?;
        let p = random_projection(t, terms.d, 16)?;
        t.add(terms.loss, p)
    })
    .unwrap();
    assert!(r.max() < 1e-3, "{r:?}");
}

#[test]
fn training_is_deterministic_and_frozen_at_zero_lr() {
    let imgs = synthetic_textures(3, 64, 17);
    let cfg = TrainConfig { steps: 4, lr: 1e-3, seed: 5, ..Default::default() };
    let a = train_toy(tiny(), &cfg, &imgs).unwrap();
    let b = train_toy(tiny(), &cfg, &imgs).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.store.to_checkpoint_bytes(), b.store.to_checkpoint_bytes());

    let frozen = TrainConfig { lr: 0.0, ..cfg };
    let c = train_toy(tiny(), &frozen, &imgs[..1]).unwrap();
    assert!(c.trace.windows(2).all(|w| w[0].loss == w[1].loss), "{:?}", c.trace);
}

#[test]
fn training_rejects_bad_config() {
    let imgs = synthetic_textures(1, 64, 0);
    let bad = TrainConfig { crop: 48, ..Default::default() };
    assert!(train_toy(tiny(), &bad, &imgs).is_err());
    assert!(train_toy(tiny(), &TrainConfig::default(), &[]).is_err());
}

#[test]
fn checkpoint_roundtrip_preserves_coding() {
    let (model, store) = Model::new(tiny(), 18).unwrap();
    let bytes = model.to_bytes(&store, 0.013);
    let (m2, s2, lambda) = Model::from_bytes(&bytes).unwrap();
    assert_eq!(lambda, 0.013);
    assert_eq!(m2.cfg, model.cfg);
    let img = random_image(64, 64, 19);
    let a = encode_image(&model, &store, &img, 0).unwrap();
    let b = encode_image(&m2, &s2, &img, 0).unwrap();
    assert_eq!(a.stream, b.stream);
    assert!(Model::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}
