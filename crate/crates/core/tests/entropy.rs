use hcfs_core::entropy::{
    bits_from_probs, gaussian_bin_prob, gaussian_bin_prob_raw, quantize, rate_bits, FactorizedDensity,
    HyperAnalysis, HyperConfig, HyperSynthesis, QuantMode, SliceConfig, SliceNetwork, P_FLOOR, SIGMA_FLOOR,
    SYMBOL_MAX, SYMBOL_MIN,
};
use hcfs_core::gradcheck::{grad_check_with_params, random_projection, CheckConfig};
use hcfs_core::optim::Adam;
use hcfs_core::params::randomize;
use hcfs_core::{ParamBuilder, ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn build<B>(seed: u64, f: impl FnOnce(&mut ParamBuilder) -> B) -> (ParamStore, B) {
    let mut store = ParamStore::new();
    let b = f(&mut ParamBuilder::new(&mut store, seed));
    (store, b)
}

fn input(shape: &[usize], seed: u64, amp: f32) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-amp..amp))
}

/// Composite Simpson integral of the Gaussian density over `[a, b]`.
fn simpson_mass(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let pdf = |x: f64| {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn gaussian_standard_bin_matches_quadrature() {
    let p = gaussian_bin_prob(0.0, 0.0, 1.0);
    let oracle = simpson_mass(-0.5, 0.5, 0.0, 1.0);
    assert!((p - oracle).abs() < 1e-12, "{p} vs {oracle}");
    assert!((p - 0.382925).abs() < 1e-6);
    for (k, mu, s) in [(3.0, 0.7, 1.9), (-2.0, 0.1, 0.3), (0.0, -0.45, 0.04), (5.0, 5.2, 12.0)] {
        let o = simpson_mass(k - 0.5, k + 0.5, mu, s);
        assert!((gaussian_bin_prob_raw(k, mu, s) - o).abs() < 1e-10, "{k} {mu} {s}");
    }
}

#[test]
fn gaussian_mass_concentrates_at_floor_scale() {
    for k in [-3.0, 0.0, 17.0] {
        assert!(gaussian_bin_prob(k, k, SIGMA_FLOOR) > 1.0 - 1e-12);
    }
}

#[test]
fn gaussian_bins_sum_to_one() {
    let s: f64 = (-30..=30).map(|k| gaussian_bin_prob_raw(k as f64, 0.3, 2.0)).sum();
    assert!((s - 1.0).abs() < 1e-9, "{s}");
}

#[test]
fn gaussian_pmf_valid_on_alphabet() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mu = rng.random_range(-20.0..20.0);
        let sigma = rng.random_range(SIGMA_FLOOR..40.0);
        let mut total = 0.0;
        for k in SYMBOL_MIN..=SYMBOL_MAX {
            let p = gaussian_bin_prob_raw(k as f64, mu, sigma);
            assert!(p >= 0.0);
            total += p;
        }
        assert!(total <= 1.0 + 1e-9, "{total}");
    }
}

#[test]
fn factorized_cdf_monotone_and_floored() {
    let (mut store, fd) = build(1, |pb| FactorizedDensity::new(pb, "fd", 4));
    randomize(&mut store, 2, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let c = rng.random_range(0..4);
        let a: f64 = rng.random_range(-50.0..50.0);
        let b: f64 = rng.random_range(-50.0..50.0);
        let (a, b) = (a.min(b), a.max(b));
        assert!(fd.cdf(&store, c, a) <= fd.cdf(&store, c, b), "{c} {a} {b}");
    }
    for c in 0..4 {
        for k in -200..=200 {
            assert!(fd.bin_prob(&store, c, k as f64) >= P_FLOOR);
        }
    }
}

#[test]
fn factorized_fit_to_unit_normal_integrates() {
    let (mut store, fd) = build(3, |pb| FactorizedDensity::new(pb, "fd", 2));
    let mut opt = Adam::new(&store, 0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut last = f64::INFINITY;
    for step in 0..600 {
        let x = Tensor::from_fn(&[2, 256], |_| (normal(&mut rng) + rng.random_range(-0.5..0.5)) as f32);
        store.zero_grad();
        let grads = {
            let mut t = Tape::with_params(&store);
            let xv = t.constant(x);
            let p = fd.likelihood(&mut t, xv).unwrap();
            let r = rate_bits(&mut t, p).unwrap();
            let r = t.scale(r, 1.0 / 512.0);
            if step >= 550 {
                last = last.min(t.value(r).item() as f64);
            }
            t.backward(r).unwrap()
        };
        store.accumulate(&grads);
        opt.step(&mut store);
    }
    // differential entropy of N(0,1) + U is about 2.1 bits per sample
    assert!(last < 2.3, "{last}");
    for c in 0..2 {
        let s: f64 = (-60..=60).map(|k| fd.bin_prob_raw(&store, c, k as f64)).sum();
        // exact sum is CDF(60.5) - CDF(-60.5) < 1; allow summation rounding
        assert!(s > 0.999 && s < 1.0 + 1e-12, "channel {c}: {s}");
    }
    for m in fd.medians(&store) {
        assert!(m.abs() < 0.3, "{m}");
    }
}

#[test]
fn rate_matches_empirical_entropy() {
    // geometric-like source over 8 symbols
    let probs: Vec<f64> = {
        let w: Vec<f64> = (0..8).map(|i| 0.6f64.powi(i)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    };
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 8];
    let mut assigned = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = 7;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = i;
                break;
            }
        }
        counts[k] += 1;
        assigned.push(probs[k]);
    }
    let empirical: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| -(c as f64) * (c as f64 / n as f64).log2())
        .sum();
    let mut t = Tape::<f64>::new();
    let p = t.constant(Tensor::from_f64(&[n], &assigned).unwrap());
    let r = rate_bits(&mut t, p).unwrap();
    let bits = t.value(r).item();
    assert!((bits - empirical).abs() / empirical < 0.01, "{bits} vs {empirical}");
    assert!((bits_from_probs(&assigned).unwrap() - bits).abs() < 1e-6 * bits);
}

const SLICES: SliceConfig = SliceConfig {
    latent: 12,
    slices: 3,
    hyper: 6,
    hidden: 8,
    heads: 2,
    window: 4,
};

fn slice_net(seed: u64) -> (ParamStore, SliceNetwork) {
    let (mut store, net) = build(seed, |pb| SliceNetwork::new(pb, "slices", SLICES).unwrap());
    randomize(&mut store, seed + 1, 0.3);
    (store, net)
}

fn stats_of(store: &ParamStore, net: &SliceNetwork, i: usize, feats: &[Tensor; 2], decoded: &[Tensor]) -> (Tensor, Tensor) {
    let mut t = Tape::inference(store);
    let fm = t.constant(feats[0].clone());
    let fs = t.constant(feats[1].clone());
    let d: Vec<Var> = decoded.iter().map(|x| t.constant(x.clone())).collect();
    let (mu, sigma) = net.stats(&mut t, i, fm, fs, &d).unwrap();
    (t.value(mu).clone(), t.value(sigma).clone())
}

#[test]
fn slice_stats_are_causal_and_deterministic() {
    let (store, net) = slice_net(11);
    let feats = [input(&[6, 5, 7], 1, 1.0), input(&[6, 5, 7], 2, 1.0)];
    let decoded: Vec<Tensor> = (0..3).map(|j| input(&[4, 5, 7], 10 + j, 2.0)).collect();
    for i in 0..3 {
        let (mu, sigma) = stats_of(&store, &net, i, &feats, &decoded[..i]);
        assert_eq!(mu.shape(), &[4, 5, 7]);
        assert!(sigma.data().iter().all(|&s| s as f64 >= SIGMA_FLOOR - 1e-9));
        // later slices may change arbitrarily without affecting slice i
        let mut perturbed = decoded.clone();
        for p in perturbed.iter_mut().skip(i) {
            *p = input(&[4, 5, 7], 99, 5.0);
        }
        let (mu2, sigma2) = stats_of(&store, &net, i, &feats, &perturbed[..i]);
        assert_eq!(mu, mu2);
        assert_eq!(sigma, sigma2);
    }
    // the first slice depends only on the hyper features
    let (mu0, _) = stats_of(&store, &net, 0, &feats, &[]);
    let other = [feats[0].clone(), feats[1].clone()];
    assert_eq!(mu0, stats_of(&store, &net, 0, &other, &[]).0);
}

#[test]
fn slice_argument_errors() {
    let (store, net) = slice_net(12);
    let mut t = Tape::inference(&store);
    let f = t.constant(input(&[6, 4, 4], 1, 1.0));
    let d = t.constant(input(&[4, 4, 4], 2, 1.0));
    assert!(net.stats(&mut t, 3, f, f, &[d, d, d]).is_err());
    assert!(net.stats(&mut t, 1, f, f, &[]).is_err());
    let bad = t.constant(input(&[5, 4, 4], 2, 1.0));
    assert!(net.stats(&mut t, 1, f, f, &[bad]).is_err());
    let mut pb_store = ParamStore::new();
    let cfg = SliceConfig { slices: 5, ..SLICES };
    assert!(SliceNetwork::new(&mut ParamBuilder::new(&mut pb_store, 0), "s", cfg).is_err());
}

#[test]
fn hard_slice_symbols_are_integers_and_residual_bounded() {
    let (mut store, net) = slice_net(13);
    randomize(&mut store, 14, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut t = Tape::inference(&store);
    let f = t.constant(input(&[6, 4, 4], 1, 3.0));
    let y = t.constant(input(&[4, 4, 4], 2, 20.0));
    let out = net.forward(&mut t, 0, f, f, &[], y, QuantMode::Hard, &mut rng).unwrap();
    let q = t.value(out.q).clone();
    assert!(q.data().iter().all(|v| v.fract() == 0.0));
    let mu = t.value(out.mu).clone();
    let y_hat = t.value(out.y_hat);
    for i in 0..q.numel() {
        assert_eq!(y_hat.data()[i], q.data()[i] + mu.data()[i]);
        let r = t.value(out.y_bar).data()[i] - y_hat.data()[i];
        assert!(r.abs() <= 0.5, "{r}");
    }
}

#[test]
fn quantize_hard_on_tape() {
    let mut t = Tape::<f32>::new();
    let v = t.constant(Tensor::from_f64(&[2], &[0.4, -0.5]).unwrap());
    let q = quantize(&mut t, v, QuantMode::Hard, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(t.value(q).data(), &[0.0, -1.0]);
}

fn hyper_cfg(latent: usize, cz: usize, hidden: usize, state: usize) -> HyperConfig {
    HyperConfig {
        latent,
        hyper_latent: cz,
        hidden,
        out: latent,
        state,
        afmm_window: 4,
    }
}

#[test]
fn hyper_shape_chain_full_widths() {
    let cfg = hyper_cfg(320, 192, 256, 16);
    let (store, (ha, hs)) = build(1, |pb| (HyperAnalysis::new(pb, "h_a", cfg), HyperSynthesis::new(pb, "h_mean", cfg)));
    let mut t = Tape::inference(&store);
    let y = t.constant(input(&[320, 16, 16], 3, 1.0));
    let z = ha.forward(&mut t, y).unwrap();
    assert_eq!(t.shape(z), &[192, 4, 4]);
    let f = hs.forward(&mut t, z).unwrap();
    assert_eq!(t.shape(f), &[320, 16, 16]);
    let odd = t.constant(input(&[320, 6, 8], 3, 1.0));
    assert!(ha.forward(&mut t, odd).is_err());
}

#[test]
fn hyper_deterministic() {
    let cfg = hyper_cfg(8, 4, 8, 4);
    let run = || {
        let (store, ha) = build(5, |pb| HyperAnalysis::new(pb, "h_a", cfg));
        let mut t = Tape::inference(&store);
        let y = t.constant(input(&[8, 8, 8], 3, 1.0));
        let z = ha.forward(&mut t, y).unwrap();
        t.value(z).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn hyper_gradients() {
    let cfg = hyper_cfg(4, 2, 4, 2);
    let (mut store, (ha, hs)) = build(7, |pb| (HyperAnalysis::new(pb, "h_a", cfg), HyperSynthesis::new(pb, "h_s", cfg)));
    randomize(&mut store, 8, 0.4);
    let mut s64 = store.cast::<f64>();
    let x = input(&[4, 8, 8], 9, 1.0).cast::<f64>();
    let r = grad_check_with_params(&mut s64, &x, &CheckConfig::default().h(1e-5).limits(64, 300, 1), |t, v| {
        let z = ha.forward(t, v)?;
        let f = hs.forward(t, z)?;
        random_projection(t, f, 3)
    })
    .unwrap();
    assert!(r.max() < 1e-4, "{r:?}");
}

#[test]
fn slice_gradients() {
    let cfg = SliceConfig { latent: 4, slices: 2, hyper: 2, hidden: 4, heads: 2, window: 4 };
    let (mut store, net) = build(3, |pb| SliceNetwork::new(pb, "s", cfg).unwrap());
    randomize(&mut store, 4, 0.2);
    // keep the scales off the floor, where the clamp is not differentiable
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.name.ends_with("scale.conv_out.bias")).map(|(id, _)| id).collect();
    for id in ids {
        store.value_mut(id).data_mut().fill(6.0);
    }
    let mut s64 = store.cast::<f64>();
    // packed input: f_mean, f_scale, slice 0, slice 1 along channels
    let x = input(&[8, 4, 4], 9, 1.0).cast::<f64>();
    let r = grad_check_with_params(&mut s64, &x, &CheckConfig::default().h(1e-5).limits(64, 300, 2), |t, v| {
        t.set_ste_identity(true);
        let fm = t.narrow(v, 0, 0, 2)?;
        let fs = t.narrow(v, 0, 2, 2)?;
        let y0 = t.narrow(v, 0, 4, 2)?;
        let y1 = t.narrow(v, 0, 6, 2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o0 = net.forward(t, 0, fm, fs, &[], y0, QuantMode::Ste, &mut rng)?;
        let (mu, sigma) = net.stats(t, 1, fm, fs, &[o0.y_bar])?;
        let ybar = net.refine(t, 1, mu, y1)?;
        let a = random_projection(t, ybar, 1)?;
        let b = random_projection(t, sigma, 2)?;
        let s = t.add(a, b)?;
        let l = t.ln(o0.likelihood);
        let c = random_projection(t, l, 3)?;
        t.add(s, c)
    })
    .unwrap();
    assert!(r.max() < 1e-4, "{r:?}");
}
