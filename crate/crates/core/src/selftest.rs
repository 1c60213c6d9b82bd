//! Fast invariant checks over every module, run by `hcfs selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode_image, encode_image, synthetic_textures, Model, ModelConfig};
use crate::coder::{decode_symbols, encode_symbols, gaussian_table, CdfTable, CodedStream};
use crate::error::Result;
use crate::eval::{bd_rate, RdCurve, RdPoint};
use crate::frequency::{dct2, idct2, window_merge, window_partition};
use crate::gradcheck::grad_check;
use crate::ssm::build_scan_orders;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(u64) -> Result<std::result::Result<String, String>>;

const CHECKS: [(&str, Check); 7] = [
    ("scan orders", scan_orders),
    ("dct roundtrip", dct_roundtrip),
    ("window tiling", window_tiling),
    ("gaussian bin gradient", bin_gradient),
    ("range coder", range_coder),
    ("bd-rate fixture", bd_fixture),
    ("codec roundtrip", codec_roundtrip),
];

/// Run every check; an `Err` from a check counts as a failure.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let (passed, detail) = match check(seed) {
                Ok(Ok(d)) => (true, d),
                Ok(Err(d)) => (false, d),
                Err(e) => (false, e.to_string()),
            };
            CheckOutcome { name, passed, detail }
        })
        .collect()
}

fn verdict(ok: bool, detail: String) -> std::result::Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scan_orders(_: u64) -> Result<std::result::Result<String, String>> {
    let (h, w) = (6, 7);
    let orders = build_scan_orders(h, w);
    let bijective = orders.iter().all(|o| {
        let mut seen = vec![false; h * w];
        o.perm.iter().all(|&p| p < h * w && !std::mem::replace(&mut seen[p], true))
    });
    let pos: Vec<Vec<usize>> = orders.iter().map(|o| o.inverse()).collect();
    let mut uncovered = 0;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            for (dr, dc) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                let (p, q) = (r * w + c, ((r as i64 + dr) * w as i64 + c as i64 + dc) as usize);
                if !pos.iter().any(|ps| ps[p].abs_diff(ps[q]) == 1) {
                    uncovered += 1;
                }
            }
        }
    }
    Ok(verdict(
        orders.len() == 8 && bijective && uncovered == 0,
        format!("{} orders, bijective {bijective}, uncovered neighbours {uncovered}", orders.len()),
    ))
}

fn dct_roundtrip(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::<f64>::from_fn(&[3, 8, 8], |_| rng.random_range(-1.0..1.0));
    let mut t = Tape::<f64>::new();
    let xv = t.constant(x.clone());
    let f = dct2(&mut t, xv)?;
    let back = idct2(&mut t, f)?;
    let err = t.value(back).zip_map(&x, |a, b| a - b).max_abs();
    let energy = |v: &Tensor<f64>| v.data().iter().map(|a| a * a).sum::<f64>();
    let parseval = (energy(t.value(f)) - energy(&x)).abs();
    Ok(verdict(err < 1e-9 && parseval < 1e-9, format!("roundtrip {err:.1e}, parseval {parseval:.1e}")))
}

fn window_tiling(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::<f32>::from_fn(&[2, 11, 6], |_| rng.random());
    let mut t = Tape::<f32>::new();
    let xv = t.constant(x.clone());
    let (win, grid) = window_partition(&mut t, xv, 4)?;
    let back = window_merge(&mut t, win, &grid)?;
    Ok(verdict(t.value(back) == &x, format!("{} windows", grid.count())))
}

fn bin_gradient(_: u64) -> Result<std::result::Result<String, String>> {
    let point = Tensor::from_f64(&[2, 2], &[0.3, 1.7, -0.8, 2.5])?;
    let err = grad_check(
        |t, x| {
            let v = t.narrow(x, 1, 0, 1)?;
            let s = t.narrow(x, 1, 1, 1)?;
            let m = t.gaussian_bin_mass(v, s)?;
            Ok(t.sum(m))
        },
        &point,
        1e-5,
    )?;
    Ok(verdict(err < 1e-4, format!("max relative error {err:.1e}")))
}

fn range_coder(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables: Vec<CdfTable> = (0..2000)
        .map(|_| gaussian_table(rng.random_range(0.05..20.0)))
        .collect::<Result<_>>()?;
    let symbols: Vec<usize> = tables
        .iter()
        .map(|tb| {
            let target = rng.random_range(0..*tb.cumulative().last().unwrap());
            tb.lookup(target)
        })
        .collect();
    let bytes = encode_symbols(&symbols, &tables)?;
    let back = decode_symbols(&bytes, &tables)?;
    Ok(verdict(back == symbols, format!("{} symbols in {} bytes", symbols.len(), bytes.len())))
}

fn bd_fixture(_: u64) -> Result<std::result::Result<String, String>> {
    let pts = [(0.25, 30.0), (0.5, 33.0), (1.0, 36.0), (2.0, 39.0)];
    let curve = |k: f64| RdCurve::new("c", pts.iter().map(|&(r, p)| RdPoint::new(r * k, p)).collect());
    let up = bd_rate(&curve(1.0)?, &curve(1.1)?)?;
    let down = bd_rate(&curve(1.0)?, &curve(0.8)?)?;
    Ok(verdict(
        (up - 10.0).abs() < 1e-6 && (down + 20.0).abs() < 1e-6,
        format!("{up:+.6}% / {down:+.6}%"),
    ))
}

fn codec_roundtrip(seed: u64) -> Result<std::result::Result<String, String>> {
    let (model, store) = Model::new(ModelConfig::desk(), seed)?;
    let img = synthetic_textures(1, 40, seed).remove(0);
    let enc = encode_image(&model, &store, &img, 0)?;
    let stream = CodedStream::from_bytes(&enc.stream.to_bytes()?)?;
    let dec = decode_image(&model, &store, &stream)?;
    let exact = dec.y_bar == enc.y_bar && dec.z_hat == enc.z_hat;
    Ok(verdict(
        exact && dec.image.shape() == img.shape(),
        format!("{} payload bytes, latents bit-exact {exact}", stream.payload_len()),
    ))
}
