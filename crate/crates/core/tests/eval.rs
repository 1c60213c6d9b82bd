use hcfs_core::codec::{Model, ModelConfig};
use hcfs_core::eval::{bd_rate, evaluate, load_image, psnr, save_image, ImageBuffer, RdCurve, RdPoint, PSNR_CAP};
use hcfs_core::Error;
use proptest::prelude::*;

const ANCHOR: [(f64, f64); 4] = [(0.25, 30.0), (0.5, 33.0), (1.0, 36.0), (2.0, 39.0)];

fn curve(points: &[(f64, f64)], rate_scale: f64) -> RdCurve {
    RdCurve::new("c", points.iter().map(|&(r, p)| RdPoint::new(r * rate_scale, p)).collect()).unwrap()
}

/// Least-squares cubic by the normal equations in `PSNR - 33`, then the mean
/// log-rate gap by composite Simpson integration.
fn bd_rate_oracle(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    fn fit(pts: &[(f64, f64)]) -> [f64; 4] {
        let mut a = [[0.0f64; 5]; 4];
        for &(r, p) in pts {
            let p = p - 33.0;
            let pw = [1.0, p, p * p, p * p * p];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] += pw[i] * pw[j];
                }
                a[i][4] += pw[i] * r.log10();
            }
        }
        // Gauss-Jordan without pivoting is fine for these well separated fixtures
        for c in 0..4 {
            for r in 0..4 {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in 0..5 {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        std::array::from_fn(|i| a[i][4] / a[i][i])
    }
    let range = |pts: &[(f64, f64)]| {
        pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &(_, p)| (lo.min(p), hi.max(p)))
    };
    let (lo, hi) = {
        let (a, b) = (range(anchor), range(test));
        (a.0.max(b.0), a.1.min(b.1))
    };
    let (ca, ct) = (fit(anchor), fit(test));
    let eval = |c: &[f64; 4], x: f64| {
        let x = x - 33.0;
        c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x
    };
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * (eval(&ct, x) - eval(&ca, x));
    }
    let avg = s * h / 3.0 / (hi - lo);
    (10f64.powf(avg) - 1.0) * 100.0
}

#[test]
fn bd_rate_fixtures() {
    let a = curve(&ANCHOR, 1.0);
    assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    assert!((bd_rate(&a, &curve(&ANCHOR, 1.10)).unwrap() - 10.0).abs() < 1e-6);
    assert!((bd_rate(&a, &curve(&ANCHOR, 0.8)).unwrap() + 20.0).abs() < 1e-6);
}

#[test]
fn bd_rate_agrees_with_numeric_integration() {
    let anchor = [(0.1, 27.2), (0.22, 30.1), (0.48, 33.4), (0.9, 36.0), (1.7, 38.1)];
    let test = [(0.09, 27.9), (0.2, 31.0), (0.41, 33.9), (0.8, 36.8)];
    let got = bd_rate(&curve(&anchor, 1.0), &curve(&test, 1.0)).unwrap();
    let want = bd_rate_oracle(&anchor, &test);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    assert!(got < 0.0);
}

#[test]
fn bd_rate_errors() {
    let a = curve(&ANCHOR, 1.0);
    let far: Vec<(f64, f64)> = ANCHOR.iter().map(|&(r, p)| (r, p + 20.0)).collect();
    assert!(matches!(bd_rate(&a, &curve(&far, 1.0)), Err(Error::Curve(_))));
    let three = ANCHOR[..3].iter().map(|&(r, p)| RdPoint::new(r, p)).collect();
    assert!(matches!(RdCurve::new("short", three), Err(Error::Curve(_))));
}

proptest! {
    #[test]
    fn uniform_rate_scaling_is_exact(scale in 0.3f64..3.0, offset in -5.0f64..5.0) {
        let shifted: Vec<(f64, f64)> = ANCHOR.iter().map(|&(r, p)| (r, p + offset)).collect();
        let a = curve(&shifted, 1.0);
        let got = bd_rate(&a, &curve(&shifted, scale)).unwrap();
        prop_assert!((got - (scale - 1.0) * 100.0).abs() < 1e-6);
    }
}

#[test]
fn ppm_file_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    let img = ImageBuffer::new(3, 2, (0..18).map(|v| (v * 14) as u8).collect()).unwrap();
    save_image(&path, &img).unwrap();
    assert_eq!(load_image(&path).unwrap(), img);
    std::fs::write(&path, b"P6\n3 2\n255\n\x01\x02").unwrap();
    assert!(matches!(load_image(&path), Err(Error::PayloadTruncated { .. })));
    std::fs::write(&path, b"P3\n1 1\n255\n0 0 0").unwrap();
    assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat(_))));
    std::fs::write(&path, b"P6\n1 x\n255\n").unwrap();
    assert!(matches!(load_image(&path), Err(Error::MalformedHeader(_))));
    assert!(matches!(load_image(dir.path().join("missing.ppm")), Err(Error::Io(_))));
}

#[test]
fn psnr_examples() {
    let a = ImageBuffer::new(2, 2, vec![10; 12]).unwrap();
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    let b = ImageBuffer::new(2, 2, vec![11; 12]).unwrap();
    assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-12);
    let c = ImageBuffer::new(1, 2, vec![10; 6]).unwrap();
    assert!(psnr(&a, &c).is_err());
}

#[test]
fn eval_bpp_is_container_bytes() {
    let (model, store) = Model::new(ModelConfig::desk(), 1).unwrap();
    let img = ImageBuffer::new(24, 16, (0..24 * 16 * 3).map(|v| (v % 251) as u8).collect()).unwrap();
    let (rec, bytes, recon) = evaluate(&model, &store, &img, 0).unwrap();
    assert_eq!(rec.bytes, bytes.len());
    assert_eq!(rec.bpp, bytes.len() as f64 * 8.0 / (24.0 * 16.0));
    assert_eq!((recon.width, recon.height), (24, 16));
    assert_eq!(rec.psnr, psnr(&img, &recon).unwrap());
}
