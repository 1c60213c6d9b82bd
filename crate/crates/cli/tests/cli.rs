use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hcfs_core::codec::synthetic_textures;
use hcfs_core::eval::{load_image, psnr, save_image, ImageBuffer};

/// Reconstruction quality floor for the shipped checkpoint on a 64x64
/// texture. The checkpoint measures 28.3 dB on this image.
const SHIPPED_PSNR_FLOOR: f64 = 25.0;

fn hcfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcfs")).args(args).output().expect("binary runs")
}

fn shipped_checkpoint() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/toy-desk.ckpt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn selftest_passes() {
    let o = hcfs(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn bdrate_prints_fixture_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, scale: f64| {
        let path = dir.path().join(name);
        let body: String = [(0.25, 30.0), (0.5, 33.0), (1.0, 36.0), (2.0, 39.0)]
            .iter()
            .map(|(r, q)| format!("{},{q}\n", r * scale))
            .collect();
        std::fs::write(&path, format!("bpp,psnr\n{body}")).unwrap();
        path
    };
    let anchor = write("anchor.csv", 1.0);
    let up = write("up.csv", 1.1);
    let down = write("down.csv", 0.8);
    let o = hcfs(&["bdrate", "--anchor", p(&anchor), "--test", p(&up)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "+10.00%");
    let o = hcfs(&["bdrate", "--anchor", p(&anchor), "--test", p(&down)]);
    assert_eq!(stdout(&o).trim(), "-20.00%");
    // same files, same output
    assert_eq!(stdout(&o), stdout(&hcfs(&["bdrate", "--anchor", p(&anchor), "--test", p(&down)])));

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "bpp,psnr\n0.1,30\n0.2,31\n").unwrap();
    assert_eq!(hcfs(&["bdrate", "--anchor", p(&anchor), "--test", p(&short)]).status.code(), Some(3));
}

#[test]
fn exit_codes_distinguish_failures() {
    assert_eq!(hcfs(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hcfs(&["encode", "-i", "x.ppm"]).status.code(), Some(1));
    assert_eq!(hcfs(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.hcfs");
    let ckpt = shipped_checkpoint();
    let out = dir.path().join("out.ppm");
    assert_eq!(hcfs(&["decode", "-i", p(&missing), "-o", p(&out), "-m", p(&ckpt)]).status.code(), Some(2));

    let garbage = dir.path().join("bad.hcfs");
    std::fs::write(&garbage, b"not a container at all").unwrap();
    assert_eq!(hcfs(&["decode", "-i", p(&garbage), "-o", p(&out), "-m", p(&ckpt)]).status.code(), Some(3));

    let bad_img = dir.path().join("bad.ppm");
    std::fs::write(&bad_img, b"P6\n4 4\n255\n\x00").unwrap();
    assert_eq!(hcfs(&["eval", "-i", p(&bad_img), "-m", p(&ckpt)]).status.code(), Some(3));
}

#[test]
fn shipped_checkpoint_roundtrip_quality() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = shipped_checkpoint();
    let img = ImageBuffer::from_tensor(&synthetic_textures(1, 64, 4242).remove(0)).unwrap();
    let src = dir.path().join("in.ppm");
    let coded = dir.path().join("in.hcfs");
    let back = dir.path().join("back.ppm");
    save_image(&src, &img).unwrap();
    assert_eq!(hcfs(&["encode", "-i", p(&src), "-o", p(&coded), "-m", p(&ckpt)]).status.code(), Some(0));
    assert_eq!(hcfs(&["decode", "-i", p(&coded), "-o", p(&back), "-m", p(&ckpt)]).status.code(), Some(0));
    let rec = load_image(&back).unwrap();
    let q = psnr(&img, &rec).unwrap();
    assert!(q >= SHIPPED_PSNR_FLOOR, "psnr {q}");

    let o = hcfs(&["eval", "-i", p(&src), "-m", p(&ckpt), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["bpp", "psnr", "mse", "bytes", "width", "height"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let bytes = std::fs::metadata(&coded).unwrap().len();
    assert_eq!(v["bytes"].as_u64().unwrap(), bytes);
    assert_eq!(v["bpp"].as_f64().unwrap(), bytes as f64 * 8.0 / 4096.0);
    assert_eq!(v["psnr"].as_f64().unwrap(), q);
}

#[test]
fn train_toy_writes_checkpoint_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.toml");
    std::fs::write(
        &cfg,
        "[model]\nchannels = 8\nlatent = 12\nhyper_latent = 4\nhyper_width = 8\nslices = 3\n\
         slice_hidden = 8\nheads = 2\nstate = 2\nmain_window = 8\nentropy_window = 4\n\
         [train]\nsteps = 3\nlr = 1e-3\n[data]\ncount = 2\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = hcfs(&["--seed", "9", "train-toy", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let trace = std::fs::read_to_string(dir.path().join(format!("{name}.trace.jsonl"))).unwrap();
        (std::fs::read(&out).unwrap(), trace)
    };
    let (a, ta) = run("a.ckpt");
    let (b, tb) = run("b.ckpt");
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(ta.lines().count(), 3);
    let rec: serde_json::Value = serde_json::from_str(ta.lines().next().unwrap()).unwrap();
    assert!(rec["loss"].as_f64().unwrap() > 0.0);

    std::fs::write(&cfg, "[train]\nstpes = 3\n").unwrap();
    let o = hcfs(&["train-toy", "--config", p(&cfg), "--out", p(&dir.path().join("c.ckpt"))]);
    assert_eq!(o.status.code(), Some(3));
}
