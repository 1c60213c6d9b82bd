//! Oracles shared by several integration test targets.

use hcfs_core::ssm::SsmParams;
use hcfs_core::ParamStore;

/// Independent step-by-step evaluation of the selective scan in f64.
pub fn naive_scan(store: &ParamStore, p: &SsmParams, x: &[f64], len: usize) -> Vec<f64> {
    let (ch, n) = (p.channels(), p.state());
    let v = |id| store.value(id).data().iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let (log_a, d, wd, bias, wb, wc) = (
        v(p.log_a),
        v(p.d_skip),
        v(p.proj_delta),
        v(p.delta_bias),
        v(p.proj_b),
        v(p.proj_c),
    );
    let mut h = vec![vec![0.0; n]; ch];
    let mut y = Vec::new();
    for t in 0..len {
        let xt = &x[t * ch..(t + 1) * ch];
        let dot = |w: &[f64], row: usize| (0..ch).map(|j| w[row * ch + j] * xt[j]).sum::<f64>();
        let bt: Vec<f64> = (0..n).map(|s| dot(&wb, s)).collect();
        let ct: Vec<f64> = (0..n).map(|s| dot(&wc, s)).collect();
        for k in 0..ch {
            let raw = dot(&wd, k) + bias[k];
            let delta = (1.0 + raw.exp()).ln();
            let mut out = d[k] * xt[k];
            for s in 0..n {
                let a = -log_a[k * n + s].exp();
                let a_bar = (delta * a).exp();
                let b_bar = (a_bar - 1.0) / a * bt[s];
                h[k][s] = a_bar * h[k][s] + b_bar * xt[k];
                out += ct[s] * h[k][s];
            }
            y.push(out);
        }
    }
    y
}
