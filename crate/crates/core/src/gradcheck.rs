//! Central finite-difference gradient checks in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst relative error `|analytic - numeric| / max(1, |numeric|)` over the
/// checked coordinates, split by inputs and parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub input: f64,
    pub params: f64,
    /// Name and flat index of the parameter coordinate with the largest error.
    pub worst_param: Option<(String, usize)>,
}

impl GradReport {
    pub fn max(&self) -> f64 {
        self.input.max(self.params)
    }
}

/// Finite-difference formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, truncation error `O(h^2)`.
    Central,
    /// Richardson combination of central differences at `h` and `h/2`,
    /// truncation error `O(h^4)`. Deep blocks with normalisation layers have
    /// third derivatives large enough that plain central differences at
    /// `h = 1e-3` are themselves off by ~1e-4.
    Richardson,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub h: f64,
    pub stencil: Stencil,
    /// At most this many input coordinates are probed (sampled with `seed`).
    pub max_input: usize,
    pub max_param: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            stencil: Stencil::Central,
            max_input: usize::MAX,
            max_param: usize::MAX,
            seed: 0,
        }
    }
}

impl CheckConfig {
    pub fn richardson() -> Self {
        Self {
            stencil: Stencil::Richardson,
            ..Self::default()
        }
    }

    pub fn h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn limits(mut self, max_input: usize, max_param: usize, seed: u64) -> Self {
        self.max_input = max_input;
        self.max_param = max_param;
        self.seed = seed;
        self
    }
}

/// Numeric derivative of `f` along one coordinate, `f(delta)` evaluating at
/// the point shifted by `delta`.
fn derivative(cfg: &CheckConfig, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let h = cfg.h;
    let central = (f(h)? - f(-h)?) / (2.0 * h);
    Ok(match cfg.stencil {
        Stencil::Central => central,
        Stencil::Richardson => {
            let half = (f(h / 2.0)? - f(-h / 2.0)?) / h;
            (4.0 * half - central) / 3.0
        }
    })
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Check the gradient of scalar `f` with respect to its input at `point`.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let r = grad_check_with_params(&mut store, point, &CheckConfig::default().h(h), f)?;
    Ok(r.input)
}

/// Check input and parameter gradients of scalar `f` at `point` under the
/// parameters in `store`.
pub fn grad_check_with_params<F>(
    store: &mut ParamStore<f64>,
    point: &Tensor<f64>,
    cfg: &CheckConfig,
    f: F,
) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>, x: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::with_params(store);
        let v = tape.constant(x.clone());
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let (input_grad, param_grads) = {
        let mut tape = Tape::with_params(&*store);
        let v = tape.leaf(point.clone());
        let out = f(&mut tape, v)?;
        let grads = tape.backward(out)?;
        let ig = grads
            .wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(point.shape()));
        let pg: Vec<Option<Tensor<f64>>> =
            store.ids().map(|id| grads.param(id).cloned()).collect();
        (ig, pg)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradReport::default();

    let n = point.numel();
    let coords: Vec<usize> = if n <= cfg.max_input {
        (0..n).collect()
    } else {
        sample(&mut rng, n, cfg.max_input).into_vec()
    };
    let mut x = point.clone();
    for i in coords {
        let orig = x.data()[i];
        let numeric = derivative(cfg, |d| {
            x.data_mut()[i] = orig + d;
            eval(store, &x)
        })?;
        x.data_mut()[i] = orig;
        report.input = report.input.max(rel_err(input_grad.data()[i], numeric));
    }

    let flat: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, p)| (0..p.value.numel()).map(move |j| (id, j)))
        .collect();
    let picks: Vec<usize> = if flat.len() <= cfg.max_param {
        (0..flat.len()).collect()
    } else {
        sample(&mut rng, flat.len(), cfg.max_param).into_vec()
    };
    for k in picks {
        let (id, j) = flat[k];
        let orig = store.value(id).data()[j];
        let numeric = derivative(cfg, |d| {
            store.value_mut(id).data_mut()[j] = orig + d;
            eval(store, point)
        })?;
        store.value_mut(id).data_mut()[j] = orig;
        let analytic = param_grads[id.0].as_ref().map_or(0.0, |g| g.data()[j]);
        let e = rel_err(analytic, numeric);
        if e > report.params {
            report.params = e;
            report.worst_param = Some((store.name(id).to_string(), j));
        }
    }
    Ok(report)
}

/// A fixed random linear functional `sum(w * y)`, so that checks see
/// non-uniform upstream gradients.
pub fn random_projection(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(y).to_vec();
    let w = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}
