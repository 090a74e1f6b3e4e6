//! Central finite-difference verification of analytic gradients.

use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::SeedableRng;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub abs_floor: f64,
    /// Check a seeded random subset of each parameter's entries.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            max_entries_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "gradient check {} (max rel. error {:.3e}, tolerance {:.1e})",
            if self.passed { "passed" } else { "FAILED" },
            self.max_rel_error,
            self.tolerance
        )?;
        for p in &self.params {
            writeln!(
                f,
                "  {:<24} {:>6} entries  max rel {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
                p.name, p.checked, p.max_rel_error, p.worst_index, p.analytic, p.numeric
            )?;
        }
        Ok(())
    }
}

/// Compares reverse-mode gradients of `loss` against central differences for
/// every parameter in `store`.
///
/// `loss` must be deterministic: build the graph in evaluation mode or with
/// fixed dropout masks. Parameter values are restored before returning.
pub fn grad_check<F>(store: &mut ParamStore<f64>, cfg: GradCheckConfig, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<(Tape<f64>, Var)>,
{
    store.zero_grad();
    let (tape, out) = loss(store)?;
    let grads = tape.backward(out)?;
    tape.accumulate_param_grads(&grads, store);
    drop(tape);

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let ids: Vec<_> = store.params().map(|(id, _)| id).collect();
    let mut report = GradCheckReport {
        params: Vec::new(),
        max_rel_error: 0.0,
        tolerance: cfg.tolerance,
        passed: true,
    };
    for id in ids {
        let n = store.value(id).len();
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: store.param(id).name.clone(),
            checked: entries.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &i in &entries {
            let original = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = original + cfg.step;
            let plus = eval(&mut loss, store)?;
            store.value_mut(id).data_mut()[i] = original - cfg.step;
            let minus = eval(&mut loss, store)?;
            store.value_mut(id).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let analytic = store.grad(id).data()[i];
            let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
            let rel = (analytic - numeric).abs() / denom;
            if rel > check.max_rel_error || rel.is_nan() {
                check.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                check.worst_index = i;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.params.push(check);
    }
    report.passed = report.max_rel_error <= cfg.tolerance;
    Ok(report)
}

fn eval<F>(loss: &mut F, store: &ParamStore<f64>) -> Result<f64>
where
    F: FnMut(&ParamStore<f64>) -> Result<(Tape<f64>, Var)>,
{
    let (tape, out) = loss(store)?;
    Ok(tape.value(out).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn linear_model_matches_exactly() {
        let mut store = ParamStore::<f64>::new();
        let w = store
            .add("w", Tensor::from_f64(vec![2, 3], &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap())
            .unwrap();
        let x = Tensor::from_f64(vec![4, 3], &[1., 2., 3., -1., 0.5, 2., 0., 0., 1., 3., -2., 1.]).unwrap();
        let report = grad_check(
            &mut store,
            GradCheckConfig {
                tolerance: 1e-9,
                ..GradCheckConfig::default()
            },
            |s| {
                let mut tape = Tape::new();
                let xi = tape.input(x.clone());
                let wi = tape.param(s, w);
                let y = tape.dense(xi, wi, None)?;
                let l = tape.sum(y);
                Ok((tape, l))
            },
        )
        .unwrap();
        assert!(report.passed, "{report}");
    }
}
