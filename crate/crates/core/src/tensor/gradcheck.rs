use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Tape, Tensor, TensorId};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Check at most this many elements per input tensor (deterministic
    /// subsample); `None` checks every element.
    pub max_elements_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tol: 1e-4,
            max_elements_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub tol: f64,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compares tape gradients of a scalar function against central finite
/// differences, element by element.
///
/// `f` must be deterministic; it is re-evaluated with perturbed copies of
/// `inputs`, so it must not capture its own randomness per call.
pub fn grad_check<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect();
    let out = f(&mut tape, &ids)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = perturbed
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let out = f(&mut tape, &ids)?;
        Ok(tape.value(out).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        tol: opts.tol,
        failures: Vec::new(),
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        let n = t.numel();
        let elements: Vec<usize> = match opts.max_elements_per_input {
            Some(max) if n > max => {
                rand::seq::index::sample(&mut rng, n, max).into_vec()
            }
            _ => (0..n).collect(),
        };
        for e in elements {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + opts.h;
            let fp = eval(&work)?;
            work[i].data_mut()[e] = orig - opts.h;
            let fm = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (fp - fm) / (2.0 * opts.h);
            let a = analytic[i][e];
            let err = rel_err(a, numeric);
            report.max_rel_err = report.max_rel_err.max(err);
            report.checked += 1;
            if err > opts.tol {
                report.failures.push(GradCheckFailure {
                    input: i,
                    element: e,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }
    Ok(report)
}
