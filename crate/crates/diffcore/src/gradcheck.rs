//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::store::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub tol: f64,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err <= self.tol)
    }
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub eps: f64,
    pub tol: f64,
    /// Check at most this many evenly spaced elements per entry.
    pub max_elems_per_entry: Option<usize>,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            tol: 1e-5,
            max_elems_per_entry: None,
        }
    }
}

/// `|a - c| / max(1, |a|, |c|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

pub fn fd_check<F>(f: F, store: &mut ParamStore<f64>, eps: f64, tol: f64) -> Result<FdReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    fd_check_with(
        f,
        store,
        &FdOptions {
            eps,
            tol,
            max_elems_per_entry: None,
        },
    )
}

/// Compares gradients from one backward pass against central differences of
/// `f`, perturbing every parameter element in turn. On return the store's
/// gradient slots hold the analytic gradients.
pub fn fd_check_with<F>(f: F, store: &mut ParamStore<f64>, opts: &FdOptions) -> Result<FdReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss, store)?;
    drop(g);

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let l = f(&mut g, s)?;
        Ok(g.value(l).data()[0])
    };

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let analytic = store.grad(&name).expect("entry").data().to_vec();
        let n = analytic.len();
        let stride = match opts.max_elems_per_entry {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut worst = (0.0, 0);
        let mut checked = 0;
        for i in (0..n).step_by(stride) {
            let orig = store.value(&name).expect("entry").data()[i];
            store.value_mut(&name).expect("entry").data_mut()[i] = orig + opts.eps;
            let plus = eval(store)?;
            store.value_mut(&name).expect("entry").data_mut()[i] = orig - opts.eps;
            let minus = eval(store)?;
            store.value_mut(&name).expect("entry").data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(analytic[i], numeric);
            if err > worst.0 {
                worst = (err, i);
            }
            checked += 1;
        }
        entries.push(FdEntry {
            name,
            max_rel_err: worst.0,
            worst_index: worst.1,
            checked,
        });
    }
    Ok(FdReport { entries, tol: opts.tol })
}
