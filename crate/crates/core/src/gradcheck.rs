//! Central finite-difference verification of analytic gradients.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::{Bindings, Gradients};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

/// Anything that owns a flat collection of named [`Parameter`]s.
///
/// Visit order is canonical per type: it fixes initialization order,
/// checkpoint layout, and gradient routing.
pub trait ParamSet<E: Scalar> {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter<E>));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>));

    fn param_count(&self) -> u64 {
        let mut n = 0u64;
        self.for_each_param(&mut |_, p| n += p.value.numel() as u64);
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |name, _| names.push(name.to_string()));
        names
    }
}

/// Ad-hoc parameter bag for tests and per-primitive checks.
#[derive(Debug, Clone)]
pub struct NamedParams<E: Scalar>(pub Vec<(String, Parameter<E>)>);

impl<E: Scalar> ParamSet<E> for NamedParams<E> {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter<E>)) {
        for (name, p) in &self.0 {
            f(name, p);
        }
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>)) {
        for (name, p) in &mut self.0 {
            f(name, p);
        }
    }
}

pub type GradTable<E> = BTreeMap<String, Tensor<E>>;

/// Collect per-parameter gradients out of a backward sweep, keyed by the
/// names recorded at bind time.
pub fn collect_grad_table<E: Scalar>(bindings: &Bindings, grads: &Gradients<E>) -> GradTable<E> {
    let mut table = GradTable::new();
    for (name, value) in bindings.entries() {
        if let Some(g) = grads.wrt(*value) {
            table.insert(name.clone(), g.clone());
        }
    }
    table
}

/// Accumulate a gradient table into the owning parameters, fulfilling the
/// backward contract: gradients land in each `Parameter::gradient`.
pub fn accumulate_into<E: Scalar, P: ParamSet<E>>(
    params: &mut P,
    table: &GradTable<E>,
) -> Result<()> {
    let mut failed: Option<Error> = None;
    params.for_each_param_mut(&mut |name, p| {
        if failed.is_some() {
            return;
        }
        if let Some(g) = table.get(name) {
            if let Err(e) = p.accumulate(g) {
                failed = Some(e);
            }
        }
    });
    match failed {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub tol: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compare analytic gradients against central finite differences of a
/// deterministic scalar function of the parameters.
///
/// The relative error denominator is floored at 1e-8 so exact zeros on both
/// sides compare clean.
pub fn finite_diff_check<P, F>(
    params: &P,
    eval: F,
    analytic: &GradTable<f64>,
    cfg: &FdConfig,
) -> Result<FdReport>
where
    P: ParamSet<f64> + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let base = eval(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(
            "non-finite value while evaluating the check function".to_string(),
        ));
    }

    let mut work = params.clone();
    let names = params.param_names();
    let mut checked = 0usize;
    let mut max_rel_err = 0.0f64;
    let mut worst = None;

    for name in &names {
        let numel = {
            let mut n = 0usize;
            params.for_each_param(&mut |pn, p| {
                if pn == name {
                    n = p.value.numel();
                }
            });
            n
        };
        for i in 0..numel {
            let f_plus = eval_perturbed(&mut work, &eval, name, i, cfg.step)?;
            let f_minus = eval_perturbed(&mut work, &eval, name, i, -cfg.step)?;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::Numeric(alloc::format!(
                    "non-finite intermediate while perturbing {name}[{i}]"
                )));
            }
            let fd = (f_plus - f_minus) / (2.0 * cfg.step);
            let a = analytic
                .get(name.as_str())
                .map(|t| t.data()[i])
                .unwrap_or(0.0);
            let denom = a.abs().max(fd.abs()).max(1e-8);
            let rel = (a - fd).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((name.clone(), i));
            }
            checked += 1;
        }
    }

    Ok(FdReport {
        checked,
        max_rel_err,
        worst,
        tol: cfg.tol,
    })
}

fn eval_perturbed<P, F>(work: &mut P, eval: &F, name: &str, i: usize, delta: f64) -> Result<f64>
where
    P: ParamSet<f64>,
    F: Fn(&P) -> Result<f64>,
{
    set_delta(work, name, i, delta);
    let out = eval(work);
    set_delta(work, name, i, -delta);
    out
}

fn set_delta<P: ParamSet<f64>>(params: &mut P, name: &str, i: usize, delta: f64) {
    params.for_each_param_mut(&mut |pn, p| {
        if pn == name {
            p.value.data_mut()[i] += delta;
        }
    });
}
