//! Pointwise (Nemytskii) drift and diffusion operators.
//!
//! The equation's nonlinearities are compositions with scalar functions:
//! a gradient-form drift `∂_ξ f(X)`, a zeroth-order reaction `f̃(X)`, and a
//! multiplicative noise amplitude `g(X)`. Projected onto the sine basis,
//! integration by parts turns the gradient term into cosine moments:
//!
//! ```text
//! ⟨∂_ξ f(X), e_j⟩ = −jπ · ⟨f(X), √2 cos(jπ·)⟩,
//! ```
//!
//! (the boundary term vanishes because `e_j(0) = e_j(1) = 0`), while the
//! reaction and diffusion terms are plain grid compositions followed by
//! `analyze`. Since the state field is zero at both endpoints, a composed
//! field `φ(X)` has boundary values `(φ(0), φ(0))`.

use std::sync::Arc;

use crate::error::{Result, SpdeError};
use crate::spectral::SpectralPlan;

/// Scalar function used pointwise by a Nemytskii operator.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A named triple of scalar functions defining one equation instance.
#[derive(Clone)]
pub struct ModelSpec {
    /// Identifier used by the CLI and reports.
    pub id: String,
    /// Transported inside the gradient: the drift contributes `∂_ξ f(X)`.
    pub f: ScalarFn,
    /// Zeroth-order reaction: the drift contributes `f̃(X)`.
    pub f_tilde: ScalarFn,
    /// Multiplicative noise amplitude `g(X)`.
    pub g: ScalarFn,
    /// A common Lipschitz bound for the three functions (metadata only).
    pub lipschitz: f64,
}

impl ModelSpec {
    /// Look up a built-in model by its public identifier.
    pub fn by_name(name: &str) -> Result<ModelSpec> {
        match name {
            "paper-ex" => Ok(ModelSpec {
                id: name.to_string(),
                f: Arc::new(|v| -v),
                f_tilde: Arc::new(|v| -v / (1.0 + v.abs())),
                g: Arc::new(|v| (1.0 + v) / 8.0),
                lipschitz: 1.0,
            }),
            "heat" => Ok(ModelSpec {
                id: name.to_string(),
                f: Arc::new(|_| 0.0),
                f_tilde: Arc::new(|_| 0.0),
                g: Arc::new(|_| 0.0),
                lipschitz: 0.0,
            }),
            "linear-additive" => Ok(ModelSpec::linear_additive(1.0)),
            other => Err(SpdeError::Config(format!(
                "unknown model '{other}' (available: paper-ex, heat, linear-additive)"
            ))),
        }
    }

    /// Zero drift and constant (additive) noise amplitude `σ`: every mode
    /// evolves as an independent scalar recursion, which makes this the
    /// strongest end-to-end oracle for the integrator.
    pub fn linear_additive(sigma: f64) -> ModelSpec {
        ModelSpec {
            id: "linear-additive".to_string(),
            f: Arc::new(|_| 0.0),
            f_tilde: Arc::new(|_| 0.0),
            g: Arc::new(move |_| sigma),
            lipschitz: 0.0,
        }
    }

    /// Names accepted by [`ModelSpec::by_name`].
    pub const BUILT_IN: [&'static str; 3] = ["paper-ex", "heat", "linear-additive"];
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("ModelSpec")
            .field("id", &self.id)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Reusable buffers for the operator applications below.
pub struct NemytskiiScratch {
    field: Vec<f64>,
    modes: Vec<f64>,
}

impl NemytskiiScratch {
    pub fn new(plan: &SpectralPlan, n_out: usize) -> Self {
        NemytskiiScratch {
            field: vec![0.0; plan.m_points()],
            modes: vec![0.0; n_out],
        }
    }
}

/// Drift coefficients `⟨∂_ξ f(X) + f̃(X), e_j⟩` for `j = 1..=out.len()`,
/// given the state's interior grid values `x`.
pub fn drift_into(
    plan: &SpectralPlan,
    model: &ModelSpec,
    x: &[f64],
    out: &mut [f64],
    scratch: &mut NemytskiiScratch,
) {
    debug_assert!(out.len() <= scratch.modes.len());
    // Gradient part: −jπ · cosine moments of f(X); boundary value is f(0).
    for (dst, src) in scratch.field.iter_mut().zip(x) {
        *dst = (model.f)(*src);
    }
    let f0 = (model.f)(0.0);
    plan.cosine_moments_into(&scratch.field, f0, f0, out);
    for (j0, v) in out.iter_mut().enumerate() {
        *v *= -((j0 + 1) as f64) * std::f64::consts::PI;
    }
    // Reaction part: project f̃(X) onto the basis and accumulate.
    for (dst, src) in scratch.field.iter_mut().zip(x) {
        *dst = (model.f_tilde)(*src);
    }
    let react = &mut scratch.modes[..out.len()];
    plan.analyze_into(&scratch.field, react);
    for (v, r) in out.iter_mut().zip(react.iter()) {
        *v += *r;
    }
}

/// Allocating convenience wrapper around [`drift_into`].
pub fn drift_apply(plan: &SpectralPlan, model: &ModelSpec, x: &[f64], n_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_out];
    let mut scratch = NemytskiiScratch::new(plan, n_out);
    drift_into(plan, model, x, &mut out, &mut scratch);
    out
}

/// Diffusion coefficients `⟨g(X)·ΔW_field, e_j⟩` for `j = 1..=out.len()`,
/// given the state's grid values `x` and the synthesized noise-increment
/// field on the same grid.
pub fn diffusion_into(
    plan: &SpectralPlan,
    model: &ModelSpec,
    x: &[f64],
    noise_field: &[f64],
    out: &mut [f64],
    scratch: &mut NemytskiiScratch,
) {
    for ((dst, src), w) in scratch.field.iter_mut().zip(x).zip(noise_field) {
        *dst = (model.g)(*src) * *w;
    }
    plan.analyze_into(&scratch.field, out);
}

/// Allocating convenience wrapper around [`diffusion_into`].
pub fn diffusion_apply(
    plan: &SpectralPlan,
    model: &ModelSpec,
    x: &[f64],
    noise_field: &[f64],
    n_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n_out];
    let mut scratch = NemytskiiScratch::new(plan, n_out);
    diffusion_into(plan, model, x, noise_field, &mut out, &mut scratch);
    out
}
