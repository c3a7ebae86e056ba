//! Explicit exponential time stepper for the spectrally projected equation.
//!
//! One step of size `τ` maps the sine coefficients `c` to
//!
//! ```text
//! c ← E(τ) · (c + τ·drift(c) + diffusion(c, ΔW)),      E(τ)_j = e^{−λ_j τ},
//! ```
//!
//! i.e. the exact linear flow is applied once to the frozen-coefficient
//! update. The linear part is therefore integrated exactly: with zero drift
//! and zero noise, `K` steps produce `e^{−λ_j T} c_j(0)` to rounding.

use serde::{Serialize, Serializer};

use crate::error::{Result, SpdeError};
use crate::nemytskii::{diffusion_into, drift_into, ModelSpec, NemytskiiScratch};
use crate::noise::NoiseLattice;
use crate::spectral::{eigenvalue, SpectralPlan};

/// Initial condition expressed in sine coefficients.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialDatum {
    /// `c_j = j^{−1.01}`: a rough profile just under square-root spatial
    /// regularity, the default for convergence studies.
    PowerLaw,
    /// A single basis mode `e_k` (1-based).
    SingleMode(usize),
    /// Identically zero.
    Zero,
}

impl InitialDatum {
    pub fn coefficients(&self, n_modes: usize) -> Vec<f64> {
        match self {
            InitialDatum::PowerLaw => {
                (1..=n_modes).map(|j| (j as f64).powf(-1.01)).collect()
            }
            InitialDatum::SingleMode(k) => {
                let mut c = vec![0.0; n_modes];
                if *k >= 1 && *k <= n_modes {
                    c[*k - 1] = 1.0;
                }
                c
            }
            InitialDatum::Zero => vec![0.0; n_modes],
        }
    }

    /// Parse the CLI spelling: `default`/`power-law`, `zero`, or `e<k>`.
    pub fn parse(text: &str) -> Result<InitialDatum> {
        match text {
            "default" | "power-law" => Ok(InitialDatum::PowerLaw),
            "zero" => Ok(InitialDatum::Zero),
            other => {
                if let Some(rest) = other.strip_prefix('e') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 {
                            return Ok(InitialDatum::SingleMode(k));
                        }
                    }
                }
                Err(SpdeError::Config(format!(
                    "unknown initial datum '{other}' (expected default, power-law, zero, or e<k>)"
                )))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InitialDatum::PowerLaw => "power-law".to_string(),
            InitialDatum::SingleMode(k) => format!("e{k}"),
            InitialDatum::Zero => "zero".to_string(),
        }
    }
}

impl Serialize for InitialDatum {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// Space/time resolution of one solver instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discretization {
    /// Retained solution modes `N`.
    pub n_modes: usize,
    /// Time steps `K` over the horizon.
    pub k_steps: usize,
    /// Final time `T`.
    pub horizon: f64,
    /// Interior quadrature points `M` for the Nemytskii compositions.
    pub m_points: usize,
}

impl Discretization {
    /// `M` defaults to `2N`, the smallest grid on which products of resolved
    /// modes are analyzed without aliasing from reflected frequencies.
    pub fn new(n_modes: usize, k_steps: usize, horizon: f64) -> Result<Discretization> {
        let disc = Discretization {
            n_modes,
            k_steps,
            horizon,
            m_points: 2 * n_modes,
        };
        disc.validate()?;
        Ok(disc)
    }

    pub fn with_quadrature(mut self, m_points: usize) -> Result<Discretization> {
        self.m_points = m_points;
        self.validate()?;
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.k_steps as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(SpdeError::Config("need at least one solution mode".into()));
        }
        if self.k_steps == 0 {
            return Err(SpdeError::Config("need at least one time step".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SpdeError::Config(format!(
                "time horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.m_points < self.n_modes {
            return Err(SpdeError::Config(format!(
                "quadrature grid ({} points) must hold all {} modes",
                self.m_points, self.n_modes
            )));
        }
        Ok(())
    }
}

/// Which states [`Stepper::simulate`] keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnapshotPolicy {
    /// Only the state at the final time.
    FinalOnly,
    /// The initial state and every `s`-th step (must divide the step count).
    Every(usize),
    /// Every grid point including the initial state.
    All,
}

/// States retained from one simulation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    n_modes: usize,
    steps: Vec<usize>,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Coefficients of snapshot `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Time-step index of snapshot `i`.
    pub fn step_index(&self, i: usize) -> usize {
        self.steps[i]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }
}

/// A solver instance: fixed model, resolution, and noise-mode count.
pub struct Stepper {
    model: ModelSpec,
    disc: Discretization,
    plan: SpectralPlan,
    semigroup: Vec<f64>,
    noise_modes: usize,
}

impl Stepper {
    /// `noise_modes` is the number of Brownian modes synthesized into the
    /// forcing field each step; it may exceed the solution resolution but
    /// must fit on the quadrature grid.
    pub fn new(model: &ModelSpec, disc: Discretization, noise_modes: usize) -> Result<Stepper> {
        if noise_modes == 0 {
            return Err(SpdeError::Config("need at least one noise mode".into()));
        }
        let sine_rows = disc.n_modes.max(noise_modes);
        let plan = SpectralPlan::new(disc.m_points, sine_rows, disc.n_modes)?;
        let tau = disc.tau();
        let semigroup = (1..=disc.n_modes).map(|j| (-eigenvalue(j) * tau).exp()).collect();
        Ok(Stepper {
            model: model.clone(),
            disc,
            plan,
            semigroup,
            noise_modes,
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn noise_modes(&self) -> usize {
        self.noise_modes
    }

    pub fn plan(&self) -> &SpectralPlan {
        &self.plan
    }

    /// Run the scheme from `initial` over all steps of `noise`, keeping the
    /// snapshots selected by `policy`.
    pub fn simulate(
        &self,
        initial: &[f64],
        noise: &NoiseLattice,
        policy: SnapshotPolicy,
    ) -> Result<Trajectory> {
        let n = self.disc.n_modes;
        let k_steps = self.disc.k_steps;
        if initial.len() != n {
            return Err(SpdeError::Config(format!(
                "initial datum has {} coefficients, solver expects {n}",
                initial.len()
            )));
        }
        if noise.steps() != k_steps {
            return Err(SpdeError::Config(format!(
                "noise lattice has {} steps, solver expects {k_steps}",
                noise.steps()
            )));
        }
        if noise.modes() < self.noise_modes {
            return Err(SpdeError::Config(format!(
                "noise lattice has {} modes, solver needs {}",
                noise.modes(),
                self.noise_modes
            )));
        }
        let horizon = self.disc.horizon;
        if (noise.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(SpdeError::Config(format!(
                "noise lattice horizon {} does not match solver horizon {horizon}",
                noise.horizon()
            )));
        }
        let stride = match policy {
            SnapshotPolicy::FinalOnly => 0,
            SnapshotPolicy::All => 1,
            SnapshotPolicy::Every(s) => {
                if s == 0 || k_steps % s != 0 {
                    return Err(SpdeError::Config(format!(
                        "snapshot stride {s} must be positive and divide {k_steps} steps"
                    )));
                }
                s
            }
        };

        let tau = self.disc.tau();
        let m = self.plan.m_points();
        let mut coeffs = initial.to_vec();
        let mut x = vec![0.0; m];
        let mut field = vec![0.0; m];
        let mut drift = vec![0.0; n];
        let mut diff = vec![0.0; n];
        let mut dw = vec![0.0; self.noise_modes];
        let mut scratch = NemytskiiScratch::new(&self.plan, n);

        let snapshot_count = if stride == 0 { 1 } else { k_steps / stride + 1 };
        let mut traj = Trajectory {
            n_modes: n,
            steps: Vec::with_capacity(snapshot_count),
            times: Vec::with_capacity(snapshot_count),
            data: Vec::with_capacity(snapshot_count * n),
        };
        let keep = |step: usize, coeffs: &[f64], traj: &mut Trajectory| {
            traj.steps.push(step);
            traj.times.push(step as f64 * tau);
            traj.data.extend_from_slice(coeffs);
        };
        if stride > 0 {
            keep(0, &coeffs, &mut traj);
        }

        for step in 0..k_steps {
            self.plan.synthesize_into(&coeffs, &mut x);
            drift_into(&self.plan, &self.model, &x, &mut drift, &mut scratch);
            noise.fill_increments(step, &mut dw);
            self.plan.synthesize_into(&dw, &mut field);
            diffusion_into(&self.plan, &self.model, &x, &field, &mut diff, &mut scratch);
            for j in 0..n {
                coeffs[j] = self.semigroup[j] * (coeffs[j] + tau * drift[j] + diff[j]);
            }
            if !coeffs.iter().all(|v| v.is_finite()) {
                return Err(SpdeError::NonFinite(format!(
                    "model '{}' at step {} of {} (t = {:.6})",
                    self.model.id,
                    step + 1,
                    k_steps,
                    (step + 1) as f64 * tau
                )));
            }
            let done = step + 1;
            if (stride > 0 && done % stride == 0) || (stride == 0 && done == k_steps) {
                keep(done, &coeffs, &mut traj);
            }
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    /// A lattice of explicit zeros, built through the public dump format.
    fn zero_lattice(modes: usize, steps: usize, horizon: f64) -> NoiseLattice {
        let mut buf = Vec::new();
        buf.extend_from_slice(&(modes as u64).to_le_bytes());
        buf.extend_from_slice(&(steps as u64).to_le_bytes());
        buf.extend_from_slice(&horizon.to_bits().to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend(std::iter::repeat(0u8).take(modes * steps * 8));
        NoiseLattice::load(buf.as_slice()).unwrap()
    }

    #[test]
    fn pure_decay_is_exact_per_mode() {
        let model = ModelSpec::by_name("heat").unwrap();
        let disc = Discretization::new(16, 32, 0.7).unwrap();
        let stepper = Stepper::new(&model, disc, 16).unwrap();
        let initial = InitialDatum::PowerLaw.coefficients(16);
        let noise = NoiseLattice::generate(5, 0, 16, 32, 0.7).unwrap();
        let traj = stepper.simulate(&initial, &noise, SnapshotPolicy::FinalOnly).unwrap();
        for (j, (out, init)) in traj.final_state().iter().zip(&initial).enumerate() {
            let expected = (-eigenvalue(j + 1) * 0.7).exp() * init;
            assert_abs_diff_eq!(*out, expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_mode_decay_hits_frozen_reference_value() {
        let model = ModelSpec::by_name("heat").unwrap();
        let disc = Discretization::new(4, 64, 0.8).unwrap();
        let stepper = Stepper::new(&model, disc, 4).unwrap();
        let initial = InitialDatum::SingleMode(1).coefficients(4);
        let noise = NoiseLattice::generate(1, 0, 4, 64, 0.8).unwrap();
        let traj = stepper
            .simulate(&initial, &noise, SnapshotPolicy::Every(8))
            .unwrap();
        assert_eq!(traj.len(), 9);
        // Snapshot 1 sits at t = 0.1: e^{−π²/10} = 0.37270783885343794.
        assert_abs_diff_eq!(traj.time(1), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(traj.state(1)[0], 0.37270783885343794, epsilon = 1e-13);
        for other in 1..4 {
            assert_abs_diff_eq!(traj.state(1)[other], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn additive_modes_follow_the_scalar_recursion() {
        let model = ModelSpec::linear_additive(1.0);
        let n = 8;
        let k = 64;
        let disc = Discretization::new(n, k, 1.0).unwrap();
        let stepper = Stepper::new(&model, disc, n).unwrap();
        let initial = InitialDatum::PowerLaw.coefficients(n);
        let noise = NoiseLattice::generate(11, 0, n, k, 1.0).unwrap();
        let traj = stepper.simulate(&initial, &noise, SnapshotPolicy::All).unwrap();
        let tau = 1.0 / k as f64;
        for j in 0..n {
            let damp = (-eigenvalue(j + 1) * tau).exp();
            let mut x = initial[j];
            for step in 0..k {
                x = damp * (x + noise.increment(j, step));
                let got = traj.state(step + 1)[j];
                assert!(
                    (got - x).abs() <= 1e-13,
                    "mode {j} step {step}: {got} vs oracle {x}"
                );
            }
        }
    }

    #[test]
    fn zero_state_with_zero_increments_stays_zero() {
        let model = ModelSpec::by_name("paper-ex").unwrap();
        let disc = Discretization::new(8, 4, 1.0).unwrap();
        let stepper = Stepper::new(&model, disc, 8).unwrap();
        let noise = zero_lattice(8, 4, 1.0);
        let traj = stepper
            .simulate(&vec![0.0; 8], &noise, SnapshotPolicy::All)
            .unwrap();
        for i in 0..traj.len() {
            for v in traj.state(i) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn blowup_is_reported_as_non_finite() {
        let model = ModelSpec {
            id: "cubic-blowup".into(),
            f: Arc::new(|_| 0.0),
            f_tilde: Arc::new(|v| v * v * v),
            g: Arc::new(|_| 0.0),
            lipschitz: f64::INFINITY,
        };
        let disc = Discretization::new(4, 8, 1.0).unwrap();
        let stepper = Stepper::new(&model, disc, 4).unwrap();
        let mut initial = vec![0.0; 4];
        initial[0] = 50.0;
        let noise = NoiseLattice::generate(3, 0, 4, 8, 1.0).unwrap();
        let err = stepper
            .simulate(&initial, &noise, SnapshotPolicy::FinalOnly)
            .unwrap_err();
        assert!(matches!(err, SpdeError::NonFinite(_)), "got {err:?}");
    }

    #[test]
    fn mismatched_noise_is_rejected() {
        let model = ModelSpec::by_name("heat").unwrap();
        let disc = Discretization::new(4, 8, 1.0).unwrap();
        let stepper = Stepper::new(&model, disc.clone(), 4).unwrap();
        let wrong_steps = NoiseLattice::generate(3, 0, 4, 16, 1.0).unwrap();
        assert!(stepper
            .simulate(&vec![0.0; 4], &wrong_steps, SnapshotPolicy::FinalOnly)
            .is_err());
        let too_few_modes = NoiseLattice::generate(3, 0, 2, 8, 1.0).unwrap();
        assert!(stepper
            .simulate(&vec![0.0; 4], &too_few_modes, SnapshotPolicy::FinalOnly)
            .is_err());
        let wrong_horizon = NoiseLattice::generate(3, 0, 4, 8, 2.0).unwrap();
        assert!(stepper
            .simulate(&vec![0.0; 4], &wrong_horizon, SnapshotPolicy::FinalOnly)
            .is_err());
        let bad_stride = NoiseLattice::generate(3, 0, 4, 8, 1.0).unwrap();
        assert!(stepper
            .simulate(&vec![0.0; 4], &bad_stride, SnapshotPolicy::Every(3))
            .is_err());
    }

    #[test]
    fn datum_parsing_round_trips() {
        assert_eq!(InitialDatum::parse("default").unwrap(), InitialDatum::PowerLaw);
        assert_eq!(InitialDatum::parse("power-law").unwrap(), InitialDatum::PowerLaw);
        assert_eq!(InitialDatum::parse("zero").unwrap(), InitialDatum::Zero);
        assert_eq!(InitialDatum::parse("e3").unwrap(), InitialDatum::SingleMode(3));
        assert!(InitialDatum::parse("e0").is_err());
        assert!(InitialDatum::parse("nope").is_err());
        let c = InitialDatum::PowerLaw.coefficients(3);
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 3f64.powf(-1.01), epsilon = 1e-15);
    }
}
