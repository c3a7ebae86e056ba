//! Sine-spectral transforms on (0,1) with homogeneous Dirichlet boundaries.
//!
//! Basis functions are `e_j(ξ) = √2 sin(jπξ)` — the orthonormal eigenbasis of
//! the Dirichlet Laplacian on (0,1), with eigenvalues `λ_j = (jπ)²`. Fields
//! are collocated on the interior grid `ξ_m = m/(M+1)`, `m = 1..M`, where the
//! discrete sine vectors are exactly orthogonal:
//!
//! ```text
//! Σ_{m=1..M} sin(jπξ_m) sin(kπξ_m) = (M+1)/2 · δ_jk    for 1 ≤ j, k ≤ M,
//! ```
//!
//! so `analyze ∘ synthesize` is an exact identity (up to rounding) whenever
//! the mode count does not exceed the grid size.
//!
//! Besides the forward/inverse transforms, the plan provides *cosine moments*
//! `⟨w, √2 cos(jπ·)⟩`, which arise when a gradient-form nonlinearity is
//! integrated by parts against the sine basis. These are computed by an exact
//! quadrature of the sine interpolant: the field is split into a linear
//! boundary interpolant (whose cosine moments are closed-form) plus an
//! interior remainder that vanishes at both endpoints, the remainder is
//! expanded exactly in ≤ M sine modes, and each sine mode's cosine moment is
//! evaluated analytically via
//!
//! ```text
//! ∫₀¹ sin(lπξ) cos(jπξ) dξ = 2l / (π(l² − j²))   if l + j is odd, else 0.
//! ```
//!
//! The result is exact (to rounding) for any field that is a trigonometric
//! polynomial of degree ≤ M plus a linear function — in particular the
//! composite trapezoid rule's O(M⁻²) endpoint error never appears.

use crate::error::{Result, SpdeError};

/// Eigenvalue `λ_j = (jπ)²` of the Dirichlet Laplacian for 1-based mode `j`.
pub fn eigenvalue(j: usize) -> f64 {
    let x = j as f64 * std::f64::consts::PI;
    x * x
}

/// Squared Euclidean norm of a coefficient vector, which equals the squared
/// L²(0,1) norm of the represented field (the basis is orthonormal).
/// Uses a fixed summation tree, so the result is reproducible bit-for-bit.
pub fn coeff_norm_sq(coeffs: &[f64]) -> f64 {
    dot(coeffs, coeffs)
}

/// Squared L² distance between two coefficient vectors of possibly different
/// lengths; the shorter one is implicitly zero-padded.
pub fn coeff_dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let n = short.len();
    let mut acc = [0.0f64; 4];
    let head = n - n % 4;
    for i in (0..head).step_by(4) {
        let d0 = long[i] - short[i];
        let d1 = long[i + 1] - short[i + 1];
        let d2 = long[i + 2] - short[i + 2];
        let d3 = long[i + 3] - short[i + 3];
        acc[0] += d0 * d0;
        acc[1] += d1 * d1;
        acc[2] += d2 * d2;
        acc[3] += d3 * d3;
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in head..n {
        let d = long[i] - short[i];
        s += d * d;
    }
    for &v in &long[n..] {
        s += v * v;
    }
    s
}

/// Dot product with a fixed 4-lane summation tree: deterministic for a given
/// binary, and wide enough for the auto-vectorizer.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let head = n - n % 4;
    let mut acc = [0.0f64; 4];
    for i in (0..head).step_by(4) {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in head..n {
        s += a[i] * b[i];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `sin(π·num/den)` evaluated after exact integer reduction of the angle to
/// one period, so equivalent lattice angles produce identical values.
fn sin_lattice(num: usize, den: usize) -> f64 {
    let r = num % (2 * den);
    (std::f64::consts::PI * r as f64 / den as f64).sin()
}

/// Precomputed tables for transforms between sine coefficients and interior
/// grid values, plus the exact cosine-moment quadrature.
pub struct SpectralPlan {
    m_points: usize,
    sine_rows: usize,
    cos_cols: usize,
    /// `sine_rows × m_points`, row `j−1` holds `√2 sin(jπξ_m)`.
    sin_table: Vec<f64>,
    /// `cos_cols × m_points`, row `j−1` maps interior-remainder values to
    /// `⟨remainder, √2 cos(jπ·)⟩` by a plain dot product.
    cos_table: Vec<f64>,
    /// `⟨1−ξ, cos-row j⟩` and `⟨ξ, cos-row j⟩`: fold the subtraction of the
    /// linear boundary interpolant into the same dot product.
    cos_left: Vec<f64>,
    cos_right: Vec<f64>,
    /// Closed-form `⟨ξ, √2 cos(jπ·)⟩ = √2((−1)^j − 1)/(jπ)²` per unit slope.
    boundary_moment: Vec<f64>,
}

impl SpectralPlan {
    /// Build a plan on `m_points` interior grid points, with `sine_rows`
    /// synthesizable/analyzable sine modes and `cos_cols` cosine-moment
    /// outputs. Both mode counts must fit under the grid size for the
    /// discrete orthogonality to hold.
    pub fn new(m_points: usize, sine_rows: usize, cos_cols: usize) -> Result<Self> {
        if m_points == 0 {
            return Err(SpdeError::Config("quadrature grid must be non-empty".into()));
        }
        if sine_rows == 0 {
            return Err(SpdeError::Config("at least one sine mode is required".into()));
        }
        if sine_rows > m_points || cos_cols > m_points {
            return Err(SpdeError::Config(format!(
                "mode counts (sine {sine_rows}, cosine {cos_cols}) must not exceed the \
                 {m_points}-point quadrature grid"
            )));
        }
        let m = m_points;
        let den = m + 1;
        let sqrt2 = std::f64::consts::SQRT_2;

        let mut sin_table = vec![0.0; sine_rows * m];
        for j in 1..=sine_rows {
            let row = &mut sin_table[(j - 1) * m..j * m];
            for (idx, v) in row.iter_mut().enumerate() {
                *v = sqrt2 * sin_lattice(j * (idx + 1), den);
            }
        }

        // cos_table[j−1] = Σ_{l+j odd, l ≤ M} (4√2 / ((M+1)π)) · l/(l²−j²) · sin(lπξ_m)
        let mut cos_table = vec![0.0; cos_cols * m];
        if cos_cols > 0 {
            let scale = 4.0 * sqrt2 / (den as f64 * std::f64::consts::PI);
            let mut raw = vec![0.0; m];
            for l in 1..=m {
                for (idx, v) in raw.iter_mut().enumerate() {
                    *v = sin_lattice(l * (idx + 1), den);
                }
                let first_j = if l % 2 == 0 { 1 } else { 2 };
                let mut j = first_j;
                while j <= cos_cols {
                    let lf = l as f64;
                    let jf = j as f64;
                    let coef = scale * lf / (lf * lf - jf * jf);
                    axpy(coef, &raw, &mut cos_table[(j - 1) * m..j * m]);
                    j += 2;
                }
            }
        }

        let mut cos_left = vec![0.0; cos_cols];
        let mut cos_right = vec![0.0; cos_cols];
        let mut boundary_moment = vec![0.0; cos_cols];
        {
            let left: Vec<f64> = (1..=m).map(|i| 1.0 - i as f64 / den as f64).collect();
            let right: Vec<f64> = (1..=m).map(|i| i as f64 / den as f64).collect();
            for j in 1..=cos_cols {
                let row = &cos_table[(j - 1) * m..j * m];
                cos_left[j - 1] = dot(&left, row);
                cos_right[j - 1] = dot(&right, row);
                let jf = j as f64;
                let sign = if j % 2 == 0 { 0.0 } else { -2.0 };
                boundary_moment[j - 1] =
                    sqrt2 * sign / (jf * std::f64::consts::PI * jf * std::f64::consts::PI);
            }
        }

        Ok(SpectralPlan {
            m_points,
            sine_rows,
            cos_cols,
            sin_table,
            cos_table,
            cos_left,
            cos_right,
            boundary_moment,
        })
    }

    pub fn m_points(&self) -> usize {
        self.m_points
    }

    pub fn sine_rows(&self) -> usize {
        self.sine_rows
    }

    pub fn cos_cols(&self) -> usize {
        self.cos_cols
    }

    /// Interior grid point `ξ_m = m/(M+1)` for 0-based index `idx`.
    pub fn grid_point(&self, idx: usize) -> f64 {
        (idx + 1) as f64 / (self.m_points + 1) as f64
    }

    /// Evaluate the field `Σ_j c_j e_j` on the interior grid.
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        assert!(coeffs.len() <= self.sine_rows, "more coefficients than plan modes");
        assert_eq!(out.len(), self.m_points);
        out.fill(0.0);
        for (c, row) in coeffs.iter().zip(self.sin_table.chunks_exact(self.m_points)) {
            axpy(*c, row, out);
        }
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m_points];
        self.synthesize_into(coeffs, &mut out);
        out
    }

    /// Project interior grid values onto the first `out.len()` basis modes:
    /// `c_j = (1/(M+1)) Σ_m values_m · √2 sin(jπξ_m)`.
    pub fn analyze_into(&self, values: &[f64], out: &mut [f64]) {
        assert_eq!(values.len(), self.m_points);
        assert!(out.len() <= self.sine_rows, "more outputs than plan modes");
        let inv = 1.0 / (self.m_points + 1) as f64;
        for (o, row) in out.iter_mut().zip(self.sin_table.chunks_exact(self.m_points)) {
            *o = inv * dot(values, row);
        }
    }

    pub fn analyze(&self, values: &[f64], n_out: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_out];
        self.analyze_into(values, &mut out);
        out
    }

    /// Cosine moments `⟨w, √2 cos(jπ·)⟩` of a field with interior grid values
    /// `w` and boundary values `(w0, w1)`, for `j = 1..=out.len()`.
    pub fn cosine_moments_into(&self, w: &[f64], w0: f64, w1: f64, out: &mut [f64]) {
        assert_eq!(w.len(), self.m_points);
        assert!(out.len() <= self.cos_cols, "more outputs than cosine columns");
        let slope = w1 - w0;
        for (j0, o) in out.iter_mut().enumerate() {
            let row = &self.cos_table[j0 * self.m_points..(j0 + 1) * self.m_points];
            *o = dot(w, row) - w0 * self.cos_left[j0] - w1 * self.cos_right[j0]
                + slope * self.boundary_moment[j0];
        }
    }

    pub fn cosine_moments(&self, w: &[f64], w0: f64, w1: f64, n_out: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_out];
        self.cosine_moments_into(w, w0, w1, &mut out);
        out
    }
}
