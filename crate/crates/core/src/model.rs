//! Closed-form quantities of weak-value amplification and photon recycling.
//!
//! The interferometer is reduced to a two-path state space {CW, CCW}. The
//! Soleil-Babinet phase φ sets both the initial state and the post-selection
//! probability p = sin²(φ/2) at the dark port; the which-path operator
//! diag(+1, −1) is the observable whose weak value amplifies the mirror tilt.
//! Recycling quantities (power fraction, SNR gain, per-pass detected
//! fractions) are geometric series in the per-pass survival probability.

use num_complex::Complex64;
use thiserror::Error;

/// Overlap magnitudes below this are treated as a vanishing post-selection.
const OVERLAP_EPS: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// ⟨f|i⟩ is numerically zero, so the weak value is undefined/divergent.
    #[error("post-selection overlap is zero (|<f|i>| = {overlap:.3e} < 1e-14)")]
    OverlapZero { overlap: f64 },
    #[error("beam width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("post-selection probability is zero; SNR gain diverges to sqrt(r)")]
    ZeroPostselection,
    #[error("operator matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid recycling parameters: {0}")]
    InvalidParams(String),
}

// ---------------------------------------------------------------------------
// Two-path states and operators
// ---------------------------------------------------------------------------

/// Normalized state on the {CW, CCW} path basis of the Sagnac loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPathState {
    pub amp_cw: Complex64,
    pub amp_ccw: Complex64,
}

impl TwoPathState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(amp_cw: Complex64, amp_ccw: Complex64) -> Self {
        let norm = (amp_cw.norm_sqr() + amp_ccw.norm_sqr()).sqrt();
        Self {
            amp_cw: amp_cw / norm,
            amp_ccw: amp_ccw / norm,
        }
    }

    /// Initial state inside the Sagnac: (e^{iφ/2}|CW⟩ + i e^{−iφ/2}|CCW⟩)/√2,
    /// where φ is the relative phase between the counter-propagating paths.
    pub fn sagnac_initial(phi: f64) -> Self {
        let half = 0.5 * phi;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp_cw: Complex64::from_polar(inv_sqrt2, half),
            amp_ccw: Complex64::i() * Complex64::from_polar(inv_sqrt2, -half),
        }
    }

    /// Dark-port projector state: ⟨f| = (⟨CW| + i⟨CCW|)/√2, stored as the ket
    /// |f⟩ = (|CW⟩ − i|CCW⟩)/√2.
    pub fn sagnac_dark_port() -> Self {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp_cw: Complex64::new(inv_sqrt2, 0.0),
            amp_ccw: Complex64::new(0.0, -inv_sqrt2),
        }
    }

    /// ⟨self|other⟩.
    pub fn overlap(&self, other: &TwoPathState) -> Complex64 {
        self.amp_cw.conj() * other.amp_cw + self.amp_ccw.conj() * other.amp_ccw
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_cw.norm_sqr() + self.amp_ccw.norm_sqr()
    }
}

/// Hermitian observable on the two-path space, as a 2×2 complex matrix in the
/// {CW, CCW} basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOperator {
    mat: [[Complex64; 2]; 2],
}

impl PathOperator {
    /// Validates Hermiticity to 1e-12 before accepting the matrix.
    pub fn new(mat: [[Complex64; 2]; 2]) -> Result<Self, ModelError> {
        let dev = (mat[0][0].im.abs())
            .max(mat[1][1].im.abs())
            .max((mat[0][1] - mat[1][0].conj()).norm());
        if dev > 1e-12 {
            return Err(ModelError::NotHermitian(dev));
        }
        Ok(Self { mat })
    }

    /// The which-path observable diag(+1, −1).
    pub fn which_path() -> Self {
        Self {
            mat: [
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
            ],
        }
    }

    pub fn identity() -> Self {
        Self {
            mat: [
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            ],
        }
    }

    /// A|ψ⟩.
    pub fn apply(&self, state: &TwoPathState) -> (Complex64, Complex64) {
        (
            self.mat[0][0] * state.amp_cw + self.mat[0][1] * state.amp_ccw,
            self.mat[1][0] * state.amp_cw + self.mat[1][1] * state.amp_ccw,
        )
    }
}

// ---------------------------------------------------------------------------
// Recycling parameters
// ---------------------------------------------------------------------------

/// Per-pass parameters of the recycling loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecyclingParams {
    /// Post-selection probability per pass, in [0, 1].
    pub p: f64,
    /// Per-pass optical loss, in [0, 1).
    pub gamma: f64,
    /// Number of passes before the switch releases the pulse.
    pub r: u32,
}

impl RecyclingParams {
    pub fn new(p: f64, gamma: f64, r: u32) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(ModelError::InvalidParams(format!("p = {p} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(ModelError::InvalidParams(format!(
                "gamma = {gamma} outside [0, 1)"
            )));
        }
        if r == 0 {
            return Err(ModelError::InvalidParams("r must be >= 1".into()));
        }
        Ok(Self { p, gamma, r })
    }

    /// Parameters with p derived from the Sagnac phase, p = sin²(φ/2).
    pub fn from_phase(phi: f64, gamma: f64, r: u32) -> Result<Self, ModelError> {
        Self::new(postselection_probability(phi), gamma, r)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// The weak value ⟨f|A|i⟩ / ⟨f|i⟩.
pub fn weak_value(
    initial: &TwoPathState,
    fin: &TwoPathState,
    a: &PathOperator,
) -> Result<Complex64, ModelError> {
    let overlap = fin.overlap(initial);
    if overlap.norm() < OVERLAP_EPS {
        return Err(ModelError::OverlapZero {
            overlap: overlap.norm(),
        });
    }
    let (a_cw, a_ccw) = a.apply(initial);
    let numerator = fin.amp_cw.conj() * a_cw + fin.amp_ccw.conj() * a_ccw;
    Ok(numerator / overlap)
}

/// Dark-port post-selection probability sin²(φ/2).
pub fn postselection_probability(phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    s * s
}

/// Quantum-limited SNR g·√N/σ for a shift g on a Gaussian meter of width σ
/// resolved with n detected photons.
pub fn quantum_limited_snr(shift: f64, photons: f64, sigma: f64) -> Result<f64, ModelError> {
    if sigma <= 0.0 {
        return Err(ModelError::NonPositiveWidth(sigma));
    }
    Ok(shift * photons.sqrt() / sigma)
}

/// Fraction of input power collected at the dark port after r lossless
/// passes: 1 − (1−p)^r.
pub fn recycled_power_fraction(params: &RecyclingParams) -> f64 {
    debug_assert_eq!(params.gamma, 0.0, "lossless closed form");
    1.0 - (1.0 - params.p).powi(params.r as i32)
}

/// Lossless SNR gain factor √[(1 − (1−p)^r)/p] of r-pass recycling over a
/// single pass.
pub fn snr_gain(params: &RecyclingParams) -> Result<f64, ModelError> {
    if params.p == 0.0 {
        return Err(ModelError::ZeroPostselection);
    }
    Ok((recycled_power_fraction(params) / params.p).sqrt())
}

/// Small-p expansion of the SNR gain, √r·(1 − (r−1)·p/4). Valid for
/// p·(r−1) ≪ 1; at p = 0 this is the √r limit of [`snr_gain`].
pub fn snr_gain_small_p(p: f64, r: u32) -> f64 {
    (r as f64).sqrt() * (1.0 - (r as f64 - 1.0) * p / 4.0)
}

/// Fraction of input photons detected on each pass n = 1..r with one full
/// loop of loss preceding each post-selection:
/// f_n = p·(1−γ)^n·(1−p)^{n−1}.
pub fn detected_fraction_per_pass(params: &RecyclingParams) -> Vec<f64> {
    let survive = (1.0 - params.p) * (1.0 - params.gamma);
    let first = params.p * (1.0 - params.gamma);
    (0..params.r).map(|n| first * survive.powi(n as i32)).collect()
}
