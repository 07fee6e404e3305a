//! Tilt quantization and per-pass inverse-CDF position sampling.
//!
//! Evaluating the per-pass dark-port density for every photon would cost one
//! grid sweep per detection, so the slowly varying sinusoidal tilt is
//! quantized into a fixed number of phase slots per drive period. For each
//! slot the bright-port profile is propagated pass by pass, recording the
//! conditional exit probability and an inverse-CDF lookup table of the exit
//! position density for every pass. A photon walk then needs only Bernoulli
//! draws plus one table lookup at the exit pass.

/// Phase slots per drive period. The zero-order hold on the sinusoid biases
/// the extracted fundamental by sinc²-like factor (pi/64)^2/6 ~ 4e-4, which
/// cancels in all mode-to-mode ratios.
pub const TILT_SLOTS: u32 = 64;

/// Inverse CDF of a tabulated density on a shared uniform grid. Sampling
/// interpolates linearly between grid knots.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    /// Cumulative distribution at the grid knots, normalized to end at 1.
    cum: Vec<f64>,
}

impl InverseCdf {
    /// Builds the CDF from density values at the grid knots by trapezoidal
    /// partial sums. A density with zero mass yields a table that samples
    /// the grid midpoint (such passes have exit probability zero and the
    /// table is never consulted).
    fn from_density(density: &[f64], dx: f64) -> Self {
        let mut cum = Vec::with_capacity(density.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for w in density.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cum.push(acc);
        }
        let total = *cum.last().unwrap();
        if total > 0.0 {
            for c in &mut cum {
                *c /= total;
            }
            // guard against rounding leaving the last knot below 1
            *cum.last_mut().unwrap() = 1.0;
        }
        Self { cum }
    }

    /// Maps a uniform deviate in [0, 1) to a position on the grid.
    pub fn sample(&self, u: f64, grid_min: f64, dx: f64) -> f64 {
        let total = *self.cum.last().unwrap();
        if total == 0.0 {
            return grid_min + 0.5 * (self.cum.len() - 1) as f64 * dx;
        }
        // first knot strictly above u; u < 1 so idx is in [1, len-1]
        let idx = self.cum.partition_point(|c| *c <= u).min(self.cum.len() - 1);
        let lo = self.cum[idx - 1];
        let hi = self.cum[idx];
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        grid_min + ((idx - 1) as f64 + frac) * dx
    }
}

/// Per-slot lookup tables: conditional exit probabilities and exit-position
/// CDFs for every pass.
#[derive(Debug, Clone)]
pub struct SlotTables {
    /// Quantized mirror tilt for this slot, radians.
    pub tilt_rad: f64,
    /// Momentum kick for this slot, radians per meter.
    pub kick: f64,
    /// q_n = P(exit dark port at pass n | still circulating), n = 1..=r.
    pub exit_prob: Vec<f64>,
    /// Exit-position CDF per pass.
    pub cdfs: Vec<InverseCdf>,
}

/// Tables for every tilt slot of the drive period, sharing one position grid.
#[derive(Debug, Clone)]
pub struct TiltTables {
    pub grid_min: f64,
    pub dx: f64,
    pub slots: Vec<SlotTables>,
}

impl TiltTables {
    /// Precomputes tables for `max_passes` passes on the default ±6σ grid.
    ///
    /// `tilt_to_kick` converts mirror tilt (radians) into transverse
    /// momentum kick (radians per meter). A zero drive amplitude collapses
    /// to a single slot.
    pub fn build(
        beam_sigma: f64,
        phi: f64,
        tilt_amplitude_peak: f64,
        tilt_to_kick: f64,
        max_passes: u32,
    ) -> Self {
        use crate::reshaping::{DEFAULT_GRID_HALF_WIDTH, DEFAULT_GRID_POINTS};
        let n = DEFAULT_GRID_POINTS;
        let grid_min = -DEFAULT_GRID_HALF_WIDTH * beam_sigma;
        let dx = 2.0 * DEFAULT_GRID_HALF_WIDTH * beam_sigma / (n - 1) as f64;

        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let x = grid_min + i as f64 * dx;
                (-x * x / (2.0 * beam_sigma * beam_sigma)).exp()
            })
            .collect();

        let n_slots = if tilt_amplitude_peak == 0.0 {
            1
        } else {
            TILT_SLOTS
        };

        use rayon::prelude::*;
        let slots: Vec<SlotTables> = (0..n_slots)
            .into_par_iter()
            .map(|s| {
                let phase = 2.0 * std::f64::consts::PI * (s as f64 + 0.5) / n_slots as f64;
                let tilt_rad = if tilt_amplitude_peak == 0.0 {
                    0.0
                } else {
                    tilt_amplitude_peak * phase.sin()
                };
                let kick = tilt_to_kick * tilt_rad;
                build_slot(&weights, grid_min, dx, phi, tilt_rad, kick, max_passes)
            })
            .collect();

        Self {
            grid_min,
            dx,
            slots,
        }
    }

    /// Slot index for the drive phase at time `t_s`.
    pub fn slot_index(&self, drive_frequency: f64, t_s: f64) -> usize {
        if self.slots.len() == 1 {
            return 0;
        }
        let phase = drive_frequency * t_s;
        let frac = phase - phase.floor();
        ((frac * self.slots.len() as f64) as usize).min(self.slots.len() - 1)
    }
}

fn build_slot(
    weights: &[f64],
    grid_min: f64,
    dx: f64,
    phi: f64,
    tilt_rad: f64,
    kick: f64,
    max_passes: u32,
) -> SlotTables {
    let n = weights.len();
    let half_phi = 0.5 * phi;
    let mut stay = Vec::with_capacity(n); // cos^2(phi/2 - kx)
    let mut exit = Vec::with_capacity(n); // sin^2(phi/2 - kx)
    for i in 0..n {
        let x = grid_min + i as f64 * dx;
        let c = (half_phi - kick * x).cos();
        let c2 = c * c;
        stay.push(c2);
        exit.push(1.0 - c2);
    }

    let trapezoid = |f: &[f64]| -> f64 {
        let inner: f64 = f[1..n - 1].iter().sum();
        dx * (inner + 0.5 * (f[0] + f[n - 1]))
    };

    let mut bright: Vec<f64> = weights.to_vec();
    let mut exit_prob = Vec::with_capacity(max_passes as usize);
    let mut cdfs = Vec::with_capacity(max_passes as usize);
    let mut exit_density = vec![0.0; n];
    for _ in 0..max_passes {
        for i in 0..n {
            exit_density[i] = bright[i] * exit[i];
        }
        let bright_total = trapezoid(&bright);
        let exit_total = trapezoid(&exit_density);
        let q = if bright_total > 0.0 {
            (exit_total / bright_total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        exit_prob.push(q);
        cdfs.push(InverseCdf::from_density(&exit_density, dx));
        for i in 0..n {
            bright[i] *= stay[i];
        }
    }

    SlotTables {
        tilt_rad,
        kick,
        exit_prob,
        cdfs,
    }
}
