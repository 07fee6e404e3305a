//! Measurement pipeline: time binning, difference counts, single-frequency
//! amplitude extraction, off-frequency noise floor, and SNR.
//!
//! Detection tags are binned (100 µs default), the left−right difference is
//! taken per bin, and the amplitude at the drive frequency is read off a
//! single-bin discrete Fourier coefficient — a direct correlation, identical
//! to the corresponding FFT bin without the power-of-two length constraint.
//! Amplitudes are normalized by the total count, scaled by √(π/2) for the
//! Gaussian beam shape of the knife-edge response, and by 4 to convert to
//! peak-to-peak. The shot-noise floor is the RMS amplitude over a band of
//! off-drive frequencies at the natural resolution 1/duration.

use rayon::prelude::*;
use thiserror::Error;

use crate::montecarlo::{simulate, Detector, SimConfig, TimeTagSet};

/// 4·√(π/2): peak-to-peak conversion times the Gaussian-beam normalization
/// of the knife-edge difference signal.
pub const AMPLITUDE_NORM: f64 = 5.013256549262001;

/// Default analysis bin width, seconds.
pub const DEFAULT_BIN_WIDTH_S: f64 = 100e-6;

/// Default number of off-drive frequencies used for the noise floor.
pub const DEFAULT_NOISE_OFFSETS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("tag set contains no records")]
    EmptyTagSet,
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("acquisition shorter than one bin")]
    TooShort,
    #[error("drive frequency {frequency} Hz unresolvable: {reason}")]
    FrequencyUnresolvable { frequency: f64, reason: String },
    #[error("noise offsets leave the band (0, {nyquist} Hz): {lowest}..{highest}")]
    OffsetsOutOfBand {
        lowest: f64,
        highest: f64,
        nyquist: f64,
    },
    #[error("repeatability check needs at least 2 repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

/// Binned left−right difference counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    pub bin_width_s: f64,
    /// counts_left − counts_right per bin (integral when built from tags).
    pub values: Vec<f64>,
    /// Total detections (left + right) over all kept bins.
    pub total_counts: u64,
    /// Kept duration, bins × bin width.
    pub duration_s: f64,
}

/// Extracted signal, noise floor, and SNR for one run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpectrumResult {
    /// Peak-to-peak displacement in units of the detector beam width.
    pub signal_amplitude: f64,
    /// RMS off-drive amplitude in the same normalized units.
    pub noise_floor: f64,
    pub snr: f64,
    pub detected_photons: u64,
    pub drive_frequency_hz: f64,
    /// 1/duration.
    pub frequency_resolution_hz: f64,
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

/// Accumulates left/right counts per bin and stores the difference. A
/// partial trailing bin is discarded.
pub fn bin_timetags(tags: &TimeTagSet, bin_width_s: f64) -> Result<BinnedSeries, AnalysisError> {
    if !(bin_width_s > 0.0) {
        return Err(AnalysisError::BadBinWidth(bin_width_s));
    }
    if tags.records.is_empty() {
        return Err(AnalysisError::EmptyTagSet);
    }
    let duration = tags.metadata.source.acquisition_time_s;
    let n_bins = (duration / bin_width_s).floor() as usize;
    if n_bins == 0 {
        return Err(AnalysisError::TooShort);
    }
    let bin_ns = bin_width_s * 1e9;
    let mut values = vec![0.0f64; n_bins];
    let mut total = 0u64;
    for rec in &tags.records {
        let bin = (rec.timestamp_ns as f64 / bin_ns) as usize;
        if bin >= n_bins {
            continue; // partial trailing bin
        }
        total += 1;
        match rec.detector {
            Detector::Left => values[bin] += 1.0,
            Detector::Right => values[bin] -= 1.0,
        }
    }
    Ok(BinnedSeries {
        bin_width_s,
        values,
        total_counts: total,
        duration_s: n_bins as f64 * bin_width_s,
    })
}

// ---------------------------------------------------------------------------
// Single-frequency DFT
// ---------------------------------------------------------------------------

/// |Σ_j v_j · e^{−2πi f t_j}| over bin centers t_j.
fn dft_amplitude(series: &BinnedSeries, frequency_hz: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * frequency_hz * series.bin_width_s;
    let mut re = 0.0;
    let mut im = 0.0;
    for (j, v) in series.values.iter().enumerate() {
        let phase = omega * (j as f64 + 0.5);
        let (s, c) = phase.sin_cos();
        re += v * c;
        im -= v * s;
    }
    (re * re + im * im).sqrt()
}

fn check_resolvable(series: &BinnedSeries, frequency_hz: f64) -> Result<(), AnalysisError> {
    if frequency_hz <= 0.0 {
        return Err(AnalysisError::FrequencyUnresolvable {
            frequency: frequency_hz,
            reason: "frequency must be positive".into(),
        });
    }
    if series.duration_s * frequency_hz < 2.0 {
        return Err(AnalysisError::FrequencyUnresolvable {
            frequency: frequency_hz,
            reason: format!("duration {} s spans fewer than 2 periods", series.duration_s),
        });
    }
    let nyquist = 0.5 / series.bin_width_s;
    if frequency_hz >= nyquist {
        return Err(AnalysisError::FrequencyUnresolvable {
            frequency: frequency_hz,
            reason: format!("bin rate gives a Nyquist band of {nyquist} Hz"),
        });
    }
    Ok(())
}

/// Normalized peak-to-peak amplitude at the drive frequency:
/// 4·√(π/2)·|DFT(values at f)| / total_counts.
pub fn extract_signal(series: &BinnedSeries, frequency_hz: f64) -> Result<f64, AnalysisError> {
    check_resolvable(series, frequency_hz)?;
    if series.total_counts == 0 {
        return Err(AnalysisError::EmptyTagSet);
    }
    Ok(AMPLITUDE_NORM * dft_amplitude(series, frequency_hz) / series.total_counts as f64)
}

/// RMS of the normalized amplitudes at `n_offsets` frequencies around the
/// drive, spaced by `offset_spacing_hz` (default: the natural resolution
/// 1/duration), the drive bin itself excluded.
///
/// For pure shot noise this converges to 4·√(π/2)·√N/N: every off-drive bin
/// of a white difference series carries E|DFT|² = N, and the RMS is taken in
/// the power sense, so the rectangular-window factor is exactly 1.
pub fn noise_floor(
    series: &BinnedSeries,
    frequency_hz: f64,
    n_offsets: usize,
    offset_spacing_hz: Option<f64>,
) -> Result<f64, AnalysisError> {
    check_resolvable(series, frequency_hz)?;
    if series.total_counts == 0 {
        return Err(AnalysisError::EmptyTagSet);
    }
    let spacing = offset_spacing_hz.unwrap_or(1.0 / series.duration_s);
    let half_low = n_offsets.div_ceil(2);
    let half_high = n_offsets - half_low;
    let lowest = frequency_hz - half_low as f64 * spacing;
    let highest = frequency_hz + half_high as f64 * spacing;
    let nyquist = 0.5 / series.bin_width_s;
    if lowest <= 0.0 || highest >= nyquist {
        return Err(AnalysisError::OffsetsOutOfBand {
            lowest,
            highest,
            nyquist,
        });
    }
    let offsets = (1..=half_low)
        .map(|m| frequency_hz - m as f64 * spacing)
        .chain((1..=half_high).map(|m| frequency_hz + m as f64 * spacing));
    let mean_power = offsets
        .map(|f| {
            let a = dft_amplitude(series, f);
            a * a
        })
        .sum::<f64>()
        / n_offsets as f64;
    Ok(AMPLITUDE_NORM * mean_power.sqrt() / series.total_counts as f64)
}

/// Full pipeline on a tag stream: bin, extract signal and noise floor, form
/// the SNR. Pure in the tag set: re-analysis of a saved file reproduces the
/// result bit-exactly.
pub fn measure_snr(tags: &TimeTagSet, frequency_hz: f64) -> Result<SpectrumResult, AnalysisError> {
    let series = bin_timetags(tags, DEFAULT_BIN_WIDTH_S)?;
    let signal = extract_signal(&series, frequency_hz)?;
    let floor = noise_floor(&series, frequency_hz, DEFAULT_NOISE_OFFSETS, None)?;
    Ok(SpectrumResult {
        signal_amplitude: signal,
        noise_floor: floor,
        snr: if floor > 0.0 { signal / floor } else { 0.0 },
        detected_photons: series.total_counts,
        drive_frequency_hz: frequency_hz,
        frequency_resolution_hz: 1.0 / series.duration_s,
    })
}

// ---------------------------------------------------------------------------
// Repeatability
// ---------------------------------------------------------------------------

/// Ensemble statistics over repeated simulate+measure runs.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RepeatabilitySummary {
    pub results: Vec<SpectrumResult>,
    pub mean_signal: f64,
    pub std_signal: f64,
    /// Shot-noise prediction for the standard deviation of the amplitude
    /// estimate: the in-phase noise quadrature, mean noise floor / √2.
    pub shot_noise_predicted_std: f64,
    /// Set when the observed scatter exceeds the shot-noise prediction by
    /// more than 50%, indicating a noise source beyond counting statistics.
    pub exceeds_shot_noise: bool,
}

/// Runs `n_repeats` simulations with seeds derived from the base seed and
/// reports the scatter of the extracted amplitude against the shot-noise
/// expectation.
pub fn repeatability_check(
    config: &SimConfig,
    n_repeats: usize,
) -> Result<RepeatabilitySummary, AnalysisError> {
    if n_repeats < 2 {
        return Err(AnalysisError::TooFewRepeats(n_repeats));
    }
    let results: Vec<SpectrumResult> = (0..n_repeats)
        .into_par_iter()
        .map(|i| {
            let mut repeat_config = *config;
            repeat_config.seed = derive_seed(config.seed, i as u64);
            let tags = simulate(&repeat_config)
                .map_err(|e| AnalysisError::Simulation(e.to_string()))?;
            measure_snr(&tags, repeat_config.drive.drive_frequency_hz)
        })
        .collect::<Result<_, _>>()?;

    let n = results.len() as f64;
    let mean_signal = results.iter().map(|r| r.signal_amplitude).sum::<f64>() / n;
    let var = results
        .iter()
        .map(|r| (r.signal_amplitude - mean_signal).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let std_signal = var.sqrt();
    let mean_floor = results.iter().map(|r| r.noise_floor).sum::<f64>() / n;
    let predicted = mean_floor / std::f64::consts::SQRT_2;
    Ok(RepeatabilitySummary {
        results,
        mean_signal,
        std_signal,
        shot_noise_predicted_std: predicted,
        exceeds_shot_noise: std_signal > 1.5 * predicted,
    })
}

/// Splitmix64 step: maps (seed, index) to an independent derived seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0x243F6A8885A308D3);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares y = a·x + b.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OriginFit {
    pub slope: f64,
    pub std_error: f64,
}

/// Least-squares line through the origin, y = s·x, with the standard error
/// of s.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> OriginFit {
    assert_eq!(x.len(), y.len());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let resid: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a) * (b - slope * a))
        .sum();
    let dof = (x.len().max(2) - 1) as f64;
    OriginFit {
        slope,
        std_error: (resid / (dof * sxx)).sqrt(),
    }
}

/// Slope of ln(y) vs ln(x).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Adjusts a requested duration so that the drive frequency lands exactly on
/// a DFT bin: the returned duration is an integer number of analysis bins
/// and of drive periods (avoids scalloping loss).
pub fn snap_duration(
    duration_s: f64,
    drive_frequency_hz: f64,
    bin_width_s: f64,
) -> Result<f64, AnalysisError> {
    let per_bin = drive_frequency_hz * bin_width_s;
    let mut step = 0usize;
    for n in 1..=1_000_000 {
        let v = per_bin * n as f64;
        if (v - v.round()).abs() < 1e-9 * v.max(1.0) {
            step = n;
            break;
        }
    }
    if step == 0 {
        return Err(AnalysisError::FrequencyUnresolvable {
            frequency: drive_frequency_hz,
            reason: "no commensurate bin count below 1e6".into(),
        });
    }
    let bins = ((duration_s / bin_width_s / step as f64).round().max(1.0)) * step as f64;
    Ok(bins * bin_width_s)
}
