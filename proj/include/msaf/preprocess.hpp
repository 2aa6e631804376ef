#pragma once

#include <span>
#include <vector>

#include "msaf/eeg_io.hpp"

namespace msaf {

enum class FilterKind { LowPass, BandPass, BandStop };

/// Odd-length, symmetric (linear-phase) FIR filter.
struct FirFilter {
  std::vector<double> taps;
  double fs = 0.0;
  FilterKind kind = FilterKind::BandPass;
  double low = 0.0;   // Hz; unused for LowPass
  double high = 0.0;  // Hz

  std::size_t group_delay() const noexcept { return (taps.size() - 1) / 2; }
};

/// Transition width applied at a band edge: min(max(0.25 * edge, 2 Hz), edge).
double default_transition_width(double edge_hz);

/// Smallest odd tap count >= 3.3 * fs / transition (Hamming window main-lobe rule).
std::size_t hamming_tap_count(double fs, double transition_hz);

/// Hamming windowed-sinc band-pass. Each edge gets its own transition width
/// (default_transition_width, and the upper one never crosses Nyquist); cutoffs
/// sit mid-transition, outside the pass band.
FirFilter design_fir_bandpass(double low, double high, double fs);

/// Hamming windowed-sinc low-pass with unit DC gain; cutoff mid-transition.
FirFilter design_fir_lowpass(double cutoff, double transition, double fs);

/// Notch around f0: spectral inversion of a band-pass covering [f0 - bw/2, f0 + bw/2]
/// with transition width bw/2 on each side. Unity DC gain.
FirFilter design_fir_notch(double f0, double bw, double fs);

/// Amplitude response |H(f)| evaluated directly from the taps.
double frequency_response(const FirFilter& filt, double freq_hz);

/// Filters one channel; output aligned with input (group delay removed),
/// samples outside the signal treated as zero.
std::vector<double> filter_channel(std::span<const double> x, std::span<const double> taps);

Recording apply_fir(const Recording& rec, const FirFilter& filt);

Recording bandpass(const Recording& rec, double low, double high);

Recording notch(const Recording& rec, double f0, double bw);

/// Per-channel (x - mean) / population std.
Recording zscore_channels(const Recording& rec);

/// Subtracts the across-channel mean at every sample.
Recording average_reference(const Recording& rec);

/// Hjorth nearest-neighbor Laplacian over the 4 nearest channels (great-circle
/// distance), inverse-distance weights normalized to sum to 1.
Recording surface_laplacian(const Recording& rec);

/// Keeps samples [round(t_start * fs), round(t_end * fs)).
Recording crop(const Recording& rec, double t_start, double t_end);

/// Anti-aliased polyphase rational resampling; identity when new_fs == fs.
Recording resample(const Recording& rec, double new_fs);

}  // namespace msaf
