#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace artree {

inline constexpr int kFeaturesPerChannel = 5;  // 1 FFT high-band + 4 DWT energies
inline constexpr int kDwtLevels = 4;
inline constexpr double kDefaultCutoffHz = 80.0;

// Multi-channel sampled signal in microvolts.
struct Recording {
  std::vector<std::vector<double>> channels;
  int fs = 0;  // Hz
  std::vector<std::string> channel_names;
  std::string patient_id;

  std::size_t n_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  std::size_t n_channels() const { return channels.size(); }
  double duration_s() const { return fs > 0 ? static_cast<double>(n_samples()) / fs : 0.0; }
};

// One-second view into a recording: exactly fs samples per channel.
struct Window {
  std::vector<std::span<const double>> channels;
  double start_s = 0.0;
  int fs = 0;
};

// Flat per-window feature vector, length 5 x n_channels, layout
// [ch0: fft_hi, d1, d2, d3, d4][ch1: ...] ...
struct FeatureVector {
  std::vector<double> values;
};

// Keep every factor-th sample starting at index 0.
std::vector<double> decimate(std::span<const double> x, std::size_t factor);

// Linear interpolation onto the fs_out grid; positions past the last input
// sample clamp to it. Output length = round(len * fs_out / fs_in).
std::vector<double> linear_resample(std::span<const double> x, int fs_in, int fs_out);

// Non-overlapping 1 s windows; a trailing partial window is discarded.
std::vector<Window> split_windows(const Recording& rec);

// DFT bins 0..floor(n/2) of a real signal. Uses a mixed-radix complex FFT;
// even lengths go through the half-length packed-complex transform.
std::vector<std::complex<double>> rfft_spectrum(std::span<const double> x);

// Sum of |bin|^2 over bins whose frequency k*fs/n is strictly above
// cutoff_hz. The spectrum must come from a 1 s window, so n == fs.
double highband_energy(std::span<const std::complex<double>> spectrum, int fs,
                       double cutoff_hz = kDefaultCutoffHz);

struct HaarResult {
  std::vector<std::vector<double>> details;  // one vector per level
  std::vector<double> approx;                // final approximation
  // Energy of samples dropped at odd-length levels; with it, the transform
  // conserves energy exactly: sum(x^2) == details + approx + dropped.
  double dropped_energy = 0.0;
};

// Orthonormal Haar cascade. Odd-length levels drop their final unpaired
// sample from the transform but book its squared value in dropped_energy.
HaarResult haar_dwt(std::span<const double> x, int levels);

// Per-level detail energies sum(d^2); requires at least 4 levels.
std::array<double, kDwtLevels> dwt_detail_energies(const HaarResult& dwt);

// [highband_energy, d1..d4 energies] per channel, concatenated.
FeatureVector extract_features(const Window& window);

}  // namespace artree
