#include "artree/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "artree/kernels.hpp"

namespace artree {

namespace {

using cd = std::complex<double>;

std::size_t smallest_factor(std::size_t n) {
  for (std::size_t p = 2; p * p <= n; ++p) {
    if (n % p == 0) return p;
  }
  return n;
}

// Out-of-place recursive mixed-radix Cooley-Tukey. One twiddle table for the
// top-level length serves every stage: W_m^j == W_n^(j * n/m) for m | n.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddles_(n) {
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      twiddles_[j] = cd(std::cos(angle), std::sin(angle));
    }
    std::size_t m = n;
    while (m > 1) {
      const std::size_t p = smallest_factor(m);
      max_radix_ = std::max(max_radix_, p);
      m /= p;
    }
  }

  std::size_t size() const { return n_; }

  // in and out must not alias; out receives the full length-n DFT.
  void transform(const cd* in, cd* out) const {
    std::vector<cd> radix_buf(max_radix_);
    recurse(in, 1, out, n_, 1, radix_buf.data());
  }

 private:
  void recurse(const cd* in, std::size_t stride, cd* out, std::size_t n,
               std::size_t tw_stride, cd* radix_buf) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = smallest_factor(n);
    const std::size_t m = n / p;
    for (std::size_t r = 0; r < p; ++r) {
      recurse(in + r * stride, stride * p, out + r * m, m, tw_stride * p, radix_buf);
    }
    // Combine: X[k1 + q*m] = sum_r W_n^(r*k1) * Y_r[k1] * W_p^(r*q).
    for (std::size_t k1 = 0; k1 < m; ++k1) {
      for (std::size_t r = 0; r < p; ++r) {
        radix_buf[r] = out[r * m + k1] * twiddles_[(r * k1) * tw_stride];
      }
      if (p == 2) {
        out[k1] = radix_buf[0] + radix_buf[1];
        out[k1 + m] = radix_buf[0] - radix_buf[1];
      } else {
        for (std::size_t q = 0; q < p; ++q) {
          cd acc = radix_buf[0];
          for (std::size_t r = 1; r < p; ++r) {
            // W_p^(r*q) == W_n^(m * (r*q mod p))
            acc += radix_buf[r] * twiddles_[((r * q) % p) * m * tw_stride];
          }
          out[k1 + q * m] = acc;
        }
      }
    }
  }

  std::size_t n_;
  std::size_t max_radix_ = 1;
  std::vector<cd> twiddles_;
};

std::shared_ptr<const Fft> plan_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const Fft>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<Fft>(n);
  return slot;
}

}  // namespace

std::vector<double> decimate(std::span<const double> x, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("decimate: factor must be >= 1");
  std::vector<double> out;
  out.reserve((x.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < x.size(); i += factor) out.push_back(x[i]);
  return out;
}

std::vector<double> linear_resample(std::span<const double> x, int fs_in, int fs_out) {
  if (fs_in <= 0 || fs_out <= 0) {
    throw std::invalid_argument("linear_resample: sampling rates must be positive");
  }
  if (x.empty()) throw std::invalid_argument("linear_resample: empty input");
  const std::size_t out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) * fs_out / fs_in));
  std::vector<double> out(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * fs_in / fs_out;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= x.size()) {
      out[j] = x.back();  // clamp beyond the input's end
    } else {
      const double frac = pos - static_cast<double>(i);
      out[j] = x[i] + frac * (x[i + 1] - x[i]);
    }
  }
  return out;
}

std::vector<Window> split_windows(const Recording& rec) {
  if (rec.fs <= 0) throw std::invalid_argument("split_windows: fs must be positive");
  if (rec.n_samples() < static_cast<std::size_t>(rec.fs)) {
    throw std::invalid_argument("split_windows: recording shorter than one window");
  }
  const std::size_t fs = static_cast<std::size_t>(rec.fs);
  const std::size_t count = rec.n_samples() / fs;
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window win;
    win.start_s = static_cast<double>(w);
    win.fs = rec.fs;
    win.channels.reserve(rec.n_channels());
    for (const auto& ch : rec.channels) {
      win.channels.emplace_back(ch.data() + w * fs, fs);
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

std::vector<std::complex<double>> rfft_spectrum(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("rfft_spectrum: need at least 2 samples");
  const std::size_t half = n / 2;
  std::vector<cd> bins(half + 1);

  if (n % 2 != 0) {
    // Odd length: full complex transform of the real signal.
    auto plan = plan_for(n);
    std::vector<cd> in(n), out(n);
    for (std::size_t t = 0; t < n; ++t) in[t] = cd(x[t], 0.0);
    plan->transform(in.data(), out.data());
    std::copy(out.begin(), out.begin() + half + 1, bins.begin());
    return bins;
  }

  // Even length: pack adjacent reals into a half-length complex signal and
  // untangle the even/odd spectra afterwards.
  const std::size_t m = half;
  auto plan = plan_for(m);
  std::vector<cd> packed(m), z(m);
  for (std::size_t t = 0; t < m; ++t) packed[t] = cd(x[2 * t], x[2 * t + 1]);
  plan->transform(packed.data(), z.data());

  for (std::size_t k = 0; k <= m; ++k) {
    const std::size_t km = k % m;
    const std::size_t kr = (m - km) % m;
    const cd a = z[km];
    const cd b = std::conj(z[kr]);
    const cd even = 0.5 * (a + b);
    const cd odd = cd(0.0, -0.5) * (a - b);
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    bins[k] = even + cd(std::cos(angle), std::sin(angle)) * odd;
  }
  return bins;
}

double highband_energy(std::span<const std::complex<double>> spectrum, int fs,
                       double cutoff_hz) {
  if (fs <= 0) throw std::invalid_argument("highband_energy: fs must be positive");
  if (cutoff_hz >= fs / 2.0) {
    throw std::invalid_argument("highband_energy: cutoff must be below Nyquist");
  }
  const std::size_t n = static_cast<std::size_t>(fs);  // 1 s window
  if (spectrum.size() != n / 2 + 1) {
    throw std::invalid_argument("highband_energy: spectrum length does not match a 1 s window");
  }
  std::size_t k0 = spectrum.size();
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double freq = static_cast<double>(k) * fs / static_cast<double>(n);
    if (freq > cutoff_hz) {
      k0 = k;
      break;
    }
  }
  if (k0 >= spectrum.size()) return 0.0;
  // |a+bi|^2 summed over a contiguous complex range is a plain sum of squares
  // over its interleaved doubles.
  const auto* flat = reinterpret_cast<const double*>(spectrum.data() + k0);
  return kernels::sumsq(flat, 2 * (spectrum.size() - k0));
}

HaarResult haar_dwt(std::span<const double> x, int levels) {
  if (levels < 1) throw std::invalid_argument("haar_dwt: levels must be >= 1");
  if (x.size() < (static_cast<std::size_t>(1) << levels)) {
    throw std::invalid_argument("haar_dwt: signal shorter than 2^levels");
  }
  HaarResult result;
  result.details.reserve(levels);
  std::vector<double> current(x.begin(), x.end());
  for (int level = 0; level < levels; ++level) {
    const std::size_t pairs = current.size() / 2;
    if (current.size() % 2 != 0) {
      const double dropped = current.back();
      result.dropped_energy += dropped * dropped;
    }
    std::vector<double> detail(pairs);
    std::vector<double> next(pairs);
    kernels::haar_level(current.data(), pairs, detail.data(), next.data());
    result.details.push_back(std::move(detail));
    current = std::move(next);
  }
  result.approx = std::move(current);
  return result;
}

std::array<double, kDwtLevels> dwt_detail_energies(const HaarResult& dwt) {
  if (dwt.details.size() < kDwtLevels) {
    throw std::invalid_argument("dwt_detail_energies: need 4 detail levels");
  }
  std::array<double, kDwtLevels> energies{};
  for (int level = 0; level < kDwtLevels; ++level) {
    const auto& d = dwt.details[level];
    energies[level] = kernels::sumsq(d.data(), d.size());
  }
  return energies;
}

FeatureVector extract_features(const Window& window) {
  FeatureVector features;
  features.values.reserve(kFeaturesPerChannel * window.channels.size());
  for (const auto& channel : window.channels) {
    const auto spectrum = rfft_spectrum(channel);
    features.values.push_back(highband_energy(spectrum, window.fs));
    const auto dwt = haar_dwt(channel, kDwtLevels);
    const auto energies = dwt_detail_energies(dwt);
    features.values.insert(features.values.end(), energies.begin(), energies.end());
  }
  return features;
}

}  // namespace artree
