#pragma once

// Power spectral densities of residuals and the spectral force-estimation
// bounds built from them. Angular frequencies throughout; densities are per
// dω/2π. Tabulated spectra used by the bounds are treated as two-sided and
// even in ω: a grid starting at ω >= 0 is mirrored to negative frequencies.

#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace qpe {

struct Psd {
  std::vector<double> frequencies;
  std::vector<double> values;

  // Throws InvalidParam unless the frequencies are finite and strictly
  // increasing and the values finite (or +inf) and non-negative.
  void validate() const;
  std::size_t size() const { return frequencies.size(); }
  bool operator==(const Psd&) const = default;
};

// Stand-in for a prior spectrum that is infinite everywhere (no prior
// information); 1/S_f is then 0.
struct SymbolicInfinite {
  bool operator==(const SymbolicInfinite&) const = default;
};
using PriorSpectrum = std::variant<Psd, SymbolicInfinite>;

enum class Window { kHann, kRectangular };

// One-sided Welch estimate with half-overlapping segments of length
// 2 floor(N / (segments + 1)). Bins are ω_k = 2πk / (L dt), k = 0..L/2.
// No detrending. Throws TooFewSamples for N < 2 segments, InvalidParam for
// segments < 1 or dt <= 0.
Psd periodogram(std::span<const double> samples, double dt, int segments,
                Window window = Window::kHann);

// Σ_k S_k Δω / 2π over the one-sided periodogram bins.
double psd_power(const Psd& psd);

// Linear interpolation onto `frequencies`. Throws BandOutOfRange outside
// the tabulated range.
Psd resample(const Psd& psd, const std::vector<double>& frequencies);

// |χ(ω)|² = 1 / ((ω0² − ω²)² + γ² ω²), a convenience damped-oscillator
// susceptibility.
Psd damped_susceptibility2(const std::vector<double>& frequencies,
                           double omega0, double gamma);

// Weight function B(ω) limiting the integration bandwidth.
class Bandwidth {
 public:
  static Bandwidth zero();
  // 1 on [center − half_width, center + half_width], 0 elsewhere.
  static Bandwidth indicator(double half_width, double center = 0.0);
  // Indicator of total width 2π/τ centred on ω = 0.
  static Bandwidth integration_time(double tau);
  static Bandwidth function(std::function<double(double)> weight);

  double operator()(double omega) const;

  enum class Kind { kZero, kIndicator, kFunction };
  Kind kind() const { return kind_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  Kind kind_ = Kind::kZero;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::function<double(double)> weight_;
};

struct QcrbInputs {
  Psd chi2;   // |χ(ω)|²
  Psd s_fba;  // backaction force noise
  PriorSpectrum s_f = SymbolicInfinite{};
  Psd s_z;    // total force noise (used by the integrand helpers)
  Bandwidth bandwidth = Bandwidth::zero();
};

// (4 |χ|² S_fba + 1/S_f)^{-1} on the shared grid of chi2 and s_fba (and
// s_f when tabulated). Throws GridMismatch when the grids differ.
Psd qcrb_spectral_bound(const QcrbInputs& inputs);

// (1/S_z + 1/S_f)^{-1} pointwise; S_z when the prior is infinite. Throws
// GridMismatch.
Psd smoothing_integrand(const Psd& s_z, const PriorSpectrum& s_f);

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

// ∫_band dω/2π (1/S_z + 1/S_f)^{-1}, trapezoid rule on the tabulation
// (exact for the piecewise-linear interpolant, including the band edges).
// Throws BandOutOfRange, GridMismatch, InvalidParam for lo > hi.
double smoothing_variance_bound(const Psd& s_z, const PriorSpectrum& s_f,
                                Band band);

// ∫_band dω/2π 2 S_z(ω) B(ω). Exactly 0 for B ≡ 0. Indicator bandwidths are
// integrated exactly over the overlap of band and support; other weights by
// the trapezoid rule on the tabulation.
double bandwidth_variance(const Psd& s_z, const Bandwidth& bandwidth,
                          Band band);

}  // namespace qpe
