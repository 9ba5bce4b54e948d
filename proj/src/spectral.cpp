#include "qpe/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "qpe/errors.hpp"

namespace qpe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Nodes {
  std::vector<double> x;
  std::vector<double> y;
};

// Mirror a grid that starts at ω >= 0 onto negative frequencies.
Nodes two_sided(const std::vector<double>& freqs,
                const std::vector<double>& values) {
  Nodes n;
  if (freqs.front() >= 0.0) {
    for (std::size_t i = freqs.size(); i-- > 0;) {
      if (freqs[i] == 0.0) continue;
      n.x.push_back(-freqs[i]);
      n.y.push_back(values[i]);
    }
  }
  n.x.insert(n.x.end(), freqs.begin(), freqs.end());
  n.y.insert(n.y.end(), values.begin(), values.end());
  return n;
}

void check_band(const Nodes& n, Band band) {
  if (!std::isfinite(band.lo) || !std::isfinite(band.hi) || band.lo > band.hi) {
    throw InvalidParam("band needs finite lo <= hi");
  }
  const double lo = n.x.front();
  const double hi = n.x.back();
  const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
  if (band.lo < lo - slack || band.hi > hi + slack) {
    std::ostringstream msg;
    msg << "band [" << band.lo << ", " << band.hi
        << "] outside tabulated range [" << lo << ", " << hi << "]";
    throw BandOutOfRange(msg.str());
  }
}

double interpolate(const Nodes& n, double x) {
  auto it = std::upper_bound(n.x.begin(), n.x.end(), x);
  if (it == n.x.begin()) return n.y.front();
  if (it == n.x.end()) return n.y.back();
  const std::size_t i = static_cast<std::size_t>(it - n.x.begin());
  const double t = (x - n.x[i - 1]) / (n.x[i] - n.x[i - 1]);
  return n.y[i - 1] + t * (n.y[i] - n.y[i - 1]);
}

// ∫_lo^hi of the piecewise-linear interpolant of the nodes.
double integrate(const Nodes& n, double lo, double hi) {
  lo = std::max(lo, n.x.front());
  hi = std::min(hi, n.x.back());
  if (!(lo < hi)) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < n.x.size(); ++i) {
    const double a = std::max(lo, n.x[i]);
    const double b = std::min(hi, n.x[i + 1]);
    if (!(a < b)) continue;
    const double ya = a == n.x[i] ? n.y[i] : interpolate(n, a);
    const double yb = b == n.x[i + 1] ? n.y[i + 1] : interpolate(n, b);
    sum += 0.5 * (b - a) * (ya + yb);
  }
  return sum;
}

void check_same_grid(const Psd& a, const Psd& b, const char* what) {
  if (a.frequencies != b.frequencies) {
    throw GridMismatch(std::string(what) + " is tabulated on a different grid");
  }
}

double harmonic(double s_z, double s_f) {
  if (s_z == 0.0 || s_f == 0.0) return 0.0;
  return 1.0 / (1.0 / s_z + 1.0 / s_f);
}

}  // namespace

void Psd::validate() const {
  if (frequencies.size() != values.size()) {
    throw InvalidParam("spectrum frequencies and values differ in length");
  }
  if (frequencies.empty()) throw InvalidParam("spectrum is empty");
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    if (!std::isfinite(frequencies[i])) {
      throw InvalidParam("spectrum frequencies must be finite");
    }
    if (i > 0 && !(frequencies[i] > frequencies[i - 1])) {
      throw InvalidParam("spectrum frequencies must be strictly increasing");
    }
    if (!(values[i] >= 0.0)) {
      throw InvalidParam("spectrum values must be non-negative");
    }
  }
}

Psd periodogram(std::span<const double> samples, double dt, int segments,
                Window window) {
  if (segments < 1) throw InvalidParam("periodogram needs segments >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidParam("dt must be > 0");
  const std::size_t n = samples.size();
  const auto k = static_cast<std::size_t>(segments);
  if (n < 2 * k) {
    std::ostringstream msg;
    msg << n << " samples for " << segments << " segments; need at least "
        << 2 * k;
    throw TooFewSamples(msg.str());
  }
  const std::size_t len = 2 * (n / (k + 1));
  const std::size_t hop = len / 2;

  std::vector<double> w(len, 1.0);
  if (window == Window::kHann && len > 1) {
    for (std::size_t i = 0; i < len; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) /
                                  static_cast<double>(len));
    }
  }
  double w2 = 0.0;
  for (double v : w) w2 += v * v;

  const std::size_t bins = len / 2 + 1;
  std::vector<double> acc(bins, 0.0);
  Eigen::FFT<double> fft;
  std::vector<double> seg(len);
  std::vector<std::complex<double>> spec;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t i = 0; i < len; ++i) seg[i] = samples[s * hop + i] * w[i];
    fft.fwd(spec, seg);
    for (std::size_t b = 0; b < bins; ++b) acc[b] += std::norm(spec[b]);
  }

  Psd psd;
  psd.frequencies.resize(bins);
  psd.values.resize(bins);
  const double scale = dt / (w2 * static_cast<double>(k));
  for (std::size_t b = 0; b < bins; ++b) {
    psd.frequencies[b] =
        kTwoPi * static_cast<double>(b) / (static_cast<double>(len) * dt);
    const bool edge = b == 0 || (len % 2 == 0 && b == len / 2);
    psd.values[b] = (edge ? 1.0 : 2.0) * scale * acc[b];
  }
  return psd;
}

double psd_power(const Psd& psd) {
  if (psd.size() < 2) throw InvalidParam("need at least 2 bins");
  const double dw = psd.frequencies[1] - psd.frequencies[0];
  double sum = 0.0;
  for (double v : psd.values) sum += v;
  return sum * dw / kTwoPi;
}

Psd resample(const Psd& psd, const std::vector<double>& frequencies) {
  psd.validate();
  Nodes n{psd.frequencies, psd.values};
  Psd out;
  out.frequencies = frequencies;
  out.values.reserve(frequencies.size());
  for (double w : frequencies) {
    check_band(n, {w, w});
    out.values.push_back(interpolate(n, w));
  }
  return out;
}

Psd damped_susceptibility2(const std::vector<double>& frequencies,
                           double omega0, double gamma) {
  if (!std::isfinite(omega0) || !std::isfinite(gamma) || gamma < 0.0) {
    throw InvalidParam("susceptibility needs finite omega0 and gamma >= 0");
  }
  Psd out{frequencies, {}};
  out.values.reserve(frequencies.size());
  for (double w : frequencies) {
    const double d = omega0 * omega0 - w * w;
    out.values.push_back(1.0 / (d * d + gamma * gamma * w * w));
  }
  return out;
}

Bandwidth Bandwidth::zero() { return {}; }

Bandwidth Bandwidth::indicator(double half_width, double center) {
  if (!(half_width >= 0.0) || !std::isfinite(half_width) ||
      !std::isfinite(center)) {
    throw InvalidParam("indicator bandwidth needs finite half_width >= 0");
  }
  Bandwidth b;
  b.kind_ = Kind::kIndicator;
  b.lo_ = center - half_width;
  b.hi_ = center + half_width;
  return b;
}

Bandwidth Bandwidth::integration_time(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidParam("integration time must be > 0");
  }
  return indicator(std::numbers::pi / tau);
}

Bandwidth Bandwidth::function(std::function<double(double)> weight) {
  if (!weight) throw InvalidParam("bandwidth weight function is empty");
  Bandwidth b;
  b.kind_ = Kind::kFunction;
  b.weight_ = std::move(weight);
  return b;
}

double Bandwidth::operator()(double omega) const {
  switch (kind_) {
    case Kind::kZero:
      return 0.0;
    case Kind::kIndicator:
      return omega >= lo_ && omega <= hi_ ? 1.0 : 0.0;
    case Kind::kFunction:
      return weight_(omega);
  }
  return 0.0;
}

Psd qcrb_spectral_bound(const QcrbInputs& inputs) {
  inputs.chi2.validate();
  inputs.s_fba.validate();
  check_same_grid(inputs.chi2, inputs.s_fba, "backaction spectrum");
  const Psd* prior = std::get_if<Psd>(&inputs.s_f);
  if (prior) {
    prior->validate();
    check_same_grid(inputs.chi2, *prior, "prior force spectrum");
  }
  Psd out{inputs.chi2.frequencies, {}};
  out.values.reserve(out.frequencies.size());
  for (std::size_t i = 0; i < out.frequencies.size(); ++i) {
    const double info = 4.0 * inputs.chi2.values[i] * inputs.s_fba.values[i];
    const double inv_prior = prior ? 1.0 / prior->values[i] : 0.0;
    out.values.push_back(1.0 / (info + inv_prior));
  }
  return out;
}

Psd smoothing_integrand(const Psd& s_z, const PriorSpectrum& s_f) {
  s_z.validate();
  Psd out = s_z;
  if (const Psd* prior = std::get_if<Psd>(&s_f)) {
    prior->validate();
    check_same_grid(s_z, *prior, "prior force spectrum");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.values[i] = harmonic(s_z.values[i], prior->values[i]);
    }
  }
  return out;
}

double smoothing_variance_bound(const Psd& s_z, const PriorSpectrum& s_f,
                                Band band) {
  const Psd integrand = smoothing_integrand(s_z, s_f);
  const Nodes n = two_sided(integrand.frequencies, integrand.values);
  check_band(n, band);
  return integrate(n, band.lo, band.hi) / kTwoPi;
}

double bandwidth_variance(const Psd& s_z, const Bandwidth& bandwidth,
                          Band band) {
  s_z.validate();
  Nodes n = two_sided(s_z.frequencies, s_z.values);
  check_band(n, band);
  switch (bandwidth.kind()) {
    case Bandwidth::Kind::kZero:
      return 0.0;
    case Bandwidth::Kind::kIndicator:
      return 2.0 *
             integrate(n, std::max(band.lo, bandwidth.lo()),
                       std::min(band.hi, bandwidth.hi())) /
             kTwoPi;
    case Bandwidth::Kind::kFunction:
      for (std::size_t i = 0; i < n.x.size(); ++i) n.y[i] *= bandwidth(n.x[i]);
      return 2.0 * integrate(n, band.lo, band.hi) / kTwoPi;
  }
  return 0.0;
}

}  // namespace qpe
