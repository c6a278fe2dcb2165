#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/math.hpp"

namespace opse {

using Vec2 = Eigen::Vector2d;
using Complex = std::complex<double>;

struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ExtrapolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Loudspeaker in the listener-centric frame: listener at the origin,
/// +x along the listener's facing direction.
struct Loudspeaker {
  Vec2 position;     ///< u_n, meters
  Vec2 orientation;  ///< o_n, unit vector

  Loudspeaker(const Vec2& pos, const Vec2& orient) : position(pos), orientation(orient) {
    if (pos.norm() <= 0.0)
      throw DegenerateGeometryError("Loudspeaker: placed at the listener origin");
    if (std::fabs(orient.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("Loudspeaker: orientation must be a unit vector");
  }

  /// Unit direction v_n = u_n / ||u_n|| from the listener.
  Vec2 unit_direction() const { return position.normalized(); }
  double distance() const { return position.norm(); }
};

struct Layout {
  std::vector<Loudspeaker> speakers;

  explicit Layout(std::vector<Loudspeaker> spk) : speakers(std::move(spk)) {
    if (speakers.empty()) throw std::invalid_argument("Layout: needs at least one loudspeaker");
  }
  std::size_t size() const { return speakers.size(); }
};

struct Wavenumber {
  double freq_hz;
  double speed_of_sound = 343.0;

  Wavenumber(double nu, double c = 343.0) : freq_hz(nu), speed_of_sound(c) {
    if (!(nu >= 0.0) || !(c > 0.0))
      throw std::invalid_argument("Wavenumber: need freq >= 0 and c > 0");
  }
  double kappa() const { return two_pi * freq_hz / speed_of_sound; }
};

/// Signed evaluation angle of point r relative to the loudspeaker's
/// orientation, in (-pi, pi].
inline double normalization_angle(const Loudspeaker& spk, const Vec2& r) {
  const Vec2 s = r - spk.position;
  if (s.norm() < 1e-12)
    throw DegenerateGeometryError("normalization_angle: evaluation point on the loudspeaker");
  const double cross = spk.orientation.x() * s.y() - spk.orientation.y() * s.x();
  const double dot = spk.orientation.dot(s);
  return wrap_angle(std::atan2(cross, dot));
}

/// Acoustic directivity S_A(nu, theta): azimuth response at 1 m with the
/// acoustic path delay removed.
class DirectivityModel {
 public:
  virtual ~DirectivityModel() = default;
  virtual Complex sample(double nu, double theta) const = 0;
  virtual double min_freq() const { return 0.0; }
  virtual double max_freq() const { return std::numeric_limits<double>::infinity(); }

 protected:
  void check_range(double nu) const {
    if (nu < min_freq() || nu > max_freq()) {
      std::ostringstream os;
      os << "directivity: frequency " << nu << " Hz outside table range ["
         << min_freq() << ", " << max_freq() << "]";
      throw ExtrapolationError(os.str());
    }
  }
};

inline Complex directivity_sample(const DirectivityModel& dir, double nu, double theta) {
  return dir.sample(nu, theta);
}

class IsotropicDirectivity final : public DirectivityModel {
 public:
  Complex sample(double, double) const override { return {1.0, 0.0}; }
};

/// Parametric reference directivity: an axial beam that narrows with
/// frequency plus a weak high-frequency lobing ripple.
///
///   S_A(nu, theta) = max(a + (1-a) cos theta, floor)^{p(nu)}
///                    + (eps/2) (cos 6 theta - 1) min(1, nu/8000)
///
/// p(nu) rises log-linearly from 0 at 100 Hz to 4 at 16 kHz (clamped).
/// On-axis the response is exactly 1 at every frequency.
class ReferenceDirectivity final : public DirectivityModel {
 public:
  explicit ReferenceDirectivity(double a = 0.25, double eps = 0.15)
      : a_(a), eps_(eps) {}

  Complex sample(double nu, double theta) const override {
    const double base = std::max(a_ + (1.0 - a_) * std::cos(theta), 1e-3);
    const double main = std::pow(base, exponent(nu));
    const double lobe = 0.5 * eps_ * (std::cos(6.0 * theta) - 1.0) * std::min(1.0, nu / 8000.0);
    return {main + lobe, 0.0};
  }

  double exponent(double nu) const {
    if (nu <= 100.0) return 0.0;
    if (nu >= 16000.0) return 4.0;
    return 4.0 * std::log(nu / 100.0) / std::log(160.0);
  }

 private:
  double a_, eps_;
};

/// Tabulated complex directivity on a (frequency x azimuth) grid; linear in
/// frequency, circularly linear in azimuth.
class TabulatedDirectivity final : public DirectivityModel {
 public:
  TabulatedDirectivity(std::vector<double> freqs, std::vector<double> thetas,
                       std::vector<std::vector<Complex>> values)
      : freqs_(std::move(freqs)), thetas_(std::move(thetas)), values_(std::move(values)) {
    if (freqs_.size() < 1 || thetas_.size() < 2)
      throw std::invalid_argument("TabulatedDirectivity: grid too small");
    if (!std::is_sorted(freqs_.begin(), freqs_.end()) ||
        std::adjacent_find(freqs_.begin(), freqs_.end()) != freqs_.end())
      throw std::invalid_argument("TabulatedDirectivity: frequency grid must be strictly increasing");
    if (!std::is_sorted(thetas_.begin(), thetas_.end()) ||
        std::adjacent_find(thetas_.begin(), thetas_.end()) != thetas_.end())
      throw std::invalid_argument("TabulatedDirectivity: azimuth grid must be strictly increasing");
    if (thetas_.front() < -pi || thetas_.back() >= pi)
      throw std::invalid_argument("TabulatedDirectivity: azimuth grid must lie in [-pi, pi)");
    if (values_.size() != freqs_.size())
      throw std::invalid_argument("TabulatedDirectivity: value rows != frequency count");
    for (const auto& row : values_)
      if (row.size() != thetas_.size())
        throw std::invalid_argument("TabulatedDirectivity: value row size != azimuth count");
    for (std::size_t i = 0; i < freqs_.size(); ++i)
      if (std::abs(axial(i)) == 0.0)
        throw std::invalid_argument("TabulatedDirectivity: S_A(nu, 0) must be nonzero");
  }

  Complex sample(double nu, double theta) const override {
    check_range(nu);
    const auto [fi, ft] = bracket_freq(nu);
    const Complex lo = sample_theta(fi, theta);
    if (ft == 0.0) return lo;
    const Complex hi = sample_theta(fi + 1, theta);
    return lo + ft * (hi - lo);
  }

  double min_freq() const override { return freqs_.front(); }
  double max_freq() const override { return freqs_.back(); }

 private:
  Complex axial(std::size_t fi) const {
    // nearest azimuth node to 0 stands in for the axial sample check
    const auto it = std::min_element(thetas_.begin(), thetas_.end(),
        [](double x, double y) { return std::fabs(x) < std::fabs(y); });
    return values_[fi][static_cast<std::size_t>(it - thetas_.begin())];
  }

  std::pair<std::size_t, double> bracket_freq(double nu) const {
    if (freqs_.size() == 1) return {0, 0.0};
    auto it = std::upper_bound(freqs_.begin(), freqs_.end(), nu);
    if (it == freqs_.begin()) return {0, 0.0};
    if (it == freqs_.end()) return {freqs_.size() - 2, 1.0};
    const std::size_t i = static_cast<std::size_t>(it - freqs_.begin()) - 1;
    return {i, (nu - freqs_[i]) / (freqs_[i + 1] - freqs_[i])};
  }

  Complex sample_theta(std::size_t fi, double theta) const {
    const double t = wrap_angle(theta);
    const auto& row = values_[fi];
    auto it = std::upper_bound(thetas_.begin(), thetas_.end(), t);
    if (it == thetas_.begin() || it == thetas_.end()) {
      // wrap segment between the last node and the first node + 2 pi
      const double t0 = thetas_.back(), t1 = thetas_.front() + two_pi;
      double tw = t < thetas_.front() ? t + two_pi : t;
      const double u = (tw - t0) / (t1 - t0);
      return row.back() + u * (row.front() - row.back());
    }
    const std::size_t i = static_cast<std::size_t>(it - thetas_.begin()) - 1;
    const double u = (t - thetas_[i]) / (thetas_[i + 1] - thetas_[i]);
    return row[i] + u * (row[i + 1] - row[i]);
  }

  std::vector<double> freqs_, thetas_;
  std::vector<std::vector<Complex>> values_;
};

/// Far-field transfer function H_n(nu, r): directivity at the evaluation
/// angle, inverse-distance attenuation, and the acoustic path delay.
inline Complex transfer_function(const Loudspeaker& spk, const DirectivityModel& dir,
                                 const Wavenumber& k, const Vec2& r) {
  const Vec2 s = r - spk.position;
  const double dist = s.norm();
  if (dist < 1e-12)
    throw DegenerateGeometryError("transfer_function: evaluation point on the loudspeaker");
  const double theta = normalization_angle(spk, r);
  const Complex S = dir.sample(k.freq_hz, theta);
  return S * std::polar(1.0 / dist, -k.kappa() * dist);
}

/// Strict parser for directivity tables: CSV with header
/// `freq_hz,theta_deg,re,im`, row-major by frequency.
inline TabulatedDirectivity load_directivity_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("directivity csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "freq_hz,theta_deg,re,im")
    throw std::invalid_argument("directivity csv: bad header: " + line);

  std::vector<double> freqs, thetas;
  std::vector<std::vector<Complex>> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    double f, td, re, im;
    char c1, c2, c3;
    if (!(row >> f >> c1 >> td >> c2 >> re >> c3 >> im) || c1 != ',' || c2 != ',' || c3 != ',')
      throw std::invalid_argument("directivity csv: malformed row at line " +
                                  std::to_string(lineno));
    const double th = deg_to_rad(td);
    if (freqs.empty() || f != freqs.back()) {
      freqs.push_back(f);
      values.emplace_back();
    }
    if (freqs.size() == 1) thetas.push_back(th);
    values.back().emplace_back(re, im);
  }
  return TabulatedDirectivity(std::move(freqs), std::move(thetas), std::move(values));
}

inline TabulatedDirectivity load_directivity_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("directivity csv: cannot open " + path);
  return load_directivity_csv(in);
}

/// Default logarithmic frequency grid, 20 Hz to 20 kHz.
inline std::vector<double> log_frequency_grid(int points = 96, double lo = 20.0,
                                              double hi = 20000.0) {
  if (points < 2 || !(lo > 0.0) || !(hi > lo))
    throw std::invalid_argument("log_frequency_grid: bad parameters");
  std::vector<double> g(points);
  const double step = std::log(hi / lo) / (points - 1);
  for (int i = 0; i < points; ++i) g[i] = lo * std::exp(step * i);
  g.back() = hi;
  return g;
}

}  // namespace opse
