#include "dfetrack/evalstat.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "dfetrack/error.hpp"
#include "dfetrack/parallel.hpp"
#include "dfetrack/rng.hpp"

namespace dfetrack::stats {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr int kMaxIterations = 100000;

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidInput(fmt::format("gamma: shape {} must be positive", a));
  if (!(x >= 0.0)) throw InvalidInput(fmt::format("gamma: argument {} must be non-negative", x));
}

// log of x^a e^-x / Gamma(a), the common prefactor.
double log_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

// Power series for P, valid for x < a + 1. Returns the series sum S with
// P = S * exp(log_prefactor).
double series_sum(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) return sum;
  }
  throw NumericError(fmt::format("incomplete gamma series did not converge (a={}, x={})", a, x));
}

// Modified Lentz evaluation of the continued fraction for Q, valid for
// x >= a + 1. Returns h with Q = h * exp(log_prefactor).
double continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericError(fmt::format("incomplete gamma continued fraction did not converge (a={}, x={})", a, x));
}

void check_dof(double k) {
  if (!(k >= 1.0) || !std::isfinite(k)) throw InvalidInput(fmt::format("degrees of freedom {} must be >= 1", k));
}

}  // namespace

void ErrorModel::validate() const {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0) || !std::isfinite(sigma_x) || !std::isfinite(sigma_y)) {
    throw InvalidInput(fmt::format("error model '{}': sigmas ({}, {}) must be positive", condition, sigma_x, sigma_y));
  }
}

double gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::min(1.0, series_sum(a, x) * std::exp(log_prefactor(a, x)));
  return 1.0 - continued_fraction(a, x) * std::exp(log_prefactor(a, x));
}

double gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - std::min(1.0, series_sum(a, x) * std::exp(log_prefactor(a, x)));
  return continued_fraction(a, x) * std::exp(log_prefactor(a, x));
}

double log_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  if (x < a + 1.0) return std::log1p(-std::min(1.0, series_sum(a, x) * std::exp(log_prefactor(a, x))));
  return std::log(continued_fraction(a, x)) + log_prefactor(a, x);
}

double chi2_cdf(double x, double k) {
  check_dof(k);
  if (x < 0.0 || std::isnan(x)) throw InvalidInput(fmt::format("chi2_cdf: x = {} must be non-negative", x));
  return gamma_p(0.5 * k, 0.5 * x);
}

double chi2_sf(double x, double k) {
  check_dof(k);
  if (x < 0.0 || std::isnan(x)) throw InvalidInput(fmt::format("chi2_sf: x = {} must be non-negative", x));
  return gamma_q(0.5 * k, 0.5 * x);
}

double chi2_pdf(double x, double k) {
  check_dof(k);
  if (x < 0.0) return 0.0;
  const double a = 0.5 * k;
  if (x == 0.0) return k < 2.0 ? std::numeric_limits<double>::infinity() : (k == 2.0 ? 0.5 : 0.0);
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::numbers::ln2 - std::lgamma(a));
}

double chi2_inv(double p, double k) {
  check_dof(k);
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput(fmt::format("chi2_inv: probability {} outside (0, 1)", p));
  // Work on whichever tail keeps the target away from 1.
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;
  auto residual = [&](double x) { return upper ? chi2_sf(x, k) - target : chi2_cdf(x, k) - target; };
  // residual is decreasing in x for the upper tail and increasing otherwise.
  const double sign = upper ? -1.0 : 1.0;

  double lo = 0.0;
  double hi = std::max(1.0, k + 10.0 * std::sqrt(2.0 * k));
  while (sign * residual(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw NumericError("chi2_inv: failed to bracket the quantile");
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 500; ++it) {
    const double r = residual(x);
    if (r == 0.0) return x;
    if (sign * r < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = sign * chi2_pdf(x, k);
    double next = slope != 0.0 && std::isfinite(slope) ? x - r / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * kEps * std::abs(x) || hi - lo <= 4.0 * kEps * hi) return next;
    x = next;
  }
  return x;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double standardized_squared_error(const FrameError& e, const ErrorModel& m) {
  return e.dx * e.dx / (m.sigma_x * m.sigma_x) + e.dy * e.dy / (m.sigma_y * m.sigma_y);
}

ChiSquareReport chi2_statistic(std::span<const FrameError> errors, const ErrorModel& m) {
  if (errors.empty()) throw InvalidInput("chi2_statistic: no frame errors");
  m.validate();
  ChiSquareReport r;
  for (const auto& e : errors) {
    if (!std::isfinite(e.dx) || !std::isfinite(e.dy)) {
      throw NumericError(fmt::format("non-finite error at frame {}", e.frame));
    }
    r.statistic += standardized_squared_error(e, m);
  }
  r.dof = static_cast<int>(2 * errors.size());
  const double log_p = log_gamma_q(0.5 * r.dof, 0.5 * r.statistic);
  if (log_p < std::log(kMinPositiveDouble)) {
    r.p_value = 0.0;
    r.underflow = true;
  } else {
    r.p_value = std::clamp(std::exp(log_p), 0.0, 1.0);
  }
  return r;
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw InvalidInput("empirical CDF needs at least one sample");
  for (double v : sorted_) {
    if (std::isnan(v)) throw NumericError("empirical CDF sample is NaN");
  }
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::cdf(double x) const {
  if (sorted_.empty()) throw PreconditionError("empty empirical CDF");
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double EmpiricalCdf::quantile(double q) const {
  if (sorted_.empty()) throw PreconditionError("empty empirical CDF");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput(fmt::format("quantile level {} outside [0, 1]", q));
  const double pos = q * static_cast<double>(sorted_.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted_.size()) return sorted_.back();
  const double frac = pos - static_cast<double>(i);
  return sorted_[i] + frac * (sorted_[i + 1] - sorted_[i]);
}

double EmpiricalCdf::quantile_standard_error(double q) const {
  const std::size_t n = sorted_.size();
  if (n < 3 || q <= 0.0 || q >= 1.0) return std::numeric_limits<double>::infinity();
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n))));
  const auto k = static_cast<std::size_t>(q * static_cast<double>(n - 1));
  const std::size_t lo = k >= h ? k - h : 0;
  const std::size_t hi = std::min(n - 1, k + h);
  const double spread = sorted_[hi] - sorted_[lo];
  if (!(spread > 0.0)) return 0.0;
  const double density = static_cast<double>(hi - lo) / static_cast<double>(n) / spread;
  return std::sqrt(q * (1.0 - q) / static_cast<double>(n)) / density;
}

EmpiricalCdf simulate_distance_cdf(const ErrorModel& m, std::size_t samples, std::uint64_t seed) {
  m.validate();
  if (samples < 1) throw InvalidInput("simulation needs at least one sample");
  std::vector<double> d(samples);
  const std::uint64_t key = hash_combine(seed, 0x64697374ULL);
  constexpr std::size_t kBlock = 1 << 14;
  const std::size_t blocks = (samples + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(samples, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      CounterRng rng(key, 2 * static_cast<std::uint64_t>(i));
      const double zx = rng.normal();
      const double zy = rng.normal();
      d[i] = std::hypot(m.sigma_x * zx, m.sigma_y * zy);
    }
  });
  return EmpiricalCdf(std::move(d));
}

Threshold distance_threshold(const EmpiricalCdf& cdf, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput(fmt::format("significance {} outside (0, 1)", alpha));
  return {alpha, cdf.quantile(1.0 - alpha), cdf.quantile_standard_error(1.0 - alpha)};
}

Threshold distance_threshold(const ErrorModel& m, double alpha, std::size_t samples, std::uint64_t seed) {
  return distance_threshold(simulate_distance_cdf(m, samples, seed), alpha);
}

std::vector<PpPoint> pp_plot_data(std::span<const double> standardized) {
  if (standardized.empty()) throw InvalidInput("P-P plot needs at least one error");
  std::vector<double> s(standardized.begin(), standardized.end());
  std::sort(s.begin(), s.end());
  std::vector<PpPoint> out;
  out.reserve(s.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back({chi2_cdf(s[i], 2.0), static_cast<double>(i + 1) / n});
  }
  return out;
}

std::vector<PpPoint> pp_plot_data(std::span<const FrameError> errors, const ErrorModel& m) {
  if (errors.empty()) throw InvalidInput("P-P plot needs at least one error");
  m.validate();
  std::vector<double> s;
  s.reserve(errors.size());
  for (const auto& e : errors) s.push_back(standardized_squared_error(e, m));
  return pp_plot_data(s);
}

double pp_max_deviation(std::span<const PpPoint> points) {
  double worst = 0.0;
  for (const auto& p : points) worst = std::max(worst, std::abs(p.empirical - p.theoretical));
  return worst;
}

double weighted_error(double e, const EmpiricalCdf& distance_cdf) {
  if (!(e >= 0.0)) throw InvalidInput(fmt::format("weighted_error: error {} must be non-negative", e));
  const double f = distance_cdf.cdf(e);
  if (f >= 1.0) return std::numeric_limits<double>::infinity();
  return e / (1.0 - f);
}

NormalCheck normal_cdf_check(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 10) throw InvalidInput(fmt::format("normal_cdf_check needs at least 10 values, got {}", n));
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw InvalidInput("normal_cdf_check: values have zero variance");

  std::vector<double> z(values.begin(), values.end());
  for (double& v : z) v /= sd;
  std::sort(z.begin(), z.end());
  NormalCheck out;
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && z[j] == z[i]) ++j;
    const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) / dn;
    const double phi = normal_cdf(z[i]);
    out.curve.push_back({z[i], mid, phi});
    out.max_deviation = std::max(out.max_deviation, std::abs(mid - phi));
    i = j;
  }
  return out;
}

std::vector<Relabel> read_relabels_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "image_id,attempt,x,y") {
    throw FormatError(path.string() + ": expected header image_id,attempt,x,y");
  }
  std::vector<Relabel> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, attempt, x, y;
    if (!std::getline(ss, id, ',') || !std::getline(ss, attempt, ',') || !std::getline(ss, x, ',') ||
        !std::getline(ss, y)) {
      throw FormatError(fmt::format("{}:{}: expected four fields", path.string(), lineno));
    }
    try {
      out.push_back({id, std::stoi(attempt), std::stod(x), std::stod(y)});
    } catch (const std::logic_error&) {
      throw FormatError(fmt::format("{}:{}: malformed row '{}'", path.string(), lineno, line));
    }
  }
  return out;
}

ErrorModel calibrate_error_model(std::span<const Relabel> relabels, const std::string& condition) {
  std::map<std::string, std::vector<const Relabel*>> groups;
  for (const auto& r : relabels) groups[r.image_id].push_back(&r);
  const std::size_t n = relabels.size();
  if (n <= groups.size()) {
    throw InvalidInput("calibration needs at least one image with two or more labelling attempts");
  }
  double ssx = 0.0;
  double ssy = 0.0;
  for (const auto& [id, rows] : groups) {
    double mx = 0.0;
    double my = 0.0;
    for (const auto* r : rows) {
      mx += r->x;
      my += r->y;
    }
    mx /= static_cast<double>(rows.size());
    my /= static_cast<double>(rows.size());
    for (const auto* r : rows) {
      ssx += (r->x - mx) * (r->x - mx);
      ssy += (r->y - my) * (r->y - my);
    }
  }
  const double dof = static_cast<double>(n - groups.size());
  ErrorModel m{condition, std::sqrt(ssx / dof), std::sqrt(ssy / dof)};
  if (!(m.sigma_x > 0.0) || !(m.sigma_y > 0.0)) {
    throw InvalidInput(fmt::format("degenerate relabels: sigma = ({}, {}); attempts must differ", m.sigma_x,
                                   m.sigma_y));
  }
  return m;
}

std::vector<ErrorModel> builtin_error_models() {
  return {{"static_face_mole", 0.773, 1.010},
          {"static_nose_tip", 1.165, 1.256},
          {"bike_face_mole", 1.206, 1.179},
          {"bike_nose_tip", 1.337, 1.319},
          {"pd_hand_mole", 1.162, 0.915}};
}

std::vector<ErrorModel> load_error_models(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<ErrorModel> out;
  try {
    const auto j = nlohmann::json::parse(f);
    for (const auto& c : j.at("conditions")) {
      out.push_back({c.at("name").get<std::string>(), c.at("sigma_x").get<double>(), c.at("sigma_y").get<double>()});
      out.back().validate();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed error-model catalog: " + e.what());
  }
  return out;
}

void save_error_models(std::span<const ErrorModel> models, const std::filesystem::path& path) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : models) list.push_back({{"name", m.condition}, {"sigma_x", m.sigma_x}, {"sigma_y", m.sigma_y}});
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << nlohmann::json{{"conditions", list}}.dump(2) << '\n';
}

ErrorModel find_error_model(std::span<const ErrorModel> catalog, const std::string& condition) {
  for (const auto& m : catalog) {
    if (m.condition == condition) return m;
  }
  std::string names;
  for (const auto& m : catalog) names += (names.empty() ? "" : ", ") + m.condition;
  throw InvalidInput(fmt::format("unknown condition '{}' (known: {})", condition, names));
}

}  // namespace dfetrack::stats
