#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dfetrack::stats {

// Per-condition spread of human relabelling errors, in pixels.
struct ErrorModel {
  std::string condition;
  double sigma_x = 1.0;
  double sigma_y = 1.0;

  void validate() const;
};

// Prediction minus ground truth for one frame.
struct FrameError {
  int frame = 0;
  double dx = 0.0;
  double dy = 0.0;
};

struct ChiSquareReport {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool underflow = false;  // p below the smallest positive double, reported as 0
};

// Smallest positive (subnormal) double.
inline constexpr double kMinPositiveDouble = 4.9406564584124654e-324;
inline constexpr std::size_t kDefaultSimulationSamples = 1'000'000;

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);
// Natural log of Q(a, x); finite even where Q underflows.
double log_gamma_q(double a, double x);

double chi2_cdf(double x, double k);
double chi2_sf(double x, double k);  // survival function 1 - cdf
double chi2_pdf(double x, double k);
// Quantile: x with chi2_cdf(x, k) = p, p in (0, 1).
double chi2_inv(double p, double k);

double normal_cdf(double z);

double standardized_squared_error(const FrameError& e, const ErrorModel& m);
ChiSquareReport chi2_statistic(std::span<const FrameError> errors, const ErrorModel& m);

// Sorted-sample empirical distribution.
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  explicit EmpiricalCdf(std::vector<double> samples);

  // Fraction of samples <= x.
  double cdf(double x) const;
  // Linear interpolation between order statistics at position q * (n - 1).
  double quantile(double q) const;
  // Monte-Carlo standard error of quantile(q), from the asymptotic variance
  // q(1-q) / (n f^2) with the density f estimated from order-statistic
  // spacing.
  double quantile_standard_error(double q) const;

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

// Distances sqrt(dx^2 + dy^2) with dx ~ N(0, sx^2), dy ~ N(0, sy^2). Sample
// i is a pure function of (seed, i), so the result does not depend on the
// number of worker threads.
EmpiricalCdf simulate_distance_cdf(const ErrorModel& m, std::size_t samples = kDefaultSimulationSamples,
                                   std::uint64_t seed = 0);

struct Threshold {
  double alpha = 0.0;
  double pixels = 0.0;
  double standard_error = 0.0;
};

// (1 - alpha) quantile of the simulated distance distribution.
Threshold distance_threshold(const EmpiricalCdf& cdf, double alpha);
Threshold distance_threshold(const ErrorModel& m, double alpha,
                             std::size_t samples = kDefaultSimulationSamples, std::uint64_t seed = 0);

struct PpPoint {
  double theoretical = 0.0;  // chi-square(2) CDF at the i-th smallest standardized error
  double empirical = 0.0;    // i / n
};

std::vector<PpPoint> pp_plot_data(std::span<const FrameError> errors, const ErrorModel& m);
// Same construction for precomputed standardized squared errors.
std::vector<PpPoint> pp_plot_data(std::span<const double> standardized);
double pp_max_deviation(std::span<const PpPoint> points);

// e / (1 - F(e)); +infinity when F(e) = 1.
double weighted_error(double e, const EmpiricalCdf& distance_cdf);

struct NormalCheckPoint {
  double z = 0.0;
  double empirical = 0.0;  // midpoint of the ECDF step at z
  double normal = 0.0;
};

struct NormalCheck {
  double max_deviation = 0.0;
  std::vector<NormalCheckPoint> curve;
};

// Divides by the sample standard deviation (zero-mean null), then compares
// the empirical CDF against the standard normal at every distinct value.
NormalCheck normal_cdf_check(std::span<const double> values);

// One relabelling attempt of a feature in one image.
struct Relabel {
  std::string image_id;
  int attempt = 0;
  double x = 0.0;
  double y = 0.0;
};

std::vector<Relabel> read_relabels_csv(const std::filesystem::path& path);

// Residuals against each image's mean label, pooled across images with
// N - groups degrees of freedom.
ErrorModel calibrate_error_model(std::span<const Relabel> relabels, const std::string& condition);

// The five calibrated conditions shipped with the library.
std::vector<ErrorModel> builtin_error_models();
std::vector<ErrorModel> load_error_models(const std::filesystem::path& path);
void save_error_models(std::span<const ErrorModel> models, const std::filesystem::path& path);
ErrorModel find_error_model(std::span<const ErrorModel> catalog, const std::string& condition);

}  // namespace dfetrack::stats
