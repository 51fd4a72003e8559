#include "kda/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/students_t.hpp>

namespace kda::stats {

namespace {

struct Paired {
  Eigen::ArrayXd x, y;
  std::size_t dropped = 0;
};

Paired drop_undefined(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y) {
  if (x.size() != y.size()) throw analysis_error("paired vectors differ in length");
  const auto keep = x.isFinite() && y.isFinite();
  const Eigen::Index n = keep.count();
  Paired out;
  out.x.resize(n);
  out.y.resize(n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!keep(i)) continue;
    out.x(k) = x(i);
    out.y(k) = y(i);
    ++k;
  }
  out.dropped = static_cast<std::size_t>(x.size() - n);
  return out;
}

}  // namespace

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw analysis_error("correlation needs at least 3 pairs");
  const double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = std::abs(r) * std::sqrt(df / (1.0 - r2));
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

PearsonResult pearson(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y) {
  Paired p = drop_undefined(x, y);
  PearsonResult out;
  out.n = static_cast<std::size_t>(p.x.size());
  out.dropped = p.dropped;
  if (out.n < 3) throw analysis_error("correlation needs at least 3 defined pairs, got " + std::to_string(out.n));
  const Eigen::ArrayXd dx = p.x - p.x.mean();
  const Eigen::ArrayXd dy = p.y - p.y.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw analysis_error("degenerate vector");
  out.r = std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
  out.p_value = correlation_p_value(out.r, out.n);
  return out;
}

std::string stars(double p_value) {
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

std::string format_starred(double r, double p_value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, r);
  std::string s = buffer;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s + stars(p_value);
}

BandPoint LinearFit::band(double x) const {
  const double fit = predict(x);
  const double se = residual_se * std::sqrt(1.0 / static_cast<double>(n) + (x - x_mean) * (x - x_mean) / sxx);
  return {x, fit, fit - t_critical * se, fit + t_critical * se};
}

std::vector<BandPoint> LinearFit::band(std::span<const double> xs) const {
  std::vector<BandPoint> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(band(x));
  return out;
}

LinearFit linear_regression(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y) {
  Paired p = drop_undefined(x, y);
  LinearFit fit;
  fit.n = static_cast<std::size_t>(p.x.size());
  if (fit.n < 3) throw analysis_error("regression needs at least 3 defined pairs");
  fit.x_mean = p.x.mean();
  const double y_mean = p.y.mean();
  const Eigen::ArrayXd dx = p.x - fit.x_mean;
  const Eigen::ArrayXd dy = p.y - y_mean;
  fit.sxx = dx.square().sum();
  if (!(fit.sxx > 0.0)) throw analysis_error("degenerate vector: x has zero variance");
  fit.slope = (dx * dy).sum() / fit.sxx;
  fit.intercept = y_mean - fit.slope * fit.x_mean;
  const double sst = dy.square().sum();
  const double sse = (p.y - (fit.intercept + fit.slope * p.x)).square().sum();
  fit.r2 = sst > 0.0 ? std::max(0.0, 1.0 - sse / sst) : 0.0;
  const double df = static_cast<double>(fit.n - 2);
  fit.residual_se = std::sqrt(sse / df);
  fit.t_critical = boost::math::quantile(boost::math::students_t(df), 0.975);
  return fit;
}

std::vector<AcceptancePoint> acceptance_curve(const Eigen::Ref<const Eigen::ArrayXd>& scores,
                                              const std::vector<bool>& accept, std::span<const double> thresholds) {
  if (static_cast<std::size_t>(scores.size()) != accept.size())
    throw analysis_error("scores and accept labels differ in length");
  std::vector<AcceptancePoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    AcceptancePoint point;
    point.threshold = t;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores(i)) || scores(i) < t) continue;
      ++point.support;
      if (accept[static_cast<std::size_t>(i)]) ++point.accepted;
    }
    if (point.support > 0)
      point.rate = static_cast<double>(point.accepted) / static_cast<double>(point.support);
    out.push_back(point);
  }
  return out;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw input_error("invalid threshold grid");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return out;
}

}  // namespace kda::stats
