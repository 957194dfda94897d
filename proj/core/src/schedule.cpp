#include "symdiff/schedule.hpp"

#include "symdiff/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace symdiff {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double omega(double t, double nu_start, double nu_end) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("omega: t must lie in [0, 1]");
  const double s0 = sigmoid(nu_start);
  const double s1 = sigmoid(nu_end);
  if (t == 0.0) return 0.0;
  if (t == 1.0) return 1.0;
  return (sigmoid(t * (nu_end - nu_start) + nu_start) - s0) / (s1 - s0);
}

NoiseSchedule NoiseSchedule::sigmoid(const ScheduleParams& p) {
  if (p.steps < 2) throw ValidationError("schedule: steps must be >= 2");
  if (!(p.power > 0.0)) throw ValidationError("schedule: power must be positive");
  if (!(p.nu_end > p.nu_start)) throw ValidationError("schedule: nu_end must exceed nu_start");

  NoiseSchedule s;
  s.params_ = p;
  s.kind_ = "sigmoid";
  s.power_ = p.power;
  s.cum_var_.assign(p.steps + 1, 0.0);
  for (int k = 1; k <= p.steps; ++k) {
    const double w = omega(static_cast<double>(k - 1) / p.steps, p.nu_start, p.nu_end);
    double db = std::numeric_limits<double>::infinity();
    if (w > 0.0) db = p.xi1 * 10.0 * std::log10((1.0 - w) / w) + p.xi2;
    db = std::min(db, p.snr_cap_db);
    s.cum_var_[k] = p.power * std::pow(10.0, -db / 10.0);
  }
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::linear(int steps, double power, double final_cum_var) {
  if (steps < 2) throw ValidationError("schedule: steps must be >= 2");
  if (!(final_cum_var > 0.0)) throw ValidationError("schedule: final variance must be positive");
  std::vector<double> cum(steps + 1, 0.0);
  for (int k = 1; k <= steps; ++k) cum[k] = final_cum_var * k / steps;
  return from_cumulative(std::move(cum), power, "linear");
}

NoiseSchedule NoiseSchedule::from_cumulative(std::vector<double> cum_var, double power,
                                             std::string kind) {
  NoiseSchedule s;
  s.kind_ = std::move(kind);
  s.power_ = power;
  s.params_.steps = static_cast<int>(cum_var.size()) - 1;
  s.params_.power = power;
  s.cum_var_ = std::move(cum_var);
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (cum_var_.size() < 3) throw ValidationError("schedule: need at least 2 steps");
  if (!(power_ > 0.0)) throw ValidationError("schedule: power must be positive");
  if (cum_var_[0] != 0.0) throw ValidationError("schedule: cumulative variance at k=0 must be 0");
  for (std::size_t k = 1; k < cum_var_.size(); ++k) {
    if (!std::isfinite(cum_var_[k]) || !(cum_var_[k] > cum_var_[k - 1])) {
      throw ValidationError("schedule: cumulative variance not strictly increasing at k=" +
                            std::to_string(k));
    }
  }
}

double NoiseSchedule::time(int k) const {
  if (k < 0 || k > steps()) throw ValidationError("schedule: step out of range");
  return static_cast<double>(k) / steps();
}

double NoiseSchedule::cum_var(int k) const {
  if (k < 0 || k > steps()) throw ValidationError("schedule: step out of range");
  return cum_var_[k];
}

double NoiseSchedule::step_var(int k) const {
  if (k < 1 || k > steps()) throw ValidationError("schedule: step out of range");
  return cum_var_[k] - cum_var_[k - 1];
}

double NoiseSchedule::snr_linear(int k) const {
  const double v = cum_var(k);
  return v == 0.0 ? std::numeric_limits<double>::infinity() : power_ / v;
}

double NoiseSchedule::snr_db(int k) const { return 10.0 * std::log10(snr_linear(k)); }

int NoiseSchedule::starting_index(double eta, bool db_scale) const {
  if (!(eta > 0.0)) throw ValidationError("starting_index: SNR must be positive");
  int best = 1;
  double best_gap = std::numeric_limits<double>::infinity();
  const double target = db_scale ? 10.0 * std::log10(eta) : eta;
  for (int k = 1; k <= steps(); ++k) {
    const double v = db_scale ? snr_db(k) : snr_linear(k);
    const double gap = std::abs(target - v);
    if (gap < best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  return best;
}

std::string NoiseSchedule::to_csv() const {
  std::ostringstream os;
  os << "k,t_k,eta_dB,cum_var,step_var\n";
  for (int k = 0; k <= steps(); ++k) {
    os << k << ',' << fmt_double(time(k)) << ',';
    os << (k == 0 ? std::string("inf") : fmt_double(snr_db(k))) << ',';
    os << fmt_double(cum_var_[k]) << ',';
    os << (k == 0 ? std::string("0") : fmt_double(step_var(k))) << '\n';
  }
  return os.str();
}

}  // namespace symdiff
