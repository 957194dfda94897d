#pragma once

#include <string>
#include <vector>

namespace symdiff {

/// Parameters of the sigmoid SNR schedule.
struct ScheduleParams {
  int steps = 100;        // T
  double nu_start = 0.025;
  double nu_end = 1.25;
  double xi1 = 0.45;      // dB scale
  double xi2 = 6.5;       // dB offset
  double power = 1.0;     // P
  double snr_cap_db = 20.0;  // applied to every step; binds at k = 1 where omega = 0
};

/// Normalized sigmoid ramp on [0, 1]: omega(0) = 0, omega(1) = 1.
/// Throws ValidationError for t outside [0, 1].
double omega(double t, double nu_start, double nu_end);

/// Variance schedule over steps k = 0..T. Index 0 is the clean state.
class NoiseSchedule {
 public:
  /// Sigmoid schedule: SNR_k[dB] = xi1 * 10 log10((1 - w)/w) + xi2 with
  /// w = omega(t_{k-1}), clamped to snr_cap_db.
  static NoiseSchedule sigmoid(const ScheduleParams& params);

  /// Cumulative variance growing linearly in k up to `final_cum_var`.
  static NoiseSchedule linear(int steps, double power, double final_cum_var);

  /// Builds from explicit cumulative variances (cum_var[0] must be 0).
  static NoiseSchedule from_cumulative(std::vector<double> cum_var, double power,
                                       std::string kind = "custom");

  int steps() const noexcept { return static_cast<int>(cum_var_.size()) - 1; }
  double power() const noexcept { return power_; }
  const std::string& kind() const noexcept { return kind_; }
  const ScheduleParams& params() const noexcept { return params_; }

  double time(int k) const;
  double cum_var(int k) const;
  /// sigma^2_{t_k} = cum_var(k) - cum_var(k-1), for k >= 1.
  double step_var(int k) const;
  /// P / cum_var(k) in dB; +inf at k = 0.
  double snr_db(int k) const;
  double snr_linear(int k) const;

  const std::vector<double>& cum_vars() const noexcept { return cum_var_; }

  /// argmin_{k in [1, T]} |eta - P / cum_var(k)|, ties to the smaller k.
  /// `eta` is linear SNR; with `db_scale` the comparison is done in dB.
  int starting_index(double eta, bool db_scale = false) const;

  /// CSV with columns k,t_k,eta_dB,cum_var,step_var.
  std::string to_csv() const;

 private:
  NoiseSchedule() = default;
  void validate() const;

  ScheduleParams params_;
  std::string kind_;
  double power_ = 1.0;
  std::vector<double> cum_var_;
};

}  // namespace symdiff
