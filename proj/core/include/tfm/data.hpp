#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tfm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One irregularly sampled multivariate series with static conditions.
/// `states` holds one observation per row, aligned with `times`.
struct Trajectory {
  std::string id;
  Vector times;
  Matrix states;
  Vector cond;

  Index length() const { return times.size(); }
  Index dim() const { return states.cols(); }
  Index cond_dim() const { return cond.size(); }
};

/// Throws DataError unless times are strictly increasing, T >= 2, d >= 1 and
/// every entry is finite.
void validate(const Trajectory& traj);

/// Per-dimension z-scoring constants plus the time divisor.
struct NormStats {
  Vector state_mean;
  Vector state_std;
  double time_scale = 1.0;
  /// Output units of the auxiliary heads, in normalized coordinates: the
  /// median observation interval (time head) and the mean squared one-step
  /// increment (sigma head).
  double interval_unit = 1.0;
  double error_unit = 1.0;

  static NormStats identity(Index dim);

  Matrix normalize_states(const Matrix& states) const;
  Matrix denormalize_states(const Matrix& states) const;
  Trajectory normalize(const Trajectory& traj) const;
  Trajectory denormalize(const Trajectory& traj) const;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  Index dim_state = 0;
  Index dim_cond = 0;
  NormStats norm;

  bool empty() const { return trajectories.empty(); }
  std::size_t size() const { return trajectories.size(); }
  /// Number of observation-to-observation segments across all trajectories.
  Index transition_count() const;
};

/// Validates every trajectory, checks shared dimensions, attaches identity
/// normalization. Throws DataError("no trajectories") on empty input.
Dataset make_dataset(std::vector<Trajectory> trajectories);

/// Damped spring-mass system stepped with the explicit position/velocity
/// recurrence on the grid t_i = i * dt.
struct OscillatorParams {
  double c = 0.0;
  double k = 1.0;
  double m = 1.0;
  double dt = 0.1;
  int n_steps = 100;
  double x0 = 1.0;
  double v0 = 0.0;
};

/// cond is set to [c].
Trajectory generate_oscillator(const OscillatorParams& params, std::string id = {});

/// Damping coefficients of the three crossing trajectories.
inline constexpr double kBenchmarkDamping[3] = {0.25, 2.0, 3.75};
inline constexpr double kBenchmarkTimeDivisor = 10.0;

/// Three crossing oscillators (c = 0.25, 2, 3.75), 100 steps each, with times
/// divided by 10.
Dataset make_oscillator_benchmark();

/// Fits z-score statistics over every observation (population std, clamped to
/// 1 when a dimension is constant). time_scale is the max observed time when
/// it exceeds 1, otherwise 1.
NormStats fit_norm(const Dataset& ds);

/// Fits on `ds` and applies the result.
Dataset normalize_dataset(const Dataset& ds);

/// Applies previously fitted statistics (validation/test splits).
Dataset apply_norm(const Dataset& ds, const NormStats& norm);

Dataset read_csv(const std::filesystem::path& path);
Dataset read_csv(std::istream& in);
void write_csv(const Dataset& ds, const std::filesystem::path& path);
void write_csv(const Dataset& ds, std::ostream& out);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace tfm
