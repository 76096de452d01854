#include "tfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tfm/trainer.hpp"

namespace tfm {

double mean_mse(const RolloutResult& pred, const Trajectory& truth) {
  const Index T = truth.length();
  if (!pred.complete || pred.pred_states.rows() != T || pred.times.size() != T) {
    throw std::invalid_argument("prediction for '" + truth.id + "' is not aligned with its observations");
  }
  if (pred.pred_states.cols() != truth.dim()) throw std::invalid_argument("prediction dimension mismatch");
  double sum = 0.0;
  for (Index i = 1; i < T; ++i) sum += (pred.pred_states.row(i) - truth.states.row(i)).squaredNorm();
  return sum / static_cast<double>(T - 1);
}

double mean_mse(const std::vector<RolloutResult>& preds, const Dataset& truth) {
  if (preds.size() != truth.size() || preds.empty()) throw std::invalid_argument("one prediction per trajectory required");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += mean_mse(preds[i], truth.trajectories[i]);
  return sum / static_cast<double>(preds.size());
}

double median_pairwise_distance(const Matrix& pool) {
  constexpr Index kMaxRows = 2000;
  const Index stride = std::max<Index>(1, (pool.rows() + kMaxRows - 1) / kMaxRows);
  std::vector<Index> rows;
  for (Index i = 0; i < pool.rows(); i += stride) rows.push_back(i);
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - (rows.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) dists.push_back((pool.row(rows[i]) - pool.row(rows[j])).norm());
  }
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  return median > 0.0 ? median : 1.0;
}

std::vector<double> bandwidth_ladder(const Matrix& pool, const std::vector<double>& multipliers) {
  const double base = median_pairwise_distance(pool);
  std::vector<double> out;
  for (double m : multipliers) out.push_back(m * base);
  return out;
}

namespace {

double mean_kernel(const Matrix& a, const Matrix& b, double gamma) {
  double sum = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.rows(); ++j) sum += std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
  }
  return sum / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

// Orders the two sample sets so that swapping the arguments of rbf_mmd
// reproduces the same floating-point operations.
bool canonical_first(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

double rbf_mmd(const Matrix& a_in, const Matrix& b_in, const std::vector<double>& bandwidths) {
  if (a_in.rows() == 0 || b_in.rows() == 0) throw std::invalid_argument("rbf_mmd needs nonempty sample sets");
  if (a_in.cols() != b_in.cols()) throw std::invalid_argument("rbf_mmd sample dimension mismatch");
  if (bandwidths.empty()) throw std::invalid_argument("rbf_mmd needs at least one bandwidth");
  const bool keep = canonical_first(a_in, b_in) || !canonical_first(b_in, a_in);
  const Matrix& a = keep ? a_in : b_in;
  const Matrix& b = keep ? b_in : a_in;
  double total = 0.0;
  for (double h : bandwidths) {
    if (!(h > 0.0)) throw std::invalid_argument("bandwidths must be positive");
    const double gamma = 1.0 / (2.0 * h * h);
    total += mean_kernel(a, a, gamma) + mean_kernel(b, b, gamma) - 2.0 * mean_kernel(a, b, gamma);
  }
  return total / static_cast<double>(bandwidths.size());
}

double increment_mmd(const std::vector<std::vector<RolloutResult>>& ensembles, const Dataset& truth,
                     std::vector<double>* per_traj) {
  if (ensembles.size() != truth.size() || truth.empty()) throw std::invalid_argument("one ensemble per trajectory required");
  const Index d = truth.dim_state;
  Index max_len = 0;
  std::vector<Vector> pooled_true;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& traj = truth.trajectories[i];
    if (ensembles[i].empty()) throw std::invalid_argument("empty ensemble for '" + traj.id + "'");
    for (const auto& draw : ensembles[i]) {
      if (!draw.complete || draw.pred_states.rows() != traj.length()) {
        throw std::invalid_argument("prediction for '" + traj.id + "' is not aligned with its observations");
      }
    }
    max_len = std::max(max_len, traj.length());
    for (Index t = 1; t < traj.length(); ++t) pooled_true.push_back((traj.states.row(t) - traj.states.row(t - 1)).transpose());
  }
  Matrix pool(static_cast<Index>(pooled_true.size()), d);
  for (std::size_t r = 0; r < pooled_true.size(); ++r) pool.row(static_cast<Index>(r)) = pooled_true[r].transpose();
  const auto bandwidths = bandwidth_ladder(pool);

  const auto increments = [&](std::size_t i, Index t) {
    const auto& traj = truth.trajectories[i];
    Matrix out(static_cast<Index>(ensembles[i].size()), d);
    for (std::size_t r = 0; r < ensembles[i].size(); ++r) {
      out.row(static_cast<Index>(r)) = ensembles[i][r].pred_states.row(t) - traj.states.row(t - 1);
    }
    return out;
  };

  double total = 0.0;
  for (Index t = 1; t < max_len; ++t) {
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth.trajectories[i].length() > t) present.push_back(i);
    }
    Index n_pred = 0;
    for (auto i : present) n_pred += static_cast<Index>(ensembles[i].size());
    Matrix pred(n_pred, d);
    Matrix real(static_cast<Index>(present.size()), d);
    Index row = 0;
    for (std::size_t p = 0; p < present.size(); ++p) {
      const auto i = present[p];
      const Matrix inc = increments(i, t);
      pred.middleRows(row, inc.rows()) = inc;
      row += inc.rows();
      real.row(static_cast<Index>(p)) = truth.trajectories[i].states.row(t) - truth.trajectories[i].states.row(t - 1);
    }
    total += rbf_mmd(pred, real, bandwidths);
  }

  if (per_traj) {
    per_traj->clear();
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const auto& traj = truth.trajectories[i];
      double sum = 0.0;
      for (Index t = 1; t < traj.length(); ++t) {
        const Matrix real = traj.states.row(t) - traj.states.row(t - 1);
        sum += rbf_mmd(increments(i, t), real, bandwidths);
      }
      per_traj->push_back(sum / static_cast<double>(traj.length() - 1));
    }
  }
  return total / static_cast<double>(max_len - 1);
}

double uncertainty_mse(const TfmModel& model, const Dataset& ds, Index n_samples, std::uint64_t seed) {
  if (ds.empty()) throw DataError("no trajectories");
  auto rng = make_stream(seed, "uncertainty_eval");
  const auto batch = sample_batch(ds, model.config.sampler, n_samples, rng);
  const Matrix inputs = build_inputs(model, batch);
  const Matrix predictions = model.predictor.forward(inputs);
  const Matrix target = squared_error_targets(model, batch, predictions);
  return (predicted_squared_error(model, inputs) - target).squaredNorm() / static_cast<double>(n_samples);
}

}  // namespace tfm
