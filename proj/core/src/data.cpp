#include "tfm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace tfm {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  field = trim(field);
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc{} || ptr != last) {
    parse_fail(line_no, "non-numeric value '" + std::string(field) + "' in column " + std::string(column));
  }
  if (!std::isfinite(value)) {
    parse_fail(line_no, "non-finite value in column " + std::string(column));
  }
  return value;
}

struct PendingTrajectory {
  std::string id;
  std::vector<double> times;
  std::vector<double> states;
  std::vector<double> cond;
  std::size_t first_line = 0;
};

}  // namespace

void validate(const Trajectory& traj) {
  const auto where = [&] { return "trajectory '" + traj.id + "': "; };
  if (traj.length() < 2) throw DataError(where() + "needs at least 2 observations");
  if (traj.states.rows() != traj.length()) throw DataError(where() + "times/states length mismatch");
  if (traj.dim() < 1) throw DataError(where() + "state dimension must be >= 1");
  if (!traj.times.allFinite() || !traj.states.allFinite() || !traj.cond.allFinite()) {
    throw DataError(where() + "non-finite entry");
  }
  for (Index i = 1; i < traj.length(); ++i) {
    if (!(traj.times[i] > traj.times[i - 1])) {
      throw DataError(where() + "times not strictly increasing at index " + std::to_string(i));
    }
  }
}

NormStats NormStats::identity(Index dim) {
  return NormStats{Vector::Zero(dim), Vector::Ones(dim), 1.0};
}

Matrix NormStats::normalize_states(const Matrix& states) const {
  return (states.rowwise() - state_mean.transpose()).array().rowwise() / state_std.transpose().array();
}

Matrix NormStats::denormalize_states(const Matrix& states) const {
  return (states.array().rowwise() * state_std.transpose().array()).rowwise() + state_mean.transpose().array();
}

Trajectory NormStats::normalize(const Trajectory& traj) const {
  return Trajectory{traj.id, traj.times / time_scale, normalize_states(traj.states), traj.cond};
}

Trajectory NormStats::denormalize(const Trajectory& traj) const {
  return Trajectory{traj.id, traj.times * time_scale, denormalize_states(traj.states), traj.cond};
}

Index Dataset::transition_count() const {
  Index n = 0;
  for (const auto& traj : trajectories) n += traj.length() - 1;
  return n;
}

Dataset make_dataset(std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw DataError("no trajectories");
  Dataset ds;
  ds.dim_state = trajectories.front().dim();
  ds.dim_cond = trajectories.front().cond_dim();
  for (const auto& traj : trajectories) {
    validate(traj);
    if (traj.dim() != ds.dim_state || traj.cond_dim() != ds.dim_cond) {
      throw DataError("trajectory '" + traj.id + "': dimensions differ from the rest of the dataset");
    }
  }
  ds.trajectories = std::move(trajectories);
  ds.norm = NormStats::identity(ds.dim_state);
  return ds;
}

Trajectory generate_oscillator(const OscillatorParams& p, std::string id) {
  if (!(p.dt > 0.0) || !(p.m > 0.0) || p.n_steps < 1) {
    throw std::invalid_argument("oscillator params require dt > 0, m > 0, n_steps >= 1");
  }
  Trajectory traj;
  traj.id = std::move(id);
  traj.times.resize(p.n_steps);
  traj.states.resize(p.n_steps, 1);
  traj.cond = Vector::Constant(1, p.c);

  double x = p.x0;
  double v = p.v0;
  for (int i = 0; i < p.n_steps; ++i) {
    traj.times[i] = p.dt * i;
    if (i > 0) {
      const double step = traj.times[i] - traj.times[i - 1];
      const double x_next = x + v * step;
      const double v_next = v + (-(p.c / p.m) * v - (p.k / p.m) * x) * step;
      x = x_next;
      v = v_next;
    }
    traj.states(i, 0) = x;
  }
  return traj;
}

Dataset make_oscillator_benchmark() {
  std::vector<Trajectory> trajs;
  for (double c : kBenchmarkDamping) {
    OscillatorParams p;
    p.c = c;
    std::ostringstream id;
    id << "osc_c" << c;
    auto traj = generate_oscillator(p, id.str());
    traj.times /= kBenchmarkTimeDivisor;
    trajs.push_back(std::move(traj));
  }
  return make_dataset(std::move(trajs));
}

NormStats fit_norm(const Dataset& ds) {
  if (ds.empty()) throw DataError("no trajectories");
  const Index d = ds.dim_state;
  Vector sum = Vector::Zero(d);
  Index rows = 0;
  double max_time = 0.0;
  double min_time = 0.0;
  bool first = true;
  for (const auto& traj : ds.trajectories) {
    sum += traj.states.colwise().sum().transpose();
    rows += traj.states.rows();
    max_time = first ? traj.times.maxCoeff() : std::max(max_time, traj.times.maxCoeff());
    min_time = first ? traj.times.minCoeff() : std::min(min_time, traj.times.minCoeff());
    first = false;
  }
  if (min_time < 0.0) throw DataError("negative observation times cannot be scaled into [0, 1]");
  const Vector mean = sum / static_cast<double>(rows);
  Vector sq = Vector::Zero(d);
  for (const auto& traj : ds.trajectories) {
    sq += (traj.states.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  Vector std_dev = (sq / static_cast<double>(rows)).array().sqrt();
  for (Index j = 0; j < d; ++j) {
    // Constant dimension: keep it usable instead of dividing by zero.
    if (!(std_dev[j] > 0.0)) std_dev[j] = 1.0;
  }
  const double time_scale = max_time > 1.0 ? max_time : 1.0;

  std::vector<double> gaps;
  double increment_sq = 0.0;
  for (const auto& traj : ds.trajectories) {
    for (Index i = 1; i < traj.length(); ++i) {
      gaps.push_back((traj.times[i] - traj.times[i - 1]) / time_scale);
      increment_sq += ((traj.states.row(i) - traj.states.row(i - 1)).array() / std_dev.transpose().array()).square().sum();
    }
  }
  double interval_unit = 1.0;
  double error_unit = 1.0;
  if (!gaps.empty()) {
    const auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
    std::nth_element(gaps.begin(), mid, gaps.end());
    interval_unit = gaps.size() % 2 == 1 ? *mid : 0.5 * (*mid + *std::max_element(gaps.begin(), mid));
    increment_sq /= static_cast<double>(gaps.size());
    if (increment_sq > 0.0) error_unit = increment_sq;
  }
  return NormStats{mean, std_dev, time_scale, interval_unit, error_unit};
}

Dataset normalize_dataset(const Dataset& ds) { return apply_norm(ds, fit_norm(ds)); }

Dataset apply_norm(const Dataset& ds, const NormStats& norm) {
  if (ds.empty()) throw DataError("no trajectories");
  if (norm.state_mean.size() != ds.dim_state || norm.state_std.size() != ds.dim_state) {
    throw DataError("normalization statistics do not match the state dimension");
  }
  Dataset out;
  out.dim_state = ds.dim_state;
  out.dim_cond = ds.dim_cond;
  out.norm = norm;
  out.trajectories.reserve(ds.size());
  for (const auto& traj : ds.trajectories) out.trajectories.push_back(norm.normalize(traj));
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Dataset read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("no trajectories");
  ++line_no;
  const auto header = split_fields(trim(line));
  if (header.size() < 3 || trim(header[0]) != "traj_id" || trim(header[1]) != "t") {
    parse_fail(line_no, "header must start with traj_id,t,x0");
  }
  Index d = 0;
  Index e = 0;
  for (std::size_t i = 2; i < header.size(); ++i) {
    const auto name = std::string(trim(header[i]));
    if (e == 0 && name == "x" + std::to_string(d)) {
      ++d;
    } else if (name == "c" + std::to_string(e)) {
      ++e;
    } else {
      parse_fail(line_no, "unexpected column '" + name + "'");
    }
  }
  if (d == 0) parse_fail(line_no, "no state columns");
  const std::size_t n_cols = 2 + static_cast<std::size_t>(d + e);

  std::vector<PendingTrajectory> pending;
  std::map<std::string, std::size_t, std::less<>> by_id;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_fields(body);
    if (fields.size() != n_cols) {
      parse_fail(line_no, "expected " + std::to_string(n_cols) + " columns, found " + std::to_string(fields.size()));
    }
    const auto id = std::string(trim(fields[0]));
    if (id.empty()) parse_fail(line_no, "empty traj_id");
    auto [it, inserted] = by_id.try_emplace(id, pending.size());
    if (inserted) pending.push_back(PendingTrajectory{id, {}, {}, {}, line_no});
    auto& traj = pending[it->second];

    const double t = parse_number(fields[1], line_no, "t");
    if (!traj.times.empty() && !(t > traj.times.back())) {
      parse_fail(line_no, "times of trajectory '" + id + "' are not strictly increasing");
    }
    traj.times.push_back(t);
    for (Index j = 0; j < d; ++j) {
      traj.states.push_back(parse_number(fields[2 + j], line_no, "x" + std::to_string(j)));
    }
    std::vector<double> cond;
    for (Index j = 0; j < e; ++j) {
      cond.push_back(parse_number(fields[2 + d + j], line_no, "c" + std::to_string(j)));
    }
    if (inserted) {
      traj.cond = std::move(cond);
    } else if (cond != traj.cond) {
      parse_fail(line_no, "conditions of trajectory '" + id + "' change within the trajectory");
    }
  }
  if (pending.empty()) throw DataError("no trajectories");

  std::vector<Trajectory> trajs;
  trajs.reserve(pending.size());
  for (auto& p : pending) {
    const Index rows = static_cast<Index>(p.times.size());
    if (rows < 2) parse_fail(p.first_line, "trajectory '" + p.id + "' has fewer than 2 observations");
    Trajectory traj;
    traj.id = p.id;
    traj.times = Eigen::Map<const Vector>(p.times.data(), rows);
    traj.states = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        p.states.data(), rows, d);
    traj.cond = Eigen::Map<const Vector>(p.cond.data(), e);
    trajs.push_back(std::move(traj));
  }
  return make_dataset(std::move(trajs));
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_csv(in);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << "traj_id,t";
  for (Index j = 0; j < ds.dim_state; ++j) out << ",x" << j;
  for (Index j = 0; j < ds.dim_cond; ++j) out << ",c" << j;
  out << '\n';
  for (const auto& traj : ds.trajectories) {
    for (Index i = 0; i < traj.length(); ++i) {
      out << traj.id << ',' << format_double(traj.times[i]);
      for (Index j = 0; j < traj.dim(); ++j) out << ',' << format_double(traj.states(i, j));
      for (Index j = 0; j < traj.cond_dim(); ++j) out << ',' << format_double(traj.cond[j]);
      out << '\n';
    }
  }
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace tfm
