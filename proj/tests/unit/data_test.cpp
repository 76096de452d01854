#include <cstring>
#include <sstream>

#include <gtest/gtest.h>

#include "tfm/data.hpp"
#include "tfm/rng.hpp"

namespace tfm {
namespace {

Dataset from_csv_text(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

std::string to_csv_text(const Dataset& ds) {
  std::ostringstream out;
  write_csv(ds, out);
  return out.str();
}

bool sign_change(const Vector& v) {
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i - 1] * v[i] < 0.0) return true;
  }
  return false;
}

TEST(Oscillator, FirstStepsFollowRecurrence) {
  OscillatorParams p;
  p.c = 2.0;
  const auto traj = generate_oscillator(p, "a");
  EXPECT_EQ(traj.states(0, 0), 1.0);
  EXPECT_EQ(traj.times[0], 0.0);
  // v_0 = 0 leaves the position unchanged after one step.
  EXPECT_EQ(traj.states(1, 0), 1.0);
  // v_1 = 0 + (-2*0 - 1*1) * 0.1 = -0.1, so x_2 = 1 - 0.1 * 0.1.
  EXPECT_NEAR(traj.states(2, 0), 0.99, 1e-15);
  ASSERT_EQ(traj.cond.size(), 1);
  EXPECT_EQ(traj.cond[0], 2.0);
}

TEST(Oscillator, ZeroForcesStayPut) {
  OscillatorParams p;
  p.c = 0.0;
  p.k = 0.0;
  const auto traj = generate_oscillator(p);
  EXPECT_TRUE((traj.states.array() == 1.0).all());
}

TEST(Oscillator, Deterministic) {
  OscillatorParams p;
  p.c = 0.7;
  const auto a = generate_oscillator(p);
  const auto b = generate_oscillator(p);
  ASSERT_EQ(a.states.size(), b.states.size());
  EXPECT_EQ(std::memcmp(a.states.data(), b.states.data(), sizeof(double) * a.states.size()), 0);
  EXPECT_EQ(std::memcmp(a.times.data(), b.times.data(), sizeof(double) * a.times.size()), 0);
}

TEST(Oscillator, RejectsBadParams) {
  OscillatorParams p;
  p.dt = 0.0;
  EXPECT_THROW(generate_oscillator(p), std::invalid_argument);
  p = {};
  p.m = 0.0;
  EXPECT_THROW(generate_oscillator(p), std::invalid_argument);
  p = {};
  p.n_steps = 0;
  EXPECT_THROW(generate_oscillator(p), std::invalid_argument);
}

TEST(Oscillator, UnderdampedChangesSign) {
  OscillatorParams p;
  p.c = 0.25;
  EXPECT_TRUE(sign_change(generate_oscillator(p).states.col(0)));
}

TEST(Benchmark, Shape) {
  const auto ds = make_oscillator_benchmark();
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim_state, 1);
  EXPECT_EQ(ds.dim_cond, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& traj = ds.trajectories[i];
    EXPECT_EQ(traj.length(), 100);
    EXPECT_EQ(traj.cond[0], kBenchmarkDamping[i]);
    EXPECT_EQ(traj.states(0, 0), 1.0);
    EXPECT_NEAR(traj.times[99], 0.99, 1e-12);
    EXPECT_NEAR(traj.times[1], 0.01, 1e-15);
  }
}

TEST(Benchmark, LightlyAndHeavilyDampedCross) {
  const auto ds = make_oscillator_benchmark();
  const Vector diff = ds.trajectories[0].states.col(0) - ds.trajectories[2].states.col(0);
  // The first two samples coincide (shared start, zero initial velocity).
  EXPECT_TRUE(sign_change(diff.tail(diff.size() - 2)));
}

TEST(Normalize, IdentityWhenAlreadyStandardized) {
  Trajectory a{"a", Vector::LinSpaced(4, 0.0, 1.0), Matrix(4, 1), Vector()};
  a.states << -1, 1, -1, 1;
  const auto ds = make_dataset({a});
  const auto out = normalize_dataset(ds);
  EXPECT_EQ(out.norm.time_scale, 1.0);
  EXPECT_LT((out.trajectories[0].states - a.states).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.trajectories[0].times - a.times).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, ConstantDimensionIsClamped) {
  Trajectory a{"a", Vector::LinSpaced(3, 0.0, 2.0), Matrix(3, 2), Vector()};
  a.states << 5, 1, 5, 2, 5, 3;
  const auto out = normalize_dataset(make_dataset({a}));
  EXPECT_EQ(out.norm.state_std[0], 1.0);
  EXPECT_TRUE((out.trajectories[0].states.col(0).array() == 0.0).all());
  EXPECT_EQ(out.norm.time_scale, 2.0);
  EXPECT_EQ(out.trajectories[0].times[2], 1.0);
}

TEST(Normalize, AuxiliaryUnits) {
  Trajectory a{"a", Vector(4), Matrix(4, 1), Vector()};
  a.times << 0, 1, 2, 4;
  a.states << 0, 1, 1, 3;
  Trajectory b{"b", Vector(2), Matrix(2, 1), Vector()};
  b.times << 0, 2;
  b.states << 2, 2;
  const auto norm = fit_norm(make_dataset({a, b}));
  // Hand-computed: mean 1.5, population variance 11/12, time scale 4.
  // Normalized gaps {1/4, 1/4, 1/2, 1/2}: median 3/8.
  // Squared increments {1, 0, 4, 0} / (11/12), averaged over 4 gaps: 15/11.
  EXPECT_NEAR(norm.state_std[0], std::sqrt(11.0 / 12.0), 1e-14);
  EXPECT_EQ(norm.time_scale, 4.0);
  EXPECT_NEAR(norm.interval_unit, 0.375, 1e-15);
  EXPECT_NEAR(norm.error_unit, 15.0 / 11.0, 1e-14);
}

TEST(Normalize, ConstantDataKeepsUnitErrorScale) {
  Trajectory a{"a", Vector::LinSpaced(3, 0.0, 1.0), Matrix::Constant(3, 1, 2.0), Vector()};
  const auto norm = fit_norm(make_dataset({a}));
  EXPECT_EQ(norm.error_unit, 1.0);
  EXPECT_NEAR(norm.interval_unit, 0.5, 1e-15);
}

TEST(Normalize, OscillatorMeanVanishes) {
  const auto out = normalize_dataset(make_oscillator_benchmark());
  double sum = 0.0;
  Index n = 0;
  for (const auto& traj : out.trajectories) {
    sum += traj.states.sum();
    n += traj.states.rows();
    EXPECT_GE(traj.times.minCoeff(), 0.0);
    EXPECT_LE(traj.times.maxCoeff(), 1.0);
  }
  EXPECT_LT(std::abs(sum / static_cast<double>(n)), 1e-10);
  // Times were already inside [0, 1].
  EXPECT_EQ(out.norm.time_scale, 1.0);
}

TEST(Normalize, RoundTripProperty) {
  auto rng = make_stream(7, "normalize_property");
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> len(2, 30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Trajectory> trajs;
    const Index d = 1 + trial % 3;
    for (int i = 0; i < 3; ++i) {
      const int T = len(rng);
      Trajectory t{"t" + std::to_string(i), Vector(T), Matrix(T, d), Vector()};
      double clock = std::abs(normal(rng));
      for (int r = 0; r < T; ++r) {
        clock += 0.1 + std::abs(normal(rng));
        t.times[r] = clock;
        for (Index j = 0; j < d; ++j) t.states(r, j) = 50.0 * normal(rng) + 10.0;
      }
      trajs.push_back(t);
    }
    const auto ds = make_dataset(trajs);
    const auto norm = normalize_dataset(ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto back = norm.norm.denormalize(norm.trajectories[i]);
      const auto& orig = ds.trajectories[i];
      const double rel_states = (back.states - orig.states).cwiseAbs().maxCoeff() / orig.states.cwiseAbs().maxCoeff();
      const double rel_times = (back.times - orig.times).cwiseAbs().maxCoeff() / orig.times.cwiseAbs().maxCoeff();
      EXPECT_LT(rel_states, 1e-12);
      EXPECT_LT(rel_times, 1e-12);
      EXPECT_LE(norm.trajectories[i].times.maxCoeff(), 1.0);
    }
  }
}

TEST(Normalize, EmptyDatasetFails) { EXPECT_THROW(normalize_dataset(Dataset{}), DataError); }

TEST(Csv, OscillatorRoundTrip) {
  const auto ds = make_oscillator_benchmark();
  const auto text = to_csv_text(ds);
  const auto back = from_csv_text(text);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.trajectories[i].id, ds.trajectories[i].id);
    EXPECT_EQ(back.trajectories[i].times, ds.trajectories[i].times);
    EXPECT_EQ(back.trajectories[i].states, ds.trajectories[i].states);
    EXPECT_EQ(back.trajectories[i].cond, ds.trajectories[i].cond);
  }
  EXPECT_EQ(to_csv_text(back), text);
  EXPECT_EQ(text.substr(0, text.find('\n')), "traj_id,t,x0,c0");
}

TEST(Csv, RandomDatasetsRoundTrip) {
  auto rng = make_stream(11, "csv_property");
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 25; ++trial) {
    const Index d = 1 + trial % 4;
    const Index e = trial % 3;
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 1 + trial % 5; ++i) {
      const Index T = 2 + (trial * 7 + i) % 20;
      Trajectory t{"traj" + std::to_string(i), Vector(T), Matrix(T, d), Vector(e)};
      double clock = normal(rng);
      for (Index r = 0; r < T; ++r) {
        clock += std::exp(normal(rng));
        t.times[r] = clock;
        for (Index j = 0; j < d; ++j) t.states(r, j) = normal(rng) * std::pow(10.0, normal(rng) * 5);
      }
      for (Index j = 0; j < e; ++j) t.cond[j] = normal(rng);
      trajs.push_back(t);
    }
    const auto ds = make_dataset(trajs);
    const auto back = from_csv_text(to_csv_text(ds));
    ASSERT_EQ(back.size(), ds.size());
    EXPECT_EQ(back.dim_state, d);
    EXPECT_EQ(back.dim_cond, e);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      EXPECT_EQ(back.trajectories[i].states, ds.trajectories[i].states);
      EXPECT_EQ(back.trajectories[i].times, ds.trajectories[i].times);
      EXPECT_EQ(back.trajectories[i].cond, ds.trajectories[i].cond);
    }
  }
}

TEST(Csv, InterleavedRowsAreGroupedById) {
  const auto ds = from_csv_text("traj_id,t,x0\nb,0,1\na,0,5\nb,1,2\na,2,6\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.trajectories[0].id, "b");
  EXPECT_EQ(ds.trajectories[1].states(1, 0), 6.0);
}

void expect_parse_error(const std::string& text, const std::string& fragment) {
  try {
    from_csv_text(text);
    FAIL() << "expected a parse error containing '" << fragment << "'";
  } catch (const DataError& err) {
    EXPECT_NE(std::string(err.what()).find(fragment), std::string::npos) << err.what();
  }
}

TEST(Csv, Errors) {
  expect_parse_error("", "no trajectories");
  expect_parse_error("traj_id,t,x0\n", "no trajectories");
  expect_parse_error("traj_id,t,x0\na,0,1\na,0,2\n", "line 3");
  expect_parse_error("traj_id,t,x0\na,0,1\na,1,2,3\n", "line 3: expected 3 columns");
  expect_parse_error("traj_id,t,x0\na,0,1\na,1,abc\n", "line 3: non-numeric");
  expect_parse_error("traj_id,t,x0\na,1,1\na,0.5,2\n", "not strictly increasing");
  expect_parse_error("traj_id,t,x0,c0\na,0,1,3\na,1,2,4\n", "line 3: conditions");
  expect_parse_error("traj_id,t,x0\na,0,1\n", "fewer than 2");
  expect_parse_error("id,t,x0\na,0,1\n", "header");
  expect_parse_error("traj_id,t,x1\na,0,1\n", "unexpected column");
  expect_parse_error("traj_id,t,x0\na,0,nan\na,1,1\n", "non-finite");
}

TEST(Dataset, MixedDimensionsRejected) {
  Trajectory a{"a", Vector::LinSpaced(2, 0, 1), Matrix::Zero(2, 1), Vector()};
  Trajectory b{"b", Vector::LinSpaced(2, 0, 1), Matrix::Zero(2, 2), Vector()};
  EXPECT_THROW(make_dataset({a, b}), DataError);
  Trajectory c{"c", Vector::LinSpaced(2, 0, 1), Matrix::Zero(2, 1), Vector::Zero(1)};
  EXPECT_THROW(make_dataset({a, c}), DataError);
  EXPECT_THROW(make_dataset({}), DataError);
}

}  // namespace
}  // namespace tfm
