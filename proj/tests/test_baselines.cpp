#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "evireg/baselines.hpp"
#include "evireg/errors.hpp"
#include "evireg/model.hpp"
#include "evireg/rng.hpp"

using namespace evireg;

namespace {

ModelConfig point_config(double dropout) {
  ModelConfig c;
  c.extractor.input_side = 4;
  c.extractor.hidden_widths = {16};
  c.extractor.feature_dim = 8;
  c.extractor.dropout_rate = dropout;
  c.kind = ModelKind::kPoint;
  return c;
}

// A point model that always outputs `value`: zero weights, head bias set.
Model constant_model(double value) {
  Model m(point_config(0.3), 1);
  for (Tensor& t : m.params().tensors) {
    for (double& v : t.data) v = 0.0;
  }
  m.params().tensors.back().data[0] = value;  // head.bias
  return m;
}

Tensor random_input(std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(1, 16);
  for (double& v : t.data) v = rng.uniform(0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("mc dropout with rate 0 is deterministic with zero variance") {
  Model m(point_config(0.0), 3);
  const Tensor in = random_input(5);
  const auto [mean, var] = mc_dropout_predict(m, in, 10, 123, 0);
  CHECK(var == 0.0);
  CHECK(mean == doctest::Approx(m.infer_point(in)[0]).epsilon(1e-15));
}

TEST_CASE("mc dropout with T=1 reports zero variance") {
  Model m(point_config(0.3), 3);
  const auto [mean, var] = mc_dropout_predict(m, random_input(5), 1, 123, 0);
  (void)mean;
  CHECK(var == 0.0);
}

TEST_CASE("mc dropout rejects T<1 and is reproducible per seed") {
  Model m(point_config(0.3), 3);
  const Tensor in = random_input(6);
  CHECK_THROWS_AS(mc_dropout_predict(m, in, 0, 1, 0), ConfigError);
  const auto a = mc_dropout_predict(m, in, 25, 42, 7);
  const auto b = mc_dropout_predict(m, in, 25, 42, 7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  const auto c = mc_dropout_predict(m, in, 25, 43, 7);
  CHECK(a.first != c.first);
  CHECK(a.second > 0.0);  // stochastic passes disagree
}

TEST_CASE("mc dropout mean converges as T grows") {
  // std of the mean shrinks ~ 1/sqrt(T): across 100 seeded patches the
  // spread of repeated T=200 estimates is below the T=10 spread.
  Model m(point_config(0.3), 9);
  Rng rng(11);
  double spread10 = 0.0, spread200 = 0.0;
  for (int p = 0; p < 100; ++p) {
    Tensor in(1, 16);
    for (double& v : in.data) v = rng.uniform(0.0, 1.0);
    std::vector<double> means10, means200;
    for (int rep = 0; rep < 4; ++rep) {
      means10.push_back(
          mc_dropout_predict(m, in, 10, 1000 + rep, static_cast<std::uint64_t>(p)).first);
      means200.push_back(
          mc_dropout_predict(m, in, 200, 2000 + rep, static_cast<std::uint64_t>(p)).first);
    }
    auto spread = [](const std::vector<double>& v) {
      double mn = v[0], mx = v[0];
      for (double x : v) {
        mn = std::min(mn, x);
        mx = std::max(mx, x);
      }
      return mx - mn;
    };
    spread10 += spread(means10);
    spread200 += spread(means200);
  }
  CHECK(spread200 < spread10);
}

TEST_CASE("ensemble prediction mean and population variance") {
  const YearScale scale;
  (void)scale;
  EnsembleBundle bundle;
  for (double v : {0.1, 0.2, 0.3, 0.4, 0.5}) bundle.members.push_back(constant_model(v));
  bundle.seeds = {1, 2, 3, 4, 5};
  const Tensor in = random_input(3);
  const auto [mean, var] = ensemble_predict(bundle, in);
  CHECK(mean == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(var == doctest::Approx(0.02).epsilon(1e-12));

  // Single member and identical members: zero variance.
  EnsembleBundle one;
  one.members.push_back(constant_model(0.7));
  const auto [m1, v1] = ensemble_predict(one, in);
  CHECK(m1 == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(v1 == 0.0);

  EnsembleBundle same;
  for (int i = 0; i < 3; ++i) same.members.push_back(constant_model(0.4));
  CHECK(ensemble_predict(same, in).second == doctest::Approx(0.0).epsilon(1e-18));

  EnsembleBundle empty;
  CHECK_THROWS_AS(ensemble_predict(empty, in), ConfigError);
}

TEST_CASE("ensemble is permutation invariant") {
  EnsembleBundle a, b;
  for (double v : {0.15, 0.45, 0.25}) a.members.push_back(constant_model(v));
  for (double v : {0.45, 0.25, 0.15}) b.members.push_back(constant_model(v));
  const Tensor in = random_input(8);
  const auto ra = ensemble_predict(a, in);
  const auto rb = ensemble_predict(b, in);
  CHECK(ra.first == doctest::Approx(rb.first).epsilon(1e-15));
  CHECK(ra.second == doctest::Approx(rb.second).epsilon(1e-15));
}

TEST_CASE("bundle manifest round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "evireg_bundle_test";
  fs::create_directories(dir);
  std::vector<std::string> paths;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < 3; ++i) {
    Model m = constant_model(0.1 * (i + 1));
    const std::string name = "member_" + std::to_string(i) + ".txt";
    save_checkpoint(m, (dir / name).string());
    paths.push_back(name);
    seeds.push_back(static_cast<std::uint64_t>(100 + i));
  }
  save_bundle_manifest(paths, seeds, (dir / "bundle.json").string());
  const EnsembleBundle loaded = load_bundle((dir / "bundle.json").string());
  REQUIRE(loaded.members.size() == 3);
  CHECK(loaded.seeds == seeds);
  const Tensor in = random_input(2);
  CHECK(loaded.members[1].infer_point(in)[0] == doctest::Approx(0.2).epsilon(1e-12));
  fs::remove_all(dir);
}
