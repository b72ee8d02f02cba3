#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "omc/quant_policy.hpp"
#include "test_util.hpp"

using omc::PolicyConfig;
using omc::VariableKind;
using omc::VariableTag;

namespace {

std::vector<VariableTag> weights_and_norms(std::size_t weights, std::size_t norms) {
  std::vector<VariableTag> out;
  for (std::size_t i = 0; i < weights; ++i) {
    out.push_back({"dense_" + std::to_string(i) + "/kernel", VariableKind::kWeightMatrix});
    if (i < norms) out.push_back({"layer_norm_" + std::to_string(i) + "/scale", VariableKind::kNormScale});
  }
  return out;
}

// Upper chi-square critical value at significance 0.01 (Wilson-Hilferty).
double chi_square_critical_01(double dof) {
  const double z = 2.326347874040841;
  const double a = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST_SUITE("quant_policy") {

TEST_CASE("eligible_variables examples") {
  const auto vars = weights_and_norms(5, 3);
  PolicyConfig cfg;
  cfg.weights_only = true;
  const auto eligible = omc::eligible_variables(vars, cfg);
  CHECK(eligible == std::vector<std::string>{"dense_0/kernel", "dense_1/kernel", "dense_2/kernel",
                                             "dense_3/kernel", "dense_4/kernel"});
  cfg.weights_only = false;
  CHECK(omc::eligible_variables(vars, cfg).size() == 8);
  CHECK(omc::eligible_variables({}, cfg).empty());
}

TEST_CASE("selection counts round half up") {
  CHECK(omc::selection_count(0.9, 10) == 9);
  CHECK(omc::selection_count(0.5, 3) == 2);
  CHECK(omc::selection_count(0.25, 2) == 1);
  CHECK(omc::selection_count(0.0, 10) == 0);
  CHECK(omc::selection_count(1.0, 10) == 10);
  CHECK(omc::selection_count(0.9, 0) == 0);
  CHECK(omc::selection_count(0.9, 1) == 1);
  CHECK(omc::selection_count(0.4, 1) == 0);
}

TEST_CASE("select_variables examples") {
  const auto vars = weights_and_norms(10, 4);
  PolicyConfig cfg;
  cfg.quantize_fraction = 0.9;
  const auto sel = omc::select_variables(vars, cfg, 3, 5);
  CHECK(sel.size() == 9);
  const auto eligible = omc::eligible_variables(vars, cfg);
  for (const auto& n : sel.names) CHECK(std::find(eligible.begin(), eligible.end(), n) != eligible.end());
  CHECK(std::set<std::string>(sel.names.begin(), sel.names.end()).size() == 9);
  // model order
  std::vector<std::size_t> pos;
  for (const auto& n : sel.names) pos.push_back(std::find(eligible.begin(), eligible.end(), n) - eligible.begin());
  CHECK(std::is_sorted(pos.begin(), pos.end()));

  cfg.quantize_fraction = 1.0;
  CHECK(omc::select_variables(vars, cfg, 0, 0).names == eligible);
  cfg.quantize_fraction = 0.0;
  CHECK(omc::select_variables(vars, cfg, 0, 0).size() == 0);
}

TEST_CASE("selection is a pure function of its key") {
  const auto vars = weights_and_norms(10, 4);
  PolicyConfig cfg;
  cfg.quantize_fraction = 0.5;
  for (std::uint64_t r = 0; r < 20; ++r) {
    for (std::uint64_t c = 0; c < 20; ++c) {
      CHECK(omc::select_variables(vars, cfg, r, c).names == omc::select_variables(vars, cfg, r, c).names);
    }
  }
  // Different key components produce different draws at least sometimes.
  int differ_round = 0, differ_client = 0, differ_seed = 0;
  PolicyConfig other = cfg;
  other.selection_seed = 1;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const auto base = omc::select_variables(vars, cfg, k, k).names;
    differ_round += omc::select_variables(vars, cfg, k + 1, k).names != base;
    differ_client += omc::select_variables(vars, cfg, k, k + 1).names != base;
    differ_seed += omc::select_variables(vars, other, k, k).names != base;
  }
  CHECK(differ_round > 40);
  CHECK(differ_client > 40);
  CHECK(differ_seed > 40);
}

TEST_CASE("invalid fractions are rejected") {
  PolicyConfig cfg;
  for (double q : {-0.1, 1.5, std::nan("")}) {
    cfg.quantize_fraction = q;
    omc::testing::expect_error(omc::ErrorCode::kInvalidConfig, [&] { cfg.validate(); });
  }
}

TEST_CASE("each name is unselected about 10% of the time") {
  const auto vars = weights_and_norms(10, 0);
  PolicyConfig cfg;
  cfg.quantize_fraction = 0.9;
  std::vector<int> unselected(10, 0);
  const int draws = 2000;
  for (int k = 0; k < draws; ++k) {
    const auto sel = omc::select_variables(vars, cfg, static_cast<std::uint64_t>(k / 40), k % 40);
    for (std::size_t i = 0; i < vars.size(); ++i) unselected[i] += !sel.contains(vars[i].name);
  }
  // Exactly one of ten is left out per draw; 99% binomial band around 0.1.
  const double p = 0.1;
  const double band = 2.576 * std::sqrt(p * (1 - p) / draws);
  for (int u : unselected) {
    CHECK(std::abs(static_cast<double>(u) / draws - p) <= band);
  }
}

TEST_CASE("uniformity passes a chi-square test") {
  const auto vars = weights_and_norms(12, 0);
  PolicyConfig cfg;
  cfg.quantize_fraction = 0.5;
  const int draws = 20000;
  std::vector<double> counts(vars.size(), 0.0);
  for (int k = 0; k < draws; ++k) {
    const auto sel = omc::select_variables(vars, cfg, k, 7);
    for (std::size_t i = 0; i < vars.size(); ++i) counts[i] += sel.contains(vars[i].name);
  }
  const double expected = draws * 6.0 / 12.0;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  CHECK(stat < chi_square_critical_01(static_cast<double>(vars.size() - 1)));
}

TEST_CASE("coverage matches 1 - q^C") {
  const auto vars = weights_and_norms(10, 0);
  PolicyConfig cfg;
  cfg.quantize_fraction = 0.9;
  const std::size_t clients = 16;
  const int rounds = 1000;
  double covered = 0.0;
  for (int r = 0; r < rounds; ++r) {
    std::set<std::string> full;
    for (std::size_t c = 0; c < clients; ++c) {
      const auto sel = omc::select_variables(vars, cfg, r, c);
      for (const auto& v : vars) {
        if (!sel.contains(v.name)) full.insert(v.name);
      }
    }
    covered += static_cast<double>(full.size()) / vars.size();
  }
  const double expected = 1.0 - std::pow(0.9, 16);
  CHECK(std::abs(covered / rounds - expected) <= 0.04);
}

TEST_CASE("keyed stream") {
  omc::KeyedStream a(1, 2, 3), b(1, 2, 3), c(1, 2, 4);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    same += x == c.next();
  }
  CHECK(same == 0);
  omc::KeyedStream s(42);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = s.below(7);
    REQUIRE(v < 7);
    ++hist[v];
  }
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = s.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

}  // TEST_SUITE
