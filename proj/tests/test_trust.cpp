#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ztrust/trust.hpp"

using namespace ztrust;

namespace {

TypeSpace three_types() { return TypeSpace{{"benign", "curious", "hostile"}, {"benign", "curious"}}; }

ObservedStrategy strategy() {
  return {{"read", "write"}, {{0.8, 0.2}, {0.5, 0.5}, {0.1, 0.9}}};
}

EvidenceModel evidence() {
  EvidenceModel m;
  m.alphabet = {"normal", "alert"};
  m.actions = {"write", "read"};  // deliberately not in strategy order
  m.likelihood = {{{0.9, 0.1}, {0.7, 0.3}, {0.2, 0.8}}, {{0.99, 0.01}, {0.95, 0.05}, {0.6, 0.4}}};
  return m;
}

}  // namespace

TEST(Trust, ScoreSumsTrustedMass) {
  TrustState s{"e", {0.5, 0.3, 0.2}, 0};
  EXPECT_DOUBLE_EQ(trust_score(s, three_types()).value, 0.8);
  EXPECT_THROW(trust_score(TrustState{"e", {1.0}, 0}, three_types()), ValidationError);
}

TEST(Trust, UpdateMatchesHandComputation) {
  TrustState s{"e", {0.5, 0.3, 0.2}, 4};
  const auto out = update_trust(s, "write", "alert", strategy(), evidence());
  // h(alert|write,t) * sigma(write|t) * pi(t): 0.1*0.2*0.5, 0.3*0.5*0.3, 0.8*0.9*0.2
  const double a = 0.01, b = 0.045, c = 0.144, z = a + b + c;
  EXPECT_NEAR(out.pi[0], a / z, 1e-15);
  EXPECT_NEAR(out.pi[1], b / z, 1e-15);
  EXPECT_NEAR(out.pi[2], c / z, 1e-15);
  EXPECT_EQ(out.timestamp, 5u);
  EXPECT_EQ(out.entity_id, "e");
}

TEST(Trust, UpdateMatchesStraightLineOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 2 + i % 3, A = 1 + i % 4, E = 2 + i % 2;
    ObservedStrategy s;
    EvidenceModel m;
    for (std::size_t a = 0; a < A; ++a) s.actions.push_back("a" + std::to_string(a)), m.actions.push_back("a" + std::to_string(a));
    for (std::size_t e = 0; e < E; ++e) m.alphabet.push_back("e" + std::to_string(e));
    for (std::size_t t = 0; t < n; ++t) s.table.push_back(oracle::random_simplex(rng, A));
    for (std::size_t a = 0; a < A; ++a) {
      m.likelihood.emplace_back();
      for (std::size_t t = 0; t < n; ++t) m.likelihood.back().push_back(oracle::random_simplex(rng, E));
    }
    TrustState st{"x", oracle::random_simplex(rng, n), 0};
    const std::size_t a = rng() % A, e = rng() % E;
    std::vector<std::vector<double>> h;
    for (std::size_t t = 0; t < n; ++t) h.push_back(m.likelihood[a][t]);
    const auto want = oracle::bayes(st.pi, s.table, h, a, e);
    const auto got = update_trust(st, a, e, s, m);
    for (std::size_t t = 0; t < n; ++t) EXPECT_LE(oracle::rel_err(got.pi[t], want[t]), 1e-12);
  }
}

TEST(Trust, ZeroLikelihoodObservationIsInconsistent) {
  ObservedStrategy s{{"read", "write"}, {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}};
  TrustState st{"e", {0.2, 0.3, 0.5}, 0};
  EXPECT_THROW(update_trust(st, "write", "normal", s, evidence()), InconsistentObservation);
}

TEST(Trust, ReplayEqualsOneShotJointUpdate) {
  std::mt19937_64 rng(3);
  const auto s = strategy();
  const auto m = evidence();
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<TrustEvent> log;
    for (int i = 0; i < 20; ++i) log.push_back({rng() % 2, rng() % 2});
    TrustState st{"e", oracle::random_simplex(rng, 3), 0};
    const auto traj = replay_events(st, log, s, m);
    ASSERT_EQ(traj.size(), log.size() + 1);
    EXPECT_EQ(traj.front().pi, st.pi);
    const auto want = oracle::joint_posterior(st.pi, s, m, log);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(traj.back().pi[t], want[t], 1e-9);
  }
}

TEST(Trust, ReplayReportsOffendingEntry) {
  ObservedStrategy s{{"read", "write"}, {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}};
  std::vector<TrustEvent> log{{0, 0}, {0, 1}, {1, 0}};
  try {
    replay_events(TrustState{"e", {0.2, 0.3, 0.5}, 0}, log, s, evidence());
    FAIL();
  } catch (const InconsistentObservation& e) {
    EXPECT_NE(std::string(e.what()).find("log entry 2"), std::string::npos);
  }
}

TEST(Trust, PriorPoolingProperties) {
  // One source returns its own estimate.
  std::vector<PriorSource> one{{PriorKind::credential, {0.7, 0.2, 0.1}, 3.0, 1.0}};
  const auto p = aggregate_prior(one, 2.0);
  EXPECT_NEAR(p.pi[0], 0.7, 1e-9);
  EXPECT_NEAR(p.pi[2], 0.1, 1e-9);
  // Identical sources pool to that estimate regardless of weights and ages.
  std::vector<PriorSource> same{{PriorKind::credential, {0.6, 0.4}, 1.0, 0.0},
                                {PriorKind::historical, {0.6, 0.4}, 5.0, 7.0}};
  EXPECT_NEAR(aggregate_prior(same, 1.5).pi[0], 0.6, 1e-9);
  // Scaling every weight leaves the pool unchanged.
  std::vector<PriorSource> a{{PriorKind::credential, {0.9, 0.1}, 1.0, 0.0}, {PriorKind::historical, {0.3, 0.7}, 2.0, 1.0}};
  auto b = a;
  for (auto& s : b) s.weight *= 10.0;
  EXPECT_NEAR(aggregate_prior(a, 2.0).pi[0], aggregate_prior(b, 2.0).pi[0], 1e-12);
  // An older source counts for less.
  auto older = a;
  older[1].age = 20.0;
  EXPECT_GT(aggregate_prior(older, 2.0).pi[0], aggregate_prior(a, 2.0).pi[0]);
  EXPECT_THROW(aggregate_prior(std::vector<PriorSource>{}, 1.0), ValidationError);
  EXPECT_THROW(aggregate_prior(a, 0.0), ValidationError);
}

TEST(Trust, MartingaleUnderPriorPredictive) {
  std::mt19937_64 rng(21);
  const auto s = strategy();
  const auto m = evidence();
  const auto space = three_types();
  const TrustState prior{"e", {0.6, 0.25, 0.15}, 0};
  const int N = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < N; ++i) {
    const std::size_t t = std::discrete_distribution<std::size_t>(prior.pi.begin(), prior.pi.end())(rng);
    const std::size_t a = std::discrete_distribution<std::size_t>(s.table[t].begin(), s.table[t].end())(rng);
    const std::size_t row = a == 0 ? 1 : 0;
    const auto& h = m.likelihood[row][t];
    const std::size_t e = std::discrete_distribution<std::size_t>(h.begin(), h.end())(rng);
    const double ts = trust_score(update_trust(prior, a, e, s, m), space).value;
    sum += ts;
    sq += ts * ts;
  }
  const double mean = sum / N, se = std::sqrt((sq / N - mean * mean) / N);
  EXPECT_LE(std::abs(mean - 0.85), 3.0 * se);
}
