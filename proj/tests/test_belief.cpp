#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ztrust/game.hpp"
#include "ztrust/simplex_grid.hpp"

using namespace ztrust;

TEST(Belief, MatchesEnumerationOnRandomGames) {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const auto g = oracle::random_game(rng);
    const auto s = oracle::random_strategies(rng, g, 0);
    const std::size_t owner = rng() % 2;
    const std::size_t own = rng() % g.num_types(owner);
    BeliefState b{owner, oracle::random_simplex(rng, g.num_types(1 - owner))};
    const std::size_t x = rng() % g.num_states(0), xn = rng() % g.num_states(1);
    std::optional<std::size_t> e;
    if (g.evidence) e = rng() % g.evidence->alphabet.size();
    bool off = false;
    const auto want = oracle::belief_by_enumeration(g, b, own, 0, x, xn, s, e, &off);
    const auto got = update_belief(g, b, own, 0, x, xn, s, e);
    EXPECT_EQ(got.off_path, off);
    EXPECT_EQ(got.belief.owner, owner);
    for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(got.belief.point[j], want[j], 1e-12);
    checked += off ? 0 : 1;
  }
  EXPECT_GT(checked, 100);
}

TEST(Belief, OffPathCarriesBeliefForward) {
  std::mt19937_64 rng(8);
  auto g = oracle::random_game(rng);
  // Force a transition the strategies cannot produce: every row goes to state 0.
  for (auto& row : g.transitions[0]) row = {{0, 1.0}};
  if (g.num_states(1) < 2) GTEST_SKIP();
  const auto s = oracle::random_strategies(rng, g, 0);
  BeliefState b{0, {0.3, 0.7}};
  const auto r = update_belief(g, b, 0, 0, 0, 1, s);
  EXPECT_TRUE(r.off_path);
  EXPECT_EQ(r.belief.point, b.point);
}

TEST(Belief, UninformativeObservationKeepsBelief) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    auto g = oracle::random_game(rng);
    if (g.type_dependent) continue;
    g.evidence.reset();
    g.validate();
    auto s = oracle::random_strategies(rng, g, 0);
    s.p[1][1] = s.p[1][0];  // both agent types play alike
    BeliefState b{0, {0.4, 0.6}};
    const std::size_t x = 0;
    for (std::size_t xn = 0; xn < g.num_states(1); ++xn) {
      const auto r = update_belief(g, b, 0, 0, x, xn, s);
      if (!r.off_path) { EXPECT_NEAR(r.belief.point[0], 0.4, 1e-12); }
    }
  }
}

TEST(Belief, TruncateKeepsReachableStatesOnly) {
  std::mt19937_64 rng(12);
  const auto g = oracle::random_game(rng, 3);
  const auto w = truncate(g, 1, 0, 5, g.prior);
  EXPECT_EQ(w.horizon, 2u);
  EXPECT_EQ(w.num_states(0), 1u);
  const auto succ = successors(g, 1, 0);
  EXPECT_EQ(w.num_states(1), succ.size());
  // Window shorter than the game: terminal values are zero.
  const auto w1 = truncate(g, 0, 0, 1, g.prior);
  for (const auto& row : w1.terminal)
    for (const auto& u : row) {
      EXPECT_EQ(u[0], 0.0);
      EXPECT_EQ(u[1], 0.0);
    }
}

TEST(Grid, EnumerationAndInterpolation) {
  SimplexGrid g(3, 4);
  EXPECT_EQ(g.size(), 15u);  // C(6, 2)
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto p = g.point(i);
    std::vector<int> c;
    for (double v : p) c.push_back(static_cast<int>(std::lround(v * 4)));
    EXPECT_EQ(g.index(c), i);
  }
  std::mt19937_64 rng(1);
  std::vector<SimplexGrid::Vertex> vs;
  for (int r = 0; r < 100; ++r) {
    const auto b = oracle::random_simplex(rng, 3);
    g.interpolate(b, vs);
    std::vector<double> back(3, 0.0);
    double w = 0.0;
    for (const auto& v : vs) {
      w += v.weight;
      for (std::size_t d = 0; d < 3; ++d) back[d] += v.weight * g.point(v.index)[d];
    }
    EXPECT_NEAR(w, 1.0, 1e-12);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(back[d], b[d], 1e-12);
  }
}
