#pragma once

// FlipIt for control of the cloud coupled to the signaling game played by
// whoever holds it. Each round: FlipIt rewards are the sender types'
// expected signaling payoffs (clamped at zero), then the signaling prior is
// reset to 1 - p and the signaling game is re-solved.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ztrust/flipit.hpp"
#include "ztrust/signaling.hpp"

namespace ztrust {

inline constexpr const char* kGneCoupling =
    "flipit rewards = sender expected signaling payoffs; signaling prior = 1 - p";

struct MetaGameIteration {
  FlipItEquilibrium flipit;
  SignalingProfile signaling;
  double prior = 0.0;
  double change = 0.0;
};

struct MetaGameResult {
  FlipItEquilibrium flipit;
  SignalingProfile signaling;
  double ts0 = 1.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::string coupling = kGneCoupling;
  std::vector<MetaGameIteration> history;
};

// Expected payoff of sender type t under the profile.
inline double sender_expected(const SignalingGame& g, const SignalingProfile& p, std::size_t t) {
  double v = 0.0;
  for (std::size_t m = 0; m < g.num_messages(); ++m) v += p.sender[t][m] * sender_value(g, p, t, m);
  return v;
}

inline FlipItConfig coupled_flipit(FlipItConfig c, const SignalingGame& g, const SignalingProfile& p) {
  c.reward_attacker = std::max(0.0, sender_expected(g, p, kSenderAttacker));
  c.reward_defender = std::max(0.0, sender_expected(g, p, kSenderDefender));
  return c;
}

inline double profile_distance(const SignalingProfile& a, const SignalingProfile& b) {
  double d = 0.0;
  for (std::size_t t = 0; t < a.sender.size(); ++t)
    for (std::size_t m = 0; m < a.sender[t].size(); ++m) d = std::max(d, std::abs(a.sender[t][m] - b.sender[t][m]));
  for (std::size_t m = 0; m < a.receiver.size(); ++m)
    for (std::size_t k = 0; k < a.receiver[m].size(); ++k)
      d = std::max(d, std::abs(a.receiver[m][k] - b.receiver[m][k]));
  for (std::size_t m = 0; m < a.posterior.size(); ++m) d = std::max(d, std::abs(a.posterior[m] - b.posterior[m]));
  return d;
}

inline MetaGameResult solve_gne(const FlipItConfig& config, SignalingGame game, std::size_t max_iters = 50) {
  require(max_iters >= 1, "max_iters", "must be at least 1");
  config.validate();
  game.validate();
  MetaGameResult out;
  SignalingProfile sig = solve_signaling(game);
  double best_change = INFINITY;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    MetaGameIteration step;
    step.flipit = solve_flipit(coupled_flipit(config, game, sig));
    step.prior = game.prior = 1.0 - step.flipit.p;
    step.signaling = solve_signaling(game);
    step.change = profile_distance(step.signaling, sig);
    sig = step.signaling;
    out.history.push_back(step);
    out.iterations = it;
    // Keep the iterate closest to a fixed point.
    if (step.change < best_change) {
      best_change = step.change;
      out.flipit = step.flipit;
      out.signaling = step.signaling;
      out.ts0 = step.prior;
    }
    if (step.change <= 1e-4) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace ztrust
