#pragma once

// Two-type sender/receiver game: the sender (attacker or defender in control
// of the cloud) picks a message, the receiver picks an action after seeing
// only the message. Unsent messages keep the prior (passive conjecture).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ztrust/error.hpp"

namespace ztrust {

enum SenderType : std::size_t { kSenderAttacker = 0, kSenderDefender = 1 };

struct SignalingGame {
  std::vector<std::string> messages, actions;
  // [type][message][action], type 0 = attacker, 1 = defender.
  std::vector<std::vector<std::vector<double>>> u_sender, u_receiver;
  double prior = 0.5;  // receiver's prior that the sender is the defender

  std::size_t num_messages() const { return messages.size(); }
  std::size_t num_actions() const { return actions.size(); }

  void validate(const std::string& path = "signaling") const {
    require(messages.size() >= 1 && messages.size() <= 4, path + ".messages", "between 1 and 4 messages required");
    require(actions.size() >= 1 && actions.size() <= 4, path + ".actions", "between 1 and 4 actions required");
    require(std::isfinite(prior) && prior >= 0.0 && prior <= 1.0, path + ".prior", "must lie in [0, 1]");
    for (const auto* t : {&u_sender, &u_receiver}) {
      const std::string name = path + (t == &u_sender ? ".u_sender" : ".u_receiver");
      require(t->size() == 2, name, "one table per sender type required");
      for (const auto& m : *t) {
        require(m.size() == messages.size(), name, "one row per message required");
        for (const auto& row : m) {
          require(row.size() == actions.size(), name, "one entry per action required");
          for (double v : row) require(std::isfinite(v), name, "entries must be finite");
        }
      }
    }
  }

  double type_prob(std::size_t t) const { return t == kSenderDefender ? prior : 1.0 - prior; }
};

struct SignalingProfile {
  std::vector<std::vector<double>> sender;    // [type][message]
  std::vector<std::vector<double>> receiver;  // [message][action]
  std::vector<double> posterior;              // P(defender | message)
  std::vector<char> on_path;
  std::string kind;  // pooling, separating, semi-separating, approximate
  bool passive_off_path = true;  // false: off-path beliefs were chosen to deter deviations
  double regret = 0.0;
};

// Bayes on sent messages, prior elsewhere.
inline void signaling_posteriors(const SignalingGame& g, SignalingProfile& p) {
  const std::size_t M = g.num_messages();
  p.posterior.assign(M, g.prior);
  p.on_path.assign(M, 0);
  for (std::size_t m = 0; m < M; ++m) {
    const double a = g.type_prob(kSenderAttacker) * p.sender[kSenderAttacker][m];
    const double d = g.type_prob(kSenderDefender) * p.sender[kSenderDefender][m];
    if (a + d > 0.0) {
      p.posterior[m] = d / (a + d);
      p.on_path[m] = 1;
    }
  }
}

inline double receiver_value(const SignalingGame& g, double posterior, std::size_t m, std::size_t a) {
  return posterior * g.u_receiver[kSenderDefender][m][a] + (1.0 - posterior) * g.u_receiver[kSenderAttacker][m][a];
}

inline double sender_value(const SignalingGame& g, const SignalingProfile& p, std::size_t t, std::size_t m) {
  double v = 0.0;
  for (std::size_t a = 0; a < g.num_actions(); ++a) v += p.receiver[m][a] * g.u_sender[t][m][a];
  return v;
}

// Largest gain from a unilateral deviation by either sender type or by the
// receiver at any message, given the profile's posteriors.
inline double signaling_regret(const SignalingGame& g, const SignalingProfile& p) {
  double worst = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    double cur = 0.0, best = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < g.num_messages(); ++m) {
      const double v = sender_value(g, p, t, m);
      cur += p.sender[t][m] * v;
      best = std::max(best, v);
    }
    worst = std::max(worst, best - cur);
  }
  for (std::size_t m = 0; m < g.num_messages(); ++m) {
    double cur = 0.0, best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < g.num_actions(); ++a) {
      const double v = receiver_value(g, p.posterior[m], m, a);
      cur += p.receiver[m][a] * v;
      best = std::max(best, v);
    }
    worst = std::max(worst, best - cur);
  }
  return worst;
}

namespace detail {

inline std::vector<std::size_t> receiver_best_set(const SignalingGame& g, double posterior, std::size_t m) {
  std::vector<double> v(g.num_actions());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < v.size(); ++a) best = std::max(best, v[a] = receiver_value(g, posterior, m, a));
  std::vector<std::size_t> out;
  const double tol = 1e-12 * std::max(1.0, std::abs(best));
  for (std::size_t a = 0; a < v.size(); ++a)
    if (v[a] >= best - tol) out.push_back(a);
  return out;
}

inline bool sender_rational(const SignalingGame& g, const SignalingProfile& p, double tol) {
  for (std::size_t t = 0; t < 2; ++t) {
    if (g.type_prob(t) == 0.0) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < g.num_messages(); ++m) best = std::max(best, sender_value(g, p, t, m));
    for (std::size_t m = 0; m < g.num_messages(); ++m)
      if (p.sender[t][m] > 0.0 && sender_value(g, p, t, m) < best - tol) return false;
  }
  return true;
}

// Tries every pure receiver reply drawn from the best-response sets, then
// two-action mixtures at a tied message.
inline bool complete_receiver(const SignalingGame& g, SignalingProfile& p, double tol) {
  const std::size_t M = g.num_messages(), A = g.num_actions();
  std::vector<std::vector<std::size_t>> sets(M);
  for (std::size_t m = 0; m < M; ++m) sets[m] = receiver_best_set(g, p.posterior[m], m);
  std::vector<std::size_t> pick(M, 0);
  for (;;) {
    p.receiver.assign(M, std::vector<double>(A, 0.0));
    for (std::size_t m = 0; m < M; ++m) p.receiver[m][sets[m][pick[m]]] = 1.0;
    if (sender_rational(g, p, tol)) return true;
    std::size_t m = 0;
    while (m < M && ++pick[m] == sets[m].size()) pick[m++] = 0;
    if (m == M) break;
  }
  // Mixed replies over two tied actions at one message: the mixing weight is
  // pinned by a sender type's indifference between that message and another.
  for (std::size_t m = 0; m < M; ++m) {
    if (sets[m].size() < 2) continue;
    for (std::size_t i = 0; i < sets[m].size(); ++i)
      for (std::size_t j = i + 1; j < sets[m].size(); ++j)
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t m2 = 0; m2 < M; ++m2) {
            if (m2 == m) continue;
            std::fill(pick.begin(), pick.end(), 0);
            for (;;) {
              p.receiver.assign(M, std::vector<double>(A, 0.0));
              for (std::size_t k = 0; k < M; ++k) p.receiver[k][sets[k][pick[k]]] = 1.0;
              const std::size_t a = sets[m][i], b = sets[m][j];
              const double target = sender_value(g, p, t, m2);
              const double ua = g.u_sender[t][m][a], ub = g.u_sender[t][m][b];
              if (std::abs(ua - ub) > 1e-12) {
                const double q = (target - ub) / (ua - ub);
                if (q >= 0.0 && q <= 1.0) {
                  std::fill(p.receiver[m].begin(), p.receiver[m].end(), 0.0);
                  p.receiver[m][a] = q;
                  p.receiver[m][b] = 1.0 - q;
                  if (sender_rational(g, p, tol)) return true;
                }
              }
              std::size_t k = 0;
              while (k < M && (k == m || ++pick[k] == sets[k].size())) {
                if (k != m) pick[k] = 0;
                ++k;
              }
              if (k == M) break;
            }
          }
  }
  return false;
}

}  // namespace detail

// Search order: pure sender profiles with the attacker's message as the
// major index, each completed by the receiver as above; then profiles where
// one type mixes over two messages; then a grid over mixed sender profiles
// keeping the least-regret point (flagged approximate).
inline SignalingProfile solve_signaling(const SignalingGame& g) {
  g.validate();
  const std::size_t M = g.num_messages(), A = g.num_actions();
  const double tol = 1e-9 * [&] {
    double s = 1.0;
    for (const auto* tab : {&g.u_sender, &g.u_receiver})
      for (const auto& t : *tab)
        for (const auto& row : t)
          for (double v : row) s = std::max(s, std::abs(v));
    return s;
  }();

  SignalingProfile p;
  for (std::size_t ma = 0; ma < M; ++ma)
    for (std::size_t md = 0; md < M; ++md) {
      p.sender.assign(2, std::vector<double>(M, 0.0));
      p.sender[kSenderAttacker][ma] = 1.0;
      p.sender[kSenderDefender][md] = 1.0;
      signaling_posteriors(g, p);
      if (detail::complete_receiver(g, p, tol)) {
        p.kind = ma == md ? "pooling" : "separating";
        p.regret = signaling_regret(g, p);
        return p;
      }
    }

  // Semi-separating: type t mixes over {m1, m2}, the other type sits on m1.
  // The receiver must be indifferent between two actions at m1, which pins
  // the posterior there and with it the mixing weight.
  for (std::size_t t = 0; t < 2; ++t) {
    const std::size_t o = 1 - t;
    if (g.type_prob(t) == 0.0 || g.type_prob(o) == 0.0) continue;
    for (std::size_t m1 = 0; m1 < M; ++m1)
      for (std::size_t m2 = 0; m2 < M; ++m2) {
        if (m1 == m2) continue;
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t b = a + 1; b < A; ++b) {
            // mu * dD + (1 - mu) * dA = 0 with d = u_R(., m1, a) - u_R(., m1, b)
            const double dD = g.u_receiver[kSenderDefender][m1][a] - g.u_receiver[kSenderDefender][m1][b];
            const double dA = g.u_receiver[kSenderAttacker][m1][a] - g.u_receiver[kSenderAttacker][m1][b];
            if (std::abs(dD - dA) < 1e-12) continue;
            const double mu = dA / (dA - dD);
            if (!(mu > 0.0 && mu < 1.0)) continue;
            // mu = P(D) s_D(m1) / (P(D) s_D(m1) + P(A) s_A(m1)), the pure type sends m1 for sure.
            const double pd = g.type_prob(kSenderDefender), pa = g.type_prob(kSenderAttacker);
            double s;
            if (t == kSenderDefender)
              s = mu * pa / ((1.0 - mu) * pd);
            else
              s = (1.0 - mu) * pd / (mu * pa);
            if (!(s > 0.0 && s < 1.0)) continue;
            p.sender.assign(2, std::vector<double>(M, 0.0));
            p.sender[o][m1] = 1.0;
            p.sender[t][m1] = s;
            p.sender[t][m2] = 1.0 - s;
            signaling_posteriors(g, p);
            p.receiver.assign(M, std::vector<double>(A, 0.0));
            for (std::size_t m = 0; m < M; ++m)
              if (m != m1) p.receiver[m][detail::receiver_best_set(g, p.posterior[m], m).front()] = 1.0;
            // Type t indifferent between m1 and m2.
            const double target = sender_value(g, p, t, m2);
            const double ua = g.u_sender[t][m1][a], ub = g.u_sender[t][m1][b];
            if (std::abs(ua - ub) < 1e-12) continue;
            const double q = (target - ub) / (ua - ub);
            if (q < 0.0 || q > 1.0) continue;
            p.receiver[m1][a] = q;
            p.receiver[m1][b] = 1.0 - q;
            if (signaling_regret(g, p) <= tol) {
              p.kind = "semi-separating";
              p.regret = signaling_regret(g, p);
              return p;
            }
          }
      }
  }

  // Both types mix over {m0, m1} and the receiver mixes at both: the two
  // indifference posteriors fix the sender mixtures, and the two sender
  // indifference conditions fix the receiver mixtures.
  for (std::size_t m0 = 0; m0 < M; ++m0)
    for (std::size_t m1 = m0 + 1; m1 < M; ++m1)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = a + 1; b < A; ++b)
          for (std::size_t c = 0; c < A; ++c)
            for (std::size_t d = c + 1; d < A; ++d) {
              auto pinned = [&](std::size_t m, std::size_t x, std::size_t y) {
                const double dD = g.u_receiver[kSenderDefender][m][x] - g.u_receiver[kSenderDefender][m][y];
                const double dA = g.u_receiver[kSenderAttacker][m][x] - g.u_receiver[kSenderAttacker][m][y];
                return std::abs(dD - dA) < 1e-12 ? -1.0 : dA / (dA - dD);
              };
              const double mu0 = pinned(m0, a, b), mu1 = pinned(m1, c, d);
              if (!(mu0 > 0.0 && mu0 < 1.0 && mu1 > 0.0 && mu1 < 1.0)) continue;
              // x = P(D) s_D, y = P(A) s_A:  x (1 - mu0) = mu0 y,  (P(D) - x)(1 - mu1) = mu1 (P(A) - y).
              const double pd = g.type_prob(kSenderDefender), pa = g.type_prob(kSenderAttacker);
              const double det = (1.0 - mu0) * mu1 - mu0 * (1.0 - mu1);
              if (std::abs(det) < 1e-12) continue;
              const double rhs = mu1 * pa - pd * (1.0 - mu1);
              // From the first equation y = x (1 - mu0) / mu0; substitute into the second.
              const double x = rhs * mu0 / det;
              const double y = x * (1.0 - mu0) / mu0;
              const double sd = x / pd, sa = y / pa;
              if (!(sd > 0.0 && sd < 1.0 && sa > 0.0 && sa < 1.0)) continue;
              // q0 u(t,m0,a) + (1-q0) u(t,m0,b) = q1 u(t,m1,c) + (1-q1) u(t,m1,d) for both types.
              double J[2][2], r[2];
              for (std::size_t t = 0; t < 2; ++t) {
                J[t][0] = g.u_sender[t][m0][a] - g.u_sender[t][m0][b];
                J[t][1] = -(g.u_sender[t][m1][c] - g.u_sender[t][m1][d]);
                r[t] = g.u_sender[t][m1][d] - g.u_sender[t][m0][b];
              }
              const double dj = J[0][0] * J[1][1] - J[0][1] * J[1][0];
              if (std::abs(dj) < 1e-12) continue;
              const double q0 = (r[0] * J[1][1] - J[0][1] * r[1]) / dj;
              const double q1 = (J[0][0] * r[1] - r[0] * J[1][0]) / dj;
              if (!(q0 >= 0.0 && q0 <= 1.0 && q1 >= 0.0 && q1 <= 1.0)) continue;
              p.sender.assign(2, std::vector<double>(M, 0.0));
              p.sender[kSenderDefender][m0] = sd, p.sender[kSenderDefender][m1] = 1.0 - sd;
              p.sender[kSenderAttacker][m0] = sa, p.sender[kSenderAttacker][m1] = 1.0 - sa;
              signaling_posteriors(g, p);
              p.receiver.assign(M, std::vector<double>(A, 0.0));
              for (std::size_t m = 0; m < M; ++m)
                if (m != m0 && m != m1) p.receiver[m][detail::receiver_best_set(g, p.posterior[m], m).front()] = 1.0;
              p.receiver[m0][a] = q0, p.receiver[m0][b] = 1.0 - q0;
              p.receiver[m1][c] = q1, p.receiver[m1][d] = 1.0 - q1;
              if (signaling_regret(g, p) <= tol) {
                p.kind = "semi-separating";
                p.regret = signaling_regret(g, p);
                return p;
              }
            }

  // Passive beliefs can leave no equilibrium at all (a deviation to an unsent
  // message is rewarded at the prior but punished once it is on path). Pure
  // profiles are retried with off-path posteriors drawn from {0, 1, prior}
  // and the receiver's indifference points.
  for (std::size_t ma = 0; ma < M; ++ma)
    for (std::size_t md = 0; md < M; ++md) {
      p.sender.assign(2, std::vector<double>(M, 0.0));
      p.sender[kSenderAttacker][ma] = 1.0;
      p.sender[kSenderDefender][md] = 1.0;
      signaling_posteriors(g, p);
      std::vector<std::size_t> off;
      std::vector<std::vector<double>> options;
      for (std::size_t m = 0; m < M; ++m) {
        if (p.on_path[m]) continue;
        off.push_back(m);
        std::vector<double> o{0.0, 1.0, g.prior};
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t b = a + 1; b < A; ++b) {
            const double dD = g.u_receiver[kSenderDefender][m][a] - g.u_receiver[kSenderDefender][m][b];
            const double dA = g.u_receiver[kSenderAttacker][m][a] - g.u_receiver[kSenderAttacker][m][b];
            if (std::abs(dD - dA) < 1e-12) continue;
            const double mu = dA / (dA - dD);
            if (mu > 0.0 && mu < 1.0) o.push_back(mu);
          }
        options.push_back(std::move(o));
      }
      std::vector<std::size_t> pick(off.size(), 0);
      for (;;) {
        for (std::size_t i = 0; i < off.size(); ++i) p.posterior[off[i]] = options[i][pick[i]];
        if (detail::complete_receiver(g, p, tol)) {
          p.kind = ma == md ? "pooling" : "separating";
          p.passive_off_path = false;
          p.regret = signaling_regret(g, p);
          return p;
        }
        std::size_t i = 0;
        while (i < off.size() && ++pick[i] == options[i].size()) pick[i++] = 0;
        if (i == off.size()) break;
      }
    }

  // Grid fallback over sender mixtures with receiver best replies.
  SignalingProfile best;
  best.regret = std::numeric_limits<double>::infinity();
  const int steps = M <= 2 ? 100 : M == 3 ? 20 : 10;
  std::vector<int> ia(M, 0), id(M, 0);
  std::function<void(std::size_t, int, int)> rec = [&](std::size_t m, int left_a, int left_d) {
    if (m + 1 == M) {
      ia[m] = left_a, id[m] = left_d;
      p.sender.assign(2, std::vector<double>(M, 0.0));
      for (std::size_t k = 0; k < M; ++k) {
        p.sender[kSenderAttacker][k] = ia[k] / double(steps);
        p.sender[kSenderDefender][k] = id[k] / double(steps);
      }
      signaling_posteriors(g, p);
      p.receiver.assign(M, std::vector<double>(A, 0.0));
      for (std::size_t k = 0; k < M; ++k) p.receiver[k][detail::receiver_best_set(g, p.posterior[k], k).front()] = 1.0;
      const double r = signaling_regret(g, p);
      if (r < best.regret) {
        best = p;
        best.regret = r;
      }
      return;
    }
    for (int x = 0; x <= left_a; ++x)
      for (int y = 0; y <= left_d; ++y) {
        ia[m] = x, id[m] = y;
        rec(m + 1, left_a - x, left_d - y);
      }
  };
  rec(0, steps, steps);
  best.kind = "approximate";
  return best;
}

}  // namespace ztrust
