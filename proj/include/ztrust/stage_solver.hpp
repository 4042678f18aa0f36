#pragma once

// Equilibria of one-shot Bayesian games with finite types and actions, as
// they arise at each (stage, state, belief) of backward induction. Each
// player type is an agent that best-responds to the opponent's
// type-contingent mixed strategy under its own conditional belief.
//
// Exact solutions come from support enumeration over per-type supports,
// ordered by total support size and then lexicographically by action index,
// so the first equilibrium found is the selected one. If the enumeration
// budget runs out, damped iterated best response returns its best iterate.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace ztrust {

struct BayesianStageGame {
  std::size_t n1 = 1, n2 = 1;  // types
  std::size_t m1 = 1, m2 = 1;  // actions
  std::vector<char> allowed1, allowed2;
  std::vector<double> w1;  // [th1 * n2 + th2]: defender type th1's belief over th2
  std::vector<double> w2;  // [th2 * n1 + th1]: agent type th2's belief over th1
  std::vector<double> q1, q2;  // [((th1 * n2 + th2) * m1 + a1) * m2 + a2]

  void resize(std::size_t types1, std::size_t types2, std::size_t actions1, std::size_t actions2) {
    n1 = types1, n2 = types2, m1 = actions1, m2 = actions2;
    allowed1.assign(m1, 1);
    allowed2.assign(m2, 1);
    w1.assign(n1 * n2, 0.0);
    w2.assign(n1 * n2, 0.0);
    q1.assign(n1 * n2 * m1 * m2, 0.0);
    q2.assign(n1 * n2 * m1 * m2, 0.0);
  }
  std::size_t at(std::size_t th1, std::size_t th2, std::size_t a1, std::size_t a2) const {
    return ((th1 * n2 + th2) * m1 + a1) * m2 + a2;
  }
  double scale() const {
    double s = 1.0;
    for (double v : q1) s = std::max(s, std::abs(v));
    for (double v : q2) s = std::max(s, std::abs(v));
    return s;
  }
};

// s1[th1 * m1 + a1], s2[th2 * m2 + a2].
struct StageProfile {
  std::vector<double> s1, s2;
};

enum class StageMethod { pure, support_enumeration, iterated_best_response };

struct StageSolution {
  StageProfile profile;
  double regret = 0.0;
  StageMethod method = StageMethod::pure;
};

struct StageSolverOptions {
  std::size_t max_candidates = 200'000;
  std::size_t br_iterations = 500;
  double damping = 0.5;
};

// Expected payoff of each own action for `player` of type `own`.
inline void action_values(const BayesianStageGame& g, const StageProfile& s, std::size_t player, std::size_t own,
                          double* out) {
  if (player == 0) {
    for (std::size_t a1 = 0; a1 < g.m1; ++a1) {
      double v = 0.0;
      for (std::size_t th2 = 0; th2 < g.n2; ++th2) {
        const double w = g.w1[own * g.n2 + th2];
        if (w == 0.0) continue;
        double inner = 0.0;
        for (std::size_t a2 = 0; a2 < g.m2; ++a2) {
          const double p = s.s2[th2 * g.m2 + a2];
          if (p != 0.0) inner += p * g.q1[g.at(own, th2, a1, a2)];
        }
        v += w * inner;
      }
      out[a1] = v;
    }
  } else {
    for (std::size_t a2 = 0; a2 < g.m2; ++a2) {
      double v = 0.0;
      for (std::size_t th1 = 0; th1 < g.n1; ++th1) {
        const double w = g.w2[own * g.n1 + th1];
        if (w == 0.0) continue;
        double inner = 0.0;
        for (std::size_t a1 = 0; a1 < g.m1; ++a1) {
          const double p = s.s1[th1 * g.m1 + a1];
          if (p != 0.0) inner += p * g.q2[g.at(th1, own, a1, a2)];
        }
        v += w * inner;
      }
      out[a2] = v;
    }
  }
}

// Largest gain any player type obtains by switching to its best allowed action.
inline double stage_regret(const BayesianStageGame& g, const StageProfile& s) {
  double worst = 0.0;
  double vals[64];
  for (std::size_t player = 0; player < 2; ++player) {
    const std::size_t n = player == 0 ? g.n1 : g.n2;
    const std::size_t m = player == 0 ? g.m1 : g.m2;
    const auto& allowed = player == 0 ? g.allowed1 : g.allowed2;
    const auto& own = player == 0 ? s.s1 : s.s2;
    for (std::size_t th = 0; th < n; ++th) {
      action_values(g, s, player, th, vals);
      double best = -INFINITY, cur = 0.0;
      for (std::size_t a = 0; a < m; ++a) {
        if (allowed[a]) best = std::max(best, vals[a]);
        cur += own[th * m + a] * vals[a];
      }
      worst = std::max(worst, best - cur);
    }
  }
  return worst;
}

// Upper bound on indifference-system size: 4 types x 16 actions + 4.
inline constexpr std::size_t kMaxStageCols = 68;

namespace detail {

inline std::vector<std::uint32_t> ordered_supports(const std::vector<char>& allowed) {
  std::uint32_t mask = 0;
  for (std::size_t a = 0; a < allowed.size(); ++a)
    if (allowed[a]) mask |= 1u << a;
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = mask; s; s = (s - 1) & mask) out.push_back(s);
  auto key = [](std::uint32_t s) {
    std::vector<int> idx;
    for (int a = 0; a < 32; ++a)
      if (s >> a & 1u) idx.push_back(a);
    return idx;
  };
  std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) {
    const int pa = std::popcount(a), pb = std::popcount(b);
    if (pa != pb) return pa < pb;
    return key(a) < key(b);
  });
  return out;
}

// Dense square solve with partial pivoting; `a` is row-major n x (n + 1)
// with the right-hand side in the last column. Returns false when singular.
inline bool gauss_solve(double* a, std::size_t n, double* x, double tiny) {
  const std::size_t w = n + 1;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * w + c]) > std::abs(a[piv * w + c])) piv = r;
    if (std::abs(a[piv * w + c]) <= tiny) return false;
    if (piv != c)
      for (std::size_t j = c; j < w; ++j) std::swap(a[c * w + j], a[piv * w + j]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * w + c] / a[c * w + c];
      if (f == 0.0) continue;
      for (std::size_t j = c; j < w; ++j) a[r * w + j] -= f * a[c * w + j];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double v = a[c * w + n];
    for (std::size_t j = c + 1; j < n; ++j) v -= a[c * w + j] * x[j];
    x[c] = v / a[c * w + c];
  }
  return true;
}

// Solves the indifference system that pins the opponent's mixture on the
// given supports so that every action in `own_support` of every own type is
// equally good. Returns false if the system has no non-negative solution.
inline bool solve_opponent_mixture(const BayesianStageGame& g, std::size_t player, const std::uint32_t* own_support,
                                   const std::uint32_t* opp_support, std::vector<double>& opp_strategy, double tol) {
  const std::size_t n_own = player == 0 ? g.n1 : g.n2;
  const std::size_t n_opp = player == 0 ? g.n2 : g.n1;
  const std::size_t m_opp = player == 0 ? g.m2 : g.m1;
  std::fill(opp_strategy.begin(), opp_strategy.end(), 0.0);

  std::size_t col_type[kMaxStageCols], col_action[kMaxStageCols];
  std::size_t n_mix = 0;
  for (std::size_t tj = 0; tj < n_opp; ++tj)
    for (std::size_t a = 0; a < m_opp; ++a)
      if (opp_support[tj] >> a & 1u) col_type[n_mix] = tj, col_action[n_mix++] = a;
  std::size_t rows = n_opp;
  for (std::size_t ti = 0; ti < n_own; ++ti) rows += static_cast<std::size_t>(std::popcount(own_support[ti]));
  const std::size_t cols = n_mix + n_own;

  // Row-major augmented matrix [A | b].
  double buf[kMaxStageCols * (kMaxStageCols + 1)];
  const std::size_t w = cols + 1;
  std::fill(buf, buf + rows * w, 0.0);
  std::size_t r = 0;
  for (std::size_t ti = 0; ti < n_own; ++ti)
    for (std::size_t a = 0; a < 32; ++a) {
      if (!(own_support[ti] >> a & 1u)) continue;
      for (std::size_t c = 0; c < n_mix; ++c) {
        const std::size_t tj = col_type[c], aj = col_action[c];
        const double wt = player == 0 ? g.w1[ti * g.n2 + tj] : g.w2[ti * g.n1 + tj];
        const double q = player == 0 ? g.q1[g.at(ti, tj, a, aj)] : g.q2[g.at(tj, ti, aj, a)];
        buf[r * w + c] = wt * q;
      }
      buf[r * w + n_mix + ti] = -1.0;
      ++r;
    }
  for (std::size_t tj = 0; tj < n_opp; ++tj) {
    for (std::size_t c = 0; c < n_mix; ++c)
      if (col_type[c] == tj) buf[r * w + c] = 1.0;
    buf[r * w + cols] = 1.0;
    ++r;
  }

  double sol[kMaxStageCols];
  bool solved = false;
  if (rows == cols) {
    double work[kMaxStageCols * (kMaxStageCols + 1)];
    std::copy(buf, buf + rows * w, work);
    solved = gauss_solve(work, cols, sol, 1e-12 * g.scale());
  }
  if (!solved) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[i * w + j];
      b(static_cast<Eigen::Index>(i)) = buf[i * w + cols];
    }
    const Eigen::VectorXd x = A.completeOrthogonalDecomposition().solve(b);
    if (!x.allFinite()) return false;
    for (std::size_t j = 0; j < cols; ++j) sol[j] = x(static_cast<Eigen::Index>(j));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    double res = -buf[i * w + cols];
    for (std::size_t j = 0; j < cols; ++j) res += buf[i * w + j] * sol[j];
    if (!(std::abs(res) <= tol)) return false;
  }
  for (std::size_t c = 0; c < n_mix; ++c) {
    if (sol[c] < -1e-12) return false;
    opp_strategy[col_type[c] * m_opp + col_action[c]] = std::max(sol[c], 0.0);
  }
  for (std::size_t tj = 0; tj < n_opp; ++tj) {
    double s = 0.0;
    for (std::size_t a = 0; a < m_opp; ++a) s += opp_strategy[tj * m_opp + a];
    if (!(s > 0.0)) return false;
    for (std::size_t a = 0; a < m_opp; ++a) opp_strategy[tj * m_opp + a] /= s;
  }
  return true;
}

}  // namespace detail

inline StageProfile uniform_profile(const BayesianStageGame& g) {
  StageProfile s;
  auto fill = [](std::vector<double>& v, std::size_t n, std::size_t m, const std::vector<char>& allowed) {
    v.assign(n * m, 0.0);
    const double cnt = static_cast<double>(std::count(allowed.begin(), allowed.end(), 1));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t a = 0; a < m; ++a)
        if (allowed[a]) v[t * m + a] = 1.0 / cnt;
  };
  fill(s.s1, g.n1, g.m1, g.allowed1);
  fill(s.s2, g.n2, g.m2, g.allowed2);
  return s;
}

// Pure best response of every type, lowest index among ties.
inline StageProfile best_response(const BayesianStageGame& g, const StageProfile& s) {
  StageProfile br;
  br.s1.assign(g.n1 * g.m1, 0.0);
  br.s2.assign(g.n2 * g.m2, 0.0);
  double vals[64];
  for (std::size_t player = 0; player < 2; ++player) {
    const std::size_t n = player == 0 ? g.n1 : g.n2;
    const std::size_t m = player == 0 ? g.m1 : g.m2;
    const auto& allowed = player == 0 ? g.allowed1 : g.allowed2;
    auto& out = player == 0 ? br.s1 : br.s2;
    for (std::size_t th = 0; th < n; ++th) {
      action_values(g, s, player, th, vals);
      std::size_t best = m;
      for (std::size_t a = 0; a < m; ++a)
        if (allowed[a] && (best == m || vals[a] > vals[best] + 1e-12)) best = a;
      out[th * m + best] = 1.0;
    }
  }
  return br;
}

inline StageSolution iterated_best_response(const BayesianStageGame& g, StageProfile start,
                                            const StageSolverOptions& opt = {}) {
  StageSolution best{start, stage_regret(g, start), StageMethod::iterated_best_response};
  StageProfile cur = std::move(start);
  for (std::size_t it = 0; it < opt.br_iterations && best.regret > 0.0; ++it) {
    const StageProfile br = best_response(g, cur);
    for (std::size_t i = 0; i < cur.s1.size(); ++i) cur.s1[i] = (1 - opt.damping) * cur.s1[i] + opt.damping * br.s1[i];
    for (std::size_t i = 0; i < cur.s2.size(); ++i) cur.s2[i] = (1 - opt.damping) * cur.s2[i] + opt.damping * br.s2[i];
    const double r = stage_regret(g, cur);
    if (r < best.regret) best = {cur, r, StageMethod::iterated_best_response};
  }
  return best;
}

inline StageSolution solve_stage(const BayesianStageGame& g, const StageSolverOptions& opt = {}) {
  const double tol = 1e-9 * g.scale();
  const std::size_t agents = g.n1 + g.n2;
  std::vector<std::vector<std::uint32_t>> supports(agents);
  for (std::size_t i = 0; i < agents; ++i) supports[i] = detail::ordered_supports(i < g.n1 ? g.allowed1 : g.allowed2);

  std::size_t max_total = 0;
  for (const auto& s : supports) max_total += static_cast<std::size_t>(std::popcount(s.back()));

  std::vector<std::uint32_t> choice(agents);
  std::vector<std::uint32_t> sup1(g.n1), sup2(g.n2);
  std::size_t budget = opt.max_candidates;
  StageSolution found;
  bool done = false;
  StageProfile cand;
  cand.s1.resize(g.n1 * g.m1);
  cand.s2.resize(g.n2 * g.m2);

  auto try_candidate = [&](bool balanced_pass) -> bool {
    std::size_t d1 = 0, d2 = 0;
    bool pure = true;
    for (std::size_t i = 0; i < agents; ++i) {
      const auto c = static_cast<std::size_t>(std::popcount(choice[i]));
      pure = pure && c == 1;
      (i < g.n1 ? d1 : d2) += c - 1;
      if (i < g.n1)
        sup1[i] = choice[i];
      else
        sup2[i - g.n1] = choice[i];
    }
    if ((d1 == d2) != balanced_pass) return false;
    if (pure) {
      std::fill(cand.s1.begin(), cand.s1.end(), 0.0);
      std::fill(cand.s2.begin(), cand.s2.end(), 0.0);
      for (std::size_t t = 0; t < g.n1; ++t) cand.s1[t * g.m1 + static_cast<std::size_t>(std::countr_zero(sup1[t]))] = 1.0;
      for (std::size_t t = 0; t < g.n2; ++t) cand.s2[t * g.m2 + static_cast<std::size_t>(std::countr_zero(sup2[t]))] = 1.0;
    } else {
      if (budget == 0) return false;
      --budget;
      if (!detail::solve_opponent_mixture(g, 0, sup1.data(), sup2.data(), cand.s2, tol)) return false;
      if (!detail::solve_opponent_mixture(g, 1, sup2.data(), sup1.data(), cand.s1, tol)) return false;
    }
    const double r = stage_regret(g, cand);
    if (r > tol) return false;
    found = {cand, r, pure ? StageMethod::pure : StageMethod::support_enumeration};
    return true;
  };

  std::function<void(std::size_t, std::size_t, bool)> rec = [&](std::size_t i, std::size_t left, bool balanced) {
    if (done) return;
    if (i == agents) {
      if (left == 0 && try_candidate(balanced)) done = true;
      return;
    }
    const std::size_t rest = agents - i - 1;
    for (std::uint32_t s : supports[i]) {
      const auto c = static_cast<std::size_t>(std::popcount(s));
      if (c > left || left - c < rest) continue;
      choice[i] = s;
      rec(i + 1, left - c, balanced);
      if (done) return;
    }
  };

  for (int pass = 0; pass < 2 && !done; ++pass)
    for (std::size_t total = agents; total <= max_total && !done; ++total) {
      rec(0, total, pass == 0);
      if (budget == 0) break;
    }
  if (done) return found;
  return iterated_best_response(g, uniform_profile(g), opt);
}

}  // namespace ztrust
