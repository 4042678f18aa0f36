#pragma once

// epsilon-PBNE of finite-horizon Markov games by backward induction over a
// grid on the public joint posterior mu in Delta(Theta1 x Theta2). Each
// player's conditional belief b_i(theta_j | theta_i) is read off mu, so both
// beliefs evolve by the same Bayes step and one-sided games are the case
// |Theta1| = 1.
//
// At each (k, x, grid point) the Bayesian stage game uses continuation
// values interpolated from stage k+1 at the posteriors induced by the stage
// strategies; the strategies and posteriors are iterated to a fixed point.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ztrust/error.hpp"
#include "ztrust/game.hpp"
#include "ztrust/parallel.hpp"
#include "ztrust/random.hpp"
#include "ztrust/simplex_grid.hpp"
#include "ztrust/stage_solver.hpp"
#include "ztrust/trace.hpp"

namespace ztrust {

struct SolveOptions {
  std::size_t grid_resolution = 20;
  bool certify = true;
  std::size_t certify_samples = 0;  // 0 or >= tuple count: every tuple
  std::uint64_t certify_seed = 0;
  std::size_t threads = 1;
  std::size_t consistency_iterations = 30;
  StageSolverOptions stage;
};

inline constexpr const char* kSelectionRule = "support-size-then-action-index";

struct SolvedPolicy {
  std::string game_name;
  std::size_t horizon = 0;
  std::size_t grid_resolution = 0;
  SimplexGrid grid;
  std::size_t n1 = 1, n2 = 1;
  std::vector<std::size_t> m1, m2;  // per decision stage
  // profiles[k][x]: one block of n1*m1[k] + n2*m2[k] entries per grid point,
  // defender rows first.
  std::vector<std::vector<std::vector<double>>> profiles;
  // values[k][x]: one block of 2 * |Theta1 x Theta2| per grid point, holding
  // each player's value conditional on the joint type.
  std::vector<std::vector<std::vector<double>>> values;
  double epsilon = 0.0;
  bool certified = false;
  double max_stage_regret = 0.0;  // residual of the stage fixed points
  std::size_t fallback_points = 0;
  std::string selection = kSelectionRule;

  std::size_t joint_types() const { return n1 * n2; }
  std::size_t block(std::size_t k) const { return n1 * m1[k] + n2 * m2[k]; }
  std::span<const double> profile(std::size_t k, std::size_t x, std::size_t g) const {
    return {profiles[k][x].data() + g * block(k), block(k)};
  }
};

namespace detail {

// Dense per-(k, x) tables. Children are the (successor, evidence) pairs.
struct StageContext {
  std::size_t k = 0, x = 0, m1 = 1, m2 = 1, n1 = 1, n2 = 1, T = 1, E = 1;
  std::vector<std::size_t> next;
  std::vector<double> P;  // [((a1 * m2 + a2) * T + t) * |next| + j]
  std::vector<double> H;  // [(a2 * n2 + th2) * E + e]
  std::vector<double> U;  // [((a1 * m2 + a2) * T + t) * 2 + i]
  std::vector<char> allowed1, allowed2;

  std::size_t children() const { return next.size() * E; }
};

inline StageContext make_context(const GameDefinition& g, std::size_t k, std::size_t x) {
  StageContext c;
  c.k = k, c.x = x;
  c.m1 = g.num_actions(k, 0), c.m2 = g.num_actions(k, 1);
  c.n1 = g.num_types(0), c.n2 = g.num_types(1);
  c.T = c.n1 * c.n2;
  c.E = g.num_evidence();
  c.next = successors(g, k, x);
  std::vector<std::size_t> slot(g.num_states(k + 1), SIZE_MAX);
  for (std::size_t j = 0; j < c.next.size(); ++j) slot[c.next[j]] = j;
  c.P.assign(c.m1 * c.m2 * c.T * c.next.size(), 0.0);
  c.U.assign(c.m1 * c.m2 * c.T * 2, 0.0);
  for (std::size_t a1 = 0; a1 < c.m1; ++a1)
    for (std::size_t a2 = 0; a2 < c.m2; ++a2)
      for (std::size_t t = 0; t < c.T; ++t) {
        const std::size_t base = (a1 * c.m2 + a2) * c.T + t;
        for (const auto& o : g.outcomes(k, x, a1, a2, t))
          if (o.prob > 0.0) c.P[base * c.next.size() + slot[o.next]] += o.prob;
        const auto& u = g.payoff(k, x, a1, a2, t);
        c.U[base * 2] = u[0];
        c.U[base * 2 + 1] = u[1];
      }
  c.H.assign(c.m2 * c.n2 * c.E, 1.0);
  for (std::size_t a2 = 0; a2 < c.m2; ++a2)
    for (std::size_t th2 = 0; th2 < c.n2; ++th2)
      for (std::size_t e = 0; e < c.E; ++e) c.H[(a2 * c.n2 + th2) * c.E + e] = g.evidence_prob(k, e, a2, th2);
  c.allowed1.assign(c.m1, 1);
  c.allowed2.assign(c.m2, 1);
  for (std::size_t a = 0; a < c.m1; ++a) c.allowed1[a] = g.is_allowed(k, x, 0, a);
  for (std::size_t a = 0; a < c.m2; ++a) c.allowed2[a] = g.is_allowed(k, x, 1, a);
  return c;
}

// lik[c * T + t] = Pr[child c | t] under the flat stage profile.
inline void child_likelihoods(const StageContext& c, std::span<const double> prof, std::vector<double>& lik) {
  const std::size_t nx = c.next.size();
  lik.assign(c.children() * c.T, 0.0);
  const double* s1 = prof.data();
  const double* s2 = prof.data() + c.n1 * c.m1;
  for (std::size_t t = 0; t < c.T; ++t) {
    const std::size_t th1 = t / c.n2, th2 = t % c.n2;
    for (std::size_t a1 = 0; a1 < c.m1; ++a1) {
      const double p1 = s1[th1 * c.m1 + a1];
      if (p1 == 0.0) continue;
      for (std::size_t a2 = 0; a2 < c.m2; ++a2) {
        const double pp = p1 * s2[th2 * c.m2 + a2];
        if (pp == 0.0) continue;
        const double* row = &c.P[((a1 * c.m2 + a2) * c.T + t) * nx];
        const double* h = &c.H[(a2 * c.n2 + th2) * c.E];
        for (std::size_t j = 0; j < nx; ++j) {
          if (row[j] == 0.0) continue;
          for (std::size_t e = 0; e < c.E; ++e) lik[(j * c.E + e) * c.T + t] += pp * row[j] * h[e];
        }
      }
    }
  }
}

// Posterior per child; off-path children keep mu. Returns on-path flags.
inline void child_posteriors(const StageContext& c, std::span<const double> mu, const std::vector<double>& lik,
                             std::vector<double>& post, std::vector<char>& on_path) {
  post.resize(c.children() * c.T);
  on_path.assign(c.children(), 0);
  std::vector<double> tmp;
  for (std::size_t ch = 0; ch < c.children(); ++ch) {
    on_path[ch] = update_joint(mu, std::span<const double>(&lik[ch * c.T], c.T), tmp);
    std::copy(tmp.begin(), tmp.end(), post.begin() + static_cast<std::ptrdiff_t>(ch * c.T));
  }
}

inline void conditional(std::span<const double> mu, std::size_t n1, std::size_t n2, std::size_t player, std::size_t own,
                        double* out) {
  const std::size_t nj = player == 0 ? n2 : n1;
  double mass = 0.0;
  for (std::size_t j = 0; j < nj; ++j) {
    out[j] = player == 0 ? mu[own * n2 + j] : mu[j * n2 + own];
    mass += out[j];
  }
  if (mass > 0.0) {
    for (std::size_t j = 0; j < nj; ++j) out[j] /= mass;
    return;
  }
  std::fill(out, out + nj, 0.0);
  for (std::size_t t = 0; t < n1 * n2; ++t) out[player == 0 ? t % n2 : t / n2] += mu[t];
}

// Stage game with Q_i(t, a1, a2) = u_i + sum_children Pr * cont_i.
inline void build_stage_game(const StageContext& c, std::span<const double> mu, const std::vector<double>& cont,
                             BayesianStageGame& G) {
  G.resize(c.n1, c.n2, c.m1, c.m2);
  G.allowed1 = c.allowed1;
  G.allowed2 = c.allowed2;
  for (std::size_t th1 = 0; th1 < c.n1; ++th1) conditional(mu, c.n1, c.n2, 0, th1, &G.w1[th1 * c.n2]);
  for (std::size_t th2 = 0; th2 < c.n2; ++th2) conditional(mu, c.n1, c.n2, 1, th2, &G.w2[th2 * c.n1]);
  const std::size_t nx = c.next.size();
  for (std::size_t t = 0; t < c.T; ++t) {
    const std::size_t th1 = t / c.n2, th2 = t % c.n2;
    for (std::size_t a1 = 0; a1 < c.m1; ++a1)
      for (std::size_t a2 = 0; a2 < c.m2; ++a2) {
        const std::size_t base = (a1 * c.m2 + a2) * c.T + t;
        double v0 = c.U[base * 2], v1 = c.U[base * 2 + 1];
        const double* row = &c.P[base * nx];
        const double* h = &c.H[(a2 * c.n2 + th2) * c.E];
        for (std::size_t j = 0; j < nx; ++j) {
          if (row[j] == 0.0) continue;
          for (std::size_t e = 0; e < c.E; ++e) {
            const double w = row[j] * h[e];
            if (w == 0.0) continue;
            const std::size_t ch = j * c.E + e;
            v0 += w * cont[(ch * c.T + t) * 2];
            v1 += w * cont[(ch * c.T + t) * 2 + 1];
          }
        }
        const std::size_t idx = G.at(th1, th2, a1, a2);
        G.q1[idx] = v0;
        G.q2[idx] = v1;
      }
  }
}

inline void profile_to_flat(const StageProfile& p, std::vector<double>& flat) {
  flat.assign(p.s1.begin(), p.s1.end());
  flat.insert(flat.end(), p.s2.begin(), p.s2.end());
}

inline StageProfile flat_to_profile(std::span<const double> flat, std::size_t n1m1) {
  StageProfile p;
  p.s1.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n1m1));
  p.s2.assign(flat.begin() + static_cast<std::ptrdiff_t>(n1m1), flat.end());
  return p;
}

// W[t * 2 + i] under the profile.
inline void profile_values(const StageContext& c, const BayesianStageGame& G, const StageProfile& p,
                           std::vector<double>& W) {
  W.assign(c.T * 2, 0.0);
  for (std::size_t t = 0; t < c.T; ++t) {
    const std::size_t th1 = t / c.n2, th2 = t % c.n2;
    for (std::size_t a1 = 0; a1 < c.m1; ++a1) {
      const double p1 = p.s1[th1 * c.m1 + a1];
      if (p1 == 0.0) continue;
      for (std::size_t a2 = 0; a2 < c.m2; ++a2) {
        const double pp = p1 * p.s2[th2 * c.m2 + a2];
        if (pp == 0.0) continue;
        const std::size_t idx = G.at(th1, th2, a1, a2);
        W[t * 2] += pp * G.q1[idx];
        W[t * 2 + 1] += pp * G.q2[idx];
      }
    }
  }
}

}  // namespace detail

// Conditional values at stage k (k = K reads the terminal payoff),
// interpolated on the grid: out[t * 2 + i].
inline void values_at(const GameDefinition& g, const SolvedPolicy& pol, std::size_t k, std::size_t x,
                      std::span<const double> mu, std::vector<double>& out,
                      std::vector<SimplexGrid::Vertex>& scratch) {
  const std::size_t T = pol.joint_types();
  out.assign(T * 2, 0.0);
  if (k == pol.horizon) {
    for (std::size_t t = 0; t < T; ++t) out[t * 2] = g.terminal[x][t][0], out[t * 2 + 1] = g.terminal[x][t][1];
    return;
  }
  pol.grid.interpolate(mu, scratch);
  const auto& tab = pol.values[k][x];
  for (const auto& v : scratch)
    for (std::size_t i = 0; i < T * 2; ++i) out[i] += v.weight * tab[v.index * T * 2 + i];
}

// Stage strategies at an arbitrary belief, as a barycentric mixture of the
// grid strategies around it.
inline void profile_at(const SolvedPolicy& pol, std::size_t k, std::size_t x, std::span<const double> mu,
                       std::vector<double>& out, std::vector<SimplexGrid::Vertex>& scratch) {
  const std::size_t B = pol.block(k);
  out.assign(B, 0.0);
  pol.grid.interpolate(mu, scratch);
  if (scratch.size() == 1) {
    const auto p = pol.profile(k, x, scratch[0].index);
    out.assign(p.begin(), p.end());
    return;
  }
  for (const auto& v : scratch) {
    const auto p = pol.profile(k, x, v.index);
    for (std::size_t i = 0; i < B; ++i) out[i] += v.weight * p[i];
  }
}

inline StageStrategies strategies_at(const SolvedPolicy& pol, std::size_t k, std::size_t x,
                                     std::span<const double> mu) {
  std::vector<double> flat;
  std::vector<SimplexGrid::Vertex> scratch;
  profile_at(pol, k, x, mu, flat, scratch);
  StageStrategies s;
  s.p[0].assign(pol.n1, std::vector<double>(pol.m1[k]));
  s.p[1].assign(pol.n2, std::vector<double>(pol.m2[k]));
  for (std::size_t t = 0; t < pol.n1; ++t)
    for (std::size_t a = 0; a < pol.m1[k]; ++a) s.p[0][t][a] = flat[t * pol.m1[k] + a];
  const std::size_t off = pol.n1 * pol.m1[k];
  for (std::size_t t = 0; t < pol.n2; ++t)
    for (std::size_t a = 0; a < pol.m2[k]; ++a) s.p[1][t][a] = flat[off + t * pol.m2[k] + a];
  return s;
}

inline void check_solver_guards(const GameDefinition& g) {
  require(g.validated(), "game", "not validated");
  const std::size_t n1 = g.num_types(0), n2 = g.num_types(1);
  std::size_t max_actions = 0;
  for (std::size_t k = 0; k < g.horizon; ++k)
    max_actions = std::max({max_actions, g.num_actions(k, 0), g.num_actions(k, 1)});
  if (g.info_mode == InfoMode::two_sided && (n1 > 4 || n2 > 4 || max_actions > 6))
    throw GuardError("game '" + g.name + "'", "two-sided solving needs at most 4 types and 6 actions per player (got " +
                                                  std::to_string(n1) + "x" + std::to_string(n2) + " types, " +
                                                  std::to_string(max_actions) + " actions)");
  if (n1 > 4 || n2 > 4 || max_actions > 16 || n1 * n2 > SimplexGrid::kMaxDim)
    throw GuardError("game '" + g.name + "'", "stage games are limited to 4 types and 16 actions per player");
}

namespace detail {

// Exact rollouts of a (possibly partially solved) policy. Stage contexts are
// built once; every call is const and allocates its own scratch, so one
// evaluator is shared by all worker threads.
class Evaluator {
public:
  Evaluator(const GameDefinition& g, const SolvedPolicy& pol) : g_(g), pol_(pol) {
    ctx_.resize(g.horizon);
    for (std::size_t k = 0; k < g.horizon; ++k)
      for (std::size_t x = 0; x < g.num_states(k); ++x) ctx_[k].push_back(make_context(g, k, x));
  }

  const StageContext& context(std::size_t k, std::size_t x) const { return ctx_[k][x]; }

  // out[t * 2 + i]: value of the policy from (k, x, mu) for joint type t.
  void values(std::size_t k, std::size_t x, std::span<const double> mu, std::vector<double>& out) const {
    const std::size_t T = pol_.joint_types();
    if (k == g_.horizon) {
      out.resize(T * 2);
      for (std::size_t t = 0; t < T; ++t) out[t * 2] = g_.terminal[x][t][0], out[t * 2 + 1] = g_.terminal[x][t][1];
      return;
    }
    const auto& c = ctx_[k][x];
    std::vector<double> prof, lik, post, cont;
    std::vector<char> on_path;
    std::vector<SimplexGrid::Vertex> scratch;
    profile_at(pol_, k, x, mu, prof, scratch);
    child_likelihoods(c, prof, lik);
    child_posteriors(c, mu, lik, post, on_path);
    children(c, post, &lik, cont);
    BayesianStageGame G;
    build_stage_game(c, mu, cont, G);
    profile_values(c, G, flat_to_profile(prof, c.n1 * c.m1), out);
  }

  // Continuation values of every child at the given posteriors. With `lik`,
  // children no type can reach are skipped (left at zero). Types with zero
  // mass still get values: a deviation one stage up can put weight on them.
  void children(const StageContext& c, const std::vector<double>& post, const std::vector<double>* lik,
                std::vector<double>& cont) const {
    const std::size_t T = c.T;
    cont.assign(c.children() * T * 2, 0.0);
    std::vector<double> child;
    for (std::size_t ch = 0; ch < c.children(); ++ch) {
      if (lik) {
        bool reached = false;
        for (std::size_t t = 0; t < T; ++t) reached = reached || (*lik)[ch * T + t] > 0.0;
        if (!reached) continue;
      }
      values(c.k + 1, c.next[ch / c.E], std::span<const double>(&post[ch * T], T), child);
      std::copy(child.begin(), child.end(), cont.begin() + static_cast<std::ptrdiff_t>(ch * T * 2));
    }
  }

private:
  const GameDefinition& g_;
  const SolvedPolicy& pol_;
  std::vector<std::vector<StageContext>> ctx_;
};

}  // namespace detail

// Exact values of the policy from (k, x, mu): out[t * 2 + i].
inline void evaluate(const GameDefinition& g, const SolvedPolicy& pol, std::size_t k, std::size_t x,
                     std::span<const double> mu, std::vector<double>& out) {
  detail::Evaluator(g, pol).values(k, x, mu, out);
}

// Largest gain from a one-stage unilateral deviation, over (stage, state,
// grid point) tuples and all types of both players. Continuations are exact
// rollouts of the policy; a deviation leaves the public posterior computed
// from the policy, so children reached only by deviating keep mu.
inline double certify_epsilon(const GameDefinition& g, const SolvedPolicy& pol, std::size_t samples = 0,
                              std::uint64_t seed = 0, std::size_t threads = 1) {
  require(pol.horizon == g.horizon && pol.joint_types() == g.joint_types(), "policy", "does not match the game");
  const detail::Evaluator ev(g, pol);
  const std::size_t G = pol.grid.size();
  struct Tuple {
    std::size_t k, x, g;
  };
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t k = 0; k < g.horizon; ++k)
    for (std::size_t x = 0; x < g.num_states(k); ++x) cells.emplace_back(k, x);
  const std::size_t total = cells.size() * G;
  auto tuple_of = [&](std::size_t idx) { return Tuple{cells[idx / G].first, cells[idx / G].second, idx % G}; };
  std::vector<Tuple> tuples;
  if (samples == 0 || samples >= total) {
    tuples.reserve(total);
    for (std::size_t i = 0; i < total; ++i) tuples.push_back(tuple_of(i));
  } else {
    // Uniform draws with replacement.
    Rng rng(seed);
    for (std::size_t i = 0; i < samples; ++i) tuples.push_back(tuple_of(static_cast<std::size_t>(rng.next() % total)));
  }
  std::vector<double> gain(tuples.size(), 0.0);
  parallel_for(tuples.size(), threads, [&](std::size_t i) {
    const auto& c = ev.context(tuples[i].k, tuples[i].x);
    const auto mu = pol.grid.point(tuples[i].g);
    const auto prof = pol.profile(c.k, c.x, tuples[i].g);
    std::vector<double> lik, post, cont;
    std::vector<char> on_path;
    detail::child_likelihoods(c, prof, lik);
    detail::child_posteriors(c, mu, lik, post, on_path);
    ev.children(c, post, nullptr, cont);
    BayesianStageGame sg;
    detail::build_stage_game(c, mu, cont, sg);
    gain[i] = stage_regret(sg, detail::flat_to_profile(prof, c.n1 * c.m1));
  });
  double eps = 0.0;
  for (double v : gain) eps = std::max(eps, v);
  return eps;
}

namespace detail {

struct PointSolution {
  std::vector<double> profile;
  std::vector<double> values;
  double regret = 0.0;
  bool fallback = false;
};

class PointSolver {
public:
  PointSolver(const Evaluator& ev, const StageContext& c, const SolveOptions& opt, bool belief_free)
      : ev_(ev), c_(c), opt_(opt), belief_free_(belief_free) {}

  PointSolution solve(std::span<const double> mu) {
    const std::size_t T = c_.T;
    std::vector<double> post(c_.children() * T);
    for (std::size_t ch = 0; ch < c_.children(); ++ch)
      std::copy(mu.begin(), mu.end(), post.begin() + static_cast<std::ptrdiff_t>(ch * T));
    ev_.children(c_, post, nullptr, cont_);

    PointSolution best;
    best.regret = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> history, iterates;
    bool converged = false;
    for (std::size_t it = 0; it < std::max<std::size_t>(opt_.consistency_iterations, 1); ++it) {
      build_stage_game(c_, mu, cont_, G_);
      const auto sol = solve_stage(G_, opt_.stage);
      std::vector<double> flat;
      profile_to_flat(sol.profile, flat);
      consider(mu, flat, sol.profile, best, sol.method == StageMethod::iterated_best_response);
      iterates.push_back(flat);
      if (belief_free_) {
        converged = true;
        break;
      }
      double diff = 0.0;
      for (std::size_t i = 0; i < post.size(); ++i) diff = std::max(diff, std::abs(post_[i] - post[i]));
      if (diff <= 1e-10) {
        converged = true;
        break;
      }
      bool cycle = false;
      for (const auto& h : history) {
        double d = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) d = std::max(d, std::abs(h[i] - post_[i]));
        cycle = cycle || d <= 1e-10;
      }
      if (cycle) break;
      history.push_back(post);
      post = post_;
      cont_ = cont2_;
    }
    if (!converged && best.regret > tolerance()) {
      // The posteriors cycle between iterates: an equilibrium mixes over the
      // union of their supports. Try the tail unions, longest cycle last.
      for (std::size_t from = iterates.size(); from-- > 0 && best.regret > tolerance();) {
        std::vector<double> avg(iterates[from].size(), 0.0);
        for (std::size_t i = from; i < iterates.size(); ++i)
          for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += iterates[i][j] / double(iterates.size() - from);
        refine(mu, avg, best);
      }
    }
    if (!converged && best.regret > tolerance()) {
      // Damped best response on the strategy-dependent game.
      StageProfile s = flat_to_profile(best.profile, c_.n1 * c_.m1);
      for (std::size_t it = 0; it < opt_.stage.br_iterations; ++it) {
        std::vector<double> flat;
        profile_to_flat(s, flat);
        if (consider(mu, flat, s, best, true) <= tolerance()) break;
        const auto br = best_response(G_, s);
        const double d = opt_.stage.damping;
        for (std::size_t i = 0; i < s.s1.size(); ++i) s.s1[i] = (1 - d) * s.s1[i] + d * br.s1[i];
        for (std::size_t i = 0; i < s.s2.size(); ++i) s.s2[i] = (1 - d) * s.s2[i] + d * br.s2[i];
      }
      refine(mu, best.profile, best);
    }
    if (!converged && best.regret > tolerance()) search(mu, best);
    best.fallback = best.regret > tolerance();
    return best;
  }

private:
  double tolerance() const { return 1e-7 * G_.scale(); }

  // Last resort: Newton from the centre of every support profile, smallest
  // supports first, up to a fixed budget.
  void search(std::span<const double> mu, PointSolution& best) {
    std::vector<std::vector<std::uint32_t>> row_supports;
    std::vector<std::size_t> row_offset, row_m;
    for (std::size_t player = 0; player < 2; ++player) {
      const std::size_t n = player == 0 ? c_.n1 : c_.n2, m = player == 0 ? c_.m1 : c_.m2;
      const auto& allowed = player == 0 ? c_.allowed1 : c_.allowed2;
      for (std::size_t th = 0; th < n; ++th) {
        row_supports.push_back(ordered_supports(allowed));
        row_offset.push_back(player == 0 ? th * m : c_.n1 * c_.m1 + th * m);
        row_m.push_back(m);
      }
    }
    struct Combo {
      std::size_t size;
      std::vector<std::uint32_t> masks;
    };
    std::vector<Combo> combos{{0, {}}};
    for (const auto& sup : row_supports) {
      std::vector<Combo> next;
      for (const auto& c : combos)
        for (auto mask : sup) {
          if (next.size() >= kSearchBudget) break;
          auto masks = c.masks;
          masks.push_back(mask);
          next.push_back({c.size + static_cast<std::size_t>(std::popcount(mask)) - 1, std::move(masks)});
        }
      combos = std::move(next);
    }
    std::stable_sort(combos.begin(), combos.end(), [](const Combo& a, const Combo& b) { return a.size < b.size; });
    std::vector<double> start(best.profile.size());
    for (const auto& c : combos) {
      if (best.regret <= tolerance()) return;
      std::fill(start.begin(), start.end(), 0.0);
      for (std::size_t r = 0; r < c.masks.size(); ++r) {
        const double w = 1.0 / std::popcount(c.masks[r]);
        for (std::size_t a = 0; a < row_m[r]; ++a)
          if (c.masks[r] >> a & 1u) start[row_offset[r] + a] = w;
      }
      refine(mu, start, best);
    }
  }
  static constexpr std::size_t kSearchBudget = 4096;

  // Newton on the indifference conditions of the support of `start` in the
  // strategy-dependent game, with a forward-difference Jacobian and
  // backtracking on the residual norm.
  void refine(std::span<const double> mu, const std::vector<double>& start, PointSolution& best) {
    struct Row {
      std::size_t offset, m;  // flat offset of the type's row, action count
      std::vector<std::size_t> support;
      std::size_t player, type;
    };
    std::vector<Row> rows;
    std::size_t dim = 0;
    for (std::size_t player = 0; player < 2; ++player) {
      const std::size_t n = player == 0 ? c_.n1 : c_.n2, m = player == 0 ? c_.m1 : c_.m2;
      const auto& allowed = player == 0 ? c_.allowed1 : c_.allowed2;
      for (std::size_t th = 0; th < n; ++th) {
        Row r{player == 0 ? th * m : c_.n1 * c_.m1 + th * m, m, {}, player, th};
        for (std::size_t a = 0; a < m; ++a)
          if (allowed[a] && start[r.offset + a] > 1e-6) r.support.push_back(a);
        if (r.support.size() > 1) {
          dim += r.support.size() - 1;
          rows.push_back(std::move(r));
        }
      }
    }
    if (dim == 0) {
      consider(mu, start, flat_to_profile(start, c_.n1 * c_.m1), best, false);
      return;
    }
    if (dim > 24) return;

    std::vector<double> flat = start;
    auto assign = [&](const Eigen::VectorXd& z) {
      std::size_t v = 0;
      for (const auto& r : rows) {
        std::fill(flat.begin() + static_cast<std::ptrdiff_t>(r.offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(r.offset + r.m), 0.0);
        double rest = 1.0;
        for (std::size_t j = 0; j + 1 < r.support.size(); ++j, ++v) {
          flat[r.offset + r.support[j]] = z[v];
          rest -= z[v];
        }
        flat[r.offset + r.support.back()] = rest;
      }
    };
    double vals[64];
    auto residual = [&](const Eigen::VectorXd& z, Eigen::VectorXd& out) {
      assign(z);
      child_likelihoods(c_, flat, lik_);
      child_posteriors(c_, mu, lik_, post_, on_path_);
      ev_.children(c_, post_, nullptr, cont2_);
      build_stage_game(c_, mu, cont2_, G_);
      const auto p = flat_to_profile(flat, c_.n1 * c_.m1);
      out.resize(static_cast<Eigen::Index>(dim));
      std::size_t v = 0;
      for (const auto& r : rows) {
        action_values(G_, p, r.player, r.type, vals);
        for (std::size_t j = 0; j + 1 < r.support.size(); ++j) out[v++] = vals[r.support[j]] - vals[r.support.back()];
      }
      return out.norm();
    };
    // Keeps each row inside its simplex.
    auto project = [&](Eigen::VectorXd& z) {
      std::size_t v = 0;
      for (const auto& r : rows) {
        const std::size_t L = r.support.size() - 1;
        double sum = 0.0;
        for (std::size_t j = 0; j < L; ++j) sum += (z[v + j] = std::clamp(z[v + j], 0.0, 1.0));
        if (sum > 1.0)
          for (std::size_t j = 0; j < L; ++j) z[v + j] /= sum;
        v += L;
      }
    };

    Eigen::VectorXd z(static_cast<Eigen::Index>(dim)), r, rt, zt;
    {
      std::size_t v = 0;
      for (const auto& row : rows) {
        double total = 0.0;
        for (auto a : row.support) total += start[row.offset + a];
        for (std::size_t j = 0; j + 1 < row.support.size(); ++j) z[v++] = start[row.offset + row.support[j]] / total;
      }
    }
    double norm = residual(z, r);
    Eigen::MatrixXd J(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t it = 0; it < 40 && norm > 1e-12 * G_.scale(); ++it) {
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        zt = z;
        const double h = zt[i] > 0.5 ? -1e-7 : 1e-7;
        zt[i] += h;
        residual(zt, rt);
        J.col(i) = (rt - r) / h;
      }
      const Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
      bool moved = false;
      for (double t = 1.0; t > 1e-4; t *= 0.5) {
        zt = z + t * step;
        project(zt);
        const double n = residual(zt, rt);
        if (n < norm) {
          z = zt, r = rt, norm = n, moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (dim == 1 && norm > 1e-12 * G_.scale()) {
      // Piecewise-linear continuations leave flat stretches that stall
      // Newton; a single unknown can be bracketed instead.
      Eigen::VectorXd lo(1), hi(1);
      double flo = 0.0;
      for (int i = 0; i <= 32; ++i) {
        hi[0] = i / 32.0;
        residual(hi, rt);
        const double fhi = rt[0];
        if (i > 0 && (flo <= 0.0) != (fhi <= 0.0)) {
          for (int it = 0; it < 60; ++it) {
            zt = (lo + hi) / 2;
            residual(zt, rt);
            if ((rt[0] <= 0.0) == (flo <= 0.0))
              lo = zt, flo = rt[0];
            else
              hi = zt;
          }
          assign((lo + hi) / 2);
          consider(mu, flat, flat_to_profile(flat, c_.n1 * c_.m1), best, false);
          if (best.regret <= tolerance()) return;
        }
        lo = hi, flo = fhi;
      }
    }
    assign(z);
    consider(mu, flat, flat_to_profile(flat, c_.n1 * c_.m1), best, false);
  }

  // Scores a candidate by its regret in the game built from the posteriors
  // it induces itself; leaves that game in G_, its continuation in cont2_
  // and the posteriors in post_.
  double consider(std::span<const double> mu, const std::vector<double>& flat, const StageProfile& p,
                  PointSolution& best, bool fallback) {
    child_likelihoods(c_, flat, lik_);
    child_posteriors(c_, mu, lik_, post_, on_path_);
    ev_.children(c_, post_, nullptr, cont2_);
    build_stage_game(c_, mu, cont2_, G_);
    const double reg = stage_regret(G_, p);
    if (reg < best.regret) {
      best.regret = reg;
      best.profile = flat;
      best.fallback = fallback;
      profile_values(c_, G_, p, best.values);
    }
    return reg;
  }

  const Evaluator& ev_;
  const StageContext& c_;
  const SolveOptions& opt_;
  bool belief_free_;
  BayesianStageGame G_;
  std::vector<double> cont_, cont2_, lik_, post_;
  std::vector<char> on_path_;
};

}  // namespace detail

inline SolvedPolicy solve_pbne(const GameDefinition& g, const SolveOptions& opt = {}) {
  require(opt.grid_resolution >= 1, "grid_resolution", "must be a positive integer");
  check_solver_guards(g);
  SolvedPolicy pol;
  pol.game_name = g.name;
  pol.horizon = g.horizon;
  pol.grid_resolution = opt.grid_resolution;
  pol.n1 = g.num_types(0);
  pol.n2 = g.num_types(1);
  pol.grid = SimplexGrid(pol.joint_types(), opt.grid_resolution);
  for (std::size_t k = 0; k < g.horizon; ++k) {
    pol.m1.push_back(g.num_actions(k, 0));
    pol.m2.push_back(g.num_actions(k, 1));
  }
  pol.profiles.assign(g.horizon, {});
  pol.values.assign(g.horizon, {});
  const std::size_t G = pol.grid.size();
  const std::size_t T = pol.joint_types();

  const detail::Evaluator ev(g, pol);
  for (std::size_t k = g.horizon; k-- > 0;) {
    pol.profiles[k].assign(g.num_states(k), std::vector<double>(G * pol.block(k)));
    pol.values[k].assign(g.num_states(k), std::vector<double>(G * T * 2));
    for (std::size_t x = 0; x < g.num_states(k); ++x) {
      const auto& c = ev.context(k, x);
      std::vector<double> regret(G, 0.0);
      std::vector<char> fallback(G, 0);
      parallel_for(
          G, opt.threads,
          [&](std::size_t gp) {
            detail::PointSolver solver(ev, c, opt, k + 1 == g.horizon);
            const auto sol = solver.solve(pol.grid.point(gp));
            std::copy(sol.profile.begin(), sol.profile.end(),
                      pol.profiles[k][x].begin() + static_cast<std::ptrdiff_t>(gp * pol.block(k)));
            std::copy(sol.values.begin(), sol.values.end(),
                      pol.values[k][x].begin() + static_cast<std::ptrdiff_t>(gp * T * 2));
            regret[gp] = sol.regret;
            fallback[gp] = sol.fallback;
          },
          64);
      for (std::size_t gp = 0; gp < G; ++gp) {
        pol.max_stage_regret = std::max(pol.max_stage_regret, regret[gp]);
        pol.fallback_points += fallback[gp] ? 1 : 0;
      }
    }
  }
  if (opt.certify) {
    pol.epsilon = certify_epsilon(g, pol, opt.certify_samples, opt.certify_seed, opt.threads);
    pol.certified = true;
  } else {
    pol.epsilon = pol.max_stage_regret;
  }
  return pol;
}

// One play of the game under the policy. Per-stage random streams keep the
// draws of different purposes independent.
inline SimulationTrace simulate_play(const GameDefinition& g, const SolvedPolicy& pol, std::size_t th1,
                                     std::size_t th2, std::uint64_t seed) {
  require(th1 < g.num_types(0), "true_types.defender", "out of range");
  require(th2 < g.num_types(1), "true_types.agent", "out of range");
  enum : std::uint64_t { kInit = 0, kDefenderAct = 1, kAgentAct = 2, kMove = 3, kEvidence = 4 };
  const std::size_t t = g.joint(th1, th2);
  SimulationTrace trace;
  trace.seed = seed;
  trace.policy = "pbne";
  trace.agent = g.types[1].labels[th2];

  std::size_t x = Rng::stream(seed, g.horizon, kInit).categorical(g.initial_state);
  std::vector<double> mu = g.prior, next_mu, lik;
  BeliefState b1{kDefender, {}}, b2{kAgent, {}};
  conditional_belief(g, mu, kDefender, th1, b1.point);
  conditional_belief(g, mu, kAgent, th2, b2.point);
  std::size_t good = 0;
  while (good < g.types[1].size() && !g.types[1].is_trusted(good)) ++good;
  auto fill_beliefs = [&](TraceRecord& r) {
    r.belief_defender = b1.point;
    r.belief_agent = b2.point;
    r.belief_good = good < b1.point.size() ? b1.point[good] : 0.0;
    r.ts = trust_score(TrustState{"", b1.point, 0}, g.types[1]).value;
  };
  bool off_path = false;
  for (std::size_t k = 0; k < g.horizon; ++k) {
    const auto s = strategies_at(pol, k, x, mu);
    const std::size_t a1 = Rng::stream(seed, k, kDefenderAct).categorical(s.p[0][th1]);
    const std::size_t a2 = Rng::stream(seed, k, kAgentAct).categorical(s.p[1][th2]);
    const auto& row = g.outcomes(k, x, a1, a2, t);
    std::vector<double> probs;
    for (const auto& o : row) probs.push_back(o.prob);
    const std::size_t xn = row[Rng::stream(seed, k, kMove).categorical(probs)].next;
    std::optional<std::size_t> e;
    if (g.evidence) {
      std::vector<double> ep(g.num_evidence());
      for (std::size_t i = 0; i < ep.size(); ++i) ep[i] = g.evidence_prob(k, i, a2, th2);
      e = Rng::stream(seed, k, kEvidence).categorical(ep);
    }
    TraceRecord r;
    r.stage = k;
    r.state = g.states[k][x];
    r.defender_action = g.actions[k][0][a1];
    r.agent_action = g.actions[k][1][a2];
    if (e) r.evidence = g.evidence->alphabet[*e];
    fill_beliefs(r);
    const auto& u = g.payoff(k, x, a1, a2, t);
    r.payoff_defender = u[0];
    r.payoff_agent = u[1];
    r.off_path = off_path;
    trace.records.push_back(std::move(r));

    const auto u1 = update_belief(g, b1, th1, k, x, xn, s, e);
    const auto u2 = update_belief(g, b2, th2, k, x, xn, s, e);
    b1 = u1.belief;
    b2 = u2.belief;
    observation_likelihood(g, k, x, xn, e, s, lik);
    off_path = !update_joint(mu, lik, next_mu) || u1.off_path || u2.off_path;
    mu.swap(next_mu);
    x = xn;
  }
  TraceRecord last;
  last.stage = g.horizon;
  last.state = g.states[g.horizon][x];
  fill_beliefs(last);
  last.payoff_defender = g.terminal[x][t][0];
  last.payoff_agent = g.terminal[x][t][1];
  last.off_path = off_path;
  trace.records.push_back(std::move(last));
  return trace;
}

}  // namespace ztrust
