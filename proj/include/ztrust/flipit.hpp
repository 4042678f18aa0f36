#pragma once

// FlipIt with periodic strategies and uniformly random phase. Each player
// picks a move rate; the resource belongs to whoever moved last, and the
// defender holds it before anyone moves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"

namespace ztrust {

// Long-run fraction of time the attacker controls the resource.
inline double flipit_control_fraction(double rate_attacker, double rate_defender) {
  require(rate_attacker >= 0.0 && rate_defender >= 0.0, "rates", "must be non-negative");
  require(rate_attacker > 0.0 || rate_defender > 0.0, "rates", "both rates are zero");
  if (rate_attacker <= rate_defender) return rate_attacker / (2.0 * rate_defender);
  return 1.0 - rate_defender / (2.0 * rate_attacker);
}

struct RateBounds {
  double min = 0.01;
  double max = 10.0;
};

struct FlipItConfig {
  double move_cost_attacker = 1.0;
  double move_cost_defender = 1.0;
  double reward_attacker = 1.0;  // per unit time in control
  double reward_defender = 1.0;
  RateBounds rates_attacker, rates_defender;
  std::size_t lattice_points = 200;
  std::size_t max_iterations = 1000;

  void validate(const std::string& path = "flipit") const {
    auto finite = [](double v) { return std::isfinite(v); };
    require(finite(move_cost_attacker) && move_cost_attacker >= 0.0, path + ".move_cost_attacker",
            "must be a non-negative finite number");
    require(finite(move_cost_defender) && move_cost_defender >= 0.0, path + ".move_cost_defender",
            "must be a non-negative finite number");
    require(finite(reward_attacker) && reward_attacker >= 0.0, path + ".reward_attacker", "must be non-negative");
    require(finite(reward_defender) && reward_defender >= 0.0, path + ".reward_defender", "must be non-negative");
    for (const auto& [b, name] : {std::pair{rates_attacker, "rates_attacker"}, std::pair{rates_defender, "rates_defender"}})
      require(finite(b.max) && b.min > 0.0 && b.min < b.max, path + "." + name, "bounds must be positive and ordered");
    require(lattice_points >= 2, path + ".lattice_points", "must be at least 2");
    require(max_iterations >= 1, path + ".max_iterations", "must be at least 1");
  }
};

struct FlipItEquilibrium {
  double rate_attacker = 0.0, rate_defender = 0.0;
  bool attacker_participates = true, defender_participates = true;
  double p = 0.0;
  double regret = 0.0;  // attacker plus defender lattice regret
  std::size_t iterations = 0;
  bool converged = false;
};

// Log-spaced rates between the bounds. The lowest point doubles as the
// non-participation choice: a player sitting on it never moves.
inline std::vector<double> flipit_lattice(const RateBounds& b, std::size_t n) {
  std::vector<double> out(n);
  const double step = std::log(b.max / b.min) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = b.min * std::exp(step * static_cast<double>(i));
  out.back() = b.max;
  return out;
}

namespace detail {

struct FlipItTable {
  std::vector<double> ra, rd;
  std::vector<double> ua, ud;  // [i * nd + j]
  std::vector<double> pa;

  FlipItTable(const FlipItConfig& c) {
    ra = flipit_lattice(c.rates_attacker, c.lattice_points);
    rd = flipit_lattice(c.rates_defender, c.lattice_points);
    const std::size_t na = ra.size(), nd = rd.size();
    ua.resize(na * nd), ud.resize(na * nd), pa.resize(na * nd);
    for (std::size_t i = 0; i < na; ++i)
      for (std::size_t j = 0; j < nd; ++j) {
        const double a = i == 0 ? 0.0 : ra[i], d = j == 0 ? 0.0 : rd[j];
        const double p = a == 0.0 ? 0.0 : flipit_control_fraction(a, d);
        pa[i * nd + j] = p;
        ua[i * nd + j] = c.reward_attacker * p - c.move_cost_attacker * a;
        ud[i * nd + j] = c.reward_defender * (1.0 - p) - c.move_cost_defender * d;
      }
  }
  std::size_t na() const { return ra.size(); }
  std::size_t nd() const { return rd.size(); }

  // Lowest index wins ties.
  std::size_t br_attacker(std::size_t j) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < na(); ++i)
      if (ua[i * nd() + j] > ua[best * nd() + j]) best = i;
    return best;
  }
  std::size_t br_defender(std::size_t i) const {
    std::size_t best = 0;
    for (std::size_t j = 1; j < nd(); ++j)
      if (ud[i * nd() + j] > ud[i * nd() + best]) best = j;
    return best;
  }
  double regret(std::size_t i, std::size_t j) const {
    return ua[br_attacker(j) * nd() + j] - ua[i * nd() + j] + ud[i * nd() + br_defender(i)] - ud[i * nd() + j];
  }
};

inline FlipItEquilibrium make_flipit_result(const FlipItTable& t, std::size_t i, std::size_t j) {
  FlipItEquilibrium e;
  e.rate_attacker = t.ra[i];
  e.rate_defender = t.rd[j];
  e.attacker_participates = i != 0;
  e.defender_participates = j != 0;
  e.p = t.pa[i * t.nd() + j];
  e.regret = t.regret(i, j);
  return e;
}

}  // namespace detail

// Simultaneous best-response iteration on the rate lattice, started from the
// top of both lattices. A player already playing a best response keeps its
// rate. On a cycle the lattice profile with the least total regret is
// returned instead (lowest attacker index, then defender index, on ties).
inline FlipItEquilibrium solve_flipit(const FlipItConfig& config) {
  config.validate();
  const detail::FlipItTable t(config);
  const std::size_t nd = t.nd();
  std::size_t i = t.na() - 1, j = nd - 1;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    std::size_t bi = t.br_attacker(j), bj = t.br_defender(i);
    if (t.ua[i * nd + j] >= t.ua[bi * nd + j]) bi = i;
    if (t.ud[i * nd + j] >= t.ud[i * nd + bj]) bj = j;
    if (bi == i && bj == j) {
      auto e = detail::make_flipit_result(t, i, j);
      e.iterations = it;
      e.converged = true;
      return e;
    }
    if (!seen.insert({i, j}).second) break;
    i = bi, j = bj;
  }
  std::size_t best_i = 0, best_j = 0;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> bra(nd), brd(t.na());
  for (std::size_t b = 0; b < nd; ++b) bra[b] = t.br_attacker(b);
  for (std::size_t a = 0; a < t.na(); ++a) brd[a] = t.br_defender(a);
  for (std::size_t a = 0; a < t.na(); ++a)
    for (std::size_t b = 0; b < nd; ++b) {
      const double r = t.ua[bra[b] * nd + b] - t.ua[a * nd + b] + t.ud[a * nd + brd[a]] - t.ud[a * nd + b];
      if (r < best) best = r, best_i = a, best_j = b;
    }
  auto e = detail::make_flipit_result(t, best_i, best_j);
  e.iterations = seen.size();
  e.converged = false;
  return e;
}

}  // namespace ztrust
