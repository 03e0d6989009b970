#include "mecache/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "mecache/ellipsoid.hpp"

namespace mecache {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTimeCapFactor = 10.0;

struct RateTerms {
  double r, r1, r2;  // rate and its first two derivatives in alpha
};

RateTerms rate_terms(double alpha, double x, double bandwidth) {
  const double c = bandwidth / std::numbers::ln2;
  const double l = std::log1p(x / alpha);
  const double ax = alpha + x;
  return {c * alpha * l, c * (l - x / ax), -c * x * x / (alpha * ax * ax)};
}

// One direction (offload or download) of one service. Column `last` is the
// worst link, the one appearing in the deadline.
struct Band {
  double size = 0.0;  // bits to move; zero disables the band
  double bandwidth = 0.0;
  Eigen::VectorXd x;  // p * g per column
  Eigen::VectorXd w;  // weighted energy per second of airtime per column
  int last = 0;

  bool enabled() const { return size > 0.0; }
};

struct BandPoint {
  double cost = 0.0;    // sum_k w_k D / r_k
  double grad = 0.0;    // G = sum_k (w_k + mu[k=last]) D r'_k / r_k^2
  double dgrad = 0.0;   // dG / dalpha
  double t_last = 0.0;  // D / r_last
  double g_last = 0.0;  // D r'_last / r_last^2
};

BandPoint eval_band(const Band& b, double alpha, double mu) {
  BandPoint p;
  for (Eigen::Index k = 0; k < b.x.size(); ++k) {
    const auto t = rate_terms(alpha, b.x[k], b.bandwidth);
    const double w = b.w[k] + (k == b.last ? mu : 0.0);
    const double inv = b.size / t.r;
    const double g = inv * t.r1 / t.r;
    p.cost += b.w[k] * inv;
    p.grad += w * g;
    p.dgrad += w * (b.size * t.r2 / (t.r * t.r) - 2.0 * g * t.r1 / t.r);
    if (k == b.last) {
      p.t_last = inv;
      p.g_last = g;
    }
  }
  return p;
}

// Minimizer over (0, 1] of cost(alpha) + mu t_last(alpha) + price alpha.
double band_alpha(const Band& b, double mu, double price, double warm,
                  double tol) {
  if (price <= 0.0) return 1.0;
  const BandPoint one = eval_band(b, 1.0, mu);
  if (one.grad >= price) return 1.0;
  const double lp = std::log(price);
  auto f = [&](double s, double& df) {
    const BandPoint p = eval_band(b, std::exp(s), mu);
    df = std::exp(s) * p.dgrad / p.grad;
    return std::log(p.grad) - lp;
  };
  double hi = 0.0;
  double lo = -kInf;
  double s = (warm > 0.0 && warm < 1.0) ? std::log(warm) : std::log(0.5);
  double df = 0.0;
  double fs = f(s, df);
  if (fs > 0) {
    lo = s;
  } else {
    hi = s;
    double t = s;
    for (int i = 0; i < 200 && !(lo > -kInf); ++i) {
      t -= 2.0;
      double dt = 0.0;
      if (f(t, dt) > 0) lo = t; else hi = t;
    }
    if (!(lo > -kInf)) return std::exp(hi);
    s = 0.5 * (lo + hi);
    fs = f(s, df);
  }
  for (int i = 0; i < 200; ++i) {
    if (std::abs(fs) <= tol || hi - lo <= tol) break;
    if (fs > 0) lo = s; else hi = s;
    double next = s - fs / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    s = next;
    fs = f(s, df);
  }
  return std::exp(s);
}

struct ServiceModel {
  bool cached = false;
  double a = 0.0;  // weighted compute coefficient: E = a / t_c^2
  double t_min = 0.0;
  double deadline = 0.0;
  Band off;
  Band dl;
};

struct Model {
  std::vector<ServiceModel> services;
  int num_active = 0;
  double energy_bound = 0.0;  // no feasible allocation costs more
};

Model build_model(const Scenario& s, const CachingDecision& I) {
  const int L = s.num_services();
  const int K = s.num_locations();
  const auto& c = s.constants;
  const auto& ch = s.channels;
  const auto pt = probability_tables(s);
  Model m;
  m.services.resize(L);
  for (int l = 0; l < L; ++l) {
    const auto& sv = s.services[l];
    auto& sm = m.services[l];
    sm.cached = I[l];
    sm.deadline = sv.deadline_s;
    sm.dl.size = sv.output_bits;
    sm.dl.bandwidth = c.bandwidth_dl_hz;
    sm.dl.x.resize(K);
    sm.dl.w.resize(K);
    sm.dl.last = deadline_download_position(s, l);
    for (int j = 0; j < K; ++j) {
      sm.dl.x[j] = c.tx_power_bs_w[l] * ch.downlink[ch.downlink_order[j]];
      sm.dl.w[j] = c.weight_bs * c.tx_power_bs_w[l] * pt.broadcast(l, j);
    }
    sm.off.bandwidth = c.bandwidth_off_hz;
    sm.off.last = deadline_offload_column(s, l);
    if (!sm.cached) {
      ++m.num_active;
      const double cyc = sv.cycles();
      sm.a = c.weight_bs * c.capacitance * cyc * cyc * cyc * pt.request[l];
      sm.t_min = cyc / c.max_core_freq_hz;
      sm.off.size = sv.input_bits;
      sm.off.x = c.tx_power_user_w.cwiseProduct(ch.uplink);
      sm.off.w.resize(K);
      for (int k = 0; k < K; ++k) {
        sm.off.w[k] = c.weight_user[k] * c.tx_power_user_w[k] * pt.offload(l, k);
      }
      m.energy_bound += sm.a / (sm.t_min * sm.t_min) +
                        sm.deadline * sm.off.w.sum();
    }
    m.energy_bound += sm.deadline * sm.dl.w.sum();
  }
  return m;
}

struct InnerPoint {
  double alpha_off = 0.0;
  double alpha_dl = 0.0;
  double t_c = 0.0;
  double mu = 0.0;
  double lagrangian = 0.0;  // per-service Lagrangian incl. price terms
  bool feasible = true;
};

struct InnerEval {
  double alpha_off, alpha_dl, t_c, slack, dslack;
  BandPoint off, dl;
};

InnerEval inner_at(const ServiceModel& sm, double mu, double sigma,
                   double eps, double warm_off, double warm_dl, double tol) {
  InnerEval e{};
  e.alpha_off = sm.off.enabled()
                    ? band_alpha(sm.off, mu, sigma, warm_off, tol)
                    : 0.0;
  e.alpha_dl = band_alpha(sm.dl, mu, eps, warm_dl, tol);
  double dlat = 0.0;
  if (sm.off.enabled()) {
    e.off = eval_band(sm.off, e.alpha_off, mu);
    if (e.alpha_off < 1.0) dlat += e.off.g_last * e.off.g_last / e.off.dgrad;
  }
  e.dl = eval_band(sm.dl, e.alpha_dl, mu);
  if (e.alpha_dl < 1.0) dlat += e.dl.g_last * e.dl.g_last / e.dl.dgrad;
  if (!sm.cached) {
    if (mu <= 0.0) {
      e.t_c = kInf;
    } else {
      const double t = std::cbrt(2.0 * sm.a / mu);
      e.t_c = std::max(sm.t_min, t);
      if (t > sm.t_min) dlat -= e.t_c / (3.0 * mu);
    }
  }
  e.slack = sm.deadline - e.off.t_last - e.t_c - e.dl.t_last;
  e.dslack = -dlat;
  return e;
}

// Joint Newton iteration on (log alpha_off, log alpha_dl, log mu) for an
// interior solution with an active deadline. Returns false when the iterate
// leaves the region where that structure holds; the caller then falls back to
// the bracketed search.
bool newton_inner(const ServiceModel& sm, double sigma, double eps,
                  const InnerPoint& warm, double tol, InnerPoint& out) {
  if (!(warm.mu > 0.0) || !(warm.alpha_dl > 0.0 && warm.alpha_dl < 1.0) ||
      !(sigma > 0.0) || !(eps > 0.0)) {
    return false;
  }
  const bool has_off = sm.off.enabled();
  if (has_off && !(warm.alpha_off > 0.0 && warm.alpha_off < 1.0)) return false;
  double so = has_off ? std::log(warm.alpha_off) : 0.0;
  double sd = std::log(warm.alpha_dl);
  double m = std::log(warm.mu);
  const double lsig = std::log(sigma);
  const double leps = std::log(eps);
  const double T = sm.deadline;
  for (int it = 0; it < 20; ++it) {
    const double ao = std::exp(so), ad = std::exp(sd), mu = std::exp(m);
    BandPoint po;
    if (has_off) po = eval_band(sm.off, ao, mu);
    const BandPoint pd = eval_band(sm.dl, ad, mu);
    double t_c = 0.0, dtc = 0.0;  // dtc = -d t_c / d log mu
    if (!sm.cached) {
      const double t = std::cbrt(2.0 * sm.a / mu);
      t_c = std::max(sm.t_min, t);
      if (t > sm.t_min) dtc = t_c / 3.0;
    }
    const double f1 = has_off ? std::log(po.grad) - lsig : 0.0;
    const double f2 = std::log(pd.grad) - leps;
    const double slack = T - po.t_last - t_c - pd.t_last;
    const double f3 = slack / T;
    if (std::abs(f1) <= tol && std::abs(f2) <= tol && std::abs(f3) <= tol) {
      out.alpha_off = has_off ? ao : 0.0;
      out.alpha_dl = ad;
      out.t_c = t_c;
      out.mu = mu;
      const double compute = sm.cached ? 0.0 : sm.a / (t_c * t_c);
      out.lagrangian = compute + po.cost + pd.cost + sigma * out.alpha_off +
                       eps * ad - mu * slack;
      out.feasible = true;
      return true;
    }
    // Rows: f1 = a11 dso + a13 dm, f2 = a22 dsd + a23 dm,
    // f3 = b1 dso + b2 dsd + b3 dm.
    const double a22 = ad * pd.dgrad / pd.grad;
    const double a23 = mu * pd.g_last / pd.grad;
    const double b2 = ad * pd.g_last / T;
    double b3 = dtc / T;
    double rhs = -f3 + b2 * f2 / a22;
    double coef = b3 - b2 * a23 / a22;
    double a11 = 1.0, a13 = 0.0, b1 = 0.0;
    if (has_off) {
      a11 = ao * po.dgrad / po.grad;
      a13 = mu * po.g_last / po.grad;
      b1 = ao * po.g_last / T;
      rhs += b1 * f1 / a11;
      coef -= b1 * a13 / a11;
    }
    if (!(std::abs(coef) > 0.0)) return false;
    double dm = rhs / coef;
    double dso = has_off ? (-f1 - a13 * dm) / a11 : 0.0;
    double dsd = (-f2 - a23 * dm) / a22;
    const double step = std::max({std::abs(dm), std::abs(dso), std::abs(dsd)});
    if (!std::isfinite(step)) return false;
    if (step > 1.0) {
      dm /= step;
      dso /= step;
      dsd /= step;
    }
    m += dm;
    so += dso;
    sd += dsd;
    if ((has_off && so >= 0.0) || sd >= 0.0) return false;
  }
  return false;
}

// Minimizes the per-service Lagrangian for prices (sigma, eps) subject to the
// service's deadline, by a safeguarded Newton search on its multiplier.
InnerPoint solve_inner(const ServiceModel& sm, double sigma, double eps,
                       const InnerPoint& warm, double tol) {
  InnerPoint out;
  InnerEval e{};
  auto finish = [&](double mu) {
    out.alpha_off = e.alpha_off;
    out.alpha_dl = e.alpha_dl;
    out.t_c = e.t_c;
    out.mu = mu;
    const double compute = sm.cached ? 0.0 : sm.a / (e.t_c * e.t_c);
    out.lagrangian = compute + e.off.cost + e.dl.cost + sigma * e.alpha_off +
                     eps * e.alpha_dl - mu * e.slack;
    return out;
  };
  if (sm.cached) {
    e = inner_at(sm, 0.0, sigma, eps, warm.alpha_off, warm.alpha_dl, tol);
    if (e.slack >= 0.0) return finish(0.0);
  }
  if (newton_inner(sm, sigma, eps, warm, tol, out)) return out;
  double mu = warm.mu;
  if (!(mu > 0.0)) {
    const double t = 0.5 * sm.deadline;
    mu = 2.0 * sm.a / (t * t * t) + sm.off.w.sum() + sm.dl.w.sum();
  }
  double m = std::log(mu);
  double lo = -kInf, hi = kInf;
  e = inner_at(sm, mu, sigma, eps, warm.alpha_off, warm.alpha_dl, tol);
  const double scale = sm.deadline;
  for (int i = 0; i < 400; ++i) {
    if (std::abs(e.slack) <= tol * scale) break;
    if (e.slack < 0) lo = m; else hi = m;
    if (hi - lo <= tol) break;
    double next;
    if (!(lo > -kInf)) {
      next = m - 2.0;
    } else if (!(hi < kInf)) {
      next = m + 2.0;
      if (next > 700.0) {
        out.feasible = false;
        return finish(std::exp(m));
      }
    } else {
      next = m - e.slack / (mu * e.dslack);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    }
    m = next;
    mu = std::exp(m);
    e = inner_at(sm, mu, sigma, eps, e.alpha_off, e.alpha_dl, tol);
  }
  if (e.slack < -1e-9 * scale) out.feasible = false;
  return finish(mu);
}

struct Recovered {
  ResourceAllocation alloc;
  double objective = kInf;
  bool feasible = false;
};

// Normalizes the bandwidth fractions to fill each band, sets every time from
// its active rate constraint and lets compute absorb the remaining deadline.
Recovered recover_primal(const Model& m, Eigen::VectorXd alpha_off,
                         Eigen::VectorXd alpha_dl, int K) {
  const int L = static_cast<int>(m.services.size());
  Recovered rec;
  rec.alloc = ResourceAllocation::zeros(L, K);
  const double so = alpha_off.sum();
  const double sd = alpha_dl.sum();
  if (so > 0) alpha_off /= so;
  if (sd > 0) alpha_dl /= sd;
  double total = 0.0;
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    auto& a = rec.alloc;
    a.alpha_off[l] = alpha_off[l];
    a.alpha_dl[l] = alpha_dl[l];
    if (!(alpha_dl[l] > 0.0)) return rec;
    double comm = 0.0;
    for (int j = 0; j < K; ++j) {
      const double r = rate_terms(alpha_dl[l], sm.dl.x[j], sm.dl.bandwidth).r;
      a.t_dl(l, j) = sm.dl.size / r;
      total += sm.dl.w[j] * a.t_dl(l, j);
    }
    comm += a.t_dl(l, sm.dl.last);
    if (!sm.cached) {
      if (!(alpha_off[l] > 0.0)) return rec;
      for (int k = 0; k < K; ++k) {
        const double r =
            rate_terms(alpha_off[l], sm.off.x[k], sm.off.bandwidth).r;
        a.t_off(l, k) = sm.off.size / r;
        total += sm.off.w[k] * a.t_off(l, k);
      }
      comm += a.t_off(l, sm.off.last);
      a.t_c[l] = sm.deadline - comm;
      if (a.t_c[l] < sm.t_min) return rec;
      total += sm.a / (a.t_c[l] * a.t_c[l]);
    } else if (comm > sm.deadline) {
      return rec;
    }
  }
  rec.objective = total;
  rec.feasible = true;
  return rec;
}

struct PriceEval {
  double value = 0.0;
  Eigen::Vector2d grad;
  std::vector<InnerPoint> inner;
  bool feasible = true;
};

PriceEval eval_prices(const Model& m, double sigma, double eps,
                      const std::vector<InnerPoint>& warm, double tol) {
  PriceEval pe;
  pe.inner.resize(m.services.size());
  double so = 0.0, sd = 0.0;
  for (std::size_t l = 0; l < m.services.size(); ++l) {
    pe.inner[l] = solve_inner(m.services[l], sigma, eps, warm[l], tol);
    pe.feasible = pe.feasible && pe.inner[l].feasible;
    pe.value += pe.inner[l].lagrangian;
    so += pe.inner[l].alpha_off;
    sd += pe.inner[l].alpha_dl;
  }
  pe.value -= sigma + eps;
  pe.grad = {so - 1.0, sd - 1.0};
  return pe;
}

// Equal-split allocation priced through the inner stationarity conditions.
Eigen::Vector2d heuristic_prices(const Model& m) {
  const int L = static_cast<int>(m.services.size());
  double sig = 0.0, eps = 0.0;
  for (const auto& sm : m.services) {
    const double ad = 1.0 / L;
    double mu = 0.0;
    if (!sm.cached) {
      const double ao = 1.0 / m.num_active;
      const double comm = eval_band(sm.off, ao, 0.0).t_last +
                          eval_band(sm.dl, ad, 0.0).t_last;
      const double t_c = std::max(sm.t_min, sm.deadline - comm);
      mu = 2.0 * sm.a / (t_c * t_c * t_c);
      sig += eval_band(sm.off, ao, mu).grad / m.num_active;
    }
    eps += eval_band(sm.dl, ad, mu).grad / L;
  }
  return {sig, eps};
}

double band_residual(double price, double g, double price_scale) {
  if (g >= 0.0) return g;
  return std::min(-g, price / price_scale);
}

DualPoint reduced_duals(const Model& m, const std::vector<InnerPoint>& inner,
                        const ResourceAllocation& alloc, double sigma,
                        double eps, int K) {
  const int L = static_cast<int>(m.services.size());
  DualPoint d = DualPoint::constant(L, K, 0.0);
  d.offload_bw = sigma;
  d.download_bw = eps;
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    const double mu = inner[l].mu;
    d.deadline[l] = mu;
    if (!sm.cached) {
      const double tm = sm.t_min;
      if (alloc.t_c[l] <= tm * (1.0 + 1e-9)) {
        d.frequency[l] = std::max(0.0, mu - 2.0 * sm.a / (tm * tm * tm));
      }
      for (int k = 0; k < K; ++k) {
        const double w = sm.off.w[k] + (k == sm.off.last ? mu : 0.0);
        const double t = alloc.t_off(l, k);
        d.offload_rate(l, k) = w * t * t / sm.off.size;
      }
    }
    for (int j = 0; j < K; ++j) {
      const double w = sm.dl.w[j] + (j == sm.dl.last ? mu : 0.0);
      const double t = alloc.t_dl(l, j);
      d.download_rate(l, j) = w * t * t / sm.dl.size;
    }
  }
  return d;
}

void finalize(SolveResult& res, const Scenario& s, const CachingDecision& I,
              const SolveOptions& opts) {
  res.energy = expected_energy(s, I, res.allocation);
  res.objective = res.energy.weighted_total;
  const auto rep =
      check_feasible(s, I, res.allocation, opts.feasibility_tol, false);
  if (!rep.feasible() && res.status == SolveStatus::optimal) {
    res.status = SolveStatus::iteration_limit;
  }
}

constexpr double kOptimalGap = 1e-3;

SolveResult solve_prices(const Scenario& s, const CachingDecision& I,
                         const SolveOptions& opts) {
  const int K = s.num_locations();
  const Model m = build_model(s, I);
  const int L = static_cast<int>(m.services.size());
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 2000 * 2;
  const double tol = opts.internal_tol;

  SolveResult res;
  res.allocation = ResourceAllocation::zeros(L, K);
  res.duals = DualPoint::constant(L, K, 0.0);

  Eigen::Vector2d center = heuristic_prices(m);
  const double floor = std::max(center.maxCoeff(), 1e-300) * 1e-6;
  const Eigen::Vector2d scale = center.cwiseMax(floor);
  if (m.num_active == 0) center[0] = 0.0;
  Eigen::Vector2d radii = opts.initial_radius * scale;

  std::vector<InnerPoint> warm(L);
  double q_best = -kInf;
  Eigen::Vector2d x_best = center;
  Eigen::Vector2d g_best = Eigen::Vector2d::Zero();
  std::vector<InnerPoint> inner_best;
  Recovered primal;
  int iter = 0;
  bool converged = false;

  auto stop_now = [&]() {
    if (!primal.feasible || inner_best.empty()) return false;
    const double gap = (primal.objective - q_best) / primal.objective;
    const double rs = m.num_active > 0
                          ? band_residual(x_best[0], g_best[0], scale[0])
                          : 0.0;
    const double re = band_residual(x_best[1], g_best[1], scale[1]);
    return gap <= opts.gap_tol && rs <= opts.band_tol && re <= opts.band_tol;
  };

  for (int restart = 0; restart <= opts.max_restarts && !converged; ++restart) {
    auto E = Ellipsoid<double>::axis_aligned(center, radii);
    const Eigen::Vector2d c0 = center;
    bool hit_boundary = false;
    for (; iter < max_iter; ++iter) {
      const Eigen::Vector2d x = E.center;
      if (x[0] < 0.0 || x[1] < 0.0) {
        const int i = x[0] < 0.0 ? 0 : 1;
        Eigen::Vector2d a = Eigen::Vector2d::Zero();
        a[i] = -1.0;
        if (cut(E, Eigen::VectorXd(a), -x[i]) == CutResult::empty) break;
        continue;
      }
      PriceEval pe = eval_prices(m, x[0], x[1], warm, tol);
      warm = pe.inner;
      if (pe.value > q_best) {
        q_best = pe.value;
        x_best = x;
        g_best = pe.grad;
        inner_best = pe.inner;
        const Eigen::Vector2d rel = (x - c0).cwiseQuotient(radii);
        hit_boundary = rel.norm() > 0.8;
      }
      if (pe.feasible) {
        Eigen::VectorXd ao(L), ad(L);
        for (int l = 0; l < L; ++l) {
          ao[l] = pe.inner[l].alpha_off;
          ad[l] = pe.inner[l].alpha_dl;
        }
        Recovered rec = recover_primal(m, ao, ad, K);
        if (rec.feasible && rec.objective < primal.objective) primal = rec;
      }
      if (q_best > m.energy_bound * (1.0 + 1e-9)) {
        res.status = SolveStatus::infeasible;
        res.dual_objective = q_best;
        res.iterations = iter + 1;
        return res;
      }
      if (stop_now()) {
        converged = true;
        ++iter;
        break;
      }
      const Eigen::VectorXd a = -pe.grad;
      if (cut(E, a, q_best - pe.value) == CutResult::empty) {
        ++iter;
        break;
      }
    }
    if (converged || iter >= max_iter) break;
    center = x_best;
    if (hit_boundary) {
      radii *= 10.0;
    } else {
      const Eigen::Vector2d w = E.shape.diagonal().cwiseSqrt();
      radii = (4.0 * w).cwiseMax(scale * 1e-9);
    }
  }

  res.iterations = iter;
  res.dual_objective = q_best;
  if (!primal.feasible) {
    res.status = SolveStatus::iteration_limit;
    return res;
  }
  res.allocation = primal.alloc;
  res.duals = reduced_duals(m, inner_best, primal.alloc, x_best[0], x_best[1], K);
  const double gap = (primal.objective - q_best) / primal.objective;
  res.status = (converged || gap <= kOptimalGap) ? SolveStatus::optimal
                                                 : SolveStatus::iteration_limit;
  finalize(res, s, I, opts);
  return res;
}

SolveResult solve_full(const Scenario& s, const CachingDecision& I,
                       const SolveOptions& opts) {
  const int L = s.num_services();
  const int K = s.num_locations();
  const int n = DualPoint::dimension(L, K);
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 2000 * n;
  const Model m = build_model(s, I);
  constexpr double kDelta = 1e-9;

  // Start from the dual point the bandwidth-price method would use at the
  // equal split, so the ball is scaled per coordinate.
  const Eigen::Vector2d p0 = heuristic_prices(m);
  std::vector<InnerPoint> warm(L);
  const PriceEval pe0 = eval_prices(m, p0[0], p0[1], warm, opts.internal_tol);
  Eigen::VectorXd ao0(L), ad0(L);
  for (int l = 0; l < L; ++l) {
    ao0[l] = pe0.inner[l].alpha_off;
    ad0[l] = pe0.inner[l].alpha_dl;
  }
  ResourceAllocation seed = ResourceAllocation::zeros(L, K);
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    const double ad = ad0[l] / ad0.sum();
    for (int j = 0; j < K; ++j) {
      seed.t_dl(l, j) =
          sm.dl.size / rate_terms(ad, sm.dl.x[j], sm.dl.bandwidth).r;
    }
    if (sm.cached) continue;
    const double ao = ao0[l] / ao0.sum();
    for (int k = 0; k < K; ++k) {
      seed.t_off(l, k) =
          sm.off.size / rate_terms(ao, sm.off.x[k], sm.off.bandwidth).r;
    }
  }
  DualPoint d0 = reduced_duals(m, pe0.inner, seed, p0[0], p0[1], K);
  Eigen::VectorXd center = d0.to_vector();
  Eigen::VectorXd radii =
      (opts.initial_radius * center.cwiseAbs()).cwiseMax(1e-6 * center.cwiseAbs().maxCoeff());
  auto E = Ellipsoid<double>::axis_aligned(center, radii);

  SolveResult res;
  res.allocation = ResourceAllocation::zeros(L, K);
  res.duals = d0;
  double q_best = -kInf;
  Recovered primal;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const Eigen::VectorXd& x = E.center;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    double depth = 0.0;
    int bad = -1;
    for (int i = 0; i < n && bad < 0; ++i) {
      if (x[i] < 0.0) bad = i;
    }
    if (bad >= 0) {
      a[bad] = -1.0;
      depth = -x[bad];
    } else {
      for (int l = 0; l < L && bad < 0; ++l) {
        if (!I[l] && x[l] - x[L + l] < kDelta) {
          bad = l;
          a[l] = -1.0;
          a[L + l] = 1.0;
          depth = kDelta - (x[l] - x[L + l]);
        }
      }
    }
    if (bad >= 0) {
      if (cut(E, a, depth) == CutResult::empty) break;
      continue;
    }
    const DualPoint d = DualPoint::from_vector(x, L, K);
    DualEvaluation ev = dual_function(d, s, I);
    Eigen::VectorXd g = ev.supergradient.to_vector();
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(g[i])) g[i] = 1e12;
    }
    if (ev.value > q_best) {
      q_best = ev.value;
      res.duals = d;
    }
    Recovered rec = recover_primal(m, ev.allocation.alpha_off,
                                   ev.allocation.alpha_dl, K);
    if (rec.feasible && rec.objective < primal.objective) primal = rec;
    if (primal.feasible &&
        (primal.objective - q_best) / primal.objective <= opts.gap_tol) {
      ++iter;
      break;
    }
    if (q_best > m.energy_bound * (1.0 + 1e-9)) {
      res.status = SolveStatus::infeasible;
      res.dual_objective = q_best;
      res.iterations = iter + 1;
      return res;
    }
    if (cut(E, Eigen::VectorXd(-g), q_best - ev.value) == CutResult::empty) {
      ++iter;
      break;
    }
  }
  res.iterations = iter;
  res.dual_objective = q_best;
  if (!primal.feasible) {
    res.status = SolveStatus::iteration_limit;
    return res;
  }
  res.allocation = primal.alloc;
  const double gap = (primal.objective - q_best) / primal.objective;
  res.status = gap <= std::max(opts.gap_tol, kOptimalGap)
                   ? SolveStatus::optimal
                   : SolveStatus::iteration_limit;
  finalize(res, s, I, opts);
  return res;
}

}  // namespace

DualPoint DualPoint::constant(int L, int K, double v) {
  return {Eigen::VectorXd::Constant(L, v), Eigen::VectorXd::Constant(L, v),
          Eigen::MatrixXd::Constant(L, K, v), Eigen::MatrixXd::Constant(L, K, v),
          v, v};
}

Eigen::VectorXd DualPoint::to_vector() const {
  const auto L = deadline.size();
  const auto K = offload_rate.cols();
  Eigen::VectorXd v(dimension(static_cast<int>(L), static_cast<int>(K)));
  Eigen::Index i = 0;
  v.segment(i, L) = deadline;
  i += L;
  v.segment(i, L) = frequency;
  i += L;
  for (Eigen::Index l = 0; l < L; ++l) {
    v.segment(i, K) = offload_rate.row(l).transpose();
    i += K;
  }
  for (Eigen::Index l = 0; l < L; ++l) {
    v.segment(i, K) = download_rate.row(l).transpose();
    i += K;
  }
  v[i++] = offload_bw;
  v[i] = download_bw;
  return v;
}

DualPoint DualPoint::from_vector(const Eigen::VectorXd& v, int L, int K) {
  if (v.size() != dimension(L, K)) {
    throw std::invalid_argument("dual vector has wrong dimension");
  }
  DualPoint d = constant(L, K, 0.0);
  Eigen::Index i = 0;
  d.deadline = v.segment(i, L);
  i += L;
  d.frequency = v.segment(i, L);
  i += L;
  for (int l = 0; l < L; ++l, i += K) {
    d.offload_rate.row(l) = v.segment(i, K).transpose();
  }
  for (int l = 0; l < L; ++l, i += K) {
    d.download_rate.row(l) = v.segment(i, K).transpose();
  }
  d.offload_bw = v[i++];
  d.download_bw = v[i];
  return d;
}

PrimalTimes primal_times(const DualPoint& d, const Scenario& s,
                         const CachingDecision& I) {
  const int L = s.num_services();
  const int K = s.num_locations();
  const Model m = build_model(s, I);
  PrimalTimes pt{Eigen::VectorXd::Zero(L), Eigen::MatrixXd::Zero(L, K),
                 Eigen::MatrixXd::Zero(L, K)};
  // argmin over (0, cap] of num / t + den * t
  auto argmin = [](double num, double den, double cap) {
    if (num <= 0.0) return 0.0;
    if (den <= 0.0) return cap;
    return std::min(cap, std::sqrt(num / den));
  };
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    const double cap = kTimeCapFactor * sm.deadline;
    const double mu = d.deadline[l];
    for (int j = 0; j < K; ++j) {
      const double den = sm.dl.w[j] + (j == sm.dl.last ? mu : 0.0);
      pt.t_dl(l, j) = argmin(d.download_rate(l, j) * sm.dl.size, den, cap);
    }
    if (sm.cached) continue;
    const double gap = mu - d.frequency[l];
    if (!(gap > 0.0)) {
      throw unbounded_dual("mu - eta must be positive for uncached services");
    }
    pt.t_c[l] = sm.a > 0.0 ? std::min(cap, std::cbrt(2.0 * sm.a / gap)) : 0.0;
    for (int k = 0; k < K; ++k) {
      const double den = sm.off.w[k] + (k == sm.off.last ? mu : 0.0);
      pt.t_off(l, k) = argmin(d.offload_rate(l, k) * sm.off.size, den, cap);
    }
  }
  return pt;
}

double bandwidth_derivative(double alpha,
                            const Eigen::Ref<const Eigen::VectorXd>& weights,
                            const Eigen::Ref<const Eigen::VectorXd>& gains,
                            const Eigen::Ref<const Eigen::VectorXd>& powers,
                            double price, double bandwidth) {
  double f = -price;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const double x = powers[k] * gains[k];
    f += weights[k] * rate_terms(alpha, x, bandwidth).r1;
  }
  return f;
}

double optimal_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& weights,
                         const Eigen::Ref<const Eigen::VectorXd>& gains,
                         const Eigen::Ref<const Eigen::VectorXd>& powers,
                         double price, double bandwidth, double tol) {
  if ((weights.array() <= 0.0).all()) return 0.0;
  auto F = [&](double a) {
    return bandwidth_derivative(a, weights, gains, powers, price, bandwidth);
  };
  if (F(1.0) > 0.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0) break;
    if (F(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

DualEvaluation dual_function(const DualPoint& d, const Scenario& s,
                             const CachingDecision& I) {
  const int L = s.num_services();
  const int K = s.num_locations();
  const Model m = build_model(s, I);
  const PrimalTimes pt = primal_times(d, s, I);
  DualEvaluation ev;
  ev.allocation = ResourceAllocation::zeros(L, K);
  auto& a = ev.allocation;
  a.t_c = pt.t_c;
  a.t_off = pt.t_off;
  a.t_dl = pt.t_dl;
  ev.supergradient = DualPoint::constant(L, K, 0.0);
  auto& g = ev.supergradient;

  // d * D / t with the convention 0 * inf = 0
  auto priced = [](double dual, double size, double t) {
    return dual == 0.0 ? 0.0 : dual * size / t;
  };
  double value = 0.0;
  double so = 0.0, sd = 0.0;
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    const Eigen::VectorXd dl_gain = sm.dl.x;
    a.alpha_dl[l] = optimal_bandwidth(d.download_rate.row(l).transpose(), dl_gain,
                                      Eigen::VectorXd::Ones(K), d.download_bw,
                                      sm.dl.bandwidth);
    sd += a.alpha_dl[l];
    for (int j = 0; j < K; ++j) {
      const double t = a.t_dl(l, j);
      const double r = link_rate(a.alpha_dl[l], 1.0, sm.dl.x[j], sm.dl.bandwidth);
      value += sm.dl.w[j] * t + priced(d.download_rate(l, j), sm.dl.size, t) -
               d.download_rate(l, j) * r;
      g.download_rate(l, j) = (t > 0.0 ? sm.dl.size / t : kInf) - r;
    }
    double latency = a.t_dl(l, sm.dl.last);
    if (!sm.cached) {
      a.alpha_off[l] = optimal_bandwidth(d.offload_rate.row(l).transpose(),
                                         sm.off.x, Eigen::VectorXd::Ones(K),
                                         d.offload_bw, sm.off.bandwidth);
      so += a.alpha_off[l];
      for (int k = 0; k < K; ++k) {
        const double t = a.t_off(l, k);
        const double r =
            link_rate(a.alpha_off[l], 1.0, sm.off.x[k], sm.off.bandwidth);
        value += sm.off.w[k] * t + priced(d.offload_rate(l, k), sm.off.size, t) -
                 d.offload_rate(l, k) * r;
        g.offload_rate(l, k) = (t > 0.0 ? sm.off.size / t : kInf) - r;
      }
      const double tc = a.t_c[l];
      value += sm.a / (tc * tc) + d.frequency[l] * (sm.t_min - tc);
      g.frequency[l] = sm.t_min - tc;
      latency += a.t_off(l, sm.off.last) + tc;
    }
    value += d.deadline[l] * (latency - sm.deadline);
    g.deadline[l] = latency - sm.deadline;
  }
  value += d.offload_bw * (so - 1.0) + d.download_bw * (sd - 1.0);
  g.offload_bw = so - 1.0;
  g.download_bw = sd - 1.0;
  ev.value = value;
  return ev;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

double SolveResult::relative_gap() const {
  return (objective - dual_objective) / std::max(objective, 1e-12);
}

bool precheck_feasible(const Scenario& s, const CachingDecision& I) {
  const auto& c = s.constants;
  const auto& ch = s.channels;
  for (int l = 0; l < s.num_services(); ++l) {
    const auto& sv = s.services[l];
    const int ko = deadline_offload_column(s, l);
    const double u = ch.uplink[ko];
    const double v = ch.downlink[ch.downlink_order[deadline_download_position(s, l)]];
    double latency = sv.output_bits /
                     download_rate(1.0, c.tx_power_bs_w[l], v, c.bandwidth_dl_hz);
    if (!I[l]) {
      latency += sv.input_bits / offload_rate(1.0, c.tx_power_user_w[ko], u,
                                              c.bandwidth_off_hz) +
                 sv.cycles() / c.max_core_freq_hz;
    }
    if (latency > sv.deadline_s) return false;
  }
  return true;
}

SolveResult solve_allocation(const Scenario& s, const CachingDecision& I,
                             const SolveOptions& opts) {
  if (I.size() != s.num_services()) {
    throw std::invalid_argument("decision size does not match scenario");
  }
  if (!precheck_feasible(s, I)) {
    SolveResult res;
    res.allocation =
        ResourceAllocation::zeros(s.num_services(), s.num_locations());
    res.duals = DualPoint::constant(s.num_services(), s.num_locations(), 0.0);
    res.status = SolveStatus::infeasible;
    res.objective = std::numeric_limits<double>::quiet_NaN();
    res.dual_objective = res.objective;
    return res;
  }
  return opts.method == SolveMethod::full ? solve_full(s, I, opts)
                                          : solve_prices(s, I, opts);
}

double KktReport::max() const {
  return std::max({stationarity, bandwidth, complementarity});
}

KktReport kkt_residuals(const Scenario& s, const CachingDecision& I,
                        const ResourceAllocation& alloc, const DualPoint& d) {
  const int L = s.num_services();
  const int K = s.num_locations();
  const Model m = build_model(s, I);
  KktReport rep;
  auto row = [](double sum, double scale) {
    return scale > 0.0 ? std::abs(sum) / scale : 0.0;
  };
  auto upd = [](double& slot, double v) { slot = std::max(slot, v); };
  // time stationarity: w + mu[last] - dual D / t^2 = 0
  auto time_row = [&](double w, double dual, double size, double t) {
    if (dual == 0.0 && t == 0.0) return 0.0;
    const double pull = dual * size / (t * t);
    return row(w - pull, std::abs(w) + pull);
  };
  for (int l = 0; l < L; ++l) {
    const auto& sm = m.services[l];
    const double mu = d.deadline[l];
    for (int j = 0; j < K; ++j) {
      const double w = sm.dl.w[j] + (j == sm.dl.last ? mu : 0.0);
      upd(rep.stationarity,
          time_row(w, d.download_rate(l, j), sm.dl.size, alloc.t_dl(l, j)));
      const double r =
          link_rate(alloc.alpha_dl[l], 1.0, sm.dl.x[j], sm.dl.bandwidth);
      if (d.download_rate(l, j) > 0.0) {
        upd(rep.complementarity,
            std::abs(alloc.t_dl(l, j) * r - sm.dl.size) / sm.dl.size);
      }
    }
    {
      const Eigen::VectorXd w = d.download_rate.row(l).transpose();
      const double f = bandwidth_derivative(alloc.alpha_dl[l], w, sm.dl.x,
                                            Eigen::VectorXd::Ones(K),
                                            d.download_bw, sm.dl.bandwidth);
      const double scale = f + 2.0 * d.download_bw;
      const double a = alloc.alpha_dl[l];
      upd(rep.bandwidth, a >= 1.0 ? std::max(0.0, -f) / scale : row(f, scale));
    }
    double latency = alloc.t_dl(l, sm.dl.last);
    if (!sm.cached) {
      const double tc = alloc.t_c[l];
      const double pull = 2.0 * sm.a / (tc * tc * tc);
      upd(rep.stationarity, row(mu - d.frequency[l] - pull,
                                mu + d.frequency[l] + pull));
      for (int k = 0; k < K; ++k) {
        const double w = sm.off.w[k] + (k == sm.off.last ? mu : 0.0);
        upd(rep.stationarity, time_row(w, d.offload_rate(l, k), sm.off.size,
                                       alloc.t_off(l, k)));
        const double r =
            link_rate(alloc.alpha_off[l], 1.0, sm.off.x[k], sm.off.bandwidth);
        if (d.offload_rate(l, k) > 0.0) {
          upd(rep.complementarity,
              std::abs(alloc.t_off(l, k) * r - sm.off.size) / sm.off.size);
        }
      }
      const Eigen::VectorXd w = d.offload_rate.row(l).transpose();
      const double f = bandwidth_derivative(alloc.alpha_off[l], w, sm.off.x,
                                            Eigen::VectorXd::Ones(K),
                                            d.offload_bw, sm.off.bandwidth);
      const double scale = f + 2.0 * d.offload_bw;
      upd(rep.bandwidth, alloc.alpha_off[l] >= 1.0
                             ? std::max(0.0, -f) / scale
                             : row(f, scale));
      if (d.frequency[l] > 0.0) {
        upd(rep.complementarity, std::abs(tc - sm.t_min) / sm.t_min);
      }
      latency += alloc.t_off(l, sm.off.last) + tc;
    }
    if (mu > 0.0) {
      upd(rep.complementarity, std::abs(sm.deadline - latency) / sm.deadline);
    }
  }
  if (d.offload_bw > 0.0 && m.num_active > 0) {
    upd(rep.complementarity, std::abs(alloc.alpha_off.sum() - 1.0));
  }
  if (d.download_bw > 0.0) {
    upd(rep.complementarity, std::abs(alloc.alpha_dl.sum() - 1.0));
  }
  return rep;
}

}  // namespace mecache
