#include "holoprop/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "holoprop/parallel.hpp"
#include "holoprop/rng.hpp"

namespace holoprop {

OracleGradient unrolled_adjoint_gradient(const Model& model, const RealTensor& x,
                                         const RealTensor& y, std::size_t t_free) {
  auto adj = model.adjoint_gradient(x, y, t_free);
  OracleGradient out;
  out.grads = std::move(adj.grads);
  out.method = "unrolled_adjoint";
  out.steps = t_free;
  out.converged = adj.converged;
  return out;
}

namespace {

double loss_at(const Model& model, const RealTensor& x, const RealTensor& y,
               const SettleConfig& cfg) {
  auto res = settle_real(model, x, 0.0, y, cfg);
  if (res.diverged) throw std::runtime_error("finite_difference: free settle diverged");
  return model.loss(res.state, y);
}

double central_difference(Model& model, const RealTensor& x, const RealTensor& y,
                          const SettleConfig& cfg, std::size_t p, std::size_t i, double h) {
  auto& params = model.param_tensors();
  const double saved = params[p][i];
  params[p][i] = saved + h;
  const double lp = loss_at(model, x, y, cfg);
  params[p][i] = saved - h;
  const double lm = loss_at(model, x, y, cfg);
  params[p][i] = saved;
  return (lp - lm) / (2.0 * h);
}

}  // namespace

OracleGradient finite_difference_gradient(const Model& model, const RealTensor& x,
                                          const RealTensor& y, double h, const SettleConfig& cfg,
                                          const std::vector<FdCoordinate>* subset,
                                          bool richardson, unsigned workers) {
  if (!(h >= 1e-7 && h <= 1e-4))
    throw std::invalid_argument("finite_difference: h must lie in [1e-7, 1e-4]");
  const auto& params = model.param_tensors();
  OracleGradient out;
  out.method = "finite_difference";
  out.fd_h = h;
  out.steps = cfg.max_steps;
  for (const auto& p : params) out.grads.emplace_back(p.shape);

  std::vector<FdCoordinate> coords;
  if (subset) {
    coords = *subset;
  } else {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].size(); ++i) coords.push_back({p, i});
  }

  std::vector<double> values(coords.size());
  std::vector<char> trusted(coords.size(), 1);
  parallel_for(coords.size(), workers, [&](std::size_t c) {
    auto local = model.clone();
    const auto [p, i] = coords[c];
    const double g = central_difference(*local, x, y, cfg, p, i, h);
    values[c] = g;
    if (richardson) {
      const double g2 = central_difference(*local, x, y, cfg, p, i, h / 2.0);
      const double scale = std::max({std::abs(g), std::abs(g2), 1e-12});
      if (std::abs(g - g2) / scale > 1e-3) trusted[c] = 0;
      values[c] = g2;
    }
  });
  bool all_trusted = true;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    out.grads[coords[c].tensor][coords[c].element] = values[c];
    all_trusted = all_trusted && trusted[c];
  }
  out.converged = all_trusted;
  return out;
}

SimilarityReport cosine_similarity(const std::vector<RealTensor>& a,
                                   const std::vector<RealTensor>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: different numbers of tensors");
  SimilarityReport rep;
  double tot_ab = 0.0, tot_aa = 0.0, tot_bb = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p].shape != b[p].shape)
      throw std::invalid_argument("cosine_similarity: shape mismatch " +
                                  shape_to_string(a[p].shape) + " vs " +
                                  shape_to_string(b[p].shape));
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a[p].size(); ++i) {
      ab += a[p][i] * b[p][i];
      aa += a[p][i] * a[p][i];
      bb += b[p][i] * b[p][i];
    }
    tot_ab += ab;
    tot_aa += aa;
    tot_bb += bb;
    if (aa == 0.0 && bb == 0.0) {
      rep.per_layer.push_back(0.0);
      rep.layer_defined.push_back(false);
    } else if (aa == 0.0 || bb == 0.0) {
      rep.per_layer.push_back(0.0);
      rep.layer_defined.push_back(true);
    } else {
      rep.per_layer.push_back(ab / std::sqrt(aa * bb));
      rep.layer_defined.push_back(true);
    }
  }
  rep.total_defined = !(tot_aa == 0.0 && tot_bb == 0.0);
  rep.total = (tot_aa > 0.0 && tot_bb > 0.0) ? tot_ab / std::sqrt(tot_aa * tot_bb) : 0.0;
  return rep;
}

std::vector<FdCoordinate> sample_coordinates(const std::vector<RealTensor>& params,
                                             std::size_t count, std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  std::vector<FdCoordinate> coords;
  if (count >= total) {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].size(); ++i) coords.push_back({p, i});
    return coords;
  }
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t flat =
        static_cast<std::size_t>(rng::uniform(seed, {0xFDu, c}) * static_cast<double>(total));
    if (flat >= total) flat = total - 1;
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (flat < params[p].size()) {
        coords.push_back({p, flat});
        break;
      }
      flat -= params[p].size();
    }
  }
  return coords;
}

}  // namespace holoprop
