#pragma once

// Naive loop-based reference implementations used as test oracles. They work
// on one egonet at a time with plain std::vector arithmetic and share no code
// with the batched tape implementation.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "taxoexpan/egonet.hpp"
#include "taxoexpan/model.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double LeakyRelu(double x, double slope) { return x >= 0.0 ? x : slope * x; }
inline double Relu(double x) { return x > 0.0 ? x : 0.0; }
inline double Softplus(double x) { return std::log(1.0 + std::exp(x)); }

inline std::vector<double> VecTimesMat(const std::vector<double>& x, const taxoexpan::Matrix& w) {
  std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) out[c] += x[r] * w(r, c);
  }
  return out;
}

inline double Dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Closed neighbourhood of node u: itself plus the anchor (index 0) for
// non-anchors, every node for the anchor.
inline std::vector<int> Neighbourhood(const taxoexpan::Egonet& ego, int u) {
  std::vector<int> out;
  if (u == 0) {
    for (int v = 0; v < static_cast<int>(ego.nodes.size()); ++v) out.push_back(v);
  } else {
    out = {u, 0};
  }
  return out;
}

inline Rows Features(const taxoexpan::Taxonomy& t, const taxoexpan::Egonet& ego) {
  Rows x;
  for (const auto& n : ego.nodes) {
    const auto row = t.embedding(n.concept_id);
    x.emplace_back(row.data(), row.data() + row.size());
  }
  return x;
}

// Layer input with the layer's position embedding appended when present.
inline Rows WithPositions(const taxoexpan::Model& model, const taxoexpan::Egonet& ego,
                          const Rows& h, int layer) {
  if (model.config().position_dim == 0) return h;
  const auto& table = model.param("gnn." + std::to_string(layer) + ".position").value;
  Rows out = h;
  for (std::size_t u = 0; u < h.size(); ++u) {
    const int p = static_cast<int>(ego.nodes[u].position);
    for (Eigen::Index c = 0; c < table.cols(); ++c) out[u].push_back(table(p, c));
  }
  return out;
}

// h_u = ReLU( sum_{v in N~(u)} W x_v / sqrt(|N~(u)| |N~(v)|) )
inline Rows GcnLayer(const taxoexpan::Model& model, const taxoexpan::Egonet& ego, const Rows& h,
                     int layer) {
  const Rows x = WithPositions(model, ego, h, layer);
  const auto& w = model.param("gnn." + std::to_string(layer) + ".weight").value;
  Rows out;
  for (int u = 0; u < static_cast<int>(x.size()); ++u) {
    std::vector<double> acc(static_cast<std::size_t>(w.cols()), 0.0);
    const auto nu = Neighbourhood(ego, u);
    for (int v : nu) {
      const double norm = 1.0 / std::sqrt(static_cast<double>(nu.size()) *
                                          static_cast<double>(Neighbourhood(ego, v).size()));
      const auto wx = VecTimesMat(x[v], w);
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += norm * wx[c];
    }
    for (double& a : acc) a = Relu(a);
    out.push_back(acc);
  }
  return out;
}

// Multi-head attention, heads concatenated.
inline Rows GatLayer(const taxoexpan::Model& model, const taxoexpan::Egonet& ego, const Rows& h,
                     int layer) {
  const Rows x = WithPositions(model, ego, h, layer);
  const double slope = model.config().leaky_slope;
  Rows out(x.size());
  for (int m = 0; m < model.config().heads[layer]; ++m) {
    const std::string key = "gnn." + std::to_string(layer) + ".head" + std::to_string(m);
    const auto& w = model.param(key + ".weight").value;
    const auto& zs = model.param(key + ".attn_self").value;
    const auto& zn = model.param(key + ".attn_neighbor").value;
    std::vector<double> z_self(zs.data(), zs.data() + zs.size());
    std::vector<double> z_nbr(zn.data(), zn.data() + zn.size());
    Rows wx;
    for (const auto& row : x) wx.push_back(VecTimesMat(row, w));
    for (int u = 0; u < static_cast<int>(x.size()); ++u) {
      const auto nu = Neighbourhood(ego, u);
      std::vector<double> e;
      for (int v : nu) e.push_back(std::exp(LeakyRelu(Dot(z_self, wx[u]) + Dot(z_nbr, wx[v]), slope)));
      double z = 0.0;
      for (double v : e) z += v;
      std::vector<double> acc(static_cast<std::size_t>(w.cols()), 0.0);
      for (std::size_t i = 0; i < nu.size(); ++i) {
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += e[i] / z * wx[nu[i]][c];
      }
      for (double a : acc) out[u].push_back(Relu(a));
    }
  }
  return out;
}

inline Rows Propagate(const taxoexpan::Model& model, const taxoexpan::Taxonomy& t,
                      const taxoexpan::Egonet& ego) {
  Rows h = Features(t, ego);
  for (int k = 0; k < model.config().layers(); ++k) {
    h = taxoexpan::IsAttention(model.config().arch) ? GatLayer(model, ego, h, k)
                                                    : GcnLayer(model, ego, h, k);
  }
  return h;
}

inline std::vector<double> Readout(const taxoexpan::Model& model, const taxoexpan::Egonet& ego,
                                   const Rows& h) {
  const std::size_t d = h.front().size();
  std::vector<double> out;
  switch (model.config().readout) {
    case taxoexpan::ReadoutKind::kMean: {
      out.assign(d, 0.0);
      for (const auto& row : h) {
        for (std::size_t c = 0; c < d; ++c) out[c] += row[c] / static_cast<double>(h.size());
      }
      break;
    }
    case taxoexpan::ReadoutKind::kWeightedMean: {
      const auto& alpha = model.param("readout.position_weight").value;
      out.assign(d, 0.0);
      double z = 0.0;
      for (std::size_t u = 0; u < h.size(); ++u) {
        z += Softplus(alpha(static_cast<int>(ego.nodes[u].position), 0));
      }
      for (std::size_t u = 0; u < h.size(); ++u) {
        const double w = Softplus(alpha(static_cast<int>(ego.nodes[u].position), 0)) / z;
        for (std::size_t c = 0; c < d; ++c) out[c] += w * h[u][c];
      }
      break;
    }
    case taxoexpan::ReadoutKind::kConcat: {
      for (int p = 0; p < taxoexpan::kNumPositions; ++p) {
        std::vector<double> mean(d, 0.0);
        int count = 0;
        for (std::size_t u = 0; u < h.size(); ++u) {
          if (static_cast<int>(ego.nodes[u].position) != p) continue;
          ++count;
          for (std::size_t c = 0; c < d; ++c) mean[c] += h[u][c];
        }
        for (double& m : mean) m = count ? m / count : 0.0;
        out.insert(out.end(), mean.begin(), mean.end());
      }
      break;
    }
  }
  return out;
}

inline double Logit(const taxoexpan::Model& model, const std::vector<double>& anchor,
                    const std::vector<double>& query) {
  if (model.config().matcher == taxoexpan::MatcherKind::kLbm) {
    return Dot(VecTimesMat(anchor, model.param("match.weight").value), query);
  }
  std::vector<double> joint = anchor;
  joint.insert(joint.end(), query.begin(), query.end());
  auto hidden = VecTimesMat(joint, model.param("match.hidden.weight").value);
  const auto& b1 = model.param("match.hidden.bias").value;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden[i] = LeakyRelu(hidden[i] + b1(0, static_cast<Eigen::Index>(i)), model.config().leaky_slope);
  }
  return VecTimesMat(hidden, model.param("match.out.weight").value)[0] +
         model.param("match.out.bias").value(0, 0);
}

// -log( f_pos / sum_j f_j ) straight from the definition.
inline double InfoNce(const std::vector<double>& scores, std::size_t positive) {
  double total = 0.0;
  for (double s : scores) total += s;
  return -std::log(scores[positive] / total);
}

inline double MeanRank(const std::vector<std::vector<int>>& ranks) {
  double sum = 0.0;
  int count = 0;
  for (const auto& q : ranks) {
    for (int r : q) {
      sum += r;
      ++count;
    }
  }
  return sum / count;
}

inline double HitAtK(const std::vector<std::vector<int>>& ranks, int k) {
  int hits = 0;
  for (const auto& q : ranks) {
    bool any = false;
    for (int r : q) any = any || r <= k;
    hits += any ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double ScaledMrr(const std::vector<std::vector<int>>& ranks) {
  double total = 0.0;
  for (const auto& q : ranks) {
    double s = 0.0;
    for (int r : q) s += 1.0 / std::ceil(r / 10.0);
    total += s / static_cast<double>(q.size());
  }
  return total / static_cast<double>(ranks.size());
}

}  // namespace oracle
