#include "bpnp/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "bpnp/geometry.hpp"

namespace bpnp {
namespace {

/// Kuhn-Munkres for rows <= cols. Returns, for each row, its assigned column.
std::vector<Eigen::Index> solveRowsToCols(const MatX& a) {
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials and matching; column 0 is a virtual source.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<Eigen::Index> match(cols + 1, 0), way(cols + 1, 0);
  std::vector<double> minv(cols + 1);
  std::vector<char> used(cols + 1);

  for (Eigen::Index i = 1; i <= rows; ++i) {
    match[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = match[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Eigen::Index> row_to_col(rows, -1);
  for (Eigen::Index j = 1; j <= cols; ++j) {
    if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t count) : parent(count) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void join(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

CorrespondenceList hungarian(const MatX& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) {
    throw ValidationError("hungarian: cost matrix must be non-empty");
  }
  if (!cost.allFinite()) {
    throw ValidationError("hungarian: cost matrix contains non-finite entries");
  }
  CorrespondenceList out;
  if (cost.rows() <= cost.cols()) {
    const auto row_to_col = solveRowsToCols(cost);
    for (std::size_t i = 0; i < row_to_col.size(); ++i) {
      out.push_back({i, static_cast<std::size_t>(row_to_col[i])});
    }
  } else {
    const MatX transposed = cost.transpose();
    const auto col_to_row = solveRowsToCols(transposed);
    for (std::size_t j = 0; j < col_to_row.size(); ++j) {
      out.push_back({static_cast<std::size_t>(col_to_row[j]), j});
    }
    std::sort(out.begin(), out.end());
  }
  return out;
}

double assignmentCost(const MatX& cost, const CorrespondenceList& pairs) {
  double total = 0.0;
  for (const auto& c : pairs) {
    total += cost(static_cast<Eigen::Index>(c.bearing), static_cast<Eigen::Index>(c.point));
  }
  return total;
}

CorrespondenceList matchEdges(std::span<const CandidateEdge> edges) {
  if (edges.empty()) return {};

  // Compact row and column ids.
  std::map<std::size_t, std::size_t> row_id, col_id;
  for (const auto& e : edges) {
    if (!std::isfinite(e.cost)) throw ValidationError("matchEdges: non-finite edge cost");
    row_id.emplace(e.bearing, 0);
    col_id.emplace(e.point, 0);
  }
  std::vector<std::size_t> rows, cols;
  for (auto& [key, id] : row_id) {
    id = rows.size();
    rows.push_back(key);
  }
  for (auto& [key, id] : col_id) {
    id = cols.size();
    cols.push_back(key);
  }

  // Rows occupy [0, R), columns [R, R + C) in the union-find.
  DisjointSets sets(rows.size() + cols.size());
  for (const auto& e : edges) {
    sets.join(row_id[e.bearing], rows.size() + col_id[e.point]);
  }

  std::map<std::size_t, std::vector<const CandidateEdge*>> components;
  for (const auto& e : edges) components[sets.find(row_id[e.bearing])].push_back(&e);

  CorrespondenceList out;
  for (const auto& [root, comp] : components) {
    std::map<std::size_t, Eigen::Index> local_row, local_col;
    double max_cost = 0.0;
    for (const auto* e : comp) {
      local_row.emplace(e->bearing, 0);
      local_col.emplace(e->point, 0);
      max_cost = std::max(max_cost, std::abs(e->cost));
    }
    Eigen::Index r = 0, c = 0;
    std::vector<std::size_t> row_keys, col_keys;
    for (auto& [key, id] : local_row) {
      id = r++;
      row_keys.push_back(key);
    }
    for (auto& [key, id] : local_col) {
      id = c++;
      col_keys.push_back(key);
    }
    // Any admissible edge must beat a forbidden one, even when traded for
    // the full component's worth of admissible cost.
    const double forbidden = 2.0 * (max_cost + 1.0) * static_cast<double>(std::min(r, c) + 1);
    MatX cost = MatX::Constant(r, c, forbidden);
    for (const auto* e : comp) {
      double& slot = cost(local_row[e->bearing], local_col[e->point]);
      slot = std::min(slot, e->cost);
    }
    for (const auto& pair : hungarian(cost)) {
      const auto i = static_cast<Eigen::Index>(pair.bearing);
      const auto j = static_cast<Eigen::Index>(pair.point);
      if (cost(i, j) < forbidden) out.push_back({row_keys[pair.bearing], col_keys[pair.point]});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CorrespondenceList correspondencesFromPose(const PointSets& instance, const Pose& pose,
                                           double theta) {
  if (!(theta > 0.0 && theta < std::numbers::pi)) {
    throw ValidationError("inlier threshold must lie in (0, pi)");
  }
  const Mat3 R = expSO3<double>(pose.rotation);
  std::vector<Vec3> transformed(instance.numPoints());
  for (std::size_t j = 0; j < instance.numPoints(); ++j) {
    transformed[j] = R * instance.points[j] + pose.translation;
  }
  const double cos_theta = std::cos(theta);
  std::vector<CandidateEdge> edges;
  for (std::size_t i = 0; i < instance.numBearings(); ++i) {
    const Vec3& f = instance.bearings[i];
    for (std::size_t j = 0; j < instance.numPoints(); ++j) {
      const Vec3& y = transformed[j];
      const double ny = y.norm();
      if (ny == 0.0) continue;
      // Cheap reject before the exact angle.
      if (f.dot(y) < cos_theta * ny - 1e-12 * ny) continue;
      const double angle = unclampedAngle(f, y);
      if (angle <= theta) edges.push_back({i, j, angle});
    }
  }
  return matchEdges(edges);
}

std::vector<WeightedPair> topKSelect(const MatX& P, std::size_t k) {
  const auto m = static_cast<std::size_t>(P.rows());
  const auto n = static_cast<std::size_t>(P.cols());
  if (k == 0 || k > m * n) {
    throw ValidationError("topKSelect: k must lie in [1, m*n]");
  }
  std::vector<std::size_t> order(m * n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Row-major linear index, so ascending index means ascending (row, col).
  auto value = [&](std::size_t idx) {
    return P(static_cast<Eigen::Index>(idx / n), static_cast<Eigen::Index>(idx % n));
  };
  auto before = [&](std::size_t a, std::size_t b) {
    const double va = value(a), vb = value(b);
    if (va != vb) return va > vb;
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    before);
  std::vector<WeightedPair> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    out.push_back({order[r] / n, order[r] % n, value(order[r])});
  }
  return out;
}

std::size_t candidateCount(std::size_t m, std::size_t n, double factor) {
  const auto k = static_cast<std::size_t>(std::ceil(factor * static_cast<double>(std::min(m, n))));
  return std::clamp<std::size_t>(k, 1, m * n);
}

}  // namespace bpnp
