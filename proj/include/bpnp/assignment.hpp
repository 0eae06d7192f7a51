#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bpnp/types.hpp"

namespace bpnp {

/// Minimum-cost one-to-one assignment of min(m, n) rows to columns
/// (Kuhn-Munkres with potentials, O(min^2 * max)). Pairs are returned sorted by
/// bearing index. Throws ValidationError on empty or non-finite costs.
CorrespondenceList hungarian(const MatX& cost);

/// Total cost of an assignment under `cost`.
double assignmentCost(const MatX& cost, const CorrespondenceList& pairs);

/// One admissible (bearing, point) edge for sparse assignment.
struct CandidateEdge {
  std::size_t bearing = 0;
  std::size_t point = 0;
  double cost = 0.0;
};

/// Maximum-cardinality, then minimum-cost, one-to-one matching restricted to
/// the given edges. Disconnected components of the bipartite edge graph are
/// solved independently, so cost stays proportional to component sizes.
CorrespondenceList matchEdges(std::span<const CandidateEdge> edges);

/// Boolean inlier test at pose, made one-to-one by assignment on angular
/// error among admissible pairs. Only pairs with angle <= theta are returned.
CorrespondenceList correspondencesFromPose(const PointSets& instance, const Pose& pose,
                                           double theta);

/// The k largest entries of P in descending order, ties broken by ascending
/// (row, column). Throws ValidationError unless 1 <= k <= m*n.
std::vector<WeightedPair> topKSelect(const MatX& P, std::size_t k);

/// ceil(factor * min(m, n)), clamped to [1, m*n].
std::size_t candidateCount(std::size_t m, std::size_t n, double factor = 1.5);

}  // namespace bpnp
