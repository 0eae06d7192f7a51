#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>

#include "bpnp/transport.hpp"
#include "bpnp/types.hpp"

namespace bpnp {

/// Synthetic blind-PnP instance generator settings.
struct SynthConfig {
  std::size_t n_points = 1000;
  /// Euler angles (intrinsic Z-Y-X) are drawn uniformly from [0, euler_max].
  double euler_max = 0.7853981633974483;
  /// Translation components uniform in [-translation_range, translation_range].
  double translation_range = 0.5;
  double z_offset = 4.5;
  int image_width = 640;
  int image_height = 480;
  double focal = 800.0;
  double pixel_noise_sigma = 2.0;
  /// Fraction of bearings replaced by uniform image points (no gt pair).
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SampledPose {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  Pose pose;
};

/// Draws the camera pose of one instance from `rng`.
SampledPose samplePose(const SynthConfig& config, std::mt19937_64& rng);

/// Pinhole intrinsics with the principal point at the image centre.
Mat3 syntheticIntrinsics(const SynthConfig& config);

/// Points uniform in the unit cube, a random camera, pixel noise, shuffled
/// bearing order, optional outliers. Deterministic per seed. Points that
/// project outside the image are resampled; throws NumericalError when that
/// keeps failing.
PointSets generateInstance(const SynthConfig& config);

/// Stand-in for learned feature distances: 0 on ground-truth pairs and
/// `sharpness` elsewhere, plus uniform noise in [0, noise) when noise > 0.
/// Throws ValidationError without ground-truth pairs.
MatX oracleCost(const PointSets& instance, double sharpness, double noise = 0.0,
                std::uint64_t seed = 0);

/// Sinkhorn plan of the oracle cost at entropy mu.
TransportPlan oracleProbability(const PointSets& instance, double sharpness, double noise = 0.0,
                                std::uint64_t seed = 0, double mu = 0.1);

// Instance files: a text document with [metadata], [intrinsics], [bearings],
// [points], [gt_pose], [gt_pairs] and [end] sections, numbers written with
// 17 significant digits so every double round-trips exactly.

void writeInstance(std::ostream& out, const PointSets& instance);
/// Throws ParseError naming the offending line and section.
PointSets readInstance(std::istream& in, const std::string& source = "<stream>");
void saveInstance(const PointSets& instance, const std::filesystem::path& path);
PointSets loadInstance(const std::filesystem::path& path);

// Cost files: [metadata] with rows/cols, then [cost] rows, then [end].

void writeCost(std::ostream& out, const MatX& cost);
MatX readCost(std::istream& in, const std::string& source = "<stream>");
void saveCost(const MatX& cost, const std::filesystem::path& path);
MatX loadCost(const std::filesystem::path& path);

}  // namespace bpnp
