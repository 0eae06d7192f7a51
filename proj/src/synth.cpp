#include "bpnp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bpnp/geometry.hpp"

namespace bpnp {

void SynthConfig::validate() const {
  if (n_points < 1) throw ValidationError("synth: n_points must be positive");
  if (!(euler_max >= 0.0) || !(translation_range >= 0.0) || !std::isfinite(z_offset)) {
    throw ValidationError("synth: pose ranges must be finite and nonnegative");
  }
  if (image_width < 1 || image_height < 1 || !(focal > 0.0)) {
    throw ValidationError("synth: image size and focal length must be positive");
  }
  if (!(pixel_noise_sigma >= 0.0)) throw ValidationError("synth: noise sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw ValidationError("synth: outlier fraction must lie in [0, 1)");
  }
}

SampledPose samplePose(const SynthConfig& config, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, config.euler_max);
  std::uniform_real_distribution<double> shift(-config.translation_range,
                                               config.translation_range);
  SampledPose s;
  s.yaw = angle(rng);
  s.pitch = angle(rng);
  s.roll = angle(rng);
  s.pose.rotation = logSO3(rotationFromEulerZYX(s.yaw, s.pitch, s.roll));
  s.pose.translation = Vec3(shift(rng), shift(rng), shift(rng) + config.z_offset);
  return s;
}

Mat3 syntheticIntrinsics(const SynthConfig& config) {
  Mat3 K = Mat3::Identity();
  K(0, 0) = K(1, 1) = config.focal;
  K(0, 2) = 0.5 * config.image_width;
  K(1, 2) = 0.5 * config.image_height;
  return K;
}

PointSets generateInstance(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> cube(-0.5, 0.5);
  std::uniform_real_distribution<double> pixel_u(0.0, config.image_width);
  std::uniform_real_distribution<double> pixel_v(0.0, config.image_height);
  std::normal_distribution<double> noise(0.0, 1.0);

  const SampledPose sampled = samplePose(config, rng);
  const Mat3 R = expSO3<double>(sampled.pose.rotation);
  const Vec3& t = sampled.pose.translation;
  const Mat3 K = syntheticIntrinsics(config);
  const std::size_t n = config.n_points;

  PointSets out;
  out.intrinsics = K;
  out.points.resize(n);
  std::vector<Eigen::Vector2d> pixels(n);
  constexpr int kMaxRetries = 10000;
  for (std::size_t j = 0; j < n; ++j) {
    int tries = 0;
    for (;; ++tries) {
      if (tries == kMaxRetries) {
        throw NumericalError("synth: could not place a point inside the image (seed " +
                             std::to_string(config.seed) + ")");
      }
      const Vec3 p(cube(rng), cube(rng), cube(rng));
      const Vec3 x = R * p + t;
      if (x.z() <= 0.0) continue;
      const Eigen::Vector2d uv = projectToPixel(x, K);
      if (uv.x() < 0.0 || uv.x() >= config.image_width || uv.y() < 0.0 ||
          uv.y() >= config.image_height) {
        continue;
      }
      out.points[j] = p;
      pixels[j] = uv;
      break;
    }
  }
  for (auto& uv : pixels) {
    uv += config.pixel_noise_sigma * Eigen::Vector2d(noise(rng), noise(rng));
  }

  // Bearing slot of point j is slot[j].
  std::vector<std::size_t> slot(n);
  std::iota(slot.begin(), slot.end(), std::size_t{0});
  std::shuffle(slot.begin(), slot.end(), rng);

  out.bearings.resize(n);
  CorrespondenceList pairs;
  for (std::size_t j = 0; j < n; ++j) {
    out.bearings[slot[j]] = bearingFromPixel(pixels[j].x(), pixels[j].y(), K);
    pairs.push_back({slot[j], j});
  }

  const auto outliers = static_cast<std::size_t>(
      std::llround(config.outlier_fraction * static_cast<double>(n)));
  if (outliers > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> is_outlier(n, 0);
    for (std::size_t k = 0; k < outliers; ++k) {
      const std::size_t i = order[k];
      is_outlier[i] = 1;
      out.bearings[i] = bearingFromPixel(pixel_u(rng), pixel_v(rng), K);
    }
    std::erase_if(pairs, [&](const Correspondence& c) { return is_outlier[c.bearing] != 0; });
  }
  std::sort(pairs.begin(), pairs.end());

  out.gt_pose = sampled.pose;
  out.gt_pairs = std::move(pairs);
  out.metadata["generator"] = "bpnp-synth";
  out.metadata["euler_convention"] = "intrinsic-zyx";
  out.metadata["seed"] = std::to_string(config.seed);
  return out;
}

MatX oracleCost(const PointSets& instance, double sharpness, double noise, std::uint64_t seed) {
  if (!instance.gt_pairs) throw ValidationError("oracleCost: instance has no ground-truth pairs");
  const auto m = static_cast<Eigen::Index>(instance.numBearings());
  const auto n = static_cast<Eigen::Index>(instance.numPoints());
  MatX M = MatX::Constant(m, n, sharpness);
  for (const auto& c : *instance.gt_pairs) {
    M(static_cast<Eigen::Index>(c.bearing), static_cast<Eigen::Index>(c.point)) = 0.0;
  }
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.0, noise);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) M(i, j) += jitter(rng);
  }
  return M;
}

TransportPlan oracleProbability(const PointSets& instance, double sharpness, double noise,
                                std::uint64_t seed, double mu) {
  return sinkhorn(oracleCost(instance, sharpness, noise, seed), mu);
}

}  // namespace bpnp
