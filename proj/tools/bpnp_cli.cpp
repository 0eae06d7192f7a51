// bpnp: generate synthetic blind-PnP data, solve it, benchmark, gradcheck.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bpnp/geometry.hpp"
#include "bpnp/gradcheck.hpp"
#include "bpnp/pipeline.hpp"
#include "bpnp/synth.hpp"
#include "bpnp/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr const char* kSolveSchema = "bpnp-solve-v1";
constexpr const char* kQuartileSchema = "bpnp-benchmark-quartiles-v1";
constexpr const char* kRecallSchema = "bpnp-benchmark-recall-v1";
constexpr const char* kPerInstanceSchema = "bpnp-benchmark-instances-v1";
constexpr const char* kTimingSchema = "bpnp-benchmark-timing-v1";
constexpr const char* kGradcheckSchema = "bpnp-gradcheck-v1";
constexpr const char* kManifestSchema = "bpnp-manifest-v1";

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::string csvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

fs::path defaultOutputDir() {
  if (const char* env = std::getenv("BPNP_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

std::string instanceName(std::uint64_t seed) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "instance_%07llu", static_cast<unsigned long long>(seed));
  return buf;
}

void ensureDirectory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + dir.string() +
                             "': " + (ec ? ec.message() : "not a directory"));
  }
}

void writeFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// A file is taken as is; a directory contributes its instance_* files in
/// name order.
std::vector<fs::path> listInstances(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("no such file or directory: '" + path.string() + "'");
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("instance_", 0) == 0 && !entry.path().has_extension()) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::uint64_t instanceSeed(const bpnp::PointSets& instance, std::size_t fallback) {
  const auto it = instance.metadata.find("seed");
  if (it == instance.metadata.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    return fallback;
  }
}

struct SynthFlags {
  bpnp::SynthConfig config;
  double euler_max_deg = 45.0;

  void add(CLI::App* app) {
    app->add_option("--points", config.n_points, "Points per instance (m = n)")->capture_default_str();
    app->add_option("--sigma", config.pixel_noise_sigma, "Pixel noise standard deviation")->capture_default_str();
    app->add_option("--outliers", config.outlier_fraction, "Fraction of bearings replaced by outliers")->capture_default_str();
    app->add_option("--euler-max-deg", euler_max_deg, "Upper bound of each Euler angle (degrees)")->capture_default_str();
    app->add_option("--translation-range", config.translation_range, "Translation components in [-r, r]")->capture_default_str();
    app->add_option("--z-offset", config.z_offset, "Translation offset along z")->capture_default_str();
    app->add_option("--focal", config.focal, "Focal length (pixels)")->capture_default_str();
    app->add_option("--width", config.image_width, "Image width (pixels)")->capture_default_str();
    app->add_option("--height", config.image_height, "Image height (pixels)")->capture_default_str();
  }

  bpnp::SynthConfig resolved() const {
    bpnp::SynthConfig c = config;
    c.euler_max = euler_max_deg * std::numbers::pi / 180.0;
    return c;
  }

  json snapshot() const {
    const auto c = resolved();
    return {{"points", c.n_points},          {"sigma", c.pixel_noise_sigma},
            {"outliers", c.outlier_fraction}, {"euler_max_deg", euler_max_deg},
            {"euler_convention", "intrinsic-zyx"},
            {"translation_range", c.translation_range},
            {"z_offset", c.z_offset},         {"focal", c.focal},
            {"width", c.image_width},         {"height", c.image_height}};
  }
};

struct PipelineFlags {
  bpnp::PipelineConfig config;
  double sharpness = 3.0;
  double cost_noise = 0.0;
  int jobs = 1;
  double time_limit = 0.0;

  void add(CLI::App* app) {
    app->add_option("--mu", config.sinkhorn.mu, "Sinkhorn entropy parameter")->capture_default_str();
    app->add_option("--k-factor", config.k_factor, "Candidates k = ceil(k_factor * min(m, n))")->capture_default_str();
    app->add_option("--inlier-threshold", config.ransac.inlier_threshold, "RANSAC angular inlier threshold (radians)")->capture_default_str();
    app->add_option("--ransac-iterations", config.ransac.max_iterations, "RANSAC iteration cap")->capture_default_str();
    app->add_option("--confidence", config.ransac.confidence, "RANSAC early-exit confidence")->capture_default_str();
    app->add_option("--ransac-seed", config.ransac.seed, "RANSAC seed")->capture_default_str();
    app->add_option("--lbfgs-iterations", config.pnp.lbfgs.max_iterations, "L-BFGS iteration cap")->capture_default_str();
    app->add_option("--prune", config.relative_prune, "Relative pruning of plan entries for the PnP layer")->capture_default_str();
    app->add_option("--sharpness", sharpness, "Oracle cost for non-matching pairs")->capture_default_str();
    app->add_option("--cost-noise", cost_noise, "Uniform noise added to the oracle cost")->capture_default_str();
    app->add_option("-j,--jobs", jobs, "Instances processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--time-limit", time_limit, "Per-instance wall-clock guard in seconds (0 = off)")->capture_default_str();
  }

  json snapshot() const {
    return {{"mu", config.sinkhorn.mu},
            {"sinkhorn_tolerance", config.sinkhorn.tolerance},
            {"sinkhorn_max_iterations", config.sinkhorn.max_iterations},
            {"k_factor", config.k_factor},
            {"inlier_threshold", config.ransac.inlier_threshold},
            {"ransac_iterations", config.ransac.max_iterations},
            {"confidence", config.ransac.confidence},
            {"ransac_seed", config.ransac.seed},
            {"lbfgs_history", config.pnp.lbfgs.history},
            {"lbfgs_tolerance", config.pnp.lbfgs.gradient_tolerance},
            {"lbfgs_iterations", config.pnp.lbfgs.max_iterations},
            {"gradient_clip", config.pnp.lbfgs.gradient_clip},
            {"prune", config.relative_prune},
            {"oracle_sharpness", sharpness},
            {"oracle_noise", cost_noise},
            {"time_limit", time_limit}};
  }
};

// ---------------------------------------------------------------- generate

int runGenerate(std::size_t count, std::uint64_t seed, const SynthFlags& flags,
                std::optional<fs::path> out_dir, int jobs) {
  const fs::path dir = out_dir.value_or(defaultOutputDir());
  ensureDirectory(dir);
  std::vector<std::string> names(count);
  bpnp::parallelFor(count, jobs, [&](std::size_t k) {
    bpnp::SynthConfig config = flags.resolved();
    config.seed = seed + k;
    names[k] = instanceName(config.seed);
    bpnp::saveInstance(bpnp::generateInstance(config), dir / names[k]);
  });
  json manifest = {{"schema", kManifestSchema},
                   {"command", "generate"},
                   {"version", bpnp::kVersion},
                   {"config", flags.snapshot()},
                   {"seed", seed},
                   {"count", count},
                   {"files", names}};
  writeFile(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << count << " instances to " << dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- solve

struct InstanceOutcome {
  std::string id;
  std::size_t m = 0, n = 0;
  std::string error;
  bpnp::PipelineResult result;
  bpnp::PoseErrors ransac, refined;
  bool has_truth = false;
  bool timed_out = false;
};

bpnp::MatX costFor(const bpnp::PointSets& instance, const fs::path& file,
                   const std::string& source, const PipelineFlags& flags, std::size_t index) {
  if (source == "oracle") {
    return bpnp::oracleCost(instance, flags.sharpness, flags.cost_noise,
                            instanceSeed(instance, index));
  }
  fs::path cost_path = source;
  if (fs::is_directory(cost_path)) cost_path /= file.filename().string() + ".cost";
  return bpnp::loadCost(cost_path);
}

InstanceOutcome solveOne(const fs::path& file, const std::string& cost_source,
                         const PipelineFlags& flags, std::size_t index) {
  InstanceOutcome out;
  out.id = file.filename().string();
  try {
    const bpnp::PointSets instance = bpnp::loadInstance(file);
    out.m = instance.numBearings();
    out.n = instance.numPoints();
    const bpnp::MatX M = costFor(instance, file, cost_source, flags, index);
    out.result = bpnp::solve(M, instance, flags.config);
    out.timed_out = flags.time_limit > 0.0 && out.result.seconds.total > flags.time_limit;
    if (instance.gt_pose) {
      out.has_truth = true;
      out.ransac = bpnp::poseErrors(instance, out.result.ransac.pose);
      out.refined = bpnp::poseErrors(instance, out.result.refined.pose);
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

int runSolve(const std::vector<std::string>& inputs, const std::string& cost_source,
             const PipelineFlags& flags, const std::optional<fs::path>& out_file) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const auto listed = listInstances(in);
    files.insert(files.end(), listed.begin(), listed.end());
  }
  if (files.empty()) throw std::runtime_error("no instance files found");
  if (cost_source != "oracle" && !fs::exists(cost_source)) {
    throw std::runtime_error("no such cost file or directory: '" + cost_source + "'");
  }

  std::vector<InstanceOutcome> outcomes(files.size());
  bpnp::parallelFor(files.size(), flags.jobs, [&](std::size_t k) {
    outcomes[k] = solveOne(files[k], cost_source, flags, k);
  });

  std::ostringstream csv;
  csv << "# schema: " << kSolveSchema << "\n";
  csv << "instance,m,n,status,ransac_rot_deg,ransac_trans,ransac_reproj_deg,refined_rot_deg,"
         "refined_trans,refined_reproj_deg,sinkhorn_s,ransac_s,refine_s,total_s,"
         "sinkhorn_converged,pnp_converged,low_inlier,ransac_inliers,message\n";
  std::size_t errors = 0;
  std::vector<double> refined_rot, ransac_rot;
  for (const auto& o : outcomes) {
    csv << csvField(o.id) << ',' << o.m << ',' << o.n << ',';
    if (!o.error.empty()) {
      ++errors;
      csv << "error,,,,,,,,,,,,,," << csvField(o.error) << "\n";
      continue;
    }
    const auto& r = o.result;
    csv << (o.timed_out ? "time_limit_exceeded" : "ok") << ',';
    if (o.has_truth) {
      csv << num(o.ransac.rotation_deg) << ',' << num(o.ransac.translation) << ','
          << num(o.ransac.reprojection_deg) << ',' << num(o.refined.rotation_deg) << ','
          << num(o.refined.translation) << ',' << num(o.refined.reprojection_deg) << ',';
      refined_rot.push_back(o.refined.rotation_deg);
      ransac_rot.push_back(o.ransac.rotation_deg);
    } else {
      csv << ",,,,,,";
    }
    csv << num(r.seconds.sinkhorn) << ',' << num(r.seconds.ransac) << ','
        << num(r.seconds.refine) << ',' << num(r.seconds.total) << ','
        << (r.plan.converged ? 1 : 0) << ',' << (r.refined.converged ? 1 : 0) << ','
        << (r.low_inlier ? 1 : 0) << ',' << r.ransac.inliers.size() << ",\n";
  }
  csv << "# summary: instances=" << outcomes.size() << " ok=" << outcomes.size() - errors
      << " errors=" << errors;
  if (!refined_rot.empty()) {
    const auto q_ref = bpnp::quartiles(refined_rot);
    const auto q_ran = bpnp::quartiles(ransac_rot);
    csv << " refined_rot_median_deg=" << num(q_ref.q2) << " ransac_rot_median_deg="
        << num(q_ran.q2);
  }
  csv << "\n";

  if (out_file) {
    if (out_file->has_parent_path()) ensureDirectory(out_file->parent_path());
    writeFile(*out_file, csv.str());
  } else {
    std::cout << csv.str();
  }
  for (const auto& o : outcomes) {
    if (!o.error.empty()) std::cerr << "bpnp solve: " << o.id << ": " << o.error << "\n";
  }
  return errors == 0 ? kExitOk : kExitRuntime;
}

// --------------------------------------------------------------- benchmark

struct BenchmarkFlags {
  std::vector<double> rotation_thresholds{5.0, 10.0, 15.0};
  std::vector<double> translation_thresholds{0.1, 0.5, 1.0};
  double baseline_theta = 0.05;
  int baseline_rounds = 20;
};

/// Mean pose of the synthetic generator: each Euler angle at half its range,
/// translation at the z offset. The alternation baseline needs a prior.
bpnp::Pose baselinePrior() {
  bpnp::SynthConfig defaults;
  const double half = 0.5 * defaults.euler_max;
  bpnp::Pose prior;
  prior.rotation = bpnp::logSO3(bpnp::rotationFromEulerZYX(half, half, half));
  prior.translation = bpnp::Vec3(0.0, 0.0, defaults.z_offset);
  return prior;
}

struct BenchmarkRow {
  std::string id;
  std::string error;
  bpnp::MethodSample refined, ransac, baseline;
  bool baseline_stalled = false;
  bool timed_out = false;
};

json summaryJson(const bpnp::MethodSummary& s) {
  return {{"rot_q_deg", {s.rotation_deg.q1, s.rotation_deg.q2, s.rotation_deg.q3}},
          {"trans_q", {s.translation.q1, s.translation.q2, s.translation.q3}},
          {"reproj_q_deg", {s.reprojection_deg.q1, s.reprojection_deg.q2, s.reprojection_deg.q3}},
          {"rotation_recall", s.rotation_recall},
          {"translation_recall", s.translation_recall}};
}

int runBenchmark(const fs::path& dataset, const PipelineFlags& flags, const BenchmarkFlags& bench,
                 const std::optional<fs::path>& out_dir_opt) {
  if (!fs::is_directory(dataset)) {
    throw std::runtime_error("dataset directory not found: '" + dataset.string() + "'");
  }
  const auto files = listInstances(dataset);
  if (files.empty()) throw std::runtime_error("empty dataset: '" + dataset.string() + "'");
  const fs::path out_dir = out_dir_opt.value_or(defaultOutputDir());
  ensureDirectory(out_dir);

  std::vector<BenchmarkRow> rows(files.size());
  bpnp::parallelFor(files.size(), flags.jobs, [&](std::size_t k) {
    BenchmarkRow& row = rows[k];
    row.id = files[k].filename().string();
    try {
      const bpnp::PointSets instance = bpnp::loadInstance(files[k]);
      if (!instance.gt_pose) throw bpnp::ValidationError("instance has no ground truth");
      const bpnp::MatX M = bpnp::oracleCost(instance, flags.sharpness, flags.cost_noise,
                                            instanceSeed(instance, k));
      const auto result = bpnp::solve(M, instance, flags.config);
      row.refined = {bpnp::poseErrors(instance, result.refined.pose), result.seconds.total};
      row.ransac = {bpnp::poseErrors(instance, result.ransac.pose),
                    result.seconds.sinkhorn + result.seconds.ransac};
      const auto t0 = std::chrono::steady_clock::now();
      const auto alt = bpnp::alternationBaseline(instance, baselinePrior(),
                                                 bench.baseline_theta, bench.baseline_rounds,
                                                 flags.config.pnp, flags.time_limit);
      const double alt_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.baseline = {bpnp::poseErrors(instance, alt.pose), alt_seconds};
      row.baseline_stalled = alt.stalled;
      row.timed_out = alt.timed_out ||
                      (flags.time_limit > 0.0 && result.seconds.total > flags.time_limit);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  std::vector<bpnp::MethodSample> refined, ransac, baseline;
  std::size_t failures = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failures;
      continue;
    }
    refined.push_back(r.refined);
    ransac.push_back(r.ransac);
    baseline.push_back(r.baseline);
  }
  if (refined.empty()) throw std::runtime_error("every instance failed");

  const std::vector<std::pair<std::string, bpnp::MethodSummary>> methods = {
      {"pipeline-refined", bpnp::summarize(refined, bench.rotation_thresholds, bench.translation_thresholds)},
      {"pipeline-ransac", bpnp::summarize(ransac, bench.rotation_thresholds, bench.translation_thresholds)},
      {"alternation-baseline", bpnp::summarize(baseline, bench.rotation_thresholds, bench.translation_thresholds)},
  };

  std::ostringstream quart, rec, inst, timing;
  quart << "# schema: " << kQuartileSchema << "\n"
        << "method,count,failures,rot_q1_deg,rot_q2_deg,rot_q3_deg,trans_q1,trans_q2,trans_q3,"
           "reproj_q1_deg,reproj_q2_deg,reproj_q3_deg\n";
  rec << "# schema: " << kRecallSchema << "\n" << "method,metric,threshold,recall\n";
  timing << "# schema: " << kTimingSchema << "\n" << "method,mean_time_s\n";
  for (const auto& [name, s] : methods) {
    quart << name << ',' << refined.size() << ',' << failures << ',' << num(s.rotation_deg.q1)
          << ',' << num(s.rotation_deg.q2) << ',' << num(s.rotation_deg.q3) << ','
          << num(s.translation.q1) << ',' << num(s.translation.q2) << ','
          << num(s.translation.q3) << ',' << num(s.reprojection_deg.q1) << ','
          << num(s.reprojection_deg.q2) << ',' << num(s.reprojection_deg.q3) << "\n";
    for (std::size_t k = 0; k < bench.rotation_thresholds.size(); ++k) {
      rec << name << ",rotation_deg," << num(bench.rotation_thresholds[k]) << ','
          << num(s.rotation_recall[k]) << "\n";
    }
    for (std::size_t k = 0; k < bench.translation_thresholds.size(); ++k) {
      rec << name << ",translation," << num(bench.translation_thresholds[k]) << ','
          << num(s.translation_recall[k]) << "\n";
    }
    timing << name << ',' << num(s.mean_seconds) << "\n";
  }
  inst << "# schema: " << kPerInstanceSchema << "\n"
       << "instance,method,status,rot_deg,trans,reproj_deg\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      inst << csvField(r.id) << ",all,error,,,\n";
      continue;
    }
    const std::pair<const char*, const bpnp::MethodSample*> per[] = {
        {"pipeline-refined", &r.refined},
        {"pipeline-ransac", &r.ransac},
        {"alternation-baseline", &r.baseline}};
    for (const auto& [name, sample] : per) {
      const char* status = "ok";
      if (sample == &r.baseline && r.baseline_stalled) status = "stalled";
      if (r.timed_out) status = "time_limit_exceeded";
      inst << csvField(r.id) << ',' << name << ',' << status << ','
           << num(sample->errors.rotation_deg) << ',' << num(sample->errors.translation) << ','
           << num(sample->errors.reprojection_deg) << "\n";
    }
  }
  writeFile(out_dir / "quartiles.csv", quart.str());
  writeFile(out_dir / "recall.csv", rec.str());
  writeFile(out_dir / "per_instance.csv", inst.str());
  writeFile(out_dir / "timing.csv", timing.str());

  json manifest = {{"schema", kManifestSchema},
                   {"command", "benchmark"},
                   {"version", bpnp::kVersion},
                   {"dataset", dataset.string()},
                   {"config", flags.snapshot()},
                   {"rotation_thresholds_deg", bench.rotation_thresholds},
                   {"translation_thresholds", bench.translation_thresholds},
                   {"baseline", {{"theta", bench.baseline_theta},
                                 {"rounds", bench.baseline_rounds},
                                 {"init", "generator-mean-pose"}}}};
  json instances = json::array();
  for (const auto& r : rows) {
    json entry = {{"id", r.id}};
    if (!r.error.empty()) {
      entry["error"] = r.error;
    } else {
      entry["refined"] = {r.refined.errors.rotation_deg, r.refined.errors.translation,
                          r.refined.errors.reprojection_deg};
      entry["ransac"] = {r.ransac.errors.rotation_deg, r.ransac.errors.translation,
                         r.ransac.errors.reprojection_deg};
      entry["baseline"] = {r.baseline.errors.rotation_deg, r.baseline.errors.translation,
                           r.baseline.errors.reprojection_deg};
    }
    instances.push_back(entry);
  }
  manifest["instances"] = instances;
  json aggregate = json::object();
  for (const auto& [name, s] : methods) aggregate[name] = summaryJson(s);
  manifest["aggregate"] = aggregate;
  writeFile(out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "method                  rot Q1/Q2/Q3 (deg)            trans Q1/Q2/Q3"
               "                reproj Q1/Q2/Q3 (deg)         T (s)\n";
  for (const auto& [name, s] : methods) {
    char line[320];
    std::snprintf(line, sizeof(line),
                  "%-22s  %8.4g %8.4g %8.4g   %8.4g %8.4g %8.4g   %8.4g %8.4g %8.4g   %8.4g\n",
                  name.c_str(), s.rotation_deg.q1, s.rotation_deg.q2, s.rotation_deg.q3,
                  s.translation.q1, s.translation.q2, s.translation.q3, s.reprojection_deg.q1,
                  s.reprojection_deg.q2, s.reprojection_deg.q3, s.mean_seconds);
    std::cout << line;
  }
  std::cout << "results written to " << out_dir.string() << "\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) std::cerr << "bpnp benchmark: " << r.id << ": " << r.error << "\n";
  }
  return failures == 0 ? kExitOk : kExitRuntime;
}

// --------------------------------------------------------------- gradcheck

const std::map<std::string, bpnp::InjectedFault>& faultNames() {
  static const std::map<std::string, bpnp::InjectedFault> names = {
      {"none", bpnp::InjectedFault::kNone},
      {"sinkhorn-vjp", bpnp::InjectedFault::kSinkhornVjpSign},
      {"pnp-gradient", bpnp::InjectedFault::kPnpGradientSign},
      {"pnp-hessian", bpnp::InjectedFault::kPnpHessianSign},
      {"pnp-vjp", bpnp::InjectedFault::kPnpVjpSign},
      {"pose-loss", bpnp::InjectedFault::kPoseLossSign},
      {"end-to-end", bpnp::InjectedFault::kEndToEndSign},
  };
  return names;
}

int runGradcheck(const bpnp::GradCheckConfig& config, const std::optional<fs::path>& out_file) {
  const auto records = bpnp::runGradientChecks(config);
  std::ostringstream csv;
  csv << "# schema: " << kGradcheckSchema << "\n"
      << "suite,size,seed,status,max_rel_error,tolerance,detail\n";
  std::size_t failed = 0;
  for (const auto& r : records) {
    if (r.status == bpnp::CheckStatus::kFail) ++failed;
    csv << r.suite << ',' << r.size << ',' << r.seed << ',' << bpnp::toString(r.status) << ','
        << num(r.max_rel_error) << ',' << num(r.tolerance) << ',' << csvField(r.detail) << "\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-20s size %3zu seed %4llu  %-17s max rel err %.3e (tol %.0e)",
                  r.suite.c_str(), r.size, static_cast<unsigned long long>(r.seed),
                  std::string(bpnp::toString(r.status)).c_str(), r.max_rel_error, r.tolerance);
    std::cout << line;
    if (!r.detail.empty()) std::cout << "  " << r.detail;
    std::cout << "\n";
  }
  if (out_file) {
    if (out_file->has_parent_path()) ensureDirectory(out_file->parent_path());
    writeFile(*out_file, csv.str());
  }
  std::cout << "gradcheck: " << records.size() << " checks, " << failed << " failed\n";
  for (const auto& r : records) {
    if (r.status != bpnp::CheckStatus::kFail) continue;
    std::cerr << "FAIL " << r.suite << ": reproduce with bpnp gradcheck --sizes " << r.size
              << " --seeds 1 --base-seed " << r.seed << "\n";
  }
  return failed == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind PnP: Sinkhorn matching, RANSAC initialisation and weighted PnP refinement"};
  app.set_version_flag("--version", bpnp::kVersion);
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic instances");
  std::size_t gen_count = 1;
  std::uint64_t gen_seed = 0;
  SynthFlags synth;
  std::optional<std::string> gen_out;
  int gen_jobs = 1;
  gen->add_option("-c,--count", gen_count, "Number of instances")->capture_default_str();
  gen->add_option("-s,--seed", gen_seed, "Seed of the first instance")->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output directory (default $BPNP_OUTPUT_DIR or .)");
  gen->add_option("-j,--jobs", gen_jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);
  synth.add(gen);

  // solve
  auto* sol = app.add_subcommand("solve", "Solve instances and report pose errors as CSV");
  std::vector<std::string> sol_inputs;
  std::string sol_cost = "oracle";
  std::optional<std::string> sol_out;
  PipelineFlags sol_flags;
  sol->add_option("inputs", sol_inputs, "Instance files or directories")->required();
  sol->add_option("--cost", sol_cost, "'oracle', a cost file, or a directory of <instance>.cost files")->capture_default_str();
  sol->add_option("-o,--out", sol_out, "CSV output file (default stdout)");
  sol_flags.add(sol);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Quartile and recall tables over a dataset");
  std::string bench_dataset;
  std::optional<std::string> bench_out;
  PipelineFlags bench_flags;
  BenchmarkFlags bench_opts;
  bench->add_option("dataset", bench_dataset, "Directory of instance files")->required();
  bench->add_option("-o,--out", bench_out, "Output directory (default $BPNP_OUTPUT_DIR or .)");
  bench->add_option("--thresholds", bench_opts.rotation_thresholds, "Rotation recall thresholds (degrees)")->delimiter(',')->capture_default_str();
  bench->add_option("--translation-thresholds", bench_opts.translation_thresholds, "Translation recall thresholds")->delimiter(',')->capture_default_str();
  bench->add_option("--baseline-theta", bench_opts.baseline_theta, "Alternation baseline inlier threshold (radians)")->capture_default_str();
  bench->add_option("--baseline-rounds", bench_opts.baseline_rounds, "Alternation baseline round cap")->capture_default_str();
  bench_flags.add(bench);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every derivative");
  bpnp::GradCheckConfig gc_config;
  std::string gc_fault = "none";
  std::optional<std::string> gc_out;
  gc->add_option("--sizes", gc_config.sizes, "Problem sizes")->delimiter(',')->capture_default_str();
  gc->add_option("--seeds", gc_config.seeds, "Seeds per size")->capture_default_str();
  gc->add_option("--base-seed", gc_config.base_seed, "First seed")->capture_default_str();
  gc->add_option("--step", gc_config.fd_step, "Finite-difference step")->capture_default_str();
  gc->add_option("--tol-sinkhorn", gc_config.sinkhorn_tolerance)->capture_default_str();
  gc->add_option("--tol-gradient", gc_config.gradient_tolerance)->capture_default_str();
  gc->add_option("--tol-second-order", gc_config.second_order_tolerance)->capture_default_str();
  gc->add_option("--tol-vjp", gc_config.vjp_tolerance)->capture_default_str();
  gc->add_option("--tol-loss", gc_config.loss_tolerance)->capture_default_str();
  gc->add_option("--tol-end-to-end", gc_config.end_to_end_tolerance)->capture_default_str();
  gc->add_option("--inject", gc_fault, "Harness self-test: flip the sign of one derivative")
      ->check(CLI::IsMember([] {
        std::vector<std::string> keys;
        for (const auto& [k, v] : faultNames()) keys.push_back(k);
        return keys;
      }()))
      ->capture_default_str();
  gc->add_option("-o,--out", gc_out, "Also write the report as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      synth.resolved().validate();
      return runGenerate(gen_count, gen_seed, synth,
                         gen_out ? std::optional<fs::path>(*gen_out) : std::nullopt, gen_jobs);
    }
    if (*sol) {
      return runSolve(sol_inputs, sol_cost, sol_flags,
                      sol_out ? std::optional<fs::path>(*sol_out) : std::nullopt);
    }
    if (*bench) {
      return runBenchmark(bench_dataset, bench_flags, bench_opts,
                          bench_out ? std::optional<fs::path>(*bench_out) : std::nullopt);
    }
    if (*gc) {
      gc_config.fault = faultNames().at(gc_fault);
      return runGradcheck(gc_config, gc_out ? std::optional<fs::path>(*gc_out) : std::nullopt);
    }
  } catch (const bpnp::ValidationError& e) {
    std::cerr << "bpnp: invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "bpnp: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
