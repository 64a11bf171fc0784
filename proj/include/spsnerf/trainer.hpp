#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spsnerf/metrics.hpp"
#include "spsnerf/pipeline.hpp"
#include "spsnerf/rng.hpp"
#include "spsnerf/sgm.hpp"

namespace spsnerf {

// Bad run configuration (unknown key, unparsable value, inconsistent combo).
// The CLI maps this to its usage exit code, unlike I/O failures.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Ablation variants:
//   nerf         - color loss only, stratified + importance sampling
//   sparse_depth - depth loss on a sparse grid of prior pixels, corr forced to 1
//   dense_nocorr - depth loss on every valid prior pixel, corr forced to 1
//   full         - dense depth loss weighted and spread by the stereo correlation
enum class Variant { nerf, sparse_depth, dense_nocorr, full };

Variant parse_variant(const std::string& name);  // throws ConfigError
std::string variant_name(Variant v);

struct TrainConfig {
  FieldConfig field;
  LossConfig loss;
  Variant variant = Variant::full;
  int iters = 2000;
  int batch = 192;
  double lr = 2e-3;
  double lr_decay = 0.9;
  int lr_decay_every = 10000;
  int n_stratified = 16;
  int n_guided = 16;
  std::uint64_t seed = 1;
  int sparse_stride = 4;  // sparse_depth keeps every stride-th prior pixel
  int log_every = 50;
  int checkpoint_every = 0;  // extra snapshots; 0 keeps only the final one

  void validate() const;  // throws ConfigError
};

// key=value overrides on top of defaults. Unknown keys are errors. Keys:
//   variant, iters, batch, lr, lr_decay, lr_decay_every, n_stratified,
//   n_guided, seed, sparse_stride, log_every, checkpoint_every,
//   field.l_pos, field.l_dir, field.width, field.depth, field.skip, field.act,
//   loss.lambda, loss.gamma, loss.m, loss.weight_power, loss.reduction
TrainConfig parse_train_config(const std::vector<std::pair<std::string, std::string>>& kv);

struct TrainView {
  std::string name;
  Raster image;
  Camera cam;
  std::optional<PriorMaps> prior;
};

struct Dataset {
  std::vector<TrainView> views;
  SceneEnvelope env;
  std::string test_name;
  Camera test_cam;
  Raster test_image;
};

// Reads manifest.txt plus the per-view images and cameras from a directory
// written by the scene generator.
Dataset load_dataset(const std::string& dir);

// Loads {view}_prior_depth/corr/valid.flt plus {view}_prior.txt (factor) for
// every training view; missing files raise IoError.
void attach_priors(Dataset& ds, const std::string& prior_dir);
void write_priors(const std::string& dir, const std::string& view_name, const PriorMaps& maps);
PriorMaps read_priors(const std::string& dir, const std::string& view_name);

// Prior lookup for a full-resolution pixel under the variant's masking rules;
// corr arrives already clamped, forced to 1 for the no-corr variants.
std::optional<DepthPrior> prior_for_pixel(const PriorMaps& maps, int x, int y, Variant variant,
                                          int sparse_stride);

// Frozen sample placement for one training ray: guided group centered on the
// prior when one is attached, otherwise importance resampling of a stratified
// probe pass (this is also the test-time path).
RaySampleSet plan_samples(const ParamStore& store, const TrainConfig& cfg,
                          const SceneEnvelope& env, const Ray& ray,
                          const std::optional<GaussParam>& prior_center, SampleMode mode,
                          RayRng& rng);

// One optimization step: deterministic batch from (seed, step), frozen
// samples, forward/backward, Adam with staircase learning-rate decay.
LossTotals train_step(ParamStore& store, const TrainConfig& cfg, const Dataset& ds);

double lr_at(const TrainConfig& cfg, std::uint64_t step);

// Runs the remaining iterations (store.step tracks progress, so a loaded
// checkpoint resumes), appends log.csv rows every log_every steps, and writes
// model.ckpt (plus ckpt_<step>.ckpt snapshots when checkpoint_every > 0).
void train(ParamStore& store, const TrainConfig& cfg, const Dataset& ds,
           const std::string& out_dir);

// Test-time render over envelope-clipped rays; pixels whose rays miss the
// envelope get black and depth -1.
void render_view(const ParamStore& store, const TrainConfig& cfg, const SceneEnvelope& env,
                 const Camera& cam, std::uint64_t seed, Raster* rgb, Raster* depth);

// Surface elevations over the grid from straight-down rays: o_z - depth.
Raster extract_dsm(const ParamStore& store, const TrainConfig& cfg, const SceneEnvelope& env,
                   const DsmGrid& grid, std::uint64_t seed);

// 0/1 mask of pixels whose rays intersect the envelope; evaluation restricts
// image metrics to this region.
Raster coverage_mask(const Camera& cam, const SceneEnvelope& env);

// Round-trip of the pieces a checkpoint needs beyond raw parameters.
std::map<std::string, std::vector<float>> encode_meta(const TrainConfig& cfg,
                                                      const SceneEnvelope& env);
void decode_meta(const std::map<std::string, std::vector<float>>& meta, TrainConfig* cfg,
                 SceneEnvelope* env);

}  // namespace spsnerf
