#include "spsnerf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "spsnerf/io.hpp"
#include "spsnerf/rng.hpp"
#include "spsnerf/threads.hpp"

namespace spsnerf {
namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

std::string manifest_value(const std::vector<std::pair<std::string, std::string>>& kv,
                           const std::string& key, const std::string& path) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw IoError(path + ": missing key " + key);
}

// Half a mean sample spacing; keeps the guided Gaussian from collapsing when
// the predicted depth spread underflows early in training.
double min_guided_std(const Ray& ray, int n_total) {
  return 0.5 * (ray.t_far - ray.t_near) / std::max(1, n_total);
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "nerf") return Variant::nerf;
  if (name == "sparse_depth") return Variant::sparse_depth;
  if (name == "dense_nocorr") return Variant::dense_nocorr;
  if (name == "full") return Variant::full;
  throw ConfigError("unknown variant '" + name +
                    "' (expected nerf|sparse_depth|dense_nocorr|full)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::nerf: return "nerf";
    case Variant::sparse_depth: return "sparse_depth";
    case Variant::dense_nocorr: return "dense_nocorr";
    case Variant::full: return "full";
  }
  return "full";
}

void TrainConfig::validate() const {
  try {
    field.validate();
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (iters < 1) throw ConfigError("iters must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!(lr_decay > 0) || lr_decay > 1) throw ConfigError("lr_decay must lie in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (n_stratified < 1) throw ConfigError("n_stratified must be >= 1");
  if (n_guided < 0) throw ConfigError("n_guided must be >= 0");
  if (sparse_stride < 1) throw ConfigError("sparse_stride must be >= 1");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

TrainConfig parse_train_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  TrainConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "iters") cfg.iters = to_int(key, value);
    else if (key == "batch") cfg.batch = to_int(key, value);
    else if (key == "lr") cfg.lr = to_double(key, value);
    else if (key == "lr_decay") cfg.lr_decay = to_double(key, value);
    else if (key == "lr_decay_every") cfg.lr_decay_every = to_int(key, value);
    else if (key == "n_stratified") cfg.n_stratified = to_int(key, value);
    else if (key == "n_guided") cfg.n_guided = to_int(key, value);
    else if (key == "seed") cfg.seed = to_u64(key, value);
    else if (key == "sparse_stride") cfg.sparse_stride = to_int(key, value);
    else if (key == "log_every") cfg.log_every = to_int(key, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = to_int(key, value);
    else if (key == "field.l_pos") cfg.field.l_pos = to_int(key, value);
    else if (key == "field.l_dir") cfg.field.l_dir = to_int(key, value);
    else if (key == "field.width") cfg.field.width = to_int(key, value);
    else if (key == "field.depth") cfg.field.depth = to_int(key, value);
    else if (key == "field.skip") cfg.field.skip = to_int(key, value);
    else if (key == "field.act") {
      if (value == "relu") cfg.field.act = FieldConfig::Act::relu;
      else if (value == "sine") cfg.field.act = FieldConfig::Act::sine;
      else throw ConfigError("field.act must be relu or sine");
    } else if (key == "loss.lambda") cfg.loss.lambda = to_double(key, value);
    else if (key == "loss.gamma") cfg.loss.gamma = to_double(key, value);
    else if (key == "loss.m") cfg.loss.m_shift = to_double(key, value);
    else if (key == "loss.weight_power") cfg.loss.weight_power = to_int(key, value);
    else if (key == "loss.reduction") {
      if (value == "sum") cfg.loss.reduction = LossConfig::Reduction::sum;
      else if (value == "mean") cfg.loss.reduction = LossConfig::Reduction::mean;
      else throw ConfigError("loss.reduction must be sum or mean");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

Dataset load_dataset(const std::string& dir) {
  const std::string manifest = dir + "/manifest.txt";
  auto kv = read_kv(manifest);
  Dataset ds;
  ds.env.box_min = Vec3(to_double("env_min_x", manifest_value(kv, "env_min_x", manifest)),
                        to_double("env_min_y", manifest_value(kv, "env_min_y", manifest)),
                        to_double("env_min_z", manifest_value(kv, "env_min_z", manifest)));
  ds.env.box_max = Vec3(to_double("env_max_x", manifest_value(kv, "env_max_x", manifest)),
                        to_double("env_max_y", manifest_value(kv, "env_max_y", manifest)),
                        to_double("env_max_z", manifest_value(kv, "env_max_z", manifest)));
  ds.env.margin = to_double("env_margin", manifest_value(kv, "env_margin", manifest));
  int n_train = to_int("n_train", manifest_value(kv, "n_train", manifest));
  if (n_train < 1) throw IoError(manifest + ": n_train must be >= 1");
  for (int i = 0; i < n_train; ++i) {
    TrainView view;
    view.name = manifest_value(kv, "train" + std::to_string(i), manifest);
    view.image = read_png(dir + "/" + view.name + ".png");
    view.cam = read_camera(dir + "/" + view.name + ".cam");
    ds.views.push_back(std::move(view));
  }
  ds.test_name = manifest_value(kv, "test", manifest);
  ds.test_image = read_png(dir + "/" + ds.test_name + ".png");
  ds.test_cam = read_camera(dir + "/" + ds.test_name + ".cam");
  return ds;
}

void write_priors(const std::string& dir, const std::string& view_name, const PriorMaps& maps) {
  const std::string base = dir + "/" + view_name + "_prior";
  write_flt(base + "_depth.flt", maps.depth);
  write_flt(base + "_corr.flt", maps.corr);
  write_flt(base + "_valid.flt", maps.valid);
  write_kv(base + ".txt", {{"factor", std::to_string(maps.factor)}});
}

PriorMaps read_priors(const std::string& dir, const std::string& view_name) {
  const std::string base = dir + "/" + view_name + "_prior";
  PriorMaps maps;
  maps.depth = read_flt(base + "_depth.flt");
  maps.corr = read_flt(base + "_corr.flt");
  maps.valid = read_flt(base + "_valid.flt");
  auto kv = read_kv(base + ".txt");
  maps.factor = to_int("factor", manifest_value(kv, "factor", base + ".txt"));
  if (!maps.depth.same_shape(maps.corr) || !maps.depth.same_shape(maps.valid) ||
      maps.depth.channels != 1 || maps.factor < 1)
    throw IoError(base + ": inconsistent prior rasters");
  return maps;
}

void attach_priors(Dataset& ds, const std::string& prior_dir) {
  for (auto& view : ds.views) view.prior = read_priors(prior_dir, view.name);
}

std::optional<DepthPrior> prior_for_pixel(const PriorMaps& maps, int x, int y, Variant variant,
                                          int sparse_stride) {
  if (variant == Variant::nerf) return std::nullopt;
  int lx = x / maps.factor, ly = y / maps.factor;
  if (!maps.valid.in_bounds(lx, ly) || maps.valid.at(lx, ly) == 0.f) return std::nullopt;
  if (variant == Variant::sparse_depth && (lx % sparse_stride != 0 || ly % sparse_stride != 0))
    return std::nullopt;
  DepthPrior p;
  p.depth = maps.depth.at(lx, ly);
  p.corr = variant == Variant::full ? std::clamp<double>(maps.corr.at(lx, ly), 0.0, 1.0) : 1.0;
  p.valid = true;
  return p;
}

RaySampleSet plan_samples(const ParamStore& store, const TrainConfig& cfg,
                          const SceneEnvelope& env, const Ray& ray,
                          const std::optional<GaussParam>& prior_center, SampleMode mode,
                          RayRng& rng) {
  const int n1 = cfg.n_stratified, n2 = cfg.n_guided;
  if (mode == SampleMode::train && prior_center && n2 > 0)
    return two_group_samples(ray, n1, n2, prior_center, std::nullopt, SampleMode::train, rng);

  std::vector<double> strat = stratified_samples(ray.t_near, ray.t_far, n1, rng);
  if (n2 == 0) return finalize_samples(strat, {}, ray.t_near, ray.t_far);

  // Probe the current field over the stratified group, then spread the guided
  // group around the predicted depth.
  RaySampleSet probe = finalize_samples(strat, {}, ray.t_near, ray.t_far);
  FieldTrace<float> tr;
  std::vector<double> pos;
  RenderResult<float> res = render_ray(store, cfg.field, env, ray, probe, tr, pos);
  double mean = std::clamp(static_cast<double>(res.depth), ray.t_near, ray.t_far);
  double stddev = std::max(static_cast<double>(res.depth_std), min_guided_std(ray, n1 + n2));
  std::vector<double> guided = guided_samples(mean, stddev, ray.t_near, ray.t_far, n2, rng);
  return finalize_samples(strat, guided, ray.t_near, ray.t_far);
}

double lr_at(const TrainConfig& cfg, std::uint64_t step) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_decay_every));
}

LossTotals train_step(ParamStore& store, const TrainConfig& cfg, const Dataset& ds) {
  if (ds.views.empty()) throw ConfigError("train_step: dataset has no training views");
  if (cfg.variant != Variant::nerf)
    for (const auto& view : ds.views)
      if (!view.prior)
        throw ConfigError("variant " + variant_name(cfg.variant) +
                          " needs a depth prior for view " + view.name);

  struct Pick {
    int view, x, y;
    std::uint64_t seed;
  };
  RayRng srng = step_rng(cfg.seed, store.step);
  std::vector<Pick> picks;
  picks.reserve(cfg.batch);
  long attempts = 0;
  const long max_attempts = 10000L * cfg.batch;
  while (static_cast<int>(picks.size()) < cfg.batch) {
    if (++attempts > max_attempts)
      throw std::runtime_error("train_step: cannot find rays that intersect the envelope");
    Pick p;
    p.view = std::min(static_cast<int>(srng.uniform() * ds.views.size()),
                      static_cast<int>(ds.views.size()) - 1);
    const Camera& cam = ds.views[p.view].cam;
    p.x = std::min(static_cast<int>(srng.uniform() * cam.width), cam.width - 1);
    p.y = std::min(static_cast<int>(srng.uniform() * cam.height), cam.height - 1);
    p.seed = srng.eng();
    if (!pixel_ray(cam, Vec2(p.x + 0.5, p.y + 0.5), ds.env)) continue;
    picks.push_back(p);
  }

  std::vector<RayTask> batch(picks.size());
  parallel_for(picks.size(), [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      const Pick& p = picks[i];
      const TrainView& view = ds.views[p.view];
      RayTask& task = batch[i];
      task.ray = *pixel_ray(view.cam, Vec2(p.x + 0.5, p.y + 0.5), ds.env);
      for (int c = 0; c < 3; ++c) task.target[c] = view.image.at(p.x, p.y, c);
      std::optional<GaussParam> center;
      if (view.prior) {
        auto prior = prior_for_pixel(*view.prior, p.x, p.y, cfg.variant, cfg.sparse_stride);
        if (prior) {
          task.prior = *prior;
          center = GaussParam{prior->depth,
                              prior_uncertainty(prior->corr, cfg.loss.gamma, cfg.loss.m_shift)};
        }
      }
      RayRng rng(p.seed);
      task.samples = plan_samples(store, cfg, ds.env, task.ray, center, SampleMode::train, rng);
    }
  });

  store.zero_grad();
  LossTotals totals = forward_backward(store, cfg.field, ds.env, cfg.loss, batch, true);
  double lr = lr_at(cfg, store.step);
  adam_step(store, lr);
  return totals;
}

void train(ParamStore& store, const TrainConfig& cfg, const Dataset& ds,
           const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

  const std::string log_path = out_dir + "/log.csv";
  const bool fresh = !fs::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open " + log_path);
  if (fresh) log << "step,color,depth,total,lr\n";

  auto meta = encode_meta(cfg, ds.env);
  while (store.step < cfg.iters) {
    std::int64_t done_after = store.step + 1;
    LossTotals totals = train_step(store, cfg, ds);
    std::uint64_t done = static_cast<std::uint64_t>(done_after);
    if (done % cfg.log_every == 0 || done_after == cfg.iters) {
      char row[160];
      std::snprintf(row, sizeof(row), "%llu,%.9g,%.9g,%.9g,%.9g\n",
                    static_cast<unsigned long long>(done), totals.color, totals.depth,
                    totals.total, lr_at(cfg, done - 1));
      log << row;
      log.flush();
    }
    if (cfg.checkpoint_every > 0 && done_after % cfg.checkpoint_every == 0 &&
        done_after < cfg.iters)
      save_checkpoint(out_dir + "/ckpt_" + std::to_string(done) + ".ckpt", store, meta);
  }
  save_checkpoint(out_dir + "/model.ckpt", store, meta);
}

void render_view(const ParamStore& store, const TrainConfig& cfg, const SceneEnvelope& env,
                 const Camera& cam, std::uint64_t seed, Raster* rgb, Raster* depth) {
  if (rgb) *rgb = Raster(cam.width, cam.height, 3, 0.f);
  if (depth) *depth = Raster(cam.width, cam.height, 1, -1.f);
  parallel_for(cam.height, [&](int y0, int y1, int) {
    FieldTrace<float> tr;
    std::vector<double> pos;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < cam.width; ++x) {
        auto ray = pixel_ray(cam, Vec2(x + 0.5, y + 0.5), env);
        if (!ray) continue;
        RayRng rng(seed, static_cast<std::uint64_t>(y) * cam.width + x);
        RaySampleSet set = plan_samples(store, cfg, env, *ray, std::nullopt, SampleMode::test, rng);
        RenderResult<float> res = render_ray(store, cfg.field, env, *ray, set, tr, pos);
        if (rgb)
          for (int c = 0; c < 3; ++c) rgb->at(x, y, c) = std::clamp(res.rgb[c], 0.f, 1.f);
        if (depth) depth->at(x, y, 0) = res.depth;
      }
  });
}

Raster extract_dsm(const ParamStore& store, const TrainConfig& cfg, const SceneEnvelope& env,
                   const DsmGrid& grid, std::uint64_t seed) {
  Raster out(grid.nx, grid.ny, 1, static_cast<float>(env.lo().z()));
  const double z_top = env.hi().z() + 10.0;
  parallel_for(grid.ny, [&](int j0, int j1, int) {
    FieldTrace<float> tr;
    std::vector<double> pos;
    for (int j = j0; j < j1; ++j)
      for (int i = 0; i < grid.nx; ++i) {
        Ray ray;
        ray.o = Vec3(grid.cx(i), grid.cy(j), z_top);
        ray.d = Vec3(0, 0, -1);
        auto span = ray_box(ray.o, ray.d, env.lo(), env.hi());
        if (!span) continue;
        ray.t_near = std::max(span->first, 1e-9);
        ray.t_far = span->second;
        if (!(ray.t_far > ray.t_near)) continue;
        RayRng rng(seed ^ 0xd5aull, static_cast<std::uint64_t>(j) * grid.nx + i);
        RaySampleSet set = plan_samples(store, cfg, env, ray, std::nullopt, SampleMode::test, rng);
        RenderResult<float> res = render_ray(store, cfg.field, env, ray, set, tr, pos);
        out.at(i, j) = static_cast<float>(ray.o.z() - res.depth);
      }
  });
  return out;
}

Raster coverage_mask(const Camera& cam, const SceneEnvelope& env) {
  Raster mask(cam.width, cam.height, 1, 0.f);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      if (pixel_ray(cam, Vec2(x + 0.5, y + 0.5), env)) mask.at(x, y) = 1.f;
  return mask;
}

std::map<std::string, std::vector<float>> encode_meta(const TrainConfig& cfg,
                                                      const SceneEnvelope& env) {
  std::map<std::string, std::vector<float>> meta;
  meta["meta.envelope"] = {
      static_cast<float>(env.box_min.x()), static_cast<float>(env.box_min.y()),
      static_cast<float>(env.box_min.z()), static_cast<float>(env.box_max.x()),
      static_cast<float>(env.box_max.y()), static_cast<float>(env.box_max.z()),
      static_cast<float>(env.margin)};
  meta["meta.field"] = {static_cast<float>(cfg.field.l_pos),  static_cast<float>(cfg.field.l_dir),
                        static_cast<float>(cfg.field.width),  static_cast<float>(cfg.field.depth),
                        static_cast<float>(cfg.field.skip),
                        cfg.field.act == FieldConfig::Act::relu ? 0.f : 1.f};
  meta["meta.sampler"] = {static_cast<float>(cfg.n_stratified), static_cast<float>(cfg.n_guided),
                          static_cast<float>(static_cast<int>(cfg.variant))};
  meta["meta.loss"] = {static_cast<float>(cfg.loss.lambda), static_cast<float>(cfg.loss.gamma),
                       static_cast<float>(cfg.loss.m_shift),
                       static_cast<float>(cfg.loss.weight_power),
                       cfg.loss.reduction == LossConfig::Reduction::sum ? 0.f : 1.f};
  return meta;
}

void decode_meta(const std::map<std::string, std::vector<float>>& meta, TrainConfig* cfg,
                 SceneEnvelope* env) {
  auto need = [&](const std::string& key, std::size_t n) -> const std::vector<float>& {
    auto it = meta.find(key);
    if (it == meta.end() || it->second.size() != n)
      throw IoError("checkpoint: missing or malformed " + key);
    return it->second;
  };
  if (env) {
    const auto& e = need("meta.envelope", 7);
    env->box_min = Vec3(e[0], e[1], e[2]);
    env->box_max = Vec3(e[3], e[4], e[5]);
    env->margin = e[6];
  }
  if (cfg) {
    const auto& f = need("meta.field", 6);
    cfg->field.l_pos = static_cast<int>(f[0]);
    cfg->field.l_dir = static_cast<int>(f[1]);
    cfg->field.width = static_cast<int>(f[2]);
    cfg->field.depth = static_cast<int>(f[3]);
    cfg->field.skip = static_cast<int>(f[4]);
    cfg->field.act = f[5] == 0.f ? FieldConfig::Act::relu : FieldConfig::Act::sine;
    const auto& s = need("meta.sampler", 3);
    cfg->n_stratified = static_cast<int>(s[0]);
    cfg->n_guided = static_cast<int>(s[1]);
    int v = static_cast<int>(s[2]);
    if (v < 0 || v > 3) throw IoError("checkpoint: bad variant index");
    cfg->variant = static_cast<Variant>(v);
    const auto& l = need("meta.loss", 5);
    cfg->loss.lambda = l[0];
    cfg->loss.gamma = l[1];
    cfg->loss.m_shift = l[2];
    cfg->loss.weight_power = static_cast<int>(l[3]);
    cfg->loss.reduction = l[4] == 0.f ? LossConfig::Reduction::sum : LossConfig::Reduction::mean;
  }
}

}  // namespace spsnerf
