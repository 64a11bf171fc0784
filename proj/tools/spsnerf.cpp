#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spsnerf/io.hpp"
#include "spsnerf/metrics.hpp"
#include "spsnerf/sgm.hpp"
#include "spsnerf/synth.hpp"
#include "spsnerf/trainer.hpp"

namespace {

using namespace spsnerf;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

Raster read_raster(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") return read_png(path);
  return read_flt(path);
}

double masked_psnr(const Raster& a, const Raster& b, const Raster* mask) {
  if (!mask) return psnr(a, b);
  double mse = 0.0;
  long count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask->at(x, y) == 0.f) continue;
      for (int c = 0; c < a.channels; ++c) {
        double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
        mse += d * d;
        count += 1;
      }
    }
  if (count == 0) return 99.0;
  mse /= static_cast<double>(count);
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

Raster apply_mask(const Raster& img, const Raster& mask) {
  Raster out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (mask.at(x, y) == 0.f)
        for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = 0.f;
  return out;
}

int run_make_scene(const std::string& kind, int size, std::uint64_t seed, double noise,
                   int views, const std::string& out) {
  SceneKind k;
  if (kind == "urban") k = SceneKind::urban;
  else if (kind == "rural") k = SceneKind::rural;
  else throw ConfigError("--kind must be urban or rural");
  Scene scene = make_scene(k, size, seed);
  make_dataset(scene, RigConfig{size}, views, noise, out);
  return 0;
}

int run_sgm(const std::string& dataset, const std::string& ref, const std::string& aux,
            const SgmParams& params, const std::string& out) {
  Dataset ds = load_dataset(dataset);
  auto find_view = [&](const std::string& name) -> const TrainView& {
    for (const auto& v : ds.views)
      if (v.name == name) return v;
    throw ConfigError("unknown view '" + name + "' in " + dataset);
  };
  const TrainView& rv = find_view(ref);
  const TrainView& av = find_view(aux);
  if (ref == aux) throw ConfigError("--ref-view and --aux-view must differ");
  PriorMaps maps = stereo_depth_prior(rv.image, rv.cam, av.image, av.cam, ds.env, params);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create directory " + out + ": " + ec.message());
  write_priors(out, ref, maps);
  return 0;
}

int run_train(const std::string& dataset, const std::string& priors, const std::string& config,
              const std::string& variant, const std::string& resume, const std::string& out) {
  std::vector<std::pair<std::string, std::string>> kv;
  if (!config.empty()) kv = read_kv(config);
  TrainConfig cfg = parse_train_config(kv);
  if (!variant.empty()) cfg.variant = parse_variant(variant);
  if (cfg.variant != Variant::nerf && priors.empty())
    throw ConfigError("variant " + variant_name(cfg.variant) + " requires --priors");

  Dataset ds = load_dataset(dataset);
  if (!priors.empty()) attach_priors(ds, priors);

  ParamStore store;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    store = std::move(ck.store);
  } else {
    init_field_params(store, cfg.field, cfg.seed);
  }
  train(store, cfg, ds, out);
  return 0;
}

int run_render(const std::string& checkpoint, const std::string& view, std::uint64_t seed,
               const std::string& out) {
  Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig cfg;
  SceneEnvelope env;
  decode_meta(ck.meta, &cfg, &env);
  Camera cam = read_camera(view);
  Raster rgb, depth;
  render_view(ck.store, cfg, env, cam, seed, &rgb, &depth);
  write_png(out + ".png", rgb);
  write_flt(out + "_depth.flt", depth);
  return 0;
}

int run_dsm(const std::string& checkpoint, double gsd, std::uint64_t seed,
            const std::string& out) {
  if (!(gsd > 0)) throw ConfigError("--gsd must be positive");
  Checkpoint ck = load_checkpoint(checkpoint);
  TrainConfig cfg;
  SceneEnvelope env;
  decode_meta(ck.meta, &cfg, &env);
  DsmGrid grid = dsm_grid(env, gsd);
  Raster dsm = extract_dsm(ck.store, cfg, env, grid, seed);
  write_flt(out, dsm);
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& valid_path, const std::string& mask_path,
             const std::string& report) {
  Raster pred = read_raster(pred_path);
  Raster gt = read_raster(gt_path);
  if (!pred.same_shape(gt)) throw ConfigError("eval: --pred and --gt shapes differ");

  std::optional<Raster> mask;
  if (!mask_path.empty()) {
    mask = read_raster(mask_path);
    if (mask->width != pred.width || mask->height != pred.height || mask->channels != 1)
      throw ConfigError("eval: --mask must be a single-channel raster of the same size");
  }
  Raster valid(pred.width, pred.height, 1, 1.f);
  if (!valid_path.empty()) {
    valid = read_raster(valid_path);
    if (valid.width != pred.width || valid.height != pred.height || valid.channels != 1)
      throw ConfigError("eval: --valid-mask must be a single-channel raster of the same size");
  }

  const Raster& pa = mask ? apply_mask(pred, *mask) : pred;
  const Raster& ga = mask ? apply_mask(gt, *mask) : gt;
  double psnr_v = masked_psnr(pred, gt, mask ? &*mask : nullptr);
  double ssim_v = ssim(pa, ga);
  Raster valid_eff = valid;
  if (mask)
    for (int y = 0; y < valid_eff.height; ++y)
      for (int x = 0; x < valid_eff.width; ++x)
        if (mask->at(x, y) == 0.f) valid_eff.at(x, y) = 0.f;
  MaeSplit mae = mae_split(to_gray(gt), to_gray(pred), valid_eff);

  std::vector<std::pair<std::string, std::string>> rows;
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  rows.emplace_back("psnr", fmt(psnr_v));
  rows.emplace_back("ssim", fmt(ssim_v));
  rows.emplace_back("mae_in", fmt(mae.mae_in));
  rows.emplace_back("mae_out", fmt(mae.mae_out));
  for (const auto& [k, v] : rows) std::printf("%s=%s\n", k.c_str(), v.c_str());
  if (!report.empty()) write_kv(report, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view neural radiance fields with dense stereo depth priors"};
  app.require_subcommand(1);

  // make-scene
  std::string ms_kind, ms_out;
  int ms_size = 256, ms_views = 2;
  std::uint64_t ms_seed = 7;
  double ms_noise = 0.01;
  auto* ms = app.add_subcommand("make-scene", "Generate a synthetic dataset directory");
  ms->add_option("--kind", ms_kind, "urban|rural")->required();
  ms->add_option("--size", ms_size, "image side in pixels");
  ms->add_option("--seed", ms_seed, "scene seed");
  ms->add_option("--noise", ms_noise, "training-image pixel noise stddev");
  ms->add_option("--views", ms_views, "number of training views");
  ms->add_option("--out", ms_out, "output directory")->required();

  // sgm
  std::string sg_dataset, sg_ref, sg_aux, sg_out;
  SgmParams sg_params;
  auto* sg = app.add_subcommand("sgm", "Compute a stereo depth prior for one view");
  sg->add_option("--dataset", sg_dataset, "dataset directory")->required();
  sg->add_option("--ref-view", sg_ref, "view receiving the prior")->required();
  sg->add_option("--aux-view", sg_aux, "matching partner view")->required();
  sg->add_option("--factor", sg_params.factor, "downsample factor");
  sg->add_option("--window", sg_params.window, "matching window (odd)");
  sg->add_option("--p1", sg_params.p1, "small disparity-change penalty");
  sg->add_option("--p2", sg_params.p2, "large disparity-change penalty");
  sg->add_option("--dirs", sg_params.n_dirs, "aggregation paths (4 or 8)");
  sg->add_option("--lr-tol", sg_params.lr_tol, "left-right agreement tolerance");
  sg->add_option("--out", sg_out, "output directory")->required();

  // train
  std::string tr_dataset, tr_priors, tr_config, tr_variant, tr_resume, tr_out;
  auto* tr = app.add_subcommand("train", "Optimize the radiance field");
  tr->add_option("--dataset", tr_dataset, "dataset directory")->required();
  tr->add_option("--priors", tr_priors, "directory with depth priors");
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--variant", tr_variant, "nerf|sparse_depth|dense_nocorr|full");
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");
  tr->add_option("--out", tr_out, "output directory")->required();

  // render
  std::string rd_ckpt, rd_view, rd_out;
  std::uint64_t rd_seed = 0;
  auto* rd = app.add_subcommand("render", "Render a camera from a checkpoint");
  rd->add_option("--checkpoint", rd_ckpt, "model checkpoint")->required();
  rd->add_option("--view", rd_view, "camera file")->required();
  rd->add_option("--seed", rd_seed, "sampling seed");
  rd->add_option("--out", rd_out, "output base path (writes .png and _depth.flt)")->required();

  // dsm
  std::string dm_ckpt, dm_out;
  double dm_gsd = 0.0;
  std::uint64_t dm_seed = 0;
  auto* dm = app.add_subcommand("dsm", "Extract a surface model from a checkpoint");
  dm->add_option("--checkpoint", dm_ckpt, "model checkpoint")->required();
  dm->add_option("--gsd", dm_gsd, "ground cell size in meters")->required();
  dm->add_option("--seed", dm_seed, "sampling seed");
  dm->add_option("--out", dm_out, "output FLT raster")->required();

  // eval
  std::string ev_pred, ev_gt, ev_valid, ev_mask, ev_report;
  auto* ev = app.add_subcommand("eval", "Compare two rasters (PNG or FLT)");
  ev->add_option("--pred", ev_pred, "prediction raster")->required();
  ev->add_option("--gt", ev_gt, "ground-truth raster")->required();
  ev->add_option("--valid-mask", ev_valid, "0/1 raster splitting mae_in/mae_out");
  ev->add_option("--mask", ev_mask, "0/1 raster restricting all metrics to a region");
  ev->add_option("--report", ev_report, "also write the key=value report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s\n", app.help().c_str());
    return kExitUsage;
  }

  try {
    if (ms->parsed()) return run_make_scene(ms_kind, ms_size, ms_seed, ms_noise, ms_views, ms_out);
    if (sg->parsed()) return run_sgm(sg_dataset, sg_ref, sg_aux, sg_params, sg_out);
    if (tr->parsed())
      return run_train(tr_dataset, tr_priors, tr_config, tr_variant, tr_resume, tr_out);
    if (rd->parsed()) return run_render(rd_ckpt, rd_view, rd_seed, rd_out);
    if (dm->parsed()) return run_dsm(dm_ckpt, dm_gsd, dm_seed, dm_out);
    if (ev->parsed()) return run_eval(ev_pred, ev_gt, ev_valid, ev_mask, ev_report);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
