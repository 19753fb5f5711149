#pragma once

// Command implementations behind the `lsk` executable. Each command reads a
// Config, writes files atomically and reports through the given streams.

#include <lsk/checkpoint.hpp>
#include <lsk/complexity.hpp>
#include <lsk/config.hpp>
#include <lsk/error.hpp>
#include <lsk/imaging.hpp>
#include <lsk/model_spec.hpp>
#include <lsk/network.hpp>
#include <lsk/png_io.hpp>
#include <lsk/train.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lsk {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_numeric = 3 };

/// Runs `body`, mapping lsk errors to exit codes: numeric failures give 3,
/// everything else 2.
template <class F>
int run_guarded(std::ostream& err, F&& body) {
  try {
    body();
    return exit_ok;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == Errc::numeric_failure ? exit_numeric : exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  }
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// "full" (64/32), "toy" (16/8) or "N1/N2".
inline Widths parse_widths(const std::string& s) {
  if (s == "full") return {64, 32};
  if (s == "toy") return {16, 8};
  const std::size_t slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      const std::size_t n1 = std::stoul(s.substr(0, slash)), n2 = std::stoul(s.substr(slash + 1));
      if (n1 >= 1 && n2 >= 1) return {n1, n2};
    }
  } catch (const std::exception&) {
  }
  fail(Errc::invalid_argument, "widths must be full, toy or N1/N2, got '" + s + "'");
}

inline ModelSpec model_from_config(const Config& cfg) {
  return spec_from_name(cfg.require_value("model"), cfg.get_size("scale"), parse_widths(cfg.get("widths")));
}

// ---------------------------------------------------------------------------
// analyze

inline std::vector<PairReport> analyze(const Config& cfg) {
  const auto names = cfg.get_list("models");
  require(!names.empty() && names.size() % 2 == 0, Errc::invalid_argument,
          "models must list (normal, separable) pairs, got " + std::to_string(names.size()) + " names");
  const std::size_t scale = cfg.get_size("scale");
  const Widths widths = parse_widths(cfg.get("widths"));
  std::vector<std::pair<ModelSpec, ModelSpec>> pairs;
  for (std::size_t i = 0; i < names.size(); i += 2)
    pairs.emplace_back(spec_from_name(names[i], scale, widths), spec_from_name(names[i + 1], scale, widths));
  const std::string grid = cfg.get("grid");
  require(grid == "feature" || grid == "native", Errc::invalid_argument, "grid must be feature or native");
  return comparison_report(pairs, cfg.get_size("height"), cfg.get_size("width"),
                           grid == "feature" ? FlopGrid::feature : FlopGrid::native,
                           {.count_extra_bias = cfg.get_bool("count_extra_bias")});
}

/// Prints the aligned table; writes the CSV to `report` when set.
inline void cmd_analyze(const Config& cfg, std::ostream& out) {
  const auto rows = analyze(cfg);
  out << report_text(rows);
  if (cfg.has("report")) write_file_atomic(cfg.get("report"), report_csv(rows));
}

// ---------------------------------------------------------------------------
// datasets

struct DatasetEntry {
  std::string image;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t scale = 1;
  std::string hr, lr, coarse;  // file names relative to the dataset directory
};

inline constexpr const char* kManifestHeader = "image,width,height,scale,hr,lr,coarse";

inline std::vector<fs::path> list_pngs(const fs::path& dir) {
  require(fs::is_directory(dir), Errc::io_error, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

/// Quantized luminance plane of a PNG (gray images pass through).
inline PlaneF load_luma(const fs::path& path) {
  PlaneF y = rgb_to_y(load_png(path));
  for (float& v : y.data) v = std::clamp(std::round(v), 0.0f, 255.0f);
  return y;
}

inline PlaneF quantize(const PlaneF& p) {
  PlaneF q = p;
  for (float& v : q.data) v = std::clamp(std::round(v), 0.0f, 255.0f);
  return q;
}

inline std::vector<DatasetEntry> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.csv";
  require(fs::is_regular_file(path), Errc::io_error, "no manifest.csv in " + dir.string());
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  require(line == kManifestHeader, Errc::unsupported_format, path.string() + ": unexpected header");
  std::vector<DatasetEntry> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) f.push_back(item);
    require(f.size() == 7, Errc::unsupported_format, path.string() + ":" + std::to_string(number) + ": expected 7 fields");
    try {
      out.push_back({f[0], std::stoul(f[1]), std::stoul(f[2]), std::stoul(f[3]), f[4], f[5], f[6]});
    } catch (const std::exception&) {
      fail(Errc::unsupported_format, path.string() + ":" + std::to_string(number) + ": bad number");
    }
  }
  return out;
}

struct LoadedImage {
  std::string name;
  PlaneF hr, lr, coarse;
};

inline std::vector<LoadedImage> load_dataset(const fs::path& dir, std::size_t scale) {
  std::vector<LoadedImage> out;
  for (const DatasetEntry& e : read_manifest(dir)) {
    require(e.scale == scale, Errc::invalid_argument,
            dir.string() + " was degraded at x" + std::to_string(e.scale) + ", expected x" + std::to_string(scale));
    out.push_back({e.image, load_luma(dir / e.hr), load_luma(dir / e.lr), load_luma(dir / e.coarse)});
  }
  require(!out.empty(), Errc::invalid_argument, "dataset " + dir.string() + " is empty");
  return out;
}

// ---------------------------------------------------------------------------
// synth / degrade

/// Writes `count` synthetic gray scenes named synth_000.png, ...
inline void cmd_synth(const Config& cfg, std::ostream& out) {
  const fs::path dir = cfg.require_value("out_dir");
  const std::size_t count = cfg.get_size("count"), size = cfg.get_size("size");
  require(count >= 1 && size >= 4, Errc::invalid_argument, "synth needs count >= 1 and size >= 4");
  fs::create_directories(dir);
  Rng rng(static_cast<std::uint64_t>(cfg.get_int("seed")));
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%03zu.png", i);
    save_png(to_image(synthetic_scene(rng, size, size)), dir / name);
  }
  out << "wrote " << count << " images to " << dir.string() << '\n';
}

/// Per HR image: Y-channel HR cropped to a multiple of the scale, bicubic LR
/// and bicubic coarse HR, each quantized to 8 bits, plus manifest.csv.
inline void cmd_degrade(const Config& cfg, std::ostream& out) {
  const fs::path in_dir = cfg.require_value("hr_dir"), out_dir = cfg.require_value("out_dir");
  const std::size_t s = cfg.get_size("scale");
  require(s >= 1, Errc::invalid_argument, "scale must be >= 1");
  const auto files = list_pngs(in_dir);
  require(!files.empty(), Errc::invalid_argument, "no PNG files in " + in_dir.string());
  fs::create_directories(out_dir);
  std::string manifest = std::string(kManifestHeader) + "\n";
  const std::string tag = "_x" + std::to_string(s) + ".png";
  for (const fs::path& f : files) {
    const std::string stem = f.stem().string();
    const PlaneF hr = crop_to_multiple(load_luma(f), s);
    const PlaneF lr = s == 1 ? hr : quantize(bicubic_resize(hr, hr.w / s, hr.h / s));
    const PlaneF coarse = s == 1 ? hr : quantize(bicubic_resize(lr, hr.w, hr.h));
    const std::string hr_name = stem + "_hr" + tag, lr_name = stem + "_lr" + tag, coarse_name = stem + "_coarse" + tag;
    save_png(to_image(hr), out_dir / hr_name);
    save_png(to_image(lr), out_dir / lr_name);
    save_png(to_image(coarse), out_dir / coarse_name);
    manifest += stem + "," + std::to_string(hr.w) + "," + std::to_string(hr.h) + "," + std::to_string(s) + "," +
                hr_name + "," + lr_name + "," + coarse_name + "\n";
  }
  write_file_atomic(out_dir / "manifest.csv", manifest);
  out << "degraded " << files.size() << " images at x" << s << " into " << out_dir.string() << '\n';
}

// ---------------------------------------------------------------------------
// train

inline PlaneF network_input(const ModelSpec& spec, const LoadedImage& img) {
  return spec.post_upsampling() ? img.lr : img.coarse;
}

inline std::string metrics_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,loss,val_psnr\n";
  for (const EpochLog& e : log)
    s += std::to_string(e.epoch) + "," + format_fixed(e.loss, 8) + "," + format_fixed(e.val_psnr, 2) + "\n";
  return s;
}

/// Training settings: reference preset for the model family, then config
/// overrides.
inline TrainConfig train_config(const Config& cfg, const ModelSpec& spec) {
  const TrainPreset preset = reference_preset(spec);
  TrainConfig tc;
  tc.epochs = cfg.has("epochs") ? cfg.get_size("epochs") : preset.epochs;
  tc.batch_size = cfg.has("batch_size") ? cfg.get_size("batch_size") : preset.batch_size;
  tc.optimizer = preset.optimizer;
  if (cfg.has("optimizer")) tc.optimizer.kind = parse_optimizer(cfg.get("optimizer"));
  if (cfg.has("lr_schedule")) tc.optimizer.schedule = parse_schedule(cfg.get("lr_schedule"));
  if (cfg.has("clip")) tc.optimizer.clip_norm = cfg.get_double("clip");
  tc.loss = parse_loss(cfg.get("loss"));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  tc.shave = spec.scale;
  return tc;
}

inline std::vector<Example> training_patches(const ModelSpec& spec, const std::vector<LoadedImage>& images,
                                             std::size_t patch, std::size_t stride, std::size_t max_patches) {
  std::vector<Example> out;
  for (const LoadedImage& img : images) {
    const auto pairs = spec.post_upsampling() ? extract_patches(img.lr, img.hr, patch, stride, spec.scale)
                                              : extract_patches(img.coarse, img.hr, patch, stride, 1);
    for (const auto& p : pairs) out.push_back({p.input, p.target});
  }
  if (max_patches > 0 && out.size() > max_patches) out.resize(max_patches);
  return out;
}

/// Writes best.lskc (on every validation improvement), final.lskc and
/// metrics.csv into out_dir. A numeric failure keeps best.lskc and the
/// metrics logged so far.
inline void cmd_train(const Config& cfg, std::ostream& out, std::ostream& err) {
  const ModelSpec spec = model_from_config(cfg);
  for (std::size_t i : inflating_separable_layers(spec))
    err << "warning: separable layer " << i << " has a single input or output channel and adds parameters\n";
  const fs::path data_dir = cfg.require_value("data_dir"), out_dir = cfg.require_value("out_dir");
  require(fs::is_directory(data_dir), Errc::io_error, "dataset directory not found: " + data_dir.string());
  const auto images = load_dataset(data_dir, spec.scale);
  const auto val_images = cfg.has("val_dir") ? load_dataset(cfg.get("val_dir"), spec.scale) : images;

  const auto train_set =
      training_patches(spec, images, cfg.get_size("patch"), cfg.get_size("stride"), cfg.get_size("max_patches"));
  std::vector<Example> val_set;
  for (const LoadedImage& img : val_images) val_set.push_back({network_input(spec, img), img.hr});

  const TrainConfig tc = train_config(cfg, spec);
  Rng init(tc.seed);
  Network<float> net = build_model<float>(spec, init);
  fs::create_directories(out_dir);
  out << spec.name << ": " << net.parameter_count() << " parameters, " << train_set.size() << " patches, "
      << tc.epochs << " epochs\n";

  std::vector<EpochLog> log;
  auto on_epoch = [&](const EpochLog& e, const Network<float>& current, bool improved) {
    log.push_back(e);
    if (improved) save_checkpoint(to_checkpoint(current), out_dir / "best.lskc");
    out << "epoch " << e.epoch << " loss " << format_fixed(e.loss, 8) << " val_psnr " << format_fixed(e.val_psnr, 2)
        << '\n';
  };
  try {
    const TrainResult<float> r = train(std::move(net), train_set, val_set, tc, on_epoch);
    if (tc.epochs == 0) save_checkpoint(to_checkpoint(r.best_net), out_dir / "best.lskc");
    save_checkpoint(to_checkpoint(r.final_net), out_dir / "final.lskc");
  } catch (const Error& e) {
    write_file_atomic(out_dir / "metrics.csv", metrics_csv(log));
    throw;
  }
  write_file_atomic(out_dir / "metrics.csv", metrics_csv(log));
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
  std::string image;
  double psnr = 0, ssim = 0, bicubic_psnr = 0, bicubic_ssim = 0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  EvalRow mean;
};

/// Super-resolves each image (output rounded to 8 bits) and scores it and
/// the bicubic coarse HR against HR with a `scale`-pixel shave.
inline EvalSummary evaluate_dataset(const Network<float>& net, const std::vector<LoadedImage>& images) {
  const ModelSpec& spec = net.spec();
  EvalSummary s;
  s.mean.image = "mean";
  for (const LoadedImage& img : images) {
    const PlaneF sr = quantize(tensor_to_plane(predict(net, plane_to_tensor<float>(network_input(spec, img)))));
    EvalRow r{img.name, psnr(sr, img.hr, spec.scale), ssim(sr, img.hr, spec.scale),
              psnr(img.coarse, img.hr, spec.scale), ssim(img.coarse, img.hr, spec.scale)};
    s.mean.psnr += r.psnr;
    s.mean.ssim += r.ssim;
    s.mean.bicubic_psnr += r.bicubic_psnr;
    s.mean.bicubic_ssim += r.bicubic_ssim;
    s.rows.push_back(r);
  }
  const double n = static_cast<double>(images.size());
  s.mean.psnr /= n;
  s.mean.ssim /= n;
  s.mean.bicubic_psnr /= n;
  s.mean.bicubic_ssim /= n;
  return s;
}

inline std::string eval_csv(const EvalSummary& s) {
  std::string out = "image,psnr,ssim,bicubic_psnr,bicubic_ssim\n";
  auto row = [&](const EvalRow& r) {
    out += r.image + "," + format_fixed(r.psnr, 2) + "," + format_fixed(r.ssim, 4) + "," +
           format_fixed(r.bicubic_psnr, 2) + "," + format_fixed(r.bicubic_ssim, 4) + "\n";
  };
  for (const EvalRow& r : s.rows) row(r);
  row(s.mean);
  return out;
}

inline EvalSummary cmd_eval(const Config& cfg, std::ostream& out) {
  const Network<float> net = from_checkpoint(load_checkpoint(cfg.require_value("checkpoint")));
  const std::size_t scale = cfg.get_size("scale");
  require(net.spec().scale == scale, Errc::invalid_argument,
          "checkpoint model " + net.spec().name + " is for x" + std::to_string(net.spec().scale) +
              ", eval requested x" + std::to_string(scale));
  const EvalSummary s = evaluate_dataset(net, load_dataset(cfg.require_value("data_dir"), scale));
  const std::string csv = eval_csv(s);
  out << csv;
  if (cfg.has("report")) write_file_atomic(cfg.get("report"), csv);
  return s;
}

// ---------------------------------------------------------------------------
// convert

inline void cmd_convert(const Config& cfg, std::ostream& out, std::ostream& err) {
  const Network<float> net = from_checkpoint(load_checkpoint(cfg.require_value("checkpoint")));
  const fs::path output = cfg.require_value("output");
  const std::string mode = cfg.get("mode");
  Network<float> result;
  if (mode == "merge") {
    const bool any = std::any_of(net.spec().layers.begin(), net.spec().layers.end(),
                                 [](const LayerSpec& l) { return l.kind == LayerKind::separable; });
    if (!any) err << "warning: " << net.spec().name << " has no separable layers; nothing to merge\n";
    result = merge_network(net);
  } else if (mode == "decompose") {
    const auto d = decompose_network(net, cfg.get_size("c_e"));
    if (d.layers.empty()) err << "warning: no square layers with c_in > 1 and c_out > 1 to decompose\n";
    for (std::size_t i = 0; i < d.layers.size(); ++i) {
      char line[96];
      std::snprintf(line, sizeof line, "layer %zu c_e %zu residual %.6e\n", d.layers[i],
                    d.network.spec().layers[d.layers[i]].c_e, d.residuals[i]);
      out << line;
    }
    result = d.network;
  } else {
    fail(Errc::invalid_argument, "mode must be merge or decompose, got '" + mode + "'");
  }
  save_checkpoint(to_checkpoint(result), output);
  out << "wrote " << output.string() << " (" << result.parameter_count() << " parameters)\n";
}

// ---------------------------------------------------------------------------
// dump-features

/// Per-map min-max normalization to [0, 255]; a constant map becomes 128.
inline PlaneF normalize_map(const PlaneF& p) {
  const auto [lo, hi] = std::minmax_element(p.data.begin(), p.data.end());
  PlaneF out(p.w, p.h, 128.0f);
  if (*hi - *lo <= 0.0f) return out;
  for (std::size_t i = 0; i < p.data.size(); ++i) out.data[i] = 255.0f * (p.data[i] - *lo) / (*hi - *lo);
  return out;
}

/// Tiles maps row-major in a ceil(sqrt(n))-column grid with 1-pixel black gaps.
inline PlaneF montage(const std::vector<PlaneF>& maps) {
  require(!maps.empty(), Errc::invalid_argument, "montage of zero maps");
  const std::size_t n = maps.size();
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols, w = maps[0].w, h = maps[0].h;
  PlaneF out(cols * w + (cols - 1), rows * h + (rows - 1), 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ox = (i % cols) * (w + 1), oy = (i / cols) * (h + 1);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ox + x, oy + y) = maps[i].at(x, y);
  }
  return out;
}

/// Writes feature_000.png ... and montage.png for one layer's
/// post-activation maps. Returns the number of maps.
inline std::size_t cmd_dump_features(const Config& cfg, std::ostream& out) {
  const Network<float> net = from_checkpoint(load_checkpoint(cfg.require_value("checkpoint")));
  const fs::path out_dir = cfg.require_value("out_dir");
  const std::size_t layers = net.spec().layers.size();
  const std::int64_t requested = cfg.get_int("layer");
  const std::int64_t index = requested < 0 ? static_cast<std::int64_t>(layers) - 2 : requested;
  require(index >= 0 && index < static_cast<std::int64_t>(layers), Errc::invalid_argument,
          "layer index " + std::to_string(requested) + " out of range for " + std::to_string(layers) + " layers");
  const PlaneF input = load_luma(cfg.require_value("image"));
  const auto feats = layer_features(net, plane_to_tensor<float>(input));
  const Tensor4& f = feats[static_cast<std::size_t>(index)];
  fs::create_directories(out_dir);
  std::vector<PlaneF> maps;
  for (std::size_t c = 0; c < f.shape().c; ++c) {
    maps.push_back(normalize_map(tensor_to_plane(f, 0, c, 1.0)));
    char name[32];
    std::snprintf(name, sizeof name, "feature_%03zu.png", c);
    save_png(to_image(maps.back()), out_dir / name);
  }
  save_png(to_image(montage(maps)), out_dir / "montage.png");
  out << "layer " << index << ": " << maps.size() << " maps written to " << out_dir.string() << '\n';
  return maps.size();
}

}  // namespace lsk
