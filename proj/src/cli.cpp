#include "adsr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "adsr/energy.hpp"
#include "adsr/error.hpp"
#include "adsr/image.hpp"
#include "adsr/metrics.hpp"
#include "adsr/resample.hpp"
#include "adsr/theorem_lab.hpp"
#include "adsr/training.hpp"

namespace adsr {
namespace {

namespace fs = std::filesystem;

Model load_model(const std::string& path) { return Model::from_checkpoint(load_checkpoint(path)); }

// Y channel (unit range) of a gray or RGB image.
ImagePlane luminance(const ImagePlane& img) {
  const ImagePlane u = to_unit(img);
  return u.channels == 3 ? rgb_to_y(u) : u;
}

int cmd_train(const std::string& config_path, std::ostream& out) {
  const TrainConfig cfg = load_train_config(config_path);
  out << fmt::format("training {} model: depth {}, width {}, x{}, {} epochs\n",
                     cfg.model.variant == Variant::adder ? "adder" : "conv", cfg.model.depth,
                     cfg.model.width, cfg.scale, cfg.epochs);
  const TrainingRun run = run_training(cfg, [&out](const EpochRecord& r) {
    out << fmt::format("epoch {:>3}  loss {:.6e}  val {:.3f} dB\n", r.epoch, r.train_loss, r.val_psnr);
    out.flush();
  });
  out << fmt::format("bicubic baseline {:.3f} dB\n", run.result.bicubic_val_psnr);
  if (!cfg.out_dir.empty()) out << "wrote " << (fs::path(cfg.out_dir) / "model.adsr").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& dir, int scale, std::ostream& out) {
  Model model = load_model(ckpt);
  const auto images = load_luminance_dir(dir);
  if (images.empty()) throw FormatError("no .pgm/.ppm images in " + dir, 0);
  const auto s = static_cast<std::size_t>(scale);
  double sum_model = 0.0, sum_bicubic = 0.0, sum_ssim = 0.0;
  out << fmt::format("{:<6} {:>16} {:>16}\n", "image", "bicubic", "model");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImagePlane hr = mod_crop(images[i], s);
    const ImagePlane lr = degrade(hr, s);
    const ImagePlane sr = tensor_to_plane(model.forward(plane_to_tensor(lr)), SampleRange::unit);
    const QualityScore qb = quality(lr, hr, 1.0, s);
    const QualityScore qm = quality(sr, hr, 1.0, s);
    sum_bicubic += qb.psnr_db;
    sum_model += qm.psnr_db;
    sum_ssim += qm.ssim;
    out << fmt::format("{:<6} {:>16} {:>16}\n", i, qb.str(), qm.str());
  }
  const double n = static_cast<double>(images.size());
  out << fmt::format("mean   bicubic {:.2f} dB, model {:.2f} dB / SSIM {:.4f}\n", sum_bicubic / n,
                     sum_model / n, sum_ssim / n);
  return kExitOk;
}

int cmd_upscale(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
                int scale, std::ostream& out) {
  Model model = load_model(ckpt);
  const ImagePlane src = to_unit(read_pnm(in_path));
  const Ratio up{static_cast<std::size_t>(scale), 1};
  ImagePlane result;
  if (src.channels == 1) {
    const ImagePlane y = bicubic_resize(src, up);
    result = tensor_to_plane(model.forward(plane_to_tensor(y)), SampleRange::unit);
  } else {
    const ImagePlane ycc = rgb_to_ycbcr(src);
    const ImagePlane y = bicubic_resize(ycc.channel(0), up);
    ImagePlane merged(y.width, y.height, 3, ColorSpace::ycbcr, SampleRange::unit);
    set_channel(merged, 0, tensor_to_plane(model.forward(plane_to_tensor(y)), SampleRange::unit));
    for (std::size_t c = 1; c < 3; ++c) set_channel(merged, c, bicubic_resize(ycc.channel(c), up));
    result = ycbcr_to_rgb(merged);
  }
  write_pnm(out_path, to_byte(result));
  out << fmt::format("{}x{} -> {}x{} written to {}\n", src.width, src.height, result.width,
                     result.height, out_path);
  return kExitOk;
}

struct EnergyArgs {
  std::string spec;
  std::size_t height = 720;
  std::size_t width = 1280;
  std::string convention = "mul-plus-add";
  bool csv = false;
  bool exclude_overhead = false;
  double mul_g = -1.0;
  double add_g = -1.0;
  bool cnn = false;
};

int cmd_energy(const EnergyArgs& a, std::ostream& out, std::ostream& err) {
  const CnnConvention conv = parse_cnn_convention(a.convention);
  EnergyReport report;
  if (!a.spec.empty()) {
    const NetworkSpec spec = load_network_spec(a.spec);
    report = energy(count_ops(spec, a.height, a.width), {conv, !a.exclude_overhead});
  } else if (a.mul_g >= 0.0 && a.add_g >= 0.0) {
    const OpTotals t{static_cast<std::uint64_t>(std::llround(a.mul_g * 1e9)),
                     static_cast<std::uint64_t>(std::llround(a.add_g * 1e9))};
    report = energy(t, a.cnn, conv);
  } else {
    err << "energy: give --spec, or both --mul and --add\n";
    return kExitUsage;
  }
  out << (a.csv ? report.csv() : report.table());
  return kExitOk;
}

struct TheoremArgs {
  int d = 3;
  int c = 2;
  std::size_t trials = 100;
  std::uint64_t seed = 7;
  std::size_t steps = 2000;
  std::size_t restarts = 10;
  std::string json_out;
};

int cmd_verify(const TheoremArgs& a, std::ostream& out) {
  IdentityOptions opt;
  opt.opt_steps = a.steps;
  opt.restarts = a.restarts;
  const TheoremReport id = verify_identity_impossibility(a.d, a.c, a.trials, a.seed, opt);
  const TheoremReport hp = verify_highpass_impossibility(a.d, a.c, a.trials, a.seed);
  out << id.summary() << hp.summary();
  if (!a.json_out.empty()) {
    nlohmann::json j;
    j["reports"] = {id.to_json(), hp.to_json()};
    j["verdict"] = id.pass && hp.pass ? "pass" : "fail";
    std::ofstream f(a.json_out);
    if (!f) throw FormatError("cannot write " + a.json_out, 0);
    f << j.dump(2) << "\n";
  }
  return id.pass && hp.pass ? kExitOk : kExitNumerical;
}

void write_feature(const Tensor& t, std::size_t layer, const fs::path& dir, std::ostream& out) {
  const auto& s = t.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    double lo = t.at(0, c, 0, 0), hi = lo;
    for (std::size_t i = 0; i < s.h; ++i) {
      for (std::size_t j = 0; j < s.w; ++j) {
        lo = std::min(lo, t.at(0, c, i, j));
        hi = std::max(hi, t.at(0, c, i, j));
      }
    }
    ImagePlane img(s.w, s.h, 1, ColorSpace::gray, SampleRange::unit);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < s.h; ++i) {
      for (std::size_t j = 0; j < s.w; ++j) img.at(j, i) = (t.at(0, c, i, j) - lo) / span;
    }
    const fs::path p = dir / fmt::format("layer{:02}_ch{:02}.pgm", layer, c);
    write_pnm(p.string(), img);
    out << fmt::format("{}  range [{:.4g}, {:.4g}]\n", p.string(), lo, hi);
  }
}

int cmd_dump(const std::string& ckpt, const std::string& in_path, int layer, int scale,
             const std::string& out_dir, std::ostream& out, std::ostream& err) {
  Model model = load_model(ckpt);
  ImagePlane y = luminance(read_pnm(in_path));
  if (scale > 1) y = bicubic_resize(y, Ratio{static_cast<std::size_t>(scale), 1});
  const auto n_layers = static_cast<int>(model.layers().size());
  if (layer >= n_layers) {
    err << fmt::format("dump-features: layer {} out of range (model has {})\n", layer, n_layers);
    return kExitUsage;
  }
  fs::create_directories(out_dir);
  model.forward(plane_to_tensor(y), false, [&](std::size_t i, const Tensor& t) {
    if (layer < 0 || static_cast<int>(i) == layer) write_feature(t, i, out_dir, out);
  });
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adder-network super-resolution toolkit", "adsr"};
  app.require_subcommand(1);

  std::string config;
  auto* train = app.add_subcommand("train", "train a model from an INI config");
  train->add_option("--config", config, "config file")->required();

  std::string ckpt, dir, in_path, out_path, out_dir = "features";
  int scale = 2, layer = -1, dump_scale = 1;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a directory of images");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--dir", dir)->required();
  eval->add_option("--scale", scale)->check(CLI::Range(2, 4));

  auto* upscale = app.add_subcommand("upscale", "super-resolve one PGM/PPM image");
  upscale->add_option("--ckpt", ckpt)->required();
  upscale->add_option("--in", in_path)->required();
  upscale->add_option("--out", out_path)->required();
  upscale->add_option("--scale", scale)->check(CLI::Range(2, 4));

  EnergyArgs ea;
  auto* en = app.add_subcommand("energy", "operation counts and energy of a network spec");
  en->add_option("--spec", ea.spec, "network spec file");
  en->add_option("--height", ea.height);
  en->add_option("--width", ea.width);
  en->add_option("--cnn-convention", ea.convention, "mul-plus-add | mul-only")
      ->check(CLI::IsMember({"mul-plus-add", "mul-only"}));
  en->add_flag("--csv", ea.csv);
  en->add_flag("--exclude-overhead", ea.exclude_overhead, "omit shortcut/activation overhead");
  en->add_option("--mul", ea.mul_g, "total multiplications (G), instead of --spec");
  en->add_option("--add", ea.add_g, "total additions (G), instead of --spec");
  en->add_flag("--cnn", ea.cnn, "price the --mul/--add totals as a conv network");

  TheoremArgs ta;
  auto* vt = app.add_subcommand("verify-theorems", "identity and high-pass impossibility checks");
  vt->add_option("--d", ta.d)->check(CLI::PositiveNumber);
  vt->add_option("--c", ta.c)->check(CLI::PositiveNumber);
  vt->add_option("--trials", ta.trials);
  vt->add_option("--seed", ta.seed);
  vt->add_option("--steps", ta.steps, "optimization steps per restart");
  vt->add_option("--restarts", ta.restarts);
  vt->add_option("--out", ta.json_out, "JSON verdict file");

  auto* dump = app.add_subcommand("dump-features", "write per-layer feature maps as PGM");
  dump->add_option("--ckpt", ckpt)->required();
  dump->add_option("--in", in_path)->required();
  dump->add_option("--layer", layer, "layer index (default: all)");
  dump->add_option("--scale", dump_scale, "bicubic pre-upsampling factor");
  dump->add_option("--out-dir", out_dir);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(ckpt, dir, scale, out);
    if (*upscale) return cmd_upscale(ckpt, in_path, out_path, scale, out);
    if (*en) return cmd_energy(ea, out, err);
    if (*vt) return cmd_verify(ta, out);
    if (*dump) return cmd_dump(ckpt, in_path, layer, dump_scale, out_dir, out, err);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace adsr
