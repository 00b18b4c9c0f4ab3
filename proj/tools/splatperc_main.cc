// Copyright 2026 The splatperc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// splatperc command-line entry point.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "splatperc/analysis.h"
#include "splatperc/elo.h"
#include "splatperc/error.h"
#include "splatperc/image.h"
#include "splatperc/losses.h"
#include "splatperc/parallel.h"
#include "splatperc/ratecodec.h"
#include "splatperc/selftest.h"
#include "splatperc/splat.h"
#include "splatperc/study_service.h"
#include "splatperc/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatperc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<uint8_t>(text.begin(), text.end()));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": not a JSON object");
  return j;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

Color parse_color(const std::string& s) {
  Color c{};
  std::stringstream in(s);
  std::string part;
  int k = 0;
  while (std::getline(in, part, ',')) {
    if (k >= 3) break;
    c[k++] = std::stod(part);
  }
  if (k != 3) throw Error(ErrorCode::kInvalidArgument, "background must be r,g,b");
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json finite_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

// Applies a flag only when it was given on the command line, so flags
// override the config file, which overrides the built-in defaults.
template <class T, class U>
void override_if(const CLI::Option* opt, T& field, const U& value) {
  if (opt->count() > 0) field = value;
}

struct TrainFlags {
  std::string config;
  std::string loss = "original";
  double gamma = 1.0;
  double beta = LossConfig{}.beta;
  double sigma = LossConfig{}.sigma;
  std::string sigma_map;
  double sigma_map_scale = LossConfig{}.sigma_map_scale;
  int iters = TrainConfig{}.iterations;
  int warmup = TrainConfig{}.warmup_iterations;
  int max_splats = TrainConfig{}.max_splats;
  int init_count = TrainConfig{}.init_count;
  int densify_interval = TrainConfig{}.densify_interval;
  double densify_threshold = TrainConfig{}.densify_grad_threshold;
  std::string background = "0,0,0";
  uint64_t seed = 0;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts = {
        app->add_option("--config", config, "JSON config with \"train\" and \"loss\" objects"),
        app->add_option("--loss", loss, "original | composite | wd | wd_r")
            ->check(CLI::IsMember({"original", "composite", "wd", "wd_r"})),
        app->add_option("--gamma", gamma, "Global loss scale (unitless)"),
        app->add_option("--beta", beta, "Weight of the original loss inside wd_r (unitless)"),
        app->add_option("--sigma", sigma, "WD pooling width (level-0 pixels)"),
        app->add_option("--sigma-map", sigma_map,
                        "Image whose luminance times --sigma-map-scale is a per-pixel width"),
        app->add_option("--sigma-map-scale", sigma_map_scale, "Width at luminance 1 (pixels)"),
        app->add_option("--iters", iters, "Optimizer iterations"),
        app->add_option("--warmup", warmup,
                        "Warm-up iterations with the original loss (negative: 15% of --iters)"),
        app->add_option("--max-splats", max_splats, "Cap on the splat count"),
        app->add_option("--init-count", init_count, "Initial splat count"),
        app->add_option("--densify-interval", densify_interval,
                        "Iterations between densification events"),
        app->add_option("--densify-threshold", densify_threshold,
                        "Mean positional gradient threshold (loss per image diagonal)"),
        app->add_option("--background", background, "Background color r,g,b in [0, 1]"),
        app->add_option("--seed", seed, "Random seed"),
    };
  }

  void apply(TrainConfig& t, LossConfig& l, const ImageBuffer& target) const {
    override_if(opts[1], l.kind, parse_loss_kind(loss));
    override_if(opts[2], l.gamma, gamma);
    override_if(opts[3], l.beta, beta);
    override_if(opts[4], l.sigma, sigma);
    override_if(opts[5], l.sigma_map_path, sigma_map);
    override_if(opts[6], l.sigma_map_scale, sigma_map_scale);
    override_if(opts[7], t.iterations, iters);
    override_if(opts[8], t.warmup_iterations, warmup);
    override_if(opts[9], t.max_splats, max_splats);
    override_if(opts[10], t.init_count, init_count);
    override_if(opts[11], t.densify_interval, densify_interval);
    override_if(opts[12], t.densify_grad_threshold, densify_threshold);
    if (opts[13]->count() > 0) t.background = parse_color(background);
    if (!l.sigma_map_path.empty()) {
      const ImageBuffer m = load_image(l.sigma_map_path);
      if (m.height != target.height || m.width != target.width)
        throw Error(ErrorCode::kShapeMismatch, "sigma map must match the target size");
      Plane p(m.height, m.width);
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
          double v = 0.0;
          for (int c = 0; c < m.channels; ++c) v += m.at(y, x, c);
          p.at(y, x) = l.sigma_map_scale * v / m.channels;
        }
      l.sigma_map = std::move(p);
    }
    validate(t);
    validate(l);
  }
};

json stamp(const std::string& command, const json& config, uint64_t seed) {
  return {{"command", command}, {"seed", seed}, {"config", config}};
}

int run_fit(const std::string& target_path, const std::string& out, const std::string& render_path,
            const TrainFlags& f) {
  const ImageBuffer target = to_rgb(load_image(target_path));
  TrainConfig train;
  LossConfig loss;
  if (!f.config.empty()) {
    const json j = read_json(f.config);
    train = j.value("train", train);
    loss = j.value("loss", loss);
  }
  f.apply(train, loss, target);
  const json meta = stamp("fit", {{"target", target_path}, {"train", train}, {"loss", loss}},
                          f.seed);
  const fs::path out_path(out);
  const auto t0 = std::chrono::steady_clock::now();
  FitResult r;
  try {
    r = fit(target, loss, train, f.seed);
  } catch (const DivergenceError& e) {
    const fs::path dump = with_suffix(out_path, ".diverged.spl2");
    json m = meta;
    m["diverged_at_iteration"] = e.iteration();
    save_splats(e.state(), dump, m);
    std::cerr << "error: " << e.what() << " at iteration " << e.iteration()
              << "; state written to " << dump.string() << "\n";
    return kExitRuntime;
  }
  r.report.wall_time_s = seconds_since(t0);
  save_splats(r.splats, out_path, meta);
  json report = report_to_json(r.report);
  report["run"] = meta;
  write_json(with_suffix(out_path, ".report.json"), report);
  write_text(with_suffix(out_path, ".report.csv"), report_to_csv(r.report));
  write_json(with_suffix(out_path, ".timing.json"), {{"wall_time_s", r.report.wall_time_s}});
  if (!render_path.empty())
    save_image(render(r.splats, target.width, target.height, train.background).image,
               render_path);
  std::cout << "splats " << r.report.final_count << "  psnr " << r.report.final_psnr
            << "  ssim " << r.report.final_ssim << "  wd4 " << r.report.final_wd4 << "\n";
  return 0;
}

int run_rd_sweep(const std::string& target_path, const std::string& out_dir,
                 const std::vector<double>& lambdas, const TrainFlags& f) {
  const ImageBuffer target = to_rgb(load_image(target_path));
  RdConfig cfg;
  if (!f.config.empty()) cfg = read_json(f.config).get<RdConfig>();
  f.apply(cfg.train, cfg.loss, target);
  if (!lambdas.empty()) cfg.sweep = lambdas;
  validate(cfg);
  const json meta = stamp("rd-sweep", {{"target", target_path}, {"rd", cfg}}, f.seed);
  fs::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RdResult> results = rd_sweep(target, cfg, f.seed);
  json rows = json::array();
  std::string csv = "lambda,eval_bits,bits_per_pixel,bytes,psnr,ssim,wd_sigma0,wd_sigma4,count\n";
  for (size_t i = 0; i < results.size(); ++i) {
    const RdResult& r = results[i];
    const fs::path file = fs::path(out_dir) / ("rd_" + std::to_string(i) + ".spq1");
    save_quantized(r.splats, r.model, file);
    json row = rd_report_to_json(r.report);
    row["file"] = file.filename().string();
    row["model"] = r.model;
    rows.push_back(row);
    std::ostringstream line;
    line.precision(10);
    line << r.report.lambda << "," << r.report.eval_bits << "," << r.report.bits_per_pixel << ","
         << r.report.bytes << "," << r.report.psnr << "," << r.report.ssim << ","
         << r.report.wd0 << "," << r.report.wd4 << "," << r.splats.size() << "\n";
    csv += line.str();
    std::cout << "lambda " << r.report.lambda << "  bits " << r.report.eval_bits << "  bytes "
              << r.report.bytes << "  psnr " << r.report.psnr << "  wd4 " << r.report.wd4
              << "\n";
  }
  write_json(fs::path(out_dir) / "rd_report.json", {{"run", meta}, {"sweep", rows}});
  write_text(fs::path(out_dir) / "rd_report.csv", csv);
  write_json(fs::path(out_dir) / "rd_report.timing.json", {{"wall_time_s", seconds_since(t0)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();
  CLI::App app{"Perceptual 2D Gaussian splat fitting, rate coding and preference studies."};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "splatperc 0.1.0");

  // fit
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit splats to a target image");
  std::string fit_target, fit_out = "fit.spl2", fit_render;
  TrainFlags fit_flags;
  fit_cmd->add_option("--target", fit_target, "Target image (PNG, PPM, PGM)")->required();
  fit_cmd->add_option("--out", fit_out,
                      "Checkpoint path; report, CSV and timing files are written beside it");
  fit_cmd->add_option("--render", fit_render, "Also write the final render to this image");
  fit_flags.add(fit_cmd);

  // render
  CLI::App* render_cmd = app.add_subcommand("render", "Render a splat checkpoint");
  std::string render_in, render_out = "render.png", render_bg = "0,0,0";
  int render_w = 64, render_h = 64;
  render_cmd->add_option("--splats", render_in, "SPL2 checkpoint")->required();
  render_cmd->add_option("--out", render_out, "Output image");
  render_cmd->add_option("--width", render_w, "Width (pixels)");
  render_cmd->add_option("--height", render_h, "Height (pixels)");
  render_cmd->add_option("--background", render_bg, "Background color r,g,b in [0, 1]");

  // eval
  CLI::App* eval_cmd = app.add_subcommand("eval", "Metrics of checkpoints or images against a target");
  std::string eval_target, eval_out;
  std::vector<std::string> eval_splats, eval_images;
  std::string eval_bg = "0,0,0";
  eval_cmd->add_option("--target", eval_target, "Reference image")->required();
  eval_cmd->add_option("--splats", eval_splats, "SPL2 checkpoints, one report row each");
  eval_cmd->add_option("--image", eval_images, "Rendered images, one report row each");
  eval_cmd->add_option("--background", eval_bg, "Background color r,g,b in [0, 1]");
  eval_cmd->add_option("--out", eval_out, "Report prefix; writes <prefix>.csv and <prefix>.json");

  // erank
  CLI::App* erank_cmd = app.add_subcommand("erank", "Effective-rank histogram of a checkpoint");
  std::string erank_in, erank_out;
  int erank_bins = 50;
  erank_cmd->add_option("--splats", erank_in, "SPL2 checkpoint")->required();
  erank_cmd->add_option("--bins", erank_bins, "Histogram bins over [1, 2]");
  erank_cmd->add_option("--out", erank_out,
                        "Output prefix (default: checkpoint path without extension)");

  // rd-sweep
  CLI::App* rd_cmd = app.add_subcommand("rd-sweep", "Rate-distortion fits over a lambda sweep");
  std::string rd_target, rd_out = "rd";
  std::vector<double> rd_lambdas;
  TrainFlags rd_flags;
  rd_cmd->add_option("--target", rd_target, "Target image")->required();
  rd_cmd->add_option("--out-dir", rd_out, "Output directory");
  rd_cmd->add_option("--lambda", rd_lambdas,
                     "Rate weights (per bit per pixel); default 1/9 1/27 1/81 1/243");
  rd_flags.add(rd_cmd);
  rd_flags.opts[0]->description("JSON rate-distortion config (lambda, sweep, train, loss, model)");

  // encode
  CLI::App* enc_cmd = app.add_subcommand("encode", "Quantize and range-code a checkpoint (SPQ1)");
  std::string enc_in, enc_out = "splats.spq1", enc_model;
  enc_cmd->add_option("--splats", enc_in, "SPL2 checkpoint")->required();
  enc_cmd->add_option("--out", enc_out, "SPQ1 output");
  enc_cmd->add_option("--model", enc_model,
                      "Rate model JSON (default: prior fitted to the checkpoint)");

  // decode
  CLI::App* dec_cmd = app.add_subcommand("decode", "Decode an SPQ1 file to a checkpoint");
  std::string dec_in, dec_out = "decoded.spl2", dec_render;
  int dec_w = 64, dec_h = 64;
  dec_cmd->add_option("--in", dec_in, "SPQ1 input")->required();
  dec_cmd->add_option("--out", dec_out, "SPL2 output");
  dec_cmd->add_option("--render", dec_render, "Also render to this image");
  dec_cmd->add_option("--width", dec_w, "Render width (pixels)");
  dec_cmd->add_option("--height", dec_h, "Render height (pixels)");

  // study-serve
  CLI::App* serve_cmd = app.add_subcommand("study-serve", "Run the A/B preference study service");
  std::string serve_config, serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve_cmd->add_option("--config", serve_config, "Study config JSON")->required();
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--port", serve_port, "TCP port (0 picks a free one)");

  // elo-report
  CLI::App* elo_cmd = app.add_subcommand("elo-report", "Bradley-Terry ratings from a vote log");
  std::string elo_votes, elo_out;
  double elo_prior = 2.0;
  std::vector<std::string> elo_methods;
  elo_cmd->add_option("--votes", elo_votes, "Vote log (JSON lines)")->required();
  elo_cmd->add_option("--prior-scale", elo_prior, "Prior standard deviation (natural-log skill)");
  elo_cmd->add_option("--methods", elo_methods,
                      "Method order; the first is the anchor at Elo 1000")
      ->delimiter(',');
  elo_cmd->add_option("--out", elo_out, "Write the table here instead of standard output");

  // selftest
  CLI::App* self_cmd = app.add_subcommand("selftest", "Finite-difference and oracle checks");
  int self_seeds = 3;
  self_cmd->add_option("--seeds", self_seeds, "Random seeds per gradient check")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*fit_cmd) return run_fit(fit_target, fit_out, fit_render, fit_flags);

    if (*render_cmd) {
      const SplatSet s = load_splats(render_in);
      save_image(render(s, render_w, render_h, parse_color(render_bg)).image, render_out);
      return 0;
    }

    if (*eval_cmd) {
      if (eval_splats.empty() && eval_images.empty())
        throw Error(ErrorCode::kInvalidArgument, "give --splats or --image");
      const ImageBuffer target = to_rgb(load_image(eval_target));
      std::vector<CompareRow> rows;
      if (!eval_splats.empty()) {
        std::vector<std::pair<std::string, SplatSet>> fits;
        for (const std::string& p : eval_splats) fits.emplace_back(p, load_splats(p));
        rows = compare_report(target, fits, parse_color(eval_bg));
      }
      for (const std::string& p : eval_images) {
        const ImageBuffer img = to_rgb(load_image(p));
        require_same_shape(target, img, "image");
        CompareRow r;
        r.name = p;
        r.psnr = psnr(target, img);
        r.ssim = ssim_index(target, img);
        r.wd0 = wd_metric(target, img, 0.0);
        r.wd4 = wd_metric(target, img, 4.0);
        r.median_erank = std::nan("");
        rows.push_back(r);
      }
      const std::string csv = compare_to_csv(rows);
      std::cout << csv;
      if (!eval_out.empty()) {
        write_text(eval_out + ".csv", csv);
        json j = {{"run", stamp("eval", {{"target", eval_target}}, 0)},
                  {"rows", compare_to_json(rows)}};
        write_json(eval_out + ".json", j);
      }
      return 0;
    }

    if (*erank_cmd) {
      const ErankResult r = erank_histogram(load_splats(erank_in), erank_bins);
      const fs::path prefix =
          erank_out.empty() ? fs::path(erank_in).replace_extension() : fs::path(erank_out);
      json j = erank_to_json(r);
      j["run"] = stamp("erank", {{"splats", erank_in}, {"bins", erank_bins}}, 0);
      write_json(prefix.string() + ".erank.json", j);
      write_text(prefix.string() + ".erank.dat", histogram_gnuplot(r));
      std::cout << "median erank " << r.median << "  mean " << r.mean << "  splats "
                << r.values.size() << "\n";
      return 0;
    }

    if (*rd_cmd) return run_rd_sweep(rd_target, rd_out, rd_lambdas, rd_flags);

    if (*enc_cmd) {
      const SplatSet s = load_splats(enc_in);
      RateModel model;
      if (enc_model.empty()) {
        model.fit_prior(s);
      } else {
        model = read_json(enc_model).get<RateModel>();
      }
      validate(model);
      save_quantized(s, model, enc_out);
      const double bits = rate_bits(s, model, RateMode::kEval).bits;
      std::cout << "splats " << s.size() << "  model bits " << bits << "  bytes "
                << fs::file_size(enc_out) << "\n";
      return 0;
    }

    if (*dec_cmd) {
      const DecodedSplats d = load_quantized(dec_in);
      save_splats(d.splats, dec_out, {{"command", "decode"}, {"source", dec_in}, {"model", d.model}});
      if (!dec_render.empty()) save_image(render(d.splats, dec_w, dec_h).image, dec_render);
      std::cout << "splats " << d.splats.size() << "\n";
      return 0;
    }

    if (*serve_cmd) {
      StudyConfig cfg = read_json(serve_config).get<StudyConfig>();
      StudyService service(cfg);
      StudyServer server(service);
      const int port = server.bind(serve_host, serve_port);
      if (port < 0) throw Error(ErrorCode::kUnwritable, "cannot bind " + serve_host);
      std::cout << "listening on http://" << serve_host << ":" << port << std::endl;
      return server.listen() ? 0 : kExitRuntime;
    }

    if (*elo_cmd) {
      const RatingTable t = elo_fit(load_votes(elo_votes), elo_prior, elo_methods);
      if (!t.connected)
        std::cerr << "warning: comparison graph is disconnected; some ratings rest on the "
                     "prior alone\n";
      const std::string text = rating_table_to_json(t).dump(2) + "\n";
      if (elo_out.empty()) {
        std::cout << text;
      } else {
        write_text(elo_out, text);
      }
      return 0;
    }

    if (*self_cmd) {
      std::vector<CheckRow> rows = gradient_suite(self_seeds);
      const std::vector<CheckRow> o = oracle_suite();
      rows.insert(rows.end(), o.begin(), o.end());
      std::cout << format_checks(rows);
      const bool ok = all_pass(rows);
      std::cout << (ok ? "selftest: all checks passed\n" : "selftest: FAILED\n");
      return ok ? 0 : kExitRuntime;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitRuntime;
  } catch (const json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
