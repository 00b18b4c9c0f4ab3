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


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "splatperc/elo.h"
#include "splatperc/image.h"
#include "splatperc/ratecodec.h"
#include "splatperc/splat.h"
#include "splatperc/test_images.h"

using namespace splatperc;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name)
      : dir(fs::temp_directory_path() / ("splatperc_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  fs::path operator/(const std::string& f) const { return dir / f; }
};

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const Sandbox& box, const std::string& args, const std::string& env = "") {
  const fs::path out = box / ".stdout", err = box / ".stderr";
  const std::string cmd = "cd '" + box.dir.string() + "' && " + env + " '" SPLATPERC_CLI "' " +
                          args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const std::string kTarget = SPLATPERC_DATA_DIR "/standard_texture.png";

}  // namespace

TEST_CASE("bundled texture matches the generator") {
  const ImageBuffer bundled = load_image(kTarget);
  const ImageBuffer generated = standard_texture(64);
  REQUIRE(bundled.same_shape(generated));
  bool same = true;
  for (size_t i = 0; i < bundled.size(); ++i)
    same &= quantize_sample(generated.data[i]) == std::lround(bundled.data[i] * 255.0);
  CHECK(same);
}

TEST_CASE("usage errors and help") {
  Sandbox box("usage");
  CHECK(cli(box, "").code == 1);
  CHECK(cli(box, "fit").code == 1);
  CHECK(cli(box, "fit --target x.png --no-such-flag 3").code == 1);
  CHECK(cli(box, "fit --target '" + kTarget + "' --gamma -1").code == 1);
  CHECK(cli(box, "fit --target missing.png").code == 2);
  const Run help = cli(box, "fit --help");
  CHECK(help.code == 0);
  for (const char* flag : {"--target", "--out", "--config", "--loss", "--gamma", "--beta",
                           "--sigma", "--iters", "--warmup", "--max-splats", "--seed"})
    CHECK(help.out.find(flag) != std::string::npos);
  CHECK(help.out.find("[2000]") != std::string::npos);
  CHECK(help.out.find("pixels") != std::string::npos);
  CHECK(cli(box, "rd-sweep --help").out.find("--lambda") != std::string::npos);
}

TEST_CASE("fit writes checkpoint, report and stamps; flags override the config") {
  Sandbox box("fit");
  std::ofstream(box / "cfg.json") << R"({"train": {"iterations": 40, "init_count": 8,
      "max_splats": 32, "densify_interval": 10}, "loss": {"kind": "wd_r", "gamma": 0.5}})";
  const Run r = cli(box, "fit --target '" + kTarget +
                             "' --config cfg.json --gamma 0.025 --seed 4 --out a.spl2 --render "
                             "a.png",
                    "SPLATPERC_THREADS=1");
  REQUIRE(r.code == 0);
  for (const char* f : {"a.spl2", "a.spl2.meta.json", "a.report.json", "a.report.csv",
                        "a.timing.json", "a.png"})
    CHECK(fs::exists(box / f));
  const nlohmann::json rep = read_json(box / "a.report.json");
  CHECK(rep["run"]["seed"] == 4);
  CHECK(rep["run"]["config"]["train"]["iterations"] == 40);
  CHECK(rep["run"]["config"]["loss"]["gamma"] == 0.025);
  CHECK(rep["run"]["config"]["loss"]["kind"] == "wd_r");
  CHECK(rep["iterations"] == 40);
  CHECK(!rep.contains("wall_time_s"));
  CHECK(read_json(box / "a.timing.json").contains("wall_time_s"));
  const SplatSet s = load_splats(box / "a.spl2");
  CHECK(s.size() == rep["final"]["splat_count"].get<size_t>());
}

TEST_CASE("erank, eval, render, encode and decode") {
  Sandbox box("tools");
  REQUIRE(cli(box, "fit --target '" + kTarget +
                       "' --iters 30 --init-count 16 --densify-interval 10 --out f.spl2")
              .code == 0);
  const Run er = cli(box, "erank --splats f.spl2");
  CHECK(er.code == 0);
  CHECK(er.out.find("median erank") != std::string::npos);
  CHECK(fs::exists(box / "f.erank.json"));
  CHECK(fs::exists(box / "f.erank.dat"));

  CHECK(cli(box, "render --splats f.spl2 --width 64 --height 64 --out r.png").code == 0);
  const Run ev = cli(box, "eval --target '" + kTarget + "' --splats f.spl2 --image r.png --out e");
  CHECK(ev.code == 0);
  const nlohmann::json rows = read_json(box / "e.json")["rows"];
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["psnr"].get<double>() ==
        doctest::Approx(rows[1]["psnr"].get<double>()).epsilon(0.02));

  CHECK(cli(box, "encode --splats f.spl2 --out f.spq1").code == 0);
  CHECK(cli(box, "decode --in f.spq1 --out d.spl2 --render d.png").code == 0);
  const SplatSet orig = load_splats(box / "f.spl2");
  const DecodedSplats dec = load_quantized(box / "f.spq1");
  CHECK(load_splats(box / "d.spl2").size() == orig.size());
  CHECK(dec.splats.size() == orig.size());
  std::vector<uint8_t> junk = {'S', 'P', 'Q', '2'};
  write_file_bytes(box / "bad.spq1", junk);
  CHECK(cli(box, "decode --in bad.spq1").code == 2);
}

TEST_CASE("elo-report matches a direct fit") {
  Sandbox box("elo");
  std::vector<VoteRecord> votes;
  for (int k = 0; k < 60; ++k) {
    VoteRecord v;
    v.trial_id = "t" + std::to_string(k);
    v.method_a = k % 3 == 0 ? "x" : "y";
    v.method_b = k % 3 == 0 ? "z" : (k % 2 ? "x" : "z");
    v.winner = k % 5 < 3 ? Winner::kA : Winner::kB;
    votes.push_back(v);
  }
  {
    VoteStore store(box / "votes.jsonl");
    for (const VoteRecord& v : votes) store.append(v);
  }
  const Run r = cli(box, "elo-report --votes votes.jsonl --methods z,x,y --out t.json");
  REQUIRE(r.code == 0);
  std::ifstream in(box / "t.json");
  std::stringstream text;
  text << in.rdbuf();
  CHECK(text.str() == rating_table_to_json(elo_fit(votes, 2.0, {"z", "x", "y"})).dump(2) + "\n");
  const Run stdout_run = cli(box, "elo-report --votes votes.jsonl --methods z,x,y");
  CHECK(stdout_run.out == text.str());
}

TEST_CASE("selftest command") {
  Sandbox box("self");
  const Run r = cli(box, "selftest --seeds 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("all checks passed") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
