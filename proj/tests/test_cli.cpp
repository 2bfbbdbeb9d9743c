// Copyright 2026 The transfer-tts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "test_util.hpp"
#include "tts/checkpoint.hpp"
#include "tts/config.hpp"
#include "tts/data.hpp"
#include "tts/pseudo.hpp"
#include "tts/wav.hpp"

namespace fs = std::filesystem;
using tts::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(TTS_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(capture);
  std::string text{std::istreambuf_iterator<char>(in), {}};
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

// One micro corpus and codebook shared by every CLI case.
struct Workspace {
  TempDir dir{"cli"};
  fs::path config = dir / "micro.json";
  fs::path log = dir / "log.txt";

  Workspace() {
    tts::RunConfigFile cfg;
    cfg.model = tts::testing::micro_model();
    cfg.train.batch_size = 2;
    cfg.train.log_interval = 2;
    cfg.train.learning_rate = 1e-3;
    std::ofstream(config) << cfg.to_json().dump(2);
    REQUIRE(run("make-synthetic --seed 1 --n-utts 6 --sample-rate 8000 --unlabeled --out " + (dir / "un").string()).code == 0);
    REQUIRE(run("make-synthetic --seed 2 --n-utts 3 --sample-rate 8000 --out " + (dir / "lab").string()).code == 0);
    REQUIRE(run("codebook --manifest " + manifest_un() + " --config " + config.string() + " --k 8 --out " + codebook()).code == 0);
  }

  Run run(const std::string& args) const { return cli(args, log); }
  std::string manifest_un() const { return (dir / "un" / "manifest.jsonl").string(); }
  std::string manifest_lab() const { return (dir / "lab" / "manifest.jsonl").string(); }
  std::string codebook() const { return (dir / "cb.txt").string(); }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("cli: usage errors and help") {
  TempDir dir("cli_help");
  const auto cap = dir / "out.txt";
  CHECK(cli("", cap).code == 2);
  CHECK(cli("no-such-command", cap).code == 2);
  CHECK(cli("codebook --manifest x.jsonl", cap).code == 2);
  const Run help = cli("codebook --help", cap);
  CHECK(help.code == 0);
  CHECK(help.out.find("128") != std::string::npos);
  const Run syn_help = cli("synthesize --help", cap);
  CHECK(syn_help.out.find("0.667") != std::string::npos);
  CHECK(cli("synthesize --ckpt x --text hi --noise-scale -1", cap).code == 2);
}

TEST_CASE("cli: codebook and tokenize") {
  auto& w = workspace();
  const auto cb = tts::load_codebook(w.codebook());
  CHECK(cb.k() == 8);
  CHECK(cb.dim() == tts::testing::micro_audio().n_mels);
  CHECK(fs::exists(tts::feature_sidecar_path(w.codebook())));
  CHECK(fs::exists(w.codebook() + ".config.json"));
  CHECK(w.run("codebook --manifest " + w.manifest_un() + " --config " + w.config.string() +
              " --k 100000 --out " + (w.dir / "big.txt").string())
            .code != 0);

  tts::RunConfigFile rc = tts::RunConfigFile::load(w.config);
  rc.codebook.k = 5;
  const auto k5 = w.dir / "k5.json";
  std::ofstream(k5) << rc.to_json().dump();
  REQUIRE(w.run("codebook --manifest " + w.manifest_un() + " --config " + k5.string() + " --out " +
                (w.dir / "cb5.txt").string())
              .code == 0);
  CHECK(tts::load_codebook(w.dir / "cb5.txt").k() == 5);
  REQUIRE(w.run("codebook --manifest " + w.manifest_un() + " --config " + k5.string() + " --k 7 --out " +
                (w.dir / "cb7.txt").string())
              .code == 0);
  CHECK(tts::load_codebook(w.dir / "cb7.txt").k() == 7);

  const auto t1 = w.dir / "t1.jsonl", t2 = w.dir / "t2.jsonl";
  REQUIRE(w.run("tokenize --manifest " + w.manifest_un() + " --codebook " + w.codebook() + " --out " + t1.string()).code == 0);
  REQUIRE(w.run("tokenize --manifest " + w.manifest_un() + " --codebook " + w.codebook() + " --out " + t2.string()).code == 0);
  CHECK(count_lines(t1) == 6);
  CHECK(slurp(t1) == slurp(t2));
  for (const auto& r : tts::read_token_dump(t1)) {
    for (int t : r.sequence.tokens) CHECK((t >= 0 && t < 8));
  }
}

TEST_CASE("cli: pretrain, finetune, synthesize, eval") {
  auto& w = workspace();
  const auto pre = w.dir / "pre";
  const std::string pre_args = "pretrain --manifest " + w.manifest_un() + " --codebook " + w.codebook() + " --config " +
                               w.config.string() + " --iterations 4 --out ";
  REQUIRE(w.run(pre_args + pre.string()).code == 0);
  CHECK(count_lines(pre / "metrics.jsonl") == 2);
  CHECK(fs::exists(pre / "effective_config.json"));
  REQUIRE(w.run(pre_args + (w.dir / "pre2").string()).code == 0);
  CHECK(slurp(pre / "final.ckpt") == slurp(w.dir / "pre2" / "final.ckpt"));
  CHECK(w.run("pretrain --manifest " + w.manifest_un() + " --config " + w.config.string() + " --out " +
              (w.dir / "x").string())
            .code == 2);

  const std::string ft_base = "finetune --manifest " + w.manifest_lab() + " --config " + w.config.string() +
                              " --iterations 4 --out ";
  const Run missing_init = w.run(ft_base + (w.dir / "ft_bad").string());
  CHECK(missing_init.code == 2);
  CHECK(missing_init.out.find("--init-ckpt") != std::string::npos);
  CHECK(w.run(ft_base + (w.dir / "ft_bad").string() + " --from-scratch --init-ckpt " + (pre / "final.ckpt").string()).code == 2);
  CHECK(w.run(ft_base + (w.dir / "ft_un").string() + " --from-scratch --manifest " + w.manifest_un()).code != 0);
  const auto ft = w.dir / "ft";
  REQUIRE(w.run(ft_base + ft.string() + " --init-ckpt " + (pre / "final.ckpt").string()).code == 0);
  CHECK(fs::exists(ft / "metrics.jsonl"));
  CHECK(tts::load_checkpoint(ft / "final.ckpt").stage == "finetune");

  const std::string ckpt = (ft / "final.ckpt").string();
  auto synth = [&](const std::string& extra, const fs::path& out) {
    return w.run("synthesize --ckpt " + ckpt + " --text \"abc de\" --out " + out.string() + " " + extra);
  };
  const Run s1 = synth("--seed 3", w.dir / "a.wav");
  REQUIRE(s1.code == 0);
  CHECK(s1.out.find("log_duration") != std::string::npos);
  REQUIRE(synth("--seed 3", w.dir / "b.wav").code == 0);
  CHECK(slurp(w.dir / "a.wav") == slurp(w.dir / "b.wav"));
  REQUIRE(synth("--seed 4 --noise-scale 0", w.dir / "c.wav").code == 0);
  REQUIRE(synth("--seed 5 --noise-scale 0", w.dir / "d.wav").code == 0);
  CHECK(slurp(w.dir / "c.wav") == slurp(w.dir / "d.wav"));
  CHECK(tts::read_wav(w.dir / "a.wav").sample_rate == 8000);
  CHECK(w.run("synthesize --ckpt " + ckpt + " --text \"\" --out " + (w.dir / "e.wav").string()).code == 2);
  CHECK(w.run("synthesize --ckpt " + (pre / "final.ckpt").string() + " --text abc --out " + (w.dir / "e.wav").string()).code == 1);

  const auto report = w.dir / "report.json";
  REQUIRE(w.run("eval --ckpt " + ckpt + " --manifest " + w.manifest_lab() + " --codebook " + w.codebook() + " --out " +
                report.string())
              .code == 0);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j["utterances"].size() == 3);
  CHECK(j["aggregate"].contains("token_rtrip_acc"));

  auto entries = tts::load_manifest(w.manifest_lab());
  entries.front().audio_path = "gone.wav";
  const auto broken = w.dir / "lab" / "broken.jsonl";
  tts::write_manifest(broken, entries);
  CHECK(w.run("eval --ckpt " + ckpt + " --manifest " + broken.string() + " --out " + report.string()).code == 1);
  CHECK(nlohmann::json::parse(slurp(report))["errors"] == 1);
}

TEST_CASE("run config files round-trip and reject unknown keys") {
  tts::RunConfigFile cfg;
  cfg.model = tts::testing::micro_model(true);
  cfg.train.iterations = 17;
  cfg.feature.normalize = false;
  cfg.codebook.k = 9;
  const auto back = tts::RunConfigFile::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.model == cfg.model);
  CHECK(back.feature == cfg.feature);
  auto j = cfg.to_json();
  j["extra"] = 1;
  CHECK_THROWS(tts::RunConfigFile::from_json(j));
  j = cfg.to_json();
  j["model"]["mystery"] = 1;
  CHECK_THROWS(tts::RunConfigFile::from_json(j));
  const auto partial = tts::RunConfigFile::from_json(nlohmann::json{{"train", {{"iterations", 3}}}});
  CHECK(partial.train.iterations == 3);
  CHECK(partial.codebook.k == 128);
}
