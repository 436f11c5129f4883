// Copyright (c) 2026 lsca authors. All Rights Reserved.
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LSCA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

struct CliWorkspace {
  CliWorkspace() {
    root = (fs::temp_directory_path() / "lsca_cli_test").string();
    fs::remove_all(root);
    fs::create_directories(root);
    man_vocab = root + "/man.txt";
    eng_vocab = root + "/eng.txt";
    manifest = root + "/m.jsonl";
    std::ofstream(man_vocab) << "播\n放\n";
    std::ofstream(eng_vocab) << "DREAM\n";
    std::ofstream(manifest)
        << R"({"utt_id":"u0","feats":"u0.feat","text":"播放","category":"man"})" << "\n";
  }
  std::string root, man_vocab, eng_vocab, manifest;
};

}  // namespace

TEST_CASE("cli exit codes") {
  const CliWorkspace ws;

  SUBCASE("usage errors exit 2") {
    CHECK(run_cli("definitely-not-a-subcommand") == 2);
    CHECK(run_cli("synth") == 2);          // missing required --out-dir
    CHECK(run_cli("synth --frobnicate --out-dir " + ws.root + "/x") == 2);
    CHECK(run_cli("train --out-dir " + ws.root + "/x --manifest " + ws.manifest +
                  " --man-vocab " + ws.man_vocab + " --eng-vocab " + ws.eng_vocab +
                  " --man-ckpt " + ws.man_vocab + " --eng-ckpt " + ws.eng_vocab +
                  " --lambda 1.3") == 2);
    CHECK(run_cli("pretrain --out-dir " + ws.root + "/x --lang man --manifest /no/such/file"
                  " --man-vocab " + ws.man_vocab + " --eng-vocab " + ws.eng_vocab) == 2);
    CHECK(run_cli("synth --out-dir " + ws.root + "/x --profile vast") == 2);
    CHECK(run_cli("synth --out-dir " + ws.root + "/x --set synth.bogus=1") == 2);
  }

  SUBCASE("help exits 0 and lists flags") {
    CHECK(run_cli("--help") == 0);
    for (const char* sub : {"synth", "pretrain", "train", "decode", "sweep", "score",
                            "probe", "avg-ckpt"}) {
      CHECK(run_cli(std::string(sub) + " --help") == 0);
    }
  }

  SUBCASE("runtime failures exit 1") {
    // a checkpoint path that exists but is not a checkpoint
    CHECK(run_cli("avg-ckpt --out-dir " + ws.root + "/x --inputs " + ws.man_vocab) == 1);
  }

  SUBCASE("happy path writes outputs and exits 0") {
    const std::string out = ws.root + "/corpus";
    CHECK(run_cli("synth --profile toy --out-dir " + out +
                  " --set synth.pretrain_count=4 --set synth.train_count=6"
                  " --set synth.test_count=4 --seed 3") == 0);
    CHECK(fs::exists(out + "/train.jsonl"));
    CHECK(fs::exists(out + "/run_config.txt"));
    CHECK(fs::exists(out + "/summary.json"));
  }
}
