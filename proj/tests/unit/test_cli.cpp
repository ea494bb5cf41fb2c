#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rose/audio_io.hpp"
#include "rose/cli.hpp"

using namespace rose;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("rose_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("help and usage") {
  const auto h = run({"--help"});
  CHECK(h.code == kExitOk);
  for (const char* sub : {"synth", "train", "enhance", "eval", "spectrogram"}) {
    CHECK(h.out.find(sub) != std::string::npos);
  }
  CHECK(run({"synth", "--help"}).code == kExitOk);
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"train", "--config", "x"}).code == kExitConfig);
}

TEST_CASE("synth flag validation") {
  const auto dir = scratch("flags");
  CHECK(run({"synth", "--out", dir.string()}).code == kExitConfig);
  CHECK(run({"synth", "--generate", "2", "--in", dir.string(), "--out", dir.string()}).code == kExitConfig);
  CHECK(run({"synth", "--mode", "echo", "--snr", "0", "--generate", "2", "--out", dir.string()}).code ==
        kExitConfig);
  CHECK(run({"synth", "--mode", "additive", "--delay-ms", "10:20", "--generate", "2", "--out", dir.string()})
            .code == kExitConfig);
  CHECK(run({"synth", "--mode", "loud", "--generate", "2", "--out", dir.string()}).code == kExitConfig);
  CHECK(run({"synth", "--delay-ms", "300:10", "--generate", "2", "--out", dir.string()}).code == kExitConfig);
  const auto empty = scratch("empty");
  CHECK(run({"synth", "--in", empty.string(), "--out", dir.string()}).code == kExitConfig);
  CHECK(run({"synth", "--in", (dir / "missing").string(), "--out", dir.string()}).code == kExitIo);
}

TEST_CASE("synth, train, enhance, eval, spectrogram in process") {
  const auto dir = scratch("pipeline");
  const auto corpus = dir / "corpus";
  auto s = run({"synth", "--generate", "2", "--seconds", "0.5", "--out", corpus.string(), "--seed", "4"});
  REQUIRE(s.code == kExitOk);
  CHECK(fs::exists(corpus / "manifest.csv"));
  CHECK(s.out.find("2") != std::string::npos);

  {
    std::ofstream cfg(dir / "tiny.cfg");
    cfg << "depth = 2\nhidden = 4\nbatch_size = 2\nsteps = 2\nclip_seconds = 0.5\n";
  }
  const auto ckpt = dir / "m.ckpt";
  const auto t = run({"train", "--config", (dir / "tiny.cfg").string(), "--manifest",
                      (corpus / "manifest.csv").string(), "--out", ckpt.string()});
  REQUIRE(t.code == kExitOk);
  CHECK(t.out.rfind("step,epoch,lr,mae,mag,spec,mfcc,total\n", 0) == 0);
  CHECK(fs::exists(ckpt));

  const auto noisy = corpus / "noisy_0000.wav";
  const auto e = run({"enhance", "--ckpt", ckpt.string(), "--in", noisy.string(), "--out", (dir / "e.wav").string()});
  REQUIRE(e.code == kExitOk);
  CHECK(read_wav(dir / "e.wav").samples.size() == read_wav(noisy).samples.size());

  const auto v = run({"eval", "--ckpt", ckpt.string(), "--manifest", (corpus / "manifest.csv").string(), "--report",
                      (dir / "r.csv").string()});
  REQUIRE(v.code == kExitOk);
  CHECK(v.out.find("MEAN") != std::string::npos);
  std::ifstream rep(dir / "r.csv");
  std::string header;
  std::getline(rep, header);
  CHECK(header == "clip,si_sdr_db,seg_snr_db,lsd,stoi");

  CHECK(run({"spectrogram", "--in", noisy.string(), "--out", (dir / "s.pgm").string()}).code == kExitOk);
  std::ifstream pgm(dir / "s.pgm", std::ios::binary);
  std::string magic;
  pgm >> magic;
  CHECK(magic == "P5");

  SUBCASE("error exit codes") {
    CHECK(run({"enhance", "--ckpt", (dir / "none.ckpt").string(), "--in", noisy.string(), "--out",
               (dir / "x.wav").string()})
              .code == kExitIo);
    {
      std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
      bad << "NOPE";
    }
    CHECK(run({"enhance", "--ckpt", (dir / "bad.ckpt").string(), "--in", noisy.string(), "--out",
               (dir / "x.wav").string()})
              .code == kExitIo);
    {
      std::ofstream cfg(dir / "bad.cfg");
      cfg << "nonsense = 1\n";
    }
    CHECK(run({"train", "--config", (dir / "bad.cfg").string(), "--manifest", (corpus / "manifest.csv").string(),
               "--out", ckpt.string()})
              .code == kExitConfig);
    CHECK(run({"spectrogram", "--in", (dir / "tiny.cfg").string(), "--out", (dir / "x.pgm").string()}).code ==
          kExitIo);
  }
}
