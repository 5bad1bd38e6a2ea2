#include <sstream>

#include "doctest.h"
#include "hrtfnorm/cli.hpp"
#include "support.hpp"

using namespace hrtfnorm;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hrtfnorm");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and validation exit codes") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"lsd", "--truth", "/nonexistent/a.hrtfdb", "--pred", "/nonexistent/b.hrtfdb"}).code == kExitUsage);
  CHECK(run({"classify", "--input", "x", "--bogus-flag"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);

  auto dir = testing::scratch_dir("cli_codes");
  const std::string d = dir.string();
  REQUIRE(run({"synth", "--output", d, "--databases", "2", "--subjects", "4", "--bins", "17"}).code == kExitOk);
  // an average computed from a different database
  REQUIRE(run({"avg", "--input", d + "/db1.hrtfdb", "--output", d + "/a1.hrtfdb"}).code == kExitOk);
  REQUIRE(run({"normalize", "--input", d + "/db0.hrtfdb", "--mode", "per-position-per-ear", "--output",
               d + "/n0.hrtfdb"}).code == kExitOk);
  auto bad = run({"denormalize", "--input", d + "/n0.hrtfdb", "--average", d + "/a1.hrtfdb", "--output", d + "/x.hrtfdb"});
  CHECK(bad.code == kExitValidation);
  CHECK(bad.err.find("normalized with average") != std::string::npos);
  // unknown mode and non-container input are validation errors
  CHECK(run({"avg", "--input", d + "/db0.hrtfdb", "--mode", "sideways", "--output", d + "/y.hrtfdb"}).code == kExitValidation);
  CHECK(run({"normalize", "--input", d + "/db0.hrtfdb", "--output", d + "/y.hrtfdb"}).code == kExitValidation);
  testing::file_bytes(d + "/db0.hrtfdb");
  {
    std::ofstream junk(d + "/junk.hrtfdb");
    junk << "not a container";
  }
  auto parse = run({"info", "--input", d + "/junk.hrtfdb"});
  CHECK(parse.code == kExitValidation);
  CHECK(parse.err.find("bad magic") != std::string::npos);
  CHECK(run({"classify", "--input", d + "/db0.hrtfdb", "--gamma", "wide"}).code == kExitValidation);
}

TEST_CASE("info echoes the header written by synth") {
  auto dir = testing::scratch_dir("cli_info");
  const std::string d = dir.string();
  REQUIRE(run({"synth", "--output", d, "--databases", "2", "--subjects", "3", "--bins", "9", "--seed", "4"}).code == 0);
  auto info = run({"info", "--input", d + "/db1.hrtfdb"});
  REQUIRE(info.code == 0);
  auto j = Json::parse(info.out);
  auto db = load_database(d + "/db1.hrtfdb");
  CHECK(j.at("name") == db.name);
  CHECK(j.at("n_bins") == 9);
  CHECK(j.at("subjects").size() == 3);
  CHECK(j.at("positions").size() == 12);
  CHECK(j.at("provenance") == db.provenance);
}

TEST_CASE("reports embed the resolved configuration") {
  auto dir = testing::scratch_dir("cli_config");
  auto r = run({"synth", "--output", dir.string(), "--databases", "2", "--subjects", "2", "--bins", "9"});
  CHECK(r.out.find("config:") == 0);
  CHECK(r.out.find("seed=0") != std::string::npos);
  CHECK(r.out.find("positions=\"grid12\"") != std::string::npos);
}

}
