#include <doctest.h>

#include <sstream>

#include "dpgkit/annotation.hpp"
#include "dpgkit/cli.hpp"
#include "dpgkit/render.hpp"
#include "dpgkit/synthgen.hpp"
#include "test_support.hpp"

using namespace dpgkit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dpgkit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t count_lines(const std::string& text, const std::string& needle, bool with_arrow) {
  std::istringstream is(text);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);)
    n += line.find(needle) != std::string::npos && (line.find("->") != std::string::npos) == with_arrow;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"gen"}).code == cli::kExitUsage);
  CHECK(run({"gen", "--out", "x", "--noise", "loud"}).code == cli::kExitUsage);
  CHECK(run({"gen", "--out", "x", "--mix", "1,2"}).code == cli::kExitUsage);
  CHECK(run({"parse", "--method", "beam", "--model", "m", "--input", "i", "--out", "o"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("data errors exit 2") {
  auto dir = scratch("data");
  auto r = run({"render", "--input", (dir / "missing.dpg.json").string()});
  CHECK(r.code == cli::kExitData);
  CHECK_FALSE(r.err.empty());
  write_file(dir / "bad.dpg.json", R"({"image":{"width":1,"height":1},"constituents":[{"id":"a"}],"relationships":[]})");
  r = run({"render", "--input", (dir / "bad.dpg.json").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("constituents/0") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gen is deterministic and eval-jig of truth against itself is 1") {
  auto a = scratch("gen_a"), b = scratch("gen_b");
  const std::vector<std::string> common{"gen", "--n-train", "5", "--n-test", "2", "--seed", "7", "--out"};
  auto args_a = common, args_b = common;
  args_a.push_back(a.string());
  args_b.push_back(b.string());
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(read_file(e.path()) == read_file(b / fs::relative(e.path(), a)));
  }
  CHECK(files == 1 + 3 * 7);

  auto r = run({"eval-jig", (a / "test").string(), (a / "test").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("diagram\tnode\tedge\tcombined\n", 0) == 0);
  CHECK(r.out.find("mean\t1.000000\t1.000000\t1.000000\n") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("render") {
  CHECK(render_dot(Dpg{}) == "digraph dpg {}\n");
  using dpgkit::testing::edge;
  using dpgkit::testing::node;
  Dpg two = make_dpg({node("b1", ConstituentCategory::Blob, {0.1, 0.1, 0.3, 0.3}),
                      node("t1", ConstituentCategory::TextBox, {0.4, 0.1, 0.5, 0.2})},
                     {edge("e1", RelationshipCategory::IntraObjectLabel, {"t1", "b1"})});
  const auto dot = render_dot(two);
  CHECK(count_lines(dot, "[label=", false) == 2);
  CHECK(count_lines(dot, "[label=\"R1\"", true) == 1);
  CHECK(dot.find("\"Blob:b1\"") != std::string::npos);

  auto dir = scratch("render");
  auto d = gen_diagram(SceneTemplate::food_web(), NoiseConfig::preset("default"), 9);
  write_file(dir / "d.dpg.json", write_annotation(d.truth));
  auto r = run({"render", "--input", (dir / "d.dpg.json").string()});
  REQUIRE(r.code == 0);
  CHECK(count_lines(r.out, "[label=", false) == d.truth.nodes().size());
  CHECK(r.out == render_dot(d.truth));
  fs::remove_all(dir);
}
