#include <doctest.h>

#include <cstdlib>

#include "common/binio.hpp"
#include "store/manifest.hpp"
#include "store/plot.hpp"
#include "store/table.hpp"
#include "support.hpp"

using namespace crlab;
using namespace crlab::store;

namespace {

MetricSeries series(const std::string& name, bool errors) {
  MetricSeries s;
  s.name = name;
  s.x_label = "epoch";
  s.err_label = errors ? name + "_std" : "";
  s.points.push_back({1, 0.5, errors ? std::optional<double>(0.1) : std::nullopt});
  s.points.push_back({2, 0.25, errors ? std::optional<double>(0.05) : std::nullopt});
  return s;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("csv layout, determinism and round trip") {
  const MetricSeries s = series("loss", false);
  const std::string text = csv_text(s);
  CHECK(text == "epoch,loss\n1,0.5\n2,0.25\n");
  CHECK(count(text, "\n") == 3);
  CHECK(csv_text(s) == text);
  CHECK(parse_csv(text) == s);
  const MetricSeries e = series("reward", true);
  CHECK(parse_csv(csv_text(e)) == e);
  CHECK(test::error_kind_of([] { parse_csv("epoch,loss\n1,abc\n"); }) == ErrorKind::kIo);
  CHECK(format_number(1.0 / 3.0) == "0.333333333");
  CHECK(format_number(-0.0) == "0");
}

TEST_CASE("tables") {
  Table t;
  t.header = {"task", "value"};
  t.rows.push_back({std::string("reach"), 1.5});
  CHECK(table_text(t) == "task,value\nreach,1.5\n");
  t.rows.push_back({std::string("a,b"), 1.0});
  CHECK(test::error_kind_of([&] { table_text(t); }) == ErrorKind::kUsage);
}

TEST_CASE("svg has one legend entry per series and is deterministic") {
  const std::vector<MetricSeries> two{series("teacher", false), series("student", true)};
  const std::string svg = plot_svg(two, "curve");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(count(svg, "<g class=\"legend\">") == 2);
  CHECK(count(svg, "<polyline") == 2);
  CHECK(plot_svg(two, "curve") == svg);
  CHECK(test::error_kind_of([] { plot_svg(std::vector<MetricSeries>{}); }) == ErrorKind::kUsage);
}

TEST_CASE("manifest round trip and stage order") {
  RunManifest m;
  m.run_id = "r1";
  m.created = "2026-01-01T00:00:00Z";
  m.config_snapshot = "seed = 1\n";
  m.set_status("a", StageStatus::kRunning);
  m.set_status("a", StageStatus::kDone);
  m.artifacts["x.csv"] = 0x1234;
  const RunManifest back = RunManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK(back.status("a") == StageStatus::kDone);
  CHECK(test::error_kind_of([&] { m.set_status("a", StageStatus::kRunning); }) == ErrorKind::kUsage);
  CHECK(test::error_kind_of([] { RunManifest::from_json("{"); }) == ErrorKind::kIo);
}

TEST_CASE("run directory records and verifies digests") {
  const auto dir = test::scratch_dir("rundir");
  RunDirectory run(dir / "run", "seed = 3\n");
  write_text_file(run.path("a.csv"), "x,y\n1,2\n");
  run.record("a.csv");
  run.set_status("stage", StageStatus::kDone);
  const RunDirectory opened = RunDirectory::open(dir / "run");
  CHECK(opened.manifest().config_snapshot == "seed = 3\n");
  CHECK(read_text_file(dir / "run" / "config.cfg") == "seed = 3\n");
  CHECK(opened.verify().empty());
  write_text_file(run.path("a.csv"), "x,y\n1,3\n");
  CHECK(opened.verify() == std::vector<std::string>{"a.csv"});
}

TEST_CASE("run root override") {
  ::setenv(kRunRootEnv, "/tmp/crlab_root", 1);
  CHECK(resolve_run_path("runs/a") == std::filesystem::path("/tmp/crlab_root/runs/a"));
  CHECK(resolve_run_path("/abs/b") == std::filesystem::path("/abs/b"));
  ::unsetenv(kRunRootEnv);
  CHECK(resolve_run_path("runs/a") == std::filesystem::path("runs/a"));
}
