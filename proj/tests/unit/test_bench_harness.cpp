#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "metacot/bench_harness.hpp"

using namespace metacot;
using namespace metacot::bench;
namespace fs = std::filesystem;

namespace {

const fs::path kTables = fs::path(METACOT_DATA_DIR) / "published_tables";

const std::vector<double> kOursBench21 = {7.251, 7.323, 6.636, 4.574, 4.956, 7.035, 7.762,
                                          8.129, 7.065, 3.328, 7.318, 6.953, 4.014, 5.046,
                                          6.376, 7.100, 7.557, 6.185, 6.712, 6.322, 7.077};
const std::vector<double> kOursImgEdit = {3.87, 3.91, 2.40, 4.22, 3.74, 3.98, 4.80, 3.26, 4.33};

std::string vie_json(double i, double c, double n, double a) {
  return "{\"instruction_following\": " + std::to_string(i) + ", \"consistency\": " + std::to_string(c) +
         ", \"naturalness\": " + std::to_string(n) + ", \"artifact\": " + std::to_string(a) + "}";
}

BenchManifest small_manifest(std::size_t n_color, std::size_t n_remove) {
  std::vector<BenchSample> s;
  for (std::size_t i = 0; i < n_color; ++i) {
    s.push_back({"Color", "c" + std::to_string(i), {"src.png", ""}, "paint ball " + std::to_string(i), {}});
  }
  for (std::size_t i = 0; i < n_remove; ++i) {
    s.push_back({"Remove", "r" + std::to_string(i), {"src.png", ""}, "drop cup " + std::to_string(i), {}});
  }
  return BenchManifest::from_samples(std::move(s));
}

std::vector<gateway::ImageRef> edits_for(const BenchManifest& m) {
  std::vector<gateway::ImageRef> out;
  for (const auto& s : m.samples) out.push_back({"edits/" + s.sample_id + ".png", "sha256:0"});
  return out;
}

}  // namespace

TEST(Vie, Examples) {
  EXPECT_DOUBLE_EQ(vie_overall({10, 10, 10, 10}), 10.0);
  EXPECT_DOUBLE_EQ(vie_overall({0, 9, 9, 9}), 0.0);
  EXPECT_DOUBLE_EQ(vie_overall({9, 9, 9, 0}), 0.0);
  EXPECT_NEAR(vie_overall({8, 9, 9, 10}), 8.485, 1e-3);
  EXPECT_DOUBLE_EQ(vie_overall({8, 9, 9, 10}), std::sqrt(72.0));
  EXPECT_THROW(vie_overall({11, 9, 9, 9}), PreconditionError);
}

TEST(VieProperty, MonotoneInEachComponent) {
  gen::Gen g(3);
  for (int i = 0; i < 2000; ++i) {
    VieComponents c{g.real(0, 10), g.real(0, 10), g.real(0, 10), g.real(0, 10)};
    const double base = vie_overall(c);
    ASSERT_GE(base, 0.0);
    ASSERT_LE(base, 10.0);
    const double bump = g.real(0, 1);
    for (int k = 0; k < 4; ++k) {
      VieComponents d = c;
      double* f[] = {&d.instruction_following, &d.consistency, &d.naturalness, &d.artifact};
      *f[k] = std::min(10.0, *f[k] + bump);
      ASSERT_GE(vie_overall(d), base);
    }
  }
}

TEST(Aggregate, PrintedRows) {
  const auto& cols21 = task_columns(Benchmark::TwentyOneTask);
  ASSERT_EQ(cols21.size(), 21u);
  EXPECT_NEAR(overall_of(kOursBench21), 6.415, 1e-3);
  ASSERT_EQ(task_columns(Benchmark::ImgEdit).size(), 9u);
  EXPECT_NEAR(overall_of(kOursImgEdit), 3.83, 5e-3);
}

TEST(Aggregate, MeansAndErrors) {
  const std::vector<std::string> tasks = {"Color", "Remove"};
  const auto row = aggregate("m", tasks, {{"Color", {4, 6}}, {"Remove", {9}}});
  EXPECT_EQ(row.task_means, (std::vector<double>{5, 9}));
  EXPECT_DOUBLE_EQ(row.overall, 7.0);
  EXPECT_DOUBLE_EQ(aggregate("m", {"Color"}, {{"Color", {3.25}}}).overall, 3.25);
  EXPECT_THROW(aggregate("m", tasks, {{"Color", {4}}, {"Remove", {}}}), PreconditionError);
  EXPECT_THROW(aggregate("m", tasks, {{"Color", {4}}}), PreconditionError);
}

TEST(AggregateProperty, PermutationInvariant) {
  gen::Gen g(17);
  const std::vector<std::string> tasks = {"A", "B", "C", "D"};
  for (int i = 0; i < 300; ++i) {
    std::map<std::string, std::vector<double>> by;
    for (const auto& t : tasks) by[t] = gen::real_vector(g, g.index(10) + 1, 0, 10);
    const auto base = aggregate("m", tasks, by);
    for (auto& [t, v] : by) std::reverse(v.begin(), v.end());
    auto rev = tasks;
    std::reverse(rev.begin(), rev.end());
    const auto other = aggregate("m", rev, by);
    ASSERT_NEAR(other.overall, base.overall, 1e-12);
  }
}

TEST(Delta, Examples) {
  EXPECT_EQ(format_pct(round_half_up(delta_pct(3.74, 3.03), 1)), "+23.4%");
  EXPECT_NEAR(delta_pct(6.415, 5.538), 15.836, 1e-3);
  EXPECT_EQ(format_pct(round_half_up(delta_pct(6.415, 5.538), 1)), "+15.8%");
  EXPECT_EQ(format_pct(round_half_up(delta_pct(6.415, 5.673), 1)), "+13.1%");
  EXPECT_THROW(delta_pct(1.0, 0.0), PreconditionError);
  EXPECT_DOUBLE_EQ(round_half_up(0.25, 1), 0.3);
  EXPECT_DOUBLE_EQ(round_half_up(1.005, 2), 1.01);
  EXPECT_DOUBLE_EQ(round_half_up(-0.25, 1), -0.3);
}

TEST(Delta, ReportOverTable) {
  ScoreTable t;
  t.benchmark = Benchmark::ImgEdit;
  t.tasks.assign(task_columns(Benchmark::ImgEdit).begin(), task_columns(Benchmark::ImgEdit).end());
  const std::vector<double> base = {3.65, 3.53, 2.03, 3.60, 3.03, 3.45, 4.43, 2.59, 4.22};
  t.rows.push_back({"base", base, overall_of(base)});
  t.rows.push_back({"ours", kOursImgEdit, overall_of(kOursImgEdit)});
  const auto r = delta_report(t, "ours", "base");
  ASSERT_EQ(r.cells.size(), 10u);
  EXPECT_EQ(r.cells[4].task, "Remove");
  EXPECT_EQ(r.cells[4].display, "+23.4%");
  EXPECT_EQ(r.cells.back().task, "Overall");
  EXPECT_THROW(delta_report(t, "ours", "missing"), PreconditionError);
}

TEST(RunBench, FixedComponentsDeterministic) {
  const auto m = small_manifest(3, 2);
  auto profile = gateway::mock_backend({}, gateway::MockBackend::UnknownMode::Canned, vie_json(8, 9, 9, 10));
  const auto a = run_bench(m, edits_for(m), profile);
  const auto b = run_bench(m, edits_for(m), profile, "model", 1);
  ASSERT_TRUE(a.table.has_value());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_NEAR(a.table->rows[0].overall, std::sqrt(72.0), 1e-12);
  EXPECT_FALSE(a.unreliable);
  EXPECT_EQ(a.failures, 0u);
}

TEST(RunBench, OneOfFourFailsIsExcluded) {
  const auto m = small_manifest(4, 0);
  auto backend = std::make_shared<gateway::MockBackend>();
  backend->add_contains_rule("paint ball 2", "I cannot rate this.");
  backend->add_contains_rule("paint ball 0", vie_json(4, 4, 4, 4));
  backend->set_unknown_canned(vie_json(8, 8, 8, 8));
  const auto res = run_bench(m, edits_for(m), gateway::mock_profile(backend));
  EXPECT_EQ(res.failures, 1u);
  EXPECT_TRUE(res.unreliable);  // 25% > 20%
  ASSERT_TRUE(res.table.has_value());
  EXPECT_NEAR(res.table->rows[0].task_means[0], (4.0 + 8 + 8) / 3.0, 1e-12);
  EXPECT_FALSE(res.samples[2].score.has_value());
}

TEST(RunBench, UnreliabilityThresholdIsStrict) {
  const auto m = small_manifest(5, 0);
  auto backend = std::make_shared<gateway::MockBackend>();
  backend->add_contains_rule("paint ball 1", "garbage");
  backend->set_unknown_canned(vie_json(8, 8, 8, 8));
  const auto res = run_bench(m, edits_for(m), gateway::mock_profile(backend));
  EXPECT_EQ(res.failures, 1u);
  EXPECT_FALSE(res.unreliable);  // exactly 20%
}

TEST(RunBench, LengthMismatch) {
  const auto m = small_manifest(2, 1);
  auto profile = gateway::mock_backend({}, gateway::MockBackend::UnknownMode::Canned, vie_json(8, 8, 8, 8));
  auto edits = edits_for(m);
  edits.pop_back();
  EXPECT_THROW(run_bench(m, edits, profile), PreconditionError);
}

TEST(RunBench, ImgEditTrioMean) {
  std::vector<BenchSample> s = {{"Add", "a1", {"x.png", ""}, "add a hat", {}}};
  const auto m = BenchManifest::from_samples(s, Benchmark::ImgEdit);
  auto profile = gateway::mock_backend(
      {}, gateway::MockBackend::UnknownMode::Canned,
      R"({"instruction_adherence": 4, "editing_quality": 3, "detail_preservation": 5})");
  const auto res = run_bench(m, edits_for(m), profile);
  ASSERT_TRUE(res.table.has_value());
  EXPECT_DOUBLE_EQ(res.table->rows[0].overall, 4.0);
  EXPECT_THROW(parse_judge_reply(Benchmark::ImgEdit, R"({"instruction_adherence": 0, "editing_quality": 3, "detail_preservation": 5})"),
               Error);
}

TEST(Manifest, Checks) {
  std::vector<BenchSample> bad = {{"Teleport", "x", {"a", ""}, "i", {}}};
  EXPECT_THROW(BenchManifest::from_samples(bad), Error);
  std::vector<BenchSample> dup = {{"Color", "x", {"a", ""}, "i", {}}, {"Color", "x", {"a", ""}, "j", {}}};
  EXPECT_THROW(BenchManifest::from_samples(dup), Error);
}

TEST(PrintedTables, StrictChecksPass) {
  const auto rep = check_published_tables(kTables);
  EXPECT_TRUE(rep.strict_ok());
  EXPECT_GE(rep.strict_count(), 20u);
  for (const auto& l : rep.lines) {
    if (l.strict) EXPECT_TRUE(l.ok) << l.name << ": " << l.detail;
  }
}

TEST(PrintedTables, RowsRecomputeWithinTolerance) {
  const auto t = load_printed_table(kTables / "bench21.csv", Benchmark::TwentyOneTask);
  EXPECT_NEAR(t.table.row("Meta-CoT + RL (Ours)").overall, 6.415, 1e-3);
  const auto ie = load_printed_table(kTables / "imgedit.csv", Benchmark::ImgEdit);
  EXPECT_NEAR(ie.table.row("Meta-CoT+RL").overall, 3.83, 5e-3);
}

TEST(PrintedTables, CorruptedCellIsCaught) {
  const auto dir = fs::temp_directory_path() / "metacot_tables_corrupt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(kTables)) fs::copy(e.path(), dir / e.path().filename());
  {
    std::ifstream in(dir / "bench21.csv");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    const auto pos = all.find("7.251");
    ASSERT_NE(pos, std::string::npos);
    all.replace(pos, 5, "9.251");
    std::ofstream(dir / "bench21.csv") << all;
  }
  EXPECT_FALSE(check_published_tables(dir).strict_ok());
  fs::remove_all(dir);
}
