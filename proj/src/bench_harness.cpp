#include "metacot/bench_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "metacot/kernels.hpp"
#include "metacot/prompts.hpp"
#include "metacot/text.hpp"

namespace metacot::bench {

namespace {

const std::vector<std::string> kTwentyOneColumns = {
    "Background", "Color",    "Material",          "Action",   "Human Attribute", "Style",
    "Add",        "Remove",   "Replace",           "Text",     "Tone",            "Causal",
    "Logical",    "Spatial Reasoning", "Temporal", "Camera",   "Structure",       "Position",
    "Quantity",   "Specified Quantity", "Multi-Instruction"};

const std::vector<std::string> kImgEditColumns = {"Add",    "Adjust",     "Extract",
                                                  "Replace", "Remove",    "Background",
                                                  "Style",  "Hybrid",     "Action"};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

std::optional<nlohmann::json> json_object_in(const std::string& reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

double field(const nlohmann::json& j, const char* key, Scale scale) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw Error(std::string("judge reply lacks numeric '") + key + "'");
  }
  const double v = j[key].get<double>();
  if (!scale.contains(v)) {
    throw Error(std::string("judge field '") + key + "' = " + text::format_double(v) +
                " is outside the scale");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& p) {
  CsvTable t;
  const std::string body = read_file(p);
  for (const auto& line : text::split_lines(body)) {
    if (text::trim(line).empty()) continue;
    auto fields = text::split_trimmed(line, ',');
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw FormatError(p.string(), 0, "row width differs from the header: " + line);
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

double number(const std::string& s, const std::filesystem::path& src) {
  const auto v = text::parse_double(s);
  if (!v) throw FormatError(src.string(), 0, "not a number: '" + s + "'");
  return *v;
}

bool parse_yes(const std::string& s) { return text::iequals(s, "yes") || text::iequals(s, "true"); }

}  // namespace

std::string_view to_string(Benchmark b) {
  return b == Benchmark::TwentyOneTask ? "21-task" : "imgedit";
}

std::optional<Benchmark> parse_benchmark(std::string_view s) {
  const std::string l = text::to_lower(s);
  if (l == "21-task" || l == "twentyonetask" || l == "21task") return Benchmark::TwentyOneTask;
  if (l == "imgedit") return Benchmark::ImgEdit;
  return std::nullopt;
}

std::span<const std::string> task_columns(Benchmark b) {
  return b == Benchmark::TwentyOneTask ? std::span<const std::string>(kTwentyOneColumns)
                                       : std::span<const std::string>(kImgEditColumns);
}

Scale scale_of(Benchmark b) {
  return b == Benchmark::TwentyOneTask ? Scale{0.0, 10.0} : Scale{1.0, 5.0};
}

void VieComponents::check() const {
  for (double v : {instruction_following, consistency, naturalness, artifact}) {
    if (!(v >= 0.0 && v <= 10.0)) {
      throw PreconditionError("VIE component " + text::format_double(v) + " outside [0, 10]");
    }
  }
}

double vie_overall(const VieComponents& c) {
  c.check();
  const double semantic = std::min(c.instruction_following, c.consistency);
  const double quality = std::min(c.naturalness, c.artifact);
  return std::sqrt(semantic * quality);
}

const ScoreRow& ScoreTable::row(std::string_view method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  throw PreconditionError("no row for method '" + std::string(method) + "'");
}

void ScoreTable::check() const {
  const Scale scale = scale_of(benchmark);
  for (const auto& r : rows) {
    if (r.task_means.size() != tasks.size()) {
      throw PreconditionError("row '" + r.method + "' does not cover every task");
    }
    for (double v : r.task_means) {
      if (!scale.contains(v)) {
        throw PreconditionError("row '" + r.method + "' holds " + text::format_double(v) +
                                " outside the benchmark scale");
      }
    }
  }
}

std::string ScoreTable::to_csv(int decimals) const {
  std::string out = "method";
  for (const auto& t : tasks) out += "," + t;
  out += benchmark == Benchmark::TwentyOneTask ? ",Average\n" : ",Overall\n";
  for (const auto& r : rows) {
    out += r.method;
    for (double v : r.task_means) out += "," + fixed(round_half_up(v, decimals), decimals);
    out += "," + fixed(round_half_up(r.overall, decimals), decimals) + "\n";
  }
  return out;
}

double overall_of(std::span<const double> task_means) {
  if (task_means.empty()) throw PreconditionError("no task means to average");
  return kernels::mean(task_means);
}

ScoreRow aggregate(std::string method, const std::vector<std::string>& tasks,
                   const std::map<std::string, std::vector<double>>& samples_by_task) {
  if (tasks.empty()) throw PreconditionError("aggregate needs at least one task");
  ScoreRow row;
  row.method = std::move(method);
  for (const auto& task : tasks) {
    const auto it = samples_by_task.find(task);
    if (it == samples_by_task.end() || it->second.empty()) {
      throw PreconditionError("task '" + task + "' has no scored samples");
    }
    row.task_means.push_back(kernels::mean(it->second));
  }
  row.overall = overall_of(row.task_means);
  return row;
}

double round_half_up(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = std::abs(v) * scale;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, scaled)) / scale;
  return std::copysign(rounded, v);
}

std::string format_pct(double pct) {
  const double r = round_half_up(pct, 1);
  return (r >= 0.0 ? "+" : "") + fixed(r == 0.0 ? 0.0 : r, 1) + "%";
}

double delta_pct(double method_value, double baseline_value) {
  if (baseline_value == 0.0) throw PreconditionError("baseline value is zero");
  return (method_value - baseline_value) / baseline_value * 100.0;
}

DeltaReport delta_report(const ScoreTable& table, std::string_view method,
                         std::string_view baseline) {
  const ScoreRow& m = table.row(method);
  const ScoreRow& b = table.row(baseline);
  DeltaReport report{std::string(method), std::string(baseline), {}};
  for (std::size_t i = 0; i < table.tasks.size(); ++i) {
    const double d = delta_pct(m.task_means.at(i), b.task_means.at(i));
    report.cells.push_back({table.tasks[i], d, format_pct(d)});
  }
  const double d = delta_pct(m.overall, b.overall);
  report.cells.push_back({"Overall", d, format_pct(d)});
  return report;
}

void BenchManifest::check() const {
  const auto cols = task_columns(benchmark);
  std::set<std::string> ids;
  std::set<std::string> seen_tasks;
  for (const auto& s : samples) {
    if (std::find(cols.begin(), cols.end(), s.task) == cols.end()) {
      throw PreconditionError("task '" + s.task + "' is not a " + std::string(to_string(benchmark)) +
                              " column");
    }
    if (s.sample_id.empty() || !ids.insert(s.sample_id).second) {
      throw PreconditionError("sample ids must be nonempty and unique ('" + s.sample_id + "')");
    }
    seen_tasks.insert(s.task);
  }
  std::vector<std::string> expected;
  for (const auto& c : cols) {
    if (seen_tasks.contains(c)) expected.push_back(c);
  }
  if (expected != tasks) throw PreconditionError("manifest task list is inconsistent with its samples");
}

BenchManifest BenchManifest::from_samples(std::vector<BenchSample> samples,
                                          std::optional<Benchmark> benchmark) {
  BenchManifest m;
  if (benchmark) {
    m.benchmark = *benchmark;
  } else {
    const bool all_imgedit = std::all_of(samples.begin(), samples.end(), [](const BenchSample& s) {
      return std::find(kImgEditColumns.begin(), kImgEditColumns.end(), s.task) !=
             kImgEditColumns.end();
    });
    const bool all_21 = std::all_of(samples.begin(), samples.end(), [](const BenchSample& s) {
      return std::find(kTwentyOneColumns.begin(), kTwentyOneColumns.end(), s.task) !=
             kTwentyOneColumns.end();
    });
    m.benchmark = (all_imgedit && !all_21) ? Benchmark::ImgEdit : Benchmark::TwentyOneTask;
  }
  std::set<std::string> seen;
  for (const auto& s : samples) seen.insert(s.task);
  for (const auto& c : task_columns(m.benchmark)) {
    if (seen.contains(c)) m.tasks.push_back(c);
  }
  m.samples = std::move(samples);
  m.check();
  return m;
}

BenchManifest BenchManifest::load(const std::filesystem::path& jsonl,
                                  std::optional<Benchmark> benchmark) {
  std::vector<BenchSample> samples;
  const std::string body = read_file(jsonl);
  const auto lines = text::split_lines(body);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      BenchSample s;
      s.task = j.at("task").get<std::string>();
      s.sample_id = j.at("sample_id").get<std::string>();
      s.source_image = gateway::image_ref_from_json(j.at("source_image"));
      s.instruction = j.at("instruction").get<std::string>();
      if (j.contains("reference") && j["reference"].is_string()) {
        s.reference = j["reference"].get<std::string>();
      }
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(jsonl.string(), i + 1, e.what());
    }
  }
  return from_samples(std::move(samples), benchmark);
}

std::vector<gateway::ImageRef> find_edits(const BenchManifest& manifest,
                                          const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("edits directory not found: " + dir.string());
  std::map<std::string, std::filesystem::path> by_stem;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto stem = e.path().stem().string();
    auto it = by_stem.find(stem);
    if (it == by_stem.end() || e.path() < it->second) by_stem[stem] = e.path();
  }
  std::vector<gateway::ImageRef> out;
  for (const auto& s : manifest.samples) {
    const auto it = by_stem.find(s.sample_id);
    if (it == by_stem.end()) {
      throw PreconditionError("no edited image for sample '" + s.sample_id + "' in " + dir.string());
    }
    out.push_back(gateway::image_ref(it->second.string()));
  }
  return out;
}

SampleScore parse_judge_reply(Benchmark b, const std::string& reply) {
  const auto j = json_object_in(reply);
  if (!j) throw Error("judge reply holds no JSON object");
  SampleScore s;
  const Scale scale = scale_of(b);
  if (b == Benchmark::TwentyOneTask) {
    VieComponents c{field(*j, "instruction_following", scale), field(*j, "consistency", scale),
                    field(*j, "naturalness", scale), field(*j, "artifact", scale)};
    s.vie = c;
    s.score = vie_overall(c);
  } else {
    std::array<double, 3> trio = {field(*j, "instruction_adherence", scale),
                                  field(*j, "editing_quality", scale),
                                  field(*j, "detail_preservation", scale)};
    s.imgedit = trio;
    s.score = (trio[0] + trio[1] + trio[2]) / 3.0;
  }
  return s;
}

BenchResult run_bench(const BenchManifest& manifest,
                      const std::vector<gateway::ImageRef>& edited_images,
                      const gateway::GatewayProfile& judge, const std::string& method,
                      std::size_t parallelism) {
  manifest.check();
  if (edited_images.size() != manifest.samples.size()) {
    throw PreconditionError("manifest has " + std::to_string(manifest.samples.size()) +
                            " samples but " + std::to_string(edited_images.size()) +
                            " edited images were given");
  }
  const auto tmpl = prompts::get(manifest.benchmark == Benchmark::TwentyOneTask
                                     ? "bench_judge/vie/v1"
                                     : "bench_judge/imgedit/v1");
  BenchResult result;
  result.benchmark = manifest.benchmark;
  result.samples.resize(manifest.samples.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < manifest.samples.size(); i = next.fetch_add(1)) {
      const auto& sample = manifest.samples[i];
      SampleScore score;
      try {
        const prompts::Vars vars = {{"instruction", sample.instruction}};
        gateway::ChatRequest req;
        if (!tmpl.system.empty()) req.messages.push_back({"system", prompts::render(tmpl.system, vars), {}});
        req.messages.push_back(
            {"user", prompts::render(tmpl.user, vars), {sample.source_image, edited_images[i]}});
        const auto exchange = gateway::complete(judge, req);
        try {
          score = parse_judge_reply(manifest.benchmark, exchange.response);
        } catch (const Error& e) {
          score.error = e.what();
        }
      } catch (const gateway::GatewayError& e) {
        score.error = std::string("gateway: ") + e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
      score.sample_id = sample.sample_id;
      score.task = sample.task;
      result.samples[i] = std::move(score);
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, manifest.samples.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (fatal) std::rethrow_exception(fatal);

  std::map<std::string, std::vector<double>> by_task;
  for (const auto& s : result.samples) {
    if (s.score) {
      by_task[s.task].push_back(*s.score);
    } else {
      ++result.failures;
    }
  }
  result.unreliable = !manifest.samples.empty() &&
                      static_cast<double>(result.failures) >
                          0.2 * static_cast<double>(manifest.samples.size());
  std::vector<std::string> empty_tasks;
  for (const auto& t : manifest.tasks) {
    if (!by_task.contains(t)) empty_tasks.push_back(t);
  }
  if (!empty_tasks.empty()) {
    result.note = "no usable score for task(s): " + text::join(empty_tasks, ", ");
  } else if (!manifest.tasks.empty()) {
    ScoreTable table;
    table.benchmark = manifest.benchmark;
    table.tasks = manifest.tasks;
    table.rows.push_back(aggregate(method, manifest.tasks, by_task));
    result.table = std::move(table);
  }
  if (result.unreliable) {
    if (!result.note.empty()) result.note += "; ";
    result.note += std::to_string(result.failures) + " of " +
                   std::to_string(manifest.samples.size()) + " judge replies unusable";
  }
  return result;
}

nlohmann::json BenchResult::to_json() const {
  nlohmann::json samples_json = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json j = {{"sample_id", s.sample_id}, {"task", s.task}};
    if (s.vie) {
      j["components"] = {{"instruction_following", s.vie->instruction_following},
                         {"consistency", s.vie->consistency},
                         {"naturalness", s.vie->naturalness},
                         {"artifact", s.vie->artifact}};
    }
    if (s.imgedit) {
      j["components"] = {{"instruction_adherence", (*s.imgedit)[0]},
                         {"editing_quality", (*s.imgedit)[1]},
                         {"detail_preservation", (*s.imgedit)[2]}};
    }
    j["score"] = s.score ? nlohmann::json(*s.score) : nlohmann::json(nullptr);
    if (!s.error.empty()) j["error"] = s.error;
    samples_json.push_back(std::move(j));
  }
  nlohmann::json out = {{"benchmark", std::string(to_string(benchmark))},
                        {"samples", std::move(samples_json)},
                        {"failures", failures},
                        {"unreliable", unreliable}};
  if (!note.empty()) out["note"] = note;
  if (table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table->rows) {
      rows.push_back({{"method", r.method}, {"task_means", r.task_means}, {"overall", r.overall}});
    }
    out["table"] = {{"tasks", table->tasks}, {"rows", std::move(rows)}};
  } else {
    out["table"] = nullptr;
  }
  return out;
}

bool TablesCheckReport::strict_ok() const {
  return std::all_of(lines.begin(), lines.end(),
                     [](const CheckLine& l) { return !l.strict || l.ok; });
}

std::size_t TablesCheckReport::strict_count() const {
  return static_cast<std::size_t>(
      std::count_if(lines.begin(), lines.end(), [](const CheckLine& l) { return l.strict; }));
}

std::size_t TablesCheckReport::discrepancies() const {
  return static_cast<std::size_t>(std::count_if(
      lines.begin(), lines.end(), [](const CheckLine& l) { return !l.strict && !l.ok; }));
}

PrintedTable load_printed_table(const std::filesystem::path& csv, Benchmark b) {
  const CsvTable t = read_csv(csv);
  const auto cols = task_columns(b);
  if (t.header.size() != cols.size() + 3 || t.header.front() != "method" ||
      t.header.back() != "strict" ||
      !std::equal(cols.begin(), cols.end(), t.header.begin() + 1)) {
    throw FormatError(csv.string(), 1, "header does not match the benchmark columns");
  }
  PrintedTable pt;
  pt.table.benchmark = b;
  pt.table.tasks.assign(cols.begin(), cols.end());
  for (const auto& row : t.rows) {
    ScoreRow r;
    r.method = row.front();
    for (std::size_t i = 0; i < cols.size(); ++i) r.task_means.push_back(number(row[i + 1], csv));
    r.overall = overall_of(r.task_means);
    pt.printed_overall.push_back(number(row[cols.size() + 1], csv));
    pt.strict.push_back(parse_yes(row.back()));
    pt.table.rows.push_back(std::move(r));
  }
  pt.table.check();
  return pt;
}

TablesCheckReport check_published_tables(const std::filesystem::path& dir) {
  TablesCheckReport report;
  const PrintedTable b21 = load_printed_table(dir / "bench21.csv", Benchmark::TwentyOneTask);
  const PrintedTable ie = load_printed_table(dir / "imgedit.csv", Benchmark::ImgEdit);

  auto check_overalls = [&](const PrintedTable& pt, const std::string& label, double tol, int dp) {
    for (std::size_t i = 0; i < pt.table.rows.size(); ++i) {
      const auto& r = pt.table.rows[i];
      const double diff = r.overall - pt.printed_overall[i];
      CheckLine line;
      line.name = label + " overall of " + r.method;
      line.strict = pt.strict[i];
      line.ok = std::abs(diff) <= tol + 1e-12;
      line.detail = "recomputed " + fixed(r.overall, dp + 2) + ", printed " +
                    fixed(pt.printed_overall[i], dp) + ", tolerance " + text::format_double(tol);
      report.lines.push_back(std::move(line));
    }
  };
  check_overalls(b21, "21-task", 0.001, 3);
  check_overalls(ie, "ImgEdit", 0.005, 2);

  // Printed delta rows: per-task cells from the per-task values, the overall
  // cell from the printed overall column.
  const CsvTable deltas = read_csv(dir / "imgedit_delta.csv");
  for (const auto& row : deltas.rows) {
    const std::string& method = row.at(0);
    const std::string& baseline = row.at(1);
    const ScoreRow& m = ie.table.row(method);
    const ScoreRow& b = ie.table.row(baseline);
    std::size_t mi = 0, bi = 0;
    for (std::size_t i = 0; i < ie.table.rows.size(); ++i) {
      if (ie.table.rows[i].method == method) mi = i;
      if (ie.table.rows[i].method == baseline) bi = i;
    }
    for (std::size_t c = 2; c < deltas.header.size(); ++c) {
      const std::string& col = deltas.header[c];
      const double printed = number(row[c], dir / "imgedit_delta.csv");
      double raw = 0.0;
      if (col == "Overall") {
        raw = delta_pct(ie.printed_overall[mi], ie.printed_overall[bi]);
      } else {
        const auto it = std::find(ie.table.tasks.begin(), ie.table.tasks.end(), col);
        if (it == ie.table.tasks.end()) throw FormatError("unknown delta column '" + col + "'");
        const auto k = static_cast<std::size_t>(it - ie.table.tasks.begin());
        raw = delta_pct(m.task_means[k], b.task_means[k]);
      }
      CheckLine line;
      line.name = "ImgEdit delta " + col + " of " + method + " over " + baseline;
      line.ok = std::abs(raw - printed) <= 0.1 + 1e-9 && format_pct(raw) == format_pct(printed);
      line.detail = "recomputed " + fixed(raw, 3) + "% (" + format_pct(raw) + "), printed " +
                    format_pct(printed);
      report.lines.push_back(std::move(line));
    }
  }

  const CsvTable claims = read_csv(dir / "claims.csv");
  for (const auto& row : claims.rows) {
    const PrintedTable& pt = row.at(1) == "21-task" ? b21 : ie;
    auto printed_overall = [&](const std::string& method) {
      for (std::size_t i = 0; i < pt.table.rows.size(); ++i) {
        if (pt.table.rows[i].method == method) return pt.printed_overall[i];
      }
      throw FormatError("claim refers to unknown row '" + method + "'");
    };
    const double raw = delta_pct(printed_overall(row.at(2)), printed_overall(row.at(3)));
    const double printed = number(row.at(4), dir / "claims.csv");
    CheckLine line;
    line.name = "claim: " + row.at(0);
    line.strict = parse_yes(row.at(5));
    line.ok = std::abs(raw - printed) <= 0.05 + 1e-9;
    line.detail = "recomputed " + fixed(raw, 3) + "% from printed overalls, stated " +
                  format_pct(printed);
    report.lines.push_back(std::move(line));
  }

  // Component tables: values on the judge scale, and a method that appears
  // in several tables carries the same components everywhere.
  if (std::filesystem::exists(dir / "components.csv")) {
    const CsvTable comps = read_csv(dir / "components.csv");
    std::map<std::string, std::pair<std::string, std::vector<double>>> first_seen;
    for (const auto& row : comps.rows) {
      std::vector<double> values;
      for (std::size_t c = 2; c < row.size(); ++c) values.push_back(number(row[c], dir / "components.csv"));
      const bool in_scale = std::all_of(values.begin(), values.end(),
                                        [](double v) { return v >= 0.0 && v <= 10.0; });
      if (!in_scale) {
        report.lines.push_back({"components of " + row.at(1) + " in " + row.at(0), true, false,
                                "value outside [0, 10]"});
      }
      auto [it, fresh] = first_seen.try_emplace(row.at(1), row.at(0), values);
      if (fresh) continue;
      CheckLine line;
      line.name = "components of " + row.at(1) + ": " + row.at(0) + " vs " + it->second.first;
      line.ok = values == it->second.second;
      line.detail = line.ok ? "identical" : "component values differ";
      report.lines.push_back(std::move(line));
    }
  }
  return report;
}

}  // namespace metacot::bench
