#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metacot/annotation_server.hpp"
#include "metacot/bench_harness.hpp"
#include "metacot/config.hpp"
#include "metacot/consistency_reward.hpp"
#include "metacot/cot_schema.hpp"
#include "metacot/data_pipeline.hpp"
#include "metacot/grpo_math.hpp"
#include "metacot/info_metrics.hpp"
#include "metacot/instruction_compiler.hpp"
#include "metacot/kernels.hpp"
#include "metacot/text.hpp"
#include "metacot/version.hpp"

namespace metacot::cli {

namespace {

using json = nlohmann::json;

std::string read_input(const std::string& path) {
  std::stringstream ss;
  if (path == "-") {
    ss << std::cin.rdbuf();
  } else {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    ss << in.rdbuf();
  }
  return ss.str();
}

std::vector<std::string> csv_list(const std::string& s) { return text::split_trimmed(s, ','); }

std::vector<double> number_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : csv_list(s)) {
    const auto v = text::parse_double(item);
    if (!v) throw PreconditionError("not a number: '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

json program_json(const MetaTaskProgram& p) {
  json steps = json::array();
  for (const auto& s : p.steps) {
    steps.push_back({{"meta_task", std::string(to_string(s.meta_task))},
                     {"target", s.target},
                     {"detail", s.detail}});
  }
  return steps;
}

json cot_json(const cot::MetaCotDocument& d) {
  json summary{{"mode", d.summary.mode == cot::SummaryMode::MetaTaskSummary ? "meta-task" : "task"},
               {"targets", d.summary.targets},
               {"abilities", d.summary.abilities}};
  if (d.summary.task) summary["task"] = std::string(to_string(*d.summary.task));
  json metas = json::array();
  for (auto m : d.summary.meta_tasks) metas.push_back(std::string(to_string(m)));
  summary["meta_tasks"] = metas;
  json traversal = json::array();
  for (const auto& e : d.traversal) {
    json entry{{"target", e.target}, {"action", e.decision == cot::Decision::Edit ? "EDIT" : "KEEP"}};
    if (e.meta_task) entry["meta_task"] = std::string(to_string(*e.meta_task));
    if (!e.how.empty()) entry["how"] = e.how;
    traversal.push_back(entry);
  }
  return {{"summary", summary}, {"thinking", d.thinking}, {"traversal", traversal}};
}

struct Globals {
  std::string config_path;
  bool mock = false;
  std::string mock_dir;
};

struct Context {
  const Globals& g;
  std::ostream& out;
  std::ostream& err;

  ToolkitConfig config() const {
    return g.config_path.empty() ? ToolkitConfig{} : ToolkitConfig::load(g.config_path);
  }
  std::shared_ptr<gateway::Backend> mock() const {
    if (!g.mock) return {};
    const std::string dir = g.mock_dir.empty() ? std::string(METACOT_FIXTURES_DIR) : g.mock_dir;
    return gateway::MockBackend::load_dir(dir);
  }
};

std::atomic<serve::AnnotationServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Meta-CoT editing-decomposition toolkit", "metacot"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file")->check(CLI::ExistingFile);
  auto* mock_opt =
      app.add_option("--mock", g.mock_dir, "Offline mode: answer model calls from fixture directory")
          ->expected(0, 1);
  app.add_flag_callback("--offline", [&] { g.mock = true; }, "Same as --mock with bundled fixtures");
  app.fallthrough();

  Context ctx{g, out, err};
  std::function<int()> action;

  // decompose
  auto* decompose = app.add_subcommand("decompose", "Classify an instruction and compile its program");
  std::string instruction, lexicon_path, registry_path;
  decompose->add_option("--instruction,-i", instruction, "Editing instruction")->required();
  decompose->add_option("--lexicon", lexicon_path, "Lexicon file")->check(CLI::ExistingFile);
  decompose->add_option("--registry", registry_path, "Registry file")->check(CLI::ExistingFile);
  std::string decompose_gateway;
  decompose->add_option("--gateway", decompose_gateway, "Profile for the fallback model call");
  decompose->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      std::optional<compiler::Lexicon> lex;
      if (!lexicon_path.empty()) lex = compiler::Lexicon::load(lexicon_path);
      std::optional<TaskRegistry> reg;
      if (!registry_path.empty()) reg = TaskRegistry::load(registry_path);
      const auto& profile_name = decompose_gateway.empty() ? cfg.pipeline.task_typer : decompose_gateway;
      std::optional<gateway::GatewayProfile> gw;
      if (auto m = ctx.mock()) {
        gw = cfg.profile(profile_name, "task_typer", m);
      } else if (!profile_name.empty()) {
        gw = cfg.profile(profile_name, "task_typer");
      }
      compiler::ClassifyOptions opts;
      opts.registry = reg ? &*reg : nullptr;
      opts.gateway = gw ? &*gw : nullptr;
      opts.prompt_id = cfg.pipeline.task_typing_prompt;
      const auto r = compiler::classify(instruction, lex ? *lex : compiler::Lexicon::bundled(), opts);
      json j{{"instruction", instruction},
             {"triplet",
              {{"task", std::string(to_string(r.triplet.task))},
               {"targets", r.triplet.targets},
               {"abilities", r.triplet.abilities}}},
             {"meta_tasks", to_string(r.program.meta_tasks())},
             {"program", program_json(r.program)},
             {"source", std::string(to_string(r.source))},
             {"confidence", r.confidence}};
      if (!r.sub_instructions.empty()) j["sub_instructions"] = r.sub_instructions;
      ctx.out << j.dump(2) << '\n';
      return 0;
    };
  });

  // cot
  auto* cotcmd = app.add_subcommand("cot", "Meta-CoT documents");
  cotcmd->require_subcommand(1);
  std::string cot_file = "-", cot_task;
  auto* cot_validate = cotcmd->add_subcommand("validate", "Parse and validate a document");
  cot_validate->add_option("file", cot_file, "Document file ('-' for stdin)");
  cot_validate->add_option("--task", cot_task, "Task type to validate against");
  cot_validate->callback([&] {
    action = [&] {
      const auto parsed = cot::parse(read_input(cot_file));
      json j{{"valid", false}};
      json diags = json::array();
      for (const auto& d : parsed.diagnostics) {
        diags.push_back({{"line", d.line},
                         {"column", d.column},
                         {"code", std::string(to_string(d.code))},
                         {"message", d.message}});
      }
      j["diagnostics"] = diags;
      bool ok = parsed.ok();
      if (ok && !cot_task.empty()) {
        const auto t = parse_task_type(cot_task);
        if (!t) throw UnknownTaskError(cot_task);
        const auto verdict = cot::validate_against_task(*parsed.document, *t);
        json vs = json::array();
        for (const auto& v : verdict.violations) vs.push_back(v.message);
        j["task"] = std::string(to_string(*t));
        j["violations"] = vs;
        ok = verdict.ok();
      }
      j["valid"] = ok;
      ctx.out << j.dump(2) << '\n';
      return ok ? 0 : 1;
    };
  });
  auto* cot_parse = cotcmd->add_subcommand("parse", "Parse a document (tolerant) and print it");
  bool cot_canonical = false;
  cot_parse->add_option("file", cot_file, "Document file ('-' for stdin)");
  cot_parse->add_flag("--canonical", cot_canonical, "Print canonical text instead of JSON");
  cot_parse->callback([&] {
    action = [&] {
      const auto parsed = cot::parse(read_input(cot_file));
      if (!parsed.ok()) {
        ctx.err << parsed.describe() << '\n';
        return 1;
      }
      if (cot_canonical) {
        ctx.out << cot::serialize(*parsed.document);
      } else {
        ctx.out << cot_json(*parsed.document).dump(2) << '\n';
      }
      return 0;
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Data construction pipeline");
  pipe->require_subcommand(1);
  auto* pipe_run = pipe->add_subcommand("run", "Run every stage over input records");
  std::string pipe_in, pipe_out;
  bool pipe_append = false;
  std::optional<std::size_t> pipe_batch, pipe_par;
  pipe_run->add_option("--in,--input", pipe_in, "JSONL of {id, source_image, target_image, instruction}")
      ->required()
      ->check(CLI::ExistingFile);
  pipe_run->add_option("--out", pipe_out, "Store directory");
  pipe_run->add_flag("--append", pipe_append, "Extend an existing store");
  pipe_run->add_option("--batch-size", pipe_batch)->check(CLI::PositiveNumber);
  pipe_run->add_option("--parallelism", pipe_par)->check(CLI::PositiveNumber);
  pipe_run->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      if (pipe_batch) cfg.pipeline.batch_size = *pipe_batch;
      if (pipe_par) cfg.pipeline.parallelism = *pipe_par;
      const auto pc = cfg.pipeline_config(ctx.mock());
      std::optional<std::filesystem::path> out_dir;
      if (!pipe_out.empty()) out_dir = pipe_out;
      const auto result =
          pipeline::run_pipeline(pipeline::load_records(pipe_in), pc, out_dir, pipe_append);
      ctx.out << result.summary.to_json().dump(2) << '\n';
      return 0;
    };
  });

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Judge-vs-human calibration round");
  std::string cal_samples, cal_human, cal_prompt;
  std::optional<double> cal_min_r, cal_max_mae;
  bool cal_require = false;
  calibrate->add_option("--samples", cal_samples, "JSONL of {id, cot, edited_image}")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate->add_option("--human", cal_human, "CSV sample_id,s1,s2,s3,s4")
      ->required()
      ->check(CLI::ExistingFile);
  calibrate->add_option("--prompt", cal_prompt, "Judge prompt version (default from config)");
  calibrate->add_option("--min-r", cal_min_r);
  calibrate->add_option("--max-mae", cal_max_mae);
  calibrate->add_flag("--require-gate", cal_require, "Exit 1 when the gate fails");
  calibrate->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      const auto prompt = cal_prompt.empty() ? cfg.calibration.prompt_version : cal_prompt;
      cec::Gate gate{cal_min_r.value_or(cfg.calibration.min_r),
                     cal_max_mae.value_or(cfg.calibration.max_mae)};
      const auto judge = cfg.profile(cfg.calibration.judge, "judge", ctx.mock());
      const auto samples = cec::join_human_scores(cec::load_judged_samples(cal_samples),
                                                  cec::load_human_scores(cal_human));
      const auto report =
          cec::calibration_round(samples, judge, prompt, gate, cfg.calibration.parallelism);
      ctx.out << report.to_json().dump(2) << '\n';
      return cal_require && !report.gate_passed ? 1 : 0;
    };
  });

  // grpo
  auto* grpo = app.add_subcommand("grpo", "Group-relative advantage math");
  grpo->require_subcommand(1);
  std::string rewards;
  double eps = grpo::kDefaultEpsilon;
  auto* adv = grpo->add_subcommand("adv", "Advantages for one reward group");
  adv->add_option("--rewards", rewards, "Comma-separated rewards")->required();
  adv->add_option("--eps", eps, "Stabilizer added to the std");
  adv->callback([&] {
    action = [&] {
      const auto r = number_list(rewards);
      ctx.out << json{{"rewards", r}, {"advantages", grpo::group_advantages(r, eps)}}.dump() << '\n';
      return 0;
    };
  });
  std::size_t steps = 0;
  double fraction = 0.5;
  auto* mask = grpo->add_subcommand("mask", "Early-timestep optimization mask");
  mask->add_option("--steps", steps, "Total denoising steps")->required()->check(CLI::PositiveNumber);
  mask->add_option("--fraction", fraction, "Cutoff fraction in (0, 1]");
  mask->callback([&] {
    action = [&] {
      const auto m = grpo::make_mask(steps, fraction);
      std::string bits;
      for (bool b : m.mask) bits += b ? '1' : '0';
      ctx.out << json{{"total_steps", m.total_steps},
                      {"cutoff_fraction", m.cutoff_fraction},
                      {"true_count", m.true_count()},
                      {"mask", bits}}
                     .dump()
              << '\n';
      return 0;
    };
  });

  // info
  auto* info = app.add_subcommand("info", "Entropy, mutual information and granularity");
  info->require_subcommand(1);
  std::string dist_path, vars, left, right;
  auto* ent = info->add_subcommand("entropy", "H over a set of variables");
  ent->add_option("--dist", dist_path, "Joint distribution CSV")->required()->check(CLI::ExistingFile);
  ent->add_option("--vars", vars, "Comma-separated variable names (default: all)");
  ent->callback([&] {
    action = [&] {
      const auto d = info::JointDistribution::load_csv(dist_path);
      std::vector<std::string> names = csv_list(vars);
      if (names.empty()) {
        for (const auto& v : d.variables()) names.push_back(v.name);
      }
      ctx.out << json{{"vars", names}, {"entropy_bits", info::entropy(d, names)}}.dump() << '\n';
      return 0;
    };
  });
  auto* mi = info->add_subcommand("mi", "I(left; right)");
  mi->add_option("--dist", dist_path)->required()->check(CLI::ExistingFile);
  mi->add_option("--left", left)->required();
  mi->add_option("--right", right)->required();
  mi->callback([&] {
    action = [&] {
      const auto d = info::JointDistribution::load_csv(dist_path);
      ctx.out << json{{"mi_bits", info::mutual_information(d, csv_list(left), csv_list(right))}}.dump()
              << '\n';
      return 0;
    };
  });
  auto* gran = info->add_subcommand("granularity", "G = I(t; x) / H(t)");
  gran->add_option("--dist", dist_path)->required()->check(CLI::ExistingFile);
  gran->add_option("--t", left, "Task-space variables")->required();
  gran->add_option("--x", right, "Instruction variables")->required();
  gran->callback([&] {
    action = [&] {
      const auto d = info::JointDistribution::load_csv(dist_path);
      ctx.out << json{{"granularity", info::granularity(d, csv_list(left), csv_list(right))}}.dump()
              << '\n';
      return 0;
    };
  });
  std::uint64_t t1 = 0, t2 = 0, t3 = 0, classic = 0;
  auto* cx = info->add_subcommand("complexity", "Compare triplet and classic space sizes");
  cx->add_option("--t1", t1, "Task count")->required();
  cx->add_option("--t2", t2, "Target count")->required();
  cx->add_option("--t3", t3, "Ability count")->required();
  cx->add_option("--classic", classic, "Classic task space size")->required();
  cx->callback([&] {
    action = [&] {
      const auto v = info::triplet_complexity_check(t1, t2, t3, classic);
      ctx.out << json{{"holds", v.holds}, {"h_triplet", v.h_triplet}, {"h_classic", v.h_classic}}.dump()
              << '\n';
      return 0;
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmark scoring and table arithmetic");
  bench->require_subcommand(1);
  std::string manifest_path, edits_dir, method = "model", bench_name, csv_out;
  auto* brun = bench->add_subcommand("run", "Judge edited images and aggregate a score row");
  brun->add_option("--manifest", manifest_path, "Benchmark manifest JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  brun->add_option("--edits", edits_dir, "Directory of <sample_id>.<ext> edits")
      ->required()
      ->check(CLI::ExistingDirectory);
  brun->add_option("--method", method, "Row label");
  brun->add_option("--benchmark", bench_name, "21-task | imgedit (default: inferred)");
  brun->add_option("--csv", csv_out, "Also write the score row as CSV");
  std::string bench_judge;
  brun->add_option("--judge", bench_judge, "Judge profile (default: bench.judge)");
  brun->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      std::optional<bench::Benchmark> b;
      if (!bench_name.empty()) {
        b = bench::parse_benchmark(bench_name);
        if (!b) throw PreconditionError("unknown benchmark '" + bench_name + "'");
      }
      const auto manifest = bench::BenchManifest::load(manifest_path, b);
      const auto edits = bench::find_edits(manifest, edits_dir);
      const auto judge = cfg.profile(bench_judge.empty() ? cfg.bench.judge : bench_judge, "bench_judge", ctx.mock());
      const auto result = bench::run_bench(manifest, edits, judge, method, cfg.bench.parallelism);
      ctx.out << result.to_json().dump(2) << '\n';
      if (!csv_out.empty() && result.table) {
        std::ofstream f(csv_out);
        f << result.table->to_csv(3);
        if (!f) throw Error("cannot write " + csv_out);
      }
      return result.table && !result.unreliable ? 0 : 1;
    };
  });
  std::string fixtures = METACOT_PUBLISHED_TABLES_DIR;
  bool check = false;
  auto* tables = bench->add_subcommand("tables", "Recompute printed table arithmetic from fixtures");
  tables->add_option("--fixtures", fixtures, "Directory with bench21.csv, imgedit.csv, ...")
      ->check(CLI::ExistingDirectory);
  tables->add_flag("--check", check, "Exit 1 when a strict check fails");
  tables->callback([&] {
    action = [&] {
      const auto report = bench::check_published_tables(fixtures);
      for (const auto& l : report.lines) {
        ctx.out << (l.ok ? "ok   " : (l.strict ? "FAIL " : "note ")) << (l.strict ? "" : "[audit] ")
                << l.name << ": " << l.detail << '\n';
      }
      ctx.out << report.strict_count() << " strict checks, "
              << (report.strict_ok() ? "all passed" : "FAILURES") << "; " << report.discrepancies()
              << " audit discrepancies\n";
      return check && !report.strict_ok() ? 1 : 0;
    };
  });

  // serve
  auto* servecmd = app.add_subcommand("serve", "Host the annotation API");
  std::string serve_samples, serve_scores, serve_bind, serve_static;
  std::optional<int> serve_port;
  double serve_seconds = 0.0;
  servecmd->add_option("--samples", serve_samples, "Samples JSONL (default: store.samples)");
  servecmd->add_option("--scores", serve_scores, "Score log JSONL (default: store.score_log)");
  servecmd->add_option("--bind", serve_bind);
  servecmd->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
  servecmd->add_option("--static", serve_static, "UI bundle directory");
  servecmd->add_option("--for", serve_seconds, "Stop after this many seconds (0 = until signal)");
  servecmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      const auto samples_file = serve_samples.empty() ? cfg.store.samples : serve_samples;
      const auto scores_file = serve_scores.empty() ? cfg.store.score_log : serve_scores;
      auto loaded = serve::load_samples(samples_file);
      auto log = std::make_shared<serve::ScoreLog>(scores_file);
      serve::ServiceOptions opts;
      opts.prompt_version = cfg.calibration.prompt_version;
      opts.gate = {cfg.calibration.min_r, cfg.calibration.max_mae};
      auto service = std::make_shared<serve::AnnotationService>(
          std::move(loaded.samples), log, cfg.profile(cfg.calibration.judge, "judge", ctx.mock()),
          opts);
      serve::AnnotationServer server(service,
                                     serve_static.empty() ? cfg.serve.static_dir : serve_static);
      const auto bind = serve_bind.empty() ? cfg.serve.bind : serve_bind;
      const int port = server.start(bind, serve_port.value_or(cfg.serve.port));
      ctx.err << "serving " << bind << ":" << port << " (" << loaded.skipped
              << " records not presentable)\n";
      g_server.store(&server);
      auto prev_int = std::signal(SIGINT, on_signal);
      auto prev_term = std::signal(SIGTERM, on_signal);
      if (serve_seconds > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(serve_seconds));
        server.stop();
      }
      server.wait();
      g_server.store(nullptr);
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      return 0;
    };
  });

  // misc
  auto* sys = app.add_subcommand("sysinfo", "Build and kernel information");
  sys->callback([&] {
    action = [&] {
      ctx.out << json{{"version", std::string(version())},
                      {"kernels", std::string(kernels::isa_name(kernels::active_isa()))},
                      {"cpu_avx2", kernels::cpu_has_avx2()}}
                     .dump()
              << '\n';
      return 0;
    };
  });

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    if (mock_opt->count() > 0) g.mock = true;
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (!action) {
    err << app.help();
    return 2;
  }
  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace metacot::cli
