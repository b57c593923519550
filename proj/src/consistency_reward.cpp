#include "metacot/consistency_reward.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "metacot/kernels.hpp"
#include "metacot/prompts.hpp"
#include "metacot/text.hpp"

namespace metacot::cec {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

void HumanScoreSet::check() const {
  for (double s : scores) {
    if (!std::isfinite(s) || s < 0.0 || s > 10.0) {
      throw PreconditionError("human score " + text::format_double(s) + " for sample '" +
                              sample_id + "' is outside [0, 10]");
    }
  }
}

double aggregate_human(const std::array<double, 4>& scores) {
  std::array<double, 4> s = scores;
  std::sort(s.begin(), s.end());
  if (s[3] - s[0] < 3.0) return (s[0] + s[1] + s[2] + s[3]) / 4.0;
  // A minimal-range 3-subset is always contiguous in sorted order, and among
  // tied subsets a contiguous one has the largest mean.
  const double low_range = s[2] - s[0];
  const double high_range = s[3] - s[1];
  if (high_range <= low_range) return (s[1] + s[2] + s[3]) / 3.0;
  return (s[0] + s[1] + s[2]) / 3.0;
}

double extract_score(std::string_view reply, double lo, double hi) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    std::size_t start = i;
    const bool signed_start = (reply[i] == '-' || reply[i] == '+') && i + 1 < reply.size() &&
                              (is_digit(reply[i + 1]) || reply[i + 1] == '.') &&
                              (i == 0 || !is_alnum(reply[i - 1]));
    const bool dot_start = reply[i] == '.' && i + 1 < reply.size() && is_digit(reply[i + 1]);
    if (!is_digit(reply[i]) && !signed_start && !dot_start) continue;
    std::size_t end = start + (signed_start ? 1 : 0);
    while (end < reply.size() && is_digit(reply[end])) ++end;
    if (end + 1 < reply.size() && reply[end] == '.' && is_digit(reply[end + 1])) {
      ++end;
      while (end < reply.size() && is_digit(reply[end])) ++end;
    }
    std::string token(reply.substr(start, end - start));
    if (token.front() == '+') token.erase(0, 1);
    if (token.front() == '.') token.insert(0, "0");
    if (token.starts_with("-.")) token.insert(1, "0");
    const auto value = text::parse_double(token);
    if (!value) throw JudgeFormatError("unparseable number '" + token + "' in judge reply");
    if (*value < lo || *value > hi) {
      throw JudgeFormatError("judge score " + token + " outside [" + text::format_double(lo) +
                             ", " + text::format_double(hi) + "]");
    }
    return *value;
  }
  throw JudgeFormatError("no number in judge reply");
}

std::string judge_prompt_id(std::string_view prompt_version) {
  if (prompt_version.find('/') != std::string_view::npos || prompt_version.starts_with("file:")) {
    return std::string(prompt_version);
  }
  return "cec_judge/" + std::string(prompt_version);
}

gateway::ChatRequest judge_request(const cot::MetaCotDocument& cot,
                                   const gateway::ImageRef& edited_image,
                                   std::string_view prompt_version) {
  const auto tmpl = prompts::get(judge_prompt_id(prompt_version));
  const prompts::Vars vars = {{"cot", cot::serialize(cot)}};
  gateway::ChatRequest req;
  if (!tmpl.system.empty()) req.messages.push_back({"system", prompts::render(tmpl.system, vars), {}});
  req.messages.push_back({"user", prompts::render(tmpl.user, vars), {edited_image}});
  return req;
}

CecScore judge_score(const cot::MetaCotDocument& cot, const gateway::ImageRef& edited_image,
                     const gateway::GatewayProfile& profile, std::string_view prompt_version,
                     std::string sample_id) {
  if (edited_image.uri.empty()) throw PreconditionError("edited image reference is empty");
  const auto exchange = gateway::complete(profile, judge_request(cot, edited_image, prompt_version));
  CecScore score;
  score.value = extract_score(exchange.response);
  score.rationale = exchange.response;
  score.sample_id = std::move(sample_id);
  return score;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw PreconditionError("pearson: length mismatch");
  if (xs.size() < 2) throw PreconditionError("pearson: need at least 2 points");
  const double mx = kernels::mean(xs);
  const double my = kernels::mean(ys);
  const double sxx = kernels::sum_sq_dev(xs, mx);
  const double syy = kernels::sum_sq_dev(ys, my);
  if (sxx == 0.0 || syy == 0.0) throw UndefinedError("pearson: constant series");
  const double r = kernels::dot_centered(xs, ys, mx, my) / (std::sqrt(sxx) * std::sqrt(syy));
  return std::clamp(r, -1.0, 1.0);
}

double mae(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw PreconditionError("mae: length mismatch");
  if (xs.empty()) throw PreconditionError("mae: empty input");
  return kernels::sum_abs_diff(xs, ys) / static_cast<double>(xs.size());
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json j;
  j["status"] = status;
  j["pearson_r"] = pearson_r ? nlohmann::json(*pearson_r) : nlohmann::json(nullptr);
  j["mae"] = mae ? nlohmann::json(*mae) : nlohmann::json(nullptr);
  j["n_samples"] = n_samples;
  j["excluded"] = excluded;
  j["gate_passed"] = gate_passed;
  j["prompt_version"] = prompt_version;
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

CalibrationReport make_report(std::span<const double> judge, std::span<const double> consensus,
                              std::size_t excluded, std::string prompt_version, const Gate& gate) {
  CalibrationReport r;
  r.n_samples = judge.size();
  r.excluded = excluded;
  r.prompt_version = std::move(prompt_version);
  if (judge.size() < 2) {
    r.status = "insufficient data";
    r.detail = "need at least 2 scored samples";
    if (!judge.empty()) r.mae = mae(judge, consensus);
    return r;
  }
  r.mae = mae(judge, consensus);
  try {
    r.pearson_r = pearson(judge, consensus);
  } catch (const UndefinedError& e) {
    r.status = "undefined";
    r.detail = e.what();
    return r;
  }
  r.gate_passed = gate.passes(*r.pearson_r, *r.mae);
  return r;
}

CalibrationReport calibration_round(const std::vector<CalibrationSample>& samples,
                                    const gateway::GatewayProfile& profile,
                                    std::string_view prompt_version, const Gate& gate,
                                    std::size_t parallelism) {
  if (samples.size() < 2) throw PreconditionError("calibration needs at least 2 samples");
  for (const auto& s : samples) s.human.check();

  std::vector<std::optional<double>> judged(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) {
      try {
        judged[i] = judge_score(samples[i].cot, samples[i].edited_image, profile, prompt_version,
                                samples[i].sample_id)
                        .value;
      } catch (const JudgeFormatError&) {
        judged[i].reset();
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(parallelism, 1, samples.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (fatal) std::rethrow_exception(fatal);

  std::vector<double> judge_values;
  std::vector<double> consensus;
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!judged[i]) {
      ++excluded;
      continue;
    }
    judge_values.push_back(*judged[i]);
    consensus.push_back(aggregate_human(samples[i].human.scores));
  }
  if (judge_values.empty()) {
    throw CalibrationFailedError("every judge reply was unusable (" + std::to_string(excluded) +
                                 " samples)");
  }
  return make_report(judge_values, consensus, excluded, std::string(prompt_version), gate);
}

std::vector<HumanScoreSet> parse_human_scores(std::string_view csv, const std::string& source) {
  std::vector<HumanScoreSet> out;
  std::map<std::string, std::size_t, std::less<>> seen;
  const auto lines = text::split_lines(csv);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    const auto fields = text::split_trimmed(lines[i], ',');
    if (fields.size() != 5) throw FormatError(source, i + 1, "expected sample_id and 4 scores");
    HumanScoreSet set;
    set.sample_id = fields[0];
    bool numeric = true;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto v = text::parse_double(fields[k + 1]);
      if (!v) {
        numeric = false;
        break;
      }
      set.scores[k] = *v;
    }
    if (!numeric) {
      if (out.empty() && seen.empty()) continue;  // header row
      throw FormatError(source, i + 1, "non-numeric score");
    }
    try {
      set.check();
    } catch (const PreconditionError& e) {
      throw FormatError(source, i + 1, e.what());
    }
    if (!seen.emplace(set.sample_id, out.size()).second) {
      throw FormatError(source, i + 1, "duplicate sample_id '" + set.sample_id + "'");
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<HumanScoreSet> load_human_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open human scores file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_human_scores(ss.str(), path.string());
}

std::vector<JudgedSample> load_judged_samples(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error("cannot open samples file " + jsonl.string());
  std::vector<JudgedSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      JudgedSample s;
      s.id = j.at("id").get<std::string>();
      s.cot_text = j.at("cot").get<std::string>();
      auto parsed = cot::parse(s.cot_text);
      if (!parsed.ok()) throw FormatError("cot does not parse: " + parsed.describe());
      s.cot = std::move(*parsed.document);
      s.edited_image = gateway::image_ref_from_json(j.at("edited_image"));
      if (j.contains("source_image")) s.source_image = gateway::image_ref_from_json(j["source_image"]);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    } catch (const FormatError& e) {
      throw FormatError(jsonl.string(), lineno, e.what());
    }
  }
  return out;
}

std::vector<CalibrationSample> join_human_scores(const std::vector<JudgedSample>& samples,
                                                 const std::vector<HumanScoreSet>& human) {
  std::map<std::string, const HumanScoreSet*, std::less<>> by_id;
  for (const auto& h : human) by_id[h.sample_id] = &h;
  std::vector<CalibrationSample> out;
  for (const auto& s : samples) {
    const auto it = by_id.find(s.id);
    if (it == by_id.end()) throw PreconditionError("sample '" + s.id + "' has no human scores");
    out.push_back({s.id, s.cot, s.edited_image, *it->second});
  }
  return out;
}

}  // namespace metacot::cec
