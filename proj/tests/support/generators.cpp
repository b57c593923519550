#include "generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>

#include "metacot/digest.hpp"
#include "metacot/text.hpp"

namespace gen {

using namespace metacot;

std::array<double, 4> score_set(Gen& g) {
  std::array<double, 4> s{};
  const int mode = g.integer(0, 9);
  for (auto& v : s) {
    if (mode < 6) {
      v = g.integer(0, 10);
    } else if (mode < 8) {
      v = g.integer(0, 20) / 2.0;
    } else {
      v = g.real(0.0, 10.0);
    }
  }
  return s;
}

std::vector<double> real_vector(Gen& g, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = g.real(lo, hi);
  return v;
}

std::vector<double> reward_group(Gen& g, double p_equal) {
  const std::size_t n = static_cast<std::size_t>(g.integer(2, 64));
  std::vector<double> r(n);
  if (g.coin(p_equal)) {
    const double c = g.real(-5.0, 5.0);
    for (auto& x : r) x = c;
    return r;
  }
  const double scale = std::pow(10.0, g.integer(-2, 2));
  for (auto& x : r) x = g.coin(0.3) ? g.integer(0, 10) * scale : g.real(-1.0, 1.0) * scale;
  // guarantee at least two distinct values
  if (std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; })) r[0] += scale;
  return r;
}

oracle::Matrix joint_table(Gen& g, std::size_t rows, std::size_t cols) {
  oracle::Matrix m(rows, std::vector<double>(cols, 0.0));
  double total = 0.0;
  const double sparsity = g.real(0.0, 0.6);
  for (auto& row : m) {
    for (auto& v : row) {
      v = g.coin(sparsity) ? 0.0 : g.real(0.0, 1.0);
      total += v;
    }
  }
  if (total == 0.0) {
    m[g.index(rows)][g.index(cols)] = 1.0;
    return m;
  }
  for (auto& row : m) {
    for (auto& v : row) v /= total;
  }
  return m;
}

std::string descriptor(Gen& g, bool allow_comma) {
  static const std::string alpha = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  static const std::string inner = " -()'";
  std::string s;
  const int len = g.integer(1, 16);
  for (int i = 0; i < len; ++i) {
    if (i > 0 && i + 1 < len && g.coin(0.2)) {
      if (allow_comma && g.coin(0.3)) {
        s += ',';
      } else {
        s += inner[g.index(inner.size())];
      }
    } else {
      s += alpha[g.index(alpha.size())];
    }
  }
  return std::string(text::trim(s));
}

cot::MetaCotDocument cot_document(Gen& g) {
  cot::MetaCotDocument d;
  if (g.coin(0.7)) {
    d.summary.mode = cot::SummaryMode::MetaTaskSummary;
    std::vector<MetaTask> metas;
    for (MetaTask m : kAllMetaTasks) {
      if (g.coin(0.4)) metas.push_back(m);
    }
    if (metas.empty()) metas.push_back(kAllMetaTasks[g.index(kAllMetaTasks.size())]);
    d.summary.meta_tasks = metas;
  } else {
    d.summary.mode = cot::SummaryMode::TaskSummary;
    const auto tasks = all_task_types();
    d.summary.task = tasks[g.index(tasks.size())];
  }
  const int n_targets = g.integer(1, 4);
  for (int i = 0; i < n_targets; ++i) d.summary.targets.push_back(descriptor(g, false));
  const int n_abilities = g.integer(0, 3);
  for (int i = 0; i < n_abilities; ++i) d.summary.abilities.push_back(descriptor(g, false));

  const int n_lines = g.integer(1, 4);
  std::vector<std::string> lines;
  for (int i = 0; i < n_lines; ++i) {
    std::string line = descriptor(g, true);
    if (g.coin(0.2)) line = "Note: " + line + " [sic]";
    if (g.coin(0.2)) line += " | keep going: yes";
    lines.push_back(line);
  }
  d.thinking = text::join(lines, "\n");

  const int n_entries = g.integer(1, 6);
  for (int i = 0; i < n_entries; ++i) {
    // the index suffix keeps targets unique
    const std::string target = descriptor(g, true) + " " + std::to_string(i);
    const bool edit = i == 0 || g.coin(0.5);
    if (edit) {
      std::string how = descriptor(g, true);
      if (g.coin(0.3)) how += ": make it (much) brighter";
      d.traversal.push_back(cot::TraversalEntry::edit(
          target, kAllMetaTasks[g.index(kAllMetaTasks.size())], how));
    } else {
      d.traversal.push_back(cot::TraversalEntry::keep(target));
    }
  }
  // move the guaranteed Edit entry to a random slot
  std::swap(d.traversal[0], d.traversal[g.index(d.traversal.size())]);
  return d;
}

// ---- pipeline fixture ----

namespace {

struct Family {
  const char* pattern;  // %s receives the record token
};

const std::vector<Family>& families() {
  static const std::vector<Family> f = {
      {"Remove the cup %s from the table"},
      {"Add a lamp %s to the desk"},
      {"Replace the car %s with a bicycle"},
      {"Render the photo %s in watercolor style"},
      {"Change the color of the ball %s to blue"},
  };
  return f;
}

std::string token(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%03zu", i);
  return buf;
}

std::string line_after(const std::string& text, const std::string& label) {
  const auto pos = text.find(label);
  if (pos == std::string::npos) return {};
  const auto start = pos + label.size();
  const auto end = text.find('\n', start);
  return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::string make_cot(const std::string& tok, MetaTask edit_as, const std::string& summary_tasks) {
  return "[SUMMARY]\nmode: meta-task\ntasks: " + summary_tasks + "\ntargets: object " + tok +
         "\nabilities: Localization\n[THINKING]\nLocate object " + tok +
         " and apply the edit.\n[TRAVERSAL]\n- target: object " + tok + " | action: EDIT(" +
         std::string(to_string(edit_as)) + ") | how: edit object " + tok +
         "\n- target: background | action: KEEP\n";
}

}  // namespace

std::optional<pipeline::ReasonCode> expected_reason(Inject k) {
  using R = pipeline::ReasonCode;
  switch (k) {
    case Inject::None: return std::nullopt;
    case Inject::EmptyInstruction: return R::EmptyInstruction;
    case Inject::Unclassifiable: return R::Unclassifiable;
    case Inject::GatewayDown: return R::Gateway;
    case Inject::TypeMismatch: return R::TypeMismatch;
    case Inject::JudgeFormat: return R::JudgeFormat;
    case Inject::CotUnparseable: return R::CotUnparseable;
    case Inject::CotInvalid: return R::CotInvalid;
    case Inject::Misaligned: return R::Misaligned;
  }
  return std::nullopt;
}

std::map<std::size_t, Inject> default_schedule(std::size_t n) {
  const std::vector<Inject> kinds = {Inject::EmptyInstruction, Inject::Unclassifiable,
                                     Inject::GatewayDown,      Inject::TypeMismatch,
                                     Inject::JudgeFormat,      Inject::CotUnparseable,
                                     Inject::CotInvalid,       Inject::Misaligned};
  std::map<std::size_t, Inject> s;
  std::size_t k = 0;
  for (std::size_t i = 3; i < n && k < 2 * kinds.size(); i += 3, ++k) s[i] = kinds[k % kinds.size()];
  return s;
}

PipelineFixture pipeline_fixture(std::size_t n, const std::map<std::size_t, Inject>& schedule) {
  PipelineFixture fx;
  auto by_token = std::make_shared<std::map<std::string, Inject>>();
  for (std::size_t i = 0; i < n; ++i) {
    const auto tok = token(i);
    const auto it = schedule.find(i);
    const Inject inj = it == schedule.end() ? Inject::None : it->second;
    pipeline::SampleRecord r;
    r.id = "rec-" + tok;
    const std::string src = "images/" + tok + "_src.png";
    const std::string dst = "images/" + tok + "_dst.png";
    r.source_image = {src, "sha256:" + sha256_hex(src)};
    r.target_image = {dst, "sha256:" + sha256_hex(dst)};
    if (inj == Inject::EmptyInstruction) {
      r.instruction = "   ";
    } else if (inj == Inject::Unclassifiable) {
      r.instruction = "Make it pop " + tok;
    } else {
      char buf[128];
      std::snprintf(buf, sizeof buf, families()[i % families().size()].pattern, tok.c_str());
      r.instruction = buf;
    }
    fx.records.push_back(std::move(r));
    fx.injected.push_back(inj);
    (*by_token)[tok] = inj;
  }

  fx.backend = std::make_shared<gateway::MockBackend>();
  fx.backend->set_responder([by_token](const gateway::ChatRequest& req) -> std::optional<std::string> {
    const std::string text = req.flat_text();
    static const std::regex tok_re("r[0-9]{3}");
    std::smatch m;
    if (!std::regex_search(text, m, tok_re)) return std::nullopt;
    const std::string tok = m.str();
    const auto it = by_token->find(tok);
    const Inject inj = it == by_token->end() ? Inject::None : it->second;

    if (text.find("Reply with one JSON object and nothing else") != std::string::npos) {
      return std::string("I am not sure what this instruction asks for.");
    }
    if (text.find("Does the instruction belong") != std::string::npos) {
      if (inj == Inject::GatewayDown) return std::nullopt;
      if (inj == Inject::TypeMismatch) return std::string("NO");
      if (inj == Inject::JudgeFormat) return std::string("maybe, hard to say");
      return std::string("YES, it does.");
    }
    if (text.find("Write the Meta-CoT now.") != std::string::npos) {
      const auto admissible = text::split_trimmed(line_after(text, "Admissible meta-tasks: "), ',');
      std::vector<MetaTask> metas;
      for (const auto& a : admissible) {
        if (auto mt = parse_meta_task(a)) metas.push_back(*mt);
      }
      if (metas.empty()) return std::nullopt;
      if (inj == Inject::CotUnparseable) {
        return "[SUMMARY]\nmode: meta-task\ntasks: " + std::string(to_string(metas[0])) +
               "\ntargets: object " + tok + "\nabilities: Localization\n[THINKING]\nno traversal\n";
      }
      if (inj == Inject::CotInvalid) {
        MetaTask bad = MetaTask::CameraMotion;
        for (MetaTask c : kAllMetaTasks) {
          if (std::find(metas.begin(), metas.end(), c) == metas.end()) {
            bad = c;
            break;
          }
        }
        return make_cot(tok, bad, std::string(to_string(bad)));
      }
      return make_cot(tok, metas[0], std::string(to_string(metas[0])));
    }
    if (text.find("how faithfully") != std::string::npos) {
      return std::string(inj == Inject::Misaligned ? "3" : "9");
    }
    return std::nullopt;
  });
  return fx;
}

}  // namespace gen
