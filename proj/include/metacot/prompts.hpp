#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

// Versioned prompt templates. Placeholders are written {{name}}.
namespace metacot::prompts {

struct Template {
  std::string id;
  std::string system;
  std::string user;
};

/// Built-in template by id ("cec_judge/v3"), or a template file when the id
/// has the form "file:<path>". Template files hold a "[system]" section and a
/// "[user]" section. Throws Error for unknown ids.
Template get(std::string_view id);
std::vector<std::string> builtin_ids();

using Vars = std::map<std::string, std::string, std::less<>>;
std::string render(std::string_view tmpl, const Vars& vars);

}  // namespace metacot::prompts
