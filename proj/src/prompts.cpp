#include "feedloop/prompts.hpp"

#include <cstdlib>
#include <sstream>

#include "feedloop/errors.hpp"
#include "feedloop/util.hpp"

#ifndef FEEDLOOP_ASSET_DIR
#define FEEDLOOP_ASSET_DIR "assets"
#endif

namespace feedloop::prompts {

std::string asset_dir() {
  const char* env = std::getenv("FEEDLOOP_ASSETS");
  if (env != nullptr && *env != '\0') return env;
  return FEEDLOOP_ASSET_DIR;
}

std::string load_template(const std::string& name) {
  return util::read_text_file(asset_dir() + "/prompts/" + name);
}

std::string build_split_prompt(const std::string& tmpl, const std::string& question,
                               const std::string& answer) {
  std::string out = util::fill_placeholder(tmpl, "question", question);
  return util::fill_placeholder(std::move(out), "answer", answer);
}

std::string build_convert_prompt(const std::string& tmpl, const std::vector<std::string>& claims) {
  const std::string marker = "### Declarative sentences:";
  const std::size_t pos = tmpl.find(marker);
  if (pos == std::string::npos) {
    throw ConfigError("conversion template lacks the \"" + marker + "\" section");
  }
  std::ostringstream out;
  out << tmpl.substr(0, pos + marker.size());
  for (const auto& claim : claims) out << "\n- " << claim;
  out << '\n';
  return out.str();
}

std::string build_self_reward_prompt(const std::string& tmpl, const std::string& question,
                                     const std::string& answer) {
  std::string out = util::fill_placeholder(tmpl, "question", question);
  return util::fill_placeholder(std::move(out), "answer", answer);
}

std::string build_judge_prompt(const std::string& tmpl, const std::string& description,
                               const std::string& instruction, const std::string& response_1,
                               const std::string& response_2) {
  std::string out = util::fill_placeholder(tmpl, "description", description);
  out = util::fill_placeholder(std::move(out), "instruction", instruction);
  out = util::fill_placeholder(std::move(out), "response_1", response_1);
  return util::fill_placeholder(std::move(out), "response_2", response_2);
}

}  // namespace feedloop::prompts
