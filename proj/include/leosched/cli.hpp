#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "leosched/agents.hpp"
#include "leosched/bench.hpp"
#include "leosched/mdp.hpp"

namespace leosched::cli {

enum class ValueKind { kInt, kReal, kBool, kString };

struct KeySpec {
  std::string key;
  ValueKind kind;
  std::string fallback;
  std::string help;
  /// Paths and worker counts do not change results and stay out of the hash.
  bool hashed = true;
};

/// Every accepted configuration key with its default.
const std::vector<KeySpec>& schema();

/// Merged key-value configuration. Values are stored in canonical text form
/// (numbers re-printed with 17 significant digits) so equal settings hash
/// equally however they were written.
class RunConfig {
 public:
  RunConfig();

  /// Plain-text `key = value` lines; `#` starts a comment. Unknown keys and
  /// malformed values raise ValidationError.
  void merge_file(const std::string& path);
  void merge_text(const std::string& text, const std::string& origin = "config");
  void set(const std::string& key, const std::string& value);

  int get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get(const std::string& key) const;

  /// Sorted `key=value` lines over hashed keys.
  std::string canonical() const;
  /// 16 hex digits of FNV-1a over canonical().
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

mdp::TaskParams task_params(const RunConfig& cfg);
bench::Scenario scenario(const RunConfig& cfg);
agents::TrainConfig train_config(const RunConfig& cfg);
agents::NetShape net_shape(const RunConfig& cfg);
solvers::AdmmOptions admm_options(const RunConfig& cfg);
solvers::BnbOptions bnb_options(const RunConfig& cfg);

/// Loads a checkpoint written by `train` into a critic of the matching shape.
agents::MetaCritic load_critic(const std::string& prefix);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace leosched::cli
