#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "ude/schema.hpp"

namespace ude {

struct DatasetStats {
  std::size_t n_dialogs = 0;
  double mean_turns_per_dialog = 0.0;
  std::size_t n_eval_turns = 0;
  bool any_multi_metric = false;
  bool any_on_policy = false;

  nlohmann::ordered_json to_json() const;
  bool operator==(const DatasetStats&) const = default;
};

using AdapterFn =
    std::function<std::vector<Dialog>(const std::filesystem::path&, const nlohmann::json&)>;

// Name -> loader table. Adapters turn raw benchmark files into lists of valid
// Dialogs; load() enforces validity and dialog_id uniqueness on the way out.
class AdapterRegistry {
 public:
  void register_adapter(const std::string& id, AdapterFn loader);
  bool has(const std::string& id) const;
  std::vector<std::string> ids() const;

  // Options understood by every built-in adapter:
  //   strict (bool, default false) - fail on the first bad record instead of
  //   scanning the whole file and reporting all of them at the end.
  std::vector<Dialog> load(const std::string& id, const std::filesystem::path& source_path,
                           const nlohmann::json& options = nlohmann::json::object()) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, AdapterFn> adapters_;
};

// Registry preloaded with the built-in adapters:
//   unified_jsonl, chat_transcript, final_question, onpolicy_instructions, rule_code
AdapterRegistry& builtin_adapters();

DatasetStats compute_stats(const std::vector<Dialog>& dialogs);

}  // namespace ude
