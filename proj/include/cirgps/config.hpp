#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cirgps/model.hpp"
#include "cirgps/sampler.hpp"
#include "cirgps/synth.hpp"
#include "cirgps/train.hpp"

namespace cirgps {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat dotted-key configuration with a fixed key set. Files use
//   [section]
//   key = value      # comment
// and every key must already exist in the defaults; so must every override.
class Config {
 public:
  Config();  // all defaults

  void load_file(const std::filesystem::path& path);
  void load_text(std::string_view text, const std::string& origin = "<text>");
  // "section.key=value"
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string str(const std::string& key) const { return get(key); }
  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;

  // Resolved values in file syntax, grouped by section.
  std::string dump() const;

  ModelConfig model() const;
  SampleConfig sample() const;
  TrainConfig train() const;
  SynthConfig synth() const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("run.seed")); }
  // nullopt for "none" (train from scratch). head and all need
  // finetune.checkpoint.
  std::optional<FreezeMode> finetune_mode() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cirgps
