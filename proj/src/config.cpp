#include "cirgps/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace cirgps {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

}  // namespace

Config::Config() {
  const ModelConfig m;
  const SampleConfig s;
  const TrainConfig t;
  const SynthConfig y;
  values_ = {
      {"run.seed", "0"},
      {"run.workers", "1"},
      {"run.task", std::string(task_name(s.task))},

      {"data.hops", std::to_string(s.hops)},
      {"data.fraction", fmt_real(s.fraction)},
      {"data.split.train", fmt_real(s.split_ratios[0])},
      {"data.split.valid", fmt_real(s.split_ratios[1])},
      {"data.split.test", fmt_real(s.split_ratios[2])},
      {"data.max_subgraph_nodes", std::to_string(s.max_subgraph_nodes)},
      {"data.balance", s.balance ? "true" : "false"},
      {"data.drop_target_link", s.drop_target_link ? "true" : "false"},
      {"data.norm.lo", fmt_real(s.normalizer.lo())},
      {"data.norm.hi", fmt_real(s.normalizer.hi())},

      {"model.d0", std::to_string(m.d0)},
      {"model.d_pe", std::to_string(m.d_pe)},
      {"model.layers", std::to_string(m.layers)},
      {"model.heads", std::to_string(m.heads)},
      {"model.max_dist", std::to_string(m.max_dist)},
      {"model.dropout", fmt_real(m.dropout)},
      {"model.bn_momentum", fmt_real(m.bn_momentum)},
      {"model.mpnn", m.use_mpnn ? "gatedgcn" : "none"},
      {"model.attention", m.use_attention ? "transformer" : "none"},
      {"model.pe.trainable", m.pe_trainable ? "true" : "false"},

      {"optim.lr", fmt_real(t.optim.lr)},
      {"optim.weight_decay", fmt_real(t.optim.weight_decay)},
      {"optim.beta1", fmt_real(t.optim.beta1)},
      {"optim.beta2", fmt_real(t.optim.beta2)},
      {"optim.warmup_epochs", std::to_string(t.optim.warmup_epochs)},
      {"optim.min_lr", fmt_real(t.optim.min_lr)},

      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.patience", std::to_string(t.patience)},

      {"finetune.mode", "all"},
      {"finetune.checkpoint", ""},

      {"synth.cells", std::to_string(y.cells)},
      {"synth.family", std::to_string(y.family)},
      {"synth.inputs", std::to_string(y.inputs)},
      {"synth.locality", std::to_string(y.locality)},
      {"synth.radius_net_net", fmt_real(y.radius_net_net)},
      {"synth.radius_pin_net", fmt_real(y.radius_pin_net)},
      {"synth.radius_pin_pin", fmt_real(y.radius_pin_pin)},
      {"synth.pin_keep", fmt_real(y.pin_keep)},
      {"synth.decay", fmt_real(y.decay)},
      {"synth.noise", fmt_real(y.noise)},
  };
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

void Config::load_text(std::string_view text, const std::string& origin) {
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("{}:{}: malformed section header", origin, line_no));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key = value", origin, line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!has(full)) throw ConfigError(fmt::format("{}:{}: unknown config key '{}'", origin, line_no, full));
    values_[full] = trim(line.substr(eq + 1));
  }
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  if (!has(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

double Config::real(const std::string& key) const {
  const auto& v = get(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError(fmt::format("{} = '{}' is not a number", key, v));
  return d;
}

long long Config::integer(const std::string& key) const {
  const auto& v = get(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{} = '{}' is not an integer", key, v));
  }
  return out;
}

bool Config::boolean(const std::string& key) const {
  std::string v = get(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{} = '{}' is not a boolean", key, get(key)));
}

std::string Config::dump() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", sec);
      section = sec;
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
  }
  return out;
}

ModelConfig Config::model() const {
  ModelConfig m;
  m.d0 = static_cast<int>(integer("model.d0"));
  m.d_pe = static_cast<int>(integer("model.d_pe"));
  m.layers = static_cast<int>(integer("model.layers"));
  m.heads = static_cast<int>(integer("model.heads"));
  m.max_dist = static_cast<int>(integer("model.max_dist"));
  m.dropout = real("model.dropout");
  m.bn_momentum = real("model.bn_momentum");
  const auto& mpnn = get("model.mpnn");
  const auto& attn = get("model.attention");
  if (mpnn != "gatedgcn" && mpnn != "none") throw ConfigError("model.mpnn must be gatedgcn or none");
  if (attn != "transformer" && attn != "none") throw ConfigError("model.attention must be transformer or none");
  m.use_mpnn = mpnn == "gatedgcn";
  m.use_attention = attn == "transformer";
  m.pe_trainable = boolean("model.pe.trainable");
  try {
    m.validate();
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  return m;
}

SampleConfig Config::sample() const {
  SampleConfig s;
  try {
    s.task = task_from_name(get("run.task"));
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("run.task '{}' is not link, edge_reg or node_reg", get("run.task")));
  }
  s.hops = static_cast<int>(integer("data.hops"));
  s.fraction = real("data.fraction");
  s.split_ratios = {real("data.split.train"), real("data.split.valid"), real("data.split.test")};
  s.seed = seed();
  s.max_subgraph_nodes = static_cast<std::size_t>(integer("data.max_subgraph_nodes"));
  s.balance = boolean("data.balance");
  s.drop_target_link = boolean("data.drop_target_link");
  s.workers = static_cast<int>(integer("run.workers"));
  const double lo = real("data.norm.lo");
  const double hi = real("data.norm.hi");
  if (!(lo > 0.0 && lo < hi)) throw ConfigError("normalization bounds need 0 < lo < hi");
  s.normalizer = TargetNormalizer(lo, hi);
  if (s.hops < 1) throw ConfigError("data.hops must be at least 1");
  if (s.workers < 1) throw ConfigError("run.workers must be at least 1");
  return s;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.epochs = static_cast<int>(integer("train.epochs"));
  t.batch_size = static_cast<int>(integer("train.batch_size"));
  t.patience = static_cast<int>(integer("train.patience"));
  t.seed = seed();
  t.optim.lr = real("optim.lr");
  t.optim.weight_decay = real("optim.weight_decay");
  t.optim.beta1 = real("optim.beta1");
  t.optim.beta2 = real("optim.beta2");
  t.optim.warmup_epochs = static_cast<int>(integer("optim.warmup_epochs"));
  t.optim.min_lr = real("optim.min_lr");
  if (t.epochs < 1 || t.batch_size < 1 || t.patience < 1) {
    throw ConfigError("train.epochs, train.batch_size and train.patience must be positive");
  }
  if (t.optim.lr <= 0.0) throw ConfigError("optim.lr must be positive");
  return t;
}

SynthConfig Config::synth() const {
  SynthConfig y;
  y.cells = static_cast<int>(integer("synth.cells"));
  y.family = static_cast<int>(integer("synth.family"));
  y.inputs = static_cast<int>(integer("synth.inputs"));
  y.locality = static_cast<int>(integer("synth.locality"));
  y.radius_net_net = real("synth.radius_net_net");
  y.radius_pin_net = real("synth.radius_pin_net");
  y.radius_pin_pin = real("synth.radius_pin_pin");
  y.pin_keep = real("synth.pin_keep");
  y.decay = real("synth.decay");
  y.noise = real("synth.noise");
  return y;
}

std::optional<FreezeMode> Config::finetune_mode() const {
  const auto& mode = get("finetune.mode");
  if (mode == "none") return std::nullopt;
  if (mode != "head" && mode != "all") throw ConfigError(fmt::format("finetune.mode '{}' must be none, head or all", mode));
  if (get("finetune.checkpoint").empty()) throw ConfigError(fmt::format("finetune.mode {} needs finetune.checkpoint", mode));
  return mode == "head" ? FreezeMode::HeadOnly : FreezeMode::None;
}

}  // namespace cirgps
