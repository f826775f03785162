#include "cirgps/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

namespace cirgps {
namespace {

struct Token {
  std::string text;
  std::size_t line = 0;
  std::size_t column = 0;
};

struct Statement {
  std::vector<Token> tokens;
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Splits one physical line into tokens; '=' is always a token of its own.
void tokenize_line(std::string_view line, std::size_t line_no, std::size_t start_col,
                   std::vector<Token>& out) {
  std::size_t i = start_col;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '=') {
      out.push_back({"=", line_no, i + 1});
      ++i;
      continue;
    }
    const std::size_t begin = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '=') ++i;
    out.push_back({lower(line.substr(begin, i - begin)), line_no, begin + 1});
  }
}

std::vector<Statement> split_statements(std::string_view text) {
  std::vector<Statement> statements;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = end + 1;

    std::size_t first = 0;
    while (first < line.size() && std::isspace(static_cast<unsigned char>(line[first]))) ++first;
    if (first == line.size()) {
      if (end == text.size()) break;
      continue;
    }
    if (line[first] == '*') continue;
    if (line[first] == '+') {
      if (statements.empty()) throw ParseError("continuation line without a preceding statement", line_no, first + 1);
      tokenize_line(line, line_no, first + 1, statements.back().tokens);
      continue;
    }
    Statement st;
    tokenize_line(line, line_no, first, st.tokens);
    statements.push_back(std::move(st));
    if (end == text.size()) break;
  }
  return statements;
}

struct PendingRef {
  std::size_t subckt;
  std::size_t instance;
  Token where;
};

class Parser {
 public:
  Netlist run(std::string_view text) {
    for (auto& st : split_statements(text)) statement(st);
    if (open_ >= 0) {
      throw ParseError("missing .ends for subcircuit '" + netlist_.subcircuits[open_].name + "'", open_line_, 1);
    }
    // The implicit top-level circuit always goes last so printing is stable.
    if (implicit_top_ >= 0 && static_cast<std::size_t>(implicit_top_) + 1 != netlist_.subcircuits.size()) {
      const auto idx = static_cast<std::size_t>(implicit_top_);
      auto def = std::move(netlist_.subcircuits[idx]);
      netlist_.subcircuits.erase(netlist_.subcircuits.begin() + static_cast<std::ptrdiff_t>(idx));
      netlist_.subcircuits.push_back(std::move(def));
      for (auto& ref : pending_) {
        if (ref.subckt == idx) {
          ref.subckt = netlist_.subcircuits.size() - 1;
        } else if (ref.subckt > idx) {
          --ref.subckt;
        }
      }
    }
    resolve_references();
    choose_top();
    return std::move(netlist_);
  }

 private:
  void statement(const Statement& st) {
    const Token& head = st.tokens.front();
    if (head.text[0] == '.') {
      card(st);
      return;
    }
    SubcktDef& def = current_subckt(head);
    Instance inst = instance(st);
    for (const auto& other : def.instances) {
      if (other.name == inst.name) throw ParseError("duplicate instance name '" + inst.name + "'", head.line, head.column);
    }
    if (inst.kind == InstanceKind::SubcktRef) {
      pending_.push_back({static_cast<std::size_t>(&def - netlist_.subcircuits.data()), def.instances.size(),
                          st.tokens.front()});
    }
    def.instances.push_back(std::move(inst));
  }

  void card(const Statement& st) {
    const Token& head = st.tokens.front();
    if (head.text == ".subckt") {
      if (open_ >= 0) throw ParseError("nested .subckt is not supported", head.line, head.column);
      if (st.tokens.size() < 2) throw ParseError(".subckt needs a name", head.line, head.column);
      SubcktDef def;
      def.name = st.tokens[1].text;
      check_identifier(st.tokens[1]);
      if (def.name == kImplicitTop && implicit_top_ >= 0) {
        throw ParseError("subcircuit '" + def.name + "' clashes with top-level statements", head.line, head.column);
      }
      if (netlist_.find(def.name) != nullptr) {
        throw ParseError("duplicate subcircuit '" + def.name + "'", st.tokens[1].line, st.tokens[1].column);
      }
      for (std::size_t i = 2; i < st.tokens.size(); ++i) {
        const Token& t = st.tokens[i];
        if (t.text == "=") throw ParseError("subcircuit parameters are not supported", t.line, t.column);
        check_identifier(t);
        if (std::find(def.ports.begin(), def.ports.end(), t.text) != def.ports.end()) {
          throw ParseError("duplicate port '" + t.text + "'", t.line, t.column);
        }
        def.ports.push_back(t.text);
      }
      netlist_.subcircuits.push_back(std::move(def));
      open_ = static_cast<int>(netlist_.subcircuits.size()) - 1;
      open_line_ = head.line;
    } else if (head.text == ".ends") {
      if (open_ < 0) throw ParseError(".ends without .subckt", head.line, head.column);
      if (st.tokens.size() > 2) throw ParseError("unexpected tokens after .ends", st.tokens[2].line, st.tokens[2].column);
      if (st.tokens.size() == 2 && st.tokens[1].text != netlist_.subcircuits[open_].name) {
        throw ParseError(".ends name does not match '" + netlist_.subcircuits[open_].name + "'", st.tokens[1].line,
                         st.tokens[1].column);
      }
      open_ = -1;
    } else if (head.text == ".end") {
      if (st.tokens.size() > 1) throw ParseError("unexpected tokens after .end", st.tokens[1].line, st.tokens[1].column);
    } else {
      throw ParseError("unknown card '" + head.text + "'", head.line, head.column);
    }
  }

  SubcktDef& current_subckt(const Token& where) {
    if (open_ >= 0) return netlist_.subcircuits[open_];
    if (implicit_top_ < 0) {
      if (netlist_.find(kImplicitTop) != nullptr) {
        throw ParseError("top-level statements clash with subcircuit '" + std::string(kImplicitTop) + "'", where.line,
                         where.column);
      }
      SubcktDef def;
      def.name = std::string(kImplicitTop);
      netlist_.subcircuits.push_back(std::move(def));
      implicit_top_ = static_cast<int>(netlist_.subcircuits.size()) - 1;
    }
    return netlist_.subcircuits[implicit_top_];
  }

  static void check_identifier(const Token& t) {
    for (char c : t.text) {
      if (c == ':' || c == '/' || c == '=' || c == '(' || c == ')') {
        throw ParseError("invalid character in identifier '" + t.text + "'", t.line, t.column);
      }
    }
  }

  static double number(const Token& t) {
    double v = 0.0;
    if (!parse_si_number(t.text, v)) throw ParseError("malformed number '" + t.text + "'", t.line, t.column);
    return v;
  }

  Instance instance(const Statement& st) {
    // Separate positional tokens from key=value parameters.
    std::vector<Token> pos;
    Instance inst;
    const auto& tk = st.tokens;
    for (std::size_t i = 0; i < tk.size(); ++i) {
      if (i + 1 < tk.size() && tk[i + 1].text == "=") {
        if (i + 2 >= tk.size() || tk[i + 2].text == "=") {
          throw ParseError("parameter '" + tk[i].text + "' has no value", tk[i].line, tk[i].column);
        }
        if (inst.params.count(tk[i].text) != 0) {
          throw ParseError("duplicate parameter '" + tk[i].text + "'", tk[i].line, tk[i].column);
        }
        const double v = number(tk[i + 2]);
        if (!(v >= 0.0)) throw ParseError("parameter '" + tk[i].text + "' must be non-negative", tk[i + 2].line, tk[i + 2].column);
        inst.params[tk[i].text] = v;
        i += 2;
        continue;
      }
      if (tk[i].text == "=") throw ParseError("unexpected '='", tk[i].line, tk[i].column);
      if (!inst.params.empty()) throw ParseError("positional token after parameters", tk[i].line, tk[i].column);
      pos.push_back(tk[i]);
    }
    const Token& head = pos.front();
    for (const auto& t : pos) check_identifier(t);
    inst.name = head.text;
    const auto expect = [&](std::size_t n, const char* form) {
      if (pos.size() != n) throw ParseError(std::string("expected '") + form + "'", head.line, head.column);
    };
    switch (head.text[0]) {
      case 'm':
        expect(6, "M<name> d g s b <model> [params]");
        inst.kind = InstanceKind::Mosfet;
        inst.terminals = {{"d", pos[1].text}, {"g", pos[2].text}, {"s", pos[3].text}, {"b", pos[4].text}};
        inst.model = pos[5].text;
        if (inst.model[0] != 'n' && inst.model[0] != 'p') {
          throw ParseError("cannot infer MOS polarity from model '" + inst.model + "'", pos[5].line, pos[5].column);
        }
        break;
      case 'r':
      case 'c':
        expect(4, head.text[0] == 'r' ? "R<name> a b <value> [params]" : "C<name> a b <value> [params]");
        inst.kind = head.text[0] == 'r' ? InstanceKind::Resistor : InstanceKind::Capacitor;
        inst.terminals = {{"1", pos[1].text}, {"2", pos[2].text}};
        inst.value = number(pos[3]);
        if (!(inst.value >= 0.0)) throw ParseError("device value must be non-negative", pos[3].line, pos[3].column);
        break;
      case 'd':
        expect(4, "D<name> a b <model>");
        inst.kind = InstanceKind::Diode;
        inst.terminals = {{"1", pos[1].text}, {"2", pos[2].text}};
        inst.model = pos[3].text;
        break;
      case 'x':
        if (pos.size() < 2) throw ParseError("expected 'X<name> <nets...> <subckt>'", head.line, head.column);
        inst.kind = InstanceKind::SubcktRef;
        inst.model = pos.back().text;
        // Port names are filled in once the referenced subcircuit is known.
        for (std::size_t i = 1; i + 1 < pos.size(); ++i) inst.terminals.emplace_back("", pos[i].text);
        break;
      default:
        throw ParseError("unknown card '" + head.text + "'", head.line, head.column);
    }
    return inst;
  }

  void resolve_references() {
    for (const auto& ref : pending_) {
      Instance& inst = netlist_.subcircuits[ref.subckt].instances[ref.instance];
      const SubcktDef* target = netlist_.find(inst.model);
      if (target == nullptr) {
        throw ParseError("undefined subcircuit '" + inst.model + "'", ref.where.line, ref.where.column);
      }
      if (target->ports.size() != inst.terminals.size()) {
        throw ParseError(fmt::format("instance '{}' connects {} nets but '{}' has {} ports", inst.name,
                                     inst.terminals.size(), target->name, target->ports.size()),
                         ref.where.line, ref.where.column);
      }
      for (std::size_t i = 0; i < target->ports.size(); ++i) inst.terminals[i].first = target->ports[i];
    }
  }

  void choose_top() {
    if (implicit_top_ >= 0) {
      netlist_.top_name = std::string(kImplicitTop);
      return;
    }
    std::set<std::string> referenced;
    for (const auto& def : netlist_.subcircuits) {
      for (const auto& inst : def.instances) {
        if (inst.kind == InstanceKind::SubcktRef) referenced.insert(inst.model);
      }
    }
    for (auto it = netlist_.subcircuits.rbegin(); it != netlist_.subcircuits.rend(); ++it) {
      if (referenced.count(it->name) == 0) {
        netlist_.top_name = it->name;
        return;
      }
    }
    if (!netlist_.subcircuits.empty()) netlist_.top_name = netlist_.subcircuits.back().name;
  }

  Netlist netlist_;
  int open_ = -1;
  std::size_t open_line_ = 0;
  int implicit_top_ = -1;
  std::vector<PendingRef> pending_;
};

std::string number_text(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

std::vector<std::string> SubcktDef::internal_nets() const {
  std::vector<std::string> nets;
  std::set<std::string> seen(ports.begin(), ports.end());
  for (const auto& inst : instances) {
    for (const auto& [terminal, net] : inst.terminals) {
      if (seen.insert(net).second) nets.push_back(net);
    }
  }
  return nets;
}

const SubcktDef* Netlist::find(std::string_view name) const {
  for (const auto& def : subcircuits) {
    if (def.name == name) return &def;
  }
  return nullptr;
}

bool parse_si_number(std::string_view token, double& out) {
  if (token.empty()) return false;
  std::size_t split = token.size();
  double scale = 1.0;
  switch (std::tolower(static_cast<unsigned char>(token.back()))) {
    case 'f': scale = 1e-15; break;
    case 'p': scale = 1e-12; break;
    case 'n': scale = 1e-9; break;
    case 'u': scale = 1e-6; break;
    case 'm': scale = 1e-3; break;
    case 'k': scale = 1e3; break;
    default: break;
  }
  if (scale != 1.0) --split;
  if (split == 0) return false;
  const std::string_view digits = token.substr(0, split);
  std::size_t begin = digits.front() == '+' ? 1 : 0;
  const char* first = digits.data() + begin;
  const char* last = digits.data() + digits.size();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return false;
  // Scaling by the exact decimal factor keeps "1f" == 1e-15 bit-for-bit.
  if (scale != 1.0) {
    const std::string scaled = std::string(digits.substr(begin)) + (scale == 1e-15  ? "e-15"
                                                                    : scale == 1e-12 ? "e-12"
                                                                    : scale == 1e-9  ? "e-9"
                                                                    : scale == 1e-6  ? "e-6"
                                                                    : scale == 1e-3  ? "e-3"
                                                                                     : "e3");
    // Mantissas that already carry an exponent cannot take another one.
    if (digits.find_first_of("eE") != std::string_view::npos) {
      v *= scale;
    } else {
      const auto r = std::from_chars(scaled.data(), scaled.data() + scaled.size(), v);
      if (r.ec != std::errc()) return false;
    }
  }
  if (!std::isfinite(v)) return false;
  out = v;
  return true;
}

Netlist parse_netlist(std::string_view text) { return Parser().run(text); }

std::string to_spice(const Netlist& netlist) {
  std::string out;
  const auto emit_instance = [&out](const Instance& inst) {
    out += inst.name;
    for (const auto& [terminal, net] : inst.terminals) out += " " + net;
    switch (inst.kind) {
      case InstanceKind::Mosfet:
      case InstanceKind::Diode:
      case InstanceKind::SubcktRef:
        out += " " + inst.model;
        break;
      case InstanceKind::Resistor:
      case InstanceKind::Capacitor:
        out += " " + number_text(inst.value);
        break;
    }
    for (const auto& [key, value] : inst.params) out += " " + key + "=" + number_text(value);
    out += "\n";
  };
  for (std::size_t i = 0; i < netlist.subcircuits.size(); ++i) {
    const auto& def = netlist.subcircuits[i];
    const bool implicit = def.name == kImplicitTop && def.ports.empty() && i + 1 == netlist.subcircuits.size() &&
                          netlist.top_name == kImplicitTop;
    if (implicit) {
      for (const auto& inst : def.instances) emit_instance(inst);
      continue;
    }
    out += ".subckt " + def.name;
    for (const auto& p : def.ports) out += " " + p;
    out += "\n";
    for (const auto& inst : def.instances) emit_instance(inst);
    out += ".ends " + def.name + "\n";
  }
  out += ".end\n";
  return out;
}

std::string_view device_type_name(DeviceType t) {
  switch (t) {
    case DeviceType::Nmos: return "nmos";
    case DeviceType::Pmos: return "pmos";
    case DeviceType::Resistor: return "resistor";
    case DeviceType::Capacitor: return "capacitor";
    case DeviceType::Diode: return "diode";
  }
  return "?";
}

bool is_transistor(DeviceType t) { return t == DeviceType::Nmos || t == DeviceType::Pmos; }

namespace {

class Flattener {
 public:
  explicit Flattener(const Netlist& netlist) : netlist_(netlist) {}

  FlatCircuit run(std::string_view top) {
    const SubcktDef* def = netlist_.find(top);
    if (def == nullptr) throw NetlistError("top subcircuit '" + std::string(top) + "' not found");
    std::vector<int> port_nets;
    for (const auto& p : def->ports) {
      const int id = net(p);
      flat_.nets[id].is_port = true;
      flat_.nets[id].port_count += 1;
      port_nets.push_back(id);
    }
    expand(*def, "", port_nets);
    return std::move(flat_);
  }

 private:
  int net(const std::string& path) {
    auto [it, inserted] = net_index_.try_emplace(path, static_cast<int>(flat_.nets.size()));
    if (inserted) flat_.nets.push_back({path, false, 0});
    return it->second;
  }

  int resolve(const SubcktDef& def, const std::string& prefix, const std::vector<int>& port_nets,
              const std::string& local) {
    if (local == "0") return net("0");
    for (std::size_t i = 0; i < def.ports.size(); ++i) {
      if (def.ports[i] == local) return port_nets[i];
    }
    return net(prefix + local);
  }

  void expand(const SubcktDef& def, const std::string& prefix, const std::vector<int>& port_nets) {
    if (std::find(stack_.begin(), stack_.end(), def.name) != stack_.end()) {
      std::string chain;
      for (const auto& s : stack_) chain += s + " -> ";
      throw NetlistError("instantiation cycle: " + chain + def.name);
    }
    stack_.push_back(def.name);
    for (const auto& inst : def.instances) {
      if (inst.kind == InstanceKind::SubcktRef) {
        const SubcktDef* child = netlist_.find(inst.model);
        if (child == nullptr) throw NetlistError("undefined subcircuit '" + inst.model + "'");
        if (child->ports.size() != inst.terminals.size()) {
          throw NetlistError("port count mismatch on instance '" + prefix + inst.name + "'");
        }
        std::vector<int> child_ports;
        for (const auto& [terminal, local] : inst.terminals) {
          const int id = resolve(def, prefix, port_nets, local);
          flat_.nets[id].port_count += 1;
          child_ports.push_back(id);
        }
        expand(*child, prefix + inst.name + "/", child_ports);
        continue;
      }
      FlatDevice dev;
      dev.path = prefix + inst.name;
      dev.model = inst.model;
      dev.value = inst.value;
      dev.params = inst.params;
      switch (inst.kind) {
        case InstanceKind::Mosfet: dev.type = inst.model[0] == 'p' ? DeviceType::Pmos : DeviceType::Nmos; break;
        case InstanceKind::Resistor: dev.type = DeviceType::Resistor; break;
        case InstanceKind::Capacitor: dev.type = DeviceType::Capacitor; break;
        case InstanceKind::Diode: dev.type = DeviceType::Diode; break;
        case InstanceKind::SubcktRef: break;
      }
      const int device_id = static_cast<int>(flat_.devices.size());
      for (std::size_t t = 0; t < inst.terminals.size(); ++t) {
        dev.terminals.push_back(inst.terminals[t].first);
        const int id = resolve(def, prefix, port_nets, inst.terminals[t].second);
        flat_.pins.push_back({device_id, static_cast<int>(t), id});
      }
      flat_.devices.push_back(std::move(dev));
    }
    stack_.pop_back();
  }

  const Netlist& netlist_;
  FlatCircuit flat_;
  std::unordered_map<std::string, int> net_index_;
  std::vector<std::string> stack_;
};

}  // namespace

FlatCircuit flatten(const Netlist& netlist, std::string_view top) { return Flattener(netlist).run(top); }

std::size_t count_primitive_instances(const Netlist& netlist, std::string_view top) {
  std::function<std::size_t(std::string_view, int)> count = [&](std::string_view name, int depth) -> std::size_t {
    if (depth > static_cast<int>(netlist.subcircuits.size())) throw NetlistError("instantiation cycle");
    const SubcktDef* def = netlist.find(name);
    if (def == nullptr) throw NetlistError("undefined subcircuit '" + std::string(name) + "'");
    std::size_t n = 0;
    for (const auto& inst : def->instances) {
      n += inst.kind == InstanceKind::SubcktRef ? count(inst.model, depth + 1) : 1;
    }
    return n;
  };
  return count(top, 0);
}

}  // namespace cirgps
