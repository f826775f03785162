#include "cirgps/labels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace cirgps {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Line {
  std::vector<std::string> tokens;
  std::size_t line_no = 0;
};

std::vector<Line> capacitor_statements(std::string_view text) {
  std::vector<Line> out;
  bool last_was_cap = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::istringstream words(raw);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(lower(w));
    if (tokens.empty()) continue;
    const char head = tokens.front()[0];
    if (head == '*') continue;
    if (head == '+') {
      if (last_was_cap) {
        tokens.front().erase(0, 1);
        if (tokens.front().empty()) tokens.erase(tokens.begin());
        out.back().tokens.insert(out.back().tokens.end(), tokens.begin(), tokens.end());
      }
      continue;
    }
    last_was_cap = head == 'c';
    if (last_was_cap) out.push_back({std::move(tokens), line_no});
  }
  return out;
}

}  // namespace

std::string parent_node(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) return endpoint;
  return endpoint.substr(0, colon);
}

LabelSet parse_labels(std::string_view text, const LabelOptions& options) {
  const auto is_reference = [&](const std::string& node) {
    return std::find(options.reference_nodes.begin(), options.reference_nodes.end(), node) !=
           options.reference_nodes.end();
  };
  LabelSet set;
  for (const auto& st : capacitor_statements(text)) {
    if (st.tokens.size() != 4) {
      throw ParseError("malformed capacitor statement, expected 'C<name> <node1> <node2> <farads>'", st.line_no, 1);
    }
    double value = 0.0;
    if (!parse_si_number(st.tokens[3], value)) {
      throw ParseError("malformed capacitance '" + st.tokens[3] + "'", st.line_no, 1);
    }
    const std::string& a = st.tokens[1];
    const std::string& b = st.tokens[2];
    const bool ref_a = is_reference(a);
    const bool ref_b = is_reference(b);
    if (a == b || (ref_a && ref_b)) throw ParseError("capacitor '" + st.tokens[0] + "' couples a node to itself", st.line_no, 1);
    if (ref_a || ref_b) {
      if (value < 0.0) throw ParseError("negative ground capacitance", st.line_no, 1);
      set.ground.push_back({ref_b ? a : b, value});
    } else {
      if (!(value > 0.0)) throw ParseError("coupling capacitance must be positive", st.line_no, 1);
      set.coupling.push_back({a, b, value});
    }
  }
  return set;
}

std::vector<CouplingLabel> parse_coupling_labels(std::string_view text, const LabelOptions& options) {
  return parse_labels(text, options).coupling;
}

std::vector<GroundLabel> parse_ground_labels(std::string_view text, const LabelOptions& options) {
  return parse_labels(text, options).ground;
}

}  // namespace cirgps
