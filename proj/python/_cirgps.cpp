#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cirgps/config.hpp"
#include "cirgps/encoding.hpp"
#include "cirgps/metrics.hpp"
#include "cirgps/pipeline.hpp"
#include "cirgps/synth.hpp"

namespace py = pybind11;
using namespace cirgps;

namespace {

// Reports cross the boundary as JSON text; the Python side decodes them.
template <typename F>
std::string released(F&& f) {
  py::gil_scoped_release nogil;
  return f().dump();
}

std::vector<std::array<int, 2>> dspd(int num_nodes, const std::vector<std::pair<int, int>>& edges, int m, int n) {
  if (num_nodes < 1) throw std::invalid_argument("num_nodes must be positive");
  EnclosingSubgraph sg;
  for (int i = 0; i < num_nodes; ++i) {
    sg.nodes.push_back(i);
    sg.names.push_back(std::to_string(i));
    sg.node_types.push_back(NodeType::Net);
  }
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) throw std::out_of_range("edge endpoint out of range");
    sg.edges.push_back({a, b, EdgeType::NetNet});
  }
  if (m < 0 || n < 0 || m >= num_nodes || n >= num_nodes) throw std::out_of_range("anchor out of range");
  sg.anchor_m = m;
  sg.anchor_n = n;
  return compute_dspd(sg).rows;
}

}  // namespace

PYBIND11_MODULE(_cirgps, m) {
  m.doc() = "Circuit graph link prediction and capacitance regression";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  py::class_<Config>(m, "Config")
      .def(py::init<>())
      .def("load_file", &Config::load_file)
      .def("load_text", &Config::load_text, py::arg("text"), py::arg("origin") = "<text>")
      .def("apply_override", &Config::apply_override)
      .def("set", &Config::set)
      .def("get", &Config::get)
      .def("has", &Config::has)
      .def("dump", &Config::dump);

  m.def("convert", [](const Config& c, const std::filesystem::path& netlist, const std::filesystem::path& labels,
                      const std::filesystem::path& out) { return released([&] { return run_convert(c, netlist, labels, out); }); });
  m.def("sample", [](const Config& c, const std::filesystem::path& graph, const std::filesystem::path& out) {
    return released([&] { return run_sample(c, graph, out); });
  });
  m.def("pretrain", [](const Config& c, const std::filesystem::path& data, const std::filesystem::path& out) {
    return released([&] { return run_pretrain(c, data, out); });
  });
  m.def("finetune", [](const Config& c, const std::filesystem::path& data, const std::filesystem::path& out) {
    return released([&] { return run_finetune(c, data, out); });
  });
  m.def("evaluate", [](const Config& c, const std::filesystem::path& ckpt, const std::filesystem::path& data,
                       const std::string& split, const std::filesystem::path& out) {
    return released([&] { return run_eval(c, ckpt, data, split, out); });
  });
  m.def("predict", [](const Config& c, const std::filesystem::path& ckpt, const std::filesystem::path& data,
                      const std::string& split, const std::filesystem::path& out) {
    return released([&] { return run_predict(c, ckpt, data, split, out); });
  });
  m.def("synth", [](const Config& c, const std::filesystem::path& out) { return released([&] { return run_synth(c, out); }); });

  m.def("synth_text", [](const Config& c) {
    const auto circuit = generate_synthetic_circuit(c.synth(), c.seed());
    return std::make_pair(circuit.netlist_text, circuit.label_text);
  }, "Synthetic (netlist, labels) text without touching the file system.");

  m.def("classification_metrics", [](const std::vector<double>& scores, const std::vector<double>& labels,
                                     double threshold) { return to_json(classification_metrics(scores, labels, threshold)).dump(); },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
  m.def("regression_metrics", [](const std::vector<double>& pred, const std::vector<double>& target) {
    return to_json(regression_metrics(pred, target)).dump();
  });
  m.def("roc_auc", [](const std::vector<double>& scores, const std::vector<double>& labels) { return roc_auc(scores, labels); });
  m.def("dspd", &dspd, py::arg("num_nodes"), py::arg("edges"), py::arg("m"), py::arg("n"),
        "Hop distances of every node to anchors m and n; -1 when unreachable.");
}
