#include "cirgps/model.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "cirgps/encoding.hpp"

namespace cirgps {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

constexpr char kMagic[8] = {'C', 'I', 'R', 'G', 'P', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kGateEps = 1e-6;

}  // namespace

void ModelConfig::validate() const {
  if (d0 <= 0 || d_pe < 0 || layers < 0 || heads <= 0 || max_dist < 1) {
    throw ModelError("model widths, layer count, heads and max_dist must be positive");
  }
  if (hidden() % heads != 0) {
    throw ModelError(fmt::format("hidden width {} is not divisible by {} heads", hidden(), heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ModelError("dropout must be in [0, 1)");
  if (bn_momentum <= 0.0 || bn_momentum > 1.0) throw ModelError("bn_momentum must be in (0, 1]");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d0", d0},
          {"d_pe", d_pe},
          {"layers", layers},
          {"heads", heads},
          {"max_dist", max_dist},
          {"dropout", dropout},
          {"bn_momentum", bn_momentum},
          {"use_mpnn", use_mpnn},
          {"use_attention", use_attention},
          {"pe_trainable", pe_trainable}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d0 = j.at("d0").get<int>();
  c.d_pe = j.at("d_pe").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.max_dist = j.at("max_dist").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.use_mpnn = j.at("use_mpnn").get<bool>();
  c.use_attention = j.at("use_attention").get<bool>();
  c.pe_trainable = j.at("pe_trainable").get<bool>();
  c.validate();
  return c;
}

GraphBatch collate(std::span<const EnclosingSubgraph* const> samples, int max_dist,
                   const StatsNormalizer& stats_norm) {
  GraphBatch b;
  int total = 0;
  for (const auto* sg : samples) total += static_cast<int>(sg->num_nodes());
  b.stats.resize(total, kStatsDim);
  for (const auto* sg : samples) {
    const int base = b.offsets.back();
    const auto n = sg->num_nodes();
    if (sg->stats.rows() != static_cast<Eigen::Index>(n) || sg->stats.cols() != kStatsDim) {
      throw ModelError("subgraph stats do not match its node count");
    }
    const DspdTable dspd = clamp_distances(sg->dspd.size() == n ? sg->dspd : compute_dspd(*sg), max_dist);
    for (std::size_t i = 0; i < n; ++i) {
      b.node_types.push_back(static_cast<int>(sg->node_types[i]));
      b.dist_m.push_back(dspd.rows[i][0]);
      b.dist_n.push_back(dspd.rows[i][1]);
    }
    for (const auto& e : sg->edges) {
      b.edge_src.push_back(base + e.src);
      b.edge_dst.push_back(base + e.dst);
      b.edge_types.push_back(static_cast<int>(e.type));
    }
    const StatsMatrix rows = stats_norm.fitted() ? stats_norm.apply(sg->stats, sg->node_types) : sg->stats;
    b.stats.middleRows(base, static_cast<Eigen::Index>(n)) = rows;
    b.labels.push_back(sg->label);
    b.offsets.push_back(base + static_cast<int>(n));
  }
  return b;
}

GraphBatch collate(std::span<const EnclosingSubgraph> samples, int max_dist, const StatsNormalizer& stats_norm) {
  std::vector<const EnclosingSubgraph*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return collate(std::span<const EnclosingSubgraph* const>(ptrs), max_dist, stats_norm);
}

GpsModel::GpsModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.hidden();
  const int vocab = dspd_vocabulary(cfg_.max_dist);

  auto normal_init = [&](ad::Parameter& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.normal();
  };
  normal_init(add("embed.node", kNumNodeTypes, cfg_.d0));
  normal_init(add("embed.edge", kNumEdgeTypes, d));
  normal_init(add("embed.dspd_m", vocab, cfg_.d_pe));
  normal_init(add("embed.dspd_n", vocab, cfg_.d_pe));
  param("embed.dspd_m").trainable = cfg_.pe_trainable;
  param("embed.dspd_n").trainable = cfg_.pe_trainable;

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = fmt::format("layers.{}.", l);
    if (cfg_.use_mpnn) {
      for (int k = 1; k <= 5; ++k) init_linear(p + fmt::format("mpnn.{}", k), d, d, rng);
    }
    if (cfg_.use_attention) {
      for (const char* k : {"q", "k", "v", "o"}) init_linear(p + "attn." + k, d, d, rng);
    }
    init_linear(p + "mlp.1", d, 2 * d, rng);
    init_linear(p + "mlp.2", 2 * d, d, rng);
    for (const char* bn_name : {"bn_mpnn", "bn_attn", "bn_mlp"}) {
      if (std::string_view(bn_name) == "bn_mpnn" && !cfg_.use_mpnn) continue;
      if (std::string_view(bn_name) == "bn_attn" && !cfg_.use_attention) continue;
      const std::string b = p + bn_name;
      add(b + ".gamma", 1, d).value.setOnes();
      add(b + ".beta", 1, d);
      auto& rm = add(b + ".running_mean", 1, d);
      auto& rv = add(b + ".running_var", 1, d);
      rv.value.setOnes();
      rm.buffer = rv.buffer = true;
      rm.trainable = rv.trainable = false;
    }
  }

  init_linear("stats_head.net", kNetStatsDim, d, rng);
  init_linear("stats_head.device", kDeviceStatsDim, d, rng);
  normal_init(add("stats_head.pin.embed", kNumPinCodes, d));
  init_linear("task_head.1", d, d, rng);
  init_linear("task_head.2", d, 1, rng);
}

ad::Parameter& GpsModel::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name) != 0) throw ModelError("duplicate parameter " + name);
  auto p = std::make_unique<ad::Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->zero_grad();
  auto* raw = p.get();
  params_.push_back(std::move(p));
  index_[name] = raw;
  return *raw;
}

// Weights stored as in x out; uniform(-1/sqrt(in), 1/sqrt(in)) like common
// framework defaults.
void GpsModel::init_linear(const std::string& prefix, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto& w = add(prefix + ".w", in, out);
  auto& b = add(prefix + ".b", 1, out);
  for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < b.value.size(); ++i) b.value.data()[i] = rng.uniform(-bound, bound);
}

ad::Parameter& GpsModel::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter " + name);
  return *it->second;
}

const ad::Parameter& GpsModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter " + name);
  return *it->second;
}

std::vector<ad::Parameter*> GpsModel::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const ad::Parameter*> GpsModel::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t GpsModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!p->buffer) n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

bool GpsModel::is_head_parameter(const std::string& name) {
  return name.starts_with("stats_head.") || name.starts_with("task_head.");
}

void GpsModel::set_freeze(FreezeMode mode) {
  freeze_ = mode;
  for (auto& p : params_) {
    if (p->buffer) continue;
    bool trainable = mode == FreezeMode::None || is_head_parameter(p->name);
    if (p->name.starts_with("embed.dspd_") && !cfg_.pe_trainable) trainable = false;
    p->trainable = trainable;
  }
}

void GpsModel::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void GpsModel::zero_task_head() {
  param("task_head.2.w").value.setZero();
  param("task_head.2.b").value.setZero();
}

Var GpsModel::linear(Tape& t, Var x, const std::string& prefix) {
  return ad::add_bias(ad::matmul(x, t.parameter(param(prefix + ".w"))), t.parameter(param(prefix + ".b")));
}

Var GpsModel::bn(Tape& t, Var x, const std::string& prefix, bool training) {
  ad::BatchNormState state;
  state.running_mean = &param(prefix + ".running_mean").value;
  state.running_var = &param(prefix + ".running_var").value;
  state.momentum = cfg_.bn_momentum;
  return ad::batch_norm(x, t.parameter(param(prefix + ".gamma")), t.parameter(param(prefix + ".beta")), state,
                        training);
}

Var GpsModel::forward(Tape& t, const GraphBatch& batch, bool training, Rng* rng, ActivationTrace* trace) {
  const int n = batch.num_nodes();
  const int ne = batch.num_edges();
  const double drop = training ? cfg_.dropout : 0.0;
  if (drop > 0.0 && rng == nullptr) throw ModelError("training forward with dropout needs an rng");
  const int vocab = dspd_vocabulary(cfg_.max_dist);
  for (int i = 0; i < n; ++i) {
    if (batch.node_types[i] < 0 || batch.node_types[i] >= kNumNodeTypes) throw ModelError("node type out of range");
    if (batch.dist_m[i] < 0 || batch.dist_m[i] >= vocab || batch.dist_n[i] < 0 || batch.dist_n[i] >= vocab) {
      throw ModelError("DSPD index out of vocabulary");
    }
  }
  for (int k = 0; k < ne; ++k) {
    if (batch.edge_types[k] < 0 || batch.edge_types[k] >= kNumEdgeTypes) throw ModelError("edge type out of range");
  }

  // X^0 = D_0 | D_1 | Embed(X), E^0 = Embed(E)
  std::array<Var, 3> parts = {ad::gather_rows(t.parameter(param("embed.dspd_m")), batch.dist_m),
                              ad::gather_rows(t.parameter(param("embed.dspd_n")), batch.dist_n),
                              ad::gather_rows(t.parameter(param("embed.node")), batch.node_types)};
  Var x = ad::concat_cols(parts);
  Var e = ad::gather_rows(t.parameter(param("embed.edge")), batch.edge_types);
  if (trace != nullptr) {
    *trace = ActivationTrace{};
    trace->x.push_back(x.value());
    trace->e.push_back(e.value());
  }

  // Both directions of every undirected edge: rows [0, ne) carry src -> dst,
  // rows [ne, 2ne) carry dst -> src. recv is the aggregating endpoint.
  std::vector<int> recv(2 * static_cast<std::size_t>(ne));
  std::vector<int> send(2 * static_cast<std::size_t>(ne));
  std::vector<int> edge_of(2 * static_cast<std::size_t>(ne));
  for (int k = 0; k < ne; ++k) {
    recv[k] = batch.edge_dst[k];
    send[k] = batch.edge_src[k];
    recv[ne + k] = batch.edge_src[k];
    send[ne + k] = batch.edge_dst[k];
    edge_of[k] = edge_of[ne + k] = k;
  }

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = fmt::format("layers.{}.", l);
    std::vector<Var> branches;
    if (cfg_.use_mpnn) {
      Var xm;
      Var e_next = e;
      Var self = linear(t, x, p + "mpnn.1");
      if (ne > 0) {
        Var e_hat = ad::add(ad::add(ad::gather_rows(linear(t, e, p + "mpnn.3"), edge_of),
                                    ad::gather_rows(linear(t, x, p + "mpnn.4"), recv)),
                            ad::gather_rows(linear(t, x, p + "mpnn.5"), send));
        Var sig = ad::sigmoid(e_hat);
        Var denom = ad::add_scalar(ad::gather_rows(ad::scatter_add_rows(sig, recv, n), recv), kGateEps);
        Var gate = ad::div(sig, denom);
        Var msg = ad::mul(gate, ad::gather_rows(linear(t, x, p + "mpnn.2"), send));
        xm = ad::relu(ad::add(self, ad::scatter_add_rows(msg, recv, n)));
        // Edge update: residual plus the direction-averaged gate logits.
        Var e_sym = ad::scale(ad::scatter_add_rows(e_hat, edge_of, ne), 0.5);
        e_next = ad::add(e, ad::relu(e_sym));
      } else {
        xm = ad::relu(self);
      }
      if (drop > 0.0) xm = ad::dropout(xm, drop, *rng);
      branches.push_back(bn(t, ad::add(x, xm), p + "bn_mpnn", training));
      e = e_next;
    }
    if (cfg_.use_attention) {
      std::vector<Matrix> probe;
      Var q = linear(t, x, p + "attn.q");
      Var k = linear(t, x, p + "attn.k");
      Var v = linear(t, x, p + "attn.v");
      Var xa = linear(t, ad::segment_attention(q, k, v, batch.offsets, cfg_.heads, trace ? &probe : nullptr),
                      p + "attn.o");
      if (drop > 0.0) xa = ad::dropout(xa, drop, *rng);
      branches.push_back(bn(t, ad::add(x, xa), p + "bn_attn", training));
      if (trace != nullptr) trace->attention.push_back(std::move(probe));
    }
    Var h = branches.empty() ? x : branches.front();
    for (std::size_t i = 1; i < branches.size(); ++i) h = ad::add(h, branches[i]);
    Var mlp = linear(t, ad::relu(linear(t, h, p + "mlp.1")), p + "mlp.2");
    x = bn(t, ad::add(h, mlp), p + "bn_mlp", training);
    if (trace != nullptr) {
      trace->x.push_back(x.value());
      trace->e.push_back(e.value());
    }
  }

  // Circuit statistics head: C rows by node type, X_H = mean(X^L + C).
  std::vector<int> net_rows;
  std::vector<int> dev_rows;
  std::vector<int> pin_rows;
  std::vector<int> pin_codes;
  for (int i = 0; i < n; ++i) {
    switch (static_cast<NodeType>(batch.node_types[i])) {
      case NodeType::Net: net_rows.push_back(i); break;
      case NodeType::Device: dev_rows.push_back(i); break;
      case NodeType::Pin: {
        const double code = batch.stats(i, 0);
        if (code < 0 || code >= kNumPinCodes || code != std::floor(code)) throw ModelError("pin code out of vocabulary");
        pin_rows.push_back(i);
        pin_codes.push_back(static_cast<int>(code));
        break;
      }
    }
  }
  Var c = t.constant(Matrix::Zero(n, cfg_.hidden()));
  if (!net_rows.empty()) {
    Matrix xs(static_cast<Eigen::Index>(net_rows.size()), kNetStatsDim);
    for (std::size_t r = 0; r < net_rows.size(); ++r) xs.row(static_cast<Eigen::Index>(r)) = batch.stats.row(net_rows[r]);
    c = ad::add(c, ad::scatter_add_rows(linear(t, t.constant(std::move(xs)), "stats_head.net"), net_rows, n));
  }
  if (!dev_rows.empty()) {
    Matrix xs(static_cast<Eigen::Index>(dev_rows.size()), kDeviceStatsDim);
    for (std::size_t r = 0; r < dev_rows.size(); ++r) {
      xs.row(static_cast<Eigen::Index>(r)) = batch.stats.row(dev_rows[r]).head(kDeviceStatsDim);
    }
    c = ad::add(c, ad::scatter_add_rows(linear(t, t.constant(std::move(xs)), "stats_head.device"), dev_rows, n));
  }
  if (!pin_rows.empty()) {
    c = ad::add(c, ad::scatter_add_rows(ad::gather_rows(t.parameter(param("stats_head.pin.embed")), pin_codes),
                                        pin_rows, n));
  }
  Var pooled = ad::segment_mean(ad::add(x, c), batch.offsets);
  Var logits = linear(t, ad::relu(linear(t, pooled, "task_head.1")), "task_head.2");
  if (trace != nullptr) {
    trace->pooled = pooled.value();
    trace->logits = logits.value();
  }
  return logits;
}

std::vector<double> GpsModel::predict(const GraphBatch& batch) {
  Tape tape;
  const Var logits = forward(tape, batch, false, nullptr);
  std::vector<double> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double z = logits.value()(i, 0);
    out[static_cast<std::size_t>(i)] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ModelError("truncated checkpoint");
  return v;
}

std::string get_string(std::ifstream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 32)) throw ModelError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw ModelError("truncated checkpoint");
  return s;
}

}  // namespace

void GpsModel::save(const std::filesystem::path& path, const nlohmann::json& manifest,
                    const std::string& rng_state) const {
  nlohmann::json m = manifest;
  m["model"] = cfg_.to_json();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, m.dump());
  put_string(out, rng_state);
  put<std::uint64_t>(out, params_.size());
  for (const auto& p : params_) {
    put_string(out, p->name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  if (!out) throw ModelError("failed writing checkpoint " + path.string());
}

namespace {

struct CheckpointHeader {
  nlohmann::json manifest;
  std::string rng_state;
};

CheckpointHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ModelError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw ModelError(fmt::format("unsupported checkpoint version {}", version));
  CheckpointHeader h;
  h.manifest = nlohmann::json::parse(get_string(in));
  h.rng_state = get_string(in);
  return h;
}

}  // namespace

void GpsModel::read_tensors(std::ifstream& in) {
  const auto count = get<std::uint64_t>(in);
  if (count != params_.size()) {
    throw ModelError(fmt::format("checkpoint has {} tensors, model expects {}", count, params_.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(in);
    auto it = index_.find(name);
    if (it == index_.end()) throw ModelError("checkpoint tensor " + name + " is not part of the model");
    auto& p = *it->second;
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (static_cast<Eigen::Index>(rows) != p.value.rows() || static_cast<Eigen::Index>(cols) != p.value.cols()) {
      throw ModelError(fmt::format("shape mismatch for {}: checkpoint {}x{}, model {}x{}", name, rows, cols,
                                   p.value.rows(), p.value.cols()));
    }
    if (!in.read(reinterpret_cast<char*>(p.value.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())))) {
      throw ModelError("truncated checkpoint");
    }
  }
}

GpsModel::Loaded GpsModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  auto header = read_header(in, path);
  Loaded loaded;
  loaded.model = std::make_unique<GpsModel>(ModelConfig::from_json(header.manifest.at("model")), 0);
  loaded.model->read_tensors(in);
  loaded.manifest = std::move(header.manifest);
  loaded.rng_state = std::move(header.rng_state);
  return loaded;
}

void GpsModel::load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  read_header(in, path);
  read_tensors(in);
}

std::uint64_t tensor_hash(const ad::Parameter& p) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::array<std::int64_t, 2> shape = {p.value.rows(), p.value.cols()};
  feed(shape.data(), sizeof(shape));
  feed(p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  return h;
}

}  // namespace cirgps
