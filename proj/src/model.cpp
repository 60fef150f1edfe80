#include "goal/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "goal/errors.hpp"

namespace goal {

namespace {

void add_bias(Mat& m, std::span<const double> bias) {
  for (std::size_t j = 0; j < m.cols(); ++j) {
    auto c = m.col(j);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += bias[i];
  }
}

std::vector<double> row_sums(const Mat& m) {
  std::vector<double> s(m.rows(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    auto c = m.col(j);
    for (std::size_t i = 0; i < c.size(); ++i) s[i] += c[i];
  }
  return s;
}

bool finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

std::size_t MlpParams::input_dim() const {
  return g_layers.empty() ? 0 : g_layers.front().weight.cols();
}

std::size_t MlpParams::embed_dim() const {
  return g_layers.empty() ? 0 : g_layers.back().weight.rows();
}

std::size_t MlpParams::classes() const { return h_weight.rows(); }

void MlpParams::validate() const {
  if (g_layers.empty()) throw DimensionError("MlpParams: transformation has no layers");
  for (std::size_t l = 0; l < g_layers.size(); ++l) {
    const auto& layer = g_layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw DimensionError("MlpParams: bias of layer " + std::to_string(l) + " has wrong length");
    }
    if (l > 0 && layer.weight.cols() != g_layers[l - 1].weight.rows()) {
      throw DimensionError("MlpParams: layer " + std::to_string(l) + " does not chain");
    }
    if (!layer.weight.all_finite() || !finite(layer.bias)) {
      throw PreconditionError("MlpParams: layer " + std::to_string(l) + " has non-finite values");
    }
  }
  if (h_weight.cols() != embed_dim() || h_bias.size() != h_weight.rows()) {
    throw DimensionError("MlpParams: classifier does not match embedding dimension");
  }
  if (!h_weight.all_finite() || !finite(h_bias)) {
    throw PreconditionError("MlpParams: classifier has non-finite values");
  }
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& layer : g_layers) {
    z.g_layers.push_back({Mat(layer.weight.rows(), layer.weight.cols()),
                          std::vector<double>(layer.bias.size(), 0.0)});
  }
  z.h_weight = Mat(h_weight.rows(), h_weight.cols());
  z.h_bias.assign(h_bias.size(), 0.0);
  return z;
}

MlpParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.embed_dim == 0 || arch.classes == 0) {
    throw PreconditionError("init_params: dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  auto layer = [&](std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer l{Mat(out, in), std::vector<double>(out)};
    for (double& w : l.weight.data()) w = dist(rng);
    for (double& b : l.bias) b = dist(rng);
    return l;
  };
  MlpParams p;
  std::size_t in = arch.input_dim;
  for (std::size_t width : arch.hidden) {
    p.g_layers.push_back(layer(in, width));
    in = width;
  }
  p.g_layers.push_back(layer(in, arch.embed_dim));
  DenseLayer h = layer(arch.embed_dim, arch.classes);
  p.h_weight = std::move(h.weight);
  p.h_bias = std::move(h.bias);
  return p;
}

std::vector<TensorView> tensors(MlpParams& p) {
  std::vector<TensorView> out;
  for (std::size_t l = 0; l < p.g_layers.size(); ++l) {
    auto& layer = p.g_layers[l];
    const std::string base = "g." + std::to_string(l);
    out.push_back({base + ".weight", {layer.weight.rows(), layer.weight.cols()}, layer.weight.data()});
    out.push_back({base + ".bias", {layer.bias.size()}, layer.bias});
  }
  out.push_back({"h.weight", {p.h_weight.rows(), p.h_weight.cols()}, p.h_weight.data()});
  out.push_back({"h.bias", {p.h_bias.size()}, p.h_bias});
  return out;
}

std::vector<std::span<const double>> tensor_values(const MlpParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& layer : p.g_layers) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
  }
  out.emplace_back(p.h_weight.data());
  out.emplace_back(p.h_bias);
  return out;
}

// ---------------------------------------------------------------------------
// Forward

Mat softmax(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    auto in = logits.col(j);
    auto out = p.col(j);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = std::exp(in[i] - mx);
      sum += out[i];
    }
    for (double& x : out) x /= sum;
  }
  return p;
}

ForwardTrace forward(const MlpParams& params, const Mat& x) {
  if (x.rows() != params.input_dim()) {
    throw DimensionError("forward: input has " + std::to_string(x.rows()) + " rows, model expects " +
                         std::to_string(params.input_dim()));
  }
  ForwardTrace t;
  t.act.push_back(x);
  for (std::size_t l = 0; l < params.g_layers.size(); ++l) {
    const auto& layer = params.g_layers[l];
    Mat pre = matmul(layer.weight, t.act.back());
    add_bias(pre, layer.bias);
    Mat a = pre;
    if (l + 1 < params.g_layers.size()) {
      for (double& v : a.data()) v = std::max(v, 0.0);
    }
    t.pre.push_back(std::move(pre));
    t.act.push_back(std::move(a));
  }
  t.logits = matmul(params.h_weight, t.z());
  add_bias(t.logits, params.h_bias);
  t.probs = softmax(t.logits);
  return t;
}

Mat embed(const MlpParams& params, const Mat& x) {
  if (x.rows() != params.input_dim()) throw DimensionError("embed: input dimension mismatch");
  Mat a = x;
  for (std::size_t l = 0; l < params.g_layers.size(); ++l) {
    const auto& layer = params.g_layers[l];
    Mat pre = matmul(layer.weight, a);
    add_bias(pre, layer.bias);
    if (l + 1 < params.g_layers.size()) {
      for (double& v : pre.data()) v = std::max(v, 0.0);
    }
    a = std::move(pre);
  }
  return a;
}

std::vector<int> predict(const MlpParams& params, const Mat& x) {
  Mat logits = matmul(params.h_weight, embed(params, x));
  add_bias(logits, params.h_bias);
  std::vector<int> out(logits.cols());
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    auto c = logits.col(j);
    out[j] = static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Task losses

double loss_source_ce(const ForwardTrace& trace, const TaskLayout& layout) {
  if (layout.source_cols.size() != layout.source_labels.size()) {
    throw DimensionError("loss_source_ce: labels do not align with source columns");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < layout.source_cols.size(); ++s) {
    const auto j = layout.source_cols[s];
    const auto y = static_cast<std::size_t>(layout.source_labels[s]);
    if (j >= trace.probs.cols() || y >= trace.probs.rows()) {
      throw DimensionError("loss_source_ce: column or label out of range");
    }
    total -= std::log(std::max(trace.probs(y, j), kLogFloor));
  }
  return total;
}

double loss_source_ce(const ForwardTrace& trace, const Mat& y_onehot,
                      std::span<const std::size_t> source_cols) {
  if (y_onehot.cols() != source_cols.size() || y_onehot.rows() != trace.probs.rows()) {
    throw DimensionError("loss_source_ce: label matrix does not match source columns");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < source_cols.size(); ++s) {
    const auto j = source_cols[s];
    if (j >= trace.probs.cols()) throw DimensionError("loss_source_ce: column out of range");
    for (std::size_t i = 0; i < y_onehot.rows(); ++i) {
      if (y_onehot(i, s) != 0.0) total -= y_onehot(i, s) * std::log(std::max(trace.probs(i, j), kLogFloor));
    }
  }
  return total;
}

double loss_target_entropy(const ForwardTrace& trace, std::span<const std::size_t> target_cols) {
  double total = 0.0;
  for (std::size_t j : target_cols) {
    if (j >= trace.probs.cols()) throw DimensionError("loss_target_entropy: column out of range");
    for (double p : trace.probs.col(j)) total -= p * std::log(std::max(p, kLogFloor));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Backward

MlpParams backward(const MlpParams& params, const ForwardTrace& trace, const TaskLayout& layout,
                   const Mat& go_grad, double lambda_t) {
  const std::size_t n = trace.probs.cols();
  const std::size_t k = trace.probs.rows();
  if (layout.source_cols.size() != layout.source_labels.size()) {
    throw DimensionError("backward: labels do not align with source columns");
  }
  if (!go_grad.empty() && (go_grad.rows() != trace.z().rows() || go_grad.cols() != n)) {
    throw DimensionError("backward: go_grad must be " + std::to_string(trace.z().rows()) + "x" +
                         std::to_string(n));
  }

  Mat d_logits(k, n);
  for (std::size_t s = 0; s < layout.source_cols.size(); ++s) {
    const auto j = layout.source_cols[s];
    const auto y = static_cast<std::size_t>(layout.source_labels[s]);
    if (j >= n || y >= k) throw DimensionError("backward: source column or label out of range");
    auto g = d_logits.col(j);
    auto p = trace.probs.col(j);
    for (std::size_t i = 0; i < k; ++i) g[i] += p[i];
    g[y] -= 1.0;
  }
  if (lambda_t != 0.0) {
    for (std::size_t j : layout.target_cols) {
      if (j >= n) throw DimensionError("backward: target column out of range");
      auto p = trace.probs.col(j);
      double h = 0.0;
      for (double pi : p) h -= pi * std::log(std::max(pi, kLogFloor));
      auto g = d_logits.col(j);
      for (std::size_t i = 0; i < k; ++i) {
        g[i] -= lambda_t * p[i] * (std::log(std::max(p[i], kLogFloor)) + h);
      }
    }
  }

  MlpParams grads = params.zeros_like();
  grads.h_weight = matmul_nt(d_logits, trace.z());
  grads.h_bias = row_sums(d_logits);

  Mat upstream = matmul_tn(params.h_weight, d_logits);
  if (!go_grad.empty()) upstream += go_grad;

  for (std::size_t l = params.g_layers.size(); l-- > 0;) {
    if (l + 1 < params.g_layers.size()) {
      const Mat& pre = trace.pre[l];
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        if (pre.data()[i] <= 0.0) upstream.data()[i] = 0.0;
      }
    }
    grads.g_layers[l].weight = matmul_nt(upstream, trace.act[l]);
    grads.g_layers[l].bias = row_sums(upstream);
    if (l > 0) upstream = matmul_tn(params.g_layers[l].weight, upstream);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState make_optimizer(const MlpParams& like, double lr) {
  OptimizerState s;
  s.lr = lr;
  s.m = like.zeros_like();
  s.v = like.zeros_like();
  return s;
}

void adam_step(MlpParams& params, const MlpParams& grads, OptimizerState& state) {
  auto p_t = tensors(params);
  auto g_t = tensor_values(grads);
  auto m_t = tensors(state.m);
  auto v_t = tensors(state.v);
  if (p_t.size() != g_t.size() || p_t.size() != m_t.size() || p_t.size() != v_t.size()) {
    throw DimensionError("adam_step: parameter structure mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < p_t.size(); ++k) {
    auto p = p_t[k].values;
    auto gr = g_t[k];
    auto m = m_t[k].values;
    auto v = v_t[k].values;
    if (p.size() != gr.size() || p.size() != m.size() || p.size() != v.size()) {
      throw DimensionError("adam_step: shape mismatch in " + p_t[k].name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gr[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gr[i] * gr[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  MlpParams copy = params;  // tensors() hands out mutable views
  nlohmann::json doc;
  doc["format"] = "goal-mlp";
  doc["version"] = kCheckpointVersion;
  doc["layout"] = "row-major";
  doc["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors(copy)) {
    std::vector<double> data;
    if (t.shape.size() == 2) {
      // Mat storage is column-major; files are row-major.
      const std::size_t r = t.shape[0];
      const std::size_t c = t.shape[1];
      data.resize(r * c);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) data[i * c + j] = t.values[j * r + i];
      }
    } else {
      data.assign(t.values.begin(), t.values.end());
    }
    doc["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"data", data}});
  }
  std::ofstream out(path);
  if (!out) throw ParseError("save_checkpoint: cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_checkpoint: cannot read " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "goal-mlp") throw ParseError("load_checkpoint: not a goal-mlp file");
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw ParseError("load_checkpoint: unsupported version");
  }

  auto read_matrix = [](const nlohmann::json& t) {
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    const auto data = t.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || data.size() != shape[0] * shape[1]) {
      throw ParseError("load_checkpoint: tensor " + t.at("name").get<std::string>() +
                       " has inconsistent shape");
    }
    Mat m(shape[0], shape[1]);
    for (std::size_t i = 0; i < shape[0]; ++i) {
      for (std::size_t j = 0; j < shape[1]; ++j) m(i, j) = data[i * shape[1] + j];
    }
    return m;
  };
  auto read_vector = [](const nlohmann::json& t) {
    return t.at("data").get<std::vector<double>>();
  };

  MlpParams p;
  try {
    const auto& ts = doc.at("tensors");
    if (ts.size() < 4 || ts.size() % 2 != 0) throw ParseError("load_checkpoint: tensor count");
    const std::size_t layers = ts.size() / 2 - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string base = "g." + std::to_string(l);
      if (ts[2 * l].at("name") != base + ".weight" || ts[2 * l + 1].at("name") != base + ".bias") {
        throw ParseError("load_checkpoint: expected tensors for " + base);
      }
      p.g_layers.push_back({read_matrix(ts[2 * l]), read_vector(ts[2 * l + 1])});
    }
    if (ts[2 * layers].at("name") != "h.weight" || ts[2 * layers + 1].at("name") != "h.bias") {
      throw ParseError("load_checkpoint: expected classifier tensors last");
    }
    p.h_weight = read_matrix(ts[2 * layers]);
    p.h_bias = read_vector(ts[2 * layers + 1]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + std::string(e.what()));
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("load_checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace goal
