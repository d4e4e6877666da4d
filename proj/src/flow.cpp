#include "pieclam/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "json.hpp"
#include "pieclam/errors.hpp"

namespace pieclam {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void require_finite(const Eigen::MatrixXd& m, const char* where) {
  if (!m.allFinite()) throw NumericalError(std::string("flow: non-finite values in ") + where);
}

Eigen::MatrixXd permute_columns(const Eigen::MatrixXd& x, const std::vector<int>& perm) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.col(i) = x.col(perm[i]);
  return out;
}

Eigen::MatrixXd unpermute_columns(const Eigen::MatrixXd& x, const std::vector<int>& perm) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.col(perm[i]) = x.col(i);
  return out;
}

struct BlockCache {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd scale;  // raw scale output, log of the actual scale
  Mlp::Cache scale_cache;
  Mlp::Cache shift_cache;
};

Eigen::MatrixXd block_forward(const CouplingBlock& blk, const Eigen::MatrixXd& x,
                              Eigen::VectorXd& log_det, BlockCache* cache) {
  const Eigen::Index dim = x.cols();
  const Eigen::Index nb = dim - blk.split;
  Eigen::MatrixXd xp = permute_columns(x, blk.permutation);
  Eigen::MatrixXd a = xp.leftCols(blk.split);
  Eigen::MatrixXd b = xp.rightCols(nb);
  Eigen::MatrixXd s = blk.scale_net.forward(a, cache ? &cache->scale_cache : nullptr);
  Eigen::MatrixXd t = blk.shift_net.forward(a, cache ? &cache->shift_cache : nullptr);
  xp.rightCols(nb) = (b.array() * s.array().exp() + t.array()).matrix();
  log_det += s.rowwise().sum();
  if (cache) {
    cache->a = std::move(a);
    cache->b = std::move(b);
    cache->scale = std::move(s);
  }
  return xp;
}

// d_out is the gradient with respect to the block output (in the block's
// permuted coordinates); d_log_det the per-row weight on the log-det term.
Eigen::MatrixXd block_backward(const CouplingBlock& blk, const BlockCache& cache,
                               const Eigen::MatrixXd& d_out, const Eigen::VectorXd& d_log_det,
                               CouplingBlock* grad) {
  const Eigen::Index nb = d_out.cols() - blk.split;
  const Eigen::ArrayXXd es = cache.scale.array().exp();
  const Eigen::ArrayXXd d_bout = d_out.rightCols(nb).array();
  Eigen::MatrixXd d_s = (d_bout * cache.b.array() * es).matrix();
  d_s.colwise() += d_log_det;
  const Eigen::MatrixXd d_t = d_bout.matrix();

  Eigen::MatrixXd dxp(d_out.rows(), d_out.cols());
  dxp.rightCols(nb) = (d_bout * es).matrix();
  dxp.leftCols(blk.split) =
      d_out.leftCols(blk.split) +
      blk.scale_net.backward(d_s, cache.scale_cache, grad ? &grad->scale_net : nullptr) +
      blk.shift_net.backward(d_t, cache.shift_cache, grad ? &grad->shift_net : nullptr);
  return unpermute_columns(dxp, blk.permutation);
}

template <typename Fn>
void for_each_tensor(const Mlp& net, Fn&& fn) {
  for (const auto& layer : net.layers()) {
    fn(layer.weight);
    fn(layer.bias);
  }
}

template <typename Fn>
void for_each_tensor_mut(Mlp& net, Fn&& fn) {
  for (auto& layer : net.layers()) {
    fn(layer.weight);
    fn(layer.bias);
  }
}

}  // namespace

Mlp::Mlp(int in, int hidden_width, int hidden_layers, int out) {
  if (in < 0 || out < 0 || hidden_layers < 0 || (hidden_layers > 0 && hidden_width < 1)) {
    throw InputError("invalid MLP shape");
  }
  int prev = in;
  for (int l = 0; l < hidden_layers; ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(hidden_width, prev), Eigen::VectorXd::Zero(hidden_width)});
    prev = hidden_width;
  }
  layers_.push_back({Eigen::MatrixXd::Zero(out, prev), Eigen::VectorXd::Zero(out)});
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (cache) cache->inputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    Eigen::MatrixXd a = h * layer.weight.transpose();
    a.rowwise() += layer.bias.transpose();
    if (cache) cache->inputs.push_back(std::move(h));
    h = l + 1 < layers_.size() ? Eigen::MatrixXd(a.array().tanh().matrix()) : std::move(a);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& d_out, const Cache& cache, Mlp* grad) const {
  Eigen::MatrixXd g = d_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.inputs[l];
    if (grad) {
      grad->layers_[l].weight.noalias() += g.transpose() * input;
      grad->layers_[l].bias += g.colwise().sum().transpose();
    }
    Eigen::MatrixXd g_in = g * layers_[l].weight;
    if (l == 0) return g_in;
    // input is the tanh output of layer l - 1.
    g = (g_in.array() * (1.0 - input.array().square())).matrix();
  }
  return g;
}

void Mlp::set_zero() {
  for (auto& layer : layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

FlowModel::FlowModel(int dim, std::vector<CouplingBlock> blocks)
    : dim_(dim), blocks_(std::move(blocks)) {
  if (dim_ < 1) throw InputError("flow dimension must be positive");
  for (const CouplingBlock& blk : blocks_) {
    std::vector<int> sorted = blk.permutation;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(dim_);
    std::iota(expect.begin(), expect.end(), 0);
    if (sorted != expect) throw InputError("coupling block permutation is not a bijection");
    if (blk.split < 0 || blk.split > dim_) throw InputError("coupling block split out of range");
    for (const Mlp* net : {&blk.scale_net, &blk.shift_net}) {
      if (net->in_dim() != blk.split || net->out_dim() != dim_ - blk.split) {
        throw InputError("coupling network shape does not match the split");
      }
    }
  }
}

FlowModel FlowModel::random(const FlowArchitecture& arch, Rng& rng) {
  if (arch.dim < 1 || arch.num_blocks < 1) throw InputError("invalid flow architecture");
  const int split = arch.dim / 2;
  std::vector<CouplingBlock> blocks;
  for (int i = 0; i < arch.num_blocks; ++i) {
    CouplingBlock blk;
    blk.split = split;
    blk.permutation.resize(arch.dim);
    std::iota(blk.permutation.begin(), blk.permutation.end(), 0);
    if (i % 2 == 0) {
      std::shuffle(blk.permutation.begin(), blk.permutation.end(), rng);
    } else {
      // Move the coordinates just transformed into the conditioning half.
      std::rotate(blk.permutation.begin(), blk.permutation.begin() + split, blk.permutation.end());
    }
    blk.scale_net = Mlp(split, arch.hidden_width, arch.hidden_layers, arch.dim - split);
    blk.shift_net = Mlp(split, arch.hidden_width, arch.hidden_layers, arch.dim - split);
    for (Mlp* net : {&blk.scale_net, &blk.shift_net}) {
      auto& layers = net->layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const double fan_in = std::max<Eigen::Index>(1, layers[l].weight.cols());
        double bound = 1.0 / std::sqrt(fan_in);
        if (l + 1 == layers.size()) bound *= arch.output_scale;
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index k = 0; k < layers[l].weight.size(); ++k) layers[l].weight.data()[k] = u(rng);
        for (Eigen::Index k = 0; k < layers[l].bias.size(); ++k) layers[l].bias[k] = u(rng);
      }
    }
    blocks.push_back(std::move(blk));
  }
  return FlowModel(arch.dim, std::move(blocks));
}

FlowModel FlowModel::identity(int dim) {
  CouplingBlock blk;
  blk.split = dim / 2;
  blk.permutation.resize(dim);
  std::iota(blk.permutation.begin(), blk.permutation.end(), 0);
  blk.scale_net = Mlp(blk.split, 1, 0, dim - blk.split);
  blk.shift_net = Mlp(blk.split, 1, 0, dim - blk.split);
  return FlowModel(dim, {std::move(blk)});
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& blk : blocks_) n += blk.scale_net.parameter_count() + blk.shift_net.parameter_count();
  return n;
}

Eigen::VectorXd FlowModel::parameters() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index pos = 0;
  auto put = [&](const auto& t) {
    // Weights are flattened row-major so the layout matches the file format.
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, Eigen::MatrixXd>) {
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) theta[pos++] = t(r, c);
    } else {
      for (Eigen::Index k = 0; k < t.size(); ++k) theta[pos++] = t[k];
    }
  };
  for (const auto& blk : blocks_) {
    for_each_tensor(blk.scale_net, put);
    for_each_tensor(blk.shift_net, put);
  }
  return theta;
}

void FlowModel::set_parameters(const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
    throw InputError("parameter vector length does not match the flow");
  }
  Eigen::Index pos = 0;
  auto take = [&](auto& t) {
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, Eigen::MatrixXd>) {
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = theta[pos++];
    } else {
      for (Eigen::Index k = 0; k < t.size(); ++k) t[k] = theta[pos++];
    }
  };
  for (auto& blk : blocks_) {
    for_each_tensor_mut(blk.scale_net, take);
    for_each_tensor_mut(blk.shift_net, take);
  }
}

FlowOutput flow_forward(const FlowModel& model, const Eigen::MatrixXd& f) {
  if (f.cols() != model.dim()) throw InputError("flow input has the wrong dimension");
  FlowOutput out{f, Eigen::VectorXd::Zero(f.rows())};
  for (const CouplingBlock& blk : model.blocks()) {
    out.values = block_forward(blk, out.values, out.log_det, nullptr);
  }
  require_finite(out.values, "forward pass");
  require_finite(out.log_det, "forward log-determinant");
  return out;
}

FlowOutput flow_inverse(const FlowModel& model, const Eigen::MatrixXd& z) {
  if (z.cols() != model.dim()) throw InputError("flow input has the wrong dimension");
  FlowOutput out{z, Eigen::VectorXd::Zero(z.rows())};
  const auto& blocks = model.blocks();
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    const CouplingBlock& blk = *it;
    const Eigen::Index nb = model.dim() - blk.split;
    Eigen::MatrixXd a = out.values.leftCols(blk.split);
    Eigen::MatrixXd s = blk.scale_net.forward(a);
    Eigen::MatrixXd t = blk.shift_net.forward(a);
    Eigen::MatrixXd xp(out.values.rows(), out.values.cols());
    xp.leftCols(blk.split) = a;
    xp.rightCols(nb) = ((out.values.rightCols(nb) - t).array() * (-s.array()).exp()).matrix();
    out.log_det -= s.rowwise().sum();
    out.values = unpermute_columns(xp, blk.permutation);
  }
  require_finite(out.values, "inverse pass");
  require_finite(out.log_det, "inverse log-determinant");
  return out;
}

Eigen::VectorXd log_density(const FlowModel& model, const Eigen::MatrixXd& f) {
  const FlowOutput fw = flow_forward(model, f);
  return (-0.5 * fw.values.rowwise().squaredNorm()).array() - 0.5 * model.dim() * kLog2Pi +
         fw.log_det.array();
}

double log_density(const FlowModel& model, const Eigen::RowVectorXd& f) {
  return log_density(model, Eigen::MatrixXd(f))[0];
}

DensityGradient log_density_gradient(const FlowModel& model, const Eigen::MatrixXd& f,
                                     const Eigen::VectorXd& weights, bool want_parameters,
                                     bool want_inputs) {
  if (f.cols() != model.dim()) throw InputError("flow input has the wrong dimension");
  if (weights.size() != f.rows()) throw InputError("one weight per sample is required");
  const auto& blocks = model.blocks();
  std::vector<BlockCache> caches(blocks.size());
  Eigen::MatrixXd x = f;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(f.rows());
  for (std::size_t b = 0; b < blocks.size(); ++b) x = block_forward(blocks[b], x, log_det, &caches[b]);
  require_finite(x, "forward pass");

  DensityGradient out;
  out.log_density = (-0.5 * x.rowwise().squaredNorm()).array() - 0.5 * model.dim() * kLog2Pi +
                    log_det.array();
  if (!want_parameters && !want_inputs) return out;

  FlowModel grad_model;
  if (want_parameters) {
    grad_model = model;
    for (auto& blk : grad_model.blocks()) {
      blk.scale_net.set_zero();
      blk.shift_net.set_zero();
    }
  }
  Eigen::MatrixXd d = -(x.array().colwise() * weights.array()).matrix();
  for (std::size_t b = blocks.size(); b-- > 0;) {
    d = block_backward(blocks[b], caches[b], d, weights,
                       want_parameters ? &grad_model.blocks()[b] : nullptr);
  }
  if (want_parameters) out.parameter_grad = grad_model.parameters();
  if (want_inputs) out.input_grad = std::move(d);
  return out;
}

Eigen::MatrixXd sample(const FlowModel& model, int n, Rng& rng, std::optional<ModelKind> support) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd z(n, model.dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < model.dim(); ++j) z(i, j) = gauss(rng);
  Eigen::MatrixXd f = flow_inverse(model, z).values;
  if (support) {
    const int d = support->dim();
    if (d > model.dim()) throw InputError("support dimension exceeds the flow dimension");
    RowMatrix aff = f.leftCols(d);
    project_feasible(aff, *support);
    f.leftCols(d) = aff;
  }
  return f;
}

PriorTrainResult train_prior(FlowModel model, const Eigen::MatrixXd& samples,
                             const PriorTrainConfig& config, Rng& rng) {
  if (samples.cols() != model.dim()) throw InputError("training samples have the wrong dimension");
  if (samples.rows() == 0) throw InputError("no training samples");
  if (config.steps < 0 || !(config.learning_rate > 0.0) || !(config.noise_amplitude >= 0.0)) {
    throw InputError("invalid prior training configuration");
  }
  const Eigen::Index n = samples.rows();
  const Eigen::VectorXd weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::VectorXd theta = model.parameters();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;

  PriorTrainResult out;
  out.trace.reserve(config.steps);
  Eigen::MatrixXd batch = samples;
  for (int step = 0; step < config.steps; ++step) {
    if (config.noise_amplitude > 0.0) {
      for (Eigen::Index k = 0; k < batch.size(); ++k) {
        batch.data()[k] = samples.data()[k] + config.noise_amplitude * gauss(rng);
      }
    }
    const DensityGradient g = log_density_gradient(model, batch, weights, true, false);
    const double objective = g.log_density.mean();
    if (!std::isfinite(objective) || !g.parameter_grad.allFinite()) {
      throw NumericalError("train_prior: non-finite objective at step " + std::to_string(step));
    }
    out.trace.push_back(objective);
    if (config.optimizer == PriorOptimizer::GradientAscent) {
      theta += config.learning_rate * g.parameter_grad;
    } else {
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * g.parameter_grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.parameter_grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kBeta1, step + 1);
      const double c2 = 1.0 - std::pow(kBeta2, step + 1);
      theta.array() += config.learning_rate * (m1.array() / c1) /
                       ((m2.array() / c2).sqrt() + kAdamEps);
    }
    model.set_parameters(theta);
  }
  out.model = std::move(model);
  return out;
}

namespace {

nlohmann::json net_shape(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) layers.push_back({layer.weight.rows(), layer.weight.cols()});
  return layers;
}

Mlp net_from_shape(const nlohmann::json& layers) {
  Mlp net;
  for (const auto& shape : layers) {
    const int out = shape.at(0).get<int>();
    const int in = shape.at(1).get<int>();
    net.layers().push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  if (net.layers().empty()) throw InputError("flow manifest: network without layers");
  return net;
}

}  // namespace

void save_flow(const FlowModel& model, const std::filesystem::path& manifest,
               const std::filesystem::path& tensors) {
  nlohmann::ordered_json j;
  j["format"] = "pieclam-flow-v1";
  j["dim"] = model.dim();
  j["base"] = "standard-normal";
  j["tensor_file"] = tensors.filename().string();
  j["tensor_encoding"] = "float64-little-endian";
  j["tensor_layout"] =
      "for each block in order: scale_net layers then shift_net layers; each layer is its "
      "weight matrix (out x in, row-major) followed by its bias vector";
  j["parameter_count"] = model.parameter_count();
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const auto& blk : model.blocks()) {
    nlohmann::ordered_json b;
    b["permutation"] = blk.permutation;
    b["split"] = blk.split;
    b["activation"] = "tanh";
    b["scale_net"] = net_shape(blk.scale_net);
    b["shift_net"] = net_shape(blk.shift_net);
    blocks.push_back(std::move(b));
  }
  j["blocks"] = std::move(blocks);

  std::ofstream mf(manifest);
  if (!mf) throw InputError("cannot write " + manifest.string());
  mf << j.dump(2) << "\n";

  std::ofstream tf(tensors, std::ios::binary);
  if (!tf) throw InputError("cannot write " + tensors.string());
  const Eigen::VectorXd theta = model.parameters();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, &theta[k], sizeof bits);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    tf.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

FlowModel load_flow(const std::filesystem::path& manifest) {
  std::ifstream mf(manifest);
  if (!mf) throw InputError("cannot read flow manifest " + manifest.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("flow manifest is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "pieclam-flow-v1") throw InputError("unknown flow manifest format");
  const int dim = j.at("dim").get<int>();
  std::vector<CouplingBlock> blocks;
  for (const auto& b : j.at("blocks")) {
    CouplingBlock blk;
    blk.permutation = b.at("permutation").get<std::vector<int>>();
    blk.split = b.at("split").get<int>();
    blk.scale_net = net_from_shape(b.at("scale_net"));
    blk.shift_net = net_from_shape(b.at("shift_net"));
    blocks.push_back(std::move(blk));
  }
  FlowModel model(dim, std::move(blocks));

  const auto tensor_path = manifest.parent_path() / j.at("tensor_file").get<std::string>();
  std::ifstream tf(tensor_path, std::ios::binary);
  if (!tf) throw InputError("cannot read flow tensors " + tensor_path.string());
  Eigen::VectorXd theta(model.parameter_count());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    unsigned char bytes[8];
    if (!tf.read(reinterpret_cast<char*>(bytes), 8)) throw InputError("flow tensor file is truncated");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    std::memcpy(&theta[k], &bits, sizeof bits);
  }
  model.set_parameters(theta);
  return model;
}

}  // namespace pieclam
