#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pieclam/clam.hpp"
#include "pieclam/graph.hpp"

namespace pieclam {

/// Fully connected network: tanh hidden layers followed by a linear output.
/// Operates on batches stored one sample per row.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
  };

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
  };

  Mlp() = default;
  Mlp(int in, int hidden_width, int hidden_layers, int out);

  int in_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int out_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  /// Backpropagates d(out) and returns d(input). Parameter gradients are
  /// accumulated into grad when given (grad must share this shape).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_out, const Cache& cache, Mlp* grad) const;

  void set_zero();
  std::size_t parameter_count() const;

 private:
  std::vector<Layer> layers_;
};

/// One affine coupling block. The permutation is applied to the incoming
/// vector, the first `split` coordinates (A) pass through, and the rest (B)
/// become B * exp(s(A)) + t(A) in the data-to-latent direction.
struct CouplingBlock {
  std::vector<int> permutation;
  int split = 0;
  Mlp scale_net;
  Mlp shift_net;
};

struct FlowArchitecture {
  int dim = 2;
  int num_blocks = 6;
  int hidden_width = 64;
  int hidden_layers = 2;
  /// Output-layer weights are drawn at this multiple of the default init;
  /// small values start the flow near the identity.
  double output_scale = 0.01;
};

/// realNVP density on R^dim with a standard normal base.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(int dim, std::vector<CouplingBlock> blocks);

  static FlowModel random(const FlowArchitecture& arch, Rng& rng);
  /// Single block, identity permutation, zero networks: T is the identity.
  static FlowModel identity(int dim);

  int dim() const noexcept { return dim_; }
  std::vector<CouplingBlock>& blocks() noexcept { return blocks_; }
  const std::vector<CouplingBlock>& blocks() const noexcept { return blocks_; }

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);

 private:
  int dim_ = 0;
  std::vector<CouplingBlock> blocks_;
};

struct FlowOutput {
  Eigen::MatrixXd values;   // one row per sample
  Eigen::VectorXd log_det;  // per sample
};

/// Data to latent. log p(f) = log N(z; 0, I) + log_det.
FlowOutput flow_forward(const FlowModel& model, const Eigen::MatrixXd& f);
/// Latent to data; log_det is the negated forward log-determinant.
FlowOutput flow_inverse(const FlowModel& model, const Eigen::MatrixXd& z);

Eigen::VectorXd log_density(const FlowModel& model, const Eigen::MatrixXd& f);
double log_density(const FlowModel& model, const Eigen::RowVectorXd& f);

/// Per-sample log densities plus optional exact gradients of
/// sum_i weight_i * log p(f_i): with respect to the parameters (flattened in
/// FlowModel::parameters() order) and with respect to each input row.
struct DensityGradient {
  Eigen::VectorXd log_density;
  Eigen::VectorXd parameter_grad;
  Eigen::MatrixXd input_grad;
};
DensityGradient log_density_gradient(const FlowModel& model, const Eigen::MatrixXd& f,
                                     const Eigen::VectorXd& weights, bool want_parameters,
                                     bool want_inputs);

/// Draws n points. When a support kind is given, the first kind.dim()
/// coordinates of each sample are projected onto that kind's feasible set.
Eigen::MatrixXd sample(const FlowModel& model, int n, Rng& rng,
                       std::optional<ModelKind> support = std::nullopt);

enum class PriorOptimizer { Adam, GradientAscent };

struct PriorTrainConfig {
  int steps = 1300;
  double learning_rate = 1e-6;
  double noise_amplitude = 0.01;
  PriorOptimizer optimizer = PriorOptimizer::Adam;
};

struct PriorTrainResult {
  FlowModel model;
  /// Mean log density of the perturbed batch, before each update.
  std::vector<double> trace;
};

/// Maximizes the mean log density of the samples, adding fresh Gaussian
/// noise of the configured amplitude to every sample at every step. Throws
/// NumericalError on divergence.
PriorTrainResult train_prior(FlowModel model, const Eigen::MatrixXd& samples,
                             const PriorTrainConfig& config, Rng& rng);

/// Persists a JSON manifest (architecture, permutations, tensor layout) and a
/// little-endian float64 parameter dump next to it.
void save_flow(const FlowModel& model, const std::filesystem::path& manifest,
               const std::filesystem::path& tensors);
FlowModel load_flow(const std::filesystem::path& manifest);

}  // namespace pieclam
