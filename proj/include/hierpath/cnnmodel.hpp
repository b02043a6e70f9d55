// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierpath/metrics.hpp"
#include "hierpath/nncore.hpp"
#include "hierpath/textprep.hpp"

namespace hierpath {

enum class SelectionMetric { f1_micro, f1_macro, loss };
std::string_view selection_metric_name(SelectionMetric m);
SelectionMetric parse_selection_metric(std::string_view name);

std::string_view activation_name(nn::Activation a);
nn::Activation parse_activation(std::string_view name);

struct CnnConfig {
  std::size_t embed_dim = 128;
  std::vector<std::size_t> window_sizes{3, 4, 5};
  std::size_t maps_per_window = 100;
  std::size_t hidden_dim = 128;
  double dropout_p = 0.5;
  std::size_t num_classes = 2;
  std::size_t epochs = 147;
  std::size_t batch_size = 75;
  std::uint64_t seed = 42;
  SelectionMetric selection_metric = SelectionMetric::f1_micro;
  nn::Activation activation = nn::Activation::relu;
  double embed_init_range = 0.25;
  nn::AdadeltaConfig optimizer{};

  /// Throws ContractError on a non-positive size, a bad dropout rate, fewer than
  /// two classes, or a window wider than max_len (when max_len is given).
  void validate(std::size_t max_len = 0) const;
  std::size_t concat_width() const { return maps_per_window * window_sizes.size(); }

  /// `key=value` lines; the inverse of parse().
  std::string to_text() const;
  static CnnConfig parse(std::string_view text);
};

struct Prediction {
  std::size_t class_index = 0;
  nn::NdArray probs;
};

/// Argmax with the lowest index winning ties.
std::size_t argmax(std::span<const double> values);

/// Embedding -> conv+act per window -> max over time -> concat -> dropout ->
/// hidden dense -> output dense -> softmax.
class Model {
 public:
  struct Cache {
    std::vector<int> indices;
    nn::NdArray embedded;
    std::vector<nn::ConvOutput> conv;
    std::vector<nn::PoolOutput> pooled;
    nn::NdArray concat;
    nn::DropoutOutput dropped;
    nn::DenseOutput hidden;
    nn::DenseOutput output;
    nn::NdArray probs;
  };

  Model() = default;

  const CnnConfig& config() const { return config_; }
  std::size_t vocab_size() const { return embedding_.value.dim(0); }

  /// Parameters in checkpoint order: embedding, (filters, bias) per window,
  /// hidden weights/bias, output weights/bias.
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;

  nn::NdArray forward(std::span<const int> indices, nn::Mode mode, Rng& rng, Cache* cache) const;
  nn::NdArray forward(std::span<const int> indices) const;

  /// Accumulates d(-log p[true_class]) into every parameter's grad.
  void backward(const Cache& cache, std::size_t true_class);

  Prediction predict(std::span<const int> indices) const;

  void zero_grad();

  // Direct layer access for tests and composition checks.
  nn::Parameter& embedding() { return embedding_; }
  const nn::Parameter& embedding() const { return embedding_; }
  nn::Parameter& conv_filters(std::size_t w) { return conv_filters_.at(w); }
  const nn::Parameter& conv_filters(std::size_t w) const { return conv_filters_.at(w); }
  nn::Parameter& conv_bias(std::size_t w) { return conv_bias_.at(w); }
  const nn::Parameter& conv_bias(std::size_t w) const { return conv_bias_.at(w); }
  nn::Parameter& hidden_weights() { return hidden_w_; }
  const nn::Parameter& hidden_weights() const { return hidden_w_; }
  nn::Parameter& hidden_bias() { return hidden_b_; }
  const nn::Parameter& hidden_bias() const { return hidden_b_; }
  nn::Parameter& output_weights() { return output_w_; }
  const nn::Parameter& output_weights() const { return output_w_; }
  nn::Parameter& output_bias() { return output_b_; }
  const nn::Parameter& output_bias() const { return output_b_; }

 private:
  friend Model build_model(const CnnConfig& config, std::size_t vocab_size, Rng& rng);
  friend Model assemble_model(const CnnConfig& config, std::vector<nn::Parameter> params);

  CnnConfig config_;
  nn::Parameter embedding_;
  std::vector<nn::Parameter> conv_filters_;
  std::vector<nn::Parameter> conv_bias_;
  nn::Parameter hidden_w_;
  nn::Parameter hidden_b_;
  nn::Parameter output_w_;
  nn::Parameter output_b_;
};

/// Embedding uniform in +-embed_init_range with the padding row zeroed,
/// conv and dense weights Xavier-uniform, biases zero.
Model build_model(const CnnConfig& config, std::size_t vocab_size, Rng& rng);

/// Rebuilds a model from parameters in checkpoint order (shapes are checked).
Model assemble_model(const CnnConfig& config, std::vector<nn::Parameter> params);

struct TrainingMeta {
  std::int64_t best_epoch = -1;  // 1-based; -1 when untrained
  double best_metric = 0.0;
  std::uint64_t seed = 0;
};

/// A trained classifier. A checkpoint without a model is a constant
/// classifier over its single class (degenerate ensemble groups).
struct Checkpoint {
  std::optional<Model> model;
  std::uint64_t vocab_digest = 0;
  std::vector<std::string> class_codes;
  TrainingMeta meta;

  bool is_constant() const { return !model.has_value(); }
  Prediction predict(std::span<const int> indices) const;
  static Checkpoint constant(std::string code, std::uint64_t vocab_digest);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws CheckpointCorrupt, CheckpointVersionError or DigestMismatch.
Checkpoint parse_checkpoint(std::string_view bytes,
                            std::optional<std::uint64_t> expected_vocab_digest = std::nullopt);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_digest = std::nullopt);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  SelectionMetric metric = SelectionMetric::f1_micro;

  std::string to_csv() const;  // epoch,train_loss,val_metric
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

/// Mini-batch Adadelta with mean batch gradients. After every epoch the
/// validation set is scored in infer mode; the checkpoint holds the weights of
/// the best epoch (earliest on ties).
TrainResult train(Model model, std::span<const EncodedReport> train_set,
                  std::span<const EncodedReport> val_set, std::vector<std::string> class_codes,
                  std::uint64_t vocab_digest);

/// Predictions for every report, in order.
std::vector<std::size_t> predict_all(const Checkpoint& checkpoint, std::span<const EncodedReport> reports);

}  // namespace hierpath
