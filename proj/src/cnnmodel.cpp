// SPDX-License-Identifier: Apache-2.0
#include "hierpath/cnnmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "hierpath/error.hpp"

namespace hierpath {

std::string_view selection_metric_name(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::f1_micro: return "f1_micro";
    case SelectionMetric::f1_macro: return "f1_macro";
    case SelectionMetric::loss: return "loss";
  }
  return "?";
}

SelectionMetric parse_selection_metric(std::string_view name) {
  if (name == "f1_micro") return SelectionMetric::f1_micro;
  if (name == "f1_macro") return SelectionMetric::f1_macro;
  if (name == "loss") return SelectionMetric::loss;
  throw ContractError("unknown selection metric '" + std::string(name) + "'");
}

std::string_view activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::relu: return "relu";
    case nn::Activation::tanh: return "tanh";
    case nn::Activation::none: return "none";
  }
  return "?";
}

nn::Activation parse_activation(std::string_view name) {
  if (name == "relu") return nn::Activation::relu;
  if (name == "tanh") return nn::Activation::tanh;
  if (name == "none") return nn::Activation::none;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

void CnnConfig::validate(std::size_t max_len) const {
  if (embed_dim == 0 || maps_per_window == 0 || hidden_dim == 0 || epochs == 0 || batch_size == 0)
    throw ContractError("CNN sizes, epochs and batch size must be positive");
  if (window_sizes.empty()) throw ContractError("at least one window size is required");
  for (auto h : window_sizes) {
    if (h == 0) throw ContractError("window sizes must be positive");
    if (max_len && h > max_len)
      throw ContractError("window size " + std::to_string(h) + " exceeds max_len " + std::to_string(max_len));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ContractError("dropout_p must lie in [0,1)");
  if (num_classes < 2) throw ContractError("a CNN classifier needs at least 2 classes");
  if (!(embed_init_range > 0.0)) throw ContractError("embed_init_range must be positive");
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string CnnConfig::to_text() const {
  std::string windows;
  for (std::size_t i = 0; i < window_sizes.size(); ++i)
    windows += (i ? "," : "") + std::to_string(window_sizes[i]);
  std::ostringstream out;
  out << "embed_dim=" << embed_dim << "\nwindow_sizes=" << windows
      << "\nmaps_per_window=" << maps_per_window << "\nhidden_dim=" << hidden_dim
      << "\ndropout_p=" << g17(dropout_p) << "\nnum_classes=" << num_classes << "\nepochs=" << epochs
      << "\nbatch_size=" << batch_size << "\nseed=" << seed
      << "\nselection_metric=" << selection_metric_name(selection_metric)
      << "\nactivation=" << activation_name(activation) << "\nembed_init_range=" << g17(embed_init_range)
      << "\nadadelta_rho=" << g17(optimizer.rho) << "\nadadelta_eps=" << g17(optimizer.eps) << "\n";
  return out.str();
}

CnnConfig CnnConfig::parse(std::string_view text) {
  CnnConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config line without '=': " + line);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    try {
      if (key == "embed_dim") c.embed_dim = std::stoull(value);
      else if (key == "window_sizes") {
        c.window_sizes.clear();
        std::istringstream ws(value);
        std::string item;
        while (std::getline(ws, item, ',')) c.window_sizes.push_back(std::stoull(item));
      } else if (key == "maps_per_window") c.maps_per_window = std::stoull(value);
      else if (key == "hidden_dim") c.hidden_dim = std::stoull(value);
      else if (key == "dropout_p") c.dropout_p = std::stod(value);
      else if (key == "num_classes") c.num_classes = std::stoull(value);
      else if (key == "epochs") c.epochs = std::stoull(value);
      else if (key == "batch_size") c.batch_size = std::stoull(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "selection_metric") c.selection_metric = parse_selection_metric(value);
      else if (key == "activation") c.activation = parse_activation(value);
      else if (key == "embed_init_range") c.embed_init_range = std::stod(value);
      else if (key == "adadelta_rho") c.optimizer.rho = std::stod(value);
      else if (key == "adadelta_eps") c.optimizer.eps = std::stod(value);
      else throw ContractError("unknown CNN config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ContractError("bad value for CNN config key '" + key + "': " + value);
    }
  }
  return c;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::vector<nn::Parameter*> Model::parameters() {
  std::vector<nn::Parameter*> ps{&embedding_};
  for (std::size_t w = 0; w < conv_filters_.size(); ++w) {
    ps.push_back(&conv_filters_[w]);
    ps.push_back(&conv_bias_[w]);
  }
  for (auto* p : {&hidden_w_, &hidden_b_, &output_w_, &output_b_}) ps.push_back(p);
  return ps;
}

std::vector<const nn::Parameter*> Model::parameters() const {
  auto mutable_ps = const_cast<Model*>(this)->parameters();
  return {mutable_ps.begin(), mutable_ps.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

nn::NdArray Model::forward(std::span<const int> indices, nn::Mode mode, Rng& rng, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  // Trailing padding past one widest window only repeats the all-padding step
  // act(bias), so trimming it leaves pooled values and argmax positions unchanged.
  const auto widest = *std::max_element(config_.window_sizes.begin(), config_.window_sizes.end());
  std::size_t used = indices.size();
  while (used > 0 && indices[used - 1] == kPadIndex) --used;
  const auto keep = std::min(indices.size(), used + widest);
  c.indices.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(keep));
  c.embedded = nn::embedding_forward(c.indices, embedding_);
  c.conv.clear();
  c.pooled.clear();
  c.concat = nn::NdArray({config_.concat_width()});
  for (std::size_t w = 0; w < conv_filters_.size(); ++w) {
    c.conv.push_back(nn::conv1d_forward(c.embedded, conv_filters_[w], conv_bias_[w], config_.activation));
    c.pooled.push_back(nn::max_over_time(c.conv.back().out));
    std::copy(c.pooled.back().values.values.begin(), c.pooled.back().values.values.end(),
              c.concat.values.begin() + static_cast<std::ptrdiff_t>(w * config_.maps_per_window));
  }
  c.dropped = nn::dropout(c.concat, config_.dropout_p, mode, rng);
  c.hidden = nn::dense_forward(c.dropped.out, hidden_w_, hidden_b_, config_.activation);
  c.output = nn::dense_forward(c.hidden.out, output_w_, output_b_, nn::Activation::none);
  c.probs = nn::softmax(c.output.out);
  return c.probs;
}

nn::NdArray Model::forward(std::span<const int> indices) const {
  Rng unused(0);
  return forward(indices, nn::Mode::infer, unused, nullptr);
}

void Model::backward(const Cache& c, std::size_t true_class) {
  const auto g_logits = nn::softmax_xent_backward(c.probs, true_class);
  const auto g_hidden = nn::dense_backward(c.hidden.out, c.output.pre, g_logits, output_w_, output_b_,
                                           nn::Activation::none);
  const auto g_dropped = nn::dense_backward(c.dropped.out, c.hidden.pre, g_hidden, hidden_w_, hidden_b_,
                                            config_.activation);
  const auto g_concat = nn::dropout_backward(g_dropped, c.dropped.mask);
  nn::NdArray g_embedded(c.embedded.shape);
  const auto maps = config_.maps_per_window;
  for (std::size_t w = 0; w < conv_filters_.size(); ++w) {
    nn::NdArray g_pool({maps});
    std::copy(g_concat.values.begin() + static_cast<std::ptrdiff_t>(w * maps),
              g_concat.values.begin() + static_cast<std::ptrdiff_t>((w + 1) * maps), g_pool.values.begin());
    const auto g_map = nn::max_over_time_backward(g_pool, c.pooled[w].argmax, c.conv[w].out.dim(0));
    const auto g_in = nn::conv1d_backward(c.embedded, c.conv[w].pre, g_map, conv_filters_[w],
                                          conv_bias_[w], config_.activation);
    for (std::size_t i = 0; i < g_in.size(); ++i) g_embedded[i] += g_in[i];
  }
  nn::embedding_backward(c.indices, g_embedded, embedding_, kPadIndex);
}

Prediction Model::predict(std::span<const int> indices) const {
  auto probs = forward(indices);
  const auto k = argmax(probs.values);
  return {k, std::move(probs)};
}

Model build_model(const CnnConfig& config, std::size_t vocab_size, Rng& rng) {
  config.validate();
  if (vocab_size < 2) throw ContractError("vocabulary size must be at least 2 (pad and unknown)");
  Model m;
  m.config_ = config;
  auto table = nn::init_uniform({vocab_size, config.embed_dim}, config.embed_init_range, rng);
  std::fill_n(table.values.begin(), config.embed_dim, 0.0);  // padding row
  m.embedding_ = nn::Parameter("embedding", std::move(table));
  for (auto h : config.window_sizes) {
    const auto tag = "conv" + std::to_string(h);
    m.conv_filters_.emplace_back(tag + ".filters",
                                 nn::init_params({config.maps_per_window, h, config.embed_dim},
                                                 nn::InitScheme::uniform_xavier, rng));
    m.conv_bias_.emplace_back(tag + ".bias", nn::NdArray({config.maps_per_window}));
  }
  m.hidden_w_ = nn::Parameter("hidden.weights", nn::init_params({config.hidden_dim, config.concat_width()},
                                                                  nn::InitScheme::uniform_xavier, rng));
  m.hidden_b_ = nn::Parameter("hidden.bias", nn::NdArray({config.hidden_dim}));
  m.output_w_ = nn::Parameter("output.weights", nn::init_params({config.num_classes, config.hidden_dim},
                                                                  nn::InitScheme::uniform_xavier, rng));
  m.output_b_ = nn::Parameter("output.bias", nn::NdArray({config.num_classes}));
  return m;
}

Model assemble_model(const CnnConfig& config, std::vector<nn::Parameter> params) {
  config.validate();
  Rng rng(0);
  // Shapes come from a reference build; values are replaced below.
  Model m = build_model(config, params.empty() ? 2 : params.front().value.dim(0), rng);
  auto slots = m.parameters();
  if (slots.size() != params.size())
    throw CheckpointCorrupt("checkpoint holds " + std::to_string(params.size()) + " parameters, expected " +
                            std::to_string(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (params[i].value.shape != slots[i]->value.shape || params[i].name != slots[i]->name)
      throw CheckpointCorrupt("parameter " + params[i].name + " " + nn::shape_string(params[i].value.shape) +
                              " does not match " + slots[i]->name + " " +
                              nn::shape_string(slots[i]->value.shape));
    *slots[i] = std::move(params[i]);
  }
  return m;
}

Prediction Checkpoint::predict(std::span<const int> indices) const {
  if (model) return model->predict(indices);
  return {0, nn::NdArray({1}, 1.0)};
}

Checkpoint Checkpoint::constant(std::string code, std::uint64_t vocab_digest) {
  Checkpoint c;
  c.vocab_digest = vocab_digest;
  c.class_codes = {std::move(code)};
  return c;
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,val_metric\n";
  for (const auto& e : epochs) out += std::to_string(e.epoch) + "," + g17(e.train_loss) + "," + g17(e.val_metric) + "\n";
  return out;
}

std::vector<std::size_t> predict_all(const Checkpoint& checkpoint, std::span<const EncodedReport> reports) {
  std::vector<std::size_t> preds;
  preds.reserve(reports.size());
  for (const auto& r : reports) preds.push_back(checkpoint.predict(r.indices).class_index);
  return preds;
}

namespace {

// Validation score where larger is better; loss is negated.
double validation_score(const Model& model, std::span<const EncodedReport> val,
                        const std::vector<std::string>& codes, SelectionMetric metric, double* reported) {
  if (metric == SelectionMetric::loss) {
    double total = 0.0;
    Rng unused(0);
    Model::Cache c;
    for (const auto& r : val) {
      model.forward(r.indices, nn::Mode::infer, unused, &c);
      total += nn::softmax_xent(c.output.out, *r.label_index).loss;
    }
    *reported = total / static_cast<double>(val.size());
    return -*reported;
  }
  std::vector<std::size_t> truths, preds;
  for (const auto& r : val) {
    truths.push_back(*r.label_index);
    preds.push_back(model.predict(r.indices).class_index);
  }
  const auto cm = confusion(truths, preds, codes);
  *reported = metric_of(cm, metric == SelectionMetric::f1_macro ? MetricKind::f1_macro : MetricKind::f1_micro);
  return *reported;
}

void check_labels(std::span<const EncodedReport> set, std::size_t num_classes, const char* what) {
  for (const auto& r : set) {
    if (!r.label_index) throw ContractError(std::string(what) + " report '" + r.id + "' is unlabeled");
    if (*r.label_index >= num_classes)
      throw ContractError(std::string(what) + " report '" + r.id + "' has label index " +
                          std::to_string(*r.label_index) + " >= " + std::to_string(num_classes));
  }
}

}  // namespace

TrainResult train(Model model, std::span<const EncodedReport> train_set,
                  std::span<const EncodedReport> val_set, std::vector<std::string> class_codes,
                  std::uint64_t vocab_digest) {
  const auto& config = model.config();
  if (train_set.empty()) throw ContractError("training set is empty");
  if (val_set.empty())
    throw ContractError("validation set is empty; model selection by " +
                        std::string(selection_metric_name(config.selection_metric)) + " needs one");
  if (class_codes.size() != config.num_classes)
    throw ContractError("class map has " + std::to_string(class_codes.size()) + " codes for a " +
                        std::to_string(config.num_classes) + "-class model");
  check_labels(train_set, config.num_classes, "training");
  check_labels(val_set, config.num_classes, "validation");

  const Rng root(config.seed);
  Rng order_rng = root.derive(1);
  Rng dropout_rng = root.derive(2);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.report.metric = config.selection_metric;
  std::optional<Model> best;
  double best_score = 0.0;
  auto params = model.parameters();
  model.zero_grad();
  Model::Cache cache;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const auto end = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train_set[order[k]];
        model.forward(ex.indices, nn::Mode::train, dropout_rng, &cache);
        const double p = cache.probs[*ex.label_index];
        const double loss = nn::softmax_xent(cache.output.out, *ex.label_index).loss;
        if (!std::isfinite(loss) || !std::isfinite(p))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
        loss_sum += loss;
        model.backward(cache, *ex.label_index);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* param : params) {
        for (auto& g : param->grad.values) g *= scale;
        try {
          nn::adadelta_step(*param, config.optimizer);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
        }
      }
    }
    double reported = 0.0;
    const double score = validation_score(model, val_set, class_codes, config.selection_metric, &reported);
    result.report.epochs.push_back({epoch, loss_sum / static_cast<double>(order.size()), reported});
    if (!best || score > best_score) {
      best = model;
      best_score = score;
      result.report.best_epoch = epoch;
    }
  }

  result.checkpoint.model = std::move(best);
  result.checkpoint.vocab_digest = vocab_digest;
  result.checkpoint.class_codes = std::move(class_codes);
  result.checkpoint.meta = {static_cast<std::int64_t>(result.report.best_epoch),
                            result.report.epochs[result.report.best_epoch - 1].val_metric, config.seed};
  return result;
}

}  // namespace hierpath
