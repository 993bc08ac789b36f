// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "entroprune/errors.hpp"
#include "entroprune/util.hpp"

namespace entroprune {

template <typename T>
AdamW<T>::AdamW(std::vector<NamedParameter<T>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const bool decay = p.rank() >= 2 && params_[i].name != "pos_embed";
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      double x = w[k];
      if (decay) x -= lr * config_.weight_decay * x;
      x -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
      w[k] = static_cast<T>(x);
    }
  }
}

double cosine_learning_rate(const AdamWConfig& c, std::int64_t step, std::int64_t total_steps) {
  if (step < c.warmup_steps) return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  const auto span = total_steps - c.warmup_steps;
  if (span <= 0) return c.learning_rate;
  const double frac = std::min(1.0, static_cast<double>(step - c.warmup_steps) / static_cast<double>(span));
  return c.min_learning_rate + (c.learning_rate - c.min_learning_rate) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("train.lr must be positive");
  if (optimizer.min_learning_rate < 0.0 || optimizer.min_learning_rate > optimizer.learning_rate) {
    throw ConfigError("train.min_lr must lie in [0, lr]");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (optimizer.weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (optimizer.warmup_steps < 0) throw ConfigError("train.warmup_steps must be non-negative");
  if (optimizer.grad_clip < 0.0) throw ConfigError("train.grad_clip must be non-negative");
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,M,grad_norm_attn,grad_norm_other,lr\n";
  for (const auto& s : steps) {
    out << s.step << ',' << s.loss << ',' << s.mask << ',' << s.grad_norm_attn << ',' << s.grad_norm_other << ','
        << s.lr << '\n';
  }
  return out.str();
}

TrainLog TrainLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,loss,M,grad_norm_attn,grad_norm_other,lr") {
    throw DataError("training log: unexpected header");
  }
  TrainLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    StepRecord r;
    char c1, c2, c3, c4, c5;
    if (!(row >> r.step >> c1 >> r.loss >> c2 >> r.mask >> c3 >> r.grad_norm_attn >> c4 >> r.grad_norm_other >> c5 >>
          r.lr)) {
      throw DataError("training log: malformed row '" + line + "'");
    }
    log.steps.push_back(r);
  }
  return log;
}

namespace {

template <typename T>
double sum_squares(const Tensor<T>& t) {
  if (!t.has_grad()) return 0.0;
  double s = 0.0;
  for (T g : t.grad()) s += static_cast<double>(g) * g;
  return s;
}

}  // namespace

template <typename T>
TrainLog train_model(ViTModel<T>& model, const TrainConfig& config, const LabeledDataset& data,
                     const StepHook& before_step) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw DataError("training set is empty");
  const auto& mc = model.config();
  if (data.height != mc.image_h || data.width != mc.image_w || data.channels != mc.channels) {
    throw DimensionError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) + "x" +
                         std::to_string(data.channels) + ", model expects " + std::to_string(mc.image_h) + "x" +
                         std::to_string(mc.image_w) + "x" + std::to_string(mc.channels));
  }
  if (data.num_classes > mc.num_classes) throw DimensionError("dataset has more classes than the model head");

  model.set_requires_grad(true);
  const auto params = model.named_parameters();
  std::set<const detail::Node<T>*> attn_nodes;
  for (int b : config.selected_layers) {
    for (const auto& t : model.attention_parameters(b)) attn_nodes.insert(t.node().get());
  }
  AdamW<T> optimizer(params, config.optimizer);
  const std::int64_t n = data.size();
  const std::int64_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total = per_epoch * config.epochs;
  TrainLog log;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, 0x7A11 + static_cast<std::uint64_t>(epoch)));
    const auto order = rng.permutation(static_cast<int>(n));
    for (std::int64_t start = 0; start < n; start += config.batch_size, ++step) {
      const auto count = std::min<std::int64_t>(config.batch_size, n - start);
      std::vector<std::int64_t> idx(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(start + i)];
      StepRecord rec;
      rec.step = step;
      rec.mask = before_step ? before_step(step) : 1.0;
      rec.lr = cosine_learning_rate(config.optimizer, step, total);
      model.zero_grad();
      auto loss = cross_entropy(model.logits(data.images_at<T>(idx)), data.labels_at(idx));
      rec.loss = static_cast<double>(loss.item());
      if (!std::isfinite(rec.loss)) {
        throw NumericError("non-finite loss " + std::to_string(rec.loss) + " at step " + std::to_string(step) +
                           " (epoch " + std::to_string(epoch) + ", lr " + std::to_string(rec.lr) + ")");
      }
      backward(loss);
      double attn = 0.0, other = 0.0;
      for (const auto& p : params) (attn_nodes.count(p.tensor.node().get()) ? attn : other) += sum_squares(p.tensor);
      rec.grad_norm_attn = std::sqrt(attn);
      rec.grad_norm_other = std::sqrt(other);
      const double norm = std::sqrt(attn + other);
      if (config.optimizer.grad_clip > 0.0 && norm > config.optimizer.grad_clip) {
        const T shrink = static_cast<T>(config.optimizer.grad_clip / norm);
        for (const auto& p : params) {
          if (!p.tensor.has_grad()) continue;
          auto g = Tensor<T>(p.tensor).mutable_grad();
          for (auto& v : g) v *= shrink;
        }
      }
      optimizer.step(rec.lr);
      log.steps.push_back(rec);
    }
  }
  model.zero_grad();
  return log;
}

template <typename T>
std::int64_t topk_hits(const Tensor<T>& logits, const std::vector<int>& labels, int k) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<std::int64_t>(labels.size())) {
    throw DimensionError("topk: logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const auto classes = logits.dim(1);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * static_cast<std::size_t>(classes), static_cast<std::size_t>(classes));
    const T target = row[static_cast<std::size_t>(labels[i])];
    std::int64_t rank = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
      const T v = row[static_cast<std::size_t>(c)];
      if (v > target || (v == target && c < labels[i])) ++rank;
    }
    if (rank < k) ++hits;
  }
  return hits;
}

template <typename T>
EvalResult evaluate(const ViTModel<T>& model, const LabeledDataset& data, int batch_size, const std::set<int>& masked) {
  NoGradGuard guard;
  EvalResult r;
  std::int64_t h1 = 0, h5 = 0;
  ForwardOptions opts;
  opts.masked = masked;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    const auto idx = index_range(start, std::min<std::int64_t>(batch_size, data.size() - start));
    const auto logits = model.forward(data.images_at<T>(idx), opts).logits;
    const auto labels = data.labels_at(idx);
    h1 += topk_hits(logits, labels, 1);
    h5 += topk_hits(logits, labels, 5);
  }
  r.samples = data.size();
  if (r.samples > 0) {
    r.top1 = static_cast<double>(h1) / static_cast<double>(r.samples);
    r.top5 = static_cast<double>(h5) / static_cast<double>(r.samples);
  }
  return r;
}

template class AdamW<float>;
template class AdamW<double>;
template TrainLog train_model(ViTModel<float>&, const TrainConfig&, const LabeledDataset&, const StepHook&);
template TrainLog train_model(ViTModel<double>&, const TrainConfig&, const LabeledDataset&, const StepHook&);
template EvalResult evaluate(const ViTModel<float>&, const LabeledDataset&, int, const std::set<int>&);
template EvalResult evaluate(const ViTModel<double>&, const LabeledDataset&, int, const std::set<int>&);
template std::int64_t topk_hits(const Tensor<float>&, const std::vector<int>&, int);
template std::int64_t topk_hits(const Tensor<double>&, const std::vector<int>&, int);

}  // namespace entroprune
