#pragma once

// The 3+n' module network: shared feature extractor, label classifier, domain
// discriminator(s) behind a gradient reversal layer, and one known/unknown
// discriminator per domain that has unlabeled data.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mulann/autodiff.hpp"

namespace mulann {

enum class Variant { digits_conv, mlp_synthetic };

inline const char* variant_name(Variant v) {
  return v == Variant::digits_conv ? "digits-conv" : "mlp-synthetic";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "digits-conv") return Variant::digits_conv;
  if (s == "mlp-synthetic") return Variant::mlp_synthetic;
  throw std::invalid_argument("unknown architecture variant '" + s + "'");
}

struct ArchitectureSpec {
  Variant variant = Variant::mlp_synthetic;
  /// Per-sample input shape: {C, H, W} for digits-conv, {D} for mlp-synthetic.
  Shape input_shape{2};
  std::size_t classes = 2;
  std::size_t domains = 2;
  /// n': number of domains carrying unlabeled data (one KUD head each).
  std::size_t unlabeled_domains = 0;
  bool mada = false;

  std::size_t input_size() const { return shape_numel(input_shape); }

  /// Width of the hidden layers in classifier and discriminator heads.
  std::size_t head_width() const { return variant == Variant::digits_conv ? 100 : 32; }

  /// Output width of a domain discriminator: one sigmoid logit for two
  /// domains, otherwise one softmax logit per domain.
  std::size_t domain_outputs() const { return domains == 2 ? 1 : domains; }

  void validate() const {
    if (domains < 2) throw std::invalid_argument("architecture: need at least 2 domains, got " + std::to_string(domains));
    if (unlabeled_domains > domains)
      throw std::invalid_argument("architecture: unlabeled domain count exceeds domain count");
    // A single class is accepted as the degenerate MADA/DANN reduction case.
    if (classes < 1) throw std::invalid_argument("architecture: need at least 1 class");
    if (input_shape.empty() || shape_numel(input_shape) == 0)
      throw std::invalid_argument("architecture: empty input shape");
    if (variant == Variant::digits_conv && input_shape.size() != 3)
      throw std::invalid_argument("architecture: digits-conv expects a {C,H,W} input shape, got " +
                                  shape_str(input_shape));
    if (variant == Variant::mlp_synthetic && input_shape.size() != 1)
      throw std::invalid_argument("architecture: mlp-synthetic expects a flat input shape, got " +
                                  shape_str(input_shape));
  }
};

struct DenseLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct ConvLayer {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
};

/// Dense stack with ReLU between layers. `relu_last` also rectifies the output.
struct Mlp {
  std::vector<DenseLayer> layers;
  bool relu_last = false;

  Var forward(Tape& tape, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = add_bias(matmul(x, tape.parameter(layers[i].weight)), tape.parameter(layers[i].bias));
      if (i + 1 < layers.size() || relu_last) x = relu(x);
    }
    return x;
  }
};

struct FeatureExtractor {
  Variant variant = Variant::mlp_synthetic;
  Shape input_shape;
  std::vector<ConvLayer> convs;
  Mlp dense;

  Var forward(Tape& tape, Var x) {
    if (variant == Variant::mlp_synthetic) return dense.forward(tape, x);
    Var h = reshape_rows(x, input_shape);
    for (auto& c : convs)
      h = maxpool2d(relu(conv2d(h, tape.parameter(c.weight), tape.parameter(c.bias))));
    return flatten(h);
  }
};

struct NetworkParams {
  ArchitectureSpec spec;
  FeatureExtractor features;
  Mlp classifier;
  /// One discriminator globally, or one per class with the MADA flag.
  std::vector<Mlp> domain;
  /// One known/unknown discriminator per domain with unlabeled data.
  std::vector<Mlp> kud;

  std::vector<std::pair<std::string, Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto add_mlp = [&out](const std::string& prefix, Mlp& m) {
      for (std::size_t i = 0; i < m.layers.size(); ++i) {
        out.emplace_back(prefix + ".fc" + std::to_string(i) + ".weight", &m.layers[i].weight);
        out.emplace_back(prefix + ".fc" + std::to_string(i) + ".bias", &m.layers[i].bias);
      }
    };
    for (std::size_t i = 0; i < features.convs.size(); ++i) {
      out.emplace_back("features.conv" + std::to_string(i) + ".weight", &features.convs[i].weight);
      out.emplace_back("features.conv" + std::to_string(i) + ".bias", &features.convs[i].bias);
    }
    add_mlp("features", features.dense);
    add_mlp("classifier", classifier);
    for (std::size_t k = 0; k < domain.size(); ++k) add_mlp("domain." + std::to_string(k), domain[k]);
    for (std::size_t j = 0; j < kud.size(); ++j) add_mlp("kud." + std::to_string(j), kud[j]);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : named_parameters()) t->zero_grad();
  }

  std::size_t feature_dim() const;
};

struct TraceEntry {
  std::string layer;
  /// Per-sample shape, reported H x W x C for image stages.
  Shape shape;
};

/// Per-sample activation shapes through the feature extractor, without
/// building any parameters. Rejects inputs the conv/pool stack cannot consume.
inline std::vector<TraceEntry> feature_shape_trace(const ArchitectureSpec& spec) {
  spec.validate();
  std::vector<TraceEntry> trace;
  if (spec.variant == Variant::mlp_synthetic) {
    trace.push_back({"input", spec.input_shape});
    trace.push_back({"fc64+relu", {64}});
    trace.push_back({"fc64+relu", {64}});
    return trace;
  }
  std::size_t c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
  trace.push_back({"input", {h, w, c}});
  const std::size_t widths[] = {32, 48};
  for (std::size_t stage = 0; stage < 2; ++stage) {
    if (h < 5 || w < 5)
      throw ShapeError("build: " + std::to_string(h) + "x" + std::to_string(w) +
                       " plane too small for 5x5 conv at stage " + std::to_string(stage + 1));
    h -= 4;
    w -= 4;
    c = widths[stage];
    trace.push_back({"conv5x5-" + std::to_string(c) + "+relu", {h, w, c}});
    if (h < 2 || w < 2)
      throw ShapeError("build: " + std::to_string(h) + "x" + std::to_string(w) +
                       " plane too small for 2x2 max pool at stage " + std::to_string(stage + 1));
    h /= 2;
    w /= 2;
    trace.push_back({"maxpool2x2", {h, w, c}});
  }
  trace.push_back({"flatten", {h * w * c}});
  return trace;
}

inline std::size_t NetworkParams::feature_dim() const {
  return feature_shape_trace(spec).back().shape[0];
}

namespace detail {

inline Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(std::move(shape));
  for (double& v : t.values) v = dist(rng);
  t.requires_grad = true;
  return t;
}

inline Tensor zero_bias(std::size_t n) {
  Tensor t(Shape{n});
  t.requires_grad = true;
  return t;
}

inline Mlp make_mlp(const std::vector<std::size_t>& widths, bool relu_last, std::mt19937_64& rng) {
  Mlp m;
  m.relu_last = relu_last;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back({glorot({widths[i], widths[i + 1]}, widths[i], widths[i + 1], rng),
                        zero_bias(widths[i + 1])});
  return m;
}

}  // namespace detail

/// Initializes all modules. Weights are Glorot-uniform, biases zero. Draw order
/// is features, classifier, domain head(s), KUD heads, so configurations that
/// differ only in trailing heads share every earlier parameter bit for bit.
inline NetworkParams build(const ArchitectureSpec& spec, std::uint64_t seed) {
  const auto trace = feature_shape_trace(spec);
  std::mt19937_64 rng(seed);
  NetworkParams net;
  net.spec = spec;
  net.features.variant = spec.variant;
  net.features.input_shape = spec.input_shape;
  if (spec.variant == Variant::digits_conv) {
    std::size_t in_c = spec.input_shape[0];
    for (std::size_t out_c : {32u, 48u}) {
      net.features.convs.push_back(
          {detail::glorot({out_c, in_c, 5, 5}, in_c * 25, out_c * 25, rng), detail::zero_bias(out_c)});
      in_c = out_c;
    }
  } else {
    net.features.dense = detail::make_mlp({spec.input_size(), 64, 64}, /*relu_last=*/true, rng);
  }
  const std::size_t f = trace.back().shape[0];
  const std::size_t hw = spec.head_width();
  net.classifier = detail::make_mlp({f, hw, hw, spec.classes}, false, rng);
  const std::size_t n_disc = spec.mada ? spec.classes : 1;
  for (std::size_t k = 0; k < n_disc; ++k)
    net.domain.push_back(detail::make_mlp({f, hw, spec.domain_outputs()}, false, rng));
  for (std::size_t j = 0; j < spec.unlabeled_domains; ++j)
    net.kud.push_back(detail::make_mlp({f, hw, 1}, false, rng));
  return net;
}

/// Outputs of every head on one batch.
struct HeadOutputs {
  Var features;
  Var class_logits;
  Tensor class_probs;
  /// Logits of each domain discriminator, computed on grl(features).
  std::vector<Var> domain_logits;
  /// Logits of each KUD head, computed on features without reversal.
  std::vector<Var> kud_logits;
};

/// Evaluates all heads from the shared features. `batch` is [N, input_size].
inline HeadOutputs forward_all(NetworkParams& net, Tape& tape, Var batch, double lambda) {
  const Tensor& X = batch.value();
  if (X.rank() != 2 || X.dim(1) != net.spec.input_size())
    throw ShapeError("forward_all: batch " + shape_str(X.shape) + " does not match input size " +
                     std::to_string(net.spec.input_size()));
  HeadOutputs out;
  out.features = net.features.forward(tape, batch);
  out.class_logits = net.classifier.forward(tape, out.features);
  out.class_probs = softmax_values(out.class_logits.value());
  Var reversed = grl(out.features, lambda);
  for (auto& d : net.domain) out.domain_logits.push_back(d.forward(tape, reversed));
  for (auto& u : net.kud) out.kud_logits.push_back(u.forward(tape, out.features));
  return out;
}

/// Extracted features for a batch of samples (no gradient bookkeeping).
inline Tensor extract_features(NetworkParams& net, const Tensor& batch) {
  Tape tape(false);
  return net.features.forward(tape, tape.constant(batch)).value();
}

/// Class posteriors for a batch of samples.
inline Tensor predict_probs(NetworkParams& net, const Tensor& batch) {
  Tape tape(false);
  Var f = net.features.forward(tape, tape.constant(batch));
  return softmax_values(net.classifier.forward(tape, f).value());
}

}  // namespace mulann
