#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfil/autodiff.hpp"
#include "dfil/tensor.hpp"

namespace dfil {

enum class Activation { Linear, ReLU };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // length out
  Activation activation = Activation::Linear;
};

// Architecture description. The encoder is the hidden stack plus a final
// linear projection to feature_dim; the classifier maps features to the two
// class logits.
struct ModelConfig {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t feature_dim = 16;

  void validate() const;
};

// Output of a single-sample forward pass: the feature representation, the
// class logits, and their softmax at temperature 1.
struct Prediction {
  Tensor features;  // length feature_dim
  Tensor logits;    // length 2
  Tensor probs;     // length 2, sums to 1 within 1e-12
};

// Batched counterpart; one row per sample.
struct BatchOutput {
  Tensor features;  // B x feature_dim
  Tensor logits;    // B x 2
  Tensor probs;     // B x 2
};

// Detection model: a dense feature encoder followed by a linear classifier.
// Plain value semantics; copying a Model is the teacher-snapshot operation.
class Model {
 public:
  static constexpr std::size_t kNumClasses = 2;  // 0 = real, 1 = fake

  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases,
  // drawn from the given seed.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  Prediction forward(const Tensor& x) const;
  BatchOutput forward_batch(const Tensor& inputs) const;

  // Independent deep copy: mutating the copy never touches the original, and
  // both produce bit-identical outputs until one of them is updated.
  Model snapshot() const { return *this; }

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  const std::vector<DenseLayer>& encoder() const { return encoder_; }
  const DenseLayer& classifier() const { return classifier_; }
  std::uint64_t seed() const { return seed_; }

  // Canonical flat parameter order: encoder layers in order, then the
  // classifier; weight (row-major) before bias within each layer.
  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(const std::vector<double>& params);

  // Registers every parameter as a differentiable input on the tape, in
  // flat-parameter order.
  struct TapedParams {
    std::vector<Var> encoder_weights;
    std::vector<Var> encoder_biases;
    Var classifier_weight;
    Var classifier_bias;
  };
  TapedParams register_on(Tape& tape) const;

  // Taped batched forward through registered parameters.
  // Returns (features, logits).
  static std::pair<Var, Var> forward_on(const TapedParams& params,
                                        const std::vector<Activation>& acts,
                                        Var inputs);
  std::vector<Activation> activations() const;

  // Gradient of every parameter after a backward() on the given tape,
  // concatenated in flat-parameter order.
  static std::vector<double> collect_gradients(const Tape& tape,
                                               const TapedParams& params);

  // Checkpoint: one JSON header line followed by the parameters as
  // little-endian 64-bit floats in flat order. Extension: .dfil
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  Model() = default;

  std::vector<DenseLayer> encoder_;
  DenseLayer classifier_;
  std::uint64_t seed_ = 0;
};

// FNV-1a over the raw parameter bytes; used to assert teacher immutability.
std::uint64_t parameter_hash(const Model& model);

}  // namespace dfil
