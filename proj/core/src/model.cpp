#include "dfil/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dfil/errors.hpp"
#include "dfil/rng.hpp"

namespace dfil {

using nlohmann::json;

std::string to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "linear") return Activation::Linear;
  throw ParameterError("unknown activation: " + s);
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ParameterError("model: input_dim must be positive");
  if (feature_dim == 0) {
    throw ParameterError("model: feature_dim must be positive");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ParameterError("model: hidden dims must be positive");
  }
}

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor({fan_in, fan_out}, std::move(w));
}

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act,
                      Rng& rng) {
  DenseLayer layer;
  layer.weight = glorot_uniform(in, out, rng);
  layer.bias = Tensor::zeros({out});
  layer.activation = act;
  return layer;
}

Tensor apply_layer(const DenseLayer& layer, const Tensor& x) {
  Tensor z = add_rowvec(matmul(x, layer.weight), layer.bias);
  return layer.activation == Activation::ReLU ? relu(z) : z;
}

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.seed_ = seed;
  std::size_t in = config.input_dim;
  for (std::size_t h : config.hidden) {
    m.encoder_.push_back(make_layer(in, h, Activation::ReLU, rng));
    in = h;
  }
  m.encoder_.push_back(make_layer(in, config.feature_dim, Activation::Linear, rng));
  m.classifier_ = make_layer(config.feature_dim, kNumClasses,
                             Activation::Linear, rng);
  return m;
}

std::size_t Model::input_dim() const { return encoder_.front().weight.rows(); }

std::size_t Model::feature_dim() const {
  return encoder_.back().weight.cols();
}

BatchOutput Model::forward_batch(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.cols() != input_dim()) {
    throw DimensionError("forward: inputs " + inputs.shape_str() +
                         " incompatible with encoder layer 0 expecting " +
                         std::to_string(input_dim()) + " columns");
  }
  Tensor h = inputs;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    if (h.cols() != encoder_[i].weight.rows()) {
      throw DimensionError("forward: dimension mismatch at encoder layer " +
                           std::to_string(i));
    }
    h = apply_layer(encoder_[i], h);
  }
  BatchOutput out;
  out.features = h;
  out.logits = apply_layer(classifier_, h);
  out.probs = softmax_rows(out.logits, 1.0);
  return out;
}

Prediction Model::forward(const Tensor& x) const {
  if (x.rank() != 1 || x.size() != input_dim()) {
    throw DimensionError("forward: input " + x.shape_str() +
                         " incompatible with encoder layer 0 expecting length " +
                         std::to_string(input_dim()));
  }
  BatchOutput b = forward_batch(x.reshaped({1, x.size()}));
  Prediction p;
  p.features = b.features.row(0);
  p.logits = b.logits.row(0);
  p.probs = b.probs.row(0);
  return p;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : encoder_) n += l.weight.size() + l.bias.size();
  n += classifier_.weight.size() + classifier_.bias.size();
  return n;
}

std::vector<double> Model::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  auto append = [&out](const DenseLayer& l) {
    out.insert(out.end(), l.weight.raw().begin(), l.weight.raw().end());
    out.insert(out.end(), l.bias.raw().begin(), l.bias.raw().end());
  };
  for (const DenseLayer& l : encoder_) append(l);
  append(classifier_);
  return out;
}

void Model::set_flat_parameters(const std::vector<double>& params) {
  if (params.size() != parameter_count()) {
    throw DimensionError("set_flat_parameters: expected " +
                         std::to_string(parameter_count()) + " values, got " +
                         std::to_string(params.size()));
  }
  std::size_t pos = 0;
  auto take = [&](DenseLayer& l) {
    for (double& v : l.weight.raw()) v = params[pos++];
    for (double& v : l.bias.raw()) v = params[pos++];
  };
  for (DenseLayer& l : encoder_) take(l);
  take(classifier_);
}

Model::TapedParams Model::register_on(Tape& tape) const {
  TapedParams p;
  for (const DenseLayer& l : encoder_) {
    p.encoder_weights.push_back(tape.input(l.weight));
    p.encoder_biases.push_back(tape.input(l.bias));
  }
  p.classifier_weight = tape.input(classifier_.weight);
  p.classifier_bias = tape.input(classifier_.bias);
  return p;
}

std::vector<Activation> Model::activations() const {
  std::vector<Activation> acts;
  for (const DenseLayer& l : encoder_) acts.push_back(l.activation);
  return acts;
}

std::pair<Var, Var> Model::forward_on(const TapedParams& params,
                                      const std::vector<Activation>& acts,
                                      Var inputs) {
  Var h = inputs;
  for (std::size_t i = 0; i < params.encoder_weights.size(); ++i) {
    Var z = add_rowvec(matmul(h, params.encoder_weights[i]),
                       params.encoder_biases[i]);
    h = acts[i] == Activation::ReLU ? relu(z) : z;
  }
  Var logits =
      add_rowvec(matmul(h, params.classifier_weight), params.classifier_bias);
  return {h, logits};
}

std::vector<double> Model::collect_gradients(const Tape& tape,
                                             const TapedParams& params) {
  std::vector<double> out;
  auto append = [&](Var v) {
    const Tensor& g = tape.grad(v);
    out.insert(out.end(), g.raw().begin(), g.raw().end());
  };
  for (std::size_t i = 0; i < params.encoder_weights.size(); ++i) {
    append(params.encoder_weights[i]);
    append(params.encoder_biases[i]);
  }
  append(params.classifier_weight);
  append(params.classifier_bias);
  return out;
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

void write_le_doubles(std::ostream& os, const std::vector<double>& values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
      bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_le_doubles(std::istream& is, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
      throw ParseError("checkpoint: truncated parameter blob at value " +
                       std::to_string(k));
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    out[k] = v;
  }
  return out;
}

}  // namespace

void Model::save(const std::filesystem::path& path) const {
  json header;
  header["format"] = "dfil-checkpoint";
  header["version"] = 1;
  header["input_dim"] = input_dim();
  header["feature_dim"] = feature_dim();
  header["num_classes"] = kNumClasses;
  header["seed"] = seed_;
  json layers = json::array();
  auto describe = [](const DenseLayer& l) {
    return json{{"in", l.weight.rows()},
                {"out", l.weight.cols()},
                {"activation", to_string(l.activation)}};
  };
  for (const DenseLayer& l : encoder_) layers.push_back(describe(l));
  header["encoder"] = layers;
  header["classifier"] = describe(classifier_);
  header["param_count"] = parameter_count();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw StateError("checkpoint: cannot write " + path.string());
  os << header.dump() << "\n";
  write_le_doubles(os, flat_parameters());
  if (!os) throw StateError("checkpoint: write failed for " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw ParseError("checkpoint: missing header line in " + path.string());
  }
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "dfil-checkpoint") {
    throw ParseError("checkpoint: bad header in " + path.string());
  }

  Model m;
  m.seed_ = header.at("seed").get<std::uint64_t>();
  auto build = [](const json& j) {
    DenseLayer l;
    const auto in = j.at("in").get<std::size_t>();
    const auto out = j.at("out").get<std::size_t>();
    l.weight = Tensor::zeros({in, out});
    l.bias = Tensor::zeros({out});
    l.activation = activation_from_string(j.at("activation").get<std::string>());
    return l;
  };
  for (const json& j : header.at("encoder")) m.encoder_.push_back(build(j));
  m.classifier_ = build(header.at("classifier"));

  const auto count = header.at("param_count").get<std::size_t>();
  if (count != m.parameter_count()) {
    throw ParseError("checkpoint: param_count disagrees with layer shapes");
  }
  m.set_flat_parameters(read_le_doubles(is, count));
  return m;
}

std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : model.flat_parameters()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace dfil
