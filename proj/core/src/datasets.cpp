#include "dfil/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dfil/errors.hpp"
#include "dfil/rng.hpp"

namespace dfil {

using nlohmann::json;

void GaussianMixture::validate(std::size_t dim) const {
  if (components.empty()) {
    throw GenerationError("mixture: needs at least one component");
  }
  double total_weight = 0.0;
  for (const GaussianComponent& c : components) {
    if (c.mean.size() != dim || c.scale.size() != dim) {
      throw GenerationError("mixture: component dimension != " +
                            std::to_string(dim));
    }
    for (double s : c.scale) {
      if (s <= 0.0) throw GenerationError("mixture: scale must be positive");
    }
    if (c.weight <= 0.0) {
      throw GenerationError("mixture: component weight must be positive");
    }
    total_weight += c.weight;
  }
  if (std::abs(total_weight - 1.0) > 1e-9) {
    throw GenerationError("mixture: weights sum to " +
                          std::to_string(total_weight) + ", expected 1");
  }
}

void DomainSpec::validate() const {
  if (name.empty()) throw GenerationError("domain: empty name");
  if (input_dim == 0) throw GenerationError("domain: zero input_dim");
  real.validate(input_dim);
  if (fake_shift.size() != input_dim) {
    throw GenerationError("domain " + name + ": fake_shift dimension");
  }
  for (std::size_t c : fake_scale_coords) {
    if (c >= input_dim) {
      throw GenerationError("domain " + name + ": scale coordinate out of range");
    }
  }
  if (fake_scale_factor <= 0.0) {
    throw GenerationError("domain " + name + ": scale factor must be positive");
  }
  if (n_train_per_class < 4) {
    throw GenerationError("domain " + name +
                          ": needs at least 4 training samples per class");
  }
  if (n_test_per_class < 1) {
    throw GenerationError("domain " + name + ": needs test samples");
  }
}

GaussianMixture DomainSpec::fake_mixture() const {
  GaussianMixture fake = real;
  for (GaussianComponent& c : fake.components) {
    for (std::size_t i = 0; i < input_dim; ++i) c.mean[i] += fake_shift[i];
    for (std::size_t i : fake_scale_coords) c.scale[i] *= fake_scale_factor;
  }
  return fake;
}

void StreamSpec::validate() const {
  if (domains.empty()) throw GenerationError("stream: no domains");
  if (few_shot_cap < 4) {
    throw GenerationError("stream: few_shot_cap must be at least 4");
  }
  for (const DomainSpec& d : domains) d.validate();
}

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset: empty");
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw ValidationError("dataset: inputs " + inputs.shape_str() + " vs " +
                          std::to_string(labels.size()) + " labels");
  }
  bool has[2] = {false, false};
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ValidationError("dataset: label outside {0,1}");
    }
    has[y] = true;
  }
  if (!has[0] || !has[1]) {
    throw ValidationError("dataset: both classes must be present (" +
                          domain + "/" + split + ")");
  }
}

namespace {

std::vector<double> sample_mixture(const GaussianMixture& mix,
                                   std::size_t dim, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  const GaussianComponent* chosen = &mix.components.back();
  for (const GaussianComponent& c : mix.components) {
    cumulative += c.weight;
    if (u < cumulative) {
      chosen = &c;
      break;
    }
  }
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    x[i] = chosen->mean[i] + chosen->scale[i] * rng.normal();
  }
  return x;
}

Dataset sample_split(const DomainSpec& spec, const GaussianMixture& fake,
                     std::size_t per_class, const std::string& split,
                     Rng& rng) {
  const std::size_t d = spec.input_dim;
  Tensor inputs = Tensor::zeros({2 * per_class, d});
  std::vector<int> labels(2 * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    const std::vector<double> x = sample_mixture(spec.real, d, rng);
    for (std::size_t c = 0; c < d; ++c) inputs.at(i, c) = x[c];
    labels[i] = 0;
  }
  for (std::size_t i = 0; i < per_class; ++i) {
    const std::vector<double> x = sample_mixture(fake, d, rng);
    for (std::size_t c = 0; c < d; ++c) inputs.at(per_class + i, c) = x[c];
    labels[per_class + i] = 1;
  }
  Dataset out;
  out.domain = spec.name;
  out.split = split;
  out.inputs = std::move(inputs);
  out.labels = std::move(labels);
  return out;
}

}  // namespace

TaskSequence generate_stream(const StreamSpec& spec, std::uint64_t seed) {
  spec.validate();
  TaskSequence sequence;
  for (std::size_t i = 0; i < spec.domains.size(); ++i) {
    const DomainSpec& domain = spec.domains[i];
    Rng rng(derive_seed(seed, {kDataStream, i, domain.seed_offset}));
    const GaussianMixture fake = domain.fake_mixture();

    std::size_t train_per_class = domain.n_train_per_class;
    if (i > 0) {
      train_per_class = std::min(train_per_class, spec.few_shot_cap / 2);
    }
    DomainTask task;
    task.name = domain.name;
    task.train = sample_split(domain, fake, train_per_class, "train", rng);
    task.test = sample_split(domain, fake, domain.n_test_per_class, "test", rng);
    task.train.validate();
    task.test.validate();
    sequence.push_back(std::move(task));
  }
  return sequence;
}

// ---- CSV io -------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_csv: cannot open " + path.string());

  std::string line;
  if (!std::getline(is, line)) {
    throw ParseError("load_csv: empty file " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw ParseError("load_csv: header must be x0,...,x{d-1},label");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[i] != "x" + std::to_string(i)) {
      throw ParseError("load_csv: unexpected header column '" + header[i] +
                       "', expected x" + std::to_string(i));
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != d + 1) {
      throw ParseError("load_csv: line " + std::to_string(line_no) + ": got " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(d + 1));
    }
    for (std::size_t i = 0; i < d; ++i) {
      double v = 0.0;
      const char* begin = fields[i].data();
      const char* end = begin + fields[i].size();
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end) {
        throw ParseError("load_csv: line " + std::to_string(line_no) +
                         ": bad number '" + fields[i] + "'");
      }
      if (!std::isfinite(v)) {
        throw ParseError("load_csv: line " + std::to_string(line_no) +
                         ": non-finite value");
      }
      values.push_back(v);
    }
    const std::string& label_field = fields[d];
    if (label_field == "0") {
      labels.push_back(0);
    } else if (label_field == "1") {
      labels.push_back(1);
    } else {
      throw ValidationError("load_csv: line " + std::to_string(line_no) +
                            ": label must be 0 or 1, got '" + label_field + "'");
    }
  }
  if (labels.empty()) {
    throw ValidationError("load_csv: no data rows in " + path.string());
  }

  Dataset out;
  out.domain = path.stem().string();
  out.split = "";
  out.inputs = Tensor({labels.size(), d}, std::move(values));
  out.labels = std::move(labels);
  out.validate();
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw StateError("save_csv: cannot write " + path.string());
  const std::size_t d = data.inputs.cols();
  for (std::size_t i = 0; i < d; ++i) os << "x" << i << ",";
  os << "label\n";
  char buf[64];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.inputs.at(r, c));
      os << buf << ",";
    }
    os << data.labels[r] << "\n";
  }
  if (!os) throw StateError("save_csv: write failed for " + path.string());
}

// ---- presets and JSON -----------------------------------------------------------

namespace {

GaussianMixture two_blob_real_mixture(std::size_t d) {
  GaussianComponent a;
  a.mean.assign(d, 0.0);
  a.mean[0] = 1.0;
  a.mean[1] = 0.6;
  a.scale.assign(d, 0.8);
  a.weight = 0.5;
  GaussianComponent b;
  b.mean.assign(d, 0.0);
  b.mean[0] = -1.0;
  b.mean[1] = -0.6;
  b.scale.assign(d, 0.8);
  b.weight = 0.5;
  return GaussianMixture{{a, b}};
}

DomainSpec make_domain(std::size_t index, std::size_t d, std::size_t shift_axis,
                       bool identical_fakes) {
  DomainSpec spec;
  spec.name = "domain" + std::to_string(index + 1);
  spec.input_dim = d;
  spec.real = two_blob_real_mixture(d);
  spec.fake_shift.assign(d, 0.0);
  spec.fake_shift[identical_fakes ? 2 : shift_axis] = 2.5;
  spec.fake_scale_coords = {(2 * index + 4) % d, (2 * index + 5) % d};
  if (identical_fakes) spec.fake_scale_coords = {6, 7};
  spec.fake_scale_factor = 1.3;
  spec.n_train_per_class = 400;
  spec.n_test_per_class = 200;
  spec.seed_offset = index + 1;
  return spec;
}

StreamSpec build_preset(std::size_t domains, bool identical_fakes) {
  StreamSpec spec;
  spec.few_shot_cap = 200;
  for (std::size_t i = 0; i < domains; ++i) {
    // Fake clusters move along a fresh axis each domain (axes 2..5), keeping
    // them orthogonal to the real-mixture spread on axes 0-1 and to each
    // other, so a model fit to one domain carries no signal for the next.
    spec.domains.push_back(make_domain(i, 8, 2 + i, identical_fakes));
  }
  return spec;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"four-domain", "four-domain-identical", "two-domain"};
}

StreamSpec preset(const std::string& name) {
  if (name == "four-domain") return build_preset(4, false);
  if (name == "four-domain-identical") return build_preset(4, true);
  if (name == "two-domain") return build_preset(2, false);
  throw ParameterError("unknown preset: " + name);
}

namespace {

json mixture_to_json(const GaussianMixture& m) {
  json components = json::array();
  for (const GaussianComponent& c : m.components) {
    components.push_back(
        {{"mean", c.mean}, {"scale", c.scale}, {"weight", c.weight}});
  }
  return {{"components", components}};
}

GaussianMixture mixture_from_json(const json& j) {
  GaussianMixture m;
  for (const json& c : j.at("components")) {
    GaussianComponent comp;
    comp.mean = c.at("mean").get<std::vector<double>>();
    comp.scale = c.at("scale").get<std::vector<double>>();
    comp.weight = c.at("weight").get<double>();
    m.components.push_back(std::move(comp));
  }
  return m;
}

json domain_to_json(const DomainSpec& d) {
  return {{"name", d.name},
          {"input_dim", d.input_dim},
          {"real", mixture_to_json(d.real)},
          {"fake_shift", d.fake_shift},
          {"fake_scale_coords", d.fake_scale_coords},
          {"fake_scale_factor", d.fake_scale_factor},
          {"n_train_per_class", d.n_train_per_class},
          {"n_test_per_class", d.n_test_per_class},
          {"seed_offset", d.seed_offset}};
}

DomainSpec domain_from_json(const json& j) {
  DomainSpec d;
  d.name = j.at("name").get<std::string>();
  d.input_dim = j.at("input_dim").get<std::size_t>();
  d.real = mixture_from_json(j.at("real"));
  d.fake_shift = j.at("fake_shift").get<std::vector<double>>();
  d.fake_scale_coords =
      j.at("fake_scale_coords").get<std::vector<std::size_t>>();
  d.fake_scale_factor = j.at("fake_scale_factor").get<double>();
  d.n_train_per_class = j.at("n_train_per_class").get<std::size_t>();
  d.n_test_per_class = j.at("n_test_per_class").get<std::size_t>();
  d.seed_offset = j.value("seed_offset", 0ULL);
  return d;
}

json stream_to_json_obj(const StreamSpec& spec) {
  json domains = json::array();
  for (const DomainSpec& d : spec.domains) domains.push_back(domain_to_json(d));
  return {{"few_shot_cap", spec.few_shot_cap}, {"domains", domains}};
}

StreamSpec stream_from_json_obj(const json& j) {
  StreamSpec spec;
  spec.few_shot_cap = j.value("few_shot_cap", 200ULL);
  for (const json& d : j.at("domains")) {
    spec.domains.push_back(domain_from_json(d));
  }
  return spec;
}

}  // namespace

StreamSpec stream_spec_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("stream spec: invalid JSON");
  try {
    return stream_from_json_obj(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("stream spec: ") + e.what());
  }
}

std::string stream_spec_to_json(const StreamSpec& spec) {
  return stream_to_json_obj(spec).dump(2);
}

std::string preset_catalog_json() {
  json catalog;
  for (const std::string& name : preset_names()) {
    catalog["presets"][name] = stream_to_json_obj(preset(name));
  }
  return catalog.dump(2);
}

}  // namespace dfil
