#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfil/tensor.hpp"

namespace dfil {

struct GaussianComponent {
  std::vector<double> mean;
  std::vector<double> scale;  // per-coordinate standard deviation
  double weight = 1.0;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;
  void validate(std::size_t dim) const;
};

// One synthetic domain. Real samples come from the shared mixture; fake
// samples come from the same mixture translated by fake_shift and stretched
// by fake_scale_factor along fake_scale_coords. Keeping the real side fixed
// while the fake side moves per domain is what gives the stream its
// domain-shift structure.
struct DomainSpec {
  std::string name;
  std::size_t input_dim = 8;
  GaussianMixture real;
  std::vector<double> fake_shift;
  std::vector<std::size_t> fake_scale_coords;
  double fake_scale_factor = 1.0;
  std::size_t n_train_per_class = 400;
  std::size_t n_test_per_class = 200;
  std::uint64_t seed_offset = 0;

  void validate() const;
  GaussianMixture fake_mixture() const;
};

struct StreamSpec {
  std::vector<DomainSpec> domains;
  // Cap on the total training-sample count of every task after the first,
  // split evenly between the classes. Test sets are never capped.
  std::size_t few_shot_cap = 200;

  void validate() const;
};

struct Dataset {
  std::string domain;
  std::string split;  // "train" | "test"
  Tensor inputs;      // n x d
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

struct DomainTask {
  std::string name;
  Dataset train;
  Dataset test;
};

using TaskSequence = std::vector<DomainTask>;

// Deterministic sampling: the same spec and seed always produce the same
// stream, byte for byte once written to CSV.
TaskSequence generate_stream(const StreamSpec& spec, std::uint64_t seed);

// CSV interchange. Header: x0,...,x{d-1},label with label in {0,1}.
// Row order is preserved; doubles are written with round-trip precision.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Built-in preset catalog.
std::vector<std::string> preset_names();
StreamSpec preset(const std::string& name);

// JSON (de)serialization for --spec files and the presets.json catalog.
StreamSpec stream_spec_from_json(const std::string& text);
std::string stream_spec_to_json(const StreamSpec& spec);
std::string preset_catalog_json();

}  // namespace dfil
