#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "archinf/nn.hpp"
#include "archinf/rng.hpp"

namespace archinf {

// Logit magnitude used when sampling one-hot-style encodings. softmax over
// {+8, -8, ...} puts > 0.999 of the mass on the hot entry.
inline constexpr double kHotLogit = 8.0;
inline constexpr double kColdLogit = -8.0;

// The continuous architecture search space: L parametrized layers, each a
// softmax mixture over p = |base_sizes| * |activations| base layers, plus a
// presence gate per layer and a softmax over E preprocessing modules.
struct SearchSpaceSpec {
  std::size_t num_layers = 7;
  std::vector<std::size_t> base_sizes = {8, 16, 32, 64, 128, 256};
  std::vector<Activation> activations = {Activation::kRelu, Activation::kTanh};
  std::size_t num_preproc_modules = 3;

  std::size_t mixture_size() const {  // p
    return base_sizes.size() * activations.size();
  }
  std::size_t max_base_size() const;
  std::size_t encoding_dim() const {  // L*p + L + E
    return num_layers * mixture_size() + num_layers + num_preproc_modules;
  }
  // Stable hash of (L, sizes, activations, E); stored with every persisted
  // encoding so records from a different space are rejected on load.
  std::uint64_t fingerprint() const;
  std::string fingerprint_hex() const;

  void validate() const;

  // Small space used by tests and desk-scale runs.
  static SearchSpaceSpec desk_scale();
};

// u = {alpha, beta, gamma}. Immutable value type; all entries finite.
struct ArchitectureEncoding {
  std::vector<Vec> alpha;  // L rows of length p
  Vec beta;                // L
  Vec gamma;               // E

  static ArchitectureEncoding zeros(const SearchSpaceSpec& space);
  bool matches(const SearchSpaceSpec& space) const;
};

// Discrete readout of an encoding, for reports.
struct DiscreteArchitecture {
  std::vector<std::size_t> base_choice;  // argmax per alpha row
  std::vector<bool> layer_on;            // sigmoid(beta) >= 0.5
  std::size_t module_choice = 0;         // argmax of gamma
  std::string describe(const SearchSpaceSpec& space) const;
};

// softmax of one alpha row.
Vec mixing_weights(const ArchitectureEncoding& enc, std::size_t layer_index);

// sigmoid(beta_j).
double layer_gate(const ArchitectureEncoding& enc, std::size_t layer_index);

// Each alpha row one-hot at +-8, beta uniform in {+8,-8}, gamma one-hot.
ArchitectureEncoding random_one_hot_encoding(const SearchSpaceSpec& space,
                                             Rng& rng);

// Fixed order: alpha row-major, then beta, then gamma.
Vec flatten(const ArchitectureEncoding& enc);
ArchitectureEncoding unflatten(const Vec& flat, const SearchSpaceSpec& space);

DiscreteArchitecture discretize(const ArchitectureEncoding& enc);

}  // namespace archinf
