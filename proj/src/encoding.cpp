#include "archinf/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace archinf {

namespace {

// FNV-1a over a canonical textual form of the space.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::size_t SearchSpaceSpec::max_base_size() const {
  return *std::max_element(base_sizes.begin(), base_sizes.end());
}

std::uint64_t SearchSpaceSpec::fingerprint() const {
  std::ostringstream os;
  os << "L=" << num_layers << ";sizes=";
  for (auto s : base_sizes) os << s << ",";
  os << ";acts=";
  for (auto a : activations) os << activation_name(a) << ",";
  os << ";E=" << num_preproc_modules;
  return fnv1a(os.str());
}

std::string SearchSpaceSpec::fingerprint_hex() const {
  std::ostringstream os;
  os << std::hex << fingerprint();
  return os.str();
}

void SearchSpaceSpec::validate() const {
  if (num_layers < 1) throw std::invalid_argument("space: num_layers >= 1 required");
  if (base_sizes.empty()) throw std::invalid_argument("space: base_sizes empty");
  if (activations.empty()) throw std::invalid_argument("space: activations empty");
  if (num_preproc_modules < 1)
    throw std::invalid_argument("space: num_preproc_modules >= 1 required");
}

SearchSpaceSpec SearchSpaceSpec::desk_scale() {
  SearchSpaceSpec s;
  s.num_layers = 3;
  s.base_sizes = {4, 8, 16};
  s.activations = {Activation::kRelu, Activation::kTanh};
  s.num_preproc_modules = 3;
  return s;
}

ArchitectureEncoding ArchitectureEncoding::zeros(const SearchSpaceSpec& space) {
  ArchitectureEncoding e;
  e.alpha.assign(space.num_layers, Vec(space.mixture_size(), 0.0));
  e.beta.assign(space.num_layers, 0.0);
  e.gamma.assign(space.num_preproc_modules, 0.0);
  return e;
}

bool ArchitectureEncoding::matches(const SearchSpaceSpec& space) const {
  if (alpha.size() != space.num_layers || beta.size() != space.num_layers ||
      gamma.size() != space.num_preproc_modules)
    return false;
  for (const auto& row : alpha)
    if (row.size() != space.mixture_size()) return false;
  return true;
}

Vec mixing_weights(const ArchitectureEncoding& enc, std::size_t layer_index) {
  if (layer_index >= enc.alpha.size())
    throw std::out_of_range("mixing_weights: layer index out of range");
  return softmax(enc.alpha[layer_index]);
}

double layer_gate(const ArchitectureEncoding& enc, std::size_t layer_index) {
  if (layer_index >= enc.beta.size())
    throw std::out_of_range("layer_gate: layer index out of range");
  return sigmoid(enc.beta[layer_index]);
}

ArchitectureEncoding random_one_hot_encoding(const SearchSpaceSpec& space,
                                             Rng& rng) {
  ArchitectureEncoding e;
  e.alpha.assign(space.num_layers, Vec(space.mixture_size(), kColdLogit));
  for (auto& row : e.alpha) row[rng.index(space.mixture_size())] = kHotLogit;
  e.beta.resize(space.num_layers);
  for (auto& b : e.beta) b = rng.coin() ? kHotLogit : kColdLogit;
  e.gamma.assign(space.num_preproc_modules, kColdLogit);
  e.gamma[rng.index(space.num_preproc_modules)] = kHotLogit;
  return e;
}

Vec flatten(const ArchitectureEncoding& enc) {
  Vec flat;
  std::size_t n = enc.beta.size() + enc.gamma.size();
  for (const auto& row : enc.alpha) n += row.size();
  flat.reserve(n);
  for (const auto& row : enc.alpha) flat.insert(flat.end(), row.begin(), row.end());
  flat.insert(flat.end(), enc.beta.begin(), enc.beta.end());
  flat.insert(flat.end(), enc.gamma.begin(), enc.gamma.end());
  return flat;
}

ArchitectureEncoding unflatten(const Vec& flat, const SearchSpaceSpec& space) {
  if (flat.size() != space.encoding_dim())
    throw std::invalid_argument("unflatten: expected length " +
                                std::to_string(space.encoding_dim()) + ", got " +
                                std::to_string(flat.size()));
  ArchitectureEncoding e;
  const std::size_t p = space.mixture_size();
  std::size_t off = 0;
  e.alpha.resize(space.num_layers);
  for (auto& row : e.alpha) {
    row.assign(flat.begin() + off, flat.begin() + off + p);
    off += p;
  }
  e.beta.assign(flat.begin() + off, flat.begin() + off + space.num_layers);
  off += space.num_layers;
  e.gamma.assign(flat.begin() + off, flat.end());
  return e;
}

namespace {
std::size_t argmax_lowest_tie(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}
}  // namespace

DiscreteArchitecture discretize(const ArchitectureEncoding& enc) {
  DiscreteArchitecture d;
  d.base_choice.reserve(enc.alpha.size());
  for (const auto& row : enc.alpha) d.base_choice.push_back(argmax_lowest_tie(row));
  d.layer_on.reserve(enc.beta.size());
  for (double b : enc.beta) d.layer_on.push_back(sigmoid(b) >= 0.5);
  d.module_choice = argmax_lowest_tie(enc.gamma);
  return d;
}

std::string DiscreteArchitecture::describe(const SearchSpaceSpec& space) const {
  std::ostringstream os;
  os << "module " << module_choice << "; layers:";
  for (std::size_t j = 0; j < base_choice.size(); ++j) {
    const std::size_t size_idx = base_choice[j] / space.activations.size();
    const std::size_t act_idx = base_choice[j] % space.activations.size();
    os << " [" << j << (layer_on[j] ? " on " : " off ")
       << space.base_sizes[size_idx] << "/"
       << activation_name(space.activations[act_idx]) << "]";
  }
  return os.str();
}

}  // namespace archinf
