#include "clusmfl/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>

#include "clusmfl/errors.hpp"
#include "clusmfl/random.hpp"

namespace clusmfl {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("bad number '" + std::string(s) + "'", line);
  }
  return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line, const char* what) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("bad ") + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

void write_double(std::ostream& out, double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.write(buf.data(), ptr - buf.data());
}

// Class-ordered index list, shuffled within each class.
std::vector<std::size_t> stratified_order(std::span<const Instance> data, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < data.size(); ++i) by_label[data[i].label].push_back(i);
  std::vector<std::size_t> order;
  order.reserve(data.size());
  for (auto& [label, idx] : by_label) {
    std::shuffle(idx.begin(), idx.end(), rng);
    order.insert(order.end(), idx.begin(), idx.end());
  }
  return order;
}

void apply_type(Instance& inst, InstanceType t) {
  if (t == InstanceType::kPetOnly) inst.drop(Modality::kMri);
  if (t == InstanceType::kMriOnly) inst.drop(Modality::kPet);
}

}  // namespace

std::vector<Instance> read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" ||
      (header.size() - 2) % 2 != 0) {
    throw ParseError("header must be id,label,p_0..p_{D-1},m_0..m_{D-1}", line_no);
  }
  const std::size_t dim = (header.size() - 2) / 2;
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[2 + k] != "p_" + std::to_string(k) ||
        header[2 + dim + k] != "m_" + std::to_string(k)) {
      throw ParseError("unexpected feature column name", line_no);
    }
  }

  std::vector<Instance> data;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    Instance inst;
    inst.id = parse_int<std::size_t>(fields[0], line_no, "id");
    inst.label = parse_int<int>(fields[1], line_no, "label");
    if (inst.label < 0) throw ParseError("negative label", line_no);
    for (Modality m : kModalities) {
      const std::size_t base = 2 + (m == Modality::kPet ? 0 : dim);
      std::size_t empty = 0;
      for (std::size_t k = 0; k < dim; ++k) empty += fields[base + k].empty() ? 1 : 0;
      if (empty == dim) continue;
      if (empty != 0) {
        throw ParseError(std::string(to_string(m)) + " cells partially empty", line_no);
      }
      std::vector<double> v(dim);
      for (std::size_t k = 0; k < dim; ++k) v[k] = parse_double(fields[base + k], line_no);
      (m == Modality::kPet ? inst.pet : inst.mri) = std::move(v);
    }
    if (!inst.pet && !inst.mri) throw ParseError("row has neither modality", line_no);
    data.push_back(std::move(inst));
  }
  return data;
}

std::vector<Instance> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in);
}

void write_csv(std::ostream& out, std::span<const Instance> data, std::size_t feature_dim) {
  out << "id,label";
  for (std::size_t k = 0; k < feature_dim; ++k) out << ",p_" << k;
  for (std::size_t k = 0; k < feature_dim; ++k) out << ",m_" << k;
  out << '\n';
  for (const auto& inst : data) {
    out << inst.id << ',' << inst.label;
    for (Modality m : kModalities) {
      if (inst.has(m) && inst.features(m).size() != feature_dim) {
        throw ShapeError("write_csv: feature vector length differs from feature_dim");
      }
      for (std::size_t k = 0; k < feature_dim; ++k) {
        out << ',';
        if (inst.has(m)) write_double(out, inst.features(m)[k]);
      }
    }
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, std::span<const Instance> data,
              std::size_t feature_dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(out, data, feature_dim);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::size_t feature_dim_of(std::span<const Instance> data) {
  for (const auto& inst : data) {
    if (inst.pet) return inst.pet->size();
    if (inst.mri) return inst.mri->size();
  }
  return 0;
}

std::size_t num_classes_of(std::span<const Instance> data) {
  int max_label = -1;
  for (const auto& inst : data) max_label = std::max(max_label, inst.label);
  return static_cast<std::size_t>(max_label + 1);
}

void SyntheticSpec::validate() const {
  if (class_counts.empty()) throw InvalidInput("synthetic: no classes");
  for (auto c : class_counts) {
    if (c == 0) throw InvalidInput("synthetic: class counts must be positive");
  }
  if (feature_dim == 0) throw InvalidInput("synthetic: feature_dim must be positive");
  if (!(noise >= 0.0)) throw InvalidInput("synthetic: noise must be non-negative");
  if (!(coupling >= 0.0 && coupling <= 1.0)) {
    throw InvalidInput("synthetic: coupling must lie in [0, 1]");
  }
  if (!(separation >= 0.0)) throw InvalidInput("synthetic: separation must be non-negative");
}

std::vector<Instance> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> gain_dist(0.5, 1.5);
  const std::size_t d = spec.feature_dim;

  // Class means: each ROI offset has standard deviation
  // separation * kMeanSpread / sqrt(d), so the expected distance between two
  // class means is about separation * kMeanSpread * sqrt(2) whatever d is.
  constexpr double kMeanSpread = 1.5;
  const double mean_sd = spec.separation * kMeanSpread / std::sqrt(static_cast<double>(d));
  std::vector<std::vector<double>> means(spec.class_counts.size(), std::vector<double>(d));
  for (auto& mu : means) {
    for (double& v : mu) v = mean_sd * normal(rng);
  }

  // Per-modality, per-ROI affine map.
  std::vector<double> gain[2], offset[2];
  for (int m = 0; m < 2; ++m) {
    gain[m].resize(d);
    offset[m].resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      gain[m][k] = gain_dist(rng);
      offset[m][k] = normal(rng);
    }
  }

  const double shared_w = spec.coupling;
  const double private_w = std::sqrt(1.0 - spec.coupling * spec.coupling);
  std::vector<Instance> data;
  std::size_t id = 0;
  std::vector<double> shared(d), priv(d);
  for (std::size_t c = 0; c < spec.class_counts.size(); ++c) {
    for (std::size_t n = 0; n < spec.class_counts[c]; ++n) {
      Instance inst;
      inst.id = id++;
      inst.label = static_cast<int>(c);
      for (double& v : shared) v = normal(rng);
      for (int m = 0; m < 2; ++m) {
        for (double& v : priv) v = normal(rng);
        std::vector<double> x(d);
        for (std::size_t k = 0; k < d; ++k) {
          const double latent =
              means[c][k] + spec.noise * (shared_w * shared[k] + private_w * priv[k]);
          x[k] = gain[m][k] * latent + offset[m][k];
        }
        (m == 0 ? inst.pet : inst.mri) = std::move(x);
      }
      data.push_back(std::move(inst));
    }
  }
  return data;
}

std::vector<Fold> stratified_folds(std::span<const Instance> data, std::size_t k,
                                   std::uint64_t seed, SplitReading reading) {
  if (data.empty()) throw InvalidInput("stratified_folds: empty dataset");
  if (k < 2) throw InvalidInput("stratified_folds: need at least 2 folds");
  std::map<int, std::size_t> counts;
  for (const auto& inst : data) ++counts[inst.label];
  for (const auto& [label, n] : counts) {
    if (n < k) {
      throw InvalidInput("stratified_folds: class " + std::to_string(label) + " has " +
                         std::to_string(n) + " members, fewer than " + std::to_string(k) +
                         " folds");
    }
  }
  Rng rng(seed);
  const auto order = stratified_order(data, rng);
  std::vector<std::size_t> fold_of(data.size());
  for (std::size_t p = 0; p < order.size(); ++p) fold_of[order[p]] = p % k;

  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool held_out = fold_of[i] == f;
      const bool to_test = reading == SplitReading::kCrossValidation ? held_out : !held_out;
      (to_test ? folds[f].test : folds[f].train).push_back(data[i]);
    }
  }
  return folds;
}

Fold split_train_test(std::span<const Instance> data, std::uint64_t seed, std::size_t fold,
                      std::size_t k, SplitReading reading) {
  auto folds = stratified_folds(data, k, seed, reading);
  if (fold >= folds.size()) throw InvalidInput("split_train_test: fold out of range");
  return std::move(folds[fold]);
}

InstanceType type_of(const Instance& inst) {
  if (inst.multimodal()) return InstanceType::kMultimodal;
  return inst.pet ? InstanceType::kPetOnly : InstanceType::kMriOnly;
}

std::vector<InstanceType> spread_types(std::size_t pet_only, std::size_t mri_only,
                                       std::size_t multimodal) {
  const std::array<std::size_t, 3> target = {pet_only, mri_only, multimodal};
  const std::size_t n = pet_only + mri_only + multimodal;
  std::array<std::size_t, 3> assigned = {0, 0, 0};
  std::vector<InstanceType> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    // Largest deficit target*(t+1)/n - assigned, compared in integers.
    int best = -1;
    long double best_def = 0;
    for (int c = 0; c < 3; ++c) {
      if (assigned[c] == target[c]) continue;
      const long double def = static_cast<long double>(target[c] * (t + 1)) -
                              static_cast<long double>(assigned[c] * n);
      if (best < 0 || def > best_def) {
        best = c;
        best_def = def;
      }
    }
    ++assigned[best];
    out.push_back(static_cast<InstanceType>(best));
  }
  return out;
}

std::vector<Instance> apply_test_modality_mix(std::vector<Instance> test, std::uint64_t seed) {
  for (const auto& inst : test) {
    if (!inst.multimodal()) throw InvalidInput("apply_test_modality_mix: expected multimodal");
  }
  const std::size_t third = test.size() / 3;
  const auto types = spread_types(third, third, test.size() - 2 * third);
  Rng rng(seed);
  const auto order = stratified_order(test, rng);
  for (std::size_t p = 0; p < order.size(); ++p) apply_type(test[order[p]], types[p]);
  return test;
}

std::size_t floor_count(double share, std::size_t n) {
  return static_cast<std::size_t>(std::floor(share * static_cast<double>(n) + 1e-9));
}

std::size_t PartitionSpec::pet_only_clients() const {
  return floor_count(alpha_pet, num_clients);
}
std::size_t PartitionSpec::mri_only_clients() const {
  return floor_count(alpha_mri, num_clients);
}

void PartitionSpec::validate() const {
  if (num_clients == 0) throw InvalidInput("partition: need at least one client");
  for (double v : {alpha_pet, alpha_mri, beta_pet, beta_mri}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("partition: proportions must be in [0, 1]");
  }
  if (alpha_pet + alpha_mri > 1.0 + 1e-12 || beta_pet + beta_mri > 1.0 + 1e-12) {
    throw InvalidInput("partition: proportions sum past 1");
  }
  if (pet_only_clients() + mri_only_clients() > num_clients) {
    throw InvalidInput("partition: more unimodal clients than clients");
  }
}

std::vector<std::vector<Instance>> partition_clients(std::span<const Instance> train,
                                                     const PartitionSpec& spec,
                                                     std::uint64_t seed) {
  spec.validate();
  for (const auto& inst : train) {
    if (!inst.multimodal()) throw InvalidInput("partition_clients: expected multimodal instances");
  }
  Rng rng(seed);
  const auto order = stratified_order(train, rng);
  std::vector<std::vector<Instance>> clients(spec.num_clients);
  for (std::size_t p = 0; p < order.size(); ++p) {
    clients[p % spec.num_clients].push_back(train[order[p]]);
  }

  const std::size_t n_pet = spec.pet_only_clients();
  const std::size_t n_mri = spec.mri_only_clients();
  for (std::size_t c = 0; c < clients.size(); ++c) {
    auto& shard = clients[c];
    if (c < n_pet) {
      for (auto& inst : shard) inst.drop(Modality::kMri);
    } else if (c < n_pet + n_mri) {
      for (auto& inst : shard) inst.drop(Modality::kPet);
    } else {
      const std::size_t n = shard.size();
      const std::size_t pet_only = floor_count(spec.beta_pet, n);
      const std::size_t mri_only = floor_count(spec.beta_mri, n);
      const auto types = spread_types(pet_only, mri_only, n - pet_only - mri_only);
      // shard is already class-ordered (dealt from the stratified order)
      for (std::size_t i = 0; i < n; ++i) apply_type(shard[i], types[i]);
    }
  }
  return clients;
}

}  // namespace clusmfl
