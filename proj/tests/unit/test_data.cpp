#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "clusmfl/data.hpp"
#include "oracles.hpp"

using namespace clusmfl;

namespace {

std::string header(std::size_t d) {
  std::string h = "id,label";
  for (std::size_t i = 0; i < d; ++i) h += ",p_" + std::to_string(i);
  for (std::size_t i = 0; i < d; ++i) h += ",m_" + std::to_string(i);
  return h + "\n";
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_csv(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::map<InstanceType, std::size_t> type_counts(const std::vector<Instance>& data) {
  std::map<InstanceType, std::size_t> out;
  for (const auto& i : data) ++out[type_of(i)];
  return out;
}

std::vector<Instance> labelled(std::size_t n, std::size_t classes) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(oracle::make_instance(i, static_cast<int>(i % classes), {double(i)}, {-double(i)}));
  }
  return out;
}

}  // namespace

TEST_CASE("CSV rows become instances") {
  std::istringstream in(header(2) + "7,1,0.5,1.5,2.5,3.5\n8,0,,,4,5\n9,2,1,2,,\n");
  const auto data = read_csv(in);
  REQUIRE(data.size() == 3);
  CHECK(data[0].id == 7);
  CHECK(data[0].label == 1);
  CHECK(data[0].multimodal());
  CHECK(*data[0].mri == std::vector<double>{2.5, 3.5});
  CHECK(data[1].available() == Modality::kMri);
  CHECK(data[2].available() == Modality::kPet);
  CHECK(feature_dim_of(data) == 2);
  CHECK(num_classes_of(data) == 3);
}

TEST_CASE("CSV errors carry the line number") {
  CHECK(parse_error_line(header(1) + "0,0,1,2\n1,0,1\n") == 3);
  CHECK(parse_error_line(header(1) + "0,0,abc,2\n") == 2);
  CHECK(parse_error_line(header(1) + "0,0,,\n") == 2);
  CHECK(parse_error_line(header(2) + "0,0,1,,3,4\n") == 2);
  CHECK(parse_error_line("id,label,x\n") == 1);
  CHECK(parse_error_line("") == 1);
}

TEST_CASE("CSV round-trip preserves values exactly") {
  SyntheticSpec spec;
  spec.class_counts = {4, 5, 3};
  spec.feature_dim = 6;
  spec.seed = 3;
  auto data = generate_synthetic(spec);
  data[1].drop(Modality::kPet);
  data[2].drop(Modality::kMri);
  data[3].pet->at(0) = 1e-300;
  data[3].pet->at(1) = -0.1;
  std::ostringstream out;
  write_csv(out, data, 6);
  std::istringstream in(out.str());
  CHECK(read_csv(in) == data);
}

TEST_CASE("synthetic data: counts, labels, modalities") {
  const auto data = generate_synthetic(SyntheticSpec{});
  CHECK(data.size() == 915);
  std::size_t hist[3] = {};
  for (const auto& i : data) {
    ++hist[i.label];
    CHECK(i.multimodal());
    CHECK(i.pet->size() == 90);
  }
  CHECK(hist[0] == 297);
  CHECK(hist[1] == 451);
  CHECK(hist[2] == 167);
  CHECK(generate_synthetic(SyntheticSpec{}) == data);
}

TEST_CASE("synthetic data: zero noise collapses each class") {
  SyntheticSpec spec;
  spec.class_counts = {5, 5};
  spec.feature_dim = 4;
  spec.noise = 0.0;
  const auto data = generate_synthetic(spec);
  for (const auto& i : data) {
    const auto& first = data[static_cast<std::size_t>(i.label) * 5];
    CHECK(*i.pet == *first.pet);
    CHECK(*i.mri == *first.mri);
  }
}

TEST_CASE("synthetic data: large separation is linearly separable") {
  SyntheticSpec spec;
  spec.separation = 10.0 * spec.noise;
  spec.seed = 8;
  const auto data = generate_synthetic(spec);
  // Nearest class mean on concatenated features, a linear classifier.
  const std::size_t d = 180;
  std::vector<std::vector<double>> mean(3, std::vector<double>(d, 0.0));
  std::vector<std::size_t> n(3, 0);
  auto features = [](const Instance& i) {
    std::vector<double> f(*i.pet);
    f.insert(f.end(), i.mri->begin(), i.mri->end());
    return f;
  };
  for (const auto& i : data) {
    const auto f = features(i);
    for (std::size_t t = 0; t < d; ++t) mean[i.label][t] += f[t];
    ++n[i.label];
  }
  for (int c = 0; c < 3; ++c) {
    for (auto& v : mean[c]) v /= static_cast<double>(n[c]);
  }
  std::size_t correct = 0;
  for (const auto& i : data) {
    const auto f = features(i);
    int best = 0;
    double best_d = INFINITY;
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += (f[t] - mean[c][t]) * (f[t] - mean[c][t]);
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    correct += best == i.label;
  }
  CHECK(static_cast<double>(correct) / data.size() >= 0.99);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.class_counts = {3, 0};
  CHECK_THROWS_AS(s.validate(), InvalidInput);
  s = SyntheticSpec{};
  s.coupling = 1.5;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("five-fold split of 915 instances") {
  const auto data = generate_synthetic(SyntheticSpec{});
  const auto folds = stratified_folds(data, 5, 42);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    CHECK(f.test.size() >= 182);
    CHECK(f.test.size() <= 184);
    CHECK(f.test.size() + f.train.size() == 915);
    std::size_t hist[3] = {};
    for (const auto& i : f.test) {
      CHECK(seen.insert(i.id).second);
      ++hist[i.label];
    }
    const double want[3] = {297 / 5.0, 451 / 5.0, 167 / 5.0};
    for (int c = 0; c < 3; ++c) CHECK(std::abs(hist[c] - want[c]) <= 1.0);
  }
  CHECK(seen.size() == 915);
}

TEST_CASE("literal reading swaps train and test") {
  const auto data = labelled(50, 2);
  const auto cv = split_train_test(data, 1, 0);
  const auto lit = split_train_test(data, 1, 0, 5, SplitReading::kLiteral);
  CHECK(cv.test.size() == 10);
  CHECK(lit.train.size() == 10);
  CHECK(lit.train == cv.test);
}

TEST_CASE("stratification needs k members per class") {
  CHECK_THROWS_AS(stratified_folds(labelled(8, 2), 5, 0), InvalidInput);
  CHECK_THROWS_AS(stratified_folds({}, 5, 0), InvalidInput);
}

TEST_CASE("test modality mix") {
  auto nine = apply_test_modality_mix(labelled(9, 3), 1);
  auto counts = type_counts(nine);
  CHECK(counts[InstanceType::kPetOnly] == 3);
  CHECK(counts[InstanceType::kMriOnly] == 3);
  CHECK(counts[InstanceType::kMultimodal] == 3);
  counts = type_counts(apply_test_modality_mix(labelled(10, 3), 1));
  CHECK(counts[InstanceType::kPetOnly] == 3);
  CHECK(counts[InstanceType::kMriOnly] == 3);
  CHECK(counts[InstanceType::kMultimodal] == 4);
  CHECK_THROWS_AS(apply_test_modality_mix(nine, 1), InvalidInput);
}

TEST_CASE("test modality mix is spread evenly over labels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mixed = apply_test_modality_mix(labelled(183, 3), seed);
    std::map<std::pair<int, InstanceType>, std::size_t> joint;
    for (const auto& i : mixed) ++joint[{i.label, type_of(i)}];
    for (int c = 0; c < 3; ++c) {
      for (auto t : {InstanceType::kPetOnly, InstanceType::kMriOnly, InstanceType::kMultimodal}) {
        // 61 per label, 61 per type: about 20.3 per cell.
        CHECK(std::abs(static_cast<double>(joint[{c, t}]) - 61.0 / 3.0) <= 1.5);
      }
    }
  }
}

TEST_CASE("spread_types meets exact counts and stays balanced") {
  const auto t = spread_types(20, 20, 60);
  CHECK(std::count(t.begin(), t.end(), InstanceType::kPetOnly) == 20);
  CHECK(std::count(t.begin(), t.end(), InstanceType::kMultimodal) == 60);
  std::size_t pet = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    pet += t[i] == InstanceType::kPetOnly;
    CHECK(std::abs(static_cast<double>(pet) - 0.2 * (i + 1)) <= 1.0);
  }
  CHECK(spread_types(0, 0, 0).empty());
}

TEST_CASE("floor_count keeps exact products") {
  CHECK(floor_count(0.4, 10) == 4);
  CHECK(floor_count(0.2, 100) == 20);
  CHECK(floor_count(0.3, 10) == 3);
  CHECK(floor_count(0.25, 10) == 2);
}

TEST_CASE("client types for alpha 0.4 and N 10") {
  const auto train = labelled(100, 3);
  const auto clients = partition_clients(train, PartitionSpec::symmetric(10, 0.4, 0.0), 5);
  REQUIRE(clients.size() == 10);
  for (std::size_t c = 0; c < 10; ++c) {
    for (const auto& i : clients[c]) {
      if (c < 4) {
        CHECK(type_of(i) == InstanceType::kPetOnly);
      } else if (c < 8) {
        CHECK(type_of(i) == InstanceType::kMriOnly);
      } else {
        CHECK(type_of(i) == InstanceType::kMultimodal);
      }
    }
  }
}

TEST_CASE("instance types for beta 0.2 on a 100-instance client") {
  const auto clients = partition_clients(labelled(100, 3), PartitionSpec::symmetric(1, 0.0, 0.2), 5);
  auto counts = type_counts(clients[0]);
  CHECK(counts[InstanceType::kPetOnly] == 20);
  CHECK(counts[InstanceType::kMriOnly] == 20);
  CHECK(counts[InstanceType::kMultimodal] == 60);
  const auto none = partition_clients(labelled(40, 3), PartitionSpec::symmetric(4, 0.0, 0.0), 5);
  for (const auto& c : none) {
    for (const auto& i : c) CHECK(i.multimodal());
  }
}

TEST_CASE("partition conserves instances and keeps shards balanced") {
  const auto data = generate_synthetic(SyntheticSpec{});
  const auto train = stratified_folds(data, 5, 1).front().train;
  std::size_t hist[3] = {};
  for (const auto& i : train) ++hist[i.label];
  for (double alpha : {0.0, 0.2, 0.4}) {
    for (double beta : {0.0, 0.2, 0.4}) {
      const auto clients = partition_clients(train, PartitionSpec::symmetric(10, alpha, beta), 9);
      std::set<std::size_t> ids;
      std::size_t lo = train.size(), hi = 0;
      for (const auto& c : clients) {
        lo = std::min(lo, c.size());
        hi = std::max(hi, c.size());
        std::size_t local[3] = {};
        for (const auto& i : c) {
          CHECK(ids.insert(i.id).second);
          ++local[i.label];
        }
        for (int k = 0; k < 3; ++k) {
          CHECK(std::abs(static_cast<double>(local[k]) - hist[k] / 10.0) <= 1.0);
        }
      }
      CHECK(ids.size() == train.size());
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("partition spec validation") {
  CHECK_THROWS_AS(PartitionSpec::symmetric(10, 0.6, 0.0).validate(), InvalidInput);
  CHECK_THROWS_AS(PartitionSpec::symmetric(0, 0.0, 0.0).validate(), InvalidInput);
  CHECK_THROWS_AS(PartitionSpec::symmetric(10, 0.0, -0.1).validate(), InvalidInput);
  CHECK_NOTHROW(PartitionSpec::symmetric(10, 0.5, 0.5).validate());
}
