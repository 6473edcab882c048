#include "clusmfl/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace clusmfl {

void MultimodalModel::validate() const {
  enc_pet.validate();
  enc_mri.validate();
  classifier.validate();
  if (enc_pet.out_dim() != embed_dim || enc_mri.out_dim() != embed_dim) {
    throw ShapeError("MultimodalModel: encoder output differs from embed_dim");
  }
  if (classifier.in_dim() != 2 * embed_dim) {
    throw ShapeError("MultimodalModel: classifier input must be 2 * embed_dim");
  }
}

MultimodalModel make_model(const ModelDims& dims, Rng& rng) {
  const std::size_t enc_dims[] = {dims.input_dim, dims.hidden_dim, dims.embed_dim};
  const std::size_t clf_dims[] = {2 * dims.embed_dim, dims.classifier_hidden,
                                  dims.num_classes};
  MultimodalModel m;
  m.enc_pet = make_mlp(enc_dims, rng);
  m.enc_mri = make_mlp(enc_dims, rng);
  m.classifier = make_mlp(clf_dims, rng);
  m.embed_dim = dims.embed_dim;
  return m;
}

MultimodalModel zeros_like(const MultimodalModel& model) {
  return {zeros_like(model.enc_pet), zeros_like(model.enc_mri), zeros_like(model.classifier),
          model.embed_dim};
}

std::vector<double> flatten(const MultimodalModel& model) {
  std::vector<double> out;
  out.reserve(model.parameter_count());
  append_flat(model.enc_pet, out);
  append_flat(model.enc_mri, out);
  append_flat(model.classifier, out);
  return out;
}

void assign_flat(MultimodalModel& model, std::span<const double> values) {
  if (values.size() != model.parameter_count()) {
    throw ShapeError("assign_flat: value count differs from model parameter count");
  }
  values = assign_flat(model.enc_pet, values);
  values = assign_flat(model.enc_mri, values);
  assign_flat(model.classifier, values);
}

void add_scaled(MultimodalModel& dst, double scale, const MultimodalModel& src) {
  add_scaled(dst.enc_pet, scale, src.enc_pet);
  add_scaled(dst.enc_mri, scale, src.enc_mri);
  add_scaled(dst.classifier, scale, src.classifier);
}

std::vector<double> encode(const MultimodalModel& model, Modality modality,
                           std::span<const double> x) {
  const auto& enc = model.encoder(modality);
  if (x.size() != enc.in_dim()) throw ShapeError("encode: feature length mismatch");
  Matrix in(1, x.size(), std::vector<double>(x.begin(), x.end()));
  Matrix out = mlp_apply(enc, in);
  return {out.values().begin(), out.values().end()};
}

Matrix encode_batch(const MultimodalModel& model, Modality modality, const Matrix& x) {
  return mlp_apply(model.encoder(modality), x);
}

Matrix fuse_slots(const Matrix& pet_slot, const Matrix& mri_slot) {
  if (pet_slot.rows() != mri_slot.rows() || pet_slot.cols() != mri_slot.cols()) {
    throw ShapeError("fuse_slots: slot shapes differ");
  }
  const std::size_t d = pet_slot.cols();
  Matrix fused(pet_slot.rows(), 2 * d);
  for (std::size_t r = 0; r < fused.rows(); ++r) {
    auto out = fused.row(r);
    auto p = pet_slot.row(r);
    auto m = mri_slot.row(r);
    std::copy(p.begin(), p.end(), out.begin());
    std::copy(m.begin(), m.end(), out.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return fused;
}

Matrix predict_batch(const MultimodalModel& model, std::span<const Instance> instances) {
  const std::size_t d = model.embed_dim;
  Matrix slots[2] = {Matrix(instances.size(), d), Matrix(instances.size(), d)};
  for (const auto& inst : instances) {
    if (!inst.pet && !inst.mri) throw InvalidInput("predict: instance has no modality");
  }
  for (Modality m : kModalities) {
    const auto& enc = model.encoder(m);
    std::vector<std::size_t> rows;
    Matrix x(0, enc.in_dim());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (!instances[i].has(m)) continue;
      const auto& f = instances[i].features(m);
      if (f.size() != enc.in_dim()) throw ShapeError("predict: feature length mismatch");
      x.append_row(f);
      rows.push_back(i);
    }
    if (rows.empty()) continue;
    const Matrix z = mlp_apply(enc, x);
    auto& slot = slots[static_cast<int>(m)];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy(z.row(r).begin(), z.row(r).end(), slot.row(rows[r]).begin());
    }
  }
  return mlp_apply(model.classifier, fuse_slots(slots[0], slots[1]));
}

std::vector<double> predict(const MultimodalModel& model, const Instance& instance) {
  Matrix logits = predict_batch(model, std::span<const Instance>(&instance, 1));
  return {logits.values().begin(), logits.values().end()};
}

std::vector<double> predict_with_proxy(const MultimodalModel& model,
                                       std::span<const double> available_embedding,
                                       Modality available_modality,
                                       std::span<const double> proxy_center) {
  const std::size_t d = model.embed_dim;
  if (available_embedding.size() != d || proxy_center.size() != d) {
    throw ShapeError("predict_with_proxy: embedding or proxy has wrong dimension");
  }
  Matrix fused(1, 2 * d);
  auto row = fused.row(0);
  auto pet = available_modality == Modality::kPet ? available_embedding : proxy_center;
  auto mri = available_modality == Modality::kPet ? proxy_center : available_embedding;
  std::copy(pet.begin(), pet.end(), row.begin());
  std::copy(mri.begin(), mri.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
  Matrix logits = mlp_apply(model.classifier, fused);
  return {logits.values().begin(), logits.values().end()};
}

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", l.activation == Activation::kRelu ? "relu" : "identity"},
                      {"weight", std::vector<double>(l.weight.values().begin(),
                                                     l.weight.values().end())},
                      {"bias", l.bias}});
  }
  return layers;
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const auto& jl : j) {
    const auto in = jl.at("in").get<std::size_t>();
    const auto out = jl.at("out").get<std::size_t>();
    const auto act = jl.at("activation").get<std::string>();
    if (act != "relu" && act != "identity") {
      throw std::runtime_error("checkpoint: unknown activation '" + act + "'");
    }
    DenseLayer layer;
    layer.weight = Matrix(out, in, jl.at("weight").get<std::vector<double>>());
    layer.bias = jl.at("bias").get<std::vector<double>>();
    layer.activation = act == "relu" ? Activation::kRelu : Activation::kIdentity;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace

std::string checkpoint_to_json(const MultimodalModel& model) {
  json j = {{"format", "clusmfl-model"},
            {"version", kCheckpointVersion},
            {"embed_dim", model.embed_dim},
            {"enc_pet", mlp_to_json(model.enc_pet)},
            {"enc_mri", mlp_to_json(model.enc_mri)},
            {"classifier", mlp_to_json(model.classifier)}};
  return j.dump();
}

MultimodalModel checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format").get<std::string>() != "clusmfl-model") {
    throw std::runtime_error("checkpoint: not a clusmfl model");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  MultimodalModel m;
  m.embed_dim = j.at("embed_dim").get<std::size_t>();
  m.enc_pet = mlp_from_json(j.at("enc_pet"));
  m.enc_mri = mlp_from_json(j.at("enc_mri"));
  m.classifier = mlp_from_json(j.at("classifier"));
  m.validate();
  return m;
}

void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(model) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MultimodalModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace clusmfl
