#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace clusmfl {

enum class Modality { kPet = 0, kMri = 1 };

inline constexpr Modality kModalities[] = {Modality::kPet, Modality::kMri};

constexpr Modality other(Modality m) noexcept {
  return m == Modality::kPet ? Modality::kMri : Modality::kPet;
}

constexpr std::string_view to_string(Modality m) noexcept {
  return m == Modality::kPet ? "PET" : "MRI";
}

// (x_P, x_M, y). At least one of the two feature vectors is present.
struct Instance {
  std::size_t id = 0;
  int label = 0;
  std::optional<std::vector<double>> pet;
  std::optional<std::vector<double>> mri;

  bool has(Modality m) const noexcept {
    return m == Modality::kPet ? pet.has_value() : mri.has_value();
  }
  const std::vector<double>& features(Modality m) const {
    return m == Modality::kPet ? pet.value() : mri.value();
  }
  void drop(Modality m) noexcept {
    if (m == Modality::kPet) {
      pet.reset();
    } else {
      mri.reset();
    }
  }
  bool multimodal() const noexcept { return pet && mri; }
  bool single_modality() const noexcept { return pet.has_value() != mri.has_value(); }
  // The modality a single-modality instance carries.
  Modality available() const noexcept { return pet ? Modality::kPet : Modality::kMri; }

  friend bool operator==(const Instance&, const Instance&) = default;
};

}  // namespace clusmfl
