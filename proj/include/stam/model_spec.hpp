#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace stam {

enum class MainStructure { Absent, Iid, Rw1 };

enum class InteractionWhich { SpaceTime, SpaceAge, TimeAge };
enum class InteractionType { I, II, III, IV };

struct InteractionKind {
  InteractionWhich which;
  InteractionType type;
};

/// One point of the model space: spatial Leroux effect always present,
/// optional temporal/age main effects and the three interactions.
struct ModelSpec {
  MainStructure delta = MainStructure::Absent;
  MainStructure gamma = MainStructure::Absent;
  std::optional<InteractionType> zeta1;  // space-time
  std::optional<InteractionType> zeta2;  // space-age
  std::optional<InteractionType> zeta3;  // time-age

  bool has_delta() const { return delta != MainStructure::Absent; }
  bool has_gamma() const { return gamma != MainStructure::Absent; }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Predictor families of the nested framework, in reporting order:
/// phi+delta, phi+delta+z1, phi+gamma, phi+gamma+z2, phi+delta+gamma,
/// phi+delta+gamma+z1, phi+delta+gamma+z1+z2, all three interactions.
inline constexpr int kFamilyCount = 8;
int family_of(const ModelSpec& spec);
std::string family_label(int family);

/// Throws InvalidSpecification when an interaction lacks its main effects.
void validate(const ModelSpec& spec);

/// `delta=<iid|rw1|->;gamma=...;z1=<I|II|III|IV|->;z2=...;z3=...`
std::string to_string(const ModelSpec& spec);
ModelSpec parse_spec(std::string_view text);

std::string to_string(MainStructure s);
std::string to_string(InteractionType t);

}  // namespace stam
