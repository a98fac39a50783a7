// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>

namespace scd {

inline constexpr int kMaxAtomicNumber = 118;

// Case-sensitive lookup ("Cl", not "CL"). Returns nullopt for unknown symbols.
std::optional<int> atomic_number(std::string_view symbol);
// Throws std::out_of_range outside [1, 118].
std::string_view element_symbol(int atomic_number);

}  // namespace scd
