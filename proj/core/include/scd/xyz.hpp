// SPDX-License-Identifier: Apache-2.0
//
// Extended-XYZ subset. Frame layout:
//   line 1: atom count
//   line 2: key=value comment; recognised keys are Lattice="9 floats",
//           pbc="T T T", energy, property and components=<A/B per atom>.
//           Other keys are ignored.
//   then one line per atom: symbol x y z [fx fy fz]
// Units: Angstrom, eV, eV/Angstrom. Multi-frame files concatenate frames.

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scd/structure.hpp"

namespace scd {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string &message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Exactly one frame.
AtomicStructure parse_xyz(std::string_view text);
std::vector<AtomicStructure> parse_xyz_frames(std::string_view text);

// Coordinates and labels at 17 significant digits, so parse(write(s)) == s.
std::string write_xyz(const AtomicStructure &s);
std::string write_xyz_frames(std::span<const AtomicStructure> frames);

std::vector<AtomicStructure> read_xyz_file(const std::filesystem::path &path);
void write_xyz_file(const std::filesystem::path &path,
                    std::span<const AtomicStructure> frames);

}  // namespace scd
