#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cyclelab/field.hpp"

namespace cyclelab {

// Line-oriented field format:
//
//   # comment
//   degree <n>
//   P <i> <j> <coeff>
//   Q <i> <j> <coeff>
//
// Coefficients are written in shortest round-trip form, so write/parse is
// coefficient-exact. Parse errors throw ParseError carrying the line number.
VectorField parse_field(std::string_view text);
std::string format_field(const VectorField& X, std::string_view comment = {});

VectorField read_field_file(const std::filesystem::path& path);
void write_field_file(const std::filesystem::path& path, const VectorField& X,
                      std::string_view comment = {});

}  // namespace cyclelab
