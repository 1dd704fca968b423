#pragma once

// Versioned text format for fitted models:
//
//   MMDTL2-MODEL v1
//   dims L_s L_t M K
//   mode <mmdtl2|mmdt>
//   kernel <kind> <gamma> <coef0> <degree>
//   Theta      L_s rows of K values
//   bias       one row of K values
//   R          L_s rows of M values
//   T          M rows of M values
//   targets    L_t rows of M values, not augmented
//   params     `key value` lines to end of file
//
// Values are whitespace separated and written in shortest round-trip form.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mmdtl2/adapt.hpp"

namespace mmdtl2 {

inline constexpr const char* kModelMagic = "MMDTL2-MODEL";
inline constexpr int kModelVersion = 1;

void write_model(std::ostream& out, const AdaptedModel& model);
AdaptedModel read_model(std::istream& in, const std::string& source_name = "<stream>");

void save_model(const std::filesystem::path& path, const AdaptedModel& model);
AdaptedModel load_model(const std::filesystem::path& path);

}  // namespace mmdtl2
