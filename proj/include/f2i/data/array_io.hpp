#pragma once

#include <string>

#include "f2i/core/tensor.hpp"

namespace f2i {

// Array file format: a 4-byte little-endian header length, a JSON header
// {"dtype":"float32","shape":[...],"role":"..."}, then the payload as
// little-endian 32-bit floats in row-major order. Round-trips are bit-exact;
// rank is limited to 1..4 and payloads must be finite.

void write_array(const std::string& path, const Tensor& t, const std::string& role = "generic");

Tensor read_array(const std::string& path, std::string* role_out = nullptr);

}  // namespace f2i
