#pragma once

// Binary PPM/PGM image I/O (P6 color, P5 grayscale, maxval 255) and small
// CSV helpers. Images map to 1 x C x H x W tensors on [0,1]; writing
// quantizes with round(v * 255), so an 8-bit round trip is lossless.

#include <string>
#include <vector>

#include "cwp/tensor.hpp"

namespace cwp {

Tensor read_ppm(const std::string& path);
void write_ppm(const Tensor& img, const std::string& path);

std::string csv_join(const std::vector<std::string>& fields);
std::string format_double(double v);  // "inf" for infinities, '.' decimal point

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace cwp
