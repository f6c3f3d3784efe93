#ifndef CACGEN_PNG_IO_HPP
#define CACGEN_PNG_IO_HPP

#include <string>
#include <vector>

#include "numerics.hpp"

namespace cacgen {

// 8-bit PNG codec with fixed encoder settings so repeated runs produce
// byte-identical files.

void write_png_rgb(const std::string& path, const std::vector<Grid>& rgb);
void write_png_gray(const std::string& path, const Grid& gray);
void write_ppm_rgb(const std::string& path, const std::vector<Grid>& rgb);

// Any color PNG collapses to RGB in [0,1]; 16-bit inputs are rejected.
std::vector<Grid> read_png_rgb(const std::string& path);
// Single-channel 8-bit PNG as raw byte values (label maps).
std::vector<uint8_t> read_png_gray8(const std::string& path, int* out_h, int* out_w);

}  // namespace cacgen

#endif
