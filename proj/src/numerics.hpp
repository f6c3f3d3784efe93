#ifndef CACGEN_NUMERICS_HPP
#define CACGEN_NUMERICS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cacgen {

// Dense row-major matrix of 64-bit reals. All higher-level attention math is
// built on the handful of kernels below; summation order is fixed so results
// are bit-reproducible run to run.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0);

    double& at(int r, int c) { return data[size_t(r) * cols + c]; }
    double at(int r, int c) const { return data[size_t(r) * cols + c]; }

    static Matrix identity(int n);
};

// Spatial grid; values in [0,1] when used as a mask, unbounded for latents.
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0);

    double& at(int r, int c) { return data[size_t(r) * width + c]; }
    double at(int r, int c) const { return data[size_t(r) * width + c]; }
};

enum class ResizeMode { kNearest, kBilinear };

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Row-wise softmax of exp(scale * x) with per-row max subtraction.
Matrix softmax_rows(const Matrix& logits, double scale);

// Mask resampling with pixel-center index mapping. Inputs must lie in [0,1];
// nearest mode never introduces new values, bilinear stays inside [0,1].
Grid resize_mask(const Grid& mask, int target_h, int target_w, ResizeMode mode);

// Unrestricted bilinear resize, used by the decoder on latent channels.
Grid resize_bilinear(const Grid& g, int target_h, int target_w);

[[noreturn]] void contract_violation(const std::string& what);

}  // namespace cacgen

#endif
