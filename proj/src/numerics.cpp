#include "numerics.hpp"

#include <algorithm>
#include <cmath>

namespace cacgen {

void contract_violation(const std::string& what) {
    throw std::invalid_argument(what);
}

Matrix::Matrix(int r, int c, double fill) : rows(r), cols(c), data(size_t(r) * c, fill) {
    if (r < 0 || c < 0) contract_violation("Matrix: negative dimensions");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Grid::Grid(int h, int w, double fill) : height(h), width(w), data(size_t(h) * w, fill) {
    if (h < 0 || w < 0) contract_violation("Grid: negative dimensions");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        contract_violation("matmul: inner dimensions " + std::to_string(a.cols) + " vs " +
                           std::to_string(b.rows));
    Matrix out(a.rows, b.cols);
    // i-k-j order: each out(i,j) accumulates over k ascending, so the result
    // is bitwise identical to the textbook i-j-k loop while staying cache
    // friendly on b.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[size_t(i) * a.cols];
        double* orow = &out.data[size_t(i) * out.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[size_t(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) contract_violation("hadamard: shape mismatch");
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

Matrix softmax_rows(const Matrix& logits, double scale) {
    if (scale <= 0.0) contract_violation("softmax_rows: scale must be positive");
    Matrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* row = &logits.data[size_t(i) * logits.cols];
        double* orow = &out.data[size_t(i) * out.cols];
        double m = row[0];
        for (int j = 1; j < logits.cols; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            orow[j] = std::exp(scale * (row[j] - m));
            sum += orow[j];
        }
        for (int j = 0; j < logits.cols; ++j) orow[j] /= sum;
    }
    return out;
}

namespace {

int nearest_index(int dst, int dst_size, int src_size) {
    // pixel-center mapping: src = floor((dst + 0.5) * src/dst)
    int idx = int((double(dst) + 0.5) * double(src_size) / double(dst_size));
    return std::min(idx, src_size - 1);
}

}  // namespace

Grid resize_mask(const Grid& mask, int target_h, int target_w, ResizeMode mode) {
    if (target_h < 1 || target_w < 1) contract_violation("resize_mask: target dims must be >= 1");
    if (mask.height < 1 || mask.width < 1) contract_violation("resize_mask: empty input");
    for (double v : mask.data)
        if (!(v >= 0.0 && v <= 1.0)) contract_violation("resize_mask: input outside [0,1]");
    if (mode == ResizeMode::kNearest) {
        Grid out(target_h, target_w);
        for (int r = 0; r < target_h; ++r) {
            int sr = nearest_index(r, target_h, mask.height);
            for (int c = 0; c < target_w; ++c)
                out.at(r, c) = mask.at(sr, nearest_index(c, target_w, mask.width));
        }
        return out;
    }
    return resize_bilinear(mask, target_h, target_w);
}

Grid resize_bilinear(const Grid& g, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1) contract_violation("resize_bilinear: target dims must be >= 1");
    Grid out(target_h, target_w);
    const double sy = double(g.height) / double(target_h);
    const double sx = double(g.width) / double(target_w);
    for (int r = 0; r < target_h; ++r) {
        double fy = (double(r) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(g.height - 1));
        int y0 = int(fy);
        int y1 = std::min(y0 + 1, g.height - 1);
        double wy = fy - y0;
        for (int c = 0; c < target_w; ++c) {
            double fx = (double(c) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(g.width - 1));
            int x0 = int(fx);
            int x1 = std::min(x0 + 1, g.width - 1);
            double wx = fx - x0;
            double top = g.at(y0, x0) + wx * (g.at(y0, x1) - g.at(y0, x0));
            double bot = g.at(y1, x0) + wx * (g.at(y1, x1) - g.at(y1, x0));
            out.at(r, c) = top + wy * (bot - top);
        }
    }
    return out;
}

}  // namespace cacgen
