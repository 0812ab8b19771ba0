#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mergerl {

// Dense row-major 2-D tensor of 64-bit floats. Vectors are 1xN or Nx1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }

    static Tensor full(int r, int c, double v) {
        Tensor t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }

    static Tensor row(const std::vector<double>& v) {
        Tensor t(1, static_cast<int>(v.size()));
        t.data = v;
        return t;
    }

    static Tensor col(const std::vector<double>& v) {
        Tensor t(static_cast<int>(v.size()), 1);
        t.data = v;
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows_in) {
        int r = static_cast<int>(rows_in.size());
        int c = r > 0 ? static_cast<int>(rows_in.begin()->size()) : 0;
        Tensor t(r, c);
        int i = 0;
        for (const auto& rr : rows_in) {
            if (static_cast<int>(rr.size()) != c)
                throw std::invalid_argument("Tensor::from_rows: ragged rows");
            int j = 0;
            for (double v : rr) t.at(i, j++) = v;
            ++i;
        }
        return t;
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    int numel() const { return rows * cols; }
    std::vector<int> shape() const { return {rows, cols}; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) {
        for (auto& x : data) x = v;
    }
};

// Learnable weight: value plus gradient and the two optimizer moment buffers.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;  // first moment
    Tensor v;  // second moment

    Parameter() = default;
    Parameter(std::string n, Tensor val)
        : name(std::move(n)),
          value(std::move(val)),
          grad(value.rows, value.cols),
          m(value.rows, value.cols),
          v(value.rows, value.cols) {}

    void zero_grad() { grad.fill(0.0); }
};

// Seeded RNG with portable uniform draws (mt19937_64 bit stream, fixed
// bits-to-double mapping so frozen test values hold across platforms).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {
        // splitmix64 warmup to decorrelate small seeds
        for (int i = 0; i < 4; ++i) next();
    }

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        int k = static_cast<int>(unit() * n);
        return k >= n ? n - 1 : k;
    }

    // derive an independent child stream
    Rng fork(uint64_t stream) const {
        Rng r(state_ ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
        return r;
    }

private:
    uint64_t state_;
};

Tensor uniform_tensor(Rng& rng, int rows, int cols, double lo, double hi);

}  // namespace mergerl
