// forgebench_hls.h - HLS compatibility layer for generated designs.
//
// Under Vitis HLS the vendor headers provide ap_fixed and the directives are
// honoured.  Defining FORGEBENCH_SHIM lets any C++11 compiler build the same
// sources for software simulation:
//   * `#pragma HLS ...` lines are unknown pragmas and therefore inert
//     (compile with -Wno-unknown-pragmas to silence the warnings);
//   * ap_fixed<W, I> is emulated by a truncating (AP_TRN) value class with
//     wrap-free range; products are formed in double before quantization.
//
// Interface convention of generated top functions: every array port is an
// AXI4 memory-mapped master (m_axi, one bundle per port, offset=slave) and
// block-level control goes through s_axilite.
#ifndef FORGEBENCH_HLS_H
#define FORGEBENCH_HLS_H

#include <cmath>
#include <cstdint>

#ifdef FORGEBENCH_SHIM

template <int W, int I>
class ap_fixed {
public:
    ap_fixed() : v_(0.0) {}
    ap_fixed(double x) : v_(quant(x)) {}

    operator double() const { return v_; }

    ap_fixed &operator+=(double x) { v_ = quant(v_ + x); return *this; }
    ap_fixed &operator-=(double x) { v_ = quant(v_ - x); return *this; }
    ap_fixed &operator*=(double x) { v_ = quant(v_ * x); return *this; }
    ap_fixed &operator/=(double x) { v_ = quant(v_ / x); return *this; }

private:
    static double quant(double x) {
        const double step = std::ldexp(1.0, I - W);
        return std::floor(x / step) * step;
    }
    double v_;
};

#else
#include <ap_fixed.h>
#endif

static inline float fb_exp(float x) { return std::exp(x); }
static inline float fb_tanh(float x) { return std::tanh(x); }
static inline float fb_sqrt(float x) { return std::sqrt(x); }
static inline float fb_cos(float x) { return std::cos(x); }
static inline float fb_sin(float x) { return std::sin(x); }
static inline float fb_pow(float b, float e) { return std::pow(b, e); }

// Counter-based uniform draw in [0, 1) keyed by (seed, flat index).
static inline double fb_uniform(uint64_t seed, uint64_t index) {
    uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z = z ^ (z >> 31);
    return (double)(z >> 11) * (1.0 / 9007199254740992.0);
}

#endif  // FORGEBENCH_HLS_H
