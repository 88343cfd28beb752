#pragma once

// One-level orthonormal Haar wavelet analysis/synthesis and a 2-D DFT.
//
// Subband naming: per 2x2 block [a b; c d] (a,b top row),
//   LL = (a+b+c+d)/2   LH = (a+b-c-d)/2   HL = (a-b+c-d)/2   HH = (a-b-c+d)/2
// so LH carries horizontal-edge detail and HL carries vertical-edge detail.
// The transform is orthogonal: round trips are exact up to float rounding
// and energy is conserved.

#include "cwp/tensor.hpp"

namespace cwp {

struct SubbandSet {
    Tensor ll, lh, hl, hh;

    const Tensor& band(int j) const {  // 0=LL 1=LH 2=HL 3=HH
        switch (j) {
            case 0: return ll;
            case 1: return lh;
            case 2: return hl;
            default: return hh;
        }
    }
};

struct Spectrum {
    Tensor real, imag;
};

SubbandSet dwt2(Tape* tape, const Tensor& x);
Tensor idwt2(Tape* tape, const SubbandSet& s);

// Unnormalized forward DFT per channel plane; Parseval holds as
// sum|x|^2 == (1/(H*W)) * sum(re^2+im^2). Radix-2 FFT for power-of-two
// sizes, the quadratic transform otherwise.
Spectrum fft2(Tape* tape, const Tensor& x);

const char* subband_name(int j);

}  // namespace cwp
