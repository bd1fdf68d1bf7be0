#pragma once

#include <vector>

#include "errors.hpp"

namespace hmmbounds {

// Mixed-radix codec between 1-based digit tuples (i_1, ..., i_L), digit l in
// 1..S_l, and the 1-based flat index with the first digit varying slowest.
// This matches the Kronecker product layout: (A ox B)_{flat(i),flat(j)} =
// A_{i1,j1} B_{i2,j2}.
class JointIndexCodec {
 public:
  explicit JointIndexCodec(std::vector<int> shape) : shape_(std::move(shape)) {
    if (shape_.empty()) throw DimensionMismatch("codec: empty shape");
    total_ = 1;
    for (int s : shape_) {
      if (s < 1) throw DimensionMismatch("codec: nonpositive factor size");
      total_ *= static_cast<long long>(s);
    }
  }

  int factors() const { return static_cast<int>(shape_.size()); }
  long long total() const { return total_; }
  const std::vector<int>& shape() const { return shape_; }

  long long encode(const std::vector<int>& digits) const {
    if (static_cast<int>(digits.size()) != factors())
      throw DimensionMismatch("codec: digit count");
    long long flat = 0;
    for (size_t l = 0; l < shape_.size(); ++l) {
      if (digits[l] < 1 || digits[l] > shape_[l])
        throw IndexOutOfRange("codec: digit out of range");
      flat = flat * shape_[l] + (digits[l] - 1);
    }
    return flat + 1;
  }

  std::vector<int> decode(long long flat) const {
    if (flat < 1 || flat > total_) throw IndexOutOfRange("codec: flat index");
    std::vector<int> digits(shape_.size());
    long long rem = flat - 1;
    for (int l = factors() - 1; l >= 0; --l) {
      digits[l] = static_cast<int>(rem % shape_[l]) + 1;
      rem /= shape_[l];
    }
    return digits;
  }

 private:
  std::vector<int> shape_;
  long long total_;
};

}  // namespace hmmbounds
