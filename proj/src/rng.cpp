#include "rwta/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace rwta {

double SeededRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // 1 - u is in (0, 1], so the log is finite.
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

SeededRng SeededRng::fork(std::uint64_t stream) const {
  // splitmix64 over (seed, stream) so child streams are decorrelated.
  std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return SeededRng(z ^ (z >> 31));
}

std::string SeededRng::serialize() const {
  std::ostringstream os;
  os << engine_ << " " << (have_spare_ ? 1 : 0) << " ";
  // The spare normal is stored as raw bits to round-trip exactly.
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(spare_));
  std::memcpy(&bits, &spare_, sizeof(bits));
  os << bits << " " << seed_;
  return os.str();
}

SeededRng SeededRng::deserialize(const std::string& blob) {
  std::istringstream is(blob);
  SeededRng rng(0);
  int spare_flag = 0;
  std::uint64_t bits = 0;
  is >> rng.engine_ >> spare_flag >> bits >> rng.seed_;
  if (!is) throw FormatError("SeededRng: malformed state blob");
  rng.have_spare_ = spare_flag != 0;
  std::memcpy(&rng.spare_, &bits, sizeof(bits));
  return rng;
}

template <class T>
Tensor4<T> glorot_uniform(Shape4 shape, SeededRng& rng) {
  if (shape.elements() <= 0)
    throw ShapeError("glorot_uniform: empty shape " + shape.str());
  const double kernel_area = double(shape.h) * shape.w;
  const double fan_in = shape.c * kernel_area;
  const double fan_out = shape.n * kernel_area;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor4<T> out(shape);
  for (auto& v : out.data)
    v = static_cast<T>(rng.uniform(-limit, limit));
  return out;
}

template Tensor4<float> glorot_uniform(Shape4, SeededRng&);
template Tensor4<double> glorot_uniform(Shape4, SeededRng&);

}  // namespace rwta
