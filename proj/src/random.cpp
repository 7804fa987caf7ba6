#include "gfsvi/random.hpp"

namespace gfsvi {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void Rng::reseed(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
  normal_.reset();
}

Rng::result_type Rng::operator()() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::normal() { return normal_(*this); }

std::uint64_t derive_seed(std::uint64_t master, std::string_view role) {
  std::uint64_t state = master ^ fnv1a(role);
  splitmix64(state);
  return splitmix64(state);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index) {
  std::uint64_t state = derive_seed(master, role) + index * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = rng.normal();
  return z;
}

}  // namespace gfsvi
