#include "dtm/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace dtm {

double dot(const Vec& x, const Vec& y) {
  require_same_dim(x, y, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double squared_norm(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double norm(const Vec& x) { return std::sqrt(squared_norm(x)); }

bool all_finite(const Vec& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_same_dim(const Vec& x, const Vec& y, const char* where) {
  if (x.size() != y.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t Rng::next_u64() {
  has_cached_ = false;  // interleaved raw draws invalidate the Box-Muller cache
  return gen_();
}

double Rng::uniform() {
  has_cached_ = false;
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  const double u1 = 1.0 - static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // modulo bias is irrelevant at the sizes used here (batch indices, components)
  has_cached_ = false;
  return gen_() % n;
}

Rng Rng::child(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ull)));
}

Vec gaussian_sample(Rng& rng, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("gaussian_sample: dim must be >= 1");
  Vec out(dim);
  for (auto& v : out) v = rng.normal();
  return out;
}

void adam_step(Vec& param, const Vec& grad, AdamState& state, double lr, const AdamParams& hp) {
  require_same_dim(param, grad, "adam_step");
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  require_same_dim(param, state.m, "adam_step(state)");
  state.step += 1;
  const double c1 = 1.0 - std::pow(hp.beta1, state.step);
  const double c2 = 1.0 - std::pow(hp.beta2, state.step);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grad[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

}  // namespace dtm
