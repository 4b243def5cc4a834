#ifndef DTM_NUMERICS_HPP
#define DTM_NUMERICS_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dtm {

/// Dense 64-bit float vector. All state, controls, observations and
/// gradients in this library are plain contiguous vectors.
using Vec = std::vector<double>;

/// Small dense row-major matrix for feature maps and covariances.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

double dot(const Vec& x, const Vec& y);
double squared_norm(const Vec& x);
double norm(const Vec& x);
bool all_finite(const Vec& x);
/// Throws std::invalid_argument when dims differ; `where` names the call site.
void require_same_dim(const Vec& x, const Vec& y, const char* where);

/// Counter-based seeded RNG. A fixed seed plus a fixed call sequence yields a
/// bit-identical stream; normal draws use an explicit Box-Muller transform so
/// the stream does not depend on library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal draw.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream derived from (seed, stream index).
  Rng child(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// i.i.d. standard-normal vector of the given dimension.
Vec gaussian_sample(Rng& rng, std::size_t dim);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments plus step counter; zero-initialised lazily to the
/// parameter dimension on the first update.
struct AdamState {
  Vec m;
  Vec v;
  int step = 0;
};

/// One in-place Adam update with bias correction.
void adam_step(Vec& param, const Vec& grad, AdamState& state, double lr,
               const AdamParams& hp = AdamParams{});

}  // namespace dtm

#endif  // DTM_NUMERICS_HPP
