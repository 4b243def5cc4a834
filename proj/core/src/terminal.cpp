#include "dtm/terminal.hpp"

#include <cmath>
#include <stdexcept>

namespace dtm {

Vec ForwardOperator::observe(const Vec& x, double sigma_y, Rng& rng) const {
  Vec y = apply(x);
  if (sigma_y > 0.0) {
    for (auto& v : y) v += sigma_y * rng.normal();
  }
  return y;
}

// ---- mask ----

MaskOperator::MaskOperator(Vec mask) : mask_(std::move(mask)) {
  for (double m : mask_)
    if (m != 0.0 && m != 1.0)
      throw std::invalid_argument("MaskOperator: mask entries must be 0 or 1");
}

MaskOperator MaskOperator::random(std::size_t dim, double keep_prob, Rng& rng) {
  Vec m(dim);
  for (auto& v : m) v = (rng.uniform() < keep_prob) ? 1.0 : 0.0;
  return MaskOperator(std::move(m));
}

Vec MaskOperator::apply(const Vec& x) const { return apply_mask(mask_, x); }

Vec MaskOperator::vjp(const Vec&, const Vec& cot) const { return apply_mask(mask_, cot); }

Vec MaskOperator::observe(const Vec& x, double sigma_y, Rng& rng) const {
  Vec y = ForwardOperator::observe(x, sigma_y, rng);
  return apply_mask(mask_, y);  // unobserved coordinates stay exactly zero
}

Vec apply_mask(const Vec& mask, const Vec& x) {
  require_same_dim(mask, x, "apply_mask");
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0)
      throw std::invalid_argument("apply_mask: mask entries must be 0 or 1");
    out[i] = mask[i] * x[i];
  }
  return out;
}

// ---- downsample ----

DownsampleOperator::DownsampleOperator(std::size_t dim, std::size_t factor)
    : dim_(dim), factor_(factor) {
  if (factor == 0 || dim % factor != 0)
    throw std::invalid_argument("DownsampleOperator: dim must be divisible by factor");
}

Vec DownsampleOperator::apply(const Vec& x) const { return apply_downsample(factor_, x); }

Vec DownsampleOperator::vjp(const Vec&, const Vec& cot) const {
  if (cot.size() != output_dim())
    throw std::invalid_argument("DownsampleOperator::vjp: cotangent dim mismatch");
  Vec out(dim_);
  const double inv = 1.0 / static_cast<double>(factor_);
  for (std::size_t j = 0; j < cot.size(); ++j)
    for (std::size_t i = 0; i < factor_; ++i) out[j * factor_ + i] = cot[j] * inv;
  return out;
}

Vec apply_downsample(std::size_t factor, const Vec& x) {
  if (factor == 0 || x.size() % factor != 0)
    throw std::invalid_argument("apply_downsample: dim must be divisible by factor");
  Vec out(x.size() / factor, 0.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < factor; ++i) s += x[j * factor + i];
    out[j] = s / static_cast<double>(factor);
  }
  return out;
}

// ---- circular convolution ----

BlurKernel gaussian_blur_kernel(std::size_t length, double std_taps) {
  if (length % 2 == 0 || length == 0)
    throw std::invalid_argument("gaussian_blur_kernel: length must be odd");
  if (!(std_taps > 0.0)) throw std::invalid_argument("gaussian_blur_kernel: std must be positive");
  BlurKernel k;
  k.taps.resize(length);
  const int h = static_cast<int>(length) / 2;
  double sum = 0.0;
  for (int a = -h; a <= h; ++a) {
    const double v = std::exp(-0.5 * (a / std_taps) * (a / std_taps));
    k.taps[static_cast<std::size_t>(a + h)] = v;
    sum += v;
  }
  for (auto& v : k.taps) v /= sum;
  return k;
}

namespace {
void check_kernel(const BlurKernel& k, std::size_t dim) {
  if (k.taps.empty() || k.taps.size() % 2 == 0)
    throw std::invalid_argument("circular conv: kernel length must be odd and nonzero");
  if (k.taps.size() > dim)
    throw std::invalid_argument("circular conv: kernel longer than signal");
}
}  // namespace

Vec apply_circular_conv(const BlurKernel& kernel, const Vec& x) {
  check_kernel(kernel, x.size());
  const int d = static_cast<int>(x.size());
  const int h = static_cast<int>(kernel.taps.size()) / 2;
  Vec out(x.size(), 0.0);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int a = -h; a <= h; ++a) {
      const int j = ((i - a) % d + d) % d;
      s += kernel.taps[static_cast<std::size_t>(a + h)] * x[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

CircularConvOperator::CircularConvOperator(std::size_t dim, BlurKernel kernel)
    : dim_(dim), kernel_(std::move(kernel)) {
  check_kernel(kernel_, dim_);
}

Vec CircularConvOperator::apply(const Vec& x) const { return apply_circular_conv(kernel_, x); }

// Adjoint of circular convolution: correlation with the same kernel.
Vec CircularConvOperator::vjp(const Vec&, const Vec& cot) const {
  const int d = static_cast<int>(dim_);
  const int h = static_cast<int>(kernel_.taps.size()) / 2;
  Vec out(dim_, 0.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int a = -h; a <= h; ++a) {
      const int i = (j + a) % d;
      s += kernel_.taps[static_cast<std::size_t>(a + h)] * cot[static_cast<std::size_t>((i + d) % d)];
    }
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

Vec conv_kernel_grad(std::size_t kernel_length, const Vec& x, const Vec& cot) {
  require_same_dim(x, cot, "conv_kernel_grad");
  if (kernel_length % 2 == 0 || kernel_length > x.size())
    throw std::invalid_argument("conv_kernel_grad: bad kernel length");
  const int d = static_cast<int>(x.size());
  const int h = static_cast<int>(kernel_length) / 2;
  Vec g(kernel_length, 0.0);
  for (int a = -h; a <= h; ++a) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const int j = ((i - a) % d + d) % d;
      s += cot[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
    }
    g[static_cast<std::size_t>(a + h)] = s;
  }
  return g;
}

// ---- non-linear blur ----

NonlinearBlurOperator::NonlinearBlurOperator(std::size_t dim, BlurKernel kernel, double saturation)
    : dim_(dim), kernel_(std::move(kernel)), a_(saturation) {
  check_kernel(kernel_, dim_);
  if (!(a_ > 0.0)) throw std::invalid_argument("NonlinearBlurOperator: saturation must be positive");
}

Vec apply_nonlinear_blur(const BlurKernel& kernel, double saturation, const Vec& x) {
  if (!(saturation > 0.0))
    throw std::invalid_argument("apply_nonlinear_blur: saturation must be positive");
  Vec sat(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sat[i] = std::tanh(saturation * x[i]) / saturation;
  return apply_circular_conv(kernel, sat);
}

Vec NonlinearBlurOperator::apply(const Vec& x) const {
  return apply_nonlinear_blur(kernel_, a_, x);
}

Vec NonlinearBlurOperator::vjp(const Vec& x, const Vec& cot) const {
  CircularConvOperator conv(dim_, kernel_);
  Vec back = conv.vjp(x, cot);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const double th = std::tanh(a_ * x[i]);
    back[i] *= 1.0 - th * th;  // d/dx tanh(ax)/a
  }
  return back;
}

// ---- residual cost ----

ResidualCost::ResidualCost(ProblemSpec spec) : spec_(std::move(spec)) {
  if (!spec_.op) throw std::invalid_argument("ResidualCost: missing operator");
  if (spec_.y.size() != spec_.op->output_dim())
    throw std::invalid_argument("ResidualCost: y dim does not match operator output dim");
}

double ResidualCost::value(const Vec& x0hat) const { return residual_cost(spec_, x0hat); }

Vec ResidualCost::grad(const Vec& x0hat) const { return residual_cost_grad(spec_, x0hat); }

std::optional<double> ResidualCost::residual_norm(const Vec& x0hat) const {
  return std::sqrt(value(x0hat));
}

double residual_cost(const ProblemSpec& spec, const Vec& x0hat) {
  const Vec ax = spec.op->apply(x0hat);
  require_same_dim(ax, spec.y, "residual_cost");
  double s = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double r = spec.y[i] - ax[i];
    s += r * r;
  }
  return s;
}

Vec residual_cost_grad(const ProblemSpec& spec, const Vec& x0hat) {
  Vec r = spec.op->apply(x0hat);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * (r[i] - spec.y[i]);
  return spec.op->vjp(x0hat, r);
}

// ---- Gram style cost ----

StyleExtractor::StyleExtractor(std::size_t dim, std::size_t m, std::size_t p, std::uint64_t seed)
    : dim_(dim), m_(m), p_(p), w_(m * p, dim) {
  if (dim == 0 || m == 0 || p == 0) throw std::invalid_argument("StyleExtractor: zero dims");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : w_.a) v = scale * rng.normal();
}

Mat StyleExtractor::features(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("StyleExtractor: input dim mismatch");
  Mat f(m_, p_);
  for (std::size_t r = 0; r < m_ * p_; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += w_(r, j) * x[j];
    f.a[r] = std::tanh(s);
  }
  return f;
}

Vec StyleExtractor::vjp(const Vec& x, const Mat& cot) const {
  if (cot.rows != m_ || cot.cols != p_)
    throw std::invalid_argument("StyleExtractor::vjp: cotangent shape mismatch");
  Vec out(dim_, 0.0);
  for (std::size_t r = 0; r < m_ * p_; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += w_(r, j) * x[j];
    const double th = std::tanh(s);
    const double g = cot.a[r] * (1.0 - th * th);
    for (std::size_t j = 0; j < dim_; ++j) out[j] += g * w_(r, j);
  }
  return out;
}

Mat gram(const Mat& f) {
  Mat g(f.rows, f.rows);
  const double inv = 1.0 / static_cast<double>(f.cols);
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < f.rows; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < f.cols; ++c) s += f(i, c) * f(j, c);
      g(i, j) = s * inv;
    }
  return g;
}

GramStyleCost::GramStyleCost(Mat ref_features, StyleExtractor extractor)
    : ref_gram_(gram(ref_features)), extractor_(std::move(extractor)) {
  if (ref_features.rows != extractor_.m() || ref_features.cols != extractor_.p())
    throw std::invalid_argument("GramStyleCost: reference feature shape mismatch");
}

double GramStyleCost::value(const Vec& x0hat) const {
  const Mat g = gram(extractor_.features(x0hat));
  double s = 0.0;
  for (std::size_t i = 0; i < g.a.size(); ++i) {
    const double d = ref_gram_.a[i] - g.a[i];
    s += d * d;
  }
  return s;
}

Vec GramStyleCost::grad(const Vec& x0hat) const {
  const Mat f = extractor_.features(x0hat);
  const Mat g = gram(f);
  // dC/dF = -(4/p) (G_ref - G) F  (both Grams symmetric)
  Mat fcot(f.rows, f.cols);
  const double c = -4.0 / static_cast<double>(f.cols);
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t j = 0; j < f.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < f.rows; ++k) s += (ref_gram_(i, k) - g(i, k)) * f(k, j);
      fcot(i, j) = c * s;
    }
  return extractor_.vjp(x0hat, fcot);
}

double gram_style_cost(const Mat& ref_features, const StyleExtractor& extractor, const Vec& x0hat) {
  return GramStyleCost(ref_features, extractor).value(x0hat);
}

// ---- blind deconvolution cost ----

BlindDeconvCost::BlindDeconvCost(Vec y, double sigma_y, BlurKernel kernel)
    : y_(std::move(y)), sigma_y_(sigma_y), kernel_(std::move(kernel)) {
  check_kernel(kernel_, y_.size());
}

double BlindDeconvCost::value(const Vec& x0hat) const {
  const Vec ax = apply_circular_conv(kernel_, x0hat);
  double s = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double r = y_[i] - ax[i];
    s += r * r;
  }
  return s;
}

Vec BlindDeconvCost::grad(const Vec& x0hat) const {
  CircularConvOperator conv(y_.size(), kernel_);
  Vec r = conv.apply(x0hat);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * (r[i] - y_[i]);
  return conv.vjp(x0hat, r);
}

std::optional<double> BlindDeconvCost::residual_norm(const Vec& x0hat) const {
  return std::sqrt(value(x0hat));
}

Vec BlindDeconvCost::kernel_grad(const Vec& x0hat) const {
  Vec r = apply_circular_conv(kernel_, x0hat);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * (r[i] - y_[i]);
  return conv_kernel_grad(kernel_.taps.size(), x0hat, r);
}

Vec blind_cost_kernel_grad(const BlindDeconvCost& cost, const Vec& x0hat) {
  return cost.kernel_grad(x0hat);
}

}  // namespace dtm
