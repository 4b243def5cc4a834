#ifndef DTM_TERMINAL_HPP
#define DTM_TERMINAL_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dtm/numerics.hpp"

namespace dtm {

/// Measurement operator A of y = A(x0) + sigma_y z, with hand-derived VJP.
class ForwardOperator {
 public:
  virtual ~ForwardOperator() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual Vec apply(const Vec& x) const = 0;
  /// J(x)^T cot; for linear operators the point x is ignored.
  virtual Vec vjp(const Vec& x, const Vec& cot) const = 0;
  virtual bool linear() const { return true; }
  /// Synthesise a noisy observation. Masked operators re-mask the noise so
  /// unobserved coordinates stay exactly zero.
  virtual Vec observe(const Vec& x, double sigma_y, Rng& rng) const;
};

/// Elementwise 0/1 mask; output keeps dimension d with zeroed entries.
class MaskOperator final : public ForwardOperator {
 public:
  explicit MaskOperator(Vec mask);
  static MaskOperator random(std::size_t dim, double keep_prob, Rng& rng);
  std::size_t input_dim() const override { return mask_.size(); }
  std::size_t output_dim() const override { return mask_.size(); }
  Vec apply(const Vec& x) const override;
  Vec vjp(const Vec& x, const Vec& cot) const override;
  Vec observe(const Vec& x, double sigma_y, Rng& rng) const override;
  const Vec& mask() const { return mask_; }

 private:
  Vec mask_;
};

/// Non-overlapping block means with factor f; output dim d / f.
class DownsampleOperator final : public ForwardOperator {
 public:
  DownsampleOperator(std::size_t dim, std::size_t factor);
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_ / factor_; }
  Vec apply(const Vec& x) const override;
  Vec vjp(const Vec& x, const Vec& cot) const override;

 private:
  std::size_t dim_, factor_;
};

/// Odd-length circular convolution kernel. Generated ground-truth kernels are
/// nonnegative and sum to one; trainable kernels are unconstrained.
struct BlurKernel {
  Vec taps;
};

/// Gaussian taps over offsets -(len-1)/2 .. (len-1)/2, normalised to sum 1.
BlurKernel gaussian_blur_kernel(std::size_t length, double std_taps);

class CircularConvOperator final : public ForwardOperator {
 public:
  CircularConvOperator(std::size_t dim, BlurKernel kernel);
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  Vec apply(const Vec& x) const override;
  Vec vjp(const Vec& x, const Vec& cot) const override;
  const BlurKernel& kernel() const { return kernel_; }

 private:
  std::size_t dim_;
  BlurKernel kernel_;
};

/// conv(k, tanh(a x) / a): smooth synthetic non-linear blur.
class NonlinearBlurOperator final : public ForwardOperator {
 public:
  NonlinearBlurOperator(std::size_t dim, BlurKernel kernel, double saturation);
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  Vec apply(const Vec& x) const override;
  Vec vjp(const Vec& x, const Vec& cot) const override;
  bool linear() const override { return false; }

 private:
  std::size_t dim_;
  BlurKernel kernel_;
  double a_;
};

/// Free-function forms of the operators above.
Vec apply_mask(const Vec& mask, const Vec& x);
Vec apply_downsample(std::size_t factor, const Vec& x);
Vec apply_circular_conv(const BlurKernel& kernel, const Vec& x);
Vec apply_nonlinear_blur(const BlurKernel& kernel, double saturation, const Vec& x);

/// Gradient of <conv(k, x), cot> with respect to the kernel taps
/// (cross-correlation of cot with x).
Vec conv_kernel_grad(std::size_t kernel_length, const Vec& x, const Vec& cot);

struct ProblemSpec {
  std::shared_ptr<const ForwardOperator> op;
  Vec y;
  double sigma_y = 0.0;
};

/// Differentiable terminal cost Phi(x0_hat).
class TerminalCost {
 public:
  virtual ~TerminalCost() = default;
  virtual std::size_t dim() const = 0;
  virtual double value(const Vec& x0hat) const = 0;
  virtual Vec grad(const Vec& x0hat) const = 0;
  /// ||y - A(x0_hat)|| when the cost is measurement-based.
  virtual std::optional<double> residual_norm(const Vec& /*x0hat*/) const { return std::nullopt; }
};

/// Phi = ||y - A(x0_hat)||^2.
class ResidualCost final : public TerminalCost {
 public:
  explicit ResidualCost(ProblemSpec spec);
  std::size_t dim() const override { return spec_.op->input_dim(); }
  double value(const Vec& x0hat) const override;
  Vec grad(const Vec& x0hat) const override;
  std::optional<double> residual_norm(const Vec& x0hat) const override;
  const ProblemSpec& spec() const { return spec_; }

 private:
  ProblemSpec spec_;
};

double residual_cost(const ProblemSpec& spec, const Vec& x0hat);
Vec residual_cost_grad(const ProblemSpec& spec, const Vec& x0hat);

/// Fixed seeded feature map: tanh(W x) reshaped to m x p.
class StyleExtractor {
 public:
  StyleExtractor(std::size_t dim, std::size_t m, std::size_t p, std::uint64_t seed);
  std::size_t dim() const { return dim_; }
  std::size_t m() const { return m_; }
  std::size_t p() const { return p_; }
  Mat features(const Vec& x) const;
  /// VJP of the feature map: maps an m x p cotangent back to input space.
  Vec vjp(const Vec& x, const Mat& cot) const;

 private:
  std::size_t dim_, m_, p_;
  Mat w_;  // (m*p) x dim
};

/// Gram matrix G(F) = F F^T / p of an m x p feature matrix.
Mat gram(const Mat& f);

/// Phi = || G(ref) - G(F(x)) ||_F^2.
class GramStyleCost final : public TerminalCost {
 public:
  GramStyleCost(Mat ref_features, StyleExtractor extractor);
  std::size_t dim() const override { return extractor_.dim(); }
  double value(const Vec& x0hat) const override;
  Vec grad(const Vec& x0hat) const override;

 private:
  Mat ref_gram_;
  StyleExtractor extractor_;
};

double gram_style_cost(const Mat& ref_features, const StyleExtractor& extractor, const Vec& x0hat);

/// Blind deconvolution cost ||y - conv(k, x0_hat)||^2 with a trainable kernel:
/// exposes both the state gradient (at fixed k) and the kernel gradient
/// (at fixed x0_hat).
class BlindDeconvCost final : public TerminalCost {
 public:
  BlindDeconvCost(Vec y, double sigma_y, BlurKernel kernel);
  std::size_t dim() const override { return y_.size(); }
  double value(const Vec& x0hat) const override;
  Vec grad(const Vec& x0hat) const override;
  std::optional<double> residual_norm(const Vec& x0hat) const override;
  Vec kernel_grad(const Vec& x0hat) const;
  const BlurKernel& kernel() const { return kernel_; }
  void set_kernel(BlurKernel k) { kernel_ = std::move(k); }

 private:
  Vec y_;
  double sigma_y_;
  BlurKernel kernel_;
};

Vec blind_cost_kernel_grad(const BlindDeconvCost& cost, const Vec& x0hat);

}  // namespace dtm

#endif  // DTM_TERMINAL_HPP
