#ifndef DTM_MLP_HPP
#define DTM_MLP_HPP

#include <string>
#include <vector>

#include "dtm/numerics.hpp"
#include "dtm/priors.hpp"
#include "dtm/schedule.hpp"

namespace dtm {

/// Trainable denoiser: three linear layers with tanh activations. The input
/// is the state with a scalar time embedding sqrt(1 - abar) appended, the
/// output is the noise prediction. The VJP is a hand-written reverse pass.
class MlpDenoiser final : public ScoreModel {
 public:
  MlpDenoiser(std::size_t dim, std::size_t hidden, Rng& init_rng);

  std::size_t dim() const override { return d_; }
  std::size_t hidden() const { return h_; }

  Vec eps(const Vec& x, double alpha_bar) const override;
  Vec eps_vjp(const Vec& x, double alpha_bar, const Vec& cot) const override;

  Vec& params() { return w_; }
  const Vec& params() const { return w_; }

  /// Gradient of ||eps(x) - target||^2 contributions w.r.t. the flat
  /// parameter vector, accumulated into grad (sized like params()).
  void accumulate_param_grad(const Vec& x, double alpha_bar, const Vec& out_cotangent,
                             Vec& grad) const;

  /// Flat binary layout: "DTMM", u32 version, u64 dim, u64 hidden,
  /// float64 parameters (row-major per layer), little-endian.
  void save(const std::string& path) const;
  static MlpDenoiser load(const std::string& path);

 private:
  MlpDenoiser(std::size_t dim, std::size_t hidden);  // uninitialised weights

  struct Forward {
    Vec in;        // d + 1
    Vec pre1, act1;
    Vec pre2, act2;
    Vec out;
  };
  Forward forward(const Vec& x, double alpha_bar) const;

  std::size_t d_ = 0;
  std::size_t h_ = 0;
  Vec w_;

  // flat layout offsets
  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return h_ * (d_ + 1); }
  std::size_t off_w2() const { return off_b1() + h_; }
  std::size_t off_b2() const { return off_w2() + h_ * h_; }
  std::size_t off_w3() const { return off_b2() + h_; }
  std::size_t off_b3() const { return off_w3() + d_ * h_; }
  std::size_t n_params() const { return off_b3() + d_; }
};

struct MlpTrainReport {
  std::vector<double> epoch_loss;  // mean training-batch loss per epoch
  std::vector<double> eval_loss;   // loss on a fixed probe set after each epoch
};

/// Denoising score matching: minimise E ||eps - eps_theta(sqrt(abar) x0 +
/// sqrt(1-abar) eps, t)||^2 over uniformly sampled t with minibatch Adam.
/// Throws when the running loss turns non-finite (epoch index in message).
MlpTrainReport train_mlp_denoiser(MlpDenoiser& model, const std::vector<Vec>& dataset,
                                  const NoiseSchedule& sched, int epochs, double lr,
                                  std::size_t batch_size, Rng& rng);

}  // namespace dtm

#endif  // DTM_MLP_HPP
