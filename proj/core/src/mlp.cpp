#include "dtm/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dtm {

namespace {
constexpr char kMagic[4] = {'D', 'T', 'M', 'M'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

MlpDenoiser::MlpDenoiser(std::size_t dim, std::size_t hidden) : d_(dim), h_(hidden) {
  if (dim == 0 || hidden == 0) throw std::invalid_argument("MlpDenoiser: dims must be positive");
  w_.assign(n_params(), 0.0);
}

MlpDenoiser::MlpDenoiser(std::size_t dim, std::size_t hidden, Rng& init_rng)
    : MlpDenoiser(dim, hidden) {
  auto xavier = [&](std::size_t off, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) w_[off + i] = (2.0 * init_rng.uniform() - 1.0) * s;
  };
  xavier(off_w1(), h_ * (d_ + 1), d_ + 1, h_);
  xavier(off_w2(), h_ * h_, h_, h_);
  xavier(off_w3(), d_ * h_, h_, d_);
  // biases stay zero
}

MlpDenoiser::Forward MlpDenoiser::forward(const Vec& x, double alpha_bar) const {
  if (x.size() != d_) throw std::invalid_argument("MlpDenoiser: input dim mismatch");
  Forward f;
  f.in.resize(d_ + 1);
  std::copy(x.begin(), x.end(), f.in.begin());
  f.in[d_] = std::sqrt(1.0 - alpha_bar);

  f.pre1.assign(h_, 0.0);
  const double* W1 = w_.data() + off_w1();
  const double* b1 = w_.data() + off_b1();
  for (std::size_t i = 0; i < h_; ++i) {
    double s = b1[i];
    for (std::size_t j = 0; j <= d_; ++j) s += W1[i * (d_ + 1) + j] * f.in[j];
    f.pre1[i] = s;
  }
  f.act1.resize(h_);
  for (std::size_t i = 0; i < h_; ++i) f.act1[i] = std::tanh(f.pre1[i]);

  f.pre2.assign(h_, 0.0);
  const double* W2 = w_.data() + off_w2();
  const double* b2 = w_.data() + off_b2();
  for (std::size_t i = 0; i < h_; ++i) {
    double s = b2[i];
    for (std::size_t j = 0; j < h_; ++j) s += W2[i * h_ + j] * f.act1[j];
    f.pre2[i] = s;
  }
  f.act2.resize(h_);
  for (std::size_t i = 0; i < h_; ++i) f.act2[i] = std::tanh(f.pre2[i]);

  f.out.assign(d_, 0.0);
  const double* W3 = w_.data() + off_w3();
  const double* b3 = w_.data() + off_b3();
  for (std::size_t i = 0; i < d_; ++i) {
    double s = b3[i];
    for (std::size_t j = 0; j < h_; ++j) s += W3[i * h_ + j] * f.act2[j];
    f.out[i] = s;
  }
  return f;
}

Vec MlpDenoiser::eps(const Vec& x, double alpha_bar) const { return forward(x, alpha_bar).out; }

Vec MlpDenoiser::eps_vjp(const Vec& x, double alpha_bar, const Vec& cot) const {
  if (cot.size() != d_) throw std::invalid_argument("MlpDenoiser::eps_vjp: cotangent dim mismatch");
  const Forward f = forward(x, alpha_bar);
  const double* W2 = w_.data() + off_w2();
  const double* W3 = w_.data() + off_w3();
  const double* W1 = w_.data() + off_w1();

  Vec d2(h_, 0.0);  // gradient at pre2
  for (std::size_t j = 0; j < h_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i) s += W3[i * h_ + j] * cot[i];
    d2[j] = s * (1.0 - f.act2[j] * f.act2[j]);
  }
  Vec d1(h_, 0.0);  // gradient at pre1
  for (std::size_t j = 0; j < h_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < h_; ++i) s += W2[i * h_ + j] * d2[i];
    d1[j] = s * (1.0 - f.act1[j] * f.act1[j]);
  }
  Vec out(d_, 0.0);  // time-embedding column dropped
  for (std::size_t j = 0; j < d_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < h_; ++i) s += W1[i * (d_ + 1) + j] * d1[i];
    out[j] = s;
  }
  return out;
}

void MlpDenoiser::accumulate_param_grad(const Vec& x, double alpha_bar, const Vec& out_cotangent,
                                        Vec& grad) const {
  if (grad.size() != w_.size()) grad.assign(w_.size(), 0.0);
  const Forward f = forward(x, alpha_bar);
  const double* W2 = w_.data() + off_w2();
  const double* W3 = w_.data() + off_w3();

  // layer 3
  for (std::size_t i = 0; i < d_; ++i) {
    for (std::size_t j = 0; j < h_; ++j) grad[off_w3() + i * h_ + j] += out_cotangent[i] * f.act2[j];
    grad[off_b3() + i] += out_cotangent[i];
  }
  Vec d2(h_, 0.0);
  for (std::size_t j = 0; j < h_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d_; ++i) s += W3[i * h_ + j] * out_cotangent[i];
    d2[j] = s * (1.0 - f.act2[j] * f.act2[j]);
  }
  // layer 2
  for (std::size_t i = 0; i < h_; ++i) {
    for (std::size_t j = 0; j < h_; ++j) grad[off_w2() + i * h_ + j] += d2[i] * f.act1[j];
    grad[off_b2() + i] += d2[i];
  }
  Vec d1(h_, 0.0);
  for (std::size_t j = 0; j < h_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < h_; ++i) s += W2[i * h_ + j] * d2[i];
    d1[j] = s * (1.0 - f.act1[j] * f.act1[j]);
  }
  // layer 1
  for (std::size_t i = 0; i < h_; ++i) {
    for (std::size_t j = 0; j <= d_; ++j) grad[off_w1() + i * (d_ + 1) + j] += d1[i] * f.in[j];
    grad[off_b1() + i] += d1[i];
  }
}

void MlpDenoiser::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("MlpDenoiser::save: cannot open " + path);
  out.write(kMagic, 4);
  const std::uint32_t ver = kVersion;
  const std::uint64_t d = d_, h = h_;
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(w_.data()),
            static_cast<std::streamsize>(w_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("MlpDenoiser::save: write failed for " + path);
}

MlpDenoiser MlpDenoiser::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("MlpDenoiser::load: cannot open " + path);
  char magic[4];
  std::uint32_t ver = 0;
  std::uint64_t d = 0, h = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || ver != kVersion)
    throw std::runtime_error("MlpDenoiser::load: bad header in " + path);
  MlpDenoiser m(static_cast<std::size_t>(d), static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(m.w_.data()),
          static_cast<std::streamsize>(m.w_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("MlpDenoiser::load: truncated file " + path);
  return m;
}

MlpTrainReport train_mlp_denoiser(MlpDenoiser& model, const std::vector<Vec>& dataset,
                                  const NoiseSchedule& sched, int epochs, double lr,
                                  std::size_t batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train_mlp_denoiser: dataset must be nonempty");
  for (const auto& x : dataset)
    if (x.size() != model.dim())
      throw std::invalid_argument("train_mlp_denoiser: dataset dim mismatch");
  if (batch_size == 0) throw std::invalid_argument("train_mlp_denoiser: batch_size must be >= 1");

  MlpTrainReport report;
  if (epochs <= 0) return report;

  // fixed evaluation probes: same (x_t, t, eps) triplets scored every epoch
  struct Probe {
    Vec xt;
    double abar;
    Vec noise;
  };
  std::vector<Probe> probes;
  {
    Rng eval_rng = rng.child(0xe7a1);
    for (int i = 0; i < 512; ++i) {
      Probe p;
      const Vec& x0 = dataset[eval_rng.below(dataset.size())];
      const int t = static_cast<int>(eval_rng.below(static_cast<std::uint64_t>(sched.T))) + 1;
      p.abar = sched.at(t);
      p.noise = gaussian_sample(eval_rng, model.dim());
      p.xt.resize(model.dim());
      const double sa = std::sqrt(p.abar), sn = std::sqrt(1.0 - p.abar);
      for (std::size_t j = 0; j < p.xt.size(); ++j) p.xt[j] = sa * x0[j] + sn * p.noise[j];
      probes.push_back(std::move(p));
    }
  }
  auto eval = [&] {
    double loss = 0.0;
    for (const auto& p : probes) {
      const Vec pred = model.eps(p.xt, p.abar);
      for (std::size_t j = 0; j < pred.size(); ++j) loss += std::pow(pred[j] - p.noise[j], 2);
    }
    return loss / static_cast<double>(probes.size());
  };

  AdamState opt;
  Vec grad(model.params().size(), 0.0);
  const std::size_t n = dataset.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;

  for (int e = 0; e < epochs; ++e) {
    double epoch_loss = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      const std::size_t bs = std::min(batch_size, n);  // draws with replacement
      for (std::size_t s = 0; s < bs; ++s) {
        const Vec& x0 = dataset[rng.below(n)];
        const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T))) + 1;
        const double abar = sched.at(t);
        const Vec noise = gaussian_sample(rng, model.dim());
        Vec xt(model.dim());
        const double sa = std::sqrt(abar), sn = std::sqrt(1.0 - abar);
        for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = sa * x0[i] + sn * noise[i];
        const Vec pred = model.eps(xt, abar);
        Vec cot(model.dim());
        for (std::size_t i = 0; i < cot.size(); ++i) {
          const double r = pred[i] - noise[i];
          batch_loss += r * r;
          cot[i] = 2.0 * r / static_cast<double>(bs);
        }
        model.accumulate_param_grad(xt, abar, cot, grad);
      }
      batch_loss /= static_cast<double>(bs);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_mlp_denoiser: loss diverged (non-finite) at epoch " +
                                 std::to_string(e));
      adam_step(model.params(), grad, opt, lr);
      epoch_loss += batch_loss;
      ++count;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(count));
    report.eval_loss.push_back(eval());
  }
  return report;
}

}  // namespace dtm
