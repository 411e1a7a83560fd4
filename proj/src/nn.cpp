#include "geoinpaint/nn.hpp"

#include <cmath>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

namespace {

ad::Var uniform_param(ad::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  ad::Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return ad::Var(std::move(t), true);
}

ad::Var filled_param(int n, double value) { return ad::Var(ad::Tensor({n}, value), true); }

Dense make_dense(int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return Dense{uniform_param({in, out}, bound, rng), uniform_param({out}, bound, rng)};
}

BatchNorm2d make_norm(int channels, const NetworkConfig& cfg) {
  return BatchNorm2d{filled_param(channels, 1.0), filled_param(channels, 0.0),
                     std::vector<double>(static_cast<std::size_t>(channels), 0.0),
                     std::vector<double>(static_cast<std::size_t>(channels), 1.0), cfg.bn_momentum, cfg.bn_eps};
}

ad::Tensor per_channel(const ad::Var& x, const std::vector<double>& values) {
  ad::NoGradGuard guard;
  return ad::channel_expand(ad::constant(ad::Tensor({static_cast<int>(values.size())}, values)), x.shape()).value();
}

int conv_out(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

}  // namespace

ChannelStats ChannelStats::from_data(const FieldStack& data) {
  require(data.count() > 0, ErrorCode::InsufficientSamples, "normalization statistics need at least one sample");
  ChannelStats stats;
  const double n = static_cast<double>(data.count() * data.grid().size());
  for (int c = 0; c < kChannels; ++c) {
    double sum = 0.0;
    for (std::size_t s = 0; s < data.count(); ++s)
      for (double v : data.channel(s, static_cast<Channel>(c))) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (std::size_t s = 0; s < data.count(); ++s)
      for (double v : data.channel(s, static_cast<Channel>(c))) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / n);
    stats.mean[c] = mean;
    stats.stddev[c] = sd > 1e-12 ? sd : 1.0;
  }
  return stats;
}

void ChannelStats::validate() const {
  for (int c = 0; c < kChannels; ++c)
    require(std::isfinite(mean[c]) && std::isfinite(stddev[c]) && stddev[c] > 0.0, ErrorCode::InvalidArgument,
            "normalization statistics must be finite with positive std");
}

void ChannelStats::standardize(FieldStack& data) const {
  for (std::size_t s = 0; s < data.count(); ++s)
    for (int c = 0; c < kChannels; ++c)
      for (double& v : data.channel(s, static_cast<Channel>(c))) v = (v - mean[c]) / stddev[c];
}

void ChannelStats::destandardize(std::span<double> sample) const {
  const std::size_t plane = sample.size() / kChannels;
  for (int c = 0; c < kChannels; ++c)
    for (std::size_t p = 0; p < plane; ++p) sample[c * plane + p] = sample[c * plane + p] * stddev[c] + mean[c];
}

ad::Var ChannelStats::destandardize(const ad::Var& x) const {
  require(x.shape().size() == 4 && x.shape()[1] == kChannels, ErrorCode::ShapeMismatch,
          "destandardize expects [B, 4, ny, nx]");
  const std::vector<double> sd(stddev.begin(), stddev.end());
  const std::vector<double> mu(mean.begin(), mean.end());
  return ad::add_const(ad::mul_const(x, per_channel(x, sd)), per_channel(x, mu));
}

void NetworkConfig::validate() const {
  require(z_dim >= 1, ErrorCode::Config, "z_dim must be positive");
  require(layers >= 1, ErrorCode::Config, "layers must be at least 1");
  require(base_channels >= 2 && base_channels % 2 == 0, ErrorCode::Config, "base_channels must be even and >= 2");
  require(kernel_size >= 1 && stride >= 1, ErrorCode::Config, "kernel_size and stride must be positive");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::Config, "dropout_rate must lie in [0, 1)");
  require(bn_momentum >= 0.0 && bn_momentum < 1.0 && bn_eps > 0.0, ErrorCode::Config, "batch-norm settings");
  require(nx >= 3 && ny >= 3, ErrorCode::DimensionTooSmall, "network grid must be at least 3 x 3");
}

ad::Var Dense::forward(const ad::Var& x) const {
  const ad::Var y = ad::matmul(x, weight);
  return ad::add(y, ad::channel_expand(bias, y.shape()));
}

ad::Var Conv2d::forward(const ad::Var& x) const {
  const ad::Var y = ad::conv2d(x, weight, stride, pad);
  return ad::add(y, ad::channel_expand(bias, y.shape()));
}

ad::Var ConvTranspose2d::forward(const ad::Var& x) const {
  const int oh = (x.shape()[2] - 1) * stride - 2 * pad + kernel;
  const int ow = (x.shape()[3] - 1) * stride - 2 * pad + kernel;
  const ad::Var y = ad::conv_transpose2d(x, weight, stride, pad, oh, ow);
  return ad::add(y, ad::channel_expand(bias, y.shape()));
}

ad::Var BatchNorm2d::forward(const ad::Var& x, bool training) {
  const ad::Shape& s = x.shape();
  const int c = s[1];
  const double count = static_cast<double>(ad::numel(s) / static_cast<std::size_t>(c));
  if (!training) {
    std::vector<double> inv(static_cast<std::size_t>(c));
    std::vector<double> neg_mean(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
      inv[k] = 1.0 / std::sqrt(running_var[k] + eps);
      neg_mean[k] = -running_mean[k];
    }
    const ad::Var xhat = ad::mul_const(ad::add_const(x, per_channel(x, neg_mean)), per_channel(x, inv));
    return ad::add(ad::mul(xhat, ad::channel_expand(gamma, s)), ad::channel_expand(beta, s));
  }
  require(count > 1.0, ErrorCode::InvalidArgument, "batch-norm training needs more than one value per channel");
  const ad::Var mu = ad::scale(ad::channel_sum(x), 1.0 / count);
  const ad::Var xc = ad::sub(x, ad::channel_expand(mu, s));
  const ad::Var var = ad::scale(ad::channel_sum(ad::square(xc)), 1.0 / count);
  const ad::Var inv = ad::pow(ad::add_scalar(var, eps), -0.5);
  const ad::Var xhat = ad::mul(xc, ad::channel_expand(inv, s));
  for (int k = 0; k < c; ++k) {
    running_mean[k] = momentum * running_mean[k] + (1.0 - momentum) * mu.value().data[k];
    running_var[k] = momentum * running_var[k] + (1.0 - momentum) * var.value().data[k] * count / (count - 1.0);
  }
  return ad::add(ad::mul(xhat, ad::channel_expand(gamma, s)), ad::channel_expand(beta, s));
}

Generator::Generator(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int scale = 1 << cfg_.layers;
  require(cfg_.nx % scale == 0 && cfg_.ny % scale == 0, ErrorCode::Config,
          "generator grid must be divisible by 2^layers");
  require(cfg_.kernel_size == 2 * cfg_.stride && cfg_.stride == 2, ErrorCode::Config,
          "generator stages use kernel 4, stride 2");
  h0_ = cfg_.ny / scale;
  w0_ = cfg_.nx / scale;

  std::mt19937_64 rng(seed);
  int ch = cfg_.top_channels();
  fc_ = make_dense(cfg_.z_dim, ch * h0_ * w0_, rng);
  const int k = cfg_.kernel_size;
  for (int l = 0; l < cfg_.layers; ++l) {
    norms_.push_back(make_norm(ch, cfg_));
    const int next = ch / 2;
    const double bound = 1.0 / std::sqrt(static_cast<double>(ch * k * k));
    ups_.push_back(ConvTranspose2d{uniform_param({ch, next, k, k}, bound, rng), uniform_param({next}, bound, rng),
                                   cfg_.stride, 1, k});
    ch = next;
  }
  norms_.push_back(make_norm(ch, cfg_));
  const double bound = 1.0 / std::sqrt(static_cast<double>(ch * 9));
  out_ = ConvTranspose2d{uniform_param({ch, kChannels, 3, 3}, bound, rng), uniform_param({kChannels}, bound, rng), 1,
                         1, 3};
}

ad::Var Generator::generate(const ad::Var& z, const ForwardContext& ctx) {
  require(z.shape().size() == 2 && z.shape()[1] == cfg_.z_dim, ErrorCode::ShapeMismatch,
          "generator expects [B, " + std::to_string(cfg_.z_dim) + "], got " + ad::to_string(z.shape()));
  const int batch = z.shape()[0];
  ad::Var x = ad::reshape(fc_.forward(z), {batch, cfg_.top_channels(), h0_, w0_});
  for (std::size_t l = 0; l < ups_.size(); ++l) x = ups_[l].forward(ad::relu(norms_[l].forward(x, ctx.training)));
  return out_.forward(ad::relu(norms_.back().forward(x, ctx.training)));
}

std::vector<NamedParam> Generator::parameters() const {
  std::vector<NamedParam> out{{"g.fc.weight", fc_.weight}, {"g.fc.bias", fc_.bias}};
  for (std::size_t l = 0; l < ups_.size(); ++l) {
    const std::string n = std::to_string(l);
    out.push_back({"g.bn" + n + ".gamma", norms_[l].gamma});
    out.push_back({"g.bn" + n + ".beta", norms_[l].beta});
    out.push_back({"g.up" + n + ".weight", ups_[l].weight});
    out.push_back({"g.up" + n + ".bias", ups_[l].bias});
  }
  out.push_back({"g.bn_out.gamma", norms_.back().gamma});
  out.push_back({"g.bn_out.beta", norms_.back().beta});
  out.push_back({"g.out.weight", out_.weight});
  out.push_back({"g.out.bias", out_.bias});
  return out;
}

std::vector<NamedBuffer> Generator::buffers() {
  std::vector<NamedBuffer> out;
  for (std::size_t l = 0; l < norms_.size(); ++l) {
    const std::string n = l + 1 == norms_.size() ? "_out" : std::to_string(l);
    out.push_back({"g.bn" + n + ".running_mean", &norms_[l].running_mean});
    out.push_back({"g.bn" + n + ".running_var", &norms_[l].running_var});
  }
  return out;
}

Discriminator::Discriminator(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  int ch = kChannels;
  int h = cfg_.ny;
  int w = cfg_.nx;
  const int k = cfg_.kernel_size;
  for (int l = 0; l < cfg_.layers; ++l) {
    const int next = cfg_.base_channels << l;
    const double bound = 1.0 / std::sqrt(static_cast<double>(ch * k * k));
    convs_.push_back(Conv2d{uniform_param({next, ch, k, k}, bound, rng), uniform_param({next}, bound, rng),
                            cfg_.stride, 1});
    h = conv_out(h, k, cfg_.stride, 1);
    w = conv_out(w, k, cfg_.stride, 1);
    require(h >= 1 && w >= 1, ErrorCode::Config, "discriminator has too many stages for the grid");
    ch = next;
  }
  fc_ = make_dense(ch * h * w, 1, rng);
}

ad::Var Discriminator::score(const ad::Var& x, const ForwardContext& ctx) {
  const ad::Shape& s = x.shape();
  require(s.size() == 4 && s[1] == kChannels && s[2] == cfg_.ny && s[3] == cfg_.nx, ErrorCode::ShapeMismatch,
          "discriminator expects [B, 4, " + std::to_string(cfg_.ny) + ", " + std::to_string(cfg_.nx) + "], got " +
              ad::to_string(s));
  const bool dropout = ctx.training && cfg_.dropout_rate > 0.0;
  require(!dropout || ctx.rng != nullptr, ErrorCode::InvalidArgument, "dropout needs a random source");
  std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
  const double scale = 1.0 / (1.0 - cfg_.dropout_rate);

  ad::Var h = x;
  for (const Conv2d& conv : convs_) {
    h = ad::leaky_relu(conv.forward(h), cfg_.leaky_slope);
    if (dropout) {
      ad::Tensor mask(h.shape());
      for (double& m : mask.data) m = keep(*ctx.rng) ? scale : 0.0;
      h = ad::mul_const(h, mask);
    }
  }
  const int batch = s[0];
  const ad::Var flat = ad::reshape(h, {batch, static_cast<int>(h.size() / static_cast<std::size_t>(batch))});
  return ad::reshape(fc_.forward(flat), {batch});
}

std::vector<NamedParam> Discriminator::parameters() const {
  std::vector<NamedParam> out;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    const std::string n = std::to_string(l);
    out.push_back({"d.conv" + n + ".weight", convs_[l].weight});
    out.push_back({"d.conv" + n + ".bias", convs_[l].bias});
  }
  out.push_back({"d.fc.weight", fc_.weight});
  out.push_back({"d.fc.bias", fc_.bias});
  return out;
}

ad::Var ConstantCritic::score(const ad::Var& x, const ForwardContext&) {
  // 0 * x keeps the score attached to x so input gradients are defined (zero).
  const ad::Var zero = ad::scale(ad::sample_sum(x), 0.0);
  return ad::add_scalar(zero, c_);
}

Adam::Adam(std::vector<ad::Var> params, const AdamConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const ad::Var& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(const std::vector<ad::Var>& grads) {
  require(grads.size() == params_.size(), ErrorCode::LengthMismatch, "one gradient per parameter expected");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::vector<double>& p = params_[k].mutable_value().data;
    const std::vector<double>& g = grads[k].value().data;
    require(g.size() == p.size(), ErrorCode::ShapeMismatch, "gradient shape differs from parameter");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.learning_rate * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.eps);
    }
  }
}

std::vector<ad::Var> vars_of(const std::vector<NamedParam>& params) {
  std::vector<ad::Var> out;
  out.reserve(params.size());
  for (const NamedParam& p : params) out.push_back(p.var);
  return out;
}

}  // namespace geoinpaint
