#include "entlm/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "entlm/rng.hpp"

namespace entlm {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MapM = Eigen::Map<MatrixXd>;
using MapV = Eigen::Map<VectorXd>;
using CMapM = Eigen::Map<const MatrixXd>;
using CMapV = Eigen::Map<const VectorXd>;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = gamma (.) xhat + beta per row; caches xhat and 1/sigma for backward
void layer_norm(const MatrixXd& x, CMapV gamma, CMapV beta, MatrixXd& y,
                MatrixXd& xhat, VectorXd& inv_std) {
  const auto n = x.rows();
  const auto d = x.cols();
  y.resize(n, d);
  xhat.resize(n, d);
  inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + TinyMLM::kLayerNormEps);
    inv_std(r) = inv;
    xhat.row(r) = (x.row(r).array() - mu) * inv;
    y.row(r) = xhat.row(r).array() * gamma.transpose().array() +
               beta.transpose().array();
  }
}

// returns dx; accumulates into dgamma/dbeta
MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& xhat,
                             const VectorXd& inv_std, CMapV gamma, MapV dgamma,
                             MapV dbeta) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  MatrixXd dx(n, d);
  dgamma += (dy.array() * xhat.array()).colwise().sum().matrix().transpose();
  dbeta += dy.colwise().sum().transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::ArrayXd dxhat = dy.row(r).transpose().array() * gamma.array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat.row(r).transpose().array()).mean();
    dx.row(r) = (inv_std(r) *
                 (dxhat - m1 - xhat.row(r).transpose().array() * m2))
                    .matrix()
                    .transpose();
  }
  return dx;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || hidden_dim < 1 || n_layers < 1 || n_heads < 1 ||
      ffn_dim < 1 || max_seq_len < 1)
    throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
  if (hidden_dim % n_heads != 0)
    throw std::invalid_argument("ModelConfig: hidden_dim " +
                                std::to_string(hidden_dim) +
                                " not divisible by n_heads " +
                                std::to_string(n_heads));
}

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  const auto V = static_cast<std::size_t>(config.vocab_size);
  const auto D = static_cast<std::size_t>(config.hidden_dim);
  const auto F = static_cast<std::size_t>(config.ffn_dim);
  const auto P = static_cast<std::size_t>(config.max_seq_len);

  std::size_t at = 0;
  auto claim = [&at](std::size_t count) {
    const auto offset = at;
    at += count;
    return offset;
  };

  tok_emb = claim(D * V);
  pos_emb = claim(D * P);
  emb_ln_g = claim(D);
  emb_ln_b = claim(D);
  for (int l = 0; l < config.n_layers; ++l) {
    Layer layer;
    layer.Wq = claim(D * D);
    layer.bq = claim(D);
    layer.Wk = claim(D * D);
    layer.bk = claim(D);
    layer.Wv = claim(D * D);
    layer.bv = claim(D);
    layer.Wo = claim(D * D);
    layer.bo = claim(D);
    layer.ln1_g = claim(D);
    layer.ln1_b = claim(D);
    layer.W1 = claim(D * F);
    layer.b1 = claim(F);
    layer.W2 = claim(F * D);
    layer.b2 = claim(D);
    layer.ln2_g = claim(D);
    layer.ln2_b = claim(D);
    layers.push_back(layer);
  }
  w_lm = claim(D * V);
  total = at;
}

TinyMLM::TinyMLM(const ModelConfig& config) : config_(config), layout_(config) {
  params_.resize(static_cast<Eigen::Index>(layout_.total));
  Rng rng(config_.seed);
  for (Eigen::Index i = 0; i < params_.size(); ++i)
    params_(i) = rng.gaussian() * kInitStd;

  const auto D = config_.hidden_dim;
  const auto F = config_.ffn_dim;
  auto zero = [&](std::size_t off, int count) {
    params_.segment(static_cast<Eigen::Index>(off), count).setZero();
  };
  auto ones = [&](std::size_t off, int count) {
    params_.segment(static_cast<Eigen::Index>(off), count).setOnes();
  };
  ones(layout_.emb_ln_g, D);
  zero(layout_.emb_ln_b, D);
  for (const auto& layer : layout_.layers) {
    zero(layer.bq, D);
    zero(layer.bk, D);
    zero(layer.bv, D);
    zero(layer.bo, D);
    ones(layer.ln1_g, D);
    zero(layer.ln1_b, D);
    zero(layer.b1, F);
    zero(layer.b2, D);
    ones(layer.ln2_g, D);
    zero(layer.ln2_b, D);
  }
}

Eigen::Map<Eigen::MatrixXd> TinyMLM::w_lm() {
  return MapM(params_.data() + layout_.w_lm, config_.hidden_dim,
              config_.vocab_size);
}

Eigen::Map<const Eigen::MatrixXd> TinyMLM::w_lm() const {
  return CMapM(params_.data() + layout_.w_lm, config_.hidden_dim,
               config_.vocab_size);
}

ForwardResult TinyMLM::forward(const std::vector<int>& token_ids) const {
  const auto n = static_cast<Eigen::Index>(token_ids.size());
  if (n == 0) throw std::invalid_argument("forward: empty input");
  if (n > config_.max_seq_len)
    throw std::invalid_argument("forward: length " + std::to_string(n) +
                                " exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  for (const int id : token_ids)
    if (id < 0 || id >= config_.vocab_size)
      throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                  " outside vocabulary of " +
                                  std::to_string(config_.vocab_size));

  const auto D = config_.hidden_dim;
  const auto heads = config_.n_heads;
  const auto dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* base = params_.data();

  CMapM tok(base + layout_.tok_emb, D, config_.vocab_size);
  CMapM pos(base + layout_.pos_emb, D, config_.max_seq_len);

  ForwardResult fwd;
  fwd.token_ids = token_ids;
  fwd.emb_sum.resize(n, D);
  for (Eigen::Index i = 0; i < n; ++i)
    fwd.emb_sum.row(i) =
        (tok.col(token_ids[static_cast<std::size_t>(i)]) + pos.col(i)).transpose();

  layer_norm(fwd.emb_sum, CMapV(base + layout_.emb_ln_g, D),
             CMapV(base + layout_.emb_ln_b, D), fwd.emb_out, fwd.emb_xhat,
             fwd.emb_inv_std);

  MatrixXd x = fwd.emb_out;
  for (const auto& lay : layout_.layers) {
    LayerCache cache;
    cache.x_in = x;

    CMapM Wq(base + lay.Wq, D, D), Wk(base + lay.Wk, D, D), Wv(base + lay.Wv, D, D);
    cache.Q = (x * Wq).rowwise() + CMapV(base + lay.bq, D).transpose();
    cache.K = (x * Wk).rowwise() + CMapV(base + lay.bk, D).transpose();
    cache.V = (x * Wv).rowwise() + CMapV(base + lay.bv, D).transpose();

    cache.ctx.resize(n, D);
    cache.attn.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto Qh = cache.Q.middleCols(h * dh, dh);
      const auto Kh = cache.K.middleCols(h * dh, dh);
      const auto Vh = cache.V.middleCols(h * dh, dh);
      MatrixXd S = Qh * Kh.transpose() * scale;
      for (Eigen::Index r = 0; r < n; ++r) {
        const double m = S.row(r).maxCoeff();
        S.row(r) = (S.row(r).array() - m).exp();
        S.row(r) /= S.row(r).sum();
      }
      cache.attn[static_cast<std::size_t>(h)] = S;
      cache.ctx.middleCols(h * dh, dh) = S * Vh;
    }

    CMapM Wo(base + lay.Wo, D, D);
    cache.attn_res =
        x + ((cache.ctx * Wo).rowwise() + CMapV(base + lay.bo, D).transpose());
    layer_norm(cache.attn_res, CMapV(base + lay.ln1_g, D),
               CMapV(base + lay.ln1_b, D), cache.x_mid, cache.ln1_xhat,
               cache.ln1_inv_std);

    CMapM W1(base + lay.W1, D, config_.ffn_dim);
    CMapM W2(base + lay.W2, config_.ffn_dim, D);
    cache.z1 = (cache.x_mid * W1).rowwise() +
               CMapV(base + lay.b1, config_.ffn_dim).transpose();
    cache.a1 = cache.z1.unaryExpr([](double v) { return gelu(v); });
    cache.ffn_res = cache.x_mid + ((cache.a1 * W2).rowwise() +
                                   CMapV(base + lay.b2, D).transpose());
    layer_norm(cache.ffn_res, CMapV(base + lay.ln2_g, D),
               CMapV(base + lay.ln2_b, D), cache.x_out, cache.ln2_xhat,
               cache.ln2_inv_std);

    x = cache.x_out;
    fwd.layers.push_back(std::move(cache));
  }

  fwd.hidden = x;
  fwd.logits = x * w_lm();
  ++n_forwards_;
  return fwd;
}

void TinyMLM::backward(const ForwardResult& fwd, const Eigen::MatrixXd& dlogits,
                       Eigen::VectorXd& grad) const {
  const auto n = fwd.hidden.rows();
  if (grad.size() != params_.size())
    throw std::invalid_argument("backward: gradient buffer has wrong size");
  if (dlogits.rows() != n || dlogits.cols() != config_.vocab_size)
    throw std::invalid_argument("backward: dlogits shape mismatch");

  MapM(grad.data() + layout_.w_lm, config_.hidden_dim, config_.vocab_size) +=
      fwd.hidden.transpose() * dlogits;
  backward_from_hidden(fwd, dlogits * w_lm().transpose(), grad);
}

void TinyMLM::backward_from_hidden(const ForwardResult& fwd, Eigen::MatrixXd dx,
                                   Eigen::VectorXd& grad) const {
  const auto n = fwd.hidden.rows();
  const auto D = config_.hidden_dim;
  const auto F = config_.ffn_dim;
  const auto heads = config_.n_heads;
  const auto dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (grad.size() != params_.size())
    throw std::invalid_argument("backward: gradient buffer has wrong size");
  if (dx.rows() != n || dx.cols() != D)
    throw std::invalid_argument("backward: hidden-state gradient shape mismatch");

  const double* base = params_.data();
  double* gbase = grad.data();

  for (std::size_t li = layout_.layers.size(); li-- > 0;) {
    const auto& lay = layout_.layers[li];
    const auto& cache = fwd.layers[li];

    MatrixXd d_ffn_res = layer_norm_backward(
        dx, cache.ln2_xhat, cache.ln2_inv_std, CMapV(base + lay.ln2_g, D),
        MapV(gbase + lay.ln2_g, D), MapV(gbase + lay.ln2_b, D));

    // ffn_res = x_mid + a1 W2 + b2
    MapM(gbase + lay.W2, F, D) += cache.a1.transpose() * d_ffn_res;
    MapV(gbase + lay.b2, D) += d_ffn_res.colwise().sum().transpose();
    MatrixXd da1 = d_ffn_res * CMapM(base + lay.W2, F, D).transpose();
    MatrixXd dz1 =
        (da1.array() *
         cache.z1.unaryExpr([](double v) { return gelu_grad(v); }).array())
            .matrix();
    MapM(gbase + lay.W1, D, F) += cache.x_mid.transpose() * dz1;
    MapV(gbase + lay.b1, F) += dz1.colwise().sum().transpose();
    MatrixXd dx_mid = d_ffn_res + dz1 * CMapM(base + lay.W1, D, F).transpose();

    MatrixXd d_attn_res = layer_norm_backward(
        dx_mid, cache.ln1_xhat, cache.ln1_inv_std, CMapV(base + lay.ln1_g, D),
        MapV(gbase + lay.ln1_g, D), MapV(gbase + lay.ln1_b, D));

    // attn_res = x_in + ctx Wo + bo
    MapM(gbase + lay.Wo, D, D) += cache.ctx.transpose() * d_attn_res;
    MapV(gbase + lay.bo, D) += d_attn_res.colwise().sum().transpose();
    MatrixXd dctx = d_attn_res * CMapM(base + lay.Wo, D, D).transpose();

    MatrixXd dQ(n, D), dK(n, D), dV(n, D);
    for (int h = 0; h < heads; ++h) {
      const auto& A = cache.attn[static_cast<std::size_t>(h)];
      const auto Qh = cache.Q.middleCols(h * dh, dh);
      const auto Kh = cache.K.middleCols(h * dh, dh);
      const auto Vh = cache.V.middleCols(h * dh, dh);
      const auto dctx_h = dctx.middleCols(h * dh, dh);

      MatrixXd dA = dctx_h * Vh.transpose();
      dV.middleCols(h * dh, dh) = A.transpose() * dctx_h;
      const VectorXd rowdot = (dA.array() * A.array()).rowwise().sum();
      MatrixXd dS = (A.array() * (dA.colwise() - rowdot).array()).matrix();
      dQ.middleCols(h * dh, dh) = dS * Kh * scale;
      dK.middleCols(h * dh, dh) = dS.transpose() * Qh * scale;
    }

    MatrixXd dx_in = d_attn_res;
    MapM(gbase + lay.Wq, D, D) += cache.x_in.transpose() * dQ;
    MapV(gbase + lay.bq, D) += dQ.colwise().sum().transpose();
    dx_in += dQ * CMapM(base + lay.Wq, D, D).transpose();
    MapM(gbase + lay.Wk, D, D) += cache.x_in.transpose() * dK;
    MapV(gbase + lay.bk, D) += dK.colwise().sum().transpose();
    dx_in += dK * CMapM(base + lay.Wk, D, D).transpose();
    MapM(gbase + lay.Wv, D, D) += cache.x_in.transpose() * dV;
    MapV(gbase + lay.bv, D) += dV.colwise().sum().transpose();
    dx_in += dV * CMapM(base + lay.Wv, D, D).transpose();

    dx = std::move(dx_in);
  }

  MatrixXd d_emb = layer_norm_backward(
      dx, fwd.emb_xhat, fwd.emb_inv_std, CMapV(base + layout_.emb_ln_g, D),
      MapV(gbase + layout_.emb_ln_g, D), MapV(gbase + layout_.emb_ln_b, D));

  MapM dtok(gbase + layout_.tok_emb, D, config_.vocab_size);
  MapM dpos(gbase + layout_.pos_emb, D, config_.max_seq_len);
  for (Eigen::Index i = 0; i < n; ++i) {
    dtok.col(fwd.token_ids[static_cast<std::size_t>(i)]) += d_emb.row(i).transpose();
    dpos.col(i) += d_emb.row(i).transpose();
  }
}

}  // namespace entlm
