#include "cxnlm/model.hpp"

#include <cmath>
#include <limits>
#include <thread>

#include "cxnlm/error.hpp"
#include "cxnlm/random.hpp"

namespace cxnlm {

Eigen::MatrixXd UniformLm::next_token_log_probs(std::span<const TokenId> ids) const {
  return Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(vocab_size_),
                                   -std::log(static_cast<double>(vocab_size_)));
}

// ---- config ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size <= 0 || hidden_size <= 0 || intermediate_size <= 0 || num_layers <= 0 || num_heads <= 0 ||
      context_length <= 0) {
    throw ModelError("model sizes must be positive");
  }
  if (hidden_size % num_heads != 0) throw ModelError("hidden_size must be divisible by num_heads");
  if (head_dim() % 2 != 0) throw ModelError("rotary encoding needs an even head dimension");
  if (!(norm_epsilon > 0.0)) throw ModelError("norm_epsilon must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},   {"hidden_size", hidden_size},       {"intermediate_size", intermediate_size},
          {"num_layers", num_layers},   {"num_heads", num_heads},           {"context_length", context_length},
          {"norm_epsilon", norm_epsilon}, {"rope_base", rope_base}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.intermediate_size = j.value("intermediate_size", c.intermediate_size);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.context_length = j.value("context_length", c.context_length);
  c.norm_epsilon = j.value("norm_epsilon", c.norm_epsilon);
  c.rope_base = j.value("rope_base", c.rope_base);
  return c;
}

std::int64_t count_parameters(const ModelConfig& c) {
  const std::int64_t v = c.vocab_size, h = c.hidden_size, i = c.intermediate_size, l = c.num_layers;
  return 2 * v * h + l * (4 * h * h + 3 * h * i + 2 * h) + h;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  auto add = [this](std::string name, int rows, int cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += tensors_.back().size();
  };
  const int h = c.hidden_size, i = c.intermediate_size;
  add("embed_tokens", c.vocab_size, h);
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "input_layernorm", 1, h);
    add(p + "self_attn.q_proj", h, h);
    add(p + "self_attn.k_proj", h, h);
    add(p + "self_attn.v_proj", h, h);
    add(p + "self_attn.o_proj", h, h);
    add(p + "post_attention_layernorm", 1, h);
    add(p + "mlp.gate_proj", i, h);
    add(p + "mlp.up_proj", i, h);
    add(p + "mlp.down_proj", h, i);
  }
  add("norm", 1, h);
  add("lm_head", c.vocab_size, h);
}

const TensorSpec& ParamLayout::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ModelError("no tensor named '" + name + "'");
}

// ---- transformer ----------------------------------------------------------

namespace {

// Tensor indices within one layer, matching the ParamLayout order.
enum LayerTensor { kAttnNorm = 0, kQ, kK, kV, kO, kMlpNorm, kGate, kUp, kDown, kPerLayer };

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
Eigen::Map<const Mat<T>> view(const ParamBuffer<T>& buf, const TensorSpec& s) {
  return Eigen::Map<const Mat<T>>(buf.data() + s.offset, s.rows, s.cols);
}

template <typename T>
Eigen::Map<Mat<T>> view(std::span<T> buf, const TensorSpec& s) {
  return Eigen::Map<Mat<T>>(buf.data() + s.offset, s.rows, s.cols);
}

// y = (x / rms(x)) * w; stores the normalized rows and the inverse rms.
template <typename T>
void rms_norm(const Mat<T>& x, const Eigen::Map<const Mat<T>>& w, T eps, Mat<T>& normed, Vec<T>& inv_rms,
              Mat<T>& out) {
  const auto h = static_cast<T>(x.cols());
  inv_rms = ((x.array().square().rowwise().sum() / h) + eps).rsqrt().matrix();
  normed = inv_rms.asDiagonal() * x;
  out = normed * w.row(0).asDiagonal();
}

template <typename T>
void rms_norm_backward(const Mat<T>& d_out, const Mat<T>& normed, const Vec<T>& inv_rms,
                       const Eigen::Map<const Mat<T>>& w, Eigen::Map<Mat<T>> d_w, T scale, Mat<T>& d_x) {
  d_w.row(0).noalias() += scale * (d_out.array() * normed.array()).colwise().sum().matrix();
  const Mat<T> d_normed = d_out * w.row(0).asDiagonal();
  const Vec<T> dot = (d_normed.array() * normed.array()).rowwise().sum() / static_cast<T>(normed.cols());
  d_x = inv_rms.asDiagonal() * (d_normed - dot.asDiagonal() * normed);
}

template <typename T>
void apply_rope(Mat<T>& x, const Mat<T>& cos, const Mat<T>& sin, int heads, int head_dim, bool inverse) {
  const int half = head_dim / 2;
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (int h = 0; h < heads; ++h) {
      T* row = x.data() + t * x.cols() + h * head_dim;
      for (int i = 0; i < half; ++i) {
        const T c = cos(t, i);
        const T s = inverse ? -sin(t, i) : sin(t, i);
        const T a = row[i];
        const T b = row[i + half];
        row[i] = a * c - b * s;
        row[i + half] = b * c + a * s;
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
struct Transformer<T>::Cache {
  struct Layer {
    Mat<T> x_in, attn_normed, attn_in, q, k, v, attn_out;
    Vec<T> attn_inv_rms;
    std::vector<Mat<T>> probs;  // per head, T x T
    Mat<T> x_mid, mlp_normed, mlp_in, gate, up, act;
    Vec<T> mlp_inv_rms;
  };
  std::vector<Layer> layers;
  Mat<T> final_normed, final_out;
  Vec<T> final_inv_rms;
};

template <typename T>
Transformer<T>::Transformer(ModelConfig config) : config_(config), layout_((config.validate(), config)) {
  params_.assign(layout_.total(), T(0));
  const int half = config_.head_dim() / 2;
  rope_cos_.resize(config_.context_length, half);
  rope_sin_.resize(config_.context_length, half);
  for (int p = 0; p < config_.context_length; ++p) {
    for (int i = 0; i < half; ++i) {
      const double inv_freq = std::pow(config_.rope_base, -2.0 * i / config_.head_dim());
      rope_cos_(p, i) = static_cast<T>(std::cos(p * inv_freq));
      rope_sin_(p, i) = static_cast<T>(std::sin(p * inv_freq));
    }
  }
}

template <typename T>
void Transformer<T>::init(std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (const auto& spec : layout_.tensors()) {
    T* p = params_.data() + spec.offset;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      p[i] = spec.is_norm() ? T(1) : static_cast<T>(stddev * rng.normal());
    }
  }
}

template <typename T>
void Transformer<T>::check_input(std::span<const TokenId> ids) const {
  if (ids.empty()) throw ModelError("empty input sequence");
  if (ids.size() > static_cast<std::size_t>(config_.context_length)) {
    throw ModelError("sequence of length " + std::to_string(ids.size()) + " exceeds context length " +
                     std::to_string(config_.context_length));
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw ModelError("token id " + std::to_string(id) + " out of range");
  }
}

template <typename T>
void Transformer<T>::forward(std::span<const TokenId> ids, Matrix& logp, Cache* cache) const {
  check_input(ids);
  const auto& tensors = layout_.tensors();
  const int n = static_cast<int>(ids.size());
  const int hd = config_.head_dim();
  const int heads = config_.num_heads;
  const T eps = static_cast<T>(config_.norm_epsilon);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const Mat<T> cos = rope_cos_.topRows(n);
  const Mat<T> sin = rope_sin_.topRows(n);

  const auto embed = view(params_, tensors.front());
  Mat<T> x(n, config_.hidden_size);
  for (int t = 0; t < n; ++t) x.row(t) = embed.row(ids[static_cast<std::size_t>(t)]);

  if (cache) cache->layers.resize(static_cast<std::size_t>(config_.num_layers));
  Mat<T> normed, attn_in, q, k, v, attn_out, mlp_in, gate, up, act;
  Vec<T> inv_rms;
  std::vector<Mat<T>> probs(static_cast<std::size_t>(heads));
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::size_t base = 1 + static_cast<std::size_t>(l) * kPerLayer;
    auto w = [&](int which) { return view(params_, tensors[base + static_cast<std::size_t>(which)]); };

    rms_norm<T>(x, w(kAttnNorm), eps, normed, inv_rms, attn_in);
    q.noalias() = attn_in * w(kQ).transpose();
    k.noalias() = attn_in * w(kK).transpose();
    v.noalias() = attn_in * w(kV).transpose();
    apply_rope<T>(q, cos, sin, heads, hd, false);
    apply_rope<T>(k, cos, sin, heads, hd, false);
    attn_out.resize(n, config_.hidden_size);
    for (int h = 0; h < heads; ++h) {
      Mat<T> scores = (q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose()) * scale;
      for (int i = 0; i < n; ++i) {
        const T mx = scores.row(i).head(i + 1).maxCoeff();
        T sum = 0;
        for (int j = 0; j <= i; ++j) {
          scores(i, j) = std::exp(scores(i, j) - mx);
          sum += scores(i, j);
        }
        for (int j = 0; j <= i; ++j) scores(i, j) /= sum;
        for (int j = i + 1; j < n; ++j) scores(i, j) = T(0);
      }
      attn_out.middleCols(h * hd, hd).noalias() = scores * v.middleCols(h * hd, hd);
      probs[static_cast<std::size_t>(h)] = std::move(scores);
    }
    if (cache) {
      auto& c = cache->layers[static_cast<std::size_t>(l)];
      c.x_in = x;
      c.attn_normed = normed;
      c.attn_inv_rms = inv_rms;
      c.attn_in = attn_in;
      c.q = q;
      c.k = k;
      c.v = v;
      c.probs = probs;
      c.attn_out = attn_out;
    }
    x.noalias() += attn_out * w(kO).transpose();

    rms_norm<T>(x, w(kMlpNorm), eps, normed, inv_rms, mlp_in);
    gate.noalias() = mlp_in * w(kGate).transpose();
    up.noalias() = mlp_in * w(kUp).transpose();
    act = gate.unaryExpr([](T g) { return g * sigmoid(g); });
    if (cache) {
      auto& c = cache->layers[static_cast<std::size_t>(l)];
      c.x_mid = x;
      c.mlp_normed = normed;
      c.mlp_inv_rms = inv_rms;
      c.mlp_in = mlp_in;
      c.gate = gate;
      c.up = up;
      c.act = act;
    }
    x.noalias() += (act.array() * up.array()).matrix() * w(kDown).transpose();
  }

  Mat<T> final_out;
  rms_norm<T>(x, view(params_, tensors[tensors.size() - 2]), eps, normed, inv_rms, final_out);
  logp.noalias() = final_out * view(params_, tensors.back()).transpose();
  for (int t = 0; t < n; ++t) {
    auto row = logp.row(t);
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
  if (cache) {
    cache->final_normed = normed;
    cache->final_inv_rms = inv_rms;
    cache->final_out = std::move(final_out);
  }
}

template <typename T>
typename Transformer<T>::Matrix Transformer<T>::log_probs(std::span<const TokenId> ids) const {
  Matrix logp;
  forward(ids, logp, nullptr);
  return logp;
}

template <typename T>
Eigen::MatrixXd Transformer<T>::next_token_log_probs(std::span<const TokenId> ids) const {
  return log_probs(ids).template cast<double>();
}

template <typename T>
double Transformer<T>::accumulate_gradients(const Sequence& seq, T scale, std::span<T> grad) const {
  if (seq.inputs.size() != seq.targets.size()) throw ModelError("inputs and targets differ in length");
  for (TokenId id : seq.targets) {
    if (id < 0 || id >= config_.vocab_size) throw ModelError("target id " + std::to_string(id) + " out of range");
  }
  Cache cache;
  Matrix logp;
  forward(seq.inputs, logp, &cache);
  const auto& tensors = layout_.tensors();
  const int n = static_cast<int>(seq.inputs.size());
  const int hd = config_.head_dim();
  const int heads = config_.num_heads;
  const T attn_scale = T(1) / std::sqrt(static_cast<T>(hd));
  const Mat<T> cos = rope_cos_.topRows(n);
  const Mat<T> sin = rope_sin_.topRows(n);

  double loss = 0.0;
  Mat<T> d_logits = logp.array().exp().matrix();
  for (int t = 0; t < n; ++t) {
    const auto target = seq.targets[static_cast<std::size_t>(t)];
    loss -= static_cast<double>(logp(t, target));
    d_logits(t, target) -= T(1);
  }

  const auto& head_spec = tensors.back();
  view(grad, head_spec).noalias() += scale * (d_logits.transpose() * cache.final_out);
  Mat<T> d_final = d_logits * view(params_, head_spec);

  Mat<T> dx;
  const auto& norm_spec = tensors[tensors.size() - 2];
  rms_norm_backward<T>(d_final, cache.final_normed, cache.final_inv_rms, view(params_, norm_spec),
                       view(grad, norm_spec), scale, dx);

  Mat<T> d_branch, d_act, d_gate, d_up, d_in, d_attn_out, dq, dk, dv;
  for (int l = config_.num_layers - 1; l >= 0; --l) {
    const auto& c = cache.layers[static_cast<std::size_t>(l)];
    const std::size_t base = 1 + static_cast<std::size_t>(l) * kPerLayer;
    auto spec = [&](int which) -> const TensorSpec& { return tensors[base + static_cast<std::size_t>(which)]; };
    auto w = [&](int which) { return view(params_, spec(which)); };
    auto g = [&](int which) { return view(grad, spec(which)); };

    // MLP branch
    const Mat<T> mixed = (c.act.array() * c.up.array()).matrix();
    g(kDown).noalias() += scale * (dx.transpose() * mixed);
    const Mat<T> d_mixed = dx * w(kDown);
    d_act = (d_mixed.array() * c.up.array()).matrix();
    d_up = (d_mixed.array() * c.act.array()).matrix();
    d_gate = d_act.binaryExpr(c.gate, [](T da, T gv) {
      const T s = sigmoid(gv);
      return da * s * (T(1) + gv * (T(1) - s));
    });
    g(kGate).noalias() += scale * (d_gate.transpose() * c.mlp_in);
    g(kUp).noalias() += scale * (d_up.transpose() * c.mlp_in);
    d_in.noalias() = d_gate * w(kGate);
    d_in.noalias() += d_up * w(kUp);
    rms_norm_backward<T>(d_in, c.mlp_normed, c.mlp_inv_rms, w(kMlpNorm), g(kMlpNorm), scale, d_branch);
    dx += d_branch;

    // attention branch
    g(kO).noalias() += scale * (dx.transpose() * c.attn_out);
    d_attn_out.noalias() = dx * w(kO);
    dq.setZero(n, config_.hidden_size);
    dk.setZero(n, config_.hidden_size);
    dv.setZero(n, config_.hidden_size);
    for (int h = 0; h < heads; ++h) {
      const auto& p = c.probs[static_cast<std::size_t>(h)];
      const Mat<T> d_o = d_attn_out.middleCols(h * hd, hd);
      dv.middleCols(h * hd, hd).noalias() = p.transpose() * d_o;
      Mat<T> d_p = d_o * c.v.middleCols(h * hd, hd).transpose();
      const Vec<T> row_dot = (d_p.array() * p.array()).rowwise().sum();
      Mat<T> d_s = (p.array() * (d_p.colwise() - row_dot).array()).matrix() * attn_scale;
      dq.middleCols(h * hd, hd).noalias() = d_s * c.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd).noalias() = d_s.transpose() * c.q.middleCols(h * hd, hd);
    }
    apply_rope<T>(dq, cos, sin, heads, hd, true);
    apply_rope<T>(dk, cos, sin, heads, hd, true);
    g(kQ).noalias() += scale * (dq.transpose() * c.attn_in);
    g(kK).noalias() += scale * (dk.transpose() * c.attn_in);
    g(kV).noalias() += scale * (dv.transpose() * c.attn_in);
    d_in.noalias() = dq * w(kQ);
    d_in.noalias() += dk * w(kK);
    d_in.noalias() += dv * w(kV);
    rms_norm_backward<T>(d_in, c.attn_normed, c.attn_inv_rms, w(kAttnNorm), g(kAttnNorm), scale, d_branch);
    dx += d_branch;
  }

  auto d_embed = view(grad, tensors.front());
  for (int t = 0; t < n; ++t) d_embed.row(seq.inputs[static_cast<std::size_t>(t)]) += scale * dx.row(t);
  return loss;
}

template <typename T>
template <typename U>
Transformer<U> Transformer<T>::cast() const {
  Transformer<U> out(config_);
  for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
  return out;
}

template <typename T>
double loss_and_gradients(const Transformer<T>& model, const std::vector<Sequence>& batch, ParamBuffer<T>& grad,
                          int shards, int threads) {
  if (batch.empty()) throw ModelError("empty batch");
  std::size_t positions = 0;
  for (const auto& s : batch) positions += s.inputs.size();
  if (positions == 0) throw ModelError("batch has no positions");
  const T scale = T(1) / static_cast<T>(positions);
  const std::size_t total = model.layout().total();

  shards = std::max(1, std::min<int>(shards, static_cast<int>(batch.size())));
  threads = std::max(1, std::min(threads, shards));
  grad.assign(total, T(0));
  if (shards == 1) {
    double loss = 0.0;
    for (const auto& s : batch) loss += model.accumulate_gradients(s, scale, std::span<T>(grad));
    return loss / static_cast<double>(positions);
  }

  std::vector<ParamBuffer<T>> shard_grads(static_cast<std::size_t>(shards));
  std::vector<double> shard_loss(static_cast<std::size_t>(shards), 0.0);
  const std::size_t per = (batch.size() + static_cast<std::size_t>(shards) - 1) / static_cast<std::size_t>(shards);
  auto run_shard = [&](int k) {
    auto& g = shard_grads[static_cast<std::size_t>(k)];
    g.assign(total, T(0));
    const std::size_t begin = static_cast<std::size_t>(k) * per;
    const std::size_t end = std::min(batch.size(), begin + per);
    for (std::size_t i = begin; i < end; ++i) {
      shard_loss[static_cast<std::size_t>(k)] += model.accumulate_gradients(batch[i], scale, std::span<T>(g));
    }
  };
  if (threads == 1) {
    for (int k = 0; k < shards; ++k) run_shard(k);
  } else {
    for (int first = 0; first < shards; first += threads) {
      std::vector<std::thread> pool;
      for (int k = first; k < std::min(shards, first + threads); ++k) pool.emplace_back(run_shard, k);
      for (auto& th : pool) th.join();
    }
  }
  double loss = 0.0;
  for (int k = 0; k < shards; ++k) {
    const auto& g = shard_grads[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < total; ++i) grad[i] += g[i];
    loss += shard_loss[static_cast<std::size_t>(k)];
  }
  return loss / static_cast<double>(positions);
}

template class Transformer<float>;
template class Transformer<double>;
template Transformer<double> Transformer<float>::cast<double>() const;
template Transformer<float> Transformer<double>::cast<float>() const;
template double loss_and_gradients<float>(const Transformer<float>&, const std::vector<Sequence>&,
                                          ParamBuffer<float>&, int, int);
template double loss_and_gradients<double>(const Transformer<double>&, const std::vector<Sequence>&,
                                           ParamBuffer<double>&, int, int);

}  // namespace cxnlm
