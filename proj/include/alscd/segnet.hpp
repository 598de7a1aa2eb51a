#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "alscd/config.hpp"
#include "alscd/metrics.hpp"
#include "alscd/nn.hpp"
#include "alscd/patches.hpp"
#include "alscd/raster.hpp"

namespace alscd {

enum class StreamKind { Zin, Rgb };

inline std::string_view stream_kind_name(StreamKind k) { return k == StreamKind::Zin ? "zin" : "rgb"; }

inline StreamKind parse_stream_kind(std::string_view s) {
  if (s == "zin") return StreamKind::Zin;
  if (s == "rgb") return StreamKind::Rgb;
  throw Error(Errc::BadConfig, "unknown input stream '" + std::string(s) + "' (expected zin or rgb)");
}

/// Three-level U-Net, one encoder per input stream.
struct ModelConfig {
  std::vector<StreamKind> streams{StreamKind::Zin};
  std::vector<std::size_t> in_channels{3};
  std::array<std::size_t, 3> encoder_widths{16, 32, 64};
  std::size_t bottleneck_width = 128;
  std::size_t patch_size = kPatchSize;
  std::size_t kernel_size = 3;
  std::uint64_t seed = 0;

  static ModelConfig single_stream() { return {}; }
  static ModelConfig dual_stream() {
    ModelConfig c;
    c.streams = {StreamKind::Zin, StreamKind::Rgb};
    c.in_channels = {3, 3};
    return c;
  }

  std::size_t stream_count() const noexcept { return streams.size(); }
  std::size_t total_in_channels() const noexcept {
    std::size_t s = 0;
    for (auto c : in_channels) s += c;
    return s;
  }

  void validate() const {
    if (streams.size() != 1 && streams.size() != 2)
      throw Error(Errc::BadConfig, "streams must be 1 or 2, got " + std::to_string(streams.size()));
    if (in_channels.size() != streams.size()) throw Error(Errc::BadConfig, "in_channels needs one entry per stream");
    for (auto c : in_channels)
      if (c == 0) throw Error(Errc::BadConfig, "in_channels must be >= 1");
    for (auto w : encoder_widths)
      if (w == 0) throw Error(Errc::BadConfig, "encoder widths must be >= 1");
    if (bottleneck_width == 0) throw Error(Errc::BadConfig, "bottleneck_width must be >= 1");
    if (patch_size == 0 || patch_size % 8) throw Error(Errc::BadConfig, "patch_size must be a positive multiple of 8");
    if (kernel_size % 2 == 0) throw Error(Errc::BadConfig, "kernel_size must be odd");
  }

  /// key=value lines; order is fixed so the text is byte-stable.
  std::string to_text() const {
    std::string kinds;
    for (std::size_t i = 0; i < streams.size(); ++i) kinds += (i ? "," : "") + std::string(stream_kind_name(streams[i]));
    return "streams=" + kinds + "\nin_channels=" + join(in_channels) +
           "\nencoder_widths=" + join(std::vector<std::size_t>(encoder_widths.begin(), encoder_widths.end())) +
           "\nbottleneck_width=" + std::to_string(bottleneck_width) + "\npatch_size=" + std::to_string(patch_size) +
           "\nkernel_size=" + std::to_string(kernel_size) + "\nseed=" + std::to_string(seed) + "\n";
  }

  static ModelConfig from_config(const Config& c, const std::string& section = "") {
    ModelConfig m;
    if (c.has(section, "streams")) {
      m.streams.clear();
      for (const auto& s : split(c.get(section, "streams"), ',')) m.streams.push_back(parse_stream_kind(s));
      m.in_channels.assign(m.streams.size(), 3);
    }
    if (c.has(section, "in_channels")) m.in_channels = parse_list<std::size_t>(c.get(section, "in_channels"), "in_channels");
    if (c.has(section, "encoder_widths")) {
      auto w = parse_list<std::size_t>(c.get(section, "encoder_widths"), "encoder_widths");
      if (w.size() != 3) throw Error(Errc::BadConfig, "encoder_widths needs exactly 3 values");
      std::copy(w.begin(), w.end(), m.encoder_widths.begin());
    }
    m.bottleneck_width = c.get<std::size_t>(section, "bottleneck_width", m.bottleneck_width);
    m.patch_size = c.get<std::size_t>(section, "patch_size", m.patch_size);
    m.kernel_size = c.get<std::size_t>(section, "kernel_size", m.kernel_size);
    m.seed = c.get<std::uint64_t>(section, "seed", m.seed);
    m.validate();
    return m;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct Param {
  std::string name;
  Tensor<T> value, grad;
};

template <class T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

namespace detail {

struct ConvRef {
  std::size_t w, b;
};
struct BnRef {
  std::size_t gamma, beta, mean, var;
};
struct BlockRef {
  ConvRef c1;
  BnRef n1;
  ConvRef c2;
  BnRef n2;
};

}  // namespace detail

template <class T>
struct Model {
  ModelConfig config;
  std::vector<Param<T>> params;
  std::vector<Buffer<T>> buffers;  // batchnorm running statistics
  std::vector<NormStats> norm_stats;  // one per stream, empty until fitted

  std::vector<std::array<detail::BlockRef, 3>> enc;
  detail::BlockRef bott;
  std::array<detail::ConvRef, 3> up;
  std::array<detail::BlockRef, 3> dec;
  detail::ConvRef head;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params) p.grad.fill(T(0));
  }
  Tensor<T>& P(std::size_t i) { return params[i].value; }
  const Tensor<T>& P(std::size_t i) const { return params[i].value; }
  Tensor<T>& G(std::size_t i) { return params[i].grad; }
  Tensor<T>& B(std::size_t i) { return buffers[i].value; }
};

namespace detail {

template <class T>
class ModelBuilder {
 public:
  ModelBuilder(Model<T>& m, std::uint64_t seed) : m_(m), rng_(seed) {}

  // He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in))
  std::size_t param(const std::string& name, Shape shape, double fan_in) {
    Tensor<T> t(shape);
    if (fan_in > 0) {
      const double lim = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-lim, lim);
      for (auto& v : t.vec()) v = static_cast<T>(u(rng_));
    }
    m_.params.push_back({name, std::move(t), Tensor<T>(shape)});
    return m_.params.size() - 1;
  }
  std::size_t constant(const std::string& name, Shape shape, T v) {
    m_.params.push_back({name, Tensor<T>(shape, v), Tensor<T>(shape)});
    return m_.params.size() - 1;
  }
  std::size_t buffer(const std::string& name, Shape shape, T v) {
    m_.buffers.push_back({name, Tensor<T>(std::move(shape), v)});
    return m_.buffers.size() - 1;
  }
  ConvRef conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    const std::size_t w = param(name + ".w", {out, in, k, k}, static_cast<double>(in * k * k));
    const std::size_t b = constant(name + ".b", {out}, T(0));
    return {w, b};
  }
  BnRef bn(const std::string& name, std::size_t c) {
    const std::size_t g = constant(name + ".gamma", {c}, T(1));
    const std::size_t be = constant(name + ".beta", {c}, T(0));
    const std::size_t mean = buffer(name + ".mean", {c}, T(0));
    const std::size_t var = buffer(name + ".var", {c}, T(1));
    return {g, be, mean, var};
  }
  BlockRef block(const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    BlockRef b;
    b.c1 = conv(name + ".conv1", in, out, k);
    b.n1 = bn(name + ".bn1", out);
    b.c2 = conv(name + ".conv2", out, out, k);
    b.n2 = bn(name + ".bn2", out);
    return b;
  }
  // kernel in x out x 2 x 2; stride 2 means each output sees `in` inputs
  ConvRef up(const std::string& name, std::size_t in, std::size_t out) {
    const std::size_t w = param(name + ".w", {in, out, 2, 2}, static_cast<double>(in));
    const std::size_t b = constant(name + ".b", {out}, T(0));
    return {w, b};
  }

 private:
  Model<T>& m_;
  std::mt19937_64 rng_;
};

}  // namespace detail

/// Parameters are created, and drawn from the seeded generator, in a fixed
/// order: encoders (stream by stream, level by level), bottleneck, decoder
/// levels from deepest to shallowest, head.
template <class T>
Model<T> build_model(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config = config;
  detail::ModelBuilder<T> b(m, config.seed);
  const auto& w = config.encoder_widths;
  const std::size_t k = config.kernel_size, S = config.stream_count();
  m.enc.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::size_t in = config.in_channels[s];
    for (std::size_t i = 0; i < 3; ++i) {
      m.enc[s][i] = b.block("s" + std::to_string(s) + ".enc" + std::to_string(i), in, w[i], k);
      in = w[i];
    }
  }
  m.bott = b.block("bottleneck", S * w[2], config.bottleneck_width, k);
  std::size_t in = config.bottleneck_width;
  for (std::size_t ii = 3; ii-- > 0;) {
    m.up[ii] = b.up("dec" + std::to_string(ii) + ".up", in, w[ii]);
    m.dec[ii] = b.block("dec" + std::to_string(ii), (1 + S) * w[ii], w[ii], k);
    in = w[ii];
  }
  m.head = b.conv("head", w[0], 1, 1);
  return m;
}

/// Closed-form parameter count of the architecture.
inline std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t k2 = c.kernel_size * c.kernel_size, S = c.stream_count();
  auto conv = [&](std::size_t in, std::size_t out) { return out * in * k2 + out; };
  auto block = [&](std::size_t in, std::size_t out) { return conv(in, out) + 2 * out + conv(out, out) + 2 * out; };
  const auto& w = c.encoder_widths;
  std::size_t n = 0;
  for (std::size_t s = 0; s < S; ++s) n += block(c.in_channels[s], w[0]) + block(w[0], w[1]) + block(w[1], w[2]);
  n += block(S * w[2], c.bottleneck_width);
  const std::size_t up_in[3] = {w[1], w[2], c.bottleneck_width};
  for (std::size_t i = 0; i < 3; ++i) n += up_in[i] * w[i] * 4 + w[i] + block((1 + S) * w[i], w[i]);
  return n + w[0] + 1;
}

// ---------------------------------------------------------------------------
// forward / backward

template <class T>
struct BlockCache {
  Tensor<T> x, a1, h1, a2;
  nn::BatchNormCache<T> bn1, bn2;
};

template <class T>
struct ForwardCache {
  std::vector<std::array<BlockCache<T>, 3>> enc;
  std::vector<std::array<Tensor<T>, 3>> skip;  // encoder block outputs
  std::vector<std::array<std::vector<std::uint8_t>, 3>> argmax;
  BlockCache<T> bott;
  Tensor<T> bott_out;
  std::array<Tensor<T>, 3> up_in;
  std::array<BlockCache<T>, 3> dec;
  Tensor<T> dec0_out;
  Tensor<T> prob;
};

namespace detail {

template <class T>
Tensor<T> block_forward(Model<T>& m, const BlockRef& r, const Tensor<T>& x, nn::Mode mode, BlockCache<T>* c) {
  Tensor<T> a1 = nn::conv2d(x, m.P(r.c1.w), m.P(r.c1.b));
  a1 = nn::batchnorm(a1, m.P(r.n1.gamma), m.P(r.n1.beta), m.B(r.n1.mean), m.B(r.n1.var), mode, c ? &c->bn1 : nullptr);
  Tensor<T> h1 = nn::relu(a1);
  Tensor<T> a2 = nn::conv2d(h1, m.P(r.c2.w), m.P(r.c2.b));
  a2 = nn::batchnorm(a2, m.P(r.n2.gamma), m.P(r.n2.beta), m.B(r.n2.mean), m.B(r.n2.var), mode, c ? &c->bn2 : nullptr);
  Tensor<T> h2 = nn::relu(a2);
  if (c) {
    c->x = x;
    c->a1 = std::move(a1);
    c->h1 = std::move(h1);
    c->a2 = std::move(a2);
  }
  return h2;
}

template <class T>
void block_backward(Model<T>& m, const BlockRef& r, const BlockCache<T>& c, const Tensor<T>& dh2, Tensor<T>* dx) {
  Tensor<T> d = nn::relu_backward(c.a2, dh2);
  d = nn::batchnorm_backward(c.bn2, m.P(r.n2.gamma), d, m.G(r.n2.gamma), m.G(r.n2.beta));
  Tensor<T> dh1;
  nn::conv2d_backward(c.h1, m.P(r.c2.w), d, &dh1, m.G(r.c2.w), m.G(r.c2.b));
  d = nn::relu_backward(c.a1, dh1);
  d = nn::batchnorm_backward(c.bn1, m.P(r.n1.gamma), d, m.G(r.n1.gamma), m.G(r.n1.beta));
  nn::conv2d_backward(c.x, m.P(r.c1.w), d, dx, m.G(r.c1.w), m.G(r.c1.b));
}

template <class T>
Tensor<T> concat_all(const std::vector<const Tensor<T>*>& parts) {
  Tensor<T> out = *parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out = nn::concat_channels(out, *parts[i]);
  return out;
}

// Splits N x (sum sizes) x H x W along channels.
template <class T>
std::vector<Tensor<T>> split_all(const Tensor<T>& t, const std::vector<std::size_t>& sizes) {
  const std::size_t N = t.dim(0), C = t.dim(1), P = t.dim(2) * t.dim(3);
  std::vector<Tensor<T>> out;
  std::size_t off = 0;
  for (std::size_t s : sizes) {
    Tensor<T> part({N, s, t.dim(2), t.dim(3)});
    for (std::size_t n = 0; n < N; ++n) std::copy_n(t.data() + (n * C + off) * P, s * P, part.data() + n * s * P);
    out.push_back(std::move(part));
    off += s;
  }
  require_shape(off == C, "split: channel sizes do not add up");
  return out;
}

template <class T>
void add_into(Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace detail

/// Probability map N x 1 x H x W for per-stream inputs N x C_s x H x W.
/// Train mode updates batchnorm running statistics; pass a cache to allow
/// backward().
template <class T>
Tensor<T> forward(Model<T>& m, const std::vector<Tensor<T>>& inputs, nn::Mode mode, ForwardCache<T>* cache = nullptr) {
  const std::size_t S = m.config.stream_count();
  if (inputs.size() != S)
    throw Error(Errc::ShapeMismatch, "model has " + std::to_string(S) + " streams, got " + std::to_string(inputs.size()));
  const Shape& s0 = inputs[0].shape();
  for (std::size_t s = 0; s < S; ++s) {
    const Shape& sh = inputs[s].shape();
    require_shape(sh.size() == 4 && sh[1] == m.config.in_channels[s] && sh[0] == s0[0] && sh[2] == s0[2] && sh[3] == s0[3],
                  "stream " + std::to_string(s) + " input " + shape_str(sh));
  }
  require_shape(s0[2] % 8 == 0 && s0[3] % 8 == 0, "spatial size must be divisible by 8, got " + shape_str(s0));
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  const bool keep = cache != nullptr;
  c.enc.assign(S, {});
  c.skip.assign(S, {});
  c.argmax.assign(S, {});
  std::vector<Tensor<T>> pooled(S);
  for (std::size_t s = 0; s < S; ++s) {
    Tensor<T> x = inputs[s];
    for (std::size_t i = 0; i < 3; ++i) {
      c.skip[s][i] = detail::block_forward(m, m.enc[s][i], x, mode, keep ? &c.enc[s][i] : nullptr);
      x = nn::maxpool2(c.skip[s][i], keep ? &c.argmax[s][i] : nullptr);
    }
    pooled[s] = std::move(x);
  }
  std::vector<const Tensor<T>*> parts;
  for (auto& p : pooled) parts.push_back(&p);
  Tensor<T> x = detail::block_forward(m, m.bott, detail::concat_all(parts), mode, keep ? &c.bott : nullptr);
  for (std::size_t i = 3; i-- > 0;) {
    Tensor<T> u = nn::conv_transpose2d(x, m.P(m.up[i].w), m.P(m.up[i].b));
    if (keep) c.up_in[i] = std::move(x);
    parts = {&u};
    for (std::size_t s = 0; s < S; ++s) parts.push_back(&c.skip[s][i]);
    x = detail::block_forward(m, m.dec[i], detail::concat_all(parts), mode, keep ? &c.dec[i] : nullptr);
  }
  Tensor<T> logits = nn::conv2d(x, m.P(m.head.w), m.P(m.head.b));
  Tensor<T> prob = nn::sigmoid(logits);
  if (keep) {
    c.dec0_out = std::move(x);
    c.prob = prob;
  }
  return prob;
}

/// Accumulates parameter gradients of a loss whose gradient with respect to
/// the forward output is `dprob`. Input gradients are written when
/// `input_grads` is non-null (skipped otherwise, which saves the first
/// layer's data gradient).
template <class T>
void backward(Model<T>& m, const ForwardCache<T>& c, const Tensor<T>& dprob,
              std::vector<Tensor<T>>* input_grads = nullptr) {
  const std::size_t S = m.config.stream_count();
  const auto& w = m.config.encoder_widths;
  Tensor<T> dlogits = nn::sigmoid_backward(c.prob, dprob);
  Tensor<T> dx;
  nn::conv2d_backward(c.dec0_out, m.P(m.head.w), dlogits, &dx, m.G(m.head.w), m.G(m.head.b));
  std::vector<std::array<Tensor<T>, 3>> dskip(S);
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor<T> dcat;
    detail::block_backward(m, m.dec[i], c.dec[i], dx, &dcat);
    std::vector<std::size_t> sizes(1 + S, w[i]);
    auto parts = detail::split_all(dcat, sizes);
    for (std::size_t s = 0; s < S; ++s) dskip[s][i] = std::move(parts[1 + s]);
    nn::conv_transpose2d_backward(c.up_in[i], m.P(m.up[i].w), parts[0], &dx, m.G(m.up[i].w), m.G(m.up[i].b));
  }
  Tensor<T> dbott;
  detail::block_backward(m, m.bott, c.bott, dx, &dbott);
  auto dpooled = detail::split_all(dbott, std::vector<std::size_t>(S, w[2]));
  if (input_grads) input_grads->assign(S, {});
  for (std::size_t s = 0; s < S; ++s) {
    Tensor<T> d = std::move(dpooled[s]);
    for (std::size_t i = 3; i-- > 0;) {
      Tensor<T> dh = nn::maxpool2_backward(c.skip[s][i].shape(), c.argmax[s][i], d);
      detail::add_into(dh, dskip[s][i]);
      const bool need_dx = i > 0 || input_grads;
      detail::block_backward(m, m.enc[s][i], c.enc[s][i], dh, need_dx ? &d : nullptr);
    }
    if (input_grads) (*input_grads)[s] = std::move(d);
  }
}

// ---------------------------------------------------------------------------
// training

/// Training samples are patches whose data holds every stream's channels
/// back to back (stream 0 first), so one augmentation moves all streams and
/// the mask together.
template <class T>
std::vector<Tensor<T>> split_streams(const ModelConfig& c, const Tensor<T>& batch) {
  return detail::split_all(batch, c.in_channels);
}

template <class T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
  Shape s = items.front()->shape();
  s.insert(s.begin(), items.size());
  Tensor<T> out(s);
  const std::size_t n = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_shape(items[i]->size() == n, "stack_batch: item sizes differ");
    std::copy_n(items[i]->data(), n, out.data() + i * n);
  }
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0, val_loss = 0, val_iou = 0, lr = 0, seconds = 0;
  friend bool operator==(const EpochRecord& a, const EpochRecord& b) {
    // wall time is not part of the result
    return a.epoch == b.epoch && a.train_loss == b.train_loss && a.val_loss == b.val_loss && a.val_iou == b.val_iou &&
           a.lr == b.lr;
  }
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainOptions {
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation{};
  /// Stop after the first epoch whose validation IOU reaches this value.
  std::optional<double> stop_at_val_iou;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct Evaluation {
  double loss = 0;
  ConfusionCounts counts;
  double iou() const { return alscd::iou(counts); }
};

/// Infer-mode loss and pooled pixel confusion over the patches' valid extents.
template <class T>
Evaluation evaluate(Model<T>& m, const std::vector<Patch<T>>& set, std::size_t batch_size = 8) {
  if (set.empty()) throw Error(Errc::EmptyDataset, "evaluation set is empty");
  Evaluation e;
  double loss_sum = 0, n = 0;
  for (std::size_t b0 = 0; b0 < set.size(); b0 += batch_size) {
    std::vector<const Tensor<T>*> xs, ys;
    for (std::size_t i = b0; i < std::min(set.size(), b0 + batch_size); ++i) {
      xs.push_back(&set[i].data);
      ys.push_back(&set[i].mask);
    }
    const Tensor<T> y = stack_batch(ys);
    const Tensor<T> p = forward(m, split_streams(m.config, stack_batch(xs)), nn::Mode::Infer);
    loss_sum += nn::bce_loss(p, y).loss * static_cast<double>(p.size());
    n += static_cast<double>(p.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const Patch<T>& patch = set[b0 + k];
      const std::size_t S = patch.size();
      for (std::size_t r = 0; r < patch.valid_h; ++r)
        for (std::size_t q = 0; q < patch.valid_w; ++q) {
          const bool pb = p[(k * S + r) * S + q] >= T(0.5), tb = y[(k * S + r) * S + q] >= T(0.5);
          if (pb && tb) ++e.counts.tp;
          else if (pb) ++e.counts.fp;
          else if (tb) ++e.counts.fn;
          else ++e.counts.tn;
        }
    }
  }
  e.loss = loss_sum / n;
  return e;
}

/// Minibatch Adam on mean BCE. Each epoch shuffles (seeded), optionally
/// augments every patch, then scores the validation set. The learning rate
/// is multiplied by lr_decay after plateau_patience epochs without a
/// validation loss improvement larger than plateau_min_delta. The weights of
/// the epoch with the best validation IOU are restored at the end.
template <class T>
TrainHistory train(Model<T>& m, const std::vector<Patch<T>>& train_set, const std::vector<Patch<T>>& val_set,
                   const nn::Hyperparams& hp, const TrainOptions& opt = {}) {
  if (train_set.empty()) throw Error(Errc::EmptyDataset, "training set is empty");
  if (val_set.empty()) throw Error(Errc::EmptyDataset, "validation set is empty");
  const std::size_t S = m.config.patch_size, C = m.config.total_in_channels();
  for (const auto* set : {&train_set, &val_set})
    for (const auto& p : *set) {
      require_shape(p.data.shape() == Shape({C, S, S}), "training patch " + shape_str(p.data.shape()) + " vs config");
      require_shape(p.has_mask() && p.mask.shape() == Shape({1, S, S}), "training patch mask");
    }
  if (hp.batch_size == 0) throw Error(Errc::BadConfig, "batch_size must be >= 1");

  TrainHistory history;
  std::mt19937_64 rng(opt.seed);
  nn::AdamState<T> adam;
  std::vector<Tensor<T>*> pv;
  std::vector<const Tensor<T>*> gv;
  for (auto& p : m.params) {
    pv.push_back(&p.value);
    gv.push_back(&p.grad);
  }
  double lr = hp.lr, best_val_loss = std::numeric_limits<double>::infinity(), best_iou = -1.0;
  std::size_t wait = 0;
  std::vector<Tensor<T>> best_params, best_buffers;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += hp.batch_size) {
      std::vector<Patch<T>> aug;
      std::vector<const Tensor<T>*> xs, ys;
      const std::size_t b1 = std::min(order.size(), b0 + hp.batch_size);
      aug.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        const Patch<T>& src = train_set[order[i]];
        if (opt.augment) {
          aug.push_back(random_augment(src, rng(), opt.augmentation));
          xs.push_back(&aug.back().data);
          ys.push_back(&aug.back().mask);
        } else {
          xs.push_back(&src.data);
          ys.push_back(&src.mask);
        }
      }
      ForwardCache<T> cache;
      const Tensor<T> p = forward(m, split_streams(m.config, stack_batch(xs)), nn::Mode::Train, &cache);
      const auto loss = nn::bce_loss(p, stack_batch(ys));
      m.zero_grad();
      backward(m, cache, loss.grad);
      nn::adam_step<T>(pv, gv, adam, hp, lr);
      loss_sum += loss.loss;
      ++batches;
    }
    const Evaluation ev = evaluate(m, val_set);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = ev.loss;
    rec.val_iou = ev.iou();
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);

    if (rec.val_iou > best_iou) {
      best_iou = rec.val_iou;
      best_params.clear();
      best_buffers.clear();
      for (const auto& p : m.params) best_params.push_back(p.value);
      for (const auto& b : m.buffers) best_buffers.push_back(b.value);
    }
    if (rec.val_loss < best_val_loss - hp.plateau_min_delta) {
      best_val_loss = rec.val_loss;
      wait = 0;
    } else if (++wait >= hp.plateau_patience) {
      lr *= hp.lr_decay;
      wait = 0;
    }
    if (opt.stop_at_val_iou && rec.val_iou >= *opt.stop_at_val_iou) break;
  }
  if (!best_params.empty()) {
    for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i].value = best_params[i];
    for (std::size_t i = 0; i < m.buffers.size(); ++i) m.buffers[i].value = best_buffers[i];
  }
  return history;
}

// ---------------------------------------------------------------------------
// weights file
//
// little-endian: "ALSW", u32 version, u32 header length, header text,
// u32 tensor count, per tensor (u16 name length, name, u8 rank, u32 dims,
// f32 payload), u32 CRC32 of everything before it.

inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

template <class U>
void put(std::string& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw Error(Errc::TruncatedStream, "weights file ends early");
  }
  const std::string& buf_;
  std::size_t end_, pos_ = 0;
};

inline std::uint32_t crc32_of(const char* p, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(p), chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Header text: the model config plus per-stream normalization statistics.
template <class T>
std::string weights_header(const Model<T>& m) {
  std::string h = m.config.to_text();
  for (std::size_t s = 0; s < m.norm_stats.size(); ++s) {
    h += "norm" + std::to_string(s) + ".min=" + join(m.norm_stats[s].min) + "\n";
    h += "norm" + std::to_string(s) + ".max=" + join(m.norm_stats[s].max) + "\n";
  }
  return h;
}

/// Serialized weights. Parameters are stored as f32, so a 64-bit model
/// round-trips exactly only when its values are f32-representable.
template <class T>
std::string serialize_weights(const Model<T>& m) {
  std::string out = "ALSW";
  detail::put<std::uint32_t>(out, kWeightsVersion);
  const std::string header = weights_header(m);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.params.size() + m.buffers.size()));
  auto write = [&](const std::string& name, const Tensor<T>& t) {
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) detail::put<float>(out, static_cast<float>(t[i]));
  };
  for (const auto& p : m.params) write(p.name, p.value);
  for (const auto& b : m.buffers) write(b.name, b.value);
  detail::put<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

template <class T>
Model<T> deserialize_weights(const std::string& buf) {
  if (buf.size() < 4 || buf.compare(0, 4, "ALSW") != 0) throw Error(Errc::BadMagic, "not a weights file (magic)");
  if (buf.size() < 12) throw Error(Errc::TruncatedStream, "weights file ends early");
  detail::Reader r(buf, buf.size() - 4);
  r.bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightsVersion)
    throw Error(Errc::VersionMismatch, "weights version " + std::to_string(version) + ", expected " +
                                           std::to_string(kWeightsVersion));
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != detail::crc32_of(buf.data(), buf.size() - 4)) throw Error(Errc::ChecksumMismatch, "weights CRC32 differs");

  const std::string header = r.bytes(r.get<std::uint32_t>());
  const Config cfg = Config::parse(header);
  Model<T> m = build_model<T>(ModelConfig::from_config(cfg));
  for (std::size_t s = 0; cfg.has("", "norm" + std::to_string(s) + ".min"); ++s) {
    const std::string key = "norm" + std::to_string(s);
    m.norm_stats.push_back({parse_list<double>(cfg.get("", key + ".min"), key), parse_list<double>(cfg.get("", key + ".max"), key)});
  }
  const auto count = r.get<std::uint32_t>();
  if (count != m.params.size() + m.buffers.size())
    throw Error(Errc::ShapeMismatch, "weights file has " + std::to_string(count) + " tensors, config implies " +
                                         std::to_string(m.params.size() + m.buffers.size()));
  auto read = [&](const std::string& name, Tensor<T>& t) {
    const std::string got = r.bytes(r.get<std::uint16_t>());
    if (got != name) throw Error(Errc::ShapeMismatch, "expected tensor " + name + ", found " + got);
    Shape s(r.get<std::uint8_t>());
    for (auto& d : s) d = r.get<std::uint32_t>();
    if (s != t.shape()) throw Error(Errc::ShapeMismatch, name + ": stored " + shape_str(s) + ", expected " + shape_str(t.shape()));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(r.get<float>());
  };
  for (auto& p : m.params) read(p.name, p.value);
  for (auto& b : m.buffers) read(b.name, b.value);
  if (r.pos() != buf.size() - 4) throw Error(Errc::ShapeMismatch, "trailing bytes after last tensor");
  return m;
}

template <class T>
void save_weights(const Model<T>& m, const std::string& path) {
  const std::string bytes = serialize_weights(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed: " + path);
}

template <class T>
Model<T> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open weights " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights<T>(buf);
}

// ---------------------------------------------------------------------------
// inference on whole rasters

struct SegMap {
  GridSpec spec;
  Grid<double> prob;
  Mask building;
};

/// Per-stream C x H x W input tensors for a surface raster.
template <class T>
std::vector<Tensor<T>> stream_inputs(const Model<T>& m, const std::vector<const SurfaceRaster*>& rasters) {
  const std::size_t S = m.config.stream_count();
  require_shape(rasters.size() == 1 || rasters.size() == S, "stream_inputs: need one raster or one per stream");
  for (const auto* r : rasters) require_same_spec(r->spec, rasters[0]->spec, "stream rasters");
  std::vector<Tensor<T>> out;
  for (std::size_t s = 0; s < S; ++s) {
    const SurfaceRaster& r = *rasters[rasters.size() == 1 ? 0 : s];
    if (m.config.streams[s] == StreamKind::Zin) {
      if (s >= m.norm_stats.size() || m.norm_stats[s].channels() != 3)
        throw Error(Errc::BadConfig, "model has no normalization statistics for stream " + std::to_string(s));
      out.push_back(normalize_zin(r, m.norm_stats[s]).template cast<T>());
    } else {
      out.push_back(extract_rgb(r).template cast<T>());
    }
  }
  return out;
}

/// Tiles the inputs, runs infer-mode forward per patch and mean-stitches
/// the probabilities back to 1 x H x W.
template <class T>
Tensor<T> predict(Model<T>& m, const std::vector<Tensor<T>>& inputs, std::size_t stride, std::size_t batch_size = 8) {
  Tensor<T> joined = inputs[0];
  for (std::size_t s = 1; s < inputs.size(); ++s) {
    require_shape(inputs[s].dim(1) == joined.dim(1) && inputs[s].dim(2) == joined.dim(2), "predict: stream sizes differ");
    std::vector<T> v = joined.vec();
    v.insert(v.end(), inputs[s].vec().begin(), inputs[s].vec().end());
    joined = Tensor<T>({joined.dim(0) + inputs[s].dim(0), joined.dim(1), joined.dim(2)}, std::move(v));
  }
  const std::size_t H = joined.dim(1), W = joined.dim(2), S = m.config.patch_size;
  std::vector<Patch<T>> patches = tile(joined, S, stride);
  for (std::size_t b0 = 0; b0 < patches.size(); b0 += batch_size) {
    const std::size_t b1 = std::min(patches.size(), b0 + batch_size);
    std::vector<const Tensor<T>*> xs;
    for (std::size_t i = b0; i < b1; ++i) xs.push_back(&patches[i].data);
    const Tensor<T> p = forward(m, split_streams(m.config, stack_batch(xs)), nn::Mode::Infer);
    for (std::size_t i = b0; i < b1; ++i)
      patches[i].data = Tensor<T>({1, S, S}, std::vector<T>(p.data() + (i - b0) * S * S, p.data() + (i - b0 + 1) * S * S));
  }
  return stitch(patches, H, W);
}

/// Building probability and binary map (p >= 0.5). Cells invalid in any
/// input raster are background. Stride 0 means the model's patch size.
template <class T>
SegMap segment_raster(Model<T>& m, const std::vector<const SurfaceRaster*>& rasters, std::size_t stride = 0) {
  if (stride == 0) stride = m.config.patch_size;
  require_shape(!rasters.empty(), "segment_raster: no rasters");
  for (const auto* r : rasters) require_same_spec(r->spec, rasters[0]->spec, "segment_raster");
  const GridSpec& spec = rasters[0]->spec;
  const Tensor<T> p = predict(m, stream_inputs(m, rasters), stride);
  SegMap out{spec, Grid<double>(spec), Mask(spec)};
  for (std::size_t i = 0; i < spec.cells(); ++i) {
    out.prob[i] = static_cast<double>(p[i]);
    bool valid = true;
    for (const auto* r : rasters) valid = valid && r->valid[i];
    out.building[i] = valid && p[i] >= T(0.5) ? 1 : 0;
  }
  return out;
}

template <class T>
SegMap segment_raster(Model<T>& m, const SurfaceRaster& raster, std::size_t stride = 0) {
  return segment_raster(m, std::vector<const SurfaceRaster*>{&raster}, stride);
}

}  // namespace alscd
