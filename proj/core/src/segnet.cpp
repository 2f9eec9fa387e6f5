#include "pann/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pann/error.hpp"

namespace pann {

void Architecture::validate() const {
  if (classes == 0) fail(ErrorCode::kInvalidArch, "architecture needs >= 1 class");
  if (hidden_layers > 0 && channels == 0) {
    fail(ErrorCode::kInvalidArch, "hidden layers need >= 1 channel");
  }
}

Architecture reference_architecture(std::size_t num_classes) {
  return {2, 8, static_cast<std::uint32_t>(num_classes)};
}

std::vector<LayerView> layer_views(const Architecture& arch) {
  arch.validate();
  std::vector<LayerView> views;
  std::size_t offset = 0;
  std::size_t in = 1;
  auto add = [&](std::size_t out, std::size_t kernel) {
    LayerView v{in, out, kernel, offset, 0};
    v.bias_offset = offset + v.weight_count();
    offset = v.bias_offset + out;
    views.push_back(v);
    in = out;
  };
  for (std::uint32_t l = 0; l < arch.hidden_layers; ++l) add(arch.channels, 3);
  add(arch.classes, 1);
  return views;
}

std::size_t parameter_count(const Architecture& arch) {
  const auto views = layer_views(arch);
  return views.back().bias_offset + views.back().out_channels;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& o) {
  if (values.empty()) {
    values = o.values;
    return *this;
  }
  if (values.size() != o.values.size()) {
    fail(ErrorCode::kGradientShape, "parameter gradient lengths differ");
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
  return *this;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams params{arch, std::vector<double>(parameter_count(arch), 0.0)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (const auto& v : layer_views(arch)) {
    const double sd = std::sqrt(2.0 / static_cast<double>(v.fan_in()));
    for (std::size_t i = 0; i < v.weight_count(); ++i) {
      params.values[v.weight_offset + i] = sd * unit(rng);
    }
  }
  return params;
}

namespace {

// out[o] += sum_i w[o][i] (*) in[i] over a 3x3 window with zero padding.
void conv3x3_forward(const LayerView& v, const double* w, std::size_t h,
                     std::size_t wd, const std::vector<double>& in,
                     std::vector<double>& out) {
  const std::size_t n = h * wd;
  for (std::size_t o = 0; o < v.out_channels; ++o) {
    double* dst = out.data() + o * n;
    for (std::size_t i = 0; i < v.in_channels; ++i) {
      const double* src = in.data() + i * n;
      const double* k = w + (o * v.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0;
        const std::size_t y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wk = k[ky * 3 + kx];
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? wd - 1 : wd;
          for (std::size_t y = y0; y < y1; ++y) {
            double* row = dst + y * wd;
            const std::size_t base = (y + dy) * wd + dx;
            for (std::size_t x = x0; x < x1; ++x) row[x] += wk * src[base + x];
          }
        }
      }
    }
  }
}

void conv3x3_backward(const LayerView& v, const double* w, std::size_t h,
                      std::size_t wd, const std::vector<double>& in,
                      const std::vector<double>& dout, double* dw,
                      std::vector<double>* din) {
  const std::size_t n = h * wd;
  for (std::size_t o = 0; o < v.out_channels; ++o) {
    const double* g = dout.data() + o * n;
    for (std::size_t i = 0; i < v.in_channels; ++i) {
      const double* src = in.data() + i * n;
      const double* k = w + (o * v.in_channels + i) * 9;
      double* dk = dw + (o * v.in_channels + i) * 9;
      double* dsrc = din ? din->data() + i * n : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0;
        const std::size_t y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? wd - 1 : wd;
          const double wk = k[ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* grow = g + y * wd;
            const std::size_t base = (y + dy) * wd + dx;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * src[base + x];
            if (dsrc) {
              for (std::size_t x = x0; x < x1; ++x) dsrc[base + x] += wk * grow[x];
            }
          }
          dk[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void check_params(const ModelParams& params) {
  if (params.values.size() != parameter_count(params.arch)) {
    fail(ErrorCode::kLengthMismatch,
         "parameter vector length does not match architecture");
  }
}

}  // namespace

void softmax_stable_inplace(std::span<double> v) {
  if (v.empty()) return;
  double mx = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumericInput, "non-finite logit");
    mx = std::max(mx, x);
  }
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

std::vector<double> softmax_stable(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_stable_inplace(out);
  return out;
}

ForwardResult forward(const ModelParams& params, const Image& image) {
  check_params(params);
  const auto views = layer_views(params.arch);
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const std::size_t n = h * w;
  if (n == 0) fail(ErrorCode::kShape, "empty image");

  ForwardResult r;
  ForwardCache& c = r.cache;
  c.arch = params.arch;
  c.height = h;
  c.width = w;
  c.input.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double v = image[p];
    if (!std::isfinite(v)) fail(ErrorCode::kNumericInput, "non-finite image intensity");
    c.input[p] = v;
  }

  const std::vector<double>* act = &c.input;
  for (std::size_t l = 0; l + 1 < views.size(); ++l) {
    const LayerView& v = views[l];
    std::vector<double> pre(v.out_channels * n);
    for (std::size_t o = 0; o < v.out_channels; ++o) {
      std::fill_n(pre.begin() + o * n, n, params.values[v.bias_offset + o]);
    }
    conv3x3_forward(v, params.values.data() + v.weight_offset, h, w, *act, pre);
    std::vector<double> post(pre.size());
    std::transform(pre.begin(), pre.end(), post.begin(),
                   [](double x) { return x > 0.0 ? x : 0.0; });
    c.pre.push_back(std::move(pre));
    c.post.push_back(std::move(post));
    act = &c.post.back();
  }

  const LayerView& head = views.back();
  const double* wh = params.values.data() + head.weight_offset;
  const double* bh = params.values.data() + head.bias_offset;
  r.logits = ClassMap(h, w, head.out_channels);
  for (std::size_t k = 0; k < head.out_channels; ++k) {
    for (std::size_t p = 0; p < n; ++p) r.logits.at(p, k) = bh[k];
    for (std::size_t ci = 0; ci < head.in_channels; ++ci) {
      const double wk = wh[k * head.in_channels + ci];
      const double* a = act->data() + ci * n;
      for (std::size_t p = 0; p < n; ++p) r.logits.at(p, k) += wk * a[p];
    }
  }
  r.probs = r.logits;
  for (std::size_t p = 0; p < n; ++p) softmax_stable_inplace(r.probs.pixel(p));
  return r;
}

ClassMap predict(const ModelParams& params, const Image& image) {
  return forward(params, image).probs;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const ClassMap& dlogits) {
  check_params(params);
  if (cache.arch != params.arch) {
    fail(ErrorCode::kGradientShape, "forward cache belongs to another architecture");
  }
  const std::size_t n = cache.height * cache.width;
  if (dlogits.height() != cache.height || dlogits.width() != cache.width ||
      dlogits.classes() != params.arch.classes) {
    fail(ErrorCode::kGradientShape, "gradient grid does not match logits shape");
  }
  const auto views = layer_views(params.arch);
  ParamGrads grads{std::vector<double>(params.values.size(), 0.0)};

  const LayerView& head = views.back();
  const std::vector<double>& top = cache.post.empty() ? cache.input : cache.post.back();
  const double* wh = params.values.data() + head.weight_offset;
  double* dwh = grads.values.data() + head.weight_offset;
  double* dbh = grads.values.data() + head.bias_offset;
  std::vector<double> dact(cache.post.empty() ? 0 : head.in_channels * n, 0.0);
  for (std::size_t k = 0; k < head.out_channels; ++k) {
    double db = 0.0;
    for (std::size_t p = 0; p < n; ++p) db += dlogits.at(p, k);
    dbh[k] = db;
    for (std::size_t ci = 0; ci < head.in_channels; ++ci) {
      const double* a = top.data() + ci * n;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += dlogits.at(p, k) * a[p];
      dwh[k * head.in_channels + ci] = acc;
      if (!dact.empty()) {
        const double wk = wh[k * head.in_channels + ci];
        double* d = dact.data() + ci * n;
        for (std::size_t p = 0; p < n; ++p) d[p] += wk * dlogits.at(p, k);
      }
    }
  }

  for (std::size_t l = cache.pre.size(); l-- > 0;) {
    const LayerView& v = views[l];
    // Through the ReLU.
    const auto& pre = cache.pre[l];
    for (std::size_t i = 0; i < dact.size(); ++i) {
      if (!(pre[i] > 0.0)) dact[i] = 0.0;
    }
    double* db = grads.values.data() + v.bias_offset;
    for (std::size_t o = 0; o < v.out_channels; ++o) {
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += dact[o * n + p];
      db[o] = acc;
    }
    const std::vector<double>& in = l == 0 ? cache.input : cache.post[l - 1];
    std::vector<double> din;
    if (l > 0) din.assign(v.in_channels * n, 0.0);
    conv3x3_backward(v, params.values.data() + v.weight_offset, cache.height,
                     cache.width, in, dact, grads.values.data() + v.weight_offset,
                     l > 0 ? &din : nullptr);
    dact = std::move(din);
  }
  return grads;
}

ModelParams sgd_step(const ModelParams& params, const ParamGrads& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    fail(ErrorCode::kInvalidConfig, "learning rate must be finite and >= 0");
  }
  if (grads.values.size() != params.values.size()) {
    fail(ErrorCode::kGradientShape, "gradient and parameter lengths differ");
  }
  ModelParams next = params;
  for (std::size_t i = 0; i < next.values.size(); ++i) {
    const double g = grads.values[i];
    if (!std::isfinite(g)) {
      fail(ErrorCode::kDivergedTraining, "non-finite parameter gradient");
    }
    next.values[i] -= lr * g;
    if (!std::isfinite(next.values[i])) {
      fail(ErrorCode::kDivergedTraining, "parameter update overflowed");
    }
  }
  return next;
}

Bytes encode_checkpoint(const ModelParams& params) {
  check_params(params);
  ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(params.arch.hidden_layers);
  w.u32(params.arch.channels);
  w.u32(params.arch.classes);
  w.u64(params.values.size());
  for (double v : params.values) w.f64(v);
  return w.take();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes,
                              const std::string& source,
                              const std::optional<Architecture>& expected) {
  ByteReader r(bytes, source);
  r.expect_magic(kCheckpointMagic);
  r.expect_version(kCheckpointVersion);
  ModelParams params;
  params.arch.hidden_layers = r.u32();
  params.arch.channels = r.u32();
  params.arch.classes = r.u32();
  const std::uint64_t count = r.u64();
  try {
    params.arch.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kArchMismatch, source + ": " + e.what());
  }
  if (expected && *expected != params.arch) {
    fail(ErrorCode::kArchMismatch,
         source + ": checkpoint architecture (" +
             std::to_string(params.arch.hidden_layers) + " layers, " +
             std::to_string(params.arch.channels) + " channels, " +
             std::to_string(params.arch.classes) + " classes) does not match");
  }
  if (count != parameter_count(params.arch) || r.remaining() != count * 8) {
    fail(ErrorCode::kLengthMismatch,
         source + ": parameter payload length does not match header");
  }
  params.values.resize(count);
  for (auto& v : params.values) v = r.f64();
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<Architecture>& expected) {
  return decode_checkpoint(read_file(path), path.filename().string(), expected);
}

}  // namespace pann
