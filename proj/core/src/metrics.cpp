#include "pann/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "pann/error.hpp"

namespace pann {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) fail(ErrorCode::kShape, "masks differ in shape");
}

// Exact 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(std::span<const double> f, std::span<double> d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!(f[q] < kInf)) continue;
    const auto qd = static_cast<double>(q);
    double s = 0.0;
    while (true) {
      const auto vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double dq = qd - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest seed pixel.
Grid<double> squared_distance_to(const BinaryMask& seeds) {
  const std::size_t h = seeds.height();
  const std::size_t w = seeds.width();
  Grid<double> g(h, w, kInf);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (seeds[i]) g[i] = 0.0;
  }
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w));
  std::vector<double> d(std::max(h, w));
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = g(y, x);
    edt_1d({f.data(), h}, {d.data(), h}, v, z);
    for (std::size_t y = 0; y < h; ++y) g(y, x) = d[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) f[x] = g(y, x);
    edt_1d({f.data(), w}, {d.data(), w}, v, z);
    for (std::size_t x = 0; x < w; ++x) g(y, x) = d[x];
  }
  return g;
}

BinaryMask boundary_mask(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width(), 0);
  for (const auto& [y, x] : boundary_pixels(mask)) out(y, x) = 1;
  return out;
}

struct Directed {
  double mean;
  double max;
};

Directed directed(const std::vector<std::pair<std::size_t, std::size_t>>& from,
                  const Grid<double>& sq_to) {
  double sum = 0.0;
  double mx = 0.0;
  for (const auto& [y, x] : from) {
    const double d = std::sqrt(sq_to(y, x));
    sum += d;
    mx = std::max(mx, d);
  }
  return {sum / static_cast<double>(from.size()), mx};
}

}  // namespace

BinaryMask class_mask(const LabelMap& labels, ClassId id) {
  BinaryMask m(labels.height(), labels.width(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == id ? 1 : 0;
  return m;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  check_same(pred, gt);
  std::size_t z = 0, y = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0;
    const bool b = gt[i] != 0;
    z += a;
    y += b;
    both += a && b;
  }
  if (z + y == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(z + y);
}

std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const BinaryMask& mask) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w ||
                        !mask(y - 1, x) || !mask(y + 1, x) || !mask(y, x - 1) ||
                        !mask(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  }
  return out;
}

SurfaceDistances surface_distances(const BinaryMask& pred, const BinaryMask& gt) {
  check_same(pred, gt);
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  if (bp.empty() || bg.empty()) {
    fail(ErrorCode::kUndefinedDistance, "surface distance of an empty mask");
  }
  const Directed a = directed(bp, squared_distance_to(boundary_mask(gt)));
  const Directed b = directed(bg, squared_distance_to(boundary_mask(pred)));
  return {0.5 * (a.mean + b.mean), std::max(a.max, b.max)};
}

LabelMap argmax_labels(const ClassMap& probs) {
  LabelMap out(probs.height(), probs.width(), 0);
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    const auto pr = probs.pixel(p);
    std::size_t best = 0;
    for (std::size_t c = 1; c < pr.size(); ++c) {
      if (pr[c] > pr[best]) best = c;
    }
    out[p] = static_cast<ClassId>(best);
  }
  return out;
}

EvaluationReport evaluate_predictions(std::span<const LabelMap> predictions,
                                      std::span<const Sample> samples,
                                      const LabelSpace& space) {
  if (predictions.size() != samples.size()) {
    fail(ErrorCode::kShape, "prediction count differs from sample count");
  }
  const std::size_t k = space.num_classes();
  EvaluationReport r;
  for (std::size_t c = 0; c < k; ++c) {
    r.class_names.emplace_back(space.name(static_cast<ClassId>(c)));
  }
  r.per_class.resize(k);
  std::vector<double> msd_sum(k, 0.0), hd_sum(k, 0.0);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabelMap& truth = samples[i].evaluation_truth();
    SampleReport sr{i, std::vector<ClassScore>(k)};
    for (std::size_t c = 0; c < k; ++c) {
      const auto id = static_cast<ClassId>(c);
      const BinaryMask pm = class_mask(predictions[i], id);
      const BinaryMask gm = class_mask(truth, id);
      ClassScore& s = sr.classes[c];
      s.dice = dice(pm, gm);
      const bool pe = std::none_of(pm.values().begin(), pm.values().end(),
                                   [](std::uint8_t v) { return v != 0; });
      const bool ge = std::none_of(gm.values().begin(), gm.values().end(),
                                   [](std::uint8_t v) { return v != 0; });
      if (!pe && !ge) {
        const SurfaceDistances sd = surface_distances(pm, gm);
        s.msd = sd.mean;
        s.hausdorff = sd.hausdorff;
        msd_sum[c] += sd.mean;
        hd_sum[c] += sd.hausdorff;
        ++r.per_class[c].distance_count;
      }
      r.per_class[c].dice += s.dice;
    }
    r.samples.push_back(std::move(sr));
  }

  const double n = static_cast<double>(samples.size());
  for (std::size_t c = 0; c < k; ++c) {
    ClassAggregate& a = r.per_class[c];
    if (!samples.empty()) a.dice /= n;
    if (a.distance_count > 0) {
      a.msd = msd_sum[c] / static_cast<double>(a.distance_count);
      a.hausdorff = hd_sum[c] / static_cast<double>(a.distance_count);
    }
  }
  double organ_sum = 0.0;
  for (std::size_t c = 1; c < k; ++c) organ_sum += r.per_class[c].dice;
  r.mean_organ_dice = k > 1 ? organ_sum / static_cast<double>(k - 1) : 0.0;
  return r;
}

EvaluationReport evaluate(const ModelParams& params, std::span<const Sample> samples,
                          const LabelSpace& space) {
  if (params.arch.classes != space.num_classes()) {
    fail(ErrorCode::kArchMismatch, "model class count does not match label space");
  }
  std::vector<LabelMap> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(argmax_labels(predict(params, s.image())));
  return evaluate_predictions(preds, samples, space);
}

nlohmann::json report_to_json(const EvaluationReport& report) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json samples = json::array();
  for (const auto& s : report.samples) {
    json classes = json::array();
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      classes.push_back({{"class", c},
                         {"name", report.class_names[c]},
                         {"dice", s.classes[c].dice},
                         {"msd", opt(s.classes[c].msd)},
                         {"hausdorff", opt(s.classes[c].hausdorff)}});
    }
    samples.push_back({{"index", s.index}, {"classes", std::move(classes)}});
  }
  json per_class = json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& a = report.per_class[c];
    per_class.push_back({{"class", c},
                         {"name", report.class_names[c]},
                         {"dice", a.dice},
                         {"msd", opt(a.msd)},
                         {"hausdorff", opt(a.hausdorff)},
                         {"distance_count", a.distance_count}});
  }
  return {{"samples", std::move(samples)},
          {"aggregate", {{"per_class", std::move(per_class)},
                         {"mean_organ_dice", report.mean_organ_dice}}}};
}

std::string report_to_string(const EvaluationReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

}  // namespace pann
