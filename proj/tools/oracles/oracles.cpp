#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace pann::oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol, int max_iter) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return f(0.5 * (a + b));
}

double neglog_numeric(double alpha) {
  auto f = [alpha](double beta) { return alpha * beta + 1.0 + std::log(-beta); };
  // The maximizer -1/alpha lies in [-1/alpha_min, -1) for alpha in (0, 1];
  // bracket generously on both sides.
  return golden_section_max(f, -10.0 / alpha, -1e-3);
}

std::vector<double> softmax_hp(std::span<const double> logits) {
  std::vector<hp> e;
  hp sum = 0;
  for (double z : logits) {
    e.push_back(boost::multiprecision::exp(hp(z)));
    sum += e.back();
  }
  std::vector<double> out;
  for (const auto& v : e) out.push_back(static_cast<double>(v / sum));
  return out;
}

std::vector<double> mean_rows_hp(const std::vector<std::vector<double>>& rows) {
  std::vector<hp> acc(rows.front().size(), hp(0));
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) acc[k] += hp(r[k]);
  }
  std::vector<double> out;
  for (const auto& a : acc) out.push_back(static_cast<double>(a / hp(rows.size())));
  return out;
}

double prior_loss_hp(std::span<const double> pbar, std::span<const double> q) {
  hp v = 0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const hp p(pbar[l]);
    const hp ql(q[l]);
    v -= ql * boost::multiprecision::log(p) + (1 - ql) * boost::multiprecision::log(1 - p);
  }
  return static_cast<double>(v);
}

double kl_marginal_hp(std::span<const double> q, std::span<const double> pbar) {
  hp v = 0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const hp p(pbar[l]);
    const hp ql(q[l]);
    if (ql > 0) v += ql * boost::multiprecision::log(ql / p);
    if (ql < 1) v += (1 - ql) * boost::multiprecision::log((1 - ql) / (1 - p));
  }
  return static_cast<double>(v);
}

std::size_t ellipse_area(std::size_t h, std::size_t w, double cy, double cx, double ay,
                         double ax) {
  std::size_t n = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = (static_cast<double>(y) - cy) / ay;
      const double v = (static_cast<double>(x) - cx) / ax;
      if (u * u + v * v <= 1.0) ++n;
    }
  }
  return n;
}

std::vector<double> histogram_prior(std::span<const Sample> samples, std::size_t classes,
                                    double smoothing) {
  std::vector<double> hist(classes, 0.0);
  double total = 0.0;
  for (const auto& s : samples) {
    const auto& lab = s.labels();
    for (std::size_t y = 0; y < lab.height(); ++y) {
      for (std::size_t x = 0; x < lab.width(); ++x) {
        hist[lab(y, x)] += 1.0;
        total += 1.0;
      }
    }
  }
  const double denom = total + static_cast<double>(classes) * smoothing;
  for (auto& v : hist) v = (v + smoothing) / denom;
  return hist;
}

std::size_t parameter_count(std::size_t hidden_layers, std::size_t channels,
                            std::size_t classes) {
  std::size_t total = 0;
  std::size_t in = 1;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    total += in * 9 * channels + channels;
    in = channels;
  }
  return total + in * classes + classes;
}

std::vector<std::vector<double>> reference_forward(const ModelParams& params,
                                                   const Image& image) {
  const long h = static_cast<long>(image.height());
  const long w = static_cast<long>(image.width());
  const std::size_t layers = params.arch.hidden_layers;
  const std::size_t ch = params.arch.channels;
  const std::size_t k = params.arch.classes;
  const auto& theta = params.values;

  // act[c][y][x]
  std::vector<std::vector<std::vector<double>>> act(
      1, std::vector<std::vector<double>>(h, std::vector<double>(w)));
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) act[0][y][x] = image(y, x);
  }
  auto at = [&](std::size_t c, long y, long x) {
    if (y < 0 || x < 0 || y >= h || x >= w) return 0.0;
    return act[c][y][x];
  };

  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = act.size();
    const std::size_t bias_at = offset + ch * in * 9;
    std::vector<std::vector<std::vector<double>>> next(
        ch, std::vector<std::vector<double>>(h, std::vector<double>(w)));
    for (std::size_t o = 0; o < ch; ++o) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          double s = theta[bias_at + o];
          for (std::size_t i = 0; i < in; ++i) {
            for (long ky = -1; ky <= 1; ++ky) {
              for (long kx = -1; kx <= 1; ++kx) {
                const std::size_t widx =
                    offset + ((o * in + i) * 3 + static_cast<std::size_t>(ky + 1)) * 3 +
                    static_cast<std::size_t>(kx + 1);
                s += theta[widx] * at(i, y + ky, x + kx);
              }
            }
          }
          next[o][y][x] = std::max(0.0, s);
        }
      }
    }
    offset = bias_at + ch;
    act = std::move(next);
  }

  const std::size_t in = act.size();
  std::vector<std::vector<double>> probs;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      std::vector<long double> e(k);
      long double sum = 0;
      for (std::size_t c = 0; c < k; ++c) {
        long double z = theta[offset + k * in + c];
        for (std::size_t i = 0; i < in; ++i) z += theta[offset + c * in + i] * act[i][y][x];
        e[c] = std::exp(z);
        sum += e[c];
      }
      std::vector<double> row;
      for (auto v : e) row.push_back(static_cast<double>(v / sum));
      probs.push_back(std::move(row));
    }
  }
  return probs;
}

std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double step,
                                        const std::vector<std::size_t>& coords) {
  std::vector<std::size_t> which = coords;
  if (which.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) which.push_back(i);
  }
  std::vector<double> out;
  out.reserve(which.size());
  for (std::size_t i : which) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

namespace {

std::vector<std::pair<long, long>> boundary(const Grid<std::uint8_t>& m) {
  const long h = static_cast<long>(m.height());
  const long w = static_cast<long>(m.width());
  auto in = [&](long y, long x) {
    return y >= 0 && x >= 0 && y < h && x < w && m(y, x) != 0;
  };
  std::vector<std::pair<long, long>> out;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      if (!in(y, x)) continue;
      if (!in(y - 1, x) || !in(y + 1, x) || !in(y, x - 1) || !in(y, x + 1)) {
        out.emplace_back(y, x);
      }
    }
  }
  return out;
}

}  // namespace

std::pair<double, double> surface_distances_brute(const Grid<std::uint8_t>& a,
                                                  const Grid<std::uint8_t>& b) {
  const auto ba = boundary(a);
  const auto bb = boundary(b);
  auto directed = [](const auto& from, const auto& to) {
    double sum = 0.0, mx = 0.0;
    for (const auto& [y, x] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [v, u] : to) {
        best = std::min(best, std::hypot(static_cast<double>(y - v), static_cast<double>(x - u)));
      }
      sum += best;
      mx = std::max(mx, best);
    }
    return std::pair{sum / static_cast<double>(from.size()), mx};
  };
  const auto [ma, xa] = directed(ba, bb);
  const auto [mb, xb] = directed(bb, ba);
  return {(ma + mb) / 2.0, std::max(xa, xb)};
}

double dice_sets(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b) {
  std::vector<std::size_t> za, yb, both;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) za.push_back(i);
    if (b[i]) yb.push_back(i);
  }
  std::set_intersection(za.begin(), za.end(), yb.begin(), yb.end(), std::back_inserter(both));
  if (za.empty() && yb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(za.size() + yb.size());
}

std::size_t argmax_over(std::span<const double> probs, const std::vector<std::size_t>& candidates) {
  std::size_t best = candidates.front();
  for (std::size_t c : candidates) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

double mean_nll(const std::vector<std::vector<double>>& probs,
                const std::vector<std::size_t>& targets) {
  hp sum = 0;
  for (std::size_t p = 0; p < probs.size(); ++p) {
    sum -= boost::multiprecision::log(hp(probs[p][targets[p]]));
  }
  return static_cast<double>(sum / hp(probs.size()));
}

}  // namespace pann::oracle
