#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "csislab/common.hpp"
#include "csislab/hash_types.hpp"
#include "csislab/hasher.hpp"
#include "csislab/image.hpp"
#include "csislab/image_io.hpp"
#include "csislab/parallel.hpp"
#include "csislab/pdq.hpp"
#include "csislab/poison.hpp"
#include "csislab/rng.hpp"
#include "csislab/transforms.hpp"

namespace csislab {

enum class AttackMode { Nes, ProjectedGradient };

inline std::string_view to_string(AttackMode m) { return m == AttackMode::Nes ? "nes" : "projected-gradient"; }

inline AttackMode parse_attack_mode(std::string_view s) {
  if (s == "nes") return AttackMode::Nes;
  if (s == "projected-gradient" || s == "pg" || s == "pgd") return AttackMode::ProjectedGradient;
  throw Error(ErrorCode::InvalidArgument, "unknown attack mode '" + std::string(s) + "'");
}

struct NesParams {
  // Probe scale as a fraction of the L-inf budget; eta is in pixel units.
  double sigma = 0.1;
  double eta = 0.01;
  std::size_t pairs_per_step = 50;   // antithetic pairs, two queries each
  std::size_t total_queries = 10000;
  // Probe distribution: i.i.d. per pixel, a Gaussian lattice upsampled
  // bilinearly, or Gaussian weights on the lowest probe_size x probe_size
  // cosine frequencies (DC excluded).
  enum class Probe { Pixel, Lattice, LowFrequency } probe = Probe::LowFrequency;
  int probe_size = 16;
  // Step schedule: momentum on the estimate, step size multiplied by
  // plateau_drop after plateau_length steps without a new best loss.
  double momentum = 0.9;
  std::size_t plateau_length = 5;
  double plateau_drop = 0.5;
  double min_eta = 0.0005;
  // Sign of the estimate, or the estimate scaled to unit max magnitude.
  enum class Step { Sign, MaxNormalized } step = Step::MaxNormalized;
};

struct PgParams {
  std::size_t iterations = 1000;
  double step_size = 0.0001;
};

struct AttackConfig {
  double linf_budget = 8.0 / 255.0;
  AttackMode mode = AttackMode::Nes;
  NesParams nes;
  PgParams pg;
  // Margin in score units; unset picks 1.0 for PDQ (DCT units on the 0..255
  // scale) and 0.02 for the surrogate.
  std::optional<double> margin;
  // Per-bit ceiling on the hinge; bits further than this from flipping stop
  // contributing gradient. Unset picks 50 for PDQ and no ceiling for the
  // surrogate.
  std::optional<double> loss_cap;
  std::uint64_t seed = 0;
  bool record_trace = false;

  void validate() const {
    require(linf_budget >= 0.0 && linf_budget <= 1.0, ErrorCode::InvalidArgument, "linf_budget must lie in [0, 1]");
    require(nes.sigma > 0.0 && nes.eta > 0.0, ErrorCode::InvalidArgument, "NES sigma and eta must be positive");
    require(nes.pairs_per_step > 0 && nes.total_queries > 0 && nes.total_queries % 2 == 0,
            ErrorCode::InvalidArgument, "NES sample counts must be positive and even");
    require(nes.probe_size > 0, ErrorCode::InvalidArgument, "probe_size must be positive");
    require(!loss_cap || *loss_cap > 0.0, ErrorCode::InvalidArgument, "loss_cap must be positive");
    require(pg.iterations > 0 && pg.step_size > 0.0, ErrorCode::InvalidArgument, "PG parameters must be positive");
  }
};

/// One optimizer step: loss and hamming distance of the iterate after it.
struct StepRecord {
  double loss = 0.0;
  int hamming = 0;
};

struct CollisionResult {
  LumaImage image;
  double initial_distance = 0.0;  // normalized
  double final_distance = 0.0;
  int initial_hamming = 0;
  int final_hamming = 0;
  double final_loss = 0.0;
  double linf_actual = 0.0;
  double l2_distance = 0.0;
  std::size_t queries_used = 0;
  std::vector<StepRecord> trace;
};

// --------------------------------------------------------------------------
// Collision loss

/// Signed pre-quantization values whose sign gives each hash bit: DCT
/// coefficient minus median for PDQ, projection score for the surrogate.
inline std::vector<double> signed_scores(const LumaImage& image, const Hasher& hasher) {
  if (hasher.is_pdq()) {
    const auto f = pdq::features(image);
    std::vector<double> v(pdq::kBits);
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = static_cast<double>(f.coefficients[k]) - static_cast<double>(f.median);
    return v;
  }
  return hasher.surrogate().scores(image);
}

inline double default_margin(const Hasher& hasher) { return hasher.is_pdq() ? 1.0 : 0.02; }

inline double default_loss_cap(const Hasher& hasher) {
  return hasher.is_pdq() ? 50.0 : std::numeric_limits<double>::infinity();
}

/// Sum over bits of max(0, margin - s_b * v_b), s_b = +1 for a target one bit
/// and -1 for a zero bit. Zero loss implies an exact hash match.
inline double margin_loss(std::span<const double> scores, const PerceptualHash& target, double margin,
                          double cap = std::numeric_limits<double>::infinity()) {
  double loss = 0.0;
  for (std::size_t b = 0; b < scores.size(); ++b) {
    const double s = target.bit(b) ? 1.0 : -1.0;
    loss += std::min(cap, std::max(0.0, margin - s * scores[b]));
  }
  return loss;
}

inline PerceptualHash hash_from_scores(std::span<const double> scores) {
  PerceptualHash h(scores.size());
  for (std::size_t b = 0; b < scores.size(); ++b)
    if (scores[b] > 0.0) h.set(b);
  return h;
}

inline double collision_loss(const LumaImage& image, const PerceptualHash& target, const Hasher& hasher,
                             std::optional<double> margin = std::nullopt, std::optional<double> cap = std::nullopt) {
  require(target.size() == hasher.bits(), ErrorCode::TargetLengthMismatch, "target length differs from hash length");
  return margin_loss(signed_scores(image, hasher), target, margin.value_or(default_margin(hasher)),
                     cap.value_or(default_loss_cap(hasher)));
}

// --------------------------------------------------------------------------
// Gradient estimation

namespace detail {

// Draws one unit-variance Gaussian probe over the image.
class ProbeSampler {
 public:
  ProbeSampler(int width, int height, NesParams::Probe kind, int size)
      : width_(width), height_(height), kind_(kind), size_(size) {
    if (kind_ == NesParams::Probe::LowFrequency) {
      cos_x_ = basis(width);
      cos_y_ = basis(height);
    }
  }

  void draw(std::vector<double>& u, Rng& rng) {
    switch (kind_) {
      case NesParams::Probe::Pixel:
        for (auto& v : u) v = normal_(rng);
        return;
      case NesParams::Probe::Lattice: {
        LumaImage coarse(size_, size_);
        for (auto& v : coarse.pixels) v = static_cast<float>(normal_(rng));
        const double sx = static_cast<double>(size_) / width_, sy = static_cast<double>(size_) / height_;
        for (int y = 0; y < height_; ++y)
          for (int x = 0; x < width_; ++x)
            u[static_cast<std::size_t>(y) * width_ + x] = sample_bilinear(coarse, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
        return;
      }
      case NesParams::Probe::LowFrequency: {
        const auto k = static_cast<std::size_t>(size_);
        const auto w = static_cast<std::size_t>(width_), h = static_cast<std::size_t>(height_);
        std::vector<double> z(k * k);
        for (auto& v : z) v = normal_(rng);
        std::vector<double> t(k * w, 0.0);  // t[i][x] = sum_j z[i][j] cos_j(x)
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const double zij = z[i * k + j];
            const double* c = &cos_x_[j * w];
            for (std::size_t x = 0; x < w; ++x) t[i * w + x] += zij * c[x];
          }
        const double norm = 2.0 / static_cast<double>(k);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            double v = 0.0;
            for (std::size_t i = 0; i < k; ++i) v += cos_y_[i * h + y] * t[i * w + x];
            u[y * w + x] = norm * v;
          }
        return;
      }
    }
  }

 private:
  std::vector<double> basis(int n) const {
    std::vector<double> c(static_cast<std::size_t>(size_) * static_cast<std::size_t>(n));
    for (int f = 0; f < size_; ++f)
      for (int t = 0; t < n; ++t)
        c[static_cast<std::size_t>(f) * n + t] = std::cos(std::numbers::pi / n * (f + 1) * (t + 0.5));
    return c;
  }

  int width_, height_;
  NesParams::Probe kind_;
  int size_;
  std::vector<double> cos_x_, cos_y_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace detail

/// Antithetic NES estimate of d(loss)/d(image) from `pairs` Gaussian probes.
template <typename Loss>
std::vector<double> nes_gradient(const LumaImage& x, Loss&& loss, double sigma, std::size_t pairs, Rng& rng,
                                 detail::ProbeSampler& sampler) {
  const std::size_t n = x.pixels.size();
  std::vector<double> grad(n, 0.0);
  std::vector<double> u(n);
  LumaImage plus = x, minus = x;
  for (std::size_t p = 0; p < pairs; ++p) {
    sampler.draw(u, rng);
    for (std::size_t i = 0; i < n; ++i) {
      plus.pixels[i] = static_cast<float>(x.pixels[i] + sigma * u[i]);
      minus.pixels[i] = static_cast<float>(x.pixels[i] - sigma * u[i]);
    }
    const double diff = loss(plus) - loss(minus);
    for (std::size_t i = 0; i < n; ++i) grad[i] += diff * u[i];
  }
  const double scale = 1.0 / (2.0 * sigma * static_cast<double>(pairs));
  for (auto& g : grad) g *= scale;
  return grad;
}

/// Exact gradient of the margin loss for the surrogate hash.
inline LumaImage surrogate_loss_gradient(const LumaImage& x, const PerceptualHash& target, const SurrogateHasher& h,
                                         double margin, double cap = std::numeric_limits<double>::infinity()) {
  const auto scores = h.scores(x);
  std::vector<double> dscores(scores.size(), 0.0);
  for (std::size_t b = 0; b < scores.size(); ++b) {
    const double s = target.bit(b) ? 1.0 : -1.0;
    const double hinge = margin - s * scores[b];
    if (hinge > 0.0 && hinge < cap) dscores[b] = -s;
  }
  return h.backprop(x.width, x.height, dscores);
}

// --------------------------------------------------------------------------
// Crafting

namespace detail {

inline void project(LumaImage& x, const LumaImage& source, double eps) {
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const double lo = std::max(0.0, source.pixels[i] - eps);
    const double hi = std::min(1.0, source.pixels[i] + eps);
    x.pixels[i] = static_cast<float>(std::clamp(static_cast<double>(x.pixels[i]), lo, hi));
  }
}

// Nearest 8-bit level that still lies inside the budget box around source.
inline LumaImage quantize_within(const LumaImage& x, const LumaImage& source, double eps) {
  LumaImage q = x;
  for (std::size_t i = 0; i < q.pixels.size(); ++i) {
    const double lo = std::ceil(std::max(0.0, source.pixels[i] - eps) * 255.0 - 1e-9);
    const double hi = std::floor(std::min(1.0, source.pixels[i] + eps) * 255.0 + 1e-9);
    const double v = std::clamp(std::round(static_cast<double>(x.pixels[i]) * 255.0), lo, hi);
    q.pixels[i] = static_cast<float>(v / 255.0);
  }
  return q;
}

struct Best {
  LumaImage image;
  int hamming = std::numeric_limits<int>::max();
  double loss = std::numeric_limits<double>::infinity();

  bool offer(const LumaImage& img, int d, double l) {
    if (d < hamming || (d == hamming && l < loss)) {
      image = img;
      hamming = d;
      loss = l;
      return true;
    }
    return false;
  }
};

}  // namespace detail

/// Perturbs `source` within the L-inf budget so its hash approaches `target`.
/// The returned image is 8-bit quantized unless the unperturbed source itself
/// remains the best candidate.
inline CollisionResult craft_delivery(const LumaImage& source, const PerceptualHash& target, const Hasher& hasher,
                                      const AttackConfig& cfg) {
  cfg.validate();
  require(target.size() == hasher.bits(), ErrorCode::TargetLengthMismatch,
          "target has " + std::to_string(target.size()) + " bits, hash produces " + std::to_string(hasher.bits()));
  require(cfg.mode == AttackMode::Nes || !hasher.is_pdq(), ErrorCode::InvalidArgument,
          "projected-gradient needs a differentiable (surrogate) hash");
  const double margin = cfg.margin.value_or(default_margin(hasher));
  const double cap = cfg.loss_cap.value_or(default_loss_cap(hasher));
  const std::size_t bits = hasher.bits();

  CollisionResult r;
  std::size_t queries = 0;
  auto evaluate = [&](const LumaImage& img, int* hamming_out) {
    ++queries;
    const auto scores = signed_scores(img, hasher);
    if (hamming_out) *hamming_out = csislab::hamming(hash_from_scores(scores), target);
    return margin_loss(scores, target, margin, cap);
  };

  int d0 = 0;
  const double loss0 = evaluate(source, &d0);
  r.initial_hamming = d0;
  r.initial_distance = static_cast<double>(d0) / static_cast<double>(bits);
  detail::Best best;
  best.offer(source, d0, loss0);

  if (cfg.linf_budget > 0.0 && loss0 > 0.0) {
    LumaImage x = source;
    Rng rng = make_rng(cfg.seed, "attack");
    auto step_and_record = [&](const std::vector<double>& grad, double step, bool sign) {
      double scale = 0.0;
      if (!sign)
        for (double g : grad) scale = std::max(scale, std::abs(g));
      for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        const double g = grad[i];
        const double s = sign ? (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0)) : (scale > 0.0 ? g / scale : 0.0);
        x.pixels[i] = static_cast<float>(x.pixels[i] - step * s);
      }
      detail::project(x, source, cfg.linf_budget);
      const LumaImage q = detail::quantize_within(x, source, cfg.linf_budget);
      int d = 0;
      const double l = evaluate(q, &d);
      best.offer(q, d, l);
      if (cfg.record_trace) r.trace.push_back({l, d});
      return l;
    };

    if (cfg.mode == AttackMode::Nes) {
      auto loss_fn = [&](const LumaImage& img) {
        ++queries;
        return margin_loss(signed_scores(img, hasher), target, margin, cap);
      };
      const std::size_t per_step = 2 * cfg.nes.pairs_per_step + 1;
      detail::ProbeSampler sampler(x.width, x.height, cfg.nes.probe, cfg.nes.probe_size);
      std::vector<double> velocity(x.pixels.size(), 0.0);
      double eta = cfg.nes.eta;
      double plateau_best = loss0;
      std::size_t since_best = 0;
      while (queries + per_step <= cfg.nes.total_queries) {
        const auto grad =
            nes_gradient(x, loss_fn, cfg.nes.sigma * cfg.linf_budget, cfg.nes.pairs_per_step, rng, sampler);
        for (std::size_t i = 0; i < grad.size(); ++i)
          velocity[i] = cfg.nes.momentum * velocity[i] + (1.0 - cfg.nes.momentum) * grad[i];
        const double l = step_and_record(velocity, eta, cfg.nes.step == NesParams::Step::Sign);
        if (l == 0.0) break;
        if (l < plateau_best) {
          plateau_best = l;
          since_best = 0;
        } else if (++since_best >= cfg.nes.plateau_length) {
          eta = std::max(cfg.nes.min_eta, eta * cfg.nes.plateau_drop);
          since_best = 0;
        }
      }
    } else {
      const auto& sh = hasher.surrogate();
      for (std::size_t it = 0; it < cfg.pg.iterations; ++it) {
        const LumaImage g = surrogate_loss_gradient(x, target, sh, margin, cap);
        const std::vector<double> grad(g.pixels.begin(), g.pixels.end());
        if (step_and_record(grad, cfg.pg.step_size, true) == 0.0) break;
      }
    }
  }

  r.image = std::move(best.image);
  r.final_hamming = best.hamming;
  r.final_distance = static_cast<double>(best.hamming) / static_cast<double>(bits);
  r.final_loss = best.loss;
  r.linf_actual = max_abs_diff(r.image, source);
  r.l2_distance = l2_diff(r.image, source);
  r.queries_used = queries;
  return r;
}

// --------------------------------------------------------------------------
// Greedy batch assignment of pool images to poisons

struct BatchConfig {
  AttackConfig attack;
  std::size_t candidates_per_poison = 0;  // 0 attacks every remaining pool image
  unsigned workers = 1;
};

struct CandidateRecord {
  std::size_t source_index = 0;
  int initial_hamming = 0;
  int final_hamming = 0;
  double final_loss = 0.0;
};

struct CraftedDelivery {
  std::size_t poison_index = 0;
  std::size_t source_index = 0;
  PerceptualHash target;
  CollisionResult result;
  std::vector<CandidateRecord> candidates;
};

/// Poisons are processed in order. Each attacks the remaining pool images
/// (or, with a cap, a uniform sample of them drawn from a per-poison seed),
/// keeps the result with the lowest final hamming distance (then lowest loss,
/// then lowest pool index) and removes that image from the pool.
inline std::vector<CraftedDelivery> craft_batch(std::span<const LumaImage> pool, std::span<const PerceptualHash> poisons,
                                                const Hasher& hasher, const BatchConfig& cfg) {
  require(pool.size() >= poisons.size(), ErrorCode::PoolExhausted,
          "pool of " + std::to_string(pool.size()) + " for " + std::to_string(poisons.size()) + " poisons");
  std::vector<std::size_t> remaining(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) remaining[i] = i;
  std::vector<CraftedDelivery> out;
  for (std::size_t p = 0; p < poisons.size(); ++p) {
    std::vector<std::size_t> cand = remaining;
    if (cfg.candidates_per_poison > 0 && cfg.candidates_per_poison < cand.size()) {
      Rng rng = make_rng(cfg.attack.seed, "craft-candidates", p);
      for (std::size_t i = 0; i < cfg.candidates_per_poison; ++i)
        std::swap(cand[i], cand[i + uniform_index(rng, cand.size() - i)]);
      cand.resize(cfg.candidates_per_poison);
      std::sort(cand.begin(), cand.end());
    }
    std::vector<CollisionResult> results(cand.size());
    parallel_for(cand.size(), cfg.workers, [&](std::size_t c) {
      AttackConfig ac = cfg.attack;
      ac.seed = derive_seed(cfg.attack.seed, "craft/" + std::to_string(p), cand[c]);
      results[c] = craft_delivery(pool[cand[c]], poisons[p], hasher, ac);
    });
    std::size_t best = 0;
    for (std::size_t c = 1; c < cand.size(); ++c) {
      const auto& a = results[c];
      const auto& b = results[best];
      if (a.final_hamming < b.final_hamming || (a.final_hamming == b.final_hamming && a.final_loss < b.final_loss))
        best = c;
    }
    CraftedDelivery d;
    d.poison_index = p;
    d.source_index = cand[best];
    d.target = poisons[p];
    for (std::size_t c = 0; c < cand.size(); ++c)
      d.candidates.push_back({cand[c], results[c].initial_hamming, results[c].final_hamming, results[c].final_loss});
    d.result = std::move(results[best]);
    remaining.erase(std::find(remaining.begin(), remaining.end(), d.source_index));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace csislab
