#pragma once

// 3D-aware attention bias between view patches and the two attention transforms
// (reweigh and replace) that consume it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/raster.hpp"

namespace mvtex {

/// Dense row-major float matrix.
class Matrix {
public:
  Matrix() = default;
  Matrix(int rows, int cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill)
  {
    require(rows >= 0 && cols >= 0, ErrorCode::shape_mismatch, "negative matrix extent");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

  float& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  float operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  std::span<float> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const float> row(int i) const
  {
    return {data_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)};
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b)
{
  require(a.cols() == b.rows(), ErrorCode::shape_mismatch,
          "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    std::vector<double> acc(b.cols(), 0.0);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) {
        continue;
      }
      const auto brow = b.row(k);
      for (int j = 0; j < b.cols(); ++j) {
        acc[j] += aik * brow[j];
      }
    }
    for (int j = 0; j < b.cols(); ++j) {
      out(i, j) = static_cast<float>(acc[j]);
    }
  }
  return out;
}

/// Log-domain stand-in for minus infinity. exp() of it underflows to exactly 0.
inline constexpr float kMaskedBias = -1e9f;

inline bool is_masked(float w) noexcept { return w <= kMaskedBias * 0.5f; }

struct DistanceMatrix {
  Matrix entries;  // N_Q x N_K, scene units
  std::vector<std::uint8_t> q_fg;
  std::vector<std::uint8_t> k_fg;
};

struct BiasParams {
  double o = 2.0;
  double r = 20.0;
  double delta = 0.1;

  void validate() const
  {
    require(o > 0.0 && std::isfinite(o), ErrorCode::parameter_domain, "bias parameter o must be positive");
    require(r > 0.0 && std::isfinite(r), ErrorCode::parameter_domain, "bias parameter r must be positive");
    require(delta > 0.0 && delta < 1.0, ErrorCode::parameter_domain, "bias parameter delta must be in (0, 1)");
  }
};

struct BiasMatrix {
  Matrix entries;
  BiasParams params;
  int view = -1;
  int resolution = 0;
  std::vector<int> attended;  // key views, in concatenation order
};

/// Foreground-foreground bias for distance d: max(-o ln(1 + r d), ln delta).
inline double bias_value(double d, const BiasParams& p)
{
  return std::max(-p.o * std::log1p(p.r * d), std::log(p.delta));
}

/// Smallest distance at which the clamp is active.
inline double clamp_onset_distance(const BiasParams& p)
{
  return (std::pow(p.delta, -1.0 / p.o) - 1.0) / p.r;
}

/// Distances between every query pixel and every pixel of the concatenated key views.
inline DistanceMatrix pairwise_distance(const RenderedMaps& query, std::span<const RenderedMaps* const> keys)
{
  const int res = query.resolution();
  for (const auto* k : keys) {
    require(k->resolution() == res, ErrorCode::resolution_mismatch,
            "pairwise_distance: key maps at " + std::to_string(k->resolution()) + " but query at " +
                std::to_string(res));
  }
  const int nq = res * res;
  const int nk = nq * static_cast<int>(keys.size());
  DistanceMatrix d;
  d.entries = Matrix(nq, nk);
  d.q_fg.assign(query.fg_mask.data().begin(), query.fg_mask.data().end());
  d.k_fg.reserve(nk);
  for (const auto* k : keys) {
    d.k_fg.insert(d.k_fg.end(), k->fg_mask.data().begin(), k->fg_mask.data().end());
  }
  for (int i = 0; i < nq; ++i) {
    const auto qp = query.position.pixel(static_cast<std::size_t>(i));
    auto row = d.entries.row(i);
    int j = 0;
    for (const auto* k : keys) {
      for (int m = 0; m < nq; ++m, ++j) {
        const auto kp = k->position.pixel(static_cast<std::size_t>(m));
        const double dx = double(qp[0]) - kp[0];
        const double dy = double(qp[1]) - kp[1];
        const double dz = double(qp[2]) - kp[2];
        row[j] = static_cast<float>(std::sqrt(dx * dx + dy * dy + dz * dz));
      }
    }
  }
  return d;
}

inline DistanceMatrix pairwise_distance(const RenderedMaps& query, const std::vector<RenderedMaps>& keys)
{
  std::vector<const RenderedMaps*> ptrs;
  for (const auto& k : keys) {
    ptrs.push_back(&k);
  }
  return pairwise_distance(query, ptrs);
}

/// Case split: background-background 0, foreground-foreground the clamped log falloff,
/// anything mixed is masked.
inline BiasMatrix attention_bias(const DistanceMatrix& d, const BiasParams& params)
{
  params.validate();
  const int nq = d.entries.rows();
  const int nk = d.entries.cols();
  require(static_cast<int>(d.q_fg.size()) == nq && static_cast<int>(d.k_fg.size()) == nk,
          ErrorCode::shape_mismatch, "attention_bias: foreground flags do not match the distance matrix");
  BiasMatrix w;
  w.params = params;
  w.entries = Matrix(nq, nk);
  for (int i = 0; i < nq; ++i) {
    const auto drow = d.entries.row(i);
    auto wrow = w.entries.row(i);
    for (int j = 0; j < nk; ++j) {
      if (d.q_fg[i] && d.k_fg[j]) {
        wrow[j] = static_cast<float>(bias_value(drow[j], params));
      } else if (!d.q_fg[i] && !d.k_fg[j]) {
        wrow[j] = 0.0f;
      } else {
        wrow[j] = kMaskedBias;
      }
    }
  }
  return w;
}

/// Row-wise softmax. Masked entries get weight exactly 0; a row with nothing but masked
/// entries is an error.
inline Matrix softmax_rows(const Matrix& logits)
{
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (float v : in) {
      if (!is_masked(v)) {
        peak = std::max(peak, double(v));
      }
    }
    require(std::isfinite(peak), ErrorCode::all_masked_row,
            "attention row " + std::to_string(i) + " has no unmasked entry");
    double sum = 0.0;
    std::vector<double> e(in.size(), 0.0);
    for (std::size_t j = 0; j < in.size(); ++j) {
      if (!is_masked(in[j])) {
        e[j] = std::exp(double(in[j]) - peak);
        sum += e[j];
      }
    }
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = static_cast<float>(e[j] / sum);
    }
  }
  return out;
}

/// Softmax(S + W).
inline Matrix reweighed_attention_weights(const Matrix& s, const Matrix& w)
{
  require(s.rows() == w.rows() && s.cols() == w.cols(), ErrorCode::shape_mismatch,
          "similarity and bias shapes differ");
  Matrix logits(s.rows(), s.cols());
  for (std::size_t i = 0; i < logits.data().size(); ++i) {
    const float b = w.data()[i];
    logits.data()[i] = is_masked(b) ? kMaskedBias : s.data()[i] + b;
  }
  return softmax_rows(logits);
}

inline Matrix reweigh_attention(const Matrix& s, const BiasMatrix& w, const Matrix& v)
{
  return matmul(reweighed_attention_weights(s, w.entries), v);
}

/// Softmax(W) V; the similarity is ignored.
inline Matrix replace_attention(const BiasMatrix& w, const Matrix& v)
{
  return matmul(softmax_rows(w.entries), v);
}

enum class AttendedMode { dense, neighbors };

/// Attended view sets. Dense: every view attends to all views. Neighbors: views within
/// `k` ring steps (wrapping), always including the view itself, in ascending order.
inline std::vector<std::vector<int>> attended_views(int n_views, AttendedMode mode, int k = 1)
{
  require(n_views >= 1, ErrorCode::parameter_domain, "attended_views: need at least one view");
  std::vector<std::vector<int>> out(n_views);
  for (int n = 0; n < n_views; ++n) {
    for (int m = 0; m < n_views; ++m) {
      const int gap = std::abs(n - m);
      const int ring = std::min(gap, n_views - gap);
      if (mode == AttendedMode::dense || ring <= k) {
        out[n].push_back(m);
      }
    }
  }
  return out;
}

/// Bias matrices indexed [view][resolution index].
struct ViewBiases {
  std::vector<int> resolutions;
  std::vector<std::vector<BiasMatrix>> per_view;

  const BiasMatrix& at(int view, int res) const
  {
    for (std::size_t r = 0; r < resolutions.size(); ++r) {
      if (resolutions[r] == res) {
        return per_view.at(view).at(r);
      }
    }
    fail(ErrorCode::out_of_range, "no bias matrix at resolution " + std::to_string(res));
  }
};

inline ViewBiases build_view_biases(const std::vector<RenderedMaps>& all_maps,
                                   const std::vector<std::vector<int>>& attended,
                                   const std::vector<int>& resolutions, const BiasParams& params)
{
  params.validate();
  require(attended.size() == all_maps.size(), ErrorCode::shape_mismatch,
          "build_view_biases: one attended set per view required");
  ViewBiases out;
  out.resolutions = resolutions;
  out.per_view.resize(all_maps.size());
  for (std::size_t n = 0; n < attended.size(); ++n) {
    require(!attended[n].empty(), ErrorCode::parameter_domain, "attended set is empty");
    require(std::find(attended[n].begin(), attended[n].end(), static_cast<int>(n)) != attended[n].end(),
            ErrorCode::parameter_domain, "attended set of view " + std::to_string(n) + " omits the view itself");
  }
  for (int res : resolutions) {
    std::vector<RenderedMaps> small;
    small.reserve(all_maps.size());
    for (const auto& m : all_maps) {
      require(res > 0 && m.resolution() % res == 0, ErrorCode::resolution_mismatch,
              "attention resolution " + std::to_string(res) + " does not divide render resolution " +
                  std::to_string(m.resolution()));
      small.push_back(downsample_maps(m, m.resolution() / res));
    }
    for (std::size_t n = 0; n < all_maps.size(); ++n) {
      std::vector<const RenderedMaps*> keys;
      for (int v : attended[n]) {
        require(v >= 0 && v < static_cast<int>(small.size()), ErrorCode::out_of_range,
                "attended view index " + std::to_string(v) + " out of range");
        keys.push_back(&small[v]);
      }
      BiasMatrix w = attention_bias(pairwise_distance(small[n], keys), params);
      w.view = static_cast<int>(n);
      w.resolution = res;
      w.attended = attended[n];
      out.per_view[n].push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace mvtex
