#include "clickseg/losses.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

namespace clickseg {

void LossWeights::validate() const {
  for (double v : {lambda_ctr, lambda_cte, lambda_reg, eps_ctr, eps_cte}) {
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights and margins must be non-negative");
  }
  if (!(eps_cte > eps_ctr)) {
    spdlog::warn("eps_cte ({}) should exceed eps_ctr ({})", eps_cte, eps_ctr);
  }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_ctr", w.lambda_ctr},
       {"lambda_cte", w.lambda_cte},
       {"lambda_reg", w.lambda_reg},
       {"eps_ctr", w.eps_ctr},
       {"eps_cte", w.eps_cte}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  const LossWeights d;
  w.lambda_ctr = j.value("lambda_ctr", d.lambda_ctr);
  w.lambda_cte = j.value("lambda_cte", d.lambda_cte);
  w.lambda_reg = j.value("lambda_reg", d.lambda_reg);
  w.eps_ctr = j.value("eps_ctr", d.eps_ctr);
  w.eps_cte = j.value("eps_cte", d.eps_cte);
}

namespace {

struct Segments {
  int k = 0;
  std::vector<double> size;
};

Segments count_segments(const EmbeddingMatrix& z, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw std::invalid_argument("label count " + std::to_string(labels.size()) + " does not match " +
                                std::to_string(z.rows()) + " embedding rows");
  }
  Segments s;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("negative segment label");
    s.k = std::max(s.k, l + 1);
  }
  s.size.assign(static_cast<std::size_t>(s.k), 0.0);
  for (int l : labels) s.size[static_cast<std::size_t>(l)] += 1.0;
  for (int i = 0; i < s.k; ++i) {
    if (s.size[static_cast<std::size_t>(i)] == 0.0) {
      throw std::invalid_argument("segment " + std::to_string(i) + " is empty");
    }
  }
  return s;
}

EmbeddingMatrix centers_of(const EmbeddingMatrix& z, std::span<const int> labels, const Segments& s) {
  EmbeddingMatrix c = EmbeddingMatrix::Zero(s.k, z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) c.row(labels[static_cast<std::size_t>(i)]) += z.row(i);
  for (int k = 0; k < s.k; ++k) c.row(k) /= s.size[static_cast<std::size_t>(k)];
  return c;
}

}  // namespace

EmbeddingMatrix segment_centers(const EmbeddingMatrix& z, std::span<const int> labels) {
  return centers_of(z, labels, count_segments(z, labels));
}

double centric_intra_loss(const EmbeddingMatrix& z, std::span<const int> labels, double eps_ctr) {
  const Segments s = count_segments(z, labels);
  if (s.k == 0) return 0.0;
  const EmbeddingMatrix c = centers_of(z, labels, s);
  std::vector<double> per_segment(static_cast<std::size_t>(s.k), 0.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    per_segment[static_cast<std::size_t>(l)] += std::max((z.row(i) - c.row(l)).norm() - eps_ctr, 0.0);
  }
  double sum = 0.0;
  for (int k = 0; k < s.k; ++k) sum += per_segment[static_cast<std::size_t>(k)] / s.size[static_cast<std::size_t>(k)];
  return sum / s.k;
}

double centric_inter_loss(const EmbeddingMatrix& z, std::span<const int> labels, double eps_cte) {
  const Segments s = count_segments(z, labels);
  if (s.k < 2) return 0.0;
  const EmbeddingMatrix c = centers_of(z, labels, s);
  double sum = 0.0;
  for (int i = 0; i < s.k; ++i) {
    for (int j = 0; j < s.k; ++j) {
      if (i != j) sum += std::max(eps_cte - (c.row(i) - c.row(j)).norm(), 0.0);
    }
  }
  return sum / (static_cast<double>(s.k) * (s.k - 1));
}

double reg_loss(const EmbeddingMatrix& z) {
  if (z.rows() == 0) return 0.0;
  return z.rowwise().norm().sum() / static_cast<double>(z.rows());
}

LossValue total_loss(const EmbeddingMatrix& z, std::span<const int> labels, const LossWeights& w) {
  const Segments s = count_segments(z, labels);
  LossValue out;
  out.grad = EmbeddingMatrix::Zero(z.rows(), z.cols());
  if (z.rows() == 0) return out;
  const EmbeddingMatrix c = centers_of(z, labels, s);
  const double k = s.k;

  // Intra-cluster: per-point hinge terms, then the center's share of the chain rule.
  EmbeddingMatrix g_point = EmbeddingMatrix::Zero(z.rows(), z.cols());
  EmbeddingMatrix g_center = EmbeddingMatrix::Zero(s.k, z.cols());
  std::vector<double> per_segment(static_cast<std::size_t>(s.k), 0.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    const auto diff = z.row(i) - c.row(l);
    const double dist = diff.norm();
    const double h = dist - w.eps_ctr;
    if (h > 0.0) {
      per_segment[static_cast<std::size_t>(l)] += h;
      if (dist > 0.0) {
        g_point.row(i) = diff / (dist * k * s.size[static_cast<std::size_t>(l)]);
        g_center.row(l) -= g_point.row(i);
      }
    }
  }
  for (int i = 0; i < s.k; ++i) out.intra += per_segment[static_cast<std::size_t>(i)] / s.size[static_cast<std::size_t>(i)];
  out.intra /= k;

  // Inter-cluster over ordered pairs; each unordered pair contributes twice.
  if (s.k >= 2) {
    const double norm = 1.0 / (k * (k - 1.0));
    EmbeddingMatrix g_inter = EmbeddingMatrix::Zero(s.k, z.cols());
    double sum = 0.0;
    for (int i = 0; i < s.k; ++i) {
      for (int j = i + 1; j < s.k; ++j) {
        const auto diff = c.row(i) - c.row(j);
        const double dist = diff.norm();
        const double h = w.eps_cte - dist;
        if (h > 0.0) {
          sum += 2.0 * h;
          if (dist > 0.0) {
            const Eigen::RowVectorXd g = (-2.0 * norm / dist) * diff;
            g_inter.row(i) += g;
            g_inter.row(j) -= g;
          }
        }
      }
    }
    out.inter = sum * norm;
    g_center = w.lambda_ctr * g_center + w.lambda_cte * g_inter;
  } else {
    g_center *= w.lambda_ctr;
  }

  const Eigen::VectorXd norms = z.rowwise().norm();
  out.reg = norms.sum() / static_cast<double>(z.rows());

  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    out.grad.row(i) = w.lambda_ctr * g_point.row(i) + g_center.row(l) / s.size[static_cast<std::size_t>(l)];
    if (norms[i] > 0.0) out.grad.row(i) += (w.lambda_reg / (static_cast<double>(z.rows()) * norms[i])) * z.row(i);
  }
  out.total = w.lambda_ctr * out.intra + w.lambda_cte * out.inter + w.lambda_reg * out.reg;
  return out;
}

}  // namespace clickseg
