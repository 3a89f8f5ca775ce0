#include "clickseg/finetune.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace clickseg {

double finetune_energy(const EmbeddingMatrix& positives, const EmbeddingMatrix& negatives, double eps_cte) {
  if (positives.rows() == 0) throw std::invalid_argument("fine-tune energy needs at least one positive click");
  if (negatives.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < negatives.rows(); ++i) {
    double d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < positives.rows(); ++j) d = std::min(d, (negatives.row(i) - positives.row(j)).norm());
    sum += std::max(eps_cte - d, 0.0);
  }
  return sum / static_cast<double>(negatives.rows());
}

EnergyGradient finetune_energy_gradient(const EmbeddingMatrix& z, const ClickSet& clicks, double eps_cte) {
  if (clicks.positives.empty()) throw std::invalid_argument("fine-tune energy needs at least one positive click");
  EnergyGradient out;
  out.grad = EmbeddingMatrix::Zero(z.rows(), z.cols());
  if (clicks.negatives.empty()) return out;
  const double w = 1.0 / static_cast<double>(clicks.negatives.size());
  for (PointIndex q : clicks.negatives) {
    double best = std::numeric_limits<double>::infinity();
    PointIndex nearest = clicks.positives.front();
    for (PointIndex p : clicks.positives) {
      const double d = (z.row(q) - z.row(p)).norm();
      if (d < best) {
        best = d;
        nearest = p;
      }
    }
    const double hinge = eps_cte - best;
    if (hinge <= 0.0) continue;
    out.energy += w * hinge;
    if (best <= 0.0) continue;
    const Eigen::RowVectorXd u = (z.row(q) - z.row(nearest)) / best;
    out.grad.row(q) -= w * u;
    out.grad.row(nearest) += w * u;
  }
  return out;
}

void FinetuneOptions::validate() const {
  if (steps < 0) throw std::invalid_argument("fine-tune steps must be non-negative");
  if (!(step_size > 0.0)) throw std::invalid_argument("fine-tune step size must be positive");
  if (max_halvings < 0) throw std::invalid_argument("max_halvings must be non-negative");
  if (!(eps_cte >= 0.0)) throw std::invalid_argument("eps_cte must be non-negative");
}

void to_json(nlohmann::json& j, const FinetuneOptions& o) {
  j = nlohmann::json{{"steps", o.steps},
                     {"step_size", o.step_size},
                     {"max_halvings", o.max_halvings},
                     {"eps_cte", o.eps_cte},
                     {"allow_offsets", o.allow_offsets},
                     {"auto_on_negative", o.auto_on_negative}};
}

void from_json(const nlohmann::json& j, FinetuneOptions& o) {
  o.steps = j.value("steps", o.steps);
  o.step_size = j.value("step_size", o.step_size);
  o.max_halvings = j.value("max_halvings", o.max_halvings);
  o.eps_cte = j.value("eps_cte", o.eps_cte);
  o.allow_offsets = j.value("allow_offsets", o.allow_offsets);
  o.auto_on_negative = j.value("auto_on_negative", o.auto_on_negative);
}

namespace {

/// Descent direction at near-ties: every positive within `tol` of the nearest
/// one shares the push.
EmbeddingMatrix tie_aware_gradient(const EmbeddingMatrix& z, const ClickSet& clicks, double eps_cte, double tol) {
  EmbeddingMatrix grad = EmbeddingMatrix::Zero(z.rows(), z.cols());
  if (clicks.negatives.empty()) return grad;
  const double w = 1.0 / static_cast<double>(clicks.negatives.size());
  std::vector<double> d(clicks.positives.size());
  for (PointIndex q : clicks.negatives) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < clicks.positives.size(); ++j) {
      d[j] = (z.row(q) - z.row(clicks.positives[j])).norm();
      best = std::min(best, d[j]);
    }
    if (best >= eps_cte || best <= 0.0) continue;
    std::vector<std::size_t> tied;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d[j] <= best + tol && d[j] > 0.0) tied.push_back(j);
    const double share = w / static_cast<double>(tied.size());
    for (std::size_t j : tied) {
      const PointIndex p = clicks.positives[j];
      const Eigen::RowVectorXd u = (z.row(q) - z.row(p)) / d[j];
      grad.row(q) -= share * u;
      grad.row(p) += share * u;
    }
  }
  return grad;
}

/// Guarded descent. `energy_at` evaluates a point and remembers it;
/// `gradient_last` differentiates at the most recently evaluated point,
/// which is always the current iterate when it is called. `tie_gradient_last`
/// is the fallback direction once every halving was rejected.
template <typename Evaluate, typename Gradient, typename TieGradient>
FinetuneResult guarded_descent(Eigen::VectorXd& theta, const FinetuneOptions& opt, Evaluate&& energy_at,
                               Gradient&& gradient_last, TieGradient&& tie_gradient_last) {
  FinetuneResult r;
  double step = opt.step_size;
  double e = energy_at(theta);
  r.energy_before = e;
  for (int s = 0; s < opt.steps; ++s) {
    if (e <= 0.0) break;
    Eigen::VectorXd g = gradient_last();
    if (g.squaredNorm() == 0.0) break;
    bool accepted = false;
    const double first_step = step;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        energy_at(theta);
        g = tie_gradient_last(opt.step_size);
        if (g.squaredNorm() == 0.0) break;
        step = first_step;
      }
      for (int h = 0; h <= opt.max_halvings; ++h) {
        Eigen::VectorXd trial = theta - step * g;
        const double et = energy_at(trial);
        if (std::isfinite(et) && et <= e) {
          theta = std::move(trial);
          e = et;
          accepted = true;
          break;
        }
        if (h < opt.max_halvings) step *= 0.5;
      }
    }
    if (!accepted) {
      ++r.rejected_steps;
      break;
    }
    ++r.accepted_steps;
  }
  r.energy_after = e;
  r.final_step_size = step;
  return r;
}

}  // namespace

FinetuneResult finetune(Session& session, const EmbeddingBackend* backend, const FinetuneOptions& options) {
  options.validate();
  const ClickSet& clicks = session.clicks();
  if (clicks.positives.empty()) throw std::invalid_argument("fine-tune energy needs at least one positive click");

  const auto* trained = dynamic_cast<const TrainedBackend*>(backend);
  if (trained != nullptr) {
    auto input = session.network_input();
    if (!input) {
      input = std::make_shared<const NetworkInput>(trained->prepare(session.cloud()));
      session.set_network_input(input);
    }
    PointNetwork net = session.tuned_network() ? *session.tuned_network() : trained->network();
    // Only clicked rows enter the energy: positives first, then negatives.
    std::vector<PointIndex> rows = clicks.positives;
    rows.insert(rows.end(), clicks.negatives.begin(), clicks.negatives.end());
    ClickSet local;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& list = i < clicks.positives.size() ? local.positives : local.negatives;
      list.push_back(static_cast<PointIndex>(i));
    }
    RowsCache cache;
    EmbeddingMatrix last_rows;
    EnergyGradient last;
    auto energy_at = [&](const Eigen::VectorXd& p) {
      net.parameters() = p;
      last_rows = net.forward_rows(*input, rows, &cache);
      last = finetune_energy_gradient(last_rows, local, options.eps_cte);
      return last.energy;
    };
    auto gradient_last = [&] { return net.backward_rows(*input, cache, last.grad); };
    auto tie_gradient_last = [&](double tol) {
      return net.backward_rows(*input, cache, tie_aware_gradient(last_rows, local, options.eps_cte, tol));
    };
    Eigen::VectorXd theta = net.parameters();
    FinetuneResult r = guarded_descent(theta, options, energy_at, gradient_last, tie_gradient_last);
    r.tuned_parameters = true;
    if (r.accepted_steps > 0) {
      net.parameters() = theta;
      auto z = std::make_shared<const EmbeddingMatrix>(net.forward(*input));
      session.replace_embeddings(std::move(z), std::make_shared<const PointNetwork>(std::move(net)));
    }
    return r;
  }

  if (!options.allow_offsets) throw std::runtime_error("backend not tunable");
  const EmbeddingMatrix& base = session.embeddings();
  const Eigen::Index rows = base.rows();
  const Eigen::Index cols = base.cols();
  Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(base.data(), base.size());
  auto as_matrix = [&](const Eigen::VectorXd& p) {
    return EmbeddingMatrix(Eigen::Map<const EmbeddingMatrix>(p.data(), rows, cols));
  };
  EmbeddingMatrix last_z;
  EnergyGradient last;
  auto energy_at = [&](const Eigen::VectorXd& p) {
    last_z = as_matrix(p);
    last = finetune_energy_gradient(last_z, clicks, options.eps_cte);
    return last.energy;
  };
  auto gradient_last = [&]() -> Eigen::VectorXd {
    return Eigen::Map<const Eigen::VectorXd>(last.grad.data(), last.grad.size());
  };
  auto tie_gradient_last = [&](double tol) -> Eigen::VectorXd {
    const EmbeddingMatrix g = tie_aware_gradient(last_z, clicks, options.eps_cte, tol);
    return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  };
  FinetuneResult r = guarded_descent(theta, options, energy_at, gradient_last, tie_gradient_last);
  if (r.accepted_steps > 0) {
    session.replace_embeddings(std::make_shared<const EmbeddingMatrix>(as_matrix(theta)), session.tuned_network());
  }
  return r;
}

}  // namespace clickseg
