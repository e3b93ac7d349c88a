#pragma once

#include "kdd/gauss.hpp"
#include "kdd/rng.hpp"
#include "kdd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace kdd {

struct MixtureComponent {
  double weight = 0.0;
  Vector mean;
  Matrix cov;
};

//! Weighted Gaussian mixture; the target density of every study and the
//! closed-form oracle behind MISE/ISE.
class NormalMixture {
 public:
  explicit NormalMixture(std::vector<MixtureComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw std::invalid_argument("NormalMixture: no components");
    const Index d = comps_.front().mean.size();
    double wsum = 0.0;
    for (const auto& c : comps_) {
      if (c.weight <= 0.0) throw std::invalid_argument("NormalMixture: weights must be positive");
      if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d)
        throw std::invalid_argument("NormalMixture: dimension mismatch");
      require_spd(c.cov, "NormalMixture");
      wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-12)
      throw std::invalid_argument("NormalMixture: weights must sum to 1");
  }

  Index dim() const { return comps_.front().mean.size(); }
  std::size_t size() const { return comps_.size(); }
  const std::vector<MixtureComponent>& components() const { return comps_; }

  double density(const Vector& x) const {
    double acc = 0.0;
    for (const auto& c : comps_) acc += c.weight * GaussFactor(c.cov).density(x - c.mean);
    return acc;
  }

  //! Mean vector and covariance matrix of the mixture law.
  Vector mean() const {
    Vector m = Vector::Zero(dim());
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
  }
  Matrix covariance() const {
    const Vector m = mean();
    Matrix s = Matrix::Zero(dim(), dim());
    for (const auto& c : comps_) s += c.weight * (c.cov + c.mean * c.mean.transpose());
    return Matrix(s - m * m.transpose());
  }

 private:
  std::vector<MixtureComponent> comps_;
};

//! Sampled points with their generating component recorded per row.
struct LabeledSample {
  Matrix points;            // n x d
  std::vector<int> labels;  // component index per row
  std::uint64_t seed = 0;
};

//! D^{(x)r} f(x) for a normal mixture, by linearity of dnorm_deriv.
inline DerivVector mixture_deriv(const NormalMixture& f, const Vector& x, int r,
                                 std::size_t max_entries = kMaxTensorEntries) {
  if (x.size() != f.dim()) throw std::invalid_argument("mixture_deriv: dim mismatch");
  DerivVector out;
  out.dim = f.dim();
  out.order = r;
  out.values = Vector::Zero(static_cast<Index>(checked_pow(f.dim(), r, max_entries)));
  for (const auto& c : f.components())
    out.values += c.weight * dnorm_deriv(Vector(x - c.mean), c.cov, r, max_entries).values;
  return out;
}

//! psi_{2r} = integral of D^{(x)2r} f . f, exact for normal mixtures through
//! the Gaussian convolution identity (verified against quadrature in tests):
//! psi_{2r} = sum_{i,j} w_i w_j D^{(x)2r} phi_{Sigma_i + Sigma_j}(mu_i - mu_j).
inline DerivVector psi_functional(const NormalMixture& f, int r,
                                  std::size_t max_entries = kMaxTensorEntries) {
  if (r < 0) throw std::invalid_argument("psi_functional: r >= 0");
  DerivVector out;
  out.dim = f.dim();
  out.order = 2 * r;
  out.values = Vector::Zero(static_cast<Index>(checked_pow(f.dim(), 2 * r, max_entries)));
  const auto& cs = f.components();
  for (const auto& ci : cs)
    for (const auto& cj : cs)
      out.values += ci.weight * cj.weight *
                    dnorm_deriv(Vector(ci.mean - cj.mean), Matrix(ci.cov + cj.cov), 2 * r,
                                max_entries).values;
  return out;
}

namespace detail {

inline int pick_component(Rng& rng, const std::vector<double>& weights) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace detail

//! i.i.d. draws; component chosen by weight, then one Gaussian draw through
//! the Cholesky factor. Deterministic given the seed.
inline LabeledSample sample_mixture(const NormalMixture& f, Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_mixture: n >= 1");
  const Index d = f.dim();
  std::vector<double> weights;
  std::vector<Matrix> chol;
  for (const auto& c : f.components()) {
    weights.push_back(c.weight);
    chol.push_back(Matrix(Eigen::LLT<Matrix>(c.cov).matrixL()));
  }
  LabeledSample out;
  out.points.resize(n, d);
  out.labels.resize(n);
  out.seed = seed;
  Rng rng(seed);
  Vector z(d);
  for (Index i = 0; i < n; ++i) {
    const int k = detail::pick_component(rng, weights);
    for (Index j = 0; j < d; ++j) z[j] = rng.normal();
    out.points.row(i) = (f.components()[k].mean + chol[k] * z).transpose();
    out.labels[i] = k;
  }
  return out;
}

// ---- labeled clustering models ----

//! Crescent component: X = O + (r cos T, (-1)^kappa r sin T)' + U with
//! T ~ N(pi/2, (pi/6)^2) and U ~ N(0, (r/20)^2 I_2). `rotated` applies the
//! quarter-turn (x,y) -> (-y,x) to the draw (used by the eye model).
struct CrescentComponent {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0;
  int convexity = 0;  // kappa in {0, 1}
  bool rotated = false;
};

//! Half-crescent: X = (cos T, sin T)' + U, T ~ N(angle, (pi/12)^2),
//! U ~ N(0, (1/20)^2 I_2).
struct HalfCrescentComponent {
  double angle = 0.0;
};

struct NormalComponent {
  Vector mean;
  Matrix cov;
};

struct ClusterComponent {
  double weight = 0.0;
  std::variant<NormalComponent, CrescentComponent, HalfCrescentComponent> shape;
};

//! Generative sampler with ground-truth labels: normal mixtures plus the
//! crescent/ring constructions used by the clustering studies.
class ClusterModel {
 public:
  ClusterModel(std::string name, std::vector<ClusterComponent> comps)
      : name_(std::move(name)), comps_(std::move(comps)) {
    if (comps_.empty()) throw std::invalid_argument("ClusterModel: no components");
    double wsum = 0.0;
    for (const auto& c : comps_) {
      if (c.weight <= 0.0) throw std::invalid_argument("ClusterModel: weights must be positive");
      wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-12) throw std::invalid_argument("ClusterModel: weights must sum to 1");
    if (has_curved())
      for (const auto& c : comps_)
        if (const auto* nc = std::get_if<NormalComponent>(&c.shape))
          if (nc->mean.size() != 2)
            throw std::invalid_argument("ClusterModel: crescent mixtures are bivariate");
  }

  const std::string& name() const { return name_; }
  const std::vector<ClusterComponent>& components() const { return comps_; }

  Index dim() const {
    if (has_curved()) return 2;
    return std::get<NormalComponent>(comps_.front().shape).mean.size();
  }

  bool has_curved() const {
    for (const auto& c : comps_)
      if (!std::holds_alternative<NormalComponent>(c.shape)) return true;
    return false;
  }

 private:
  std::string name_;
  std::vector<ClusterComponent> comps_;
};

inline LabeledSample sample_cluster_model(const ClusterModel& m, Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_cluster_model: n >= 1");
  const Index d = m.dim();
  std::vector<double> weights;
  for (const auto& c : m.components()) weights.push_back(c.weight);
  std::vector<Matrix> chol(m.components().size());
  for (std::size_t k = 0; k < m.components().size(); ++k)
    if (const auto* nc = std::get_if<NormalComponent>(&m.components()[k].shape))
      chol[k] = Matrix(Eigen::LLT<Matrix>(nc->cov).matrixL());

  LabeledSample out;
  out.points.resize(n, d);
  out.labels.resize(n);
  out.seed = seed;
  Rng rng(seed);
  Vector z(d);
  for (Index i = 0; i < n; ++i) {
    const int k = detail::pick_component(rng, weights);
    out.labels[i] = k;
    const auto& comp = m.components()[k];
    if (const auto* nc = std::get_if<NormalComponent>(&comp.shape)) {
      for (Index j = 0; j < d; ++j) z[j] = rng.normal();
      out.points.row(i) = (nc->mean + chol[k] * z).transpose();
    } else if (const auto* cc = std::get_if<CrescentComponent>(&comp.shape)) {
      const double theta = M_PI / 2.0 + (M_PI / 6.0) * rng.normal();
      const double ux = (cc->radius / 20.0) * rng.normal();
      const double uy = (cc->radius / 20.0) * rng.normal();
      const double sgn = (cc->convexity % 2 == 0) ? 1.0 : -1.0;
      double x = cc->center.x() + cc->radius * std::cos(theta) + ux;
      double y = cc->center.y() + sgn * cc->radius * std::sin(theta) + uy;
      if (cc->rotated) {
        const double t = x;
        x = -y;
        y = t;
      }
      out.points(i, 0) = x;
      out.points(i, 1) = y;
    } else {
      const auto& hc = std::get<HalfCrescentComponent>(comp.shape);
      const double theta = hc.angle + (M_PI / 12.0) * rng.normal();
      out.points(i, 0) = std::cos(theta) + (1.0 / 20.0) * rng.normal();
      out.points(i, 1) = std::sin(theta) + (1.0 / 20.0) * rng.normal();
    }
  }
  return out;
}

// ---- built-in models of the clustering study ----

inline ClusterModel four_crescent_model() {
  std::vector<ClusterComponent> cs;
  cs.push_back({0.25, CrescentComponent{{-1.0, 1.0}, 1.0, 1, false}});
  cs.push_back({0.25, CrescentComponent{{0.0, 0.5}, 1.0, 0, false}});
  cs.push_back({0.25, CrescentComponent{{0.0, 0.0}, 0.5, 1, false}});
  cs.push_back({0.25, CrescentComponent{{0.5, -0.5}, 0.5, 0, false}});
  return ClusterModel("4-crescent", std::move(cs));
}

inline ClusterModel broken_ring_model() {
  std::vector<ClusterComponent> cs;
  cs.push_back({0.25, NormalComponent{Vector::Zero(2), Matrix(0.04 * Matrix::Identity(2, 2))}});
  for (double a : {M_PI / 4.0, 3.0 * M_PI / 4.0, 5.0 * M_PI / 4.0, 7.0 * M_PI / 4.0})
    cs.push_back({3.0 / 16.0, HalfCrescentComponent{a}});
  return ClusterModel("broken-ring", std::move(cs));
}

inline ClusterModel eye_model() {
  std::vector<ClusterComponent> cs;
  cs.push_back({1.0 / 20.0, NormalComponent{Vector::Zero(2), Matrix(0.04 * Matrix::Identity(2, 2))}});
  cs.push_back({1.0 / 8.0, CrescentComponent{{0.0, 0.0}, 1.0, 0, false}});
  cs.push_back({1.0 / 8.0, CrescentComponent{{0.0, 0.0}, 1.0, 1, false}});
  cs.push_back({7.0 / 20.0, CrescentComponent{{0.0, 0.0}, 1.5, 0, true}});
  cs.push_back({7.0 / 20.0, CrescentComponent{{0.0, 0.0}, 1.5, 1, true}});
  return ClusterModel("eye", std::move(cs));
}

}  // namespace kdd
