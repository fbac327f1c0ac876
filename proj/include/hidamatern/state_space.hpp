// State-space models assembled from Hida-Matern mixtures.
//
// Each mixture component contributes one block of K^S(tau):
//
//  * b == 0: a real block of size p + 1 holding (f, f', ..., f^(p)).
//  * b > 0: a complex block of size p + 1 built from k_z(tau) = c sigma2
//    e^{jb tau} m(tau).  The complex process is taken circular, so the block
//    is realised on [Re z; Im z] with covariance [[Re K_z, -Im K_z],
//    [Im K_z, Re K_z]]; Re z_0 then has covariance exactly c k(tau).
//
// Filters run in correlation-transformed coordinates (unit stationary
// variances).  For complex blocks the filter state is additionally the
// demodulated derivative vector s = T^-1 (z, z', ...), whose covariance is
// e^{jb tau} times the real K^S of the envelope c sigma2 m(a tau): when b >> a
// the derivatives of z are nearly collinear and K^S_z(0) is singular to
// working precision, while the envelope K^S(0) is not.  covariance() and
// friends report the untransformed "physical" derivative coordinates.

#ifndef HIDAMATERN_STATE_SPACE_HPP
#define HIDAMATERN_STATE_SPACE_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hidamatern/kernel.hpp"
#include "hidamatern/multioutput.hpp"

namespace hidamatern {

struct TransitionPair {
  Eigen::MatrixXd A;
  Eigen::MatrixXd Q;
};

/// Sparse observation row: y = sum_k weight[k] * x[index[k]].
struct SparseRow {
  std::vector<int> index;
  std::vector<double> weight;

  double dot(const Eigen::VectorXd& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += weight[k] * x(index[k]);
    return s;
  }

  Eigen::VectorXd dense(int dim) const {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < index.size(); ++k) h(index[k]) += weight[k];
    return h;
  }
};

class StateSpaceModel {
 public:
  struct Block {
    MixtureComponent component;
    bool is_complex = false;
    int order = 0;   // p + 1
    int offset = 0;  // first row in the real state vector
    int size = 0;    // rows in the real state vector
    DerivativeTable table;      // derivatives of c k (real) or c k_z (complex)
    DerivativeTable envelope;   // derivatives of c sigma2 m(a tau); same as table if b == 0
    Eigen::MatrixXcd basis;     // x_z = basis * s, complex blocks only
    Eigen::VectorXd scale;      // correlation transform of the filter basis
    Eigen::VectorXd physical_scale;  // correlation transform of K^S(0) itself
    Eigen::MatrixXd k0;         // transformed envelope K^S(0)
    Eigen::MatrixXd k0_inv;
  };

  StateSpaceModel() = default;

  /// Block-diagonal model for a mixture; zero-weight components are dropped.
  static StateSpaceModel assemble(const MixtureSpec& mix, double obs_noise) {
    validate(mix);
    if (!(obs_noise > 0.0) || !std::isfinite(obs_noise)) {
      throw std::invalid_argument("observation noise must be positive and finite");
    }
    StateSpaceModel model;
    model.obs_noise_ = obs_noise;
    int offset = 0;
    for (const auto& c : mix.components) {
      if (c.weight == 0.0) continue;
      Block blk;
      blk.component = c;
      blk.is_complex = c.spec.b > 0.0;
      blk.order = c.spec.p + 1;
      blk.offset = offset;
      blk.size = blk.is_complex ? 2 * blk.order : blk.order;
      blk.table = DerivativeTable(to_exp_poly(c.spec).scaled(c.weight), blk.order);
      HidaMaternSpec flat = c.spec;
      flat.b = 0.0;
      blk.envelope = DerivativeTable(to_exp_poly(flat).scaled(c.weight), blk.order);
      auto ct = correlation_transform(multioutput_covariance(blk.envelope, 0.0));
      blk.scale = ct.scale;
      blk.k0 = ct.transformed;
      blk.k0_inv = structured_inverse(blk.k0);
      if (blk.is_complex) {
        blk.basis = demodulation_basis(c.spec.b, blk.order);
        blk.physical_scale =
            correlation_transform(complex_multioutput_covariance(blk.table, 0.0)).scale;
      } else {
        blk.physical_scale = blk.scale;
      }
      offset += blk.size;
      model.blocks_.push_back(std::move(blk));
    }
    model.dim_ = offset;
    return model;
  }

  /// T with T_ki = C(k, i) (jb)^(k-i): maps the demodulated derivatives
  /// s = e^{jbt} (w, w', ...) of z = e^{jbt} w onto (z, z', ...).
  static Eigen::MatrixXcd demodulation_basis(double b, int order) {
    Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(order, order);
    const Complex jb(0.0, b);
    for (int k = 0; k < order; ++k) {
      double binom = 1.0;
      for (int i = k; i >= 0; --i) {
        T(k, i) = binom * std::pow(jb, k - i);
        binom = binom * i / (k - i + 1);
      }
    }
    return T;
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  int state_dim() const { return dim_; }
  double obs_noise() const { return obs_noise_; }

  /// Markov order: sum of per-block K^S dimensions (complex blocks count once).
  int order() const {
    int n = 0;
    for (const auto& b : blocks_) n += b.order;
    return n;
  }

  MixtureSpec mixture() const {
    MixtureSpec mix;
    for (const auto& b : blocks_) mix.components.push_back(b.component);
    return mix;
  }

  /// Physical cov(x(t + tau), x(t)) with x the derivative state (complex
  /// blocks embedded as [Re; Im]).
  Eigen::MatrixXd covariance(double tau) const {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      K.block(b.offset, b.offset, b.size, b.size) =
          b.is_complex ? embed_operator(complex_multioutput_covariance(b.table, tau))
                       : multioutput_covariance(b.table, tau);
    }
    return K;
  }

  /// Diagonal correlation transform of the physical K^S(0).
  Eigen::VectorXd correlation_scale() const {
    Eigen::VectorXd c(dim_);
    for (const auto& b : blocks_) {
      c.segment(b.offset, b.order) = b.physical_scale;
      if (b.is_complex) c.segment(b.offset + b.order, b.order) = b.physical_scale;
    }
    return c;
  }

  /// C K^S(tau) C with the physical correlation transform.
  Eigen::MatrixXd transformed_covariance(double tau) const {
    const Eigen::VectorXd c = correlation_scale();
    return c.asDiagonal() * covariance(tau) * c.asDiagonal();
  }

  /// Filter state = filter_from_physical() * physical state.  Diagonal for
  /// real blocks; complex blocks also demodulate (C T^-1).
  Eigen::MatrixXd filter_from_physical() const {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      if (b.is_complex) {
        const Eigen::MatrixXcd m = b.scale.cast<Complex>().asDiagonal() *
                                   b.basis.triangularView<Eigen::Lower>().solve(
                                       Eigen::MatrixXcd::Identity(b.order, b.order));
        M.block(b.offset, b.offset, b.size, b.size) = embed_operator(m);
      } else {
        M.block(b.offset, b.offset, b.size, b.size) = b.scale.asDiagonal();
      }
    }
    return M;
  }

  Eigen::MatrixXd physical_from_filter() const {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      if (b.is_complex) {
        const Eigen::MatrixXcd m = b.basis * b.scale.cwiseInverse().cast<Complex>().asDiagonal();
        M.block(b.offset, b.offset, b.size, b.size) = embed_operator(m);
      } else {
        M.block(b.offset, b.offset, b.size, b.size) = b.scale.cwiseInverse().asDiagonal();
      }
    }
    return M;
  }

  /// cov(x(t + tau), x(t)) in filter coordinates.
  Eigen::MatrixXd filter_covariance(double tau) const {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      const Eigen::MatrixXd Kw = envelope_block(b, tau);
      if (b.is_complex) {
        const Complex rot = std::polar(1.0, b.component.spec.b * tau);
        K.block(b.offset, b.offset, b.size, b.size) =
            embed_operator(Eigen::MatrixXcd(rot * Kw.cast<Complex>()));
      } else {
        K.block(b.offset, b.offset, b.size, b.size) = Kw;
      }
    }
    return K;
  }

  /// P_inf in filter coordinates (unit diagonal).
  Eigen::MatrixXd stationary_covariance() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      P.block(b.offset, b.offset, b.order, b.order) = b.k0;
      if (b.is_complex) P.block(b.offset + b.order, b.offset + b.order, b.order, b.order) = b.k0;
    }
    return P;
  }

  Eigen::MatrixXd stationary_precision() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      P.block(b.offset, b.offset, b.order, b.order) = b.k0_inv;
      if (b.is_complex) {
        P.block(b.offset + b.order, b.offset + b.order, b.order, b.order) = b.k0_inv;
      }
    }
    return P;
  }

  /// A(delta) = K(delta) K(0)^-1, Q(delta) = K(0) - A K(delta)^H, in filter
  /// coordinates.  delta == 0 returns (I, 0) exactly.  A complex block is
  /// e^{jb delta} times its envelope transition, with the envelope noise.
  TransitionPair transition(double delta) const {
    if (!std::isfinite(delta) || delta < 0.0) {
      throw std::invalid_argument("transition: gap must be finite and >= 0");
    }
    TransitionPair tp{Eigen::MatrixXd::Identity(dim_, dim_),
                      Eigen::MatrixXd::Zero(dim_, dim_)};
    if (delta == 0.0) return tp;
    for (const auto& b : blocks_) {
      const Eigen::MatrixXd K = envelope_block(b, delta);
      const Eigen::MatrixXd Aw = K * b.k0_inv;
      const Eigen::MatrixXd Qw = hermitian_part(b.k0 - Aw * K.transpose());
      if (b.is_complex) {
        const Complex rot = std::polar(1.0, b.component.spec.b * delta);
        tp.A.block(b.offset, b.offset, b.size, b.size) =
            embed_operator(Eigen::MatrixXcd(rot * Aw.cast<Complex>()));
        tp.Q.block(b.offset, b.offset, b.order, b.order) = Qw;
        tp.Q.block(b.offset + b.order, b.offset + b.order, b.order, b.order) = Qw;
      } else {
        tp.A.block(b.offset, b.offset, b.size, b.size) = Aw;
        tp.Q.block(b.offset, b.offset, b.size, b.size) = Qw;
      }
    }
    return tp;
  }

  /// Generator F with exp(F tau) = A(tau): F = K'(0+) K(0)^-1, filter coords.
  Eigen::MatrixXd sde_generator() const {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      const Eigen::MatrixXd dK =
          b.scale.asDiagonal() *
          complex_multioutput_covariance_derivative(b.envelope, 0.0).real() *
          b.scale.asDiagonal();
      const Eigen::MatrixXd Fw = dK * b.k0_inv;
      if (b.is_complex) {
        Eigen::MatrixXcd Fz = Fw.cast<Complex>();
        Fz.diagonal().array() += Complex(0.0, b.component.spec.b);
        F.block(b.offset, b.offset, b.size, b.size) = embed_operator(Fz);
      } else {
        F.block(b.offset, b.offset, b.size, b.size) = Fw;
      }
    }
    return F;
  }

  /// Observation row in filter coordinates: one entry per block, at the
  /// block's first coordinate, weighted by 1 / C_00.
  SparseRow observation() const {
    SparseRow h;
    for (const auto& b : blocks_) {
      h.index.push_back(b.offset);
      h.weight.push_back(1.0 / b.scale(0));
    }
    return h;
  }

  /// Observation row extracting only component `i`.
  SparseRow component_observation(std::size_t i) const {
    const auto& b = blocks_.at(i);
    return SparseRow{{b.offset}, {1.0 / b.scale(0)}};
  }

  /// Observation row in physical coordinates.
  SparseRow physical_observation() const {
    SparseRow h;
    for (const auto& b : blocks_) {
      h.index.push_back(b.offset);
      h.weight.push_back(1.0);
    }
    return h;
  }

  /// Scalar kernel carried by the blocks; equals mixture_eval(tau).
  double implied_kernel(double tau) const {
    double total = 0.0;
    for (const auto& b : blocks_) {
      total += b.table.derivative(0).value(tau);
    }
    return total;
  }

 private:
  static Eigen::MatrixXd envelope_block(const Block& b, double tau) {
    if (tau == 0.0) return b.k0;  // P_inf is K^S(0) itself
    return b.scale.asDiagonal() * multioutput_covariance(b.envelope, tau) *
           b.scale.asDiagonal();
  }

  std::vector<Block> blocks_;
  int dim_ = 0;
  double obs_noise_ = 1.0;
};

inline StateSpaceModel assemble_mixture(const MixtureSpec& mix, double obs_noise) {
  return StateSpaceModel::assemble(mix, obs_noise);
}

/// Scale applied to the complex block covariance so that Re{h^T z} carries
/// exactly k(tau).  For a circular complex process var(Re z) = |z|^2 / 2, so
/// the factor is 2; the embedded block is checked against eval_kernel.
inline double complex_block_calibration(const HidaMaternSpec& spec) {
  validate(spec);
  if (!(spec.b > 0.0)) {
    throw std::invalid_argument("complex_block_calibration: requires b > 0");
  }
  constexpr double kCalibration = 2.0;
  const auto model = StateSpaceModel::assemble({{{1.0, spec}}}, 1.0);
  const auto& blk = model.blocks().front();
  for (double tau : {0.0, 0.13 / spec.a, 0.7 / spec.a, 2.1 / spec.a}) {
    // covariance of Re z_0 before the calibration is folded in is Re K_z / 2
    const double half = 0.5 * complex_multioutput_covariance(blk.table, tau)(0, 0).real();
    const double embedded = model.covariance(tau)(0, 0);
    const double expected = eval_kernel(spec, tau);
    const double tol = 1e-10 * spec.sigma2;
    if (std::abs(kCalibration * half - expected) > tol ||
        std::abs(embedded - expected) > tol) {
      throw std::runtime_error("complex_block_calibration: calibration check failed");
    }
  }
  return kCalibration;
}

/// Model in coordinates g = X x (x physical), observed through H.
class LinearTransformedModel {
 public:
  LinearTransformedModel(StateSpaceModel base, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& H)
      : base_(std::move(base)), X_(X), H_(H) {
    const int n = base_.state_dim();
    if (X.rows() != n || X.cols() != n) {
      throw std::invalid_argument("transform_linear: X must be square of state dimension");
    }
    if (H.cols() != n || H.rows() < 1) {
      throw std::invalid_argument("transform_linear: H must have state-dimension columns");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(X);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
      throw std::invalid_argument("transform_linear: X is singular");
    }
    X_inv_ = lu.inverse();
    // x_filter = M x  =>  g = X M^-1 x_filter
    to_g_ = X_ * base_.physical_from_filter();
    from_g_ = base_.filter_from_physical() * X_inv_;
  }

  int state_dim() const { return base_.state_dim(); }
  int output_dim() const { return static_cast<int>(H_.rows()); }
  double obs_noise() const { return base_.obs_noise(); }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& H() const { return H_; }

  TransitionPair transition(double delta) const {
    const auto tp = base_.transition(delta);
    if (delta == 0.0) return tp;
    return {to_g_ * tp.A * from_g_, hermitian_part(to_g_ * tp.Q * to_g_.transpose())};
  }

  Eigen::MatrixXd stationary_covariance() const {
    return hermitian_part(X_ * base_.covariance(0.0) * X_.transpose());
  }

  /// Scalar observation row; only defined for single-output models.
  SparseRow observation() const {
    if (H_.rows() != 1) {
      throw std::logic_error("observation(): filtering needs a single output row");
    }
    SparseRow h;
    for (int j = 0; j < H_.cols(); ++j) {
      if (H_(0, j) != 0.0) {
        h.index.push_back(j);
        h.weight.push_back(H_(0, j));
      }
    }
    return h;
  }

  /// cov(y(t + tau), y(t)) without observation noise, D x D.
  Eigen::MatrixXd output_covariance(double tau) const {
    return H_ * X_ * base_.covariance(tau) * X_.transpose() * H_.transpose();
  }

 private:
  StateSpaceModel base_;
  Eigen::MatrixXd X_;
  Eigen::MatrixXd X_inv_;
  Eigen::MatrixXd H_;
  Eigen::MatrixXd to_g_;
  Eigen::MatrixXd from_g_;
};

inline LinearTransformedModel transform_linear(const StateSpaceModel& model,
                                               const Eigen::MatrixXd& X,
                                               const Eigen::MatrixXd& H) {
  return LinearTransformedModel(model, X, H);
}

/// One-step marginalised transition of the leading `keep` state coordinates.
struct NaiveTransition {
  Eigen::MatrixXd Lambda;
  Eigen::MatrixXd Sigma;
};

namespace detail {

inline void check_keep(const StateSpaceModel& model, int keep) {
  if (keep < 1 || keep > model.state_dim()) {
    throw std::out_of_range("marginalize_naive: keep dimension out of range");
  }
}

}  // namespace detail

/// Marginalises g(t_k) out of p(z(t_{k+1}) | z(t_k), g(t_k)) p(g(t_k) | z(t_k)),
/// with the full transition partitioned into (z, g) blocks (physical coords):
///   Lambda = A00 + A01 K01(0)^T K00(0)^-1
///   Sigma  = Q00 + A01 (K11 - K01^T K00^-1 K01)(0) A01^T
inline NaiveTransition marginalize_naive(const StateSpaceModel& model, double delta,
                                         int keep) {
  detail::check_keep(model, keep);
  const int n = model.state_dim();
  if (delta == 0.0) {
    return {Eigen::MatrixXd::Identity(keep, keep), Eigen::MatrixXd::Zero(keep, keep)};
  }
  const Eigen::MatrixXd K0 = model.covariance(0.0);
  const Eigen::MatrixXd Kd = model.covariance(delta);
  const Eigen::LDLT<Eigen::MatrixXd> k0_ldlt(K0);
  const Eigen::MatrixXd A = k0_ldlt.solve(Kd.transpose()).transpose();
  const Eigen::MatrixXd Q = hermitian_part(K0 - A * Kd.transpose());
  if (keep == n) return {A, Q};
  const int rest = n - keep;
  const auto K00 = K0.topLeftCorner(keep, keep);
  const auto K01 = K0.topRightCorner(keep, rest);
  const auto K11 = K0.bottomRightCorner(rest, rest);
  const Eigen::LDLT<Eigen::MatrixXd> k00_ldlt(K00);
  // E[g | z] = K01^T K00^-1 z, cov[g | z] = K11 - K01^T K00^-1 K01
  const Eigen::MatrixXd regress = k00_ldlt.solve(K01).transpose();
  const Eigen::MatrixXd M = K11 - K01.transpose() * k00_ldlt.solve(K01);
  const auto A00 = A.topLeftCorner(keep, keep);
  const auto A01 = A.topRightCorner(keep, rest);
  NaiveTransition out;
  out.Lambda = A00 + A01 * regress;
  out.Sigma = hermitian_part(Q.topLeftCorner(keep, keep) + A01 * M * A01.transpose());
  return out;
}

/// The same quantities from the K^S_00 block alone:
///   Lambda = K00(delta) K00(0)^-1,  Sigma = K00(0) - K00(delta) K00(0)^-1 K00(delta)^T
inline NaiveTransition naive_block_transition(const StateSpaceModel& model, double delta,
                                              int keep) {
  detail::check_keep(model, keep);
  if (delta == 0.0) {
    return {Eigen::MatrixXd::Identity(keep, keep), Eigen::MatrixXd::Zero(keep, keep)};
  }
  const Eigen::MatrixXd K00 = model.covariance(0.0).topLeftCorner(keep, keep);
  const Eigen::MatrixXd Kd = model.covariance(delta).topLeftCorner(keep, keep);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(K00);
  const Eigen::MatrixXd Lambda = ldlt.solve(Kd.transpose()).transpose();
  return {Lambda, hermitian_part(K00 - Lambda * Kd.transpose())};
}

}  // namespace hidamatern

#endif  // HIDAMATERN_STATE_SPACE_HPP
