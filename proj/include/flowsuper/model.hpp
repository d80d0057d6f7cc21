#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowsuper/rng.hpp"

namespace flowsuper {

enum class FieldKind { Constant, Affine, BoundedSmooth, Step };

/// Scalar profile used by each entry of a bounded-smooth or step field.
enum class Profile { Sine, Tanh, NormalCdf, Indicator };

/// One entry of a non-affine field:
///   amplitude * profile((omega . x + phase) / width) + offset
/// The width divides the argument only for NormalCdf (a mollified step).
struct EntryFunction {
  Profile profile = Profile::Sine;
  double amplitude = 0.0;
  Eigen::VectorXd omega;
  double phase = 0.0;
  double offset = 0.0;
  double width = 1.0;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double sup_norm() const;
  double lipschitz() const;
};

/// A coefficient x -> R^{rows x cols} from the closed family used by the
/// simulator. Affine fields map x to A x + v and have cols == 1.
class CoefficientField {
 public:
  CoefficientField() = default;

  static CoefficientField constant(Eigen::MatrixXd value);
  static CoefficientField scalar(double value) {
    return constant(Eigen::MatrixXd::Constant(1, 1, value));
  }
  static CoefficientField affine(Eigen::MatrixXd a, Eigen::VectorXd v);
  /// Entries in row-major order; every profile must be Sine, Tanh or NormalCdf.
  static CoefficientField bounded_smooth(int rows, int cols, std::vector<EntryFunction> entries);
  /// Entries in row-major order; Indicator profiles allowed (bounded measurable).
  static CoefficientField step(int rows, int cols, std::vector<EntryFunction> entries);

  FieldKind kind() const noexcept { return kind_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  /// Input dimension the field was declared for; 0 for constants.
  int input_dim() const noexcept;

  void evaluate_into(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const;
  Eigen::MatrixXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Fast path for 1x1 fields.
  double scalar_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  const Eigen::MatrixXd& constant_value() const noexcept { return constant_; }
  const Eigen::MatrixXd& affine_matrix() const noexcept { return a_; }
  const Eigen::VectorXd& affine_offset() const noexcept { return v_; }
  const std::vector<EntryFunction>& entries() const noexcept { return entries_; }

  /// Analytic sup-norm bound over R^d; nullopt when unbounded (affine with A != 0).
  std::optional<double> analytic_bound() const;
  /// Analytic Lipschitz constant (Frobenius sense); nullopt for step fields.
  std::optional<double> analytic_lipschitz() const;

  bool is_constant() const noexcept { return kind_ == FieldKind::Constant; }

  double declared_lipschitz = 0.0;
  std::optional<double> declared_bound;  // nullopt means "unbounded"

 private:
  FieldKind kind_ = FieldKind::Constant;
  int rows_ = 0;
  int cols_ = 0;
  Eigen::MatrixXd constant_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd v_;
  std::vector<EntryFunction> entries_;
};

struct ModelSpec {
  int d = 1;
  int m = 1;
  CoefficientField b;
  CoefficientField e;
  CoefficientField c;
  CoefficientField gamma;
  CoefficientField sigma;
  double gamma_bound = 0.0;
  double sigma_bound = 0.0;
  /// Uniform ellipticity of the pair diffusion is assumed by the caller and never checked.
  bool ellipticity_assumed = true;
};

/// A ModelSpec whose shapes and bounds were checked by validate_model.
class ValidatedModel {
 public:
  const ModelSpec& spec() const noexcept { return spec_; }
  int d() const noexcept { return spec_.d; }
  int m() const noexcept { return spec_.m; }

  double gamma(const Eigen::Ref<const Eigen::VectorXd>& x) const { return spec_.gamma.scalar_at(x); }
  double sigma(const Eigen::Ref<const Eigen::VectorXd>& x) const { return spec_.sigma.scalar_at(x); }

  /// b affine (or constant) with e and c constant: the N-particle system is Gaussian.
  bool is_affine() const noexcept;
  bool has_constant_branching() const noexcept {
    return spec_.gamma.is_constant() && spec_.sigma.is_constant();
  }

 private:
  friend ValidatedModel validate_model(ModelSpec spec);
  explicit ValidatedModel(ModelSpec spec) : spec_(std::move(spec)) {}
  ModelSpec spec_;
};

/// Probe points used for bound checks: a symmetric grid on [-5, 5]^d (capped
/// at 4096 points) plus a few far-field points.
std::vector<Eigen::VectorXd> probe_grid(int d);

ValidatedModel validate_model(ModelSpec spec);

struct OffspringLaw {
  std::vector<int> support;   // ascending
  std::vector<double> probs;  // same length as support
  double target_mean = 0.0;
  double target_variance = 0.0;

  double mean() const;
  double variance() const;
  double moment(int p) const;
};

/// Smallest variance any nonnegative-integer law with this mean can have.
double lattice_min_variance(double mean);

/// Three-point law on {0, 1, K} with the given mean and variance; K is the
/// smallest integer >= 2 keeping all probabilities in [0, 1].
OffspringLaw offspring_law(double mean, double variance);

/// Ascending inverse-CDF draw: smallest support point whose cumulative mass exceeds u.
int sample_offspring(const OffspringLaw& law, double u);
int sample_offspring(const OffspringLaw& law, RandomStream& rng);

/// Gaussian-kernel mollification with standard deviation width. Supports
/// constant, sine and step fields; other kinds throw Unsupported.
CoefficientField mollify(const CoefficientField& field, double width);

}  // namespace flowsuper
