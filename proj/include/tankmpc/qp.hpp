#pragma once

#include <Eigen/Sparse>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tankmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// minimize 1/2 x'diag(p)x + q'x  subject to  A x = b,  G x <= h.
struct QpProblem {
  Eigen::VectorXd p_diag;  // must be >= 0
  Eigen::VectorXd q;
  SparseMatrix a_eq;
  Eigen::VectorXd b_eq;
  SparseMatrix g_in;
  Eigen::VectorXd h_in;

  Eigen::Index num_vars() const { return q.size(); }
  double objective(const Eigen::VectorXd& x) const;
  void validate() const;
};

/// Row-by-row assembly of a QpProblem from sparse entries.
class QpBuilder {
 public:
  explicit QpBuilder(Eigen::Index num_vars);

  void set_quadratic(Eigen::Index var, double p) { p_diag_(var) = p; }
  void set_linear(Eigen::Index var, double q) { q_(var) = q; }
  Eigen::Index add_equality(std::initializer_list<std::pair<Eigen::Index, double>> row, double rhs);
  Eigen::Index add_equality(const std::vector<std::pair<Eigen::Index, double>>& row, double rhs);
  Eigen::Index add_inequality(std::initializer_list<std::pair<Eigen::Index, double>> row, double rhs);
  Eigen::Index add_inequality(const std::vector<std::pair<Eigen::Index, double>>& row, double rhs);

  QpProblem build() const;

 private:
  Eigen::Index n_;
  Eigen::VectorXd p_diag_;
  Eigen::VectorXd q_;
  std::vector<Eigen::Triplet<double>> a_, g_;
  std::vector<double> b_, h_;
};

enum class QpStatus { optimal, max_iterations, infeasible };
std::string to_string(QpStatus s);

struct QpSettings {
  double tol = 1e-6;
  int max_iter = 5000;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // inequality multipliers (>= 0)
  double objective = 0.0;
  QpStatus status = QpStatus::max_iterations;
  double primal_residual = 0.0;   // max(|Ax-b|_inf, |(Gx-h)+|_inf)
  double dual_residual = 0.0;     // |Px + q + A'y + G'z|_inf
  double complementarity = 0.0;   // max_i z_i |h_i - G_i x|
  int iterations = 0;
  double solve_time = 0.0;  // s, wall clock; reporting only
  std::vector<double> merit_history;
};

/// Starting point from a previous solve; the slacks are recomputed and pushed
/// into the interior.
struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
};

/// Primal-dual interior point (Mehrotra predictor-corrector) on the reduced
/// KKT system, factorized with a sparse LU whose pattern is analysed once.
/// Steps are backtracked so the merit max(|r_eq|, |r_in|, |r_dual|, mu) never
/// increases. Deterministic: no time-based stopping.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                    const QpWarmStart* warm = nullptr);

/// Plain-text sparse dump, one entry per line:
///   tankmpc-qp 1
///   dims <n> <n_eq> <n_in>
///   P <i> <v> | q <i> <v> | A <r> <c> <v> | b <r> <v> | G <r> <c> <v> | h <r> <v>
/// Indices are 0-based; zero entries are omitted.
void write_qp(const QpProblem& problem, std::ostream& os);
QpProblem read_qp(std::istream& is);

}  // namespace tankmpc
