#include "tankmpc/qp.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tankmpc/units.hpp"

namespace tankmpc {

double QpProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(p_diag.cwiseProduct(x)) + q.dot(x);
}

void QpProblem::validate() const {
  const Eigen::Index n = q.size();
  if (p_diag.size() != n) throw InputError("QP: quadratic diagonal length mismatch");
  if ((p_diag.array() < 0.0).any()) throw InputError("QP: quadratic term must be PSD");
  if (a_eq.cols() != n || g_in.cols() != n) throw InputError("QP: constraint column count mismatch");
  if (a_eq.rows() != b_eq.size() || g_in.rows() != h_in.size()) {
    throw InputError("QP: constraint row count mismatch");
  }
  if (!q.allFinite() || !b_eq.allFinite() || !h_in.allFinite()) throw InputError("QP: non-finite data");
}

QpBuilder::QpBuilder(Eigen::Index num_vars)
    : n_(num_vars), p_diag_(Eigen::VectorXd::Zero(num_vars)), q_(Eigen::VectorXd::Zero(num_vars)) {}

Eigen::Index QpBuilder::add_equality(std::initializer_list<std::pair<Eigen::Index, double>> row,
                                     double rhs) {
  return add_equality(std::vector<std::pair<Eigen::Index, double>>(row), rhs);
}

Eigen::Index QpBuilder::add_equality(const std::vector<std::pair<Eigen::Index, double>>& row,
                                     double rhs) {
  const auto r = static_cast<Eigen::Index>(b_.size());
  for (const auto& [c, v] : row) a_.emplace_back(r, c, v);
  b_.push_back(rhs);
  return r;
}

Eigen::Index QpBuilder::add_inequality(std::initializer_list<std::pair<Eigen::Index, double>> row,
                                       double rhs) {
  return add_inequality(std::vector<std::pair<Eigen::Index, double>>(row), rhs);
}

Eigen::Index QpBuilder::add_inequality(const std::vector<std::pair<Eigen::Index, double>>& row,
                                       double rhs) {
  const auto r = static_cast<Eigen::Index>(h_.size());
  for (const auto& [c, v] : row) g_.emplace_back(r, c, v);
  h_.push_back(rhs);
  return r;
}

QpProblem QpBuilder::build() const {
  QpProblem p;
  p.p_diag = p_diag_;
  p.q = q_;
  p.a_eq.resize(static_cast<Eigen::Index>(b_.size()), n_);
  p.a_eq.setFromTriplets(a_.begin(), a_.end());
  p.b_eq = Eigen::Map<const Eigen::VectorXd>(b_.data(), static_cast<Eigen::Index>(b_.size()));
  p.g_in.resize(static_cast<Eigen::Index>(h_.size()), n_);
  p.g_in.setFromTriplets(g_.begin(), g_.end());
  p.h_in = Eigen::Map<const Eigen::VectorXd>(h_.data(), static_cast<Eigen::Index>(h_.size()));
  return p;
}

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal:
      return "optimal";
    case QpStatus::max_iterations:
      return "max-iterations";
    case QpStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Largest alpha in (0, 1] keeping v + alpha*dv > 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

class InteriorPoint {
 public:
  InteriorPoint(const QpProblem& qp, const QpSettings& settings)
      : qp_(qp), settings_(settings), n_(qp.num_vars()), p_(qp.a_eq.rows()), m_(qp.g_in.rows()) {
    gt_ = qp_.g_in.transpose();
    at_ = qp_.a_eq.transpose();
  }

  QpSolution run(const QpWarmStart* warm) {
    const auto t0 = std::chrono::steady_clock::now();
    QpSolution sol;
    if (!initialize(warm)) {
      sol.status = QpStatus::infeasible;
      fill(sol, t0);
      return sol;
    }
    Residuals r = residuals(x_, y_, z_, s_);
    double merit = r.merit();
    sol.merit_history.push_back(merit);

    int iter = 0;
    for (; iter < settings_.max_iter; ++iter) {
      if (converged()) {
        sol.status = QpStatus::optimal;
        break;
      }
      if (!factorize()) {
        sol.status = QpStatus::infeasible;
        break;
      }
      const double mu = m_ > 0 ? s_.dot(z_) / static_cast<double>(m_) : 0.0;

      // Predictor.
      Eigen::VectorXd rc = s_.cwiseProduct(z_);
      Direction aff = direction(r, rc);
      const double a_aff = std::min(max_step(s_, aff.ds), max_step(z_, aff.dz));
      double sigma = 0.0;
      if (m_ > 0) {
        const double mu_aff =
            (s_ + a_aff * aff.ds).dot(z_ + a_aff * aff.dz) / static_cast<double>(m_);
        sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
      }

      // Corrector, falling back to the plain centred direction if the
      // combined step cannot reduce the merit.
      Eigen::VectorXd rc_corr = rc + aff.ds.cwiseProduct(aff.dz);
      rc_corr.array() -= sigma * mu;
      Direction d = direction(r, rc_corr);
      bool accepted = try_step(d, merit, r);
      if (!accepted) {
        Eigen::VectorXd rc_cent = rc;
        rc_cent.array() -= std::max(sigma, 0.1) * mu;
        d = direction(r, rc_cent);
        accepted = try_step(d, merit, r);
      }
      if (!accepted) {
        // Stalled at numerical precision.
        sol.status = QpStatus::max_iterations;
        break;
      }
      merit = r.merit();
      sol.merit_history.push_back(merit);
      if (!x_.allFinite() || inf_norm(x_) > 1e12) {
        sol.status = QpStatus::infeasible;
        break;
      }
    }
    if (iter == settings_.max_iter && converged()) sol.status = QpStatus::optimal;
    sol.iterations = iter;
    fill(sol, t0);
    return sol;
  }

 private:
  struct Residuals {
    Eigen::VectorXd dual, eq, in;
    double mu = 0.0;
    double merit() const { return std::max({inf_norm(dual), inf_norm(eq), inf_norm(in), mu}); }
  };
  struct Direction {
    Eigen::VectorXd dx, dy, dz, ds;
  };

  Residuals residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& s) const {
    Residuals r;
    r.dual = qp_.p_diag.cwiseProduct(x) + qp_.q + at_ * y + gt_ * z;
    r.eq = qp_.a_eq * x - qp_.b_eq;
    r.in = qp_.g_in * x + s - qp_.h_in;
    r.mu = m_ > 0 ? s.dot(z) / static_cast<double>(m_) : 0.0;
    return r;
  }

  bool initialize(const QpWarmStart* warm) {
    y_ = Eigen::VectorXd::Zero(p_);
    z_ = Eigen::VectorXd::Ones(m_);
    s_ = Eigen::VectorXd::Ones(m_);
    if (warm != nullptr && warm->x.size() == n_) {
      constexpr double push = 1e-2;
      x_ = warm->x;
      if (warm->y.size() == p_) y_ = warm->y;
      Eigen::VectorXd gap = qp_.h_in - qp_.g_in * x_;
      s_ = gap.cwiseMax(push);
      if (warm->z.size() == m_) z_ = warm->z.cwiseMax(push);
      else z_.setConstant(push);
      return true;
    }
    // Least-squares start: treat the inequalities as soft equalities.
    z_.setOnes();
    s_.setOnes();
    if (!factorize()) return false;
    Eigen::VectorXd rhs(n_ + p_);
    rhs << -qp_.q + gt_ * qp_.h_in, qp_.b_eq;
    Eigen::VectorXd sol = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success || !sol.allFinite()) return false;
    x_ = sol.head(n_);
    Eigen::VectorXd gap = qp_.h_in - qp_.g_in * x_;
    s_ = gap.cwiseMax(1.0);
    z_.setOnes();
    return true;
  }

  // Reduced KKT  [P + G'WG  A'; A  0]  with W = Z S^-1.
  bool factorize() {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n_ + 2 * qp_.a_eq.nonZeros() + 4 * qp_.g_in.nonZeros()));
    for (Eigen::Index i = 0; i < n_; ++i) trip.emplace_back(i, i, qp_.p_diag(i));
    const Eigen::VectorXd w = z_.cwiseQuotient(s_);
    SparseMatrix gwg = gt_ * w.asDiagonal() * qp_.g_in;
    for (Eigen::Index k = 0; k < gwg.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(gwg, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    }
    for (Eigen::Index k = 0; k < qp_.a_eq.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(qp_.a_eq, k); it; ++it) {
        trip.emplace_back(n_ + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    }
    for (Eigen::Index i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, 0.0);
    kkt_.resize(n_ + p_, n_ + p_);
    kkt_.setFromTriplets(trip.begin(), trip.end());
    kkt_.makeCompressed();
    if (!analysed_ || kkt_.nonZeros() != pattern_nnz_) {
      lu_.analyzePattern(kkt_);
      analysed_ = true;
      pattern_nnz_ = kkt_.nonZeros();
    }
    lu_.factorize(kkt_);
    return lu_.info() == Eigen::Success;
  }

  Direction direction(const Residuals& r, const Eigen::VectorXd& rc) const {
    Direction d;
    const Eigen::VectorXd t = (rc - z_.cwiseProduct(r.in)).cwiseQuotient(s_);
    Eigen::VectorXd rhs(n_ + p_);
    rhs << -r.dual + gt_ * t, -r.eq;
    Eigen::VectorXd sol = lu_.solve(rhs);
    // One step of iterative refinement.
    Eigen::VectorXd res = rhs - kkt_ * sol;
    sol += lu_.solve(res);
    d.dx = sol.head(n_);
    d.dy = sol.tail(p_);
    const Eigen::VectorXd gdx = qp_.g_in * d.dx;
    d.dz = (-rc + z_.cwiseProduct(r.in) + z_.cwiseProduct(gdx)).cwiseQuotient(s_);
    d.ds = -r.in - gdx;
    return d;
  }

  bool try_step(const Direction& d, double merit, Residuals& r_out) {
    double alpha = std::min(1.0, 0.99 * std::min(max_step(s_, d.ds), max_step(z_, d.dz)));
    for (int k = 0; k < 30; ++k, alpha *= 0.5) {
      Eigen::VectorXd x = x_ + alpha * d.dx;
      Eigen::VectorXd y = y_ + alpha * d.dy;
      Eigen::VectorXd z = z_ + alpha * d.dz;
      Eigen::VectorXd s = s_ + alpha * d.ds;
      Residuals r = residuals(x, y, z, s);
      if (r.merit() <= merit) {
        x_ = std::move(x);
        y_ = std::move(y);
        z_ = std::move(z);
        s_ = std::move(s);
        r_out = std::move(r);
        return true;
      }
    }
    return false;
  }

  void measures(double& primal, double& dual, double& comp) const {
    const Eigen::VectorXd gap = qp_.h_in - qp_.g_in * x_;
    primal = std::max(inf_norm(qp_.a_eq * x_ - qp_.b_eq), m_ > 0 ? std::max(0.0, -gap.minCoeff()) : 0.0);
    dual = inf_norm(qp_.p_diag.cwiseProduct(x_) + qp_.q + at_ * y_ + gt_ * z_);
    comp = m_ > 0 ? z_.cwiseProduct(gap.cwiseAbs()).maxCoeff() : 0.0;
  }

  bool converged() const {
    double primal, dual, comp;
    measures(primal, dual, comp);
    return primal <= settings_.tol && dual <= settings_.tol && comp <= settings_.tol;
  }

  void fill(QpSolution& sol, std::chrono::steady_clock::time_point t0) const {
    if (x_.size() == n_) {
      sol.x = x_;
      sol.y = y_;
      sol.z = z_;
      sol.objective = qp_.objective(x_);
      measures(sol.primal_residual, sol.dual_residual, sol.complementarity);
    }
    sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const QpProblem& qp_;
  QpSettings settings_;
  Eigen::Index n_, p_, m_;
  SparseMatrix gt_, at_, kkt_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool analysed_ = false;
  Eigen::Index pattern_nnz_ = 0;
  Eigen::VectorXd x_, y_, z_, s_;
};

}  // namespace

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings, const QpWarmStart* warm) {
  problem.validate();
  InteriorPoint ipm(problem, settings);
  return ipm.run(warm);
}

void write_qp(const QpProblem& p, std::ostream& os) {
  os.precision(17);
  os << "tankmpc-qp 1\n";
  os << "dims " << p.num_vars() << ' ' << p.a_eq.rows() << ' ' << p.g_in.rows() << '\n';
  for (Eigen::Index i = 0; i < p.num_vars(); ++i) {
    if (p.p_diag(i) != 0.0) os << "P " << i << ' ' << p.p_diag(i) << '\n';
  }
  for (Eigen::Index i = 0; i < p.num_vars(); ++i) {
    if (p.q(i) != 0.0) os << "q " << i << ' ' << p.q(i) << '\n';
  }
  auto dump_matrix = [&os](const char* tag, const SparseMatrix& m) {
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        if (it.value() != 0.0) os << tag << ' ' << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
      }
    }
  };
  dump_matrix("A", p.a_eq);
  for (Eigen::Index i = 0; i < p.b_eq.size(); ++i) {
    if (p.b_eq(i) != 0.0) os << "b " << i << ' ' << p.b_eq(i) << '\n';
  }
  dump_matrix("G", p.g_in);
  for (Eigen::Index i = 0; i < p.h_in.size(); ++i) {
    if (p.h_in(i) != 0.0) os << "h " << i << ' ' << p.h_in(i) << '\n';
  }
}

QpProblem read_qp(std::istream& is) {
  std::string line, tag;
  std::getline(is, line);
  if (line.rfind("tankmpc-qp 1", 0) != 0) throw InputError("not a tankmpc-qp dump");
  Eigen::Index n = 0, neq = 0, nin = 0;
  std::vector<Eigen::Triplet<double>> a, g;
  QpProblem p;
  bool dims = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls >> tag;
    if (tag == "dims") {
      ls >> n >> neq >> nin;
      p.p_diag = Eigen::VectorXd::Zero(n);
      p.q = Eigen::VectorXd::Zero(n);
      p.b_eq = Eigen::VectorXd::Zero(neq);
      p.h_in = Eigen::VectorXd::Zero(nin);
      dims = true;
      continue;
    }
    if (!dims) throw InputError("qp dump: entries before dims line");
    Eigen::Index i = 0, j = 0;
    double v = 0.0;
    if (tag == "A" || tag == "G") {
      ls >> i >> j >> v;
      (tag == "A" ? a : g).emplace_back(i, j, v);
    } else {
      ls >> i >> v;
      if (tag == "P") p.p_diag(i) = v;
      else if (tag == "q") p.q(i) = v;
      else if (tag == "b") p.b_eq(i) = v;
      else if (tag == "h") p.h_in(i) = v;
      else throw InputError("qp dump: unknown tag '" + tag + "'");
    }
    if (!ls) throw InputError("qp dump: malformed line '" + line + "'");
  }
  p.a_eq.resize(neq, n);
  p.a_eq.setFromTriplets(a.begin(), a.end());
  p.g_in.resize(nin, n);
  p.g_in.setFromTriplets(g.begin(), g.end());
  p.validate();
  return p;
}

}  // namespace tankmpc
