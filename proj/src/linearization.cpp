#include "gridcharge/linearization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gridcharge {

namespace {

template <class F>
Mat fd_jacobian(F&& fun, const Vec& z, Eigen::Index rows) {
  Mat J(rows, z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double h = std::max(1e-7, 1e-7 * std::abs(z(i)));
    Vec zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    J.col(i) = (fun(zp) - fun(zm)) / (2.0 * h);
  }
  return J;
}

constexpr int kSlow[7] = {kIgd, kIgq, kIcd, kIcq, kVcd, kVcq, kVdc};

}  // namespace

Jacobians jacobians(const GridModel& g, const OperatingPoint& op) {
  StateLayout lay(g);
  const Vec u0 = Vec::Zero(lay.nu());
  Jacobians J;
  J.fx = fd_jacobian([&](const Vec& x) { return f_rhs(g, x, op.y, u0, op.alpha, false); }, op.x, lay.nx());
  J.fy = fd_jacobian([&](const Vec& y) { return f_rhs(g, op.x, y, u0, op.alpha, false); }, op.y, lay.nx());
  J.fu = fd_jacobian([&](const Vec& u) { return f_rhs(g, op.x, op.y, u, op.alpha, false); }, u0, lay.nx());
  J.gx = fd_jacobian([&](const Vec& x) { return algebraic_residual(g, x, op.y); }, op.x, lay.ny());
  J.gy = fd_jacobian([&](const Vec& y) { return algebraic_residual(g, op.x, y); }, op.y, lay.ny());
  return J;
}

FullLinearModel eliminate_algebraic(const Mat& fx, const Mat& fy, const Mat& fu, const Mat& gx, const Mat& gy) {
  if (gy.rows() != gy.cols() || fy.cols() != gy.rows() || gx.rows() != gy.rows() || gx.cols() != fx.cols())
    throw Error(Errc::InvalidArgument, "eliminate_algebraic: dimension mismatch");
  FullLinearModel m;
  if (gy.rows() == 0) {
    m.A = fx;
    m.B = fu;
    return m;
  }
  Eigen::PartialPivLU<Mat> lu(gy);
  if (!(lu.rcond() > 1e-14)) throw Error(Errc::Singular, "algebraic degeneracy: g_y is singular");
  m.A = fx - fy * lu.solve(gx);
  m.B = fu;
  return m;
}

FullLinearModel linearize(const GridModel& g, const OperatingPoint& op) {
  StateLayout lay(g);
  const Vec u0 = Vec::Zero(lay.nu());
  for (int k = 0; k < lay.p; ++k) {
    DutyCycles dc = duty_cycles(g, op.x, op.y, u0, k);
    if (std::abs(dc.md_raw) >= 1.0 || std::abs(dc.mq_raw) >= 1.0)
      throw Error(Errc::Saturated, "saturated equilibrium at EVCS bus " + std::to_string(g.evcs[k].bus));
  }
  Jacobians J = jacobians(g, op);
  FullLinearModel m = eliminate_algebraic(J.fx, J.fy, J.fu, J.gx, J.gy);
  m.alpha = op.alpha;
  return m;
}

std::vector<int> slow_indices(const StateLayout& lay) {
  std::vector<int> s;
  for (int k = 0; k < lay.p; ++k)
    for (int i : kSlow) s.push_back(lay.evcs(k, i));
  return s;
}

Mat selection_matrix(const StateLayout& lay) {
  std::vector<int> s = slow_indices(lay);
  Mat P = Mat::Zero(static_cast<Eigen::Index>(s.size()), lay.nx());
  for (size_t r = 0; r < s.size(); ++r) P(static_cast<Eigen::Index>(r), s[r]) = 1.0;
  return P;
}

Vec default_x0(int p) {
  Vec x0 = Vec::Zero(7 * p);
  for (int k = 0; k < p; ++k) x0(7 * k + 6) = 1.0;
  return x0;
}

void reduce_generic(const Mat& A, const Mat& B, const std::vector<int>& slow, const std::vector<int>& fast, Mat& Ar,
                    Mat& Br) {
  const Eigen::Index ns = static_cast<Eigen::Index>(slow.size()), nf = static_cast<Eigen::Index>(fast.size());
  auto pick = [](const Mat& M, const std::vector<int>& r, const std::vector<int>& c) {
    Mat out(r.size(), c.size());
    for (size_t i = 0; i < r.size(); ++i)
      for (size_t j = 0; j < c.size(); ++j) out(i, j) = M(r[i], c[j]);
    return out;
  };
  auto rows = [](const Mat& M, const std::vector<int>& r) {
    Mat out(r.size(), M.cols());
    for (size_t i = 0; i < r.size(); ++i) out.row(i) = M.row(r[i]);
    return out;
  };
  Mat Ass = pick(A, slow, slow);
  Mat Bs = rows(B, slow);
  if (nf == 0) {
    Ar = Ass;
    Br = Bs;
    return;
  }
  Mat Asf = pick(A, slow, fast), Afs = pick(A, fast, slow), Aff = pick(A, fast, fast);
  Mat Bf = rows(B, fast);
  Eigen::PartialPivLU<Mat> lu(Aff);
  if (!(lu.rcond() > 1e-12)) throw Error(Errc::Singular, "non-separable timescales: fast block is singular");
  Mat rhs(nf, ns + B.cols());
  rhs << Afs, Bf;
  Mat X = lu.solve(rhs);
  Ar = Ass - Asf * X.leftCols(ns);
  Br = Bs - Asf * X.rightCols(B.cols());
  (void)ns;
}

ReducedLinearModel reduce_model(const FullLinearModel& full, const GridModel& g, const Vec& x0, const Mat& Q,
                                const Mat& R, Reduction policy) {
  StateLayout lay(g);
  if (full.A.rows() != lay.nx() || full.B.cols() != lay.nu())
    throw Error(Errc::InvalidArgument, "reduce_model: model does not match the grid layout");
  std::vector<int> slow = slow_indices(lay);
  std::vector<int> fast;
  for (int k = 0; k < lay.p; ++k) {
    fast.push_back(lay.evcs(k, kDelta));
    fast.push_back(lay.evcs(k, kZeta));
    if (policy == Reduction::Strict) {
      fast.push_back(lay.evcs(k, kPsi));
      fast.push_back(lay.evcs(k, kChid));
      fast.push_back(lay.evcs(k, kChiq));
    }
  }
  for (int j = 0; j < lay.n - 1; ++j) {
    fast.push_back(lay.line(j, 0));
    fast.push_back(lay.line(j, 1));
  }
  ReducedLinearModel r;
  reduce_generic(full.A, full.B, slow, fast, r.A, r.B);
  r.P = selection_matrix(lay);
  const int ns = 7 * lay.p, nu = lay.nu();
  r.x0 = x0.size() ? x0 : default_x0(lay.p);
  r.Q = Q.size() ? Q : Mat::Identity(ns, ns);
  r.R = R.size() ? R : Mat(0.1 * Mat::Identity(nu, nu));
  if (r.x0.size() != ns || r.Q.rows() != ns || r.Q.cols() != ns || r.R.rows() != nu || r.R.cols() != nu)
    throw Error(Errc::InvalidArgument, "reduce_model: x0/Q/R dimensions do not match 7p/3p");
  r.alpha = full.alpha;
  return r;
}

Mat participation_factors(const Mat& A, bool* defective) {
  Eigen::EigenSolver<Mat> es(A, true);
  if (es.info() != Eigen::Success) throw Error(Errc::Convergence, "eigenvalue solve failed");
  CMat Phi = es.eigenvectors();
  Eigen::PartialPivLU<CMat> lu(Phi);
  bool bad = !(lu.rcond() > 1e-12);
  if (defective) *defective = bad;
  CMat Psi = lu.inverse();
  const Eigen::Index n = A.rows();
  Mat P(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) P(k, i) = std::abs(Phi(k, i) * Psi(i, k));
    double mx = P.col(i).maxCoeff();
    if (mx > 0) P.col(i) /= mx;
  }
  return P;
}

ModalReport eigen_report(const Mat& A, bool with_participation) {
  ModalReport rep;
  Eigen::EigenSolver<Mat> es(A, false);
  if (es.info() != Eigen::Success) throw Error(Errc::Convergence, "eigenvalue solve failed");
  rep.eigenvalues = es.eigenvalues();
  rep.damping.resize(rep.eigenvalues.size());
  for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
    double mag = std::abs(rep.eigenvalues(i));
    rep.damping(i) = mag > 0 ? -rep.eigenvalues(i).real() / mag : 0.0;
  }
  if (with_participation) rep.participation = participation_factors(A, &rep.defective);
  return rep;
}

int dominant_mode(const ModalReport& rep, double min_imag) {
  int best = -1;
  for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
    if (rep.eigenvalues(i).imag() <= min_imag) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    double d = rep.damping(i), db = rep.damping(best);
    if (d < db - 1e-12 || (std::abs(d - db) <= 1e-12 && rep.eigenvalues(i).real() > rep.eigenvalues(best).real()))
      best = static_cast<int>(i);
  }
  return best;
}

std::string modal_csv(const ModalReport& rep, const std::vector<std::string>& names) {
  std::ostringstream os;
  os.precision(10);
  os << "mode,real,imag,damping,state1,pf1,state2,pf2,state3,pf3\n";
  const Eigen::Index n = rep.eigenvalues.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (rep.eigenvalues(a).real() != rep.eigenvalues(b).real())
      return rep.eigenvalues(a).real() > rep.eigenvalues(b).real();
    return rep.eigenvalues(a).imag() > rep.eigenvalues(b).imag();
  });
  for (Eigen::Index m = 0; m < n; ++m) {
    Eigen::Index i = order[m];
    os << m << ',' << rep.eigenvalues(i).real() << ',' << rep.eigenvalues(i).imag() << ',' << rep.damping(i);
    if (rep.participation.size()) {
      std::vector<Eigen::Index> st(rep.participation.rows());
      std::iota(st.begin(), st.end(), 0);
      std::partial_sort(st.begin(), st.begin() + std::min<Eigen::Index>(3, st.size()), st.end(),
                        [&](Eigen::Index a, Eigen::Index b) { return rep.participation(a, i) > rep.participation(b, i); });
      for (int t = 0; t < 3; ++t) {
        if (t < static_cast<int>(st.size())) {
          Eigen::Index s = st[t];
          std::string nm = s < static_cast<Eigen::Index>(names.size()) ? names[s] : "x" + std::to_string(s);
          os << ',' << nm << ',' << rep.participation(s, i);
        } else {
          os << ",,";
        }
      }
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace gridcharge
