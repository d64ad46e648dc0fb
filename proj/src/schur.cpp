#include "orbitstab/schur.hpp"

#include "orbitstab/errors.hpp"

#include <lapacke.h>

#include <string>
#include <vector>

namespace orbitstab {

namespace {

lapack_int select_inside_unit_circle(const double* re, const double* im) {
  return (*re) * (*re) + (*im) * (*im) < 1.0 ? 1 : 0;
}

}  // namespace

OrderedSchur ordered_schur_stable_first(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("ordered_schur: matrix must be square");
  const lapack_int n = static_cast<lapack_int>(M.rows());

  // LAPACK is column-major, as is Eigen's default storage.
  Eigen::MatrixXd T = M;
  Eigen::MatrixXd U(n, n);
  std::vector<double> wr(static_cast<size_t>(n)), wi(static_cast<size_t>(n));
  lapack_int sdim = 0;

  const lapack_int info =
      LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', &select_inside_unit_circle, n, T.data(), n, &sdim,
                    wr.data(), wi.data(), U.data(), n);
  if (info < 0) throw Error("ordered_schur: invalid argument to dgees (" + std::to_string(info) + ")");
  if (info > 0 && info <= n) throw Error("ordered_schur: QR iteration failed to converge");
  // info == n+2 means reordering moved some eigenvalues across the selection
  // boundary by roundoff; the returned ordering is still usable and sdim is set.

  OrderedSchur out;
  out.U = std::move(U);
  out.T = std::move(T);
  out.n_stable = static_cast<int>(sdim);
  return out;
}

}  // namespace orbitstab
