#include "seqdiff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace seqdiff {

SymmetricEigen symmetric_eigen(const Tensor& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) {
        throw ShapeError("symmetric_eigen: matrix must be square, got " + a.shape_str());
    }
    Tensor m = a;
    // Symmetrize to kill representation noise.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = 0.5 * (m.at(i, j) + m.at(j, i));
            m.at(i, j) = s;
            m.at(j, i) = s;
        }
    }

    Tensor q({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        q.at(i, i) = 1.0;
    }

    double norm = 0.0;
    for (double v : m.values()) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    const double stop = std::max(norm, 1.0) * 1e-15;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                off += m.at(i, j) * m.at(i, j);
            }
        }
        if (std::sqrt(2.0 * off) <= stop) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                const double apq = m.at(p, r);
                if (apq == 0.0) {
                    continue;
                }
                const double app = m.at(p, p);
                const double aqq = m.at(r, r);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mp = m.at(k, p);
                    const double mq = m.at(k, r);
                    m.at(k, p) = c * mp - s * mq;
                    m.at(k, r) = s * mp + c * mq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mp = m.at(p, k);
                    const double mq = m.at(r, k);
                    m.at(p, k) = c * mp - s * mq;
                    m.at(r, k) = s * mp + c * mq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qp = q.at(k, p);
                    const double qq = q.at(k, r);
                    q.at(k, p) = c * qp - s * qq;
                    q.at(k, r) = s * qp + c * qq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) {
        diag[i] = m.at(i, i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return diag[x] < diag[y]; });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Tensor({n, n});
    for (std::size_t col = 0; col < n; ++col) {
        out.values[col] = diag[order[col]];
        for (std::size_t row = 0; row < n; ++row) {
            out.vectors.at(row, col) = q.at(row, order[col]);
        }
    }
    return out;
}

Tensor psd_sqrt(const Tensor& a, double tol) {
    SymmetricEigen eig = symmetric_eigen(a);
    const std::size_t n = a.rows();
    for (double& v : eig.values) {
        if (v < -tol) {
            throw NumericError("psd_sqrt: matrix has eigenvalue " + std::to_string(v) +
                               " below tolerance");
        }
        v = v > 0.0 ? std::sqrt(v) : 0.0;
    }
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += eig.vectors.at(i, k) * eig.values[k] * eig.vectors.at(j, k);
            }
            out.at(i, j) = s;
        }
    }
    return out;
}

} // namespace seqdiff
