#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <vector>

#include "dpflab/numerics/linalg.hpp"
#include "dpflab/numerics/matrix.hpp"

namespace dpflab::numerics {

namespace detail {

// Parlett-Reinsch balancing by powers of two (exact scaling, eigenvalues unchanged).
inline void balance(Matrix& a) {
    const std::size_t n = a.rows();
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    bool done = false;
    while (!done) {
        done = true;
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) {
                    c += std::abs(a(j, i));
                    r += std::abs(a(i, j));
                }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                g = 1.0 / f;
                for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
                for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

// Householder reduction to upper Hessenberg form (similarity transform).
inline void to_hessenberg(Matrix& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) norm2 += a(i, k) * a(i, k);
        double tail = 0.0;
        for (std::size_t i = k + 2; i < n; ++i) tail += a(i, k) * a(i, k);
        if (tail == 0.0) continue;  // already reduced in this column
        const double norm = std::sqrt(norm2);
        const double alpha = a(k + 1, k) > 0 ? -norm : norm;
        std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t i = k + 1; i < n; ++i) v[i] = a(i, k);
        v[k + 1] -= alpha;
        double vv = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vv += v[i] * v[i];
        // A <- H A
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
            s = 2.0 * s / vv;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
        }
        // A <- A H
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
            s = 2.0 * s / vv;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
        }
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

inline double sign_of(double magnitude, double sign_source) {
    return sign_source >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr lineage).
// Returns false if some eigenvalue needed more than 60 iterations.
inline bool hessenberg_qr(Matrix& a, std::vector<std::complex<double>>& out) {
    const int n = static_cast<int>(a.rows());
    out.assign(static_cast<std::size_t>(n), {0.0, 0.0});
    auto A = [&a](int i, int j) -> double& { return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)); };
    auto put = [&out](int i, double re, double im) { out[static_cast<std::size_t>(i)] = {re, im}; };

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(A(i, j));

    int nn = n - 1;
    double t = 0.0;
    double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
    while (nn >= 0) {
        int its = 0;
        int l;
        do {
            for (l = nn; l > 0; --l) {
                s = std::abs(A(l - 1, l - 1)) + std::abs(A(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(A(l, l - 1)) + s == s) {
                    A(l, l - 1) = 0.0;
                    break;
                }
            }
            x = A(nn, nn);
            if (l == nn) {
                put(nn, x + t, 0.0);
                --nn;
            } else {
                y = A(nn - 1, nn - 1);
                w = A(nn, nn - 1) * A(nn - 1, nn);
                if (l == nn - 1) {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        const double r1 = x + z;
                        const double r2 = z != 0.0 ? x - w / z : x + z;
                        put(nn - 1, r1, 0.0);
                        put(nn, r2, 0.0);
                    } else {
                        put(nn - 1, x + p, z);
                        put(nn, x + p, -z);
                    }
                    nn -= 2;
                } else {
                    if (its == 60) return false;
                    if (its == 10 || its == 20 || its == 40) {
                        // exceptional shift
                        t += x;
                        for (int i = 0; i <= nn; ++i) A(i, i) -= x;
                        s = std::abs(A(nn, nn - 1)) + std::abs(A(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m;
                    for (m = nn - 2; m >= l; --m) {
                        z = A(m, m);
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / A(m + 1, m) + A(m, m + 1);
                        q = A(m + 1, m + 1) - z - r - s;
                        r = A(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(A(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p) * (std::abs(A(m - 1, m - 1)) + std::abs(z) + std::abs(A(m + 1, m + 1)));
                        if (u + v == v) break;
                    }
                    for (int i = m; i < nn - 1; ++i) {
                        A(i + 2, i) = 0.0;
                        if (i != m) A(i + 2, i - 1) = 0.0;
                    }
                    for (int k = m; k < nn; ++k) {
                        if (k != m) {
                            p = A(k, k - 1);
                            q = A(k + 1, k - 1);
                            r = 0.0;
                            if (k + 1 != nn) r = A(k + 2, k - 1);
                            if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
                            if (k == m) {
                                if (l != m) A(k, k - 1) = -A(k, k - 1);
                            } else {
                                A(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                p = A(k, j) + q * A(k + 1, j);
                                if (k + 1 != nn) {
                                    p += r * A(k + 2, j);
                                    A(k + 2, j) -= p * z;
                                }
                                A(k + 1, j) -= p * y;
                                A(k, j) -= p * x;
                            }
                            const int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                p = x * A(i, k) + y * A(i, k + 1);
                                if (k + 1 != nn) {
                                    p += z * A(i, k + 2);
                                    A(i, k + 2) -= p * r;
                                }
                                A(i, k + 1) -= p * q;
                                A(i, k) -= p;
                            }
                        }
                    }
                }
            }
        } while (l + 1 < nn);
    }
    return true;
}

// Smallest diagonal entry of a column-pivoted QR of M - mu I (a cheap estimate
// of its smallest singular value). Complex mu uses the real embedding
// [[M - Re mu, Im mu], [-Im mu, M - Re mu]].
inline double smallest_shifted_pivot(const Matrix& m, std::complex<double> mu) {
    const std::size_t n = m.rows();
    Matrix x;
    if (mu.imag() == 0.0) {
        x = m - Matrix::identity(n) * mu.real();
    } else {
        x = Matrix(2 * n, 2 * n);
        const Matrix re = m - Matrix::identity(n) * mu.real();
        const Matrix im = Matrix::identity(n) * mu.imag();
        x.set_block(0, 0, re);
        x.set_block(n, n, re);
        x.set_block(0, n, im);
        x.set_block(n, 0, -im);
    }
    const auto qr = pivoted_qr(x);
    double smallest = std::abs(qr.r(0, 0));
    for (std::size_t i = 0; i < x.rows(); ++i) smallest = std::min(smallest, std::abs(qr.r(i, i)));
    return smallest;
}

}  // namespace detail

// All eigenvalues of a real square matrix.
inline std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
    require_square(m, "eigenvalue operand");
    require_finite(m, "eigenvalue operand");
    std::vector<std::complex<double>> out;
    if (m.rows() == 0) return out;
    Matrix a = m;
    detail::balance(a);
    detail::to_hessenberg(a);
    if (!detail::hessenberg_qr(a, out)) throw NonConvergenceError("QR eigenvalue iteration did not converge", 0.0, 60);
    return out;
}

// Relative distance below which computed eigenvalues are treated as one cluster.
inline constexpr double kEigenClusterTolerance = 1e-4;

// max |lambda|. A matrix whose n-th power is exactly zero in floating point is
// nilpotent and returns 0; QR would otherwise report eps^(1/n) roundoff.
inline double spectral_radius(const Matrix& m) {
    require_square(m, "spectral_radius operand");
    require_finite(m, "spectral_radius operand");
    const std::size_t n = m.rows();
    if (n == 0 || m.all_zero()) return 0.0;

    Matrix power = m;
    std::size_t reached = 1;
    while (reached < n) {
        power = power * power;
        reached *= 2;
    }
    if (power.all_zero()) return 0.0;

    // A defective multiple eigenvalue comes back split by about
    // (eps * coupling)^(1/k); the centroid of the split cluster is accurate to
    // O(eps). A cluster is replaced by its centroid only when M is within
    // roundoff of having an eigenvalue there (smallest QR pivot of M - mu I at
    // roundoff level); genuinely distinct close eigenvalues are left alone.
    const auto eig = eigenvalues(m);
    const std::size_t k = eig.size();
    std::vector<std::size_t> label(k);
    for (std::size_t i = 0; i < k; ++i) label[i] = i;
    auto find = [&](std::size_t i) {
        while (label[i] != i) i = label[i] = label[label[i]];
        return i;
    };
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double scale = std::max(1.0, std::max(std::abs(eig[i]), std::abs(eig[j])));
            if (std::abs(eig[i] - eig[j]) <= kEigenClusterTolerance * scale) label[find(j)] = find(i);
        }
    std::vector<std::complex<double>> sum(k);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        sum[find(i)] += eig[i];
        ++count[find(i)];
    }
    const double roundoff = 100.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                            std::max(1.0, m.max_abs());
    std::vector<double> moduli;
    for (std::size_t i = 0; i < k; ++i) {
        if (count[i] == 0) continue;
        const auto mu = sum[i] / static_cast<double>(count[i]);
        if (count[i] > 1 && detail::smallest_shifted_pivot(m, mu) <= roundoff) {
            moduli.push_back(std::abs(mu));
        } else {
            for (std::size_t j = 0; j < k; ++j)
                if (find(j) == i) moduli.push_back(std::abs(eig[j]));
        }
    }
    double rho = 0.0;
    for (double r : moduli) rho = std::max(rho, r);
    return rho;
}

}  // namespace dpflab::numerics
