// Test-only reference implementations: straight-line scalar arithmetic,
// independent of the library's vectorized forward/backward path.
#pragma once

#include <cmath>
#include <vector>

#include "tracemind/encoder.hpp"

namespace oracle {

inline double ref_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Projection head forward pass, eval mode, written with plain loops.
inline std::vector<double> ref_project(const std::vector<double>& x,
                                       const tracemind::ProjectionHead& h, double ln_eps) {
    size_t hidden = h.l1.W.rows(), d = h.l2.W.rows();
    std::vector<double> a(hidden);
    for (size_t i = 0; i < hidden; ++i) {
        double s = h.l1.b[static_cast<long>(i)];
        for (size_t j = 0; j < x.size(); ++j) s += h.l1.W(static_cast<long>(i), static_cast<long>(j)) * x[j];
        a[i] = ref_gelu(s);
    }
    std::vector<double> z0(d);
    for (size_t i = 0; i < d; ++i) {
        double s = h.l2.b[static_cast<long>(i)];
        for (size_t j = 0; j < hidden; ++j) s += h.l2.W(static_cast<long>(i), static_cast<long>(j)) * a[j];
        z0[i] = s;
    }
    double mean = 0;
    for (double v : z0) mean += v;
    mean /= static_cast<double>(d);
    double var = 0;
    for (double v : z0) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    std::vector<double> out(d);
    for (size_t i = 0; i < d; ++i) {
        double nh = (z0[i] - mean) / std::sqrt(var + ln_eps);
        out[i] = h.ln_gain[static_cast<long>(i)] * nh + h.ln_bias[static_cast<long>(i)];
    }
    return out;
}

// Contrastive loss over explicit projections, double loop, as typeset:
// denominator over j != i in the second view of each ordered pair.
inline double ref_loss_con(const std::vector<tracemind::Mat>& z, double tau) {
    size_t nv = z.size();
    long n = z[0].rows();
    auto norm_row = [&](const tracemind::Mat& m, long r) {
        std::vector<double> v(m.cols());
        double nn = 0;
        for (long c = 0; c < m.cols(); ++c) nn += m(r, c) * m(r, c);
        nn = std::sqrt(nn);
        for (long c = 0; c < m.cols(); ++c) v[static_cast<size_t>(c)] = nn > 0 ? m(r, c) / nn : 0;
        return v;
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    double total = 0;
    int pairs = 0;
    for (size_t p = 0; p < nv; ++p)
        for (size_t q = 0; q < nv; ++q) {
            if (p == q) continue;
            ++pairs;
            double pair_sum = 0;
            for (long i = 0; i < n; ++i) {
                auto zi_p = norm_row(z[p], i);
                double num = std::exp(dot(zi_p, norm_row(z[q], i)) / tau);
                double den = 0;
                for (long j = 0; j < n; ++j) {
                    if (j == i) continue;
                    den += std::exp(dot(zi_p, norm_row(z[q], j)) / tau);
                }
                pair_sum += -std::log(num / den);
            }
            total += pair_sum / static_cast<double>(n);
        }
    return total / pairs;
}

// Dual-prediction loss over explicit projections (symmetric reading).
inline double ref_loss_pred(const std::vector<tracemind::Mat>& z,
                            const std::array<tracemind::Predictor, 6>& preds, bool strict) {
    using tracemind::Slot;
    auto pairs = tracemind::ordered_pairs();
    long n = z[0].rows();
    double total = 0;
    for (int k = 0; k < 6; ++k) {
        auto [p, q] = pairs[k];
        int pi = static_cast<int>(p), qi = static_cast<int>(q);
        int back = tracemind::pair_index(q, p);
        double s = 0;
        for (long i = 0; i < n; ++i) {
            tracemind::Vec zp = z[pi].row(i).transpose();
            tracemind::Vec zq = z[qi].row(i).transpose();
            s += (preds[k].apply(zp) - zq).squaredNorm();
            if (strict)
                s += (preds[back].apply(zp) - zq).squaredNorm();
            else
                s += (preds[back].apply(zq) - zp).squaredNorm();
        }
        total += s / (2.0 * n);
    }
    return total / 6.0;
}

inline double ref_loss_rec(const std::vector<tracemind::Mat>& z,
                           const std::vector<tracemind::Mat>& x,
                           const std::array<tracemind::Affine, 3>& decoders) {
    long n = z[0].rows();
    double total = 0;
    for (int v = 0; v < 3; ++v) {
        for (long i = 0; i < n; ++i) {
            tracemind::Vec r =
                decoders[v].apply(z[v].row(i).transpose()) - x[v].row(i).transpose();
            total += r.squaredNorm();
        }
    }
    return total / (3.0 * n);
}

}  // namespace oracle
