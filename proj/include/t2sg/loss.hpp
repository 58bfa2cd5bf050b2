#pragma once

#include <cmath>
#include <string>

#include "t2sg/errors.hpp"
#include "t2sg/linalg.hpp"

namespace t2sg {

// Training objective selector. CosineInfoNCE is a conventional InfoNCE on
// raw cosine similarities, kept for comparison runs; the default objective
// is Both.
enum class LossMode { CosSim, MatchProb, Both, CosineInfoNCE };

inline const char* to_string(LossMode m) {
    switch (m) {
        case LossMode::CosSim: return "cossim";
        case LossMode::MatchProb: return "matchprob";
        case LossMode::Both: return "both";
        case LossMode::CosineInfoNCE: return "infonce";
    }
    return "?";
}

inline LossMode loss_mode_from_string(const std::string& s) {
    if (s == "cossim") return LossMode::CosSim;
    if (s == "matchprob") return LossMode::MatchProb;
    if (s == "both") return LossMode::Both;
    if (s == "infonce") return LossMode::CosineInfoNCE;
    throw InvalidArgument("unknown loss mode: " + s);
}

// Scores of one batch of B aligned (scene, text) pairs crossed all-vs-all.
// Row index i runs over scenes, column index k over text-graphs.
struct BatchScores {
    Mat cos_matrix;    // cos(S_scene, S_text) of pair (i, k)
    Mat match_matrix;  // m of pair (i, k)
    Mat targets;       // y, 1 on matched pairings
    Mat weights;       // w = 1 - target cosine = 1 - y

    int batch() const { return cos_matrix.rows; }

    void check() const {
        const int b = batch();
        auto square = [&](const Mat& m) { return m.rows == b && m.cols == b; };
        if (!square(cos_matrix) || !square(match_matrix) || !square(targets) || !square(weights)) {
            throw InvalidArgument("BatchScores matrices must all be B x B");
        }
    }

    static BatchScores aligned(int b) {
        BatchScores s;
        s.cos_matrix = Mat(b, b);
        s.match_matrix = Mat(b, b);
        s.targets = Mat(b, b);
        s.weights = Mat(b, b);
        for (int i = 0; i < b; ++i)
            for (int k = 0; k < b; ++k) {
                s.targets(i, k) = i == k ? 1.0 : 0.0;
                s.weights(i, k) = 1.0 - s.targets(i, k);
            }
        return s;
    }
};

namespace detail {

// sum_i sum_k -coef_ik * log softmax_k(logits)_ik, scaled by 1/B^2, plus the
// gradient w.r.t. the logits when d_logits is non-null.
inline double weighted_row_softmax_ce(const Mat& logits, const Mat& coef, Mat* d_logits) {
    const int b = logits.rows;
    const double inv_b2 = 1.0 / (double(b) * double(b));
    double loss = 0.0;
    Vec p(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        double mx = logits(i, 0);
        for (int k = 1; k < b; ++k) mx = std::max(mx, logits(i, k));
        double sum = 0.0;
        for (int k = 0; k < b; ++k) {
            p[size_t(k)] = std::exp(logits(i, k) - mx);
            sum += p[size_t(k)];
        }
        const double log_sum = std::log(sum) + mx;
        double coef_row = 0.0;
        for (int k = 0; k < b; ++k) {
            coef_row += coef(i, k);
            if (coef(i, k) != 0.0) loss -= coef(i, k) * (logits(i, k) - log_sum);
        }
        if (d_logits) {
            for (int k = 0; k < b; ++k) {
                (*d_logits)(i, k) += inv_b2 * (coef_row * p[size_t(k)] / sum - coef(i, k));
            }
        }
    }
    return loss * inv_b2;
}

}  // namespace detail

// x = 1 - cos_matrix, softmax across each scene row, weighted by
// w = 1 - target cosine (zero on matches).
inline double loss_cossim(const BatchScores& s, Mat* d_cos = nullptr) {
    s.check();
    const int b = s.batch();
    Mat x(b, b);
    for (int i = 0; i < b; ++i)
        for (int k = 0; k < b; ++k) x(i, k) = 1.0 - s.cos_matrix(i, k);
    Mat dx(b, b);
    double loss = detail::weighted_row_softmax_ce(x, s.weights, d_cos ? &dx : nullptr);
    if (d_cos) {
        for (int i = 0; i < b; ++i)
            for (int k = 0; k < b; ++k) (*d_cos)(i, k) -= dx(i, k);  // d x / d cos = -1
    }
    return loss;
}

// Row-wise softmax cross-entropy over matching probabilities with the
// matched column as the positive class.
inline double loss_match(const BatchScores& s, Mat* d_match = nullptr) {
    s.check();
    return detail::weighted_row_softmax_ce(s.match_matrix, s.targets, d_match);
}

// Conventional InfoNCE over cosine similarities (comparison objective, not
// part of the default training path).
inline double loss_infonce(const BatchScores& s, double temperature = 0.1, Mat* d_cos = nullptr) {
    s.check();
    const int b = s.batch();
    double loss = 0.0;
    Vec p(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        double y_row = 0.0;
        for (int k = 0; k < b; ++k) y_row += s.targets(i, k);
        if (y_row == 0.0) continue;
        double mx = -1e300;
        for (int k = 0; k < b; ++k) mx = std::max(mx, s.cos_matrix(i, k) / temperature);
        double sum = 0.0;
        for (int k = 0; k < b; ++k) {
            p[size_t(k)] = std::exp(s.cos_matrix(i, k) / temperature - mx);
            sum += p[size_t(k)];
        }
        const double log_sum = std::log(sum) + mx;
        for (int k = 0; k < b; ++k) {
            const double coef = s.targets(i, k) / y_row;
            if (coef != 0.0) loss -= coef * (s.cos_matrix(i, k) / temperature - log_sum);
            if (d_cos) {
                (*d_cos)(i, k) += (y_row > 0.0 ? (p[size_t(k)] / sum - coef) : 0.0) / (temperature * double(b));
            }
        }
    }
    return loss / double(b);
}

// Combined objective: the arithmetic mean of the two terms under Both, the
// single selected term otherwise.
inline double loss_total(const BatchScores& s, LossMode mode = LossMode::Both,
                         Mat* d_cos = nullptr, Mat* d_match = nullptr,
                         double* out_cossim = nullptr, double* out_match = nullptr) {
    s.check();
    const int b = s.batch();
    Mat dc(b, b), dm(b, b);
    double lc = 0.0, lm = 0.0, total = 0.0;
    switch (mode) {
        case LossMode::CosSim:
            lc = loss_cossim(s, d_cos ? &dc : nullptr);
            lm = loss_match(s, nullptr);
            total = lc;
            break;
        case LossMode::MatchProb:
            lc = loss_cossim(s, nullptr);
            lm = loss_match(s, d_match ? &dm : nullptr);
            total = lm;
            break;
        case LossMode::Both: {
            lc = loss_cossim(s, d_cos ? &dc : nullptr);
            lm = loss_match(s, d_match ? &dm : nullptr);
            total = 0.5 * (lm + lc);
            for (auto& x : dc.v) x *= 0.5;
            for (auto& x : dm.v) x *= 0.5;
            break;
        }
        case LossMode::CosineInfoNCE:
            lc = loss_cossim(s, nullptr);
            lm = loss_match(s, nullptr);
            total = loss_infonce(s, 0.1, d_cos ? &dc : nullptr);
            break;
    }
    if (d_cos) *d_cos = dc;
    if (d_match) *d_match = dm;
    if (out_cossim) *out_cossim = lc;
    if (out_match) *out_match = lm;
    return total;
}

}  // namespace t2sg
