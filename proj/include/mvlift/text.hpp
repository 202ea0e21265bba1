#pragma once

#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "mvlift/common.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {

inline constexpr Index kTextTokens = 77;

/// 77 x d_text token matrix. Deterministic stand-in for a learned text
/// encoder: whitespace tokens are hashed into a fixed seeded embedding
/// table and summed with sinusoidal positions. The empty string maps to the
/// reserved all-zero null embedding used for classifier-free guidance.
struct TextEmbedding {
    MatrixXd tokens;  // 77 x d_text

    Index dim() const { return tokens.cols(); }
    bool is_null() const { return tokens.isZero(0.0); }
    VectorXd pooled() const { return tokens.colwise().mean().transpose(); }
};

namespace detail {

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(
                std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline void add_sinusoid(
    Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, double pos) {
    const Index d = row.size();
    for (Index i = 0; i < d; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
        row(i) += std::sin(pos * freq);
        if (i + 1 < d) row(i + 1) += std::cos(pos * freq);
    }
}

inline Eigen::RowVectorXd sinusoid(double pos, Index d) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(d);
    add_sinusoid(row, pos);
    return row;
}

}  // namespace detail

inline TextEmbedding encode_text(const std::string& text, Index d_text) {
    detail::require(d_text >= 2, "encode_text: d_text must be >= 2");
    TextEmbedding emb;
    emb.tokens = MatrixXd::Zero(kTextTokens, d_text);

    const auto words = detail::whitespace_tokens(text);
    if (words.empty()) return emb;  // reserved null embedding

    const double scale = 1.0 / std::sqrt(static_cast<double>(d_text));
    for (Index i = 0; i < kTextTokens; ++i) {
        if (i < static_cast<Index>(words.size())) {
            Rng token_rng(detail::fnv1a(words[static_cast<std::size_t>(i)],
                                        0x9e3779b97f4a7c15ull));
            for (Index c = 0; c < d_text; ++c)
                emb.tokens(i, c) = token_rng.normal() * scale;
        }
        detail::add_sinusoid(emb.tokens.row(i), static_cast<double>(i));
    }
    return emb;
}

}  // namespace mvlift
