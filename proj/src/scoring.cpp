#include "dualeval/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "dualeval/errors.hpp"

namespace dualeval {

namespace {

// Neumaier-compensated sum in extended precision.
long double accurate_sum(const TokenScores& scores) {
    if (scores.logp.empty()) throw DataError("cannot score an empty token sequence");
    long double sum = 0;
    long double carry = 0;
    for (std::size_t j = 0; j < scores.logp.size(); ++j) {
        const long double v = scores.logp[j];
        if (!std::isfinite(scores.logp[j])) throw NonFiniteScore(j);
        const long double t = sum + v;
        carry += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    return sum + carry;
}

}  // namespace

double sequence_log_likelihood(const TokenScores& scores) { return static_cast<double>(accurate_sum(scores)); }

double mean_log_likelihood(const TokenScores& scores) {
    return static_cast<double>(accurate_sum(scores) / static_cast<long double>(scores.logp.size()));
}

double perplexity(const TokenScores& scores) { return std::exp(-mean_log_likelihood(scores)); }

void MaskedMarginals::validate(double tol) const {
    for (const auto& [pos, row] : rows) {
        if (row.size() != alphabet.size()) {
            throw DataError("marginal row at position " + std::to_string(pos) + " has " + std::to_string(row.size()) +
                            " entries for an alphabet of " + std::to_string(alphabet.size()));
        }
        double total = 0;
        for (double lp : row) {
            if (!std::isfinite(lp) && lp != -INFINITY) throw NonFiniteScore(pos);
            total += std::exp(lp);
        }
        if (std::abs(total - 1.0) > tol) {
            throw DataError("marginal at position " + std::to_string(pos) + " sums to " + std::to_string(total));
        }
    }
}

double MaskedMarginals::log_prob(std::size_t position, char symbol) const {
    auto it = rows.find(position);
    if (it == rows.end()) throw DataError("missing marginal for position " + std::to_string(position));
    auto k = alphabet.find(symbol);
    if (k == std::string::npos) throw DataError(std::string("symbol ") + symbol + " not in backend alphabet");
    return it->second.at(k);
}

std::vector<std::size_t> differing_positions(std::string_view wt, std::string_view mt) {
    if (wt.size() != mt.size()) throw DimensionMismatch("wild type and mutant differ in length");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < wt.size(); ++i)
        if (wt[i] != mt[i]) out.push_back(i);
    return out;
}

double masked_marginal_score(std::string_view wt, std::string_view mt, const MaskedMarginals& wt_marginals,
                             const MaskedMarginals& mt_marginals, std::span<const std::size_t> positions) {
    double score = 0;
    for (auto i : positions) {
        if (i >= wt.size() || i >= mt.size()) throw DataError("position " + std::to_string(i) + " outside sequence");
        score += mt_marginals.log_prob(i, mt[i]) - wt_marginals.log_prob(i, wt[i]);
    }
    return score;
}

std::string_view to_string(Pooling p) {
    switch (p) {
        case Pooling::mean: return "mean";
        case Pooling::last: return "last";
        case Pooling::max: return "max";
    }
    return "?";
}

Pooling parse_pooling(std::string_view name) {
    if (name == "mean") return Pooling::mean;
    if (name == "last") return Pooling::last;
    if (name == "max") return Pooling::max;
    throw ConfigError("unknown pooling policy: " + std::string(name));
}

Eigen::VectorXd pool_features(const HiddenState& h, Pooling policy) {
    if (h.vectors.rows() == 0) throw DataError("cannot pool a hidden state with no positions");
    switch (policy) {
        case Pooling::mean: return h.vectors.colwise().mean().transpose();
        case Pooling::last: return h.vectors.row(h.vectors.rows() - 1).transpose();
        case Pooling::max: return h.vectors.colwise().maxCoeff().transpose();
    }
    return {};
}

}  // namespace dualeval
