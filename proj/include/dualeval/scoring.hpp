#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dualeval/protocol.hpp"

namespace dualeval {

/// logp[j] = ln P(x_j | x_<j) for each token of one scored sequence.
struct TokenScores {
    std::vector<double> logp;
};

/// Sum of per-token log-probabilities. Throws NonFiniteScore / DataError (empty).
double sequence_log_likelihood(const TokenScores& scores);
/// sequence_log_likelihood / L.
double mean_log_likelihood(const TokenScores& scores);
/// exp(-(1/L) sum logp), natural base.
double perplexity(const TokenScores& scores);

/// Per masked position, the log-distribution over the backend alphabet.
struct MaskedMarginals {
    std::string alphabet;
    std::map<std::size_t, std::vector<double>> rows;  // 0-based position -> log p per alphabet symbol

    /// Each row must have one entry per symbol and log-sum-exp to 0 within `tol`
    /// (in probability space).
    void validate(double tol = 1e-6) const;
    double log_prob(std::size_t position, char symbol) const;
};

/// 0-based positions where two equal-length sequences differ.
std::vector<std::size_t> differing_positions(std::string_view wt, std::string_view mt);

/// sum over positions of log p(mt_i | mt context) - log p(wt_i | wt context).
double masked_marginal_score(std::string_view wt, std::string_view mt, const MaskedMarginals& wt_marginals,
                             const MaskedMarginals& mt_marginals, std::span<const std::size_t> positions);

/// Per-position activations (rows = positions) of one layer.
struct HiddenState {
    int layer = 0;
    Eigen::MatrixXd vectors;
};

enum class Pooling { mean, last, max };
std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view name);

Eigen::VectorXd pool_features(const HiddenState& h, Pooling policy = Pooling::mean);

// ---------------------------------------------------------------------------
// Backend connections

/// A bidirectional line channel.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_line(std::string_view line) = 0;
    /// Throws TransportError on EOF or I/O failure.
    virtual std::string receive_line() = 0;
};

/// Line handler living in the same process (used for the in-process mock).
using LineHandler = std::function<std::vector<std::string>(std::string_view)>;
std::unique_ptr<Transport> make_loopback_transport(LineHandler handler);
/// Child process via `/bin/sh -c command`; stdin/stdout carry the protocol.
std::unique_ptr<Transport> make_process_transport(const std::string& command);
std::unique_ptr<Transport> make_unix_socket_transport(const std::string& path);

/// Endpoints: "exec:<command>", "unix:<socket path>", "mock:<flags>" (in-process
/// mock backend, same flags as the mock executable).
std::unique_ptr<Transport> connect_endpoint(const std::string& endpoint);

/// Synchronous client. Performs the hello handshake on construction.
class BackendClient {
public:
    explicit BackendClient(std::unique_ptr<Transport> transport);
    static BackendClient connect(const std::string& endpoint);

    const BackendDescriptor& descriptor() const noexcept { return descriptor_; }

    /// Sends one request and collects its replies. Error replies become
    /// BackendError (CapabilityError for code "capability"); a request outside
    /// the advertised capabilities throws CapabilityError without being sent.
    std::vector<wire::Reply> exchange(const wire::Request& request);

    /// Causal scores for a whole sequence. Sequences longer than max_length are
    /// scored chunk by chunk and the log-probabilities concatenated.
    TokenScores score_causal(std::string_view tokens);
    MaskedMarginals score_masked(std::string_view tokens, std::span<const std::size_t> positions);
    /// One HiddenState per layer, in request order; chunked like score_causal.
    std::vector<HiddenState> hidden(std::string_view tokens, std::span<const int> layers);
    void update(const std::string& corpus_ref, std::uint64_t steps);

    /// How many chunks a sequence of this length is scored in.
    std::size_t chunk_count(std::size_t length) const;
    std::size_t requests_sent() const noexcept { return requests_; }

private:
    std::string next_id();

    std::unique_ptr<Transport> transport_;
    BackendDescriptor descriptor_;
    std::size_t requests_ = 0;
};

struct BatchResponse {
    std::string id;
    std::vector<wire::Reply> replies;
    std::optional<std::string> error_code;
    std::string error_message;
    bool retriable = false;

    bool ok() const noexcept { return !error_code.has_value(); }
};

/// Responses in request order; failures are per item. Once the transport
/// breaks, every remaining item fails as retriable.
std::vector<BatchResponse> score_batch(BackendClient& backend, std::span<const wire::Request> requests);

}  // namespace dualeval
