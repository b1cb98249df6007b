#pragma once

// Newline-delimited JSON spoken between the harness and a model backend.
//
//   {"type":"hello"}                                          -> descriptor
//   {"type":"score_causal","id":..,"tokens":"ACGT"}          -> {"type":"score_causal","id":..,"logp":[..]}
//   {"type":"score_masked","id":..,"tokens":..,"positions":[..]}
//                                                             -> {"type":"score_masked","id":..,"marginals":[[..]..]}
//   {"type":"hidden","id":..,"tokens":..,"layers":[..]}      -> one {"type":"hidden","id":..,"layer":l,"vectors":[[..]..]}
//                                                                per requested layer, in request order
//   {"type":"update","id":..,"corpus_ref":..,"steps":n}      -> {"type":"update","id":..,"ok":true}
//   any failure                                               -> {"type":"error","id":..,"code":..,"message":..}
//
// Tokens are one symbol per token. Positions are 0-based. Marginal rows follow
// the backend alphabet order and hold natural-log probabilities.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace dualeval {

enum class Capability { causal_logp, masked_marginal, hidden_states, update };

std::string_view to_string(Capability c);
Capability parse_capability(std::string_view name);

struct BackendDescriptor {
    std::string name;
    std::string alphabet;
    int num_layers = 0;
    int hidden_dim = 0;
    std::set<Capability> capabilities;
    std::size_t max_length = 0;  // 0: unlimited context
    std::size_t batch_size = 1;

    bool supports(Capability c) const { return capabilities.contains(c); }
    bool is_nucleotide() const;

    nlohmann::json to_json() const;
    static BackendDescriptor from_json(const nlohmann::json& j);
    friend bool operator==(const BackendDescriptor&, const BackendDescriptor&) = default;
};

namespace wire {

struct Hello {
    friend bool operator==(const Hello&, const Hello&) = default;
};
struct ScoreCausal {
    std::string id;
    std::string tokens;
    friend bool operator==(const ScoreCausal&, const ScoreCausal&) = default;
};
struct ScoreMasked {
    std::string id;
    std::string tokens;
    std::vector<std::size_t> positions;
    friend bool operator==(const ScoreMasked&, const ScoreMasked&) = default;
};
struct Hidden {
    std::string id;
    std::string tokens;
    std::vector<int> layers;
    friend bool operator==(const Hidden&, const Hidden&) = default;
};
struct Update {
    std::string id;
    std::string corpus_ref;
    std::uint64_t steps = 0;
    friend bool operator==(const Update&, const Update&) = default;
};

using Request = std::variant<Hello, ScoreCausal, ScoreMasked, Hidden, Update>;

struct CausalReply {
    std::string id;
    std::vector<double> logp;
};
struct MaskedReply {
    std::string id;
    std::vector<std::vector<double>> marginals;
};
struct HiddenReply {
    std::string id;
    int layer = 0;
    std::vector<std::vector<double>> vectors;
};
struct UpdateReply {
    std::string id;
    bool ok = false;
};
struct ErrorReply {
    std::string id;
    std::string code;
    std::string message;
};

using Reply = std::variant<BackendDescriptor, CausalReply, MaskedReply, HiddenReply, UpdateReply, ErrorReply>;

/// Thrown for lines that are not valid messages.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string encode(const Request& req);
std::string encode(const Reply& reply);
Request decode_request(std::string_view line);
Reply decode_reply(std::string_view line);

/// Request id ("" for hello).
std::string request_id(const Request& req);
std::string reply_id(const Reply& reply);
/// Number of reply messages a well-behaved backend sends for `req`.
std::size_t expected_replies(const Request& req);
/// Capability a request needs, if any.
std::optional<Capability> required_capability(const Request& req);

}  // namespace wire
}  // namespace dualeval
