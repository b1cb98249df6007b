#include "dualeval/protocol.hpp"

#include "dualeval/errors.hpp"

namespace dualeval {

using nlohmann::json;

std::string_view to_string(Capability c) {
    switch (c) {
        case Capability::causal_logp: return "causal_logp";
        case Capability::masked_marginal: return "masked_marginal";
        case Capability::hidden_states: return "hidden_states";
        case Capability::update: return "update";
    }
    return "?";
}

Capability parse_capability(std::string_view name) {
    if (name == "causal_logp") return Capability::causal_logp;
    if (name == "masked_marginal") return Capability::masked_marginal;
    if (name == "hidden_states") return Capability::hidden_states;
    if (name == "update") return Capability::update;
    throw wire::ProtocolError("unknown capability: " + std::string(name));
}

bool BackendDescriptor::is_nucleotide() const {
    return !alphabet.empty() && alphabet.find_first_not_of("ACGTN") == std::string::npos;
}

json BackendDescriptor::to_json() const {
    json caps = json::array();
    for (auto c : capabilities) caps.push_back(std::string(to_string(c)));
    return json{{"type", "hello"},           {"name", name},         {"alphabet", alphabet},
                {"num_layers", num_layers},  {"hidden_dim", hidden_dim}, {"capabilities", caps},
                {"max_length", max_length}, {"batch_size", batch_size}};
}

BackendDescriptor BackendDescriptor::from_json(const json& j) {
    BackendDescriptor d;
    d.name = j.at("name").get<std::string>();
    d.alphabet = j.at("alphabet").get<std::string>();
    d.num_layers = j.value("num_layers", 0);
    d.hidden_dim = j.value("hidden_dim", 0);
    for (const auto& c : j.at("capabilities")) d.capabilities.insert(parse_capability(c.get<std::string>()));
    d.max_length = j.value("max_length", std::size_t{0});
    d.batch_size = j.value("batch_size", std::size_t{1});
    return d;
}

namespace wire {

namespace {

json parse_line(std::string_view line) {
    try {
        auto j = json::parse(line);
        if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
            throw ProtocolError("message lacks a string 'type' field");
        }
        return j;
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON: ") + e.what());
    }
}

template <class F>
auto guarded(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("bad message field: ") + e.what());
    }
}

}  // namespace

std::string encode(const Request& req) {
    json j = std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, Hello>) return json{{"type", "hello"}};
            else if constexpr (std::is_same_v<T, ScoreCausal>)
                return json{{"type", "score_causal"}, {"id", r.id}, {"tokens", r.tokens}};
            else if constexpr (std::is_same_v<T, ScoreMasked>)
                return json{{"type", "score_masked"}, {"id", r.id}, {"tokens", r.tokens}, {"positions", r.positions}};
            else if constexpr (std::is_same_v<T, Hidden>)
                return json{{"type", "hidden"}, {"id", r.id}, {"tokens", r.tokens}, {"layers", r.layers}};
            else
                return json{{"type", "update"}, {"id", r.id}, {"corpus_ref", r.corpus_ref}, {"steps", r.steps}};
        },
        req);
    return j.dump();
}

std::string encode(const Reply& reply) {
    json j = std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, BackendDescriptor>) return r.to_json();
            else if constexpr (std::is_same_v<T, CausalReply>)
                return json{{"type", "score_causal"}, {"id", r.id}, {"logp", r.logp}};
            else if constexpr (std::is_same_v<T, MaskedReply>)
                return json{{"type", "score_masked"}, {"id", r.id}, {"marginals", r.marginals}};
            else if constexpr (std::is_same_v<T, HiddenReply>)
                return json{{"type", "hidden"}, {"id", r.id}, {"layer", r.layer}, {"vectors", r.vectors}};
            else if constexpr (std::is_same_v<T, UpdateReply>)
                return json{{"type", "update"}, {"id", r.id}, {"ok", r.ok}};
            else
                return json{{"type", "error"}, {"id", r.id}, {"code", r.code}, {"message", r.message}};
        },
        reply);
    return j.dump();
}

Request decode_request(std::string_view line) {
    const json j = parse_line(line);
    return guarded([&]() -> Request {
        const auto type = j.at("type").get<std::string>();
        if (type == "hello") return Hello{};
        if (type == "score_causal") return ScoreCausal{j.at("id").get<std::string>(), j.at("tokens").get<std::string>()};
        if (type == "score_masked")
            return ScoreMasked{j.at("id").get<std::string>(), j.at("tokens").get<std::string>(),
                               j.at("positions").get<std::vector<std::size_t>>()};
        if (type == "hidden")
            return Hidden{j.at("id").get<std::string>(), j.at("tokens").get<std::string>(),
                          j.at("layers").get<std::vector<int>>()};
        if (type == "update")
            return Update{j.at("id").get<std::string>(), j.at("corpus_ref").get<std::string>(),
                          j.at("steps").get<std::uint64_t>()};
        throw ProtocolError("unknown request type: " + type);
    });
}

Reply decode_reply(std::string_view line) {
    const json j = parse_line(line);
    return guarded([&]() -> Reply {
        const auto type = j.at("type").get<std::string>();
        if (type == "hello") return BackendDescriptor::from_json(j);
        if (type == "score_causal") return CausalReply{j.at("id").get<std::string>(), j.at("logp").get<std::vector<double>>()};
        if (type == "score_masked")
            return MaskedReply{j.at("id").get<std::string>(), j.at("marginals").get<std::vector<std::vector<double>>>()};
        if (type == "hidden")
            return HiddenReply{j.at("id").get<std::string>(), j.at("layer").get<int>(),
                               j.at("vectors").get<std::vector<std::vector<double>>>()};
        if (type == "update") return UpdateReply{j.at("id").get<std::string>(), j.at("ok").get<bool>()};
        if (type == "error")
            return ErrorReply{j.value("id", std::string{}), j.at("code").get<std::string>(),
                              j.value("message", std::string{})};
        throw ProtocolError("unknown reply type: " + type);
    });
}

std::string request_id(const Request& req) {
    return std::visit(
        [](const auto& r) -> std::string {
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, Hello>) return "";
            else return r.id;
        },
        req);
}

std::string reply_id(const Reply& reply) {
    return std::visit(
        [](const auto& r) -> std::string {
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, BackendDescriptor>) return "";
            else return r.id;
        },
        reply);
}

std::size_t expected_replies(const Request& req) {
    if (const auto* h = std::get_if<Hidden>(&req)) return h->layers.size();
    return 1;
}

std::optional<Capability> required_capability(const Request& req) {
    return std::visit(
        [](const auto& r) -> std::optional<Capability> {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, ScoreCausal>) return Capability::causal_logp;
            else if constexpr (std::is_same_v<T, ScoreMasked>) return Capability::masked_marginal;
            else if constexpr (std::is_same_v<T, Hidden>) return Capability::hidden_states;
            else if constexpr (std::is_same_v<T, Update>) return Capability::update;
            else return std::nullopt;
        },
        req);
}

}  // namespace wire
}  // namespace dualeval
