#include "dualeval/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dualeval/hashing.hpp"

namespace dualeval {

namespace {

// Deterministic value in [-1, 1) from integer coordinates.
double hashed_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    const std::uint64_t h = splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double l : logits) z += std::exp(l - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out;
    out.reserve(logits.size());
    for (double l : logits) out.push_back(l - lz);
    return out;
}

}  // namespace

MockOptions MockOptions::parse(const std::vector<std::string>& args) {
    MockOptions o;
    auto value = [&](std::size_t& i) -> const std::string& {
        if (i + 1 >= args.size()) throw std::invalid_argument("missing value for " + args[i]);
        return args[++i];
    };
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--name") o.name = value(i);
        else if (a == "--alphabet") {
            const auto& v = value(i);
            if (v == "dna") o.alphabet = "ACGT";
            else if (v == "protein") o.alphabet = "ACDEFGHIKLMNPQRSTVWY";
            else o.alphabet = v;
        } else if (a == "--mode") o.mode = value(i);
        else if (a == "--layers") o.layers = std::stoi(value(i));
        else if (a == "--dim") o.dim = std::stoi(value(i));
        else if (a == "--max-length") o.max_length = std::stoul(value(i));
        else if (a == "--growth") o.growth = std::stod(value(i));
        else if (a == "--no-update") o.allow_update = false;
        else if (a == "--disable") o.disabled.push_back(parse_capability(value(i)));
        else throw std::invalid_argument("unknown mock option " + a);
    }
    if (o.mode != "markov" && o.mode != "uniform") throw std::invalid_argument("mode must be markov or uniform");
    if (o.layers < 1 || o.dim < 1) throw std::invalid_argument("layers and dim must be positive");
    return o;
}

MockBackend::MockBackend(MockOptions options) : options_(std::move(options)) {
    descriptor_.name = options_.name;
    descriptor_.alphabet = options_.alphabet;
    descriptor_.num_layers = options_.layers;
    descriptor_.hidden_dim = options_.dim;
    descriptor_.max_length = options_.max_length;
    descriptor_.batch_size = 1;
    descriptor_.capabilities = {Capability::causal_logp, Capability::masked_marginal, Capability::hidden_states};
    if (options_.allow_update) descriptor_.capabilities.insert(Capability::update);
    for (auto c : options_.disabled) descriptor_.capabilities.erase(c);

    const auto d = options_.dim;
    for (int l = 0; l < options_.layers; ++l) {
        Eigen::MatrixXd m(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
                m(r, c) = hashed_unit(0x6d69786572ULL + static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(r),
                                      static_cast<std::uint64_t>(c));
        mixers_.push_back(std::move(m));
    }
}

double MockBackend::transition_logit(int from, int to) const {
    return 1.25 * hashed_unit(0x7472616eULL, static_cast<std::uint64_t>(from + 1), static_cast<std::uint64_t>(to));
}

bool MockBackend::valid_tokens(std::string_view tokens) const {
    if (tokens.empty()) return false;
    return std::all_of(tokens.begin(), tokens.end(),
                       [&](char c) { return options_.alphabet.find(c) != std::string::npos; });
}

std::vector<double> MockBackend::causal_logp(std::string_view tokens) const {
    const auto k = options_.alphabet.size();
    std::vector<double> out;
    out.reserve(tokens.size());
    if (options_.mode == "uniform") {
        out.assign(tokens.size(), -std::log(static_cast<double>(k)));
        return out;
    }
    int prev = -1;
    for (char c : tokens) {
        const int cur = static_cast<int>(options_.alphabet.find(c));
        std::vector<double> logits(k);
        for (std::size_t s = 0; s < k; ++s) logits[s] = transition_logit(prev, static_cast<int>(s));
        out.push_back(log_softmax(logits)[static_cast<std::size_t>(cur)]);
        prev = cur;
    }
    return out;
}

std::vector<double> MockBackend::masked_row(std::string_view tokens, std::size_t position) const {
    const auto k = options_.alphabet.size();
    auto symbol_at = [&](long long i) -> std::uint64_t {
        if (i < 0 || i >= static_cast<long long>(tokens.size())) return k;  // boundary marker
        return options_.alphabet.find(tokens[static_cast<std::size_t>(i)]);
    };
    const auto left = symbol_at(static_cast<long long>(position) - 1);
    const auto right = symbol_at(static_cast<long long>(position) + 1);
    std::vector<double> logits(k);
    for (std::size_t s = 0; s < k; ++s) logits[s] = 1.5 * hashed_unit(left * 131 + right, s, 0x6d61736bULL);
    return log_softmax(logits);
}

std::vector<std::vector<double>> MockBackend::hidden_layer(std::string_view tokens, int layer) const {
    const auto d = options_.dim;
    const double scale = std::pow(options_.growth, layer);
    std::vector<std::vector<double>> out;
    out.reserve(tokens.size());
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        Eigen::VectorXd base = Eigen::VectorXd::Zero(d);
        for (std::size_t back = 0; back < 3 && back <= p; ++back) {
            const auto sym = static_cast<std::uint64_t>(options_.alphabet.find(tokens[p - back]));
            for (int c = 0; c < d; ++c) base(c) += hashed_unit(sym, back, static_cast<std::uint64_t>(c));
        }
        Eigen::VectorXd v = scale * (mixers_[static_cast<std::size_t>(layer)] * base).array().tanh().matrix();
        out.emplace_back(v.data(), v.data() + v.size());
    }
    return out;
}

std::vector<std::string> MockBackend::handle(std::string_view line) {
    wire::Request req;
    try {
        req = wire::decode_request(line);
    } catch (const wire::ProtocolError& e) {
        return {wire::encode(wire::Reply{wire::ErrorReply{"", "malformed", e.what()}})};
    }
    const std::string id = wire::request_id(req);
    auto error = [&](std::string code, std::string message) -> std::vector<std::string> {
        return {wire::encode(wire::Reply{wire::ErrorReply{id, std::move(code), std::move(message)}})};
    };
    if (auto cap = wire::required_capability(req); cap && !descriptor_.supports(*cap)) {
        return error("capability", "capability " + std::string(to_string(*cap)) + " not offered");
    }

    if (std::holds_alternative<wire::Hello>(req)) return {wire::encode(wire::Reply{descriptor_})};

    if (const auto* r = std::get_if<wire::ScoreCausal>(&req)) {
        if (!valid_tokens(r->tokens)) return error("bad_tokens", "tokens outside alphabet or empty");
        if (options_.max_length && r->tokens.size() > options_.max_length) return error("too_long", "exceeds context");
        return {wire::encode(wire::Reply{wire::CausalReply{id, causal_logp(r->tokens)}})};
    }
    if (const auto* r = std::get_if<wire::ScoreMasked>(&req)) {
        if (!valid_tokens(r->tokens)) return error("bad_tokens", "tokens outside alphabet or empty");
        wire::MaskedReply reply{id, {}};
        for (auto p : r->positions) {
            if (p >= r->tokens.size()) return error("bad_position", "position " + std::to_string(p) + " out of range");
            reply.marginals.push_back(masked_row(r->tokens, p));
        }
        return {wire::encode(wire::Reply{std::move(reply)})};
    }
    if (const auto* r = std::get_if<wire::Hidden>(&req)) {
        if (!valid_tokens(r->tokens)) return error("bad_tokens", "tokens outside alphabet or empty");
        if (options_.max_length && r->tokens.size() > options_.max_length) return error("too_long", "exceeds context");
        for (int l : r->layers)
            if (l < 0 || l >= options_.layers) return error("bad_layer", "layer " + std::to_string(l) + " out of range");
        std::vector<std::string> out;
        for (int l : r->layers) out.push_back(wire::encode(wire::Reply{wire::HiddenReply{id, l, hidden_layer(r->tokens, l)}}));
        return out;
    }
    const auto& u = std::get<wire::Update>(req);
    update_steps_ += u.steps;
    return {wire::encode(wire::Reply{wire::UpdateReply{id, true}})};
}

int serve_stdio(MockBackend& backend) {
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        for (const auto& reply : backend.handle(line)) std::cout << reply << '\n';
        std::cout.flush();
    }
    return 0;
}

}  // namespace dualeval
