#pragma once

// Deterministic stand-in model speaking the wire protocol. It has no learned
// parameters: every number is a fixed function of the tokens, so replies are
// reproducible bit for bit.
//
//  causal (uniform)  every token gets ln(1/|alphabet|)
//  causal (markov)   first-order chain with a fixed transition table
//  masked            log-softmax of fixed logits on the two neighbours of the
//                    masked position (never on the masked symbol itself)
//  hidden            hashed 3-mer embedding mixed by a fixed per-layer matrix,
//                    scaled by growth^layer

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dualeval/protocol.hpp"

namespace dualeval {

struct MockOptions {
    std::string name = "mock";
    std::string alphabet = "ACGT";
    std::string mode = "markov";  // or "uniform"
    int layers = 4;
    int dim = 8;
    std::size_t max_length = 0;
    double growth = 1.5;
    bool allow_update = true;
    std::vector<Capability> disabled;

    /// Flags: --name N --alphabet dna|protein|<letters> --mode uniform|markov
    /// --layers L --dim D --max-length M --growth G --no-update --disable CAP
    static MockOptions parse(const std::vector<std::string>& args);
};

class MockBackend {
public:
    explicit MockBackend(MockOptions options);

    const BackendDescriptor& descriptor() const noexcept { return descriptor_; }

    /// One request line in, zero or more reply lines out. Malformed input gets
    /// an error reply; the backend stays usable.
    std::vector<std::string> handle(std::string_view line);

    std::vector<double> causal_logp(std::string_view tokens) const;
    std::vector<double> masked_row(std::string_view tokens, std::size_t position) const;
    std::vector<std::vector<double>> hidden_layer(std::string_view tokens, int layer) const;
    std::uint64_t update_steps() const noexcept { return update_steps_; }

private:
    double transition_logit(int from, int to) const;  // from == -1: sequence start
    bool valid_tokens(std::string_view tokens) const;

    MockOptions options_;
    BackendDescriptor descriptor_;
    std::vector<Eigen::MatrixXd> mixers_;
    std::uint64_t update_steps_ = 0;
};

/// Reads request lines from stdin and writes replies to stdout until EOF.
int serve_stdio(MockBackend& backend);

}  // namespace dualeval
