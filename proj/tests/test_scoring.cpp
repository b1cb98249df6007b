#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "dualeval/errors.hpp"
#include "dualeval/hashing.hpp"
#include "dualeval/mock_backend.hpp"
#include "dualeval/protocol.hpp"
#include "dualeval/scoring.hpp"
#include "synthetic.hpp"

using namespace dualeval;

namespace {

const std::regex kFloat(R"(-?\d+\.\d+(?:[eE][-+]?\d+)?|-?\d+[eE][-+]?\d+)");

std::vector<double> floats_in(const std::string& s) {
    std::vector<double> out;
    for (std::sregex_iterator it(s.begin(), s.end(), kFloat), end; it != end; ++it) out.push_back(std::stod(it->str()));
    return out;
}

struct Exchange {
    std::string request;
    std::vector<std::string> replies;
};

std::vector<Exchange> load_golden() {
    std::ifstream in(std::string(DUALEVAL_FIXTURE_DIR) + "/mock_golden.txt");
    std::vector<Exchange> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("> ", 0) == 0) out.push_back({line.substr(2), {}});
        else if (line.rfind("< ", 0) == 0) out.back().replies.push_back(line.substr(2));
    }
    return out;
}

void expect_same_reply(const std::string& expected, const std::string& actual) {
    EXPECT_EQ(std::regex_replace(expected, kFloat, "#"), std::regex_replace(actual, kFloat, "#"));
    auto a = floats_in(expected), b = floats_in(actual);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

void replay(Transport& t) {
    auto golden = load_golden();
    ASSERT_GE(golden.size(), 9u);
    for (const auto& ex : golden) {
        t.send_line(ex.request);
        for (const auto& want : ex.replies) expect_same_reply(want, t.receive_line());
    }
}

BackendClient mock_client(const std::string& flags = "") { return BackendClient::connect("mock:" + flags); }

}  // namespace

TEST(GoldenTranscript, ExecMock) {
    auto t = make_process_transport(std::string(DUALEVAL_MOCK_EXE) + " --dim 2 --layers 2");
    replay(*t);
}

TEST(GoldenTranscript, InProcessMock) {
    auto t = connect_endpoint("mock:--dim 2 --layers 2");
    replay(*t);
}

TEST(Protocol, RequestRoundTrip) {
    std::vector<wire::Request> reqs{wire::Hello{}, wire::ScoreCausal{"a", "ACGT"},
                                    wire::ScoreMasked{"b", "ACGT", {0, 3}}, wire::Hidden{"c", "AC", {2, 0}},
                                    wire::Update{"d", "corpus.fa", 25}};
    for (const auto& r : reqs) EXPECT_EQ(wire::decode_request(wire::encode(r)), r);
    EXPECT_EQ(wire::expected_replies(reqs[3]), 2u);
    EXPECT_EQ(wire::required_capability(reqs[2]), Capability::masked_marginal);
    EXPECT_FALSE(wire::required_capability(reqs[0]).has_value());
}

TEST(Protocol, RealsRoundTripExactly) {
    wire::CausalReply r{"x", {0.1, -1.0 / 3.0, std::nextafter(1.0, 2.0), -1e-300, 123456.789}};
    auto back = std::get<wire::CausalReply>(wire::decode_reply(wire::encode(wire::Reply{r})));
    EXPECT_EQ(back.logp, r.logp);
}

TEST(Protocol, MalformedLines) {
    EXPECT_THROW(wire::decode_request("not json"), wire::ProtocolError);
    EXPECT_THROW(wire::decode_request(R"({"type":"score_causal"})"), wire::ProtocolError);
    EXPECT_THROW(wire::decode_request(R"({"type":"nope","id":"x"})"), wire::ProtocolError);
    EXPECT_THROW(wire::decode_reply(R"({"id":"x"})"), wire::ProtocolError);
}

TEST(Protocol, DescriptorJson) {
    BackendDescriptor d{"m", "ACGT", 3, 16, {Capability::causal_logp, Capability::hidden_states}, 100, 4};
    EXPECT_EQ(BackendDescriptor::from_json(d.to_json()), d);
    EXPECT_TRUE(d.is_nucleotide());
}

TEST(MockBackend, MalformedKeepsConnection) {
    MockBackend m(MockOptions{});
    auto r = m.handle("{{{");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(nlohmann::json::parse(r[0]).at("code"), "malformed");
    auto ok = m.handle(R"({"type":"score_causal","id":"z","tokens":"AC"})");
    EXPECT_EQ(nlohmann::json::parse(ok[0]).at("type"), "score_causal");
}

TEST(MockBackend, CausalRowsNormalize) {
    MockBackend m(MockOptions{});
    // Each context's distribution over the four symbols sums to one.
    for (std::string ctx : {"A", "C", "G", "T"}) {
        double total = 0;
        for (char next : std::string("ACGT")) total += std::exp(m.causal_logp(ctx + next)[1]);
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    auto row = m.masked_row("ACGTA", 2);
    double s = 0;
    for (double v : row) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(MockBackend, HiddenShape) {
    auto c = mock_client("--layers 3 --dim 5");
    std::vector<int> layers{0, 1, 2};
    auto hs = c.hidden("ACGTAC", layers);
    ASSERT_EQ(hs.size(), 3u);
    for (const auto& h : hs) {
        EXPECT_EQ(h.vectors.rows(), 6);
        EXPECT_EQ(h.vectors.cols(), 5);
    }
}

TEST(Scoring, LikelihoodExamples) {
    EXPECT_DOUBLE_EQ(sequence_log_likelihood({{-1.0, -2.0, -0.5}}), -3.5);
    EXPECT_DOUBLE_EQ(sequence_log_likelihood({{-0.7}}), -0.7);
    TokenScores u{std::vector<double>(8, std::log(0.25))};
    EXPECT_NEAR(sequence_log_likelihood(u), 8 * std::log(0.25), 1e-14);
    EXPECT_THROW(sequence_log_likelihood({{}}), DataError);
    try {
        sequence_log_likelihood({{-1.0, NAN, -1.0}});
        FAIL();
    } catch (const NonFiniteScore& e) {
        EXPECT_EQ(e.position(), 1u);
    }
}

TEST(Scoring, PerplexityExamples) {
    EXPECT_EQ(perplexity({std::vector<double>(8, std::log(0.25))}), 4.0);
    EXPECT_EQ(perplexity({{0.0, 0.0, 0.0}}), 1.0);
    // (ln2 + ln8)/2 = ln4
    EXPECT_NEAR(perplexity({{-std::numbers::ln2, -3 * std::numbers::ln2}}), 4.0, 1e-14);
}

TEST(Scoring, UniformMockIsExactlyFour) {
    auto c = mock_client("--mode uniform");
    SplitMix rng(1);
    for (int i = 0; i < 50; ++i) {
        auto s = c.score_causal(synth::random_dna(rng, 1 + rng.below(3000)));
        EXPECT_EQ(perplexity(s), 4.0);
    }
}

TEST(Scoring, MaskedMarginalExamples) {
    MaskedMarginals wt{"AC", {{0, {-3.0, -1.0}}}};
    MaskedMarginals mt{"AC", {{0, {-3.0, -1.0}}}};
    std::vector<std::size_t> none;
    EXPECT_EQ(masked_marginal_score("A", "A", wt, mt, none), 0.0);
    std::vector<std::size_t> p0{0};
    EXPECT_DOUBLE_EQ(masked_marginal_score("A", "C", wt, mt, p0), 2.0);
    MaskedMarginals even{"AC", {{0, {std::log(0.5), std::log(0.5)}}}};
    EXPECT_EQ(masked_marginal_score("A", "C", even, even, p0), 0.0);
    EXPECT_EQ(differing_positions("ACGT", "AGGA"), (std::vector<std::size_t>{1, 3}));
}

TEST(Scoring, MaskedWildTypeAgainstItselfIsZero) {
    auto c = mock_client("--alphabet protein");
    SplitMix rng(2);
    for (int i = 0; i < 20; ++i) {
        auto seq = synth::random_protein(rng, 10 + rng.below(50));
        std::vector<std::size_t> all(seq.size());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
        auto m = c.score_masked(seq, all);
        m.validate();
        EXPECT_EQ(masked_marginal_score(seq, seq, m, m, all), 0.0);
        EXPECT_EQ(masked_marginal_score(seq, seq, m, m, differing_positions(seq, seq)), 0.0);
    }
}

TEST(Pooling, Examples) {
    HiddenState one{0, Eigen::MatrixXd{{1.5, -2.0}}};
    for (auto p : {Pooling::mean, Pooling::last, Pooling::max})
        EXPECT_EQ(pool_features(one, p), Eigen::VectorXd(one.vectors.row(0).transpose()));
    HiddenState two{0, Eigen::MatrixXd{{0, 2}, {2, 0}}};
    EXPECT_EQ(pool_features(two, Pooling::mean), Eigen::Vector2d(1, 1));
    EXPECT_EQ(pool_features(two, Pooling::max), Eigen::Vector2d(2, 2));
    EXPECT_EQ(pool_features(two, Pooling::last), Eigen::Vector2d(2, 0));
    EXPECT_EQ(parse_pooling("max"), Pooling::max);
    EXPECT_THROW(parse_pooling("median"), ConfigError);
}

TEST(Client, ChunksLongSequences) {
    auto c = mock_client("--max-length 5");
    MockBackend ref(MockOptions::parse({"--max-length", "5"}));
    const std::string seq = "ACGTACGTTGCA";
    EXPECT_EQ(c.chunk_count(seq.size()), 3u);
    const auto before = c.requests_sent();
    auto s = c.score_causal(seq);
    EXPECT_EQ(c.requests_sent() - before, 3u);
    std::vector<double> expect;
    for (std::size_t off = 0; off < seq.size(); off += 5) {
        auto part = ref.causal_logp(seq.substr(off, 5));
        expect.insert(expect.end(), part.begin(), part.end());
    }
    EXPECT_EQ(s.logp, expect);
    std::vector<int> l0{0};
    EXPECT_EQ(c.hidden(seq, l0)[0].vectors.rows(), 12);
}

TEST(Client, CapabilityCheckedBeforeSending) {
    auto c = mock_client("--disable hidden_states --no-update");
    const auto before = c.requests_sent();
    std::vector<int> l0{0};
    EXPECT_THROW(c.hidden("ACGT", l0), CapabilityError);
    EXPECT_THROW(c.update("x", 1), CapabilityError);
    EXPECT_EQ(c.requests_sent(), before);
    EXPECT_NO_THROW(c.score_causal("ACGT"));
}

TEST(Client, ErrorRepliesBecomeBackendErrors) {
    auto c = mock_client();
    try {
        c.score_causal("ACGX");
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_FALSE(e.retriable());
        EXPECT_NE(std::string(e.what()).find("bad_tokens"), std::string::npos);
    }
}

TEST(ScoreBatch, PerItemFailures) {
    auto c = mock_client("--disable hidden_states");
    std::vector<wire::Request> reqs{wire::ScoreCausal{"a", "ACGT"}, wire::Hidden{"b", "AC", {0}},
                                    wire::ScoreCausal{"c", "AXGT"}, wire::ScoreCausal{"d", "GG"}};
    auto out = score_batch(c, reqs);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_TRUE(out[0].ok());
    EXPECT_EQ(out[1].error_code, "capability");
    EXPECT_FALSE(out[1].retriable);
    EXPECT_EQ(out[2].error_code, "backend");
    EXPECT_TRUE(out[3].ok());
    EXPECT_EQ(out[3].id, "d");
}

TEST(ScoreBatch, TransportFailureIsRetriable) {
    MockBackend m(MockOptions{});
    int calls = 0;
    BackendClient c(make_loopback_transport([&](std::string_view line) {
        if (calls++ >= 2) return std::vector<std::string>{};
        return m.handle(line);
    }));
    std::vector<wire::Request> reqs{wire::ScoreCausal{"a", "ACGT"}, wire::ScoreCausal{"b", "ACGT"},
                                    wire::ScoreCausal{"c", "ACGT"}};
    auto out = score_batch(c, reqs);
    EXPECT_TRUE(out[0].ok());
    EXPECT_EQ(out[1].error_code, "transport");
    EXPECT_TRUE(out[1].retriable);
    EXPECT_TRUE(out[2].retriable);
}

TEST(Endpoint, DeadProcessIsTransportError) {
    EXPECT_THROW(BackendClient::connect("exec:/bin/false"), TransportError);
    EXPECT_THROW(connect_endpoint("tcp:localhost"), ConfigError);
}

TEST(Endpoint, UnixSocket) {
    const auto path = (std::filesystem::temp_directory_path() / "dualeval_mock.sock").string();
    ::unlink(path.c_str());
    int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
    ASSERT_GE(listener, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    ASSERT_EQ(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
    ASSERT_EQ(::listen(listener, 1), 0);

    std::thread server([listener] {
        MockBackend m(MockOptions{});
        int fd = ::accept(listener, nullptr, nullptr);
        std::string buf;
        char chunk[4096];
        for (ssize_t got; (got = ::read(fd, chunk, sizeof chunk)) > 0;) {
            buf.append(chunk, static_cast<std::size_t>(got));
            for (std::size_t nl; (nl = buf.find('\n')) != std::string::npos;) {
                for (auto& reply : m.handle(std::string_view(buf).substr(0, nl))) {
                    reply.push_back('\n');
                    (void)!::write(fd, reply.data(), reply.size());
                }
                buf.erase(0, nl + 1);
            }
        }
        ::close(fd);
    });

    {
        auto c = BackendClient::connect("unix:" + path);
        EXPECT_EQ(c.descriptor().alphabet, "ACGT");
        MockBackend ref(MockOptions{});
        EXPECT_EQ(c.score_causal("ACGTTA").logp, ref.causal_logp("ACGTTA"));
    }
    server.join();
    ::close(listener);
    ::unlink(path.c_str());
}
