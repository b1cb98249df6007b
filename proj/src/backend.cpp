#include <cerrno>
#include <csignal>
#include <cstring>
#include <deque>
#include <sstream>

#include <fcntl.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include "dualeval/errors.hpp"
#include "dualeval/mock_backend.hpp"
#include "dualeval/scoring.hpp"

namespace dualeval {

namespace {

class LoopbackTransport final : public Transport {
public:
    explicit LoopbackTransport(LineHandler handler) : handler_(std::move(handler)) {}

    void send_line(std::string_view line) override {
        for (auto& reply : handler_(line)) pending_.push_back(std::move(reply));
    }

    std::string receive_line() override {
        if (pending_.empty()) throw TransportError("loopback backend produced no reply");
        std::string out = std::move(pending_.front());
        pending_.pop_front();
        return out;
    }

private:
    LineHandler handler_;
    std::deque<std::string> pending_;
};

// Buffered line I/O over a pair of file descriptors.
class FdTransport : public Transport {
public:
    FdTransport(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}

    void send_line(std::string_view line) override {
        std::string buf(line);
        buf.push_back('\n');
        std::size_t off = 0;
        while (off < buf.size()) {
            ssize_t n = ::write(write_fd_, buf.data() + off, buf.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("backend write failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::string receive_line() override {
        for (;;) {
            auto nl = buffer_.find('\n', scanned_);
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                scanned_ = 0;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            scanned_ = buffer_.size();
            char chunk[1 << 16];
            ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(std::string("backend read failed: ") + std::strerror(errno));
            }
            if (n == 0) throw TransportError("backend closed the connection");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

protected:
    int read_fd_;
    int write_fd_;

private:
    std::string buffer_;
    std::size_t scanned_ = 0;
};

class ProcessTransport final : public FdTransport {
public:
    ProcessTransport(int read_fd, int write_fd, pid_t pid) : FdTransport(read_fd, write_fd), pid_(pid) {}

    ~ProcessTransport() override {
        ::close(write_fd_);
        ::close(read_fd_);
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }

private:
    pid_t pid_;
};

class SocketTransport final : public FdTransport {
public:
    explicit SocketTransport(int fd) : FdTransport(fd, fd) {}
    ~SocketTransport() override { ::close(read_fd_); }
};

std::vector<std::string> split_args(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

std::unique_ptr<Transport> make_loopback_transport(LineHandler handler) {
    return std::make_unique<LoopbackTransport>(std::move(handler));
}

std::unique_ptr<Transport> make_process_transport(const std::string& command) {
    // A dead child must surface as EPIPE, not kill the harness.
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0) {
        throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
    }
    pid_t pid = ::fork();
    if (pid < 0) throw TransportError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<ProcessTransport>(from_child[0], to_child[1], pid);
}

std::unique_ptr<Transport> make_unix_socket_transport(const std::string& path) {
    std::signal(SIGPIPE, SIG_IGN);
    int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof addr.sun_path) {
        ::close(fd);
        throw ConfigError("socket path too long: " + path);
    }
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        const int err = errno;
        ::close(fd);
        throw TransportError("cannot connect to " + path + ": " + std::strerror(err));
    }
    return std::make_unique<SocketTransport>(fd);
}

std::unique_ptr<Transport> connect_endpoint(const std::string& endpoint) {
    auto colon = endpoint.find(':');
    if (colon == std::string::npos) throw ConfigError("endpoint needs a scheme (exec:, unix:, mock:): " + endpoint);
    const std::string scheme = endpoint.substr(0, colon);
    const std::string rest = endpoint.substr(colon + 1);
    if (scheme == "exec") return make_process_transport(rest);
    if (scheme == "unix") return make_unix_socket_transport(rest);
    if (scheme == "mock") {
        auto backend = std::make_shared<MockBackend>(MockOptions::parse(split_args(rest)));
        return make_loopback_transport([backend](std::string_view line) { return backend->handle(line); });
    }
    throw ConfigError("unknown endpoint scheme: " + scheme);
}

// ---------------------------------------------------------------------------

BackendClient::BackendClient(std::unique_ptr<Transport> transport) : transport_(std::move(transport)) {
    auto replies = exchange(wire::Hello{});
    const auto* d = std::get_if<BackendDescriptor>(&replies.front());
    if (!d) throw TransportError("backend did not answer hello with a descriptor");
    descriptor_ = *d;
    if (descriptor_.alphabet.empty()) throw TransportError("backend advertises an empty alphabet");
}

BackendClient BackendClient::connect(const std::string& endpoint) { return BackendClient(connect_endpoint(endpoint)); }

std::string BackendClient::next_id() { return "r" + std::to_string(requests_); }

std::vector<wire::Reply> BackendClient::exchange(const wire::Request& request) {
    if (auto cap = wire::required_capability(request); cap && !descriptor_.supports(*cap)) {
        throw CapabilityError("backend '" + descriptor_.name + "' does not offer " + std::string(to_string(*cap)));
    }
    const std::string id = wire::request_id(request);
    transport_->send_line(wire::encode(request));
    ++requests_;

    std::vector<wire::Reply> replies;
    const std::size_t expected = wire::expected_replies(request);
    while (replies.size() < expected) {
        wire::Reply reply;
        try {
            reply = wire::decode_reply(transport_->receive_line());
        } catch (const wire::ProtocolError& e) {
            throw TransportError(std::string("unparsable backend reply: ") + e.what());
        }
        if (const auto* err = std::get_if<wire::ErrorReply>(&reply)) {
            if (err->code == "capability") throw CapabilityError(err->message);
            throw BackendError("backend error [" + err->code + "] for request " + id + ": " + err->message,
                               err->code == "transient");
        }
        if (wire::reply_id(reply) != id) {
            throw TransportError("reply id '" + wire::reply_id(reply) + "' does not match request '" + id + "'");
        }
        replies.push_back(std::move(reply));
    }
    return replies;
}

std::size_t BackendClient::chunk_count(std::size_t length) const {
    const std::size_t limit = descriptor_.max_length;
    if (limit == 0 || length <= limit) return 1;
    return (length + limit - 1) / limit;
}

namespace {

std::vector<std::string_view> chunks_of(std::string_view tokens, std::size_t limit) {
    std::vector<std::string_view> out;
    if (limit == 0 || tokens.size() <= limit) {
        out.push_back(tokens);
        return out;
    }
    for (std::size_t off = 0; off < tokens.size(); off += limit) out.push_back(tokens.substr(off, limit));
    return out;
}

}  // namespace

TokenScores BackendClient::score_causal(std::string_view tokens) {
    TokenScores scores;
    for (auto chunk : chunks_of(tokens, descriptor_.max_length)) {
        auto replies = exchange(wire::ScoreCausal{next_id(), std::string(chunk)});
        auto& r = std::get<wire::CausalReply>(replies.front());
        if (r.logp.size() != chunk.size()) {
            throw TransportError("backend returned " + std::to_string(r.logp.size()) + " scores for " +
                                 std::to_string(chunk.size()) + " tokens");
        }
        scores.logp.insert(scores.logp.end(), r.logp.begin(), r.logp.end());
    }
    return scores;
}

MaskedMarginals BackendClient::score_masked(std::string_view tokens, std::span<const std::size_t> positions) {
    if (descriptor_.max_length != 0 && tokens.size() > descriptor_.max_length) {
        throw DataError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds backend context " +
                        std::to_string(descriptor_.max_length) + " for masked scoring");
    }
    wire::ScoreMasked req{next_id(), std::string(tokens), {positions.begin(), positions.end()}};
    auto replies = exchange(req);
    auto& r = std::get<wire::MaskedReply>(replies.front());
    if (r.marginals.size() != positions.size()) throw TransportError("marginal count does not match positions");
    MaskedMarginals out;
    out.alphabet = descriptor_.alphabet;
    for (std::size_t k = 0; k < positions.size(); ++k) out.rows[positions[k]] = std::move(r.marginals[k]);
    out.validate();
    return out;
}

std::vector<HiddenState> BackendClient::hidden(std::string_view tokens, std::span<const int> layers) {
    std::vector<std::vector<std::vector<double>>> rows(layers.size());
    for (auto chunk : chunks_of(tokens, descriptor_.max_length)) {
        auto replies = exchange(wire::Hidden{next_id(), std::string(chunk), {layers.begin(), layers.end()}});
        for (std::size_t k = 0; k < layers.size(); ++k) {
            auto& r = std::get<wire::HiddenReply>(replies[k]);
            if (r.layer != layers[k]) throw TransportError("hidden replies arrived out of layer order");
            if (r.vectors.size() != chunk.size()) throw TransportError("hidden reply has wrong position count");
            for (auto& v : r.vectors) rows[k].push_back(std::move(v));
        }
    }
    std::vector<HiddenState> out;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto n = static_cast<Eigen::Index>(rows[k].size());
        const auto d = static_cast<Eigen::Index>(descriptor_.hidden_dim);
        HiddenState h{layers[k], Eigen::MatrixXd(n, d)};
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& v = rows[k][static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(v.size()) != d) throw TransportError("hidden vector has wrong dimension");
            for (Eigen::Index c = 0; c < d; ++c) h.vectors(i, c) = v[static_cast<std::size_t>(c)];
        }
        out.push_back(std::move(h));
    }
    return out;
}

void BackendClient::update(const std::string& corpus_ref, std::uint64_t steps) {
    auto replies = exchange(wire::Update{next_id(), corpus_ref, steps});
    if (!std::get<wire::UpdateReply>(replies.front()).ok) throw BackendError("backend refused update", false);
}

std::vector<BatchResponse> score_batch(BackendClient& backend, std::span<const wire::Request> requests) {
    std::vector<BatchResponse> out;
    out.reserve(requests.size());
    bool broken = false;
    std::string broken_reason;
    for (const auto& req : requests) {
        BatchResponse resp;
        resp.id = wire::request_id(req);
        if (broken) {
            resp.error_code = "transport";
            resp.error_message = broken_reason;
            resp.retriable = true;
            out.push_back(std::move(resp));
            continue;
        }
        try {
            resp.replies = backend.exchange(req);
        } catch (const CapabilityError& e) {
            resp.error_code = "capability";
            resp.error_message = e.what();
        } catch (const TransportError& e) {
            resp.error_code = "transport";
            resp.error_message = e.what();
            resp.retriable = true;
            broken = true;
            broken_reason = e.what();
        } catch (const BackendError& e) {
            resp.error_code = "backend";
            resp.error_message = e.what();
            resp.retriable = e.retriable();
        }
        out.push_back(std::move(resp));
    }
    return out;
}

}  // namespace dualeval
