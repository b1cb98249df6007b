#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualeval/mock_backend.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    for (const auto& a : args) {
        if (a == "-h" || a == "--help") {
            std::cout << "usage: dualeval-mock-backend [--name N] [--alphabet dna|protein|SYMBOLS] [--mode markov|uniform]\n"
                         "                            [--layers L] [--dim D] [--max-length N] [--growth G]\n"
                         "                            [--no-update] [--disable CAPABILITY]...\n"
                         "Speaks the newline-delimited JSON protocol on stdin/stdout.\n";
            return 0;
        }
    }
    try {
        dualeval::MockBackend backend(dualeval::MockOptions::parse(args));
        return dualeval::serve_stdio(backend);
    } catch (const std::exception& e) {
        std::cerr << "dualeval-mock-backend: " << e.what() << "\n";
        return 2;
    }
}
