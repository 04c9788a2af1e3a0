#include "sensefold/util.hpp"

#include <zlib.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "sensefold/core.hpp"

namespace sensefold {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
        v >>= 4;
    }
    return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

bool has_gz_extension(const std::filesystem::path& path) { return path.extension() == ".gz"; }

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    if (has_gz_extension(path)) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw DataError("cannot open " + path.string());
        std::string out;
        std::vector<char> buf(1 << 16);
        int n = 0;
        while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0)
            out.append(buf.data(), static_cast<std::size_t>(n));
        const bool failed = n < 0;
        gzclose(f);
        if (failed) throw DataError("corrupt gzip stream in " + path.string());
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (has_gz_extension(path)) {
        gzFile f = gzopen(path.c_str(), "wb9");
        if (!f) throw Error("cannot write " + path.string());
        std::size_t off = 0;
        while (off < content.size()) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(content.size() - off, 1 << 20));
            if (gzwrite(f, content.data() + off, chunk) != static_cast<int>(chunk)) {
                gzclose(f);
                throw Error("gzip write failed for " + path.string());
            }
            off += chunk;
        }
        gzclose(f);
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace sensefold
