#include "weldwatch/textio.hpp"

#include "weldwatch/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>

namespace weldwatch::textio {

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

Writer::Writer(std::string_view magic) { out_ << magic << '\n'; }

Writer& Writer::key(std::string_view name) {
    out_ << name;
    return *this;
}

Writer& Writer::value(long long v) {
    out_ << ' ' << v;
    return *this;
}

Writer& Writer::value(double v) {
    out_ << ' ' << format_real(v);
    return *this;
}

Writer& Writer::quoted(std::string_view s) {
    out_ << ' ' << std::quoted(std::string(s));
    return *this;
}

Writer& Writer::endl() {
    out_ << '\n';
    return *this;
}

Writer& Writer::matrix(std::string_view name, const Eigen::MatrixXd& m) {
    key(name).value(static_cast<long long>(m.rows())).value(static_cast<long long>(m.cols())).endl();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out_ << ' ';
            out_ << format_real(m(i, j));
        }
        out_ << '\n';
    }
    return *this;
}

Writer& Writer::vector(std::string_view name, const Eigen::VectorXd& v) {
    key(name).value(static_cast<long long>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) value(v(i));
    return endl();
}

std::string Writer::finish() && {
    std::string body = out_.str();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(body)));
    body += "checksum ";
    body += buf;
    body += '\n';
    return body;
}

Reader::Reader(std::string document, std::string_view magic) : magic_(magic) {
    const auto tail = document.rfind("checksum ");
    if (tail == std::string::npos) fail("missing checksum line (file truncated?)");
    std::string body = document.substr(0, tail);
    std::string stated = document.substr(tail + 9);
    while (!stated.empty() && (stated.back() == '\n' || stated.back() == '\r')) stated.pop_back();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(body)));
    if (stated != buf) fail("checksum mismatch: stored " + stated + ", computed " + buf);
    in_.str(std::move(body));
    std::string header;
    std::getline(in_, header);
    if (header != magic_) fail("unexpected header '" + header + "'");
}

void Reader::fail(const std::string& what) const {
    throw RestoreError(magic_ + ": " + what);
}

void Reader::expect(std::string_view keyword) {
    std::string token;
    if (!(in_ >> token) || token != keyword)
        fail("expected '" + std::string(keyword) + "', found '" + token + "'");
}

long long Reader::integer() {
    long long v = 0;
    if (!(in_ >> v)) fail("expected integer");
    return v;
}

double Reader::real() {
    std::string token;
    if (!(in_ >> token)) fail("expected real");
    try {
        std::size_t used = 0;
        double v = std::stod(token, &used);
        if (used != token.size()) fail("malformed real '" + token + "'");
        return v;
    } catch (const std::logic_error&) {
        fail("malformed real '" + token + "'");
    }
}

std::string Reader::quoted() {
    std::string s;
    if (!(in_ >> std::quoted(s))) fail("expected quoted string");
    return s;
}

Eigen::MatrixXd Reader::matrix(std::string_view name) {
    expect(name);
    const auto rows = integer();
    const auto cols = integer();
    if (rows < 0 || cols < 0) fail("negative matrix shape");
    Eigen::MatrixXd m(rows, cols);
    for (long long i = 0; i < rows; ++i)
        for (long long j = 0; j < cols; ++j) m(i, j) = real();
    return m;
}

Eigen::VectorXd Reader::vector(std::string_view name) {
    expect(name);
    const auto n = integer();
    if (n < 0) fail("negative vector length");
    Eigen::VectorXd v(n);
    for (long long i = 0; i < n; ++i) v(i) = real();
    return v;
}

bool Reader::at_end() {
    in_ >> std::ws;
    return in_.eof();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    // Write-then-rename so readers never observe a partial file.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write to '" + tmp + "' failed");
    }
    std::filesystem::rename(tmp, p);
}

}  // namespace weldwatch::textio
