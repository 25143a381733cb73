#pragma once

// Line-oriented text persistence shared by the model and detector files.
// Documents start with a magic header, hold whitespace-separated tokens and
// end with a `checksum <hex>` line covering every preceding byte, so a
// truncated or edited file is rejected on load.

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>

namespace weldwatch::textio {

std::uint64_t fnv1a(std::string_view bytes);

// Shortest-safe decimal form: always 17 significant digits.
std::string format_real(double value);

class Writer {
public:
    explicit Writer(std::string_view magic);

    Writer& key(std::string_view name);
    Writer& value(long long v);
    Writer& value(double v);
    Writer& quoted(std::string_view s);
    Writer& endl();

    // Writes `name rows cols` then the entries in row-major order.
    Writer& matrix(std::string_view name, const Eigen::MatrixXd& m);
    Writer& vector(std::string_view name, const Eigen::VectorXd& v);

    // Appends the checksum line and returns the finished document.
    std::string finish() &&;

private:
    std::ostringstream out_;
};

class Reader {
public:
    // Verifies the magic header and checksum; throws RestoreError otherwise.
    Reader(std::string document, std::string_view magic);

    void expect(std::string_view keyword);
    long long integer();
    double real();
    std::string quoted();
    Eigen::MatrixXd matrix(std::string_view name);
    Eigen::VectorXd vector(std::string_view name);
    bool at_end();

private:
    [[noreturn]] void fail(const std::string& what) const;

    std::istringstream in_;
    std::string magic_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace weldwatch::textio
